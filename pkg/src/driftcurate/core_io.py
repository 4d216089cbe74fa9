"""Image, tensor and manifest ingestion plus report persistence.

Formats handled here:

* binary PGM (P5) / PPM (P6) with maxval 255, for images, masks and
  8-bit probability maps;
* FTEN, a small little-endian float32 tensor container for feature maps;
* JSON dataset manifests and comma-separated report files.

All writers go through :func:`atomic_write_bytes`, so a failed run never
leaves a half-written primary output behind.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import (
    BadMagic,
    DimOverflow,
    DuplicateId,
    InvalidEntry,
    IoFailure,
    MalformedHeader,
    MalformedJson,
    MissingFile,
    NonFiniteData,
    TruncatedPayload,
    UnsupportedVersion,
    ZeroDim,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]

FTEN_MAGIC = b"FTEN"
FTEN_VERSION = 1
FTEN_DTYPE_F32 = 1
FTEN_HEADER = struct.Struct("<4sBBBB")
DEFAULT_MAX_ELEMENTS = 2**28
MASK_THRESHOLD = 128


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Image:
    """Pixel raster with values in [0, 255], shape ``(height, width, channels)``."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.array(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"image must be (h, w, 1|3), got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ZeroDim("image has a zero dimension")
        if not np.all(np.isfinite(px)) or px.min() < 0.0 or px.max() > 255.0:
            raise ValueError("image pixels must be finite and within [0, 255]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def channel(self, k: int) -> np.ndarray:
        return self.pixels[:, :, k]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Image) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """``V`` channel planes of size ``p x q`` stored as float32, channel-major."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError(f"feature map must be 3-D (V, p, q), got {arr.ndim}-D")
        if 0 in arr.shape:
            raise ZeroDim(f"feature map has a zero dimension: {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteData("feature map contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FeatureMap) and np.array_equal(self.data, other.data)


class Verdict(str, enum.Enum):
    SELECTED = "selected"
    REJECTED = "rejected"


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    image_path: str
    mask_path: Optional[str] = None
    feature_path: Optional[str] = None
    pred_path: Optional[str] = None
    score: Optional[float] = None
    dice: Optional[float] = None
    verdict: Optional[Verdict] = None
    reason: Optional[str] = None
    margin: Optional[float] = None

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise InvalidEntry("entry id must be a non-empty string")
        for name in ("image_path", "mask_path", "feature_path", "pred_path"):
            value = getattr(self, name)
            if value is not None and (not isinstance(value, str) or not value):
                raise InvalidEntry(f"entry {self.id!r}: {name} must be a non-empty string")
        if self.image_path is None:
            raise InvalidEntry(f"entry {self.id!r}: image_path is required")
        for name in ("score", "margin"):
            value = getattr(self, name)
            if value is not None and not math.isfinite(value):
                raise InvalidEntry(f"entry {self.id!r}: {name} must be finite")
        if self.dice is not None and not (0.0 <= self.dice <= 1.0):
            raise InvalidEntry(f"entry {self.id!r}: dice {self.dice} outside [0, 1]")
        if self.verdict is not None and not isinstance(self.verdict, Verdict):
            object.__setattr__(self, "verdict", Verdict(self.verdict))

    def to_json(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            out[f.name] = value.value if isinstance(value, Verdict) else value
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ManifestEntry":
        if not isinstance(obj, dict):
            raise MalformedJson("manifest entry must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise MalformedJson(f"unknown manifest entry fields: {sorted(unknown)}")
        kwargs = dict(obj)
        try:
            for name in ("score", "dice", "margin"):
                if kwargs.get(name) is not None:
                    if isinstance(kwargs[name], bool) or not isinstance(kwargs[name], (int, float)):
                        raise InvalidEntry(f"{name} must be a number")
                    kwargs[name] = float(kwargs[name])
            if kwargs.get("verdict") is not None:
                kwargs["verdict"] = Verdict(kwargs["verdict"])
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InvalidEntry):
                raise
            raise InvalidEntry(str(exc)) from exc


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple = field(default_factory=tuple)

    def __post_init__(self) -> None:
        entries = tuple(self.entries)
        seen = set()
        for e in entries:
            if e.id in seen:
                raise DuplicateId(f"duplicate manifest id {e.id!r}")
            seen.add(e.id)
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def ids(self) -> list:
        return [e.id for e in self.entries]

    def by_id(self) -> dict:
        return {e.id: e for e in self.entries}

    def updated(self, changes: dict) -> "DatasetManifest":
        """Copy with per-id field updates, ``changes[id] = {field: value}``."""
        return DatasetManifest(
            tuple(replace(e, **changes[e.id]) if e.id in changes else e for e in self.entries)
        )


# ---------------------------------------------------------------------------
# atomic output
# ---------------------------------------------------------------------------


def atomic_write_bytes(path: PathLike, data: bytes) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def atomic_write_text(path: PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _read_bytes(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError as exc:
        raise MissingFile(f"no such file: {path}") from exc
    except IsADirectoryError as exc:
        raise MissingFile(f"not a file: {path}") from exc


# ---------------------------------------------------------------------------
# Netpbm
# ---------------------------------------------------------------------------


def _pnm_header(data: bytes):
    """Parse a P5/P6 header; returns (magic, width, height, maxval, payload_offset)."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < 4:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise MalformedHeader("incomplete PNM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    if pos >= n or not data[pos : pos + 1].isspace():
        raise MalformedHeader("missing whitespace after maxval")
    pos += 1
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise MalformedHeader(f"unsupported magic {magic!r}; expected P5 or P6")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise MalformedHeader(f"non-integer header field: {exc}") from exc
    if width <= 0 or height <= 0:
        raise MalformedHeader(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise MalformedHeader(f"maxval {maxval} not supported; expected 255")
    return magic, width, height, maxval, pos


def decode_pnm(data: bytes) -> Image:
    magic, width, height, _, offset = _pnm_header(data)
    channels = 1 if magic == b"P5" else 3
    expected = width * height * channels
    payload = data[offset:]
    if len(payload) < expected:
        raise TruncatedPayload(f"expected {expected} payload bytes, found {len(payload)}")
    if len(payload) > expected:
        raise MalformedHeader(f"{len(payload) - expected} trailing bytes after raster")
    raster = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return Image(raster.astype(np.float64))


def load_image(path: PathLike) -> Image:
    return decode_pnm(_read_bytes(path))


def encode_pnm(img: Image) -> bytes:
    """Encode as P5/P6, rounding pixels to the nearest integer."""
    magic = b"P5" if img.channels == 1 else b"P6"
    raster = np.clip(np.rint(img.pixels), 0, 255).astype(np.uint8)
    header = magic + f"\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + raster.tobytes()


def save_image(img: Image, path: PathLike) -> None:
    atomic_write_bytes(path, encode_pnm(img))


def load_mask(path: PathLike) -> np.ndarray:
    """Binary mask from a PGM: 1 where the sample is >= 128, else 0."""
    img = load_image(path)
    if img.channels != 1:
        raise MalformedHeader(f"mask {path} must be single-channel PGM")
    return (img.channel(0) >= MASK_THRESHOLD).astype(np.uint8)


def save_mask(mask: np.ndarray, path: PathLike) -> None:
    save_image(Image(np.where(np.asarray(mask) > 0, 255.0, 0.0)), path)


def load_probability(path: PathLike) -> np.ndarray:
    """Foreground-probability plane in [0, 1].

    ``.ften`` files must hold a single channel; anything else is read as an
    8-bit PGM and divided by 255.
    """
    if str(path).lower().endswith(".ften"):
        fmap = read_tensor(path)
        if fmap.channels != 1:
            raise MalformedHeader(f"probability tensor {path} must have one channel")
        prob = fmap.data[0].astype(np.float64)
        if prob.min() < 0.0 or prob.max() > 1.0:
            raise MalformedHeader(f"probability tensor {path} has values outside [0, 1]")
        return prob
    img = load_image(path)
    if img.channels != 1:
        raise MalformedHeader(f"probability map {path} must be single-channel PGM")
    return img.channel(0) / 255.0


# ---------------------------------------------------------------------------
# FTEN tensors
# ---------------------------------------------------------------------------


def encode_tensor(fmap: FeatureMap) -> bytes:
    head = FTEN_HEADER.pack(FTEN_MAGIC, FTEN_VERSION, FTEN_DTYPE_F32, 3, 0)
    dims = struct.pack("<3I", *fmap.data.shape)
    return head + dims + fmap.data.astype("<f4").tobytes(order="C")


def decode_tensor(data: bytes, max_elements: int = DEFAULT_MAX_ELEMENTS) -> FeatureMap:
    if len(data) < FTEN_HEADER.size:
        raise TruncatedPayload("file shorter than FTEN header")
    magic, version, dtype, ndim, reserved = FTEN_HEADER.unpack_from(data, 0)
    if magic != FTEN_MAGIC:
        raise BadMagic(f"bad magic {magic!r}; expected {FTEN_MAGIC!r}")
    if version != FTEN_VERSION:
        raise UnsupportedVersion(f"FTEN version {version} not supported")
    if dtype != FTEN_DTYPE_F32 or ndim != 3 or reserved != 0:
        raise MalformedHeader(f"unsupported FTEN layout dtype={dtype} ndim={ndim} reserved={reserved}")
    dims_end = FTEN_HEADER.size + 4 * ndim
    if len(data) < dims_end:
        raise TruncatedPayload("file ends inside FTEN dimension block")
    dims = struct.unpack_from("<3I", data, FTEN_HEADER.size)
    if 0 in dims:
        raise ZeroDim(f"FTEN dims {dims} contain zero")
    count = dims[0] * dims[1] * dims[2]
    if count > max_elements:
        raise DimOverflow(f"{count} elements exceeds cap {max_elements}")
    payload = data[dims_end:]
    if len(payload) < 4 * count:
        raise TruncatedPayload(f"expected {4 * count} payload bytes, found {len(payload)}")
    if len(payload) > 4 * count:
        raise MalformedHeader(f"{len(payload) - 4 * count} trailing bytes after payload")
    arr = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
    return FeatureMap(arr)


def read_tensor(path: PathLike, max_elements: int = DEFAULT_MAX_ELEMENTS) -> FeatureMap:
    return decode_tensor(_read_bytes(path), max_elements=max_elements)


def write_tensor(fmap: FeatureMap, path: PathLike) -> None:
    atomic_write_bytes(path, encode_tensor(fmap))


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------


def manifest_to_json(manifest: DatasetManifest) -> str:
    doc = {"entries": [e.to_json() for e in manifest.entries]}
    return json.dumps(doc, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def manifest_from_json(text: str) -> DatasetManifest:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"invalid JSON: {exc}") from exc
    if isinstance(doc, list):
        raw = doc
    elif isinstance(doc, dict) and isinstance(doc.get("entries"), list):
        raw = doc["entries"]
    else:
        raise MalformedJson("manifest must be a list or an object with an 'entries' list")
    manifest = DatasetManifest(tuple(ManifestEntry.from_json(obj) for obj in raw))
    if not manifest.entries:
        logger.warning("manifest is empty")
    return manifest


def load_manifest(path: PathLike) -> DatasetManifest:
    raw = _read_bytes(path)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedJson(f"{path} is not UTF-8: {exc}") from exc
    return manifest_from_json(text)


def save_manifest(manifest: DatasetManifest, path: PathLike) -> None:
    if not manifest.entries:
        logger.warning("writing empty manifest to %s", path)
    atomic_write_text(path, manifest_to_json(manifest))


def resolve(path: str, root: Optional[PathLike]) -> Path:
    """Resolve a manifest path against the manifest's directory."""
    p = Path(path)
    if p.is_absolute() or root is None:
        return p
    return Path(root) / p


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def format_float(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    return buf.getvalue()


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    atomic_write_text(path, csv_text(header, rows))


def read_csv(path: PathLike) -> list:
    text = _read_bytes(path).decode("utf-8")
    return list(csv.DictReader(io.StringIO(text)))
