"""Approach 2: gate new samples with an SVM over pooled bottleneck features.

Feature maps of the current model's test predictions are pooled into fixed
length vectors, labelled positive or negative by their prediction's dice,
and a linear SVM learns to tell the two apart. New data is admitted when
the SVM predicts a positive.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .core_io import (
    DatasetManifest,
    FeatureMap,
    PathLike,
    Verdict,
    _read_bytes,
    atomic_write_text,
    format_float,
    read_tensor,
    resolve,
    write_csv,
)
from .errors import (
    ChannelMismatch,
    CurationError,
    Degenerate,
    LengthMismatch,
    MalformedJson,
    MalformedModel,
    MapTooSmall,
    MissingDice,
    MissingFeature,
    SingleClass,
)
from .quality_gate import SelectionResult, _warn_extremes

logger = logging.getLogger(__name__)

DEFAULT_LEVELS = (1, 2, 4)
DEFAULT_TAU = 0.5
DEFAULT_C_PARAM = 1.0
DUAL_GAP_TOL = 1e-6
GATE_HEADER = ("id", "margin", "verdict")


class GateLabel(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"

    @property
    def sign(self) -> float:
        return 1.0 if self is GateLabel.POSITIVE else -1.0


def pooled_length(levels: Sequence[int], channels: int) -> int:
    return channels * sum(L * L for L in levels)


def spp_pool(fmap: FeatureMap, levels: Sequence[int] = DEFAULT_LEVELS) -> np.ndarray:
    """Max-pool each channel over ``L x L`` grids for every level ``L``.

    Output order: channel, then level as given, then cells row-major.
    """
    levels = tuple(int(L) for L in levels)
    if not levels or min(levels) < 1:
        raise ValueError("levels must be positive integers")
    data = fmap.data.astype(np.float64)
    V, p, q = data.shape
    if min(p, q) < max(levels):
        raise MapTooSmall(f"{p}x{q} map cannot be split into {max(levels)}x{max(levels)} cells")
    cells = []
    for L in levels:
        r_edges = [r * p // L for r in range(L + 1)]
        c_edges = [s * q // L for s in range(L + 1)]
        for r in range(L):
            for s in range(L):
                block = data[:, r_edges[r] : r_edges[r + 1], c_edges[s] : c_edges[s + 1]]
                cells.append(block.max(axis=(1, 2)))
    return np.stack(cells, axis=1).ravel()


def label_by_dice(manifest: DatasetManifest, tau: float = DEFAULT_TAU):
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau {tau} outside [0, 1]")
    labels = []
    for e in manifest:
        if e.dice is None:
            raise MissingDice(f"entry {e.id!r} has no dice")
        labels.append((e.id, GateLabel.POSITIVE if e.dice >= tau else GateLabel.NEGATIVE))
    return labels


@dataclass(frozen=True, eq=False)
class SvmModel:
    weights: np.ndarray
    bias: float
    c_param: float
    mean: np.ndarray
    std: np.ndarray
    levels: tuple = DEFAULT_LEVELS
    v_expected: int = 1

    def __post_init__(self) -> None:
        w, mu, sd = (np.asarray(a, dtype=np.float64) for a in (self.weights, self.mean, self.std))
        if not (w.ndim == mu.ndim == sd.ndim == 1 and w.size == mu.size == sd.size):
            raise MalformedModel("weights, mean and std must be equal-length vectors")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(mu)) and np.all(sd > 0)):
            raise MalformedModel("model statistics must be finite with std > 0")
        if not (math.isfinite(self.bias) and self.c_param > 0):
            raise MalformedModel("bias must be finite and c_param positive")
        levels = tuple(int(L) for L in self.levels)
        if w.size != pooled_length(levels, self.v_expected):
            raise MalformedModel(
                f"{w.size} weights inconsistent with levels {levels} and {self.v_expected} channels"
            )
        for name, arr in (("weights", w), ("mean", mu), ("std", sd)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def dim(self) -> int:
        return self.weights.size

    def standardize(self, v) -> np.ndarray:
        x = np.asarray(v, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise LengthMismatch(f"model expects vectors of length {self.dim}, got {x.shape[-1]}")
        return (x - self.mean) / self.std

    def to_json(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "c_param": float(self.c_param),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "levels": list(self.levels),
            "v_expected": int(self.v_expected),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SvmModel":
        try:
            return cls(
                weights=doc["weights"],
                bias=float(doc["bias"]),
                c_param=float(doc["c_param"]),
                mean=doc["mean"],
                std=doc["std"],
                levels=tuple(doc["levels"]),
                v_expected=int(doc["v_expected"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, MalformedModel):
                raise
            raise MalformedModel(f"incomplete SVM model: {exc}") from exc


def _dual_cd(X: np.ndarray, y: np.ndarray, c: float, order: np.ndarray, max_updates: int):
    """Dual coordinate descent for the L1-loss linear SVM (bias folded into ``X``)."""
    n = X.shape[0]
    alpha = np.zeros(n)
    w = np.zeros(X.shape[1])
    qii = np.einsum("ij,ij->i", X, X)
    updates = 0
    gap = math.inf
    while updates < max_updates:
        for i in order:
            g = y[i] * (w @ X[i]) - 1.0
            a = alpha[i]
            pg = min(g, 0.0) if a == 0.0 else max(g, 0.0) if a == c else g
            if pg != 0.0:
                new = min(max(a - g / qii[i], 0.0), c)
                w += (new - a) * y[i] * X[i]
                alpha[i] = new
            updates += 1
            if updates >= max_updates:
                break
        half_norm = 0.5 * float(w @ w)
        primal = half_norm + c * float(np.maximum(0.0, 1.0 - y * (X @ w)).sum())
        dual = float(alpha.sum()) - half_norm
        gap = primal - dual
        if gap < DUAL_GAP_TOL:
            break
    return w, gap, updates


def train_svm(
    rows: Sequence,
    c_param: float = DEFAULT_C_PARAM,
    seed: int = 0,
    levels: Sequence[int] = DEFAULT_LEVELS,
    v_expected: Optional[int] = None,
) -> SvmModel:
    """Linear soft-margin SVM on z-scored pooled vectors.

    ``rows`` are ``(vector, GateLabel)`` pairs. The seed fixes the order in
    which dual coordinates are swept; identical inputs and seed give a
    bit-identical model. ``levels``/``v_expected`` only annotate the model
    (``v_expected`` defaults to the length divided by the bins per channel).
    """
    if not c_param > 0:
        raise ValueError("c_param must be positive")
    rows = list(rows)
    if len(rows) < 2:
        raise SingleClass("need at least two rows")
    lengths = {len(v) for v, _ in rows}
    if len(lengths) != 1:
        raise LengthMismatch(f"pooled vectors differ in length: {sorted(lengths)}")
    X = np.array([np.asarray(v, dtype=np.float64) for v, _ in rows])
    y = np.array([GateLabel(lab).sign for _, lab in rows])
    if np.all(y > 0) or np.all(y < 0):
        raise SingleClass("training rows contain a single label")
    if not np.all(np.isfinite(X)):
        raise ValueError("pooled vectors contain non-finite values")
    if np.all(X == X[0]):
        raise Degenerate("all training vectors are identical")
    levels = tuple(int(L) for L in levels)
    bins = sum(L * L for L in levels)
    k = X.shape[1]
    if v_expected is None:
        if k % bins:
            raise LengthMismatch(f"vector length {k} is not a multiple of {bins} bins")
        v_expected = k // bins

    mean = X.mean(axis=0)
    std = X.std(axis=0)
    flat = ~(std > 0)
    std = np.where(flat, 1.0, std)
    Z = (X - mean) / std
    Z[:, flat] = 0.0
    Za = np.hstack([Z, np.ones((len(rows), 1))])

    order = np.random.default_rng(seed).permutation(len(rows))
    w, gap, updates = _dual_cd(Za, y, c_param, order, max_updates=10 * len(rows) * k)
    logger.debug("svm: %d coordinate updates, duality gap %.3g", updates, gap)
    weights = np.where(flat, 0.0, w[:-1])
    return SvmModel(
        weights=weights, bias=float(w[-1]), c_param=c_param,
        mean=mean, std=std, levels=levels, v_expected=v_expected,
    )


def svm_predict(model: SvmModel, v):
    margin = float(model.weights @ model.standardize(v) + model.bias)
    return (GateLabel.POSITIVE if margin >= 0.0 else GateLabel.NEGATIVE), margin


def pool_entry(path: PathLike, levels: Sequence[int], v_expected: Optional[int] = None) -> np.ndarray:
    fmap = read_tensor(path)
    if v_expected is not None and fmap.channels != v_expected:
        raise ChannelMismatch(f"map has {fmap.channels} channels, model expects v_expected={v_expected}")
    return spp_pool(fmap, levels)


def gate_new_data(
    model: SvmModel,
    manifest: DatasetManifest,
    levels: Optional[Sequence[int]] = None,
    root: Optional[PathLike] = None,
    strict_channels: bool = False,
) -> SelectionResult:
    """Route each entry's feature map through the SVM.

    Positive predictions are selected. Entries without a loadable map of the
    right shape are rejected with a reason, unless ``strict_channels`` is set,
    in which case a channel-count mismatch raises :class:`ChannelMismatch`.
    """
    levels = model.levels if levels is None else tuple(int(L) for L in levels)
    if levels != model.levels:
        raise LengthMismatch(f"levels {levels} differ from the model's {model.levels}")
    selected, rejected = [], []
    for e in manifest:
        try:
            if e.feature_path is None:
                raise MissingFeature(f"entry {e.id!r} has no feature_path")
            v = pool_entry(resolve(e.feature_path, root), levels, model.v_expected)
            label, margin = svm_predict(model, v)
        except ChannelMismatch:
            if strict_channels:
                raise
            logger.warning("gate: %s has the wrong channel count", e.id)
            rejected.append(replace(e, verdict=Verdict.REJECTED, margin=None,
                                    reason=f"ChannelMismatch: expected v_expected={model.v_expected}"))
            continue
        except CurationError as exc:
            logger.warning("gate: cannot route %s: %s", e.id, exc)
            rejected.append(replace(e, verdict=Verdict.REJECTED, margin=None,
                                    reason=f"{type(exc).__name__}: {exc}"))
            continue
        if label is GateLabel.POSITIVE:
            selected.append(replace(e, verdict=Verdict.SELECTED, margin=margin, reason=None))
        else:
            rejected.append(replace(e, verdict=Verdict.REJECTED, margin=margin, reason=None))
    _warn_extremes(len(selected), len(manifest), "feature gate")
    return SelectionResult(DatasetManifest(selected), DatasetManifest(rejected), None)


def training_rows(manifest: DatasetManifest, tau: float, levels: Sequence[int], root: Optional[PathLike] = None):
    """Pooled vectors and dice labels for every entry of a scored test manifest."""
    by_id = manifest.by_id()
    rows = []
    for rid, label in label_by_dice(manifest, tau):
        e = by_id[rid]
        if e.feature_path is None:
            raise MissingFeature(f"entry {rid!r} has no feature_path")
        rows.append((pool_entry(resolve(e.feature_path, root), levels), label))
    return rows


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------


def svm_model_to_json(model: SvmModel) -> str:
    return json.dumps(model.to_json(), indent=2, allow_nan=False) + "\n"


def save_svm_model(model: SvmModel, path: PathLike) -> None:
    atomic_write_text(path, svm_model_to_json(model))


def load_svm_model(path: PathLike) -> SvmModel:
    try:
        doc = json.loads(_read_bytes(path).decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedJson(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedModel("SVM model must be a JSON object")
    return SvmModel.from_json(doc)


def save_gate_csv(result: SelectionResult, order: Sequence[str], path: PathLike) -> None:
    entries = {e.id: e for e in result.selected}
    entries.update({e.id: e for e in result.rejected})
    rows = [[rid, format_float(entries[rid].margin), entries[rid].verdict.value] for rid in order]
    write_csv(path, GATE_HEADER, rows)
