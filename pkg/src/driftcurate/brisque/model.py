"""Regression models that map a BRISQUE feature vector to a quality score.

Two kinds are supported: a linear model (what :func:`train_quality_model`
produces) and an RBF epsilon-SVR, which is how published BRISQUE models are
distributed. Both share per-dimension min/max scaling to [-1, 1].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..core_io import PathLike, _read_bytes, atomic_write_text
from ..errors import MalformedJson, MalformedModel, ModelDimensionMismatch, TooFewRows
from .nss import N_FEATURES

RIDGE = 1e-6
RANGE_GUARD = 1e-6
KINDS = ("linear", "rbf_svr")


def _vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise MalformedModel(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise MalformedModel(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class QualityModel:
    kind: str
    feature_lo: np.ndarray
    feature_hi: np.ndarray
    weights: Optional[np.ndarray] = None
    bias: float = 0.0
    gamma: float = 0.0
    rho: float = 0.0
    sv_coef: Optional[np.ndarray] = None
    support_vectors: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise MalformedModel(f"unknown model kind {self.kind!r}")
        lo = _vector(self.feature_lo, "feature_lo")
        hi = _vector(self.feature_hi, "feature_hi")
        if lo.shape != hi.shape:
            raise MalformedModel("feature_lo and feature_hi differ in length")
        if not np.all(lo < hi):
            bad = int(np.flatnonzero(~(lo < hi))[0])
            raise MalformedModel(f"feature_lo[{bad}] must be < feature_hi[{bad}]")
        object.__setattr__(self, "feature_lo", lo)
        object.__setattr__(self, "feature_hi", hi)
        dim = lo.size
        if self.kind == "linear":
            if self.weights is None:
                raise MalformedModel("linear model needs weights")
            w = _vector(self.weights, "weights")
            if w.size != dim:
                raise MalformedModel(f"{w.size} weights for {dim} features")
            object.__setattr__(self, "weights", w)
            if not math.isfinite(self.bias):
                raise MalformedModel("bias must be finite")
        else:
            if not (self.gamma > 0 and math.isfinite(self.gamma)):
                raise MalformedModel("rbf_svr gamma must be positive")
            if not math.isfinite(self.rho):
                raise MalformedModel("rho must be finite")
            if self.sv_coef is None or self.support_vectors is None:
                raise MalformedModel("rbf_svr model needs support vectors")
            coef = _vector(self.sv_coef, "sv_coef")
            sv = np.asarray(self.support_vectors, dtype=np.float64)
            if sv.ndim != 2 or sv.shape != (coef.size, dim):
                raise MalformedModel(
                    f"support vectors must be ({coef.size}, {dim}), got {sv.shape}"
                )
            if not np.all(np.isfinite(sv)):
                raise MalformedModel("support vectors contain non-finite values")
            sv.setflags(write=False)
            object.__setattr__(self, "sv_coef", coef)
            object.__setattr__(self, "support_vectors", sv)

    @property
    def dim(self) -> int:
        return self.feature_lo.size

    def scale(self, features) -> np.ndarray:
        f = np.asarray(features, dtype=np.float64)
        if f.shape[-1] != self.dim:
            raise ModelDimensionMismatch(f"model expects {self.dim} features, got {f.shape[-1]}")
        scaled = 2.0 * (f - self.feature_lo) / (self.feature_hi - self.feature_lo) - 1.0
        return np.clip(scaled, -1.0, 1.0)

    def to_json(self) -> dict:
        doc = {
            "kind": self.kind,
            "feature_lo": self.feature_lo.tolist(),
            "feature_hi": self.feature_hi.tolist(),
        }
        if self.kind == "linear":
            doc["weights"] = self.weights.tolist()
            doc["bias"] = float(self.bias)
        else:
            doc["gamma"] = float(self.gamma)
            doc["rho"] = float(self.rho)
            doc["support_vectors"] = [
                {"coef": float(c), "sv": v.tolist()}
                for c, v in zip(self.sv_coef, self.support_vectors)
            ]
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "QualityModel":
        if not isinstance(doc, dict):
            raise MalformedModel("quality model must be a JSON object")
        try:
            kind = doc["kind"]
            common = dict(kind=kind, feature_lo=doc["feature_lo"], feature_hi=doc["feature_hi"])
            if kind == "linear":
                return cls(weights=doc["weights"], bias=float(doc["bias"]), **common)
            svs = doc["support_vectors"]
            return cls(
                gamma=float(doc["gamma"]),
                rho=float(doc["rho"]),
                sv_coef=[float(s["coef"]) for s in svs],
                support_vectors=np.array([s["sv"] for s in svs], dtype=np.float64).reshape(
                    len(svs), -1
                ),
                **common,
            )
        except (KeyError, TypeError) as exc:
            raise MalformedModel(f"incomplete quality model: {exc}") from exc


def score(features, model: QualityModel) -> float:
    """Quality score of one feature vector; lower means better under BRISQUE."""
    f = model.scale(features)
    if f.ndim != 1:
        raise ModelDimensionMismatch("score expects a single feature vector")
    if model.kind == "linear":
        return float(model.weights @ f + model.bias)
    d2 = np.sum((model.support_vectors - f) ** 2, axis=1)
    return float(model.sv_coef @ np.exp(-model.gamma * d2) - model.rho)


def train_quality_model(rows: Sequence) -> QualityModel:
    """Fit a linear model to ``(features, label)`` rows by least squares.

    Columns that are flat over the training rows get weight 0 and stay out
    of the fit. The remaining design is solved exactly when it has full
    column rank; otherwise a ridge of ``RIDGE`` per row is added, which
    keeps the solution unchanged when the whole training set is duplicated.
    """
    rows = list(rows)
    if len(rows) < N_FEATURES + 1:
        raise TooFewRows(f"need at least {N_FEATURES + 1} rows, got {len(rows)}")
    X = np.array([np.asarray(f, dtype=np.float64) for f, _ in rows])
    y = np.array([float(label) for _, label in rows])
    if X.ndim != 2:
        raise ModelDimensionMismatch("feature rows differ in length")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("training rows contain non-finite values")
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    flat = ~(lo < hi)
    lo = np.where(flat, lo - RANGE_GUARD, lo)
    hi = np.where(flat, hi + RANGE_GUARD, hi)
    scaled = np.clip(2.0 * (X - lo) / (hi - lo) - 1.0, -1.0, 1.0)
    design = np.hstack([scaled[:, ~flat], np.ones((len(rows), 1))])
    n, k = design.shape
    if np.linalg.matrix_rank(design) == k:
        coef = np.linalg.lstsq(design, y, rcond=None)[0]
    else:
        coef = np.linalg.solve(design.T @ design + RIDGE * n * np.eye(k), design.T @ y)
    weights = np.zeros(X.shape[1])
    weights[~flat] = coef[:-1]
    return QualityModel(kind="linear", feature_lo=lo, feature_hi=hi, weights=weights, bias=float(coef[-1]))


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------


def quality_model_to_json(model: QualityModel) -> str:
    return json.dumps(model.to_json(), indent=2, allow_nan=False) + "\n"


def save_quality_model(model: QualityModel, path: PathLike) -> None:
    atomic_write_text(path, quality_model_to_json(model))


def load_quality_model(path: PathLike) -> QualityModel:
    try:
        doc = json.loads(_read_bytes(path).decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedJson(f"{path}: {exc}") from exc
    return QualityModel.from_json(doc)


def _parse_svr_model(text: str):
    header = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        if line == "SV":
            break
        key, _, value = line.partition(" ")
        header[key] = value.strip()
    else:
        raise MalformedModel("SVR model has no 'SV' section")
    if header.get("svm_type") != "epsilon_svr":
        raise MalformedModel(f"svm_type {header.get('svm_type')!r} not supported; expected epsilon_svr")
    if header.get("kernel_type") != "rbf":
        raise MalformedModel(f"kernel_type {header.get('kernel_type')!r} not supported; expected rbf")
    try:
        gamma = float(header["gamma"])
        rho = float(header["rho"].split()[0])
        total = int(header["total_sv"])
    except (KeyError, ValueError, IndexError) as exc:
        raise MalformedModel(f"bad SVR header: {exc}") from exc
    coefs, vectors = [], []
    for line in lines[i:]:
        parts = line.split()
        if not parts:
            continue
        try:
            coefs.append(float(parts[0]))
            vec = {}
            for tok in parts[1:]:
                idx, _, val = tok.partition(":")
                vec[int(idx)] = float(val)
        except ValueError as exc:
            raise MalformedModel(f"bad support vector line {line!r}: {exc}") from exc
        vectors.append(vec)
    if len(coefs) != total:
        raise MalformedModel(f"total_sv={total} but {len(coefs)} support vectors listed")
    return gamma, rho, coefs, vectors


def _parse_range_file(text: str):
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != ["x"]:
        raise MalformedModel("range file must start with an 'x' line")
    if len(lines) < 2 or len(lines[1]) != 2:
        raise MalformedModel("range file lacks the target-range line")
    target = tuple(float(v) for v in lines[1])
    if target != (-1.0, 1.0):
        raise MalformedModel(f"target range {target} not supported; expected (-1, 1)")
    ranges = {}
    for parts in lines[2:]:
        if len(parts) != 3:
            raise MalformedModel(f"bad range line {' '.join(parts)!r}")
        ranges[int(parts[0])] = (float(parts[1]), float(parts[2]))
    return ranges


def import_svr_model(model_path: PathLike, range_path: PathLike) -> QualityModel:
    """Build an ``rbf_svr`` model from a plain-text SVR model plus its scaling-range file.

    Feature indices in both files are 1-based; absent support-vector entries
    are zero.
    """
    gamma, rho, coefs, vectors = _parse_svr_model(_read_bytes(model_path).decode("utf-8"))
    ranges = _parse_range_file(_read_bytes(range_path).decode("utf-8"))
    dim = max(ranges) if ranges else 0
    if sorted(ranges) != list(range(1, dim + 1)):
        raise MalformedModel("range file must list every feature index from 1")
    lo = [ranges[k][0] for k in range(1, dim + 1)]
    hi = [ranges[k][1] for k in range(1, dim + 1)]
    sv = np.zeros((len(vectors), dim))
    for row, vec in enumerate(vectors):
        for idx, val in vec.items():
            if not 1 <= idx <= dim:
                raise MalformedModel(f"support vector index {idx} outside 1..{dim}")
            sv[row, idx - 1] = val
    return QualityModel(
        kind="rbf_svr", feature_lo=lo, feature_hi=hi,
        gamma=gamma, rho=rho, sv_coef=coefs, support_vectors=sv,
    )
