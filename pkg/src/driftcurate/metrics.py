"""Binary segmentation metrics: dice, precision/recall/F-score and PR-AUC."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core_io import (
    DatasetManifest,
    PathLike,
    atomic_write_text,
    format_float,
    load_mask,
    load_probability,
    resolve,
    write_csv,
)
from .errors import CurationError, DimMismatch, EmptyInput, NoPositives

logger = logging.getLogger(__name__)

N_THRESHOLDS = 257  # t_k = k / 256, k = 0..256


@dataclass(frozen=True, eq=False)
class PredictionRecord:
    prob: np.ndarray
    truth: np.ndarray

    def __post_init__(self) -> None:
        prob = np.asarray(self.prob, dtype=np.float64)
        truth = np.asarray(self.truth)
        if prob.shape != truth.shape:
            raise DimMismatch(f"prediction {prob.shape} vs truth {truth.shape}")
        if not np.all(np.isfinite(prob)) or prob.min(initial=0.0) < 0 or prob.max(initial=0.0) > 1:
            raise ValueError("probabilities must lie in [0, 1]")
        if not np.all((truth == 0) | (truth == 1)):
            raise ValueError("truth mask must be binary {0, 1}")
        object.__setattr__(self, "prob", prob)
        object.__setattr__(self, "truth", truth.astype(bool))


@dataclass(frozen=True)
class ImageMetrics:
    id: str
    dice: float
    precision: float
    recall: float
    f_score: float


@dataclass(frozen=True)
class MetricsReport:
    dice: float
    precision: float
    recall: float
    f_score: float
    pr_auc: float
    threshold_used: float
    evaluated: int = 0
    skipped: int = 0
    skipped_ids: tuple = ()
    per_image: tuple = field(default=(), repr=False)

    def to_json(self) -> str:
        doc = asdict(self)
        doc.pop("per_image")
        doc["skipped_ids"] = list(self.skipped_ids)
        return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def binarize(prob, t: float) -> np.ndarray:
    return (np.asarray(prob, dtype=np.float64) >= t).astype(np.uint8)


def _pair(pred, truth):
    p = np.asarray(pred).astype(bool)
    g = np.asarray(truth).astype(bool)
    if p.shape != g.shape:
        raise DimMismatch(f"prediction {p.shape} vs truth {g.shape}")
    return p, g


def dice(pred, truth) -> float:
    p, g = _pair(pred, truth)
    total = int(p.sum()) + int(g.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(p, g).sum()) / total


def _prf_from_counts(tp: int, fp: int, fn: int):
    if tp + fp == 0:
        precision = 1.0 if fn == 0 else 0.0
    else:
        precision = tp / (tp + fp)
    recall = 1.0 if tp + fn == 0 else tp / (tp + fn)
    f = 0.0 if precision + recall == 0 else 2.0 * precision * recall / (precision + recall)
    return precision, recall, f


def precision_recall_f(pred, truth):
    p, g = _pair(pred, truth)
    tp = int(np.logical_and(p, g).sum())
    fp = int(np.logical_and(p, ~g).sum())
    fn = int(np.logical_and(~p, g).sum())
    return _prf_from_counts(tp, fp, fn)


def pr_curve(records: Sequence[PredictionRecord]):
    """Pooled precision/recall on the 257-point threshold grid.

    Returns ``(recall, precision)`` arrays ordered by decreasing threshold,
    which is non-decreasing recall. Points with zero recall are dropped.
    """
    if not records:
        raise EmptyInput("pr_auc needs at least one record")
    prob = np.concatenate([r.prob.ravel() for r in records])
    truth = np.concatenate([r.truth.ravel() for r in records])
    n_pos = int(truth.sum())
    if n_pos == 0:
        raise NoPositives("no positive ground-truth pixel in the pooled records")
    pos = np.sort(prob[truth])
    neg = np.sort(prob[~truth])
    thresholds = np.arange(N_THRESHOLDS - 1, -1, -1) / (N_THRESHOLDS - 1)
    tp = pos.size - np.searchsorted(pos, thresholds, side="left")
    fp = neg.size - np.searchsorted(neg, thresholds, side="left")
    keep = tp > 0
    tp, fp = tp[keep], fp[keep]
    return tp / n_pos, tp / (tp + fp)


def pr_auc(records: Sequence[PredictionRecord]) -> float:
    """Trapezoidal area under the pooled PR curve.

    The curve is anchored at recall 0 with the precision of its first
    (smallest-recall) point and closed at recall 1 with precision equal to
    the positive prevalence.
    """
    recall, precision = pr_curve(records)
    n = sum(r.truth.size for r in records)
    prevalence = sum(int(r.truth.sum()) for r in records) / n
    r = np.concatenate([[0.0], recall, [1.0]])
    p = np.concatenate([[precision[0]], precision, [prevalence]])
    return float(np.sum(np.diff(r) * (p[1:] + p[:-1]) / 2.0))


def evaluate_records(records: Sequence[PredictionRecord], ids: Sequence[str], t: float = 0.5):
    per_image = []
    for rid, rec in zip(ids, records):
        pred = binarize(rec.prob, t)
        pr, rc, f = precision_recall_f(pred, rec.truth)
        per_image.append(ImageMetrics(rid, dice(pred, rec.truth), pr, rc, f))
    return per_image


def evaluate_manifest(manifest: DatasetManifest, t: float = 0.5, root: Optional[PathLike] = None):
    """Macro-averaged dice/P/R/F and pooled PR-AUC over a manifest.

    Entries need ``mask_path`` (truth) and ``pred_path``; entries lacking
    either, or whose files fail to load or disagree in shape, are skipped and
    counted. Returns ``(report, manifest)`` where the manifest carries the
    per-image dice.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"threshold {t} outside [0, 1]")
    records, ids, skipped = [], [], []
    for e in manifest:
        if e.pred_path is None or e.mask_path is None:
            missing = "pred_path" if e.pred_path is None else "mask_path"
            logger.warning("skipping %s: no %s", e.id, missing)
            skipped.append(e.id)
            continue
        try:
            prob = load_probability(resolve(e.pred_path, root))
            truth = load_mask(resolve(e.mask_path, root))
            records.append(PredictionRecord(prob, truth))
        except (CurationError, ValueError) as exc:
            logger.warning("skipping %s: %s", e.id, exc)
            skipped.append(e.id)
            continue
        ids.append(e.id)
    if not records:
        raise EmptyInput("no entry could be evaluated")
    per_image = evaluate_records(records, ids, t)
    n = len(per_image)
    report = MetricsReport(
        dice=sum(m.dice for m in per_image) / n,
        precision=sum(m.precision for m in per_image) / n,
        recall=sum(m.recall for m in per_image) / n,
        f_score=sum(m.f_score for m in per_image) / n,
        pr_auc=pr_auc(records),
        threshold_used=float(t),
        evaluated=n,
        skipped=len(skipped),
        skipped_ids=tuple(skipped),
        per_image=tuple(per_image),
    )
    updated = manifest.updated({m.id: {"dice": m.dice} for m in per_image})
    return report, updated


def save_report(report: MetricsReport, path: PathLike) -> None:
    atomic_write_text(path, report.to_json())


def save_per_image_csv(report: MetricsReport, path: PathLike) -> None:
    write_csv(
        path,
        ["id", "dice", "precision", "recall", "f_score"],
        [
            [m.id, format_float(m.dice), format_float(m.precision), format_float(m.recall), format_float(m.f_score)]
            for m in report.per_image
        ],
    )
