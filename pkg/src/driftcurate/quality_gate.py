"""Approach 1: admit new images whose quality score passes a threshold."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .brisque import DEFAULT_C, QualityModel, brisque_features, score, to_luma
from .core_io import (
    DatasetManifest,
    ManifestEntry,
    PathLike,
    Verdict,
    format_float,
    load_image,
    read_csv,
    resolve,
    write_csv,
)
from .errors import CurationError, EmptyInput, FractionInfeasible, MalformedCsv, MissingScore

logger = logging.getLogger(__name__)

# default cut for lower-is-better BRISQUE scores, and a stricter alternative
DEFAULT_THRESHOLD = 60.0
STRICT_THRESHOLD = 40.0

SCORES_HEADER = ("id", "score", "verdict", "reason")
HISTOGRAM_HEADER = ("bin_lo", "bin_hi", "count")
HISTOGRAM_WIDENING = 1e-9


class Polarity(str, enum.Enum):
    HIGHER_IS_BETTER = "higher_is_better"
    LOWER_IS_BETTER = "lower_is_better"

    @classmethod
    def parse(cls, value: str) -> "Polarity":
        aliases = {"high": cls.HIGHER_IS_BETTER, "low": cls.LOWER_IS_BETTER}
        return aliases.get(value) or cls(value)


@dataclass(frozen=True)
class SelectionThreshold:
    t: float
    polarity: Polarity = Polarity.LOWER_IS_BETTER

    def __post_init__(self) -> None:
        if not math.isfinite(self.t):
            raise ValueError("threshold must be finite")
        object.__setattr__(self, "polarity", Polarity(self.polarity))

    def accepts(self, sigma: float) -> bool:
        # closed on the good side
        if self.polarity is Polarity.HIGHER_IS_BETTER:
            return sigma >= self.t
        return sigma <= self.t


@dataclass(frozen=True)
class SelectionResult:
    selected: DatasetManifest
    rejected: DatasetManifest
    threshold: Optional[SelectionThreshold] = None


def _warn_extremes(n_selected: int, n_total: int, what: str) -> None:
    if n_total == 0:
        return
    if n_selected == 0:
        logger.warning("%s selected nothing out of %d entries", what, n_total)
    elif n_selected == n_total:
        logger.warning("%s selected all %d entries", what, n_total)


def select_by_threshold(manifest: DatasetManifest, th: SelectionThreshold) -> SelectionResult:
    selected, rejected = [], []
    for e in manifest:
        if e.score is None:
            raise MissingScore(f"entry {e.id!r} has no score")
        if th.accepts(e.score):
            selected.append(replace(e, verdict=Verdict.SELECTED, reason=None))
        else:
            rejected.append(replace(e, verdict=Verdict.REJECTED, reason=None))
    _warn_extremes(len(selected), len(manifest), f"threshold {th.t} ({th.polarity.value})")
    return SelectionResult(DatasetManifest(selected), DatasetManifest(rejected), th)


def score_image(path: PathLike, model: QualityModel, c: float = DEFAULT_C) -> float:
    return score(brisque_features(to_luma(load_image(path)), c), model)


def score_manifest(
    manifest: DatasetManifest,
    model: QualityModel,
    c: float = DEFAULT_C,
    root: Optional[PathLike] = None,
) -> DatasetManifest:
    """Attach a quality score to every entry.

    Entries that cannot be scored (unreadable file, flat image, ...) get
    verdict ``rejected`` and a reason instead of a score.
    """
    changes = {}
    for e in manifest:
        try:
            sigma = score_image(resolve(e.image_path, root), model, c)
            changes[e.id] = {"score": sigma, "verdict": None, "reason": None}
        except CurationError as exc:
            logger.warning("cannot score %s: %s", e.id, exc)
            reason = f"{type(exc).__name__}: {exc}"
            changes[e.id] = {"score": None, "verdict": Verdict.REJECTED, "reason": reason}
    return manifest.updated(changes)


def score_histogram(scores: Sequence[float], bin_count: int):
    """Equal-width histogram over ``[min, max]``; returns ``(lo, hi, count)`` triples."""
    values = np.asarray(list(scores), dtype=np.float64)
    if values.size == 0:
        raise EmptyInput("histogram needs at least one score")
    if bin_count < 1:
        raise ValueError("bin_count must be positive")
    lo = float(values.min())
    hi = float(values.max()) + HISTOGRAM_WIDENING
    width = (hi - lo) / bin_count
    idx = np.clip(np.floor((values - lo) / width).astype(np.int64), 0, bin_count - 1)
    counts = np.bincount(idx, minlength=bin_count)
    edges = [lo + k * width for k in range(bin_count)] + [hi]
    return [(edges[k], edges[k + 1], int(counts[k])) for k in range(bin_count)]


def _split_sizes(fraction_a: float, n: int):
    # tolerance keeps ceil(0.7 * 100) at 70
    from_a = math.ceil(fraction_a * n - 1e-9)
    return from_a, n - from_a


def _largest_mix(fraction_a: float, n_a: int, n_b: int) -> int:
    for n in range(n_a + n_b, 0, -1):
        take_a, take_b = _split_sizes(fraction_a, n)
        if take_a <= n_a and take_b <= n_b:
            return n
    return 0


def mix_manifests(
    a: DatasetManifest,
    b: DatasetManifest,
    fraction_a: float,
    seed: int,
    size: Optional[int] = None,
    prefixes: tuple = ("a", "b"),
) -> DatasetManifest:
    """Seeded sample without replacement, ``ceil(fraction_a * n)`` entries from ``a``.

    When ``size`` is omitted the largest ``n`` that oversamples neither
    source is used. Ids become ``<prefix>:<id>``.
    """
    if not 0.0 <= fraction_a <= 1.0:
        raise FractionInfeasible(f"fraction {fraction_a} outside [0, 1]")
    if size is None:
        size = _largest_mix(fraction_a, len(a), len(b))
        if size == 0:
            raise FractionInfeasible("sources too small for the requested split")
    n_a, n_b = _split_sizes(fraction_a, size)
    if n_a > len(a) or n_b > len(b) or size < 1:
        raise FractionInfeasible(
            f"need {n_a} from a ({len(a)} available) and {n_b} from b ({len(b)} available)"
        )
    rng = np.random.default_rng(seed)
    pick_a = np.sort(rng.choice(len(a), size=n_a, replace=False)) if n_a else []
    pick_b = np.sort(rng.choice(len(b), size=n_b, replace=False)) if n_b else []
    out = [replace(a.entries[i], id=f"{prefixes[0]}:{a.entries[i].id}") for i in pick_a]
    out += [replace(b.entries[i], id=f"{prefixes[1]}:{b.entries[i].id}") for i in pick_b]
    return DatasetManifest(out)


# ---------------------------------------------------------------------------
# CSV surfaces
# ---------------------------------------------------------------------------


def scores_rows(manifest: DatasetManifest):
    return [
        [e.id, format_float(e.score), e.verdict.value if e.verdict else "", e.reason or ""]
        for e in manifest
    ]


def save_scores_csv(manifest: DatasetManifest, path: PathLike) -> None:
    write_csv(path, SCORES_HEADER, scores_rows(manifest))


def load_scores_csv(path: PathLike) -> list:
    """Rows of the scores CSV as ``(id, score | None, verdict | None, reason | None)``."""
    rows = read_csv(path)
    out = []
    for i, row in enumerate(rows):
        try:
            rid = row["id"]
            raw = row["score"]
            sigma = float(raw) if raw not in ("", None) else None
            verdict = Verdict(row["verdict"]) if row.get("verdict") else None
        except (KeyError, ValueError) as exc:
            raise MalformedCsv(f"{path} row {i + 1}: {exc}") from exc
        if sigma is not None and not math.isfinite(sigma):
            raise MalformedCsv(f"{path} row {i + 1}: non-finite score")
        out.append((rid, sigma, verdict, row.get("reason") or None))
    return out


def save_histogram_csv(bins, path: PathLike) -> None:
    write_csv(path, HISTOGRAM_HEADER, [[format_float(lo), format_float(hi), n] for lo, hi, n in bins])


def scored_manifest_from_csv(path: PathLike, manifest: Optional[DatasetManifest] = None) -> DatasetManifest:
    """Manifest built from a scores CSV, joined on id with ``manifest`` when given.

    Without a manifest the id doubles as the image path.
    """
    known = manifest.by_id() if manifest is not None else {}
    entries = []
    for rid, sigma, verdict, reason in load_scores_csv(path):
        base = known.get(rid) or ManifestEntry(id=rid, image_path=rid)
        entries.append(replace(base, score=sigma, verdict=verdict, reason=reason))
    return DatasetManifest(entries)
