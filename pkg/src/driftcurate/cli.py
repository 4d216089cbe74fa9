"""Command-line entry point: ``driftcurate <command>``.

Exit status is 0 on success and 1 on a fatal error. Per-entry problems
(an unreadable image, a flat texture) are reported on stderr and counted
but do not fail the run.
"""

from __future__ import annotations

import functools
import logging
import os
import shutil
import sys
from dataclasses import replace
from pathlib import Path

import click

from . import fixtures as fx
from .brisque import (
    DEFAULT_C,
    image_features,
    import_svr_model,
    load_quality_model,
    save_quality_model,
    train_quality_model,
)
from .core_io import (
    DatasetManifest,
    ManifestEntry,
    Verdict,
    load_image,
    load_manifest,
    read_csv,
    resolve,
    save_image,
    save_manifest,
)
from .distort import degrade
from .errors import CurationError, MalformedCsv
from .feature_gate import (
    DEFAULT_C_PARAM,
    DEFAULT_LEVELS,
    DEFAULT_TAU,
    gate_new_data,
    load_svm_model,
    save_gate_csv,
    save_svm_model,
    train_svm,
    training_rows,
)
from .metrics import evaluate_manifest, save_per_image_csv, save_report
from .quality_gate import (
    DEFAULT_THRESHOLD,
    Polarity,
    SelectionThreshold,
    mix_manifests,
    save_histogram_csv,
    save_scores_csv,
    score_histogram,
    score_manifest,
    scored_manifest_from_csv,
    select_by_threshold,
)

logger = logging.getLogger("driftcurate")

IMAGE_SUFFIXES = (".pgm", ".ppm")
PRED_SUFFIXES = (".pgm", ".ften")


def _fatal_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CurationError as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _report_skips(n: int, what: str, ids=()) -> None:
    if n:
        detail = f" ({', '.join(ids)})" if ids else ""
        click.echo(f"{n} {what} skipped{detail}", err=True)


def _parse_levels(ctx, param, value):
    try:
        levels = tuple(int(v) for v in str(value).split(",") if v.strip())
    except ValueError:
        raise click.BadParameter("levels must be comma-separated integers, e.g. 1,2,4")
    if not levels or min(levels) < 1:
        raise click.BadParameter("levels must be positive integers")
    return levels


def _polarity(ctx, param, value):
    return Polarity.parse(value)


unit_interval = click.FloatRange(0.0, 1.0)
positive_float = click.FloatRange(min=0.0, min_open=True)


@click.group()
@click.option("-v", "--verbose", count=True, help="Repeat for more logging.")
def main(verbose: int) -> None:
    """Quality-aware curation of segmentation training data."""
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)


def _prefix_dir(prefix: str) -> Path:
    """Directory an output prefix such as ``out/run_`` writes into."""
    return Path(prefix + "_").parent


def _rebase(m: DatasetManifest, root, out_dir) -> DatasetManifest:
    """Rewrite entry paths relative to ``root`` so they stay valid from ``out_dir``."""
    root = Path(root).resolve()
    out_dir = Path(out_dir).resolve()

    def fix(p):
        if p is None:
            return None
        if Path(p).is_absolute():
            return p
        return Path(os.path.relpath(resolve(p, root).resolve(), out_dir)).as_posix()

    keys = ("image_path", "mask_path", "feature_path", "pred_path")
    return DatasetManifest([replace(e, **{k: fix(getattr(e, k)) for k in keys}) for e in m])


# ---------------------------------------------------------------------------
# Approach 1
# ---------------------------------------------------------------------------


def _load_model(model_path: str, svr_range: str | None):
    if svr_range:
        return import_svr_model(model_path, svr_range)
    return load_quality_model(model_path)


@main.command("score")
@click.option("--manifest", required=True, type=click.Path(dir_okay=False))
@click.option("--model", "model_path", required=True, type=click.Path(dir_okay=False),
              help="Quality model JSON, or a plain-text SVR model together with --svr-range.")
@click.option("--svr-range", type=click.Path(dir_okay=False), help="Scaling-range file of an SVR model.")
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Scores CSV.")
@click.option("--out-manifest", type=click.Path(dir_okay=False),
              help="Scored manifest (default: the CSV path with a .json suffix).")
@click.option("--mscn-c", default=DEFAULT_C, show_default=True, type=positive_float)
@click.option("--bins", type=click.IntRange(min=1), help="Also write a score histogram with this many bins.")
@click.option("--histogram", type=click.Path(dir_okay=False), help="Histogram CSV path (with --bins).")
@_fatal_errors
def cmd_score(manifest, model_path, svr_range, out, out_manifest, mscn_c, bins, histogram):
    """Score every manifest image with a BRISQUE quality model."""
    model = _load_model(model_path, svr_range)
    m = load_manifest(manifest)
    scored = score_manifest(m, model, mscn_c, root=Path(manifest).parent)
    failed = [e.id for e in scored if e.score is None]
    save_scores_csv(scored, out)
    manifest_out = Path(out_manifest or Path(out).with_suffix(".json"))
    save_manifest(_rebase(scored, Path(manifest).parent, manifest_out.parent), manifest_out)
    if bins:
        values = [e.score for e in scored if e.score is not None]
        if values:
            save_histogram_csv(score_histogram(values, bins), histogram or Path(out).with_suffix(".hist.csv"))
    _report_skips(len(failed), "entries", failed)


@main.command("histogram")
@click.option("--scores", required=True, type=click.Path(dir_okay=False))
@click.option("--bins", default=20, show_default=True, type=click.IntRange(min=1))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@_fatal_errors
def cmd_histogram(scores, bins, out):
    """Equal-width histogram of a scores CSV."""
    m = scored_manifest_from_csv(scores)
    save_histogram_csv(score_histogram([e.score for e in m if e.score is not None], bins), out)


@main.command("select")
@click.option("--scores", required=True, type=click.Path(dir_okay=False))
@click.option("--threshold", default=DEFAULT_THRESHOLD, show_default=True, type=float)
@click.option("--polarity", default="low", show_default=True,
              type=click.Choice(["high", "low", "higher_is_better", "lower_is_better"]), callback=_polarity)
@click.option("--manifest", type=click.Path(dir_okay=False),
              help="Manifest supplying paths for the scored ids.")
@click.option("--out", "out_prefix", required=True,
              help="Output prefix; writes <prefix>selected.json and <prefix>rejected.json.")
@_fatal_errors
def cmd_select(scores, threshold, polarity, manifest, out_prefix):
    """Split scored entries at a quality threshold."""
    base = None
    if manifest:
        base = _rebase(load_manifest(manifest), Path(manifest).parent, _prefix_dir(out_prefix))
    m = scored_manifest_from_csv(scores, base)
    unscored = [e for e in m if e.score is None]
    result = select_by_threshold(DatasetManifest([e for e in m if e.score is not None]),
                                 SelectionThreshold(threshold, polarity))
    # entries that never got a score were rejected at scoring time
    rejected = list(result.rejected) + [replace(e, verdict=Verdict.REJECTED) for e in unscored]
    save_manifest(result.selected, f"{out_prefix}selected.json")
    save_manifest(DatasetManifest(rejected), f"{out_prefix}rejected.json")
    click.echo(f"selected {len(result.selected)} / rejected {len(rejected)}", err=True)


@main.command("mix")
@click.option("--a", "path_a", required=True, type=click.Path(dir_okay=False))
@click.option("--b", "path_b", required=True, type=click.Path(dir_okay=False))
@click.option("--fraction", default=0.7, show_default=True, type=unit_interval, help="Share drawn from --a.")
@click.option("--size", type=click.IntRange(min=1), help="Mixture size (default: largest feasible).")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@_fatal_errors
def cmd_mix(path_a, path_b, fraction, size, seed, out):
    """Seeded mixture of two manifests (e.g. 70% originals, 30% distorted)."""
    a, b = load_manifest(path_a), load_manifest(path_b)
    out_dir = Path(out).parent
    a = _rebase(a, Path(path_a).parent, out_dir)
    b = _rebase(b, Path(path_b).parent, out_dir)
    save_manifest(mix_manifests(a, b, fraction, seed, size), out)


@main.command("train-quality")
@click.option("--labels", required=True, type=click.Path(dir_okay=False),
              help="CSV with columns image_path,label (paths relative to the CSV).")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--mscn-c", default=DEFAULT_C, show_default=True, type=positive_float)
@_fatal_errors
def cmd_train_quality(labels, out, mscn_c):
    """Fit a linear quality model to labelled images."""
    root = Path(labels).parent
    rows = []
    for i, row in enumerate(read_csv(labels)):
        try:
            path, label = row["image_path"], float(row["label"])
        except (KeyError, ValueError, TypeError) as exc:
            raise MalformedCsv(f"{labels} row {i + 1}: {exc}") from exc
        rows.append((image_features(load_image(resolve(path, root)), mscn_c), label))
    save_quality_model(train_quality_model(rows), out)


@main.command("distort")
@click.argument("in_dir", type=click.Path(file_okay=False, exists=True))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--levels", default=1, show_default=True, type=click.IntRange(min=0))
@_fatal_errors
def cmd_distort(in_dir, out_dir, levels):
    """Degrade every PGM/PPM in IN_DIR by pyramidal down/up-scaling."""
    src = sorted(p for p in Path(in_dir).iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    failed = []
    for p in src:
        dest = Path(out_dir) / p.name
        try:
            img = load_image(p)
            if levels == 0:
                Path(out_dir).mkdir(parents=True, exist_ok=True)
                shutil.copyfile(p, dest)
            else:
                save_image(degrade(img, levels), dest)
        except CurationError as exc:
            click.echo(f"{p.name}: {type(exc).__name__}: {exc}", err=True)
            failed.append(p.name)
    _report_skips(len(failed), "files")


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _manifest_from_dirs(pred_dir: Path, truth_dir: Path) -> DatasetManifest:
    preds = {p.stem: p for p in sorted(pred_dir.iterdir()) if p.suffix.lower() in PRED_SUFFIXES}
    truths = {p.stem: p for p in sorted(truth_dir.iterdir()) if p.suffix.lower() == ".pgm"}
    entries = []
    for stem in sorted(set(preds) | set(truths)):
        pred, truth = preds.get(stem), truths.get(stem)
        entries.append(ManifestEntry(
            id=stem,
            image_path=str(pred or truth),
            pred_path=str(pred) if pred else None,
            mask_path=str(truth) if truth else None,
        ))
    return DatasetManifest(entries)


@main.command("eval")
@click.option("--pred-dir", type=click.Path(file_okay=False, exists=True))
@click.option("--truth-dir", type=click.Path(file_okay=False, exists=True))
@click.option("--manifest", type=click.Path(dir_okay=False), help="Use pred_path/mask_path from a manifest instead.")
@click.option("--threshold", default=0.5, show_default=True, type=unit_interval)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Report JSON.")
@click.option("--per-image", type=click.Path(dir_okay=False), help="Per-image metrics CSV.")
@click.option("--out-manifest", type=click.Path(dir_okay=False), help="Manifest with per-image dice.")
@_fatal_errors
def cmd_eval(pred_dir, truth_dir, manifest, threshold, out, per_image, out_manifest):
    """Dice, precision/recall/F-score and PR-AUC of predictions against masks."""
    if manifest:
        m, root = load_manifest(manifest), Path(manifest).parent
    elif pred_dir and truth_dir:
        m, root = _manifest_from_dirs(Path(pred_dir), Path(truth_dir)), None
    else:
        raise click.UsageError("give --manifest or both --pred-dir and --truth-dir")
    report, scored = evaluate_manifest(m, threshold, root=root)
    save_report(report, out)
    if per_image:
        save_per_image_csv(report, per_image)
    if out_manifest:
        save_manifest(_rebase(scored, root or Path.cwd(), Path(out_manifest).parent), out_manifest)
    _report_skips(report.skipped, "entries", report.skipped_ids)


# ---------------------------------------------------------------------------
# Approach 2
# ---------------------------------------------------------------------------


@main.group("gate")
def gate() -> None:
    """SVM gate over spatially pooled feature maps."""


@gate.command("train")
@click.option("--manifest", required=True, type=click.Path(dir_okay=False),
              help="Test manifest with dice and feature_path on every entry.")
@click.option("--tau", default=DEFAULT_TAU, show_default=True, type=unit_interval)
@click.option("--c-param", default=DEFAULT_C_PARAM, show_default=True, type=positive_float)
@click.option("--levels", default=",".join(map(str, DEFAULT_LEVELS)), show_default=True, callback=_parse_levels)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@_fatal_errors
def cmd_gate_train(manifest, tau, c_param, levels, seed, out):
    """Learn to separate true from false predictions."""
    m = load_manifest(manifest)
    rows = training_rows(m, tau, levels, root=Path(manifest).parent)
    save_svm_model(train_svm(rows, c_param, seed, levels), out)


@gate.command("apply")
@click.option("--model", "model_path", required=True, type=click.Path(dir_okay=False))
@click.option("--manifest", required=True, type=click.Path(dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Gate CSV (id, margin, verdict).")
@click.option("--out-prefix", help="Also write <prefix>selected.json and <prefix>rejected.json.")
@_fatal_errors
def cmd_gate_apply(model_path, manifest, out, out_prefix):
    """Admit new entries the SVM predicts as true predictions."""
    model = load_svm_model(model_path)
    m = load_manifest(manifest)
    result = gate_new_data(model, m, root=Path(manifest).parent, strict_channels=True)
    save_gate_csv(result, m.ids, out)
    if out_prefix:
        root, dest = Path(manifest).parent, _prefix_dir(out_prefix)
        save_manifest(_rebase(result.selected, root, dest), f"{out_prefix}selected.json")
        save_manifest(_rebase(result.rejected, root, dest), f"{out_prefix}rejected.json")
    failed = [e.id for e in result.rejected if e.margin is None]
    _report_skips(len(failed), "entries", failed)


# ---------------------------------------------------------------------------
# fixtures
# ---------------------------------------------------------------------------


@main.command("fixtures")
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--count", default=20, show_default=True, type=click.IntRange(min=1))
@click.option("--size", default=fx.TEXTURE_SIZE, show_default=True, type=click.IntRange(min=fx.TEXTURE_SIZE))
@_fatal_errors
def cmd_fixtures(out_dir, seed, count, size):
    """Generate a seeded synthetic corpus with a manifest."""
    fx.write_corpus(out_dir, seed, count, size)


if __name__ == "__main__":
    main()
