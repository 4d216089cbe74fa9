"""End-to-end acceptance checks, one test per criterion (AC1..AC10).

A summary line per criterion is printed at the end of the run by the
terminal-summary hook in conftest.py.
"""

import math
import time

import numpy as np
import pytest
from click.testing import CliRunner

from driftcurate.brisque import (
    QualityModel,
    fit_aggd,
    fit_ggd,
    image_features,
    import_svr_model,
    load_quality_model,
    mscn,
    save_quality_model,
    score,
    train_quality_model,
)
from driftcurate.cli import main
from driftcurate.core_io import (
    DatasetManifest,
    FeatureMap,
    ManifestEntry,
    Verdict,
    load_image,
    load_manifest,
    read_tensor,
    save_image,
    save_manifest,
    write_tensor,
)
from driftcurate.distort import degrade
from driftcurate.feature_gate import (
    GateLabel,
    gate_new_data,
    load_svm_model,
    save_svm_model,
    spp_pool,
    svm_predict,
    train_svm,
)
from driftcurate.fixtures import entry_rng, make_feature_map, make_texture, write_corpus
from driftcurate.metrics import PredictionRecord, dice, pr_auc, precision_recall_f
from driftcurate.quality_gate import (
    Polarity,
    SelectionThreshold,
    save_scores_csv,
    score_manifest,
    select_by_threshold,
)
from oracles import ggd_samples, oracle_dice, oracle_pr_auc, oracle_prf

pytestmark = pytest.mark.acceptance

TRAIN_SEED, HELD_OUT_SEED = 101, 202


def _trained_quality_model():
    rows = []
    for i in range(40):
        img = make_texture(entry_rng(TRAIN_SEED, i))
        rows.append((image_features(img), 0.0))
        rows.append((image_features(degrade(img, 2)), 100.0))
    return train_quality_model(rows)


@pytest.fixture(scope="module")
def quality_model():
    return _trained_quality_model()


def test_ac01_ggd_recovery():
    for alpha in (0.5, 1.0, 2.0):
        x = ggd_samples(np.random.default_rng(int(alpha * 100)), alpha, 100_000)
        t0 = time.perf_counter()
        fit = fit_ggd(x)
        elapsed = time.perf_counter() - t0
        assert abs(fit.alpha - alpha) <= 0.1 * alpha, (alpha, fit.alpha)
        assert elapsed < 1.0


def test_ac02_aggd_symmetry():
    x = np.random.default_rng(2).standard_normal(100_000)
    a = fit_aggd(x)
    assert 0.95 <= a.sigma_left / a.sigma_right <= 1.05
    assert abs(a.eta) < 0.05
    b = fit_aggd(-x)
    assert b.sigma_left == a.sigma_right and b.sigma_right == a.sigma_left


def test_ac03_mscn_zero_law():
    for value in (0.0, 1.0, 127.5, 255.0):
        for shape in ((2, 2), (7, 13), (64, 64)):
            for c in (0.1, 1.0, 10.0):
                assert np.count_nonzero(mscn(np.full(shape, value), c)) == 0


def test_ac04_distortion_raises_score():
    t0 = time.perf_counter()
    model = _trained_quality_model()
    wins = 0
    for i in range(20):
        img = make_texture(entry_rng(HELD_OUT_SEED, i))
        wins += score(image_features(degrade(img, 2)), model) > score(image_features(img), model)
    elapsed = time.perf_counter() - t0
    print(f"AC4: degraded scored worse in {wins}/20 pairs, {elapsed:.2f}s")
    assert wins >= 18
    assert elapsed < 60.0


def test_ac05_metric_oracles():
    # hand examples, exact
    assert dice(np.array([1, 1, 0, 0]), np.array([1, 0, 0, 0])) == 2 / 3
    p, r, f = precision_recall_f(np.array([1, 1]), np.array([1, 0]))
    assert (p, r) == (0.5, 1.0) and f == 2 * 0.5 / 1.5
    assert precision_recall_f(np.zeros(4), np.array([0, 1, 0, 1])) == (0.0, 0.0, 0.0)
    rng = np.random.default_rng(5)
    for n in range(1, 65):
        for _ in range(6):
            truth = rng.random(n) < rng.uniform(0.1, 0.9)
            if not truth.any():
                truth[rng.integers(n)] = True
            pred = rng.random(n) < 0.5
            if rng.random() < 0.5:
                probs = rng.integers(0, 257, n) / 256
            else:
                probs = rng.random(n)
            assert abs(dice(pred, truth) - oracle_dice(pred.tolist(), truth.tolist())) <= 1e-9
            got = precision_recall_f(pred, truth)
            want = oracle_prf(pred.tolist(), truth.tolist())
            assert max(abs(a - b) for a, b in zip(got, want)) <= 1e-9
            rec = PredictionRecord(probs, truth.astype(int))
            assert abs(pr_auc([rec]) - oracle_pr_auc(probs.tolist(), truth.tolist())) <= 1e-9


def test_ac06_gate_laws():
    rng = np.random.default_rng(6)
    violations = 0
    for case in range(1000):
        n = int(rng.integers(0, 40))
        values = np.round(rng.normal(50, 20, n), int(rng.integers(0, 3))).tolist()
        pol = Polarity.HIGHER_IS_BETTER if case % 2 else Polarity.LOWER_IS_BETTER
        pool = values + [50.0]
        t = float(rng.choice(pool)) if rng.random() < 0.5 else float(rng.normal(50, 25))
        t2 = t + abs(float(rng.normal(0, 10)))
        m = DatasetManifest([ManifestEntry(id=f"e{i}", image_path="x", score=v) for i, v in enumerate(values)])
        lo = select_by_threshold(m, SelectionThreshold(t, pol))
        hi = select_by_threshold(m, SelectionThreshold(t2, pol))
        for res, tt in ((lo, t), (hi, t2)):
            ids = res.selected.ids + res.rejected.ids
            if sorted(ids) != sorted(m.ids) or len(set(ids)) != len(ids):
                violations += 1
            ok = (lambda s: s >= tt) if pol is Polarity.HIGHER_IS_BETTER else (lambda s: s <= tt)
            violations += sum(not ok(e.score) for e in res.selected)
            violations += sum(ok(e.score) for e in res.rejected)
        a, b = set(lo.selected.ids), set(hi.selected.ids)
        violations += not (a <= b if pol is Polarity.LOWER_IS_BETTER else b <= a)
    assert violations == 0


def _percentile_run(tmp_path, model):
    corpus = tmp_path / "corpus"
    manifest = write_corpus(corpus, seed=7, count=20)
    entries = []
    for e in manifest:
        out = f"degraded/{e.id}.ppm"
        save_image(degrade(load_image(corpus / e.image_path), 2), corpus / out)
        entries.append(ManifestEntry(id=e.id, image_path=out))
    scored = score_manifest(DatasetManifest(entries), model, root=corpus)
    save_scores_csv(scored, tmp_path / "scores.csv")
    values = [e.score for e in scored]
    t = float(np.percentile(values, 60))
    res = select_by_threshold(scored, SelectionThreshold(t, Polarity.LOWER_IS_BETTER))
    save_manifest(res.selected, tmp_path / "selected.json")
    return values, [e.score for e in res.selected]


def test_ac07_percentile_selection_workflow(tmp_path, quality_model):
    values, selected = _percentile_run(tmp_path / "a", quality_model)
    assert len(values) == 20 and all(v is not None for v in values)
    assert 0 < len(selected) < 20
    assert np.mean(selected) < np.mean(values)
    again_values, again_selected = _percentile_run(tmp_path / "b", quality_model)
    assert again_values == values and again_selected == selected
    for name in ("scores.csv", "selected.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_ac08_spp_svm_gate(tmp_path):
    def maps(seed, n):
        return [(make_feature_map(entry_rng(seed, i), i % 2 == 0), i % 2 == 0) for i in range(n)]

    train = maps(808, 40)
    rows = [(spp_pool(f), GateLabel.POSITIVE if pos else GateLabel.NEGATIVE) for f, pos in train]
    t0 = time.perf_counter()
    model = train_svm(rows, c_param=1.0, seed=0)
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    assert all(svm_predict(model, v)[0] is lab for v, lab in rows)

    entries, truth = [], {}
    for i, (fmap, pos) in enumerate(maps(909, 20)):
        write_tensor(fmap, tmp_path / f"t{i}.ften")
        entries.append(ManifestEntry(id=f"t{i}", image_path=f"t{i}.ppm", feature_path=f"t{i}.ften"))
        truth[f"t{i}"] = pos
    res = gate_new_data(model, DatasetManifest(entries), root=tmp_path)
    right = sum(truth[e.id] for e in res.selected) + sum(not truth[e.id] for e in res.rejected)
    assert right >= 18


def test_ac09_cli_determinism(tmp_path, quality_model):
    runner = CliRunner()

    def invoke(*args):
        res = runner.invoke(main, [str(a) for a in args])
        assert res.exit_code == 0, res.output

    for run in ("r1", "r2"):
        invoke("fixtures", tmp_path / run / "corpus", "--seed", 11, "--count", 6)
    files1 = sorted(p.relative_to(tmp_path / "r1") for p in (tmp_path / "r1").rglob("*") if p.is_file())
    files2 = sorted(p.relative_to(tmp_path / "r2") for p in (tmp_path / "r2").rglob("*") if p.is_file())
    assert files1 == files2 and len(files1) == 4 * 6 + 2
    for rel in files1:
        assert (tmp_path / "r1" / rel).read_bytes() == (tmp_path / "r2" / rel).read_bytes()

    corpus = tmp_path / "r1" / "corpus"
    save_quality_model(quality_model, tmp_path / "q.json")
    for run in ("s1", "s2"):
        invoke("score", "--manifest", corpus / "manifest.json", "--model", tmp_path / "q.json",
               "--out", tmp_path / run / "scores.csv", "--bins", 5)
    for name in ("scores.csv", "scores.json", "scores.hist.csv"):
        assert (tmp_path / "s1" / name).read_bytes() == (tmp_path / "s2" / name).read_bytes()

    invoke("eval", "--manifest", corpus / "manifest.json", "--out", tmp_path / "rep.json",
           "--out-manifest", corpus / "evald.json")
    for run in ("g1", "g2"):
        invoke("gate", "train", "--manifest", corpus / "evald.json", "--seed", 3,
               "--out", tmp_path / run / "svm.json")
    assert (tmp_path / "g1" / "svm.json").read_bytes() == (tmp_path / "g2" / "svm.json").read_bytes()


def _second_write_identical(path, save, load, value):
    save(value, path)
    first = path.read_bytes()
    again = load(path)
    save(again, path)
    assert path.read_bytes() == first
    return again


def test_ac10_format_round_trips(tmp_path, quality_model):
    rng = np.random.default_rng(10)
    fmap = FeatureMap(rng.normal(size=(3, 4, 5)))
    back = _second_write_identical(tmp_path / "t.ften", write_tensor, read_tensor, fmap)
    assert back == fmap

    manifest = DatasetManifest([
        ManifestEntry(id="a", image_path="a.ppm", mask_path="a.pgm", dice=0.25),
        ManifestEntry(id="b", image_path="b.ppm", score=0.1 + 0.2, verdict=Verdict.REJECTED, reason="R: x"),
        ManifestEntry(id="c", image_path="c.ppm", feature_path="c.ften", margin=-1e-17),
    ])
    assert _second_write_identical(tmp_path / "m.json", save_manifest, load_manifest, manifest) == manifest

    rbf = QualityModel(kind="rbf_svr", feature_lo=rng.uniform(-2, -1, 36), feature_hi=rng.uniform(1, 2, 36),
                       gamma=0.05, rho=-1.25, sv_coef=[0.5, -2.0], support_vectors=rng.uniform(-1, 1, (2, 36)))
    for i, m in enumerate((quality_model, rbf)):
        got = _second_write_identical(tmp_path / f"q{i}.json", save_quality_model, load_quality_model, m)
        f = rng.normal(size=36)
        assert score(f, got) == score(f, m)

    rows = [(spp_pool(make_feature_map(entry_rng(1, i), i % 2 == 0)),
             GateLabel.POSITIVE if i % 2 == 0 else GateLabel.NEGATIVE) for i in range(10)]
    svm = train_svm(rows, seed=4)
    got = _second_write_identical(tmp_path / "svm.json", save_svm_model, load_svm_model, svm)
    assert got.weights.tobytes() == svm.weights.tobytes()

    (tmp_path / "svr.txt").write_text(
        "svm_type epsilon_svr\nkernel_type rbf\ngamma 0.25\nnr_class 2\ntotal_sv 1\nrho -0.5\nSV\n"
        "1.75 1:0.2 3:-0.4 36:1\n"
    )
    (tmp_path / "range.txt").write_text("x\n-1 1\n" + "".join(f"{k} -4 4\n" for k in range(1, 37)))
    model = import_svr_model(tmp_path / "svr.txt", tmp_path / "range.txt")
    f = np.zeros(36)
    f[0], f[2], f[35] = 2.0, -4.0, 4.0
    # scaled: f/4 -> 0.5, -1, 1 at indices 0, 2, 35; sv: 0.2, -0.4, 1
    d2 = (0.5 - 0.2) ** 2 + (-1.0 + 0.4) ** 2 + (1.0 - 1.0) ** 2
    expected = 1.75 * math.exp(-0.25 * d2) + 0.5
    assert abs(score(f, model) - expected) < 1e-9
