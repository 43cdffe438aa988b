"""Acceptance gate: ten end-to-end checkpoints over the shipped guarantees.

Each test emits exactly one ``ACCEPTANCE <n> PASS`` or ``ACCEPTANCE <n> FAIL``
line (printed outside pytest's capture, so the lines are always visible).
The checkpoints cover, in order:

 1. rank-based AUC agrees with a trapezoidal ROC-area oracle,
 2. the Youden threshold is exhaustive-scan optimal (tie rule included),
 3. confusion-matrix metrics match an exact rational-arithmetic oracle,
 4. the elastic net matches a brute-force optimizer and descends monotonically,
 5. aggregation invariants (stable columns, frozen block, streaming oracle),
 6. sigmoid recalibration restores the calibration slope without moving AUC,
 7. the full pipeline recovers a planted signal and stays at chance on noise,
 8. source-threshold transfer over-flags and prevalence matching restores it,
 9. a same-seed rerun of the whole pipeline is byte-identical on disk,
10. the full hyperparameter preset instantiates the documented cardinalities.
"""
import statistics
import time
from contextlib import contextmanager
from fractions import Fraction
from math import inf, isnan, log

import numpy as np
import pytest
from scipy.optimize import minimize

from earlywarn.aggregate import aggregate
from earlywarn.calibration import (
    apply_platt,
    calibration_curve,
    fit_platt,
    is_monotone,
    log_loss,
)
from earlywarn.features import WeeklyFeatures, weekly_feature_ids
from earlywarn.learners import hyper_grid
from earlywarn.learners.elastic_net import fit_elastic_net, predict_proba
from earlywarn.metrics import (
    ConfusionMatrix,
    auc_rank,
    auc_score,
    metrics_from_confusion,
    score_predictions,
    stratified_kfold,
    youden_threshold,
)
from earlywarn.synthgen import CohortSpec, generate_cohort, generate_paired_courses
from earlywarn.transfer import (
    ExperimentPlan,
    build_manifest,
    course_data_from_synth,
    run_experiment,
    write_outputs,
)
from earlywarn.tuning import grid_search_cv


@contextmanager
def checkpoint(n: int):
    """Print the one-line verdict for acceptance checkpoint ``n``."""
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {n} FAIL", flush=True)
        raise
    print(f"ACCEPTANCE {n} PASS", flush=True)


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=float)))


# ------------------------------------------------- 1: AUC vs. ROC area

def roc_area_oracle(pos: np.ndarray, neg: np.ndarray) -> float:
    """Tie-aware ROC polygon area by trapezoid integration."""
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    tpr = np.concatenate([[0.0], (pos[None, :] >= thresholds[:, None]).mean(axis=1)])
    fpr = np.concatenate([[0.0], (neg[None, :] >= thresholds[:, None]).mean(axis=1)])
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1])) / 2.0)


def test_01_rank_auc_matches_roc_area_oracle(capsys):
    with capsys.disabled(), checkpoint(1):
        rng = np.random.default_rng(101)
        t0 = time.perf_counter()
        for trial in range(1000):
            n_pos = int(rng.integers(1, 101))
            n_neg = int(rng.integers(1, 101))
            if trial % 2:  # coarse grid forces plenty of exact ties
                pos = rng.integers(0, 25, n_pos) / 24.0
                neg = rng.integers(0, 25, n_neg) / 24.0
            else:
                pos = rng.random(n_pos)
                neg = rng.random(n_neg)
            assert abs(auc_rank(pos, neg) - roc_area_oracle(pos, neg)) <= 1e-12
        assert time.perf_counter() - t0 < 10.0


# ------------------------------------------- 2: Youden scan optimality

def youden_scan_oracle(probs: np.ndarray, labels: np.ndarray):
    """Exhaustive scan over midpoints plus both endpoints; first max wins."""
    uniq = np.unique(probs)
    cands = np.unique(np.concatenate([[0.0], (uniq[:-1] + uniq[1:]) / 2.0, [1.0]]))
    pos = probs[labels == 1.0]
    neg = probs[labels == 0.0]
    tp = (pos[None, :] >= cands[:, None]).sum(axis=1)
    tn = (neg[None, :] < cands[:, None]).sum(axis=1)
    j = tp / len(pos) + tn / len(neg) - 1.0
    best = int(np.argmax(j))  # first occurrence = smallest threshold
    return float(cands[best]), float(j[best])


def test_02_youden_threshold_is_scan_optimal(capsys):
    with capsys.disabled(), checkpoint(2):
        rng = np.random.default_rng(202)
        t0 = time.perf_counter()
        done = 0
        while done < 1000:
            n = int(rng.integers(4, 120))
            labels = (rng.random(n) < rng.uniform(0.2, 0.8)).astype(float)
            if labels.min() == labels.max():
                continue
            if done % 2:
                probs = rng.integers(0, 13, n) / 12.0
            else:
                probs = rng.random(n)
            thr = youden_threshold(probs, labels)
            want_t, want_j = youden_scan_oracle(probs, labels)
            assert thr.value == want_t  # tie rule: smallest optimal threshold
            report = score_predictions(labels, probs, thr)
            assert report.sens + report.spec - 1.0 == want_j
            done += 1
        assert time.perf_counter() - t0 < 10.0


# -------------------------------------- 3: confusion metrics, rationals

def rational_report(tp: int, fp: int, fn: int, tn: int):
    n = tp + fp + fn + tn
    acc = Fraction(tp + tn, n)
    sens = Fraction(tp, tp + fn) if tp + fn else None
    spec = Fraction(tn, tn + fp) if tn + fp else None
    f1 = Fraction(2 * tp, 2 * tp + fp + fn) if (tp + fp and tp + fn) else None
    margin = (tp + fn) * (tp + fp) + (fp + tn) * (fn + tn)
    denom = n * n - margin
    kappa = Fraction(n * (tp + tn) - margin, denom) if denom else Fraction(0)
    return acc, sens, spec, f1, kappa


def test_03_confusion_metrics_match_exact_rationals(capsys):
    with capsys.disabled(), checkpoint(3):
        rng = np.random.default_rng(303)
        cases = [  # degenerate shapes that exercise every sentinel branch
            (0, 0, 0, 7), (5, 0, 0, 0), (0, 3, 0, 0), (0, 0, 4, 0),
            (2, 0, 3, 0), (0, 2, 0, 5), (1, 1, 1, 1),
        ]
        while len(cases) < 500:
            tp, fp, fn, tn = (int(v) for v in rng.integers(0, 30, 4))
            if tp + fp + fn + tn:
                cases.append((tp, fp, fn, tn))
        for tp, fp, fn, tn in cases:
            rep = metrics_from_confusion(ConfusionMatrix(tp, fp, fn, tn))
            acc, sens, spec, f1, kappa = rational_report(tp, fp, fn, tn)
            assert rep.acc == float(acc)
            for got, want in ((rep.sens, sens), (rep.spec, spec), (rep.f1, f1)):
                if want is None:
                    assert isnan(got)
                else:
                    assert got == float(want)
            assert rep.kappa == float(kappa)
            assert (rep.kappa < 0) == (kappa < 0)
            assert (rep.kappa > 0) == (kappa > 0)
            assert rep.n_flagged == tp + fp


# -------------------------------------- 4: elastic net vs. brute force

def penalized_objective(w, Z, y, alpha, lam) -> float:
    f = w[0] + Z @ w[1:]
    sign = 1.0 - 2.0 * y
    loss = float(np.mean(np.logaddexp(0.0, sign * f)))
    pen = lam * (alpha * np.abs(w[1:]).sum() + 0.5 * (1 - alpha) * (w[1:] ** 2).sum())
    return loss + pen


def zscore(X):
    mu, sd = X.mean(axis=0), X.std(axis=0)
    return (X - mu) / np.where(sd > 0, sd, 1.0)


def two_feature_dataset(rng, n=30):
    X = rng.normal(size=(n, 2))
    w = rng.normal(size=2)
    y = (rng.random(n) < sigmoid(X @ w)).astype(float)
    if y.min() == y.max():
        y[0] = 1.0 - y[0]
    return X, y


def test_04_elastic_net_matches_brute_force_oracle(capsys):
    with capsys.disabled(), checkpoint(4):
        rng = np.random.default_rng(404)
        for _ in range(100):
            X, y = two_feature_dataset(rng)
            alpha = float(rng.choice([0.0, 0.25, 0.5, 0.75, 1.0]))
            lam = float(10.0 ** rng.uniform(-3, 1))
            model = fit_elastic_net(X, y, alpha, lam)
            Z = zscore(X)
            ours = np.array([model.intercept, *model.coef])
            best = None
            for start in (np.zeros(3), ours, np.array([0.5, -0.5, 0.5])):
                res = minimize(
                    penalized_objective, start, args=(Z, y, alpha, lam),
                    method="Powell",
                    options={"xtol": 1e-10, "ftol": 1e-13, "maxiter": 20000},
                )
                if best is None or res.fun < best.fun:
                    best = res
            assert penalized_objective(ours, Z, y, alpha, lam) <= best.fun + 1e-9
            oracle_probs = sigmoid(best.x[0] + Z @ best.x[1:])
            np.testing.assert_allclose(
                predict_proba(model, X), oracle_probs, atol=5e-3, rtol=0
            )

        # committed sweeps never raise the objective
        X, y = two_feature_dataset(rng, n=30)
        alpha, lam = 0.5, 0.01
        Z = zscore(X)
        full = fit_elastic_net(X, y, alpha, lam)
        prev = inf
        for budget in range(1, min(full.n_sweeps, 40) + 1):
            m = fit_elastic_net(X, y, alpha, lam, max_sweeps=budget)
            obj = penalized_objective(np.array([m.intercept, *m.coef]), Z, y, alpha, lam)
            assert obj <= prev + 1e-10
            prev = obj

        # full-shrinkage limit: all-zero slopes, base-rate intercept
        for alpha in (0.25, 1.0):
            m = fit_elastic_net(X, y, alpha, 1000.0)
            assert np.all(m.coef == 0.0)
            ybar = y.mean()
            assert m.intercept == pytest.approx(log(ybar / (1.0 - ybar)), abs=1e-6)


# --------------------------------------------- 5: aggregation invariants

def welford(block: np.ndarray):
    """Streaming mean/sample-SD over the week axis of (students, weeks, feats)."""
    n_weeks = block.shape[1]
    mean = np.zeros((block.shape[0], block.shape[2]))
    m2 = np.zeros_like(mean)
    for i in range(n_weeks):
        row = block[:, i, :]
        delta = row - mean
        mean = mean + delta / (i + 1)
        m2 = m2 + delta * (row - mean)
    sd = np.sqrt(m2 / (n_weeks - 1)) if n_weeks > 1 else np.zeros_like(mean)
    return mean, sd


def test_05_aggregation_invariants_hold(capsys):
    with capsys.disabled(), checkpoint(5):
        fids = weekly_feature_ids(True)
        rng = np.random.default_rng(505)
        sids = tuple(f"s{i}" for i in range(8))
        weekly = WeeklyFeatures(sids, 12, fids, rng.random((8, 12, len(fids))))

        # progressive: identical column layout for every prediction week,
        # values equal to a streaming recompute
        cols = aggregate(weekly, 1, "progressive").columns
        assert len(cols) == 2 * len(fids)
        for k in range(1, 13):
            table = aggregate(weekly, k, "progressive")
            assert table.columns == cols
            mean, sd = welford(weekly.values[:, :k, :])
            np.testing.assert_allclose(table.values[:, 0::2], mean, atol=1e-12, rtol=0)
            np.testing.assert_allclose(table.values[:, 1::2], sd, atol=1e-12, rtol=0)

        # early reset: the frozen early-term block is byte-identical for
        # every week from the reset on; the restarted block matches a
        # streaming recompute over the restarted window
        base = aggregate(weekly, 5, "early_reset")
        n_frozen = sum(c.startswith("frozen.") for c in base.columns)
        assert n_frozen == 2 * len(fids)
        frozen_bytes = base.values[:, :n_frozen].tobytes()
        keep = [j for j, fid in enumerate(fids) if not fid.family.value.startswith("per")]
        for k in range(5, 13):
            table = aggregate(weekly, k, "early_reset")
            assert table.columns == base.columns
            assert table.values[:, :n_frozen].tobytes() == frozen_bytes
            rmean, rsd = welford(weekly.values[:, 4:k, keep])
            reset = table.values[:, n_frozen:]
            np.testing.assert_allclose(reset[:, 0::2], rmean, atol=1e-12, rtol=0)
            np.testing.assert_allclose(reset[:, 1::2], rsd, atol=1e-12, rtol=0)


# --------------------------------------- 6: recalibration moves the slope

def test_06_platt_restores_calibration_slope(capsys):
    with capsys.disabled(), checkpoint(6):
        rng = np.random.default_rng(606)
        n = 2000
        z = rng.normal(size=n)
        labels = (rng.random(n) < sigmoid(z)).astype(float)
        raw = sigmoid(2.5 * z)  # overconfident: logits stretched 2.5x

        before = calibration_curve(raw, labels)
        assert before.slope < 0.8
        params = fit_platt(raw, labels)
        assert params.converged and is_monotone(params)
        fixed = apply_platt(params, raw)
        after = calibration_curve(fixed, labels)
        assert 0.8 <= after.slope <= 1.2
        assert abs(auc_score(labels, fixed) - auc_score(labels, raw)) <= 1e-12
        assert log_loss(fixed, labels) <= log_loss(raw, labels) + 1e-12


# ------------------------------------------- 7: pipeline signal recovery

def in_sample_auc_strong_cohort(seed: int) -> float:
    spec = CohortSpec(
        course_id=f"sig-{seed}", n_students=500, template="weekly",
        target_prevalence=0.5, beta_engagement=1.2, beta_timing=1.2,
        noise_sd=0.4, seed=seed, n_weeks=4,
    )
    data = course_data_from_synth(generate_cohort(spec))
    plan = ExperimentPlan(
        reference=spec.course_id, targets=(), weeks=(4,),
        learners=("elastic_net",), strategies=("progressive",),
        seed=seed, grid_preset="small",
    )
    result = run_experiment({spec.course_id: data}, plan)
    assert not result.failures
    (row,) = result.rows
    return row.report.auc


def tuned_oof_auc_null_cohort(seed: int) -> float:
    spec = CohortSpec(
        course_id=f"null-{seed}", n_students=500, template="weekly",
        target_prevalence=0.5, beta_engagement=0.0, beta_timing=0.0,
        noise_sd=3.0, seed=seed, n_weeks=4,
    )
    data = course_data_from_synth(generate_cohort(spec))
    weekly = data.weekly
    # drop correctness/points families: with zero behavioral effect they are
    # the only remaining (ability-mediated) link between features and grades
    keep = [
        j for j, fid in enumerate(weekly.feature_ids)
        if not fid.family.value.startswith("per")
    ]
    filtered = WeeklyFeatures(
        weekly.student_ids, weekly.n_weeks,
        tuple(weekly.feature_ids[j] for j in keep),
        weekly.values[:, :, keep],
    )
    table = aggregate(filtered, 4, "progressive")
    y = data.label_vector(table.student_ids)
    folds = stratified_kfold(y, 10, seed, table.student_ids)
    result = grid_search_cv(
        table.values, y, "elastic_net", hyper_grid("small"), folds, seed,
        feature_names=table.columns,
    )
    return result.best_cv_auc


def test_07_pipeline_recovers_planted_signal_and_stays_at_chance_on_noise(capsys):
    with capsys.disabled(), checkpoint(7):
        t0 = time.perf_counter()
        strong = [in_sample_auc_strong_cohort(seed) for seed in range(10)]
        assert statistics.median(strong) >= 0.80
        for seed in (100, 101, 102):
            assert 0.4 <= tuned_oof_auc_null_cohort(seed) <= 0.6
        assert time.perf_counter() - t0 < 300.0


# --------------------------------- 8: threshold transfer under base-rate shift

def test_08_threshold_transfer_over_flags_then_prevalence_restores(capsys):
    with capsys.disabled(), checkpoint(8):
        source = CohortSpec(
            course_id="src-a", n_students=100, template="weekly",
            target_prevalence=0.56, beta_engagement=0.8, beta_timing=0.5,
            noise_sd=1.0, seed=31, n_weeks=4,
        )
        target = CohortSpec(
            course_id="tgt-b", n_students=100, template="weekly",
            target_prevalence=0.14, beta_engagement=0.8, beta_timing=0.5,
            noise_sd=1.0, seed=32, n_weeks=4,
        )
        course_a, course_b = generate_paired_courses(source, target)
        courses = {
            "src-a": course_data_from_synth(course_a),
            "tgt-b": course_data_from_synth(course_b),
        }
        plan = ExperimentPlan(
            reference="src-a", targets=("tgt-b",), weeks=(4,),
            learners=("elastic_net",), strategies=("progressive",),
            seed=17, grid_preset="small",
        )
        result = run_experiment(courses, plan)
        assert not result.failures
        rows = {r.policy: r for r in result.rows if r.target == "tgt-b"}
        n = target.n_students

        # (a) the ranking is policy-independent: identical AUC, exactly
        assert (
            rows["youden_source"].report.auc
            == rows["prevalence_target"].report.auc
        )
        # (b) reusing the source-tuned threshold over-flags the low-base-rate
        # course by more than double its true at-risk fraction
        assert rows["youden_source"].report.n_flagged / n > 2 * 0.14
        # (c) matching the target's known prevalence restores the flag rate
        assert abs(rows["prevalence_target"].report.n_flagged / n - 0.14) <= 0.03


# ----------------------------------------------- 9: byte-level determinism

def run_paired_pipeline(out_dir) -> None:
    source = CohortSpec(
        course_id="det-a", n_students=120, template="weekly",
        target_prevalence=0.56, beta_engagement=1.0, beta_timing=0.6,
        noise_sd=0.8, seed=41, n_weeks=6,
    )
    target = CohortSpec(
        course_id="det-b", n_students=120, template="biweekly",
        target_prevalence=0.14, beta_engagement=1.0, beta_timing=0.6,
        noise_sd=0.8, seed=42, slide_forum_available=False, n_weeks=6,
    )
    course_a, course_b = generate_paired_courses(source, target)
    courses = {
        "det-a": course_data_from_synth(course_a),
        "det-b": course_data_from_synth(course_b),
    }
    plan = ExperimentPlan(
        reference="det-a", targets=("det-b",), weeks=(3, 6),
        seed=9, grid_preset="small",
    )
    result = run_experiment(courses, plan)
    assert result.rows
    write_outputs(result, out_dir, build_manifest(courses, plan))


def test_09_same_seed_rerun_is_byte_identical(capsys, tmp_path):
    with capsys.disabled(), checkpoint(9):
        t0 = time.perf_counter()
        run_paired_pipeline(tmp_path / "run1")
        run_paired_pipeline(tmp_path / "run2")

        files1 = sorted(
            p.relative_to(tmp_path / "run1")
            for p in (tmp_path / "run1").rglob("*") if p.is_file()
        )
        files2 = sorted(
            p.relative_to(tmp_path / "run2")
            for p in (tmp_path / "run2").rglob("*") if p.is_file()
        )
        assert files1 == files2
        basenames = {p.name for p in files1}
        assert {"results.csv", "importance.csv", "manifest.json"} <= basenames
        for rel in files1:
            assert (tmp_path / "run1" / rel).read_bytes() == (
                tmp_path / "run2" / rel
            ).read_bytes(), f"byte mismatch in {rel}"
        assert time.perf_counter() - t0 < 600.0


# --------------------------------------------- 10: search-space cardinality

def test_10_full_grid_preset_instantiates_documented_cardinalities(capsys):
    with capsys.disabled(), checkpoint(10):
        grid = hyper_grid("paper")
        assert grid.alphas == tuple(i / 10 for i in range(11))
        assert len(grid.alphas) == 11
        assert len(grid.lambdas) == 100
        np.testing.assert_allclose(
            grid.lambdas, np.logspace(-3.0, 3.0, 100), rtol=1e-12, atol=0
        )
        assert grid.forest_min_node_sizes == (10, 12, 15, 17, 20, 23, 25, 30)
        assert grid.forest_n_trees == (500, 1000, 2000)
        assert grid.forest_mtry_full is True
        assert grid.mtry_candidates(98) == (5, 6, 7, 8, 9, 10, 11, 12, 13, 22, 27)
        assert grid.boost_max_depths == tuple(range(3, 11))
        for values, (lo, hi) in (
            (grid.boost_min_child_weights, (1.0, 10.0)),
            (grid.boost_subsamples, (0.5, 1.0)),
            (grid.boost_colsamples, (0.5, 1.0)),
        ):
            assert len(values) == 8
            np.testing.assert_allclose(values, np.linspace(lo, hi, 8), rtol=1e-12)
        assert grid.boost_n_rounds == 200
