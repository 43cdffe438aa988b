"""Experiment orchestration: weekly in-course models and course transfer.

Phase one trains one model per (week, learner, strategy) cell on the
reference course: aggregate weekly features up to the week, screen
collinear columns (on the reference course only), grid-search
hyperparameters with stratified cross-validation, refit on all rows, pick
the Youden operating threshold from the refit's own predictions, and fit a
sigmoid recalibrator on the pooled out-of-fold predictions.

Phase two applies each fitted cell to every target course.  Feature
schemas are aligned by intersection; when the target lacks columns the
model is retrained on the source at the shared schema with the same tuned
hyperparameters (never re-tuned).  Two threshold policies are evaluated:
``youden_source`` reuses the source-derived threshold, ``prevalence_target``
cuts at the quantile matching the target's observed at-risk fraction.
Both score the same probabilities, so AUC is identical across policies.

Cell failures are recorded and the run continues; the caller decides how
many failures are tolerable.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .aggregate import aggregate
from .calibration import (
    CalibrationCurve,
    PlattParams,
    apply_platt,
    brier_score,
    calibration_curve,
    fit_platt,
    log_loss,
)
from .errors import (
    ConfigError,
    EarlywarnError,
    FitError,
    MetricUndefinedError,
    ParameterError,
    SchemaError,
)
from .features import (
    REPLICATION_EXCLUSIONS,
    DropReport,
    WeeklyFeatures,
    extract_weekly_features,
    screen_collinear,
)
from .learners import (
    LEARNER_KINDS,
    BoostParams,
    ForestParams,
    fit_elastic_net,
    fit_gbt,
    fit_probability_forest,
    hyper_grid,
    importance as learner_importance,
    model_to_dict,
    predict_proba,
)
from .metrics import (
    FoldPlan,
    MetricReport,
    Threshold,
    prevalence_threshold,
    score_predictions,
    single_class_warning,
    stratified_kfold,
    youden_threshold,
)
from .tables import (
    atomic_write_text,
    canonical_json,
    derive_seed,
    format_value,
    sha256_hex,
    write_delimited,
)
from .trace import CourseConfig, config_to_dict
from .tuning import GridSearchResult, grid_search_cv

STRATEGIES = ("progressive", "early_reset")
POLICIES = ("youden_source", "prevalence_target")

RESULT_COLUMNS = (
    "reference", "target", "week", "learner", "strategy", "policy",
    "auc", "acc", "sens", "spec", "f1", "kappa", "threshold", "n_flagged",
)


@dataclass(frozen=True)
class CourseData:
    """One course ready for modeling: weekly features, labels, config."""

    course_id: str
    weekly: WeeklyFeatures
    labels: dict[str, bool]
    config: CourseConfig

    def __post_init__(self):
        missing = [s for s in self.weekly.student_ids if s not in self.labels]
        if missing:
            raise ConfigError(
                f"{self.course_id}: {len(missing)} students lack labels "
                f"(first: {missing[0]!r})"
            )

    def label_vector(self, student_ids) -> np.ndarray:
        return np.array(
            [1.0 if self.labels[s] else 0.0 for s in student_ids], dtype=float
        )


def course_data_from_synth(course) -> CourseData:
    """Adapt a generated cohort (synthgen.SynthCourse) for the pipeline."""
    weekly = extract_weekly_features(
        course.events, course.config, roster=sorted(course.grades)
    )
    return CourseData(
        course_id=course.config.course_id,
        weekly=weekly,
        labels=course.labels(),
        config=course.config,
    )


@dataclass(frozen=True)
class ExperimentPlan:
    reference: str
    targets: tuple[str, ...] = ()
    weeks: tuple[int, ...] = tuple(range(1, 13))
    learners: tuple[str, ...] = LEARNER_KINDS
    strategies: tuple[str, ...] = STRATEGIES
    policies: tuple[str, ...] = POLICIES
    seed: int = 0
    grid_preset: str = "paper"
    replication_screening: bool = False
    jobs: int = 1

    def __post_init__(self):
        if not self.reference:
            raise ConfigError("reference course required")
        if self.reference in self.targets:
            raise ConfigError("reference cannot be one of its own targets")
        if len(set(self.targets)) != len(self.targets):
            raise ConfigError("duplicate target course")
        if not self.weeks or any(w < 1 for w in self.weeks):
            raise ConfigError("weeks must be a nonempty list of values >= 1")
        if len(set(self.weeks)) != len(self.weeks):
            raise ConfigError("duplicate week")
        for learner in self.learners:
            if learner not in LEARNER_KINDS:
                raise ConfigError(f"unknown learner {learner!r}")
        if not self.learners:
            raise ConfigError("at least one learner required")
        for strategy in self.strategies:
            if strategy not in STRATEGIES:
                raise ConfigError(f"unknown strategy {strategy!r}")
        if not self.strategies:
            raise ConfigError("at least one strategy required")
        for policy in self.policies:
            if policy not in POLICIES:
                raise ConfigError(f"unknown policy {policy!r}")
        if not self.policies:
            raise ConfigError("at least one policy required")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def cell_keys(self) -> list[tuple[int, str, str]]:
        return [
            (week, learner, strategy)
            for week in self.weeks
            for strategy in self.strategies
            for learner in self.learners
        ]


@dataclass(frozen=True)
class SchemaAlignment:
    shared: tuple[str, ...]  # in source-model column order
    dropped_from_source: tuple[str, ...]
    dropped_from_target: tuple[str, ...]


def align_schemas(source_columns, target_columns) -> SchemaAlignment:
    target_set = set(target_columns)
    source_set = set(source_columns)
    return SchemaAlignment(
        shared=tuple(c for c in source_columns if c in target_set),
        dropped_from_source=tuple(c for c in source_columns if c not in target_set),
        dropped_from_target=tuple(c for c in target_columns if c not in source_set),
    )


@dataclass(frozen=True)
class FittedCell:
    """One trained (week, learner, strategy) cell on the reference course."""

    course_id: str
    week: int
    learner: str
    strategy: str
    columns: tuple[str, ...]
    drop_report: DropReport
    folds: FoldPlan
    grid_result: GridSearchResult
    threshold: Threshold
    platt: PlattParams | None
    platt_note: str | None
    report: MetricReport
    probs: np.ndarray
    labels: np.ndarray
    student_ids: tuple[str, ...]

    @property
    def model(self):
        return self.grid_result.model


@dataclass(frozen=True)
class CellFailure:
    stage: str
    course_id: str
    week: int
    learner: str
    strategy: str
    target: str
    message: str
    fatal: bool = True


@dataclass(frozen=True)
class ResultRow:
    reference: str
    target: str
    week: int
    learner: str
    strategy: str
    policy: str
    report: MetricReport

    def sort_key(self):
        return (
            self.reference, self.target, self.week,
            self.learner, self.strategy, self.policy,
        )

    def cells(self) -> tuple[str, ...]:
        r = self.report
        return (
            self.reference, self.target, str(self.week), self.learner,
            self.strategy, self.policy, format_value(r.auc),
            format_value(r.acc), format_value(r.sens), format_value(r.spec),
            format_value(r.f1), format_value(r.kappa),
            format_value(r.threshold), str(r.n_flagged),
        )


@dataclass(frozen=True)
class CalibrationRecord:
    reference: str
    target: str
    week: int
    learner: str
    strategy: str
    stage: str  # "raw" or "platt"
    slope: float
    intercept: float
    brier: float
    logloss: float
    platt_a: float
    platt_b: float
    curve: CalibrationCurve | None


def _fit_cell_platt(result: GridSearchResult, y: np.ndarray):
    mask = result.oof_mask
    oof, ym = result.oof_probs[mask], y[mask]
    if ym.size == 0 or ym.min() == ym.max():
        return None, "pooled out-of-fold predictions cover a single class"
    try:
        return fit_platt(oof, ym), None
    except (FitError, ParameterError) as exc:
        return None, str(exc)


def _fit_cell(
    course: CourseData,
    plan: ExperimentPlan,
    folds: FoldPlan,
    week: int,
    learner: str,
    strategy: str,
):
    try:
        table = aggregate(course.weekly, week, strategy)
        forced = REPLICATION_EXCLUSIONS if plan.replication_screening else None
        screened = screen_collinear(table, forced_exclusions=forced)
        table = screened.table
        if not table.columns:
            return CellFailure(
                "screen", course.course_id, week, learner, strategy, "",
                "no usable features after screening",
            )
        y = course.label_vector(table.student_ids)
        seed = derive_seed(
            plan.seed, "tune", course.course_id, week, learner, strategy
        )
        result = grid_search_cv(
            table.values, y, learner, hyper_grid(plan.grid_preset), folds,
            seed, feature_names=table.columns,
        )
        probs = predict_proba(result.model, table.values)
        threshold = youden_threshold(probs, y)
        report = score_predictions(y, probs, threshold)
        platt, platt_note = _fit_cell_platt(result, y)
        return FittedCell(
            course_id=course.course_id,
            week=week,
            learner=learner,
            strategy=strategy,
            columns=table.columns,
            drop_report=screened.report,
            folds=folds,
            grid_result=result,
            threshold=threshold,
            platt=platt,
            platt_note=platt_note,
            report=report,
            probs=probs,
            labels=y,
            student_ids=table.student_ids,
        )
    except EarlywarnError as exc:
        return CellFailure(
            "fit", course.course_id, week, learner, strategy, "", str(exc)
        )


def _fit_cell_packed(args):
    return _fit_cell(*args)


def run_weekly_pipeline(course: CourseData, plan: ExperimentPlan):
    """Train all plan cells on one course.

    Returns (cells, rows, failures): fitted cells keyed by
    (week, learner, strategy), one in-sample result row per fitted cell
    (policy ``youden_source``, target = the course itself), and the
    failures encountered.
    """
    y = course.label_vector(course.weekly.student_ids)
    minority = int(min(y.sum(), y.size - y.sum()))
    if minority < 2:
        raise ConfigError(
            f"{course.course_id}: needs at least 2 students per outcome class"
        )
    folds = stratified_kfold(
        y,
        min(10, minority),
        derive_seed(plan.seed, "folds", course.course_id),
        student_ids=course.weekly.student_ids,
    )
    keys = plan.cell_keys()
    args = [(course, plan, folds, week, learner, strategy)
            for week, learner, strategy in keys]
    if plan.jobs > 1:
        with ProcessPoolExecutor(max_workers=plan.jobs) as pool:
            outcomes = list(pool.map(_fit_cell_packed, args))
    else:
        outcomes = [_fit_cell(*a) for a in args]

    cells: dict[tuple[int, str, str], FittedCell] = {}
    rows: list[ResultRow] = []
    failures: list[CellFailure] = []
    for key, outcome in zip(keys, outcomes):
        if isinstance(outcome, CellFailure):
            failures.append(outcome)
            continue
        cells[key] = outcome
        rows.append(
            ResultRow(
                reference=course.course_id,
                target=course.course_id,
                week=outcome.week,
                learner=outcome.learner,
                strategy=outcome.strategy,
                policy="youden_source",
                report=outcome.report,
            )
        )
        if outcome.platt_note:
            failures.append(
                CellFailure(
                    "calibrate", course.course_id, outcome.week,
                    outcome.learner, outcome.strategy, "",
                    outcome.platt_note, fatal=False,
                )
            )
    return cells, rows, failures


@dataclass(frozen=True)
class _TransferModel:
    model: object
    threshold: Threshold
    platt: PlattParams | None
    platt_note: str | None
    alignment: SchemaAlignment


def _fit_with_params(learner, params, X, y, feature_names, seed):
    if learner == "elastic_net":
        return fit_elastic_net(
            X, y, params["alpha"], params["lam"], feature_names=feature_names
        )
    if learner == "probability_forest":
        return fit_probability_forest(
            X,
            y,
            ForestParams(
                n_trees=params["n_trees"],
                mtry=min(params["mtry"], X.shape[1]),
                min_node_size=params["min_node_size"],
                seed=seed,
            ),
            feature_names=feature_names,
        )
    return fit_gbt(
        X,
        y,
        BoostParams(
            max_depth=params["max_depth"],
            min_child_weight=params["min_child_weight"],
            subsample=params["subsample"],
            colsample=params["colsample"],
            n_rounds=params["n_rounds"],
            seed=seed,
        ),
        feature_names=feature_names,
        compute_importance=False,
    )


class _RetrainCache:
    """Source-side retrains at reduced schemas, shared across targets."""

    def __init__(self, source: CourseData, plan: ExperimentPlan):
        self.source = source
        self.plan = plan
        self._store: dict = {}

    def get(self, cell: FittedCell, alignment: SchemaAlignment) -> _TransferModel:
        key = (cell.week, cell.learner, cell.strategy, alignment.shared)
        if key not in self._store:
            self._store[key] = self._retrain(cell, alignment)
        return self._store[key]

    def _retrain(self, cell: FittedCell, alignment: SchemaAlignment):
        shared = alignment.shared
        table = aggregate(
            self.source.weekly, cell.week, cell.strategy
        ).select_columns(shared)
        X = table.values
        y = self.source.label_vector(table.student_ids)
        params = cell.grid_result.best_params
        tag = sha256_hex(",".join(shared))
        model = _fit_with_params(
            cell.learner, params, X, y, shared,
            derive_seed(self.plan.seed, "retrain", cell.week, cell.learner,
                        cell.strategy, tag),
        )
        probs = predict_proba(model, X)
        threshold = youden_threshold(probs, y)
        # redo out-of-fold predictions at the reduced schema for calibration
        folds = cell.folds
        oof = np.full(y.size, np.nan)
        mask = np.zeros(y.size, dtype=bool)
        for fold in range(folds.k):
            train, val = folds.split(fold)
            if y[train].min() == y[train].max():
                single_class_warning(fold)
                continue
            fold_model = _fit_with_params(
                cell.learner, params, X[train], y[train], shared,
                derive_seed(self.plan.seed, "retrain", cell.week, cell.learner,
                            cell.strategy, tag, fold),
            )
            oof[val] = predict_proba(fold_model, X[val])
            mask[val] = True
        if mask.any() and y[mask].min() < y[mask].max():
            try:
                platt, note = fit_platt(oof[mask], y[mask]), None
            except (FitError, ParameterError) as exc:
                platt, note = None, str(exc)
        else:
            platt, note = None, "pooled out-of-fold predictions cover a single class"
        return _TransferModel(model, threshold, platt, note, alignment)


def _calibration_stats(probs, labels, stage, platt: PlattParams | None, keys):
    curve = None
    if probs.size >= 10:
        curve = calibration_curve(probs, labels, n_bins=10)
    nan = float("nan")
    return CalibrationRecord(
        reference=keys[0], target=keys[1], week=keys[2], learner=keys[3],
        strategy=keys[4], stage=stage,
        slope=curve.slope if curve is not None else nan,
        intercept=curve.intercept if curve is not None else nan,
        brier=brier_score(probs, labels),
        logloss=log_loss(probs, labels),
        platt_a=platt.a if platt is not None else nan,
        platt_b=platt.b if platt is not None else nan,
        curve=curve,
    )


def _cell_calibration(probs, labels, platt, keys) -> list[CalibrationRecord]:
    records = [_calibration_stats(probs, labels, "raw", None, keys)]
    if platt is not None:
        records.append(
            _calibration_stats(apply_platt(platt, probs), labels, "platt",
                               platt, keys)
        )
    return records


def _source_calibration(cell: FittedCell) -> list[CalibrationRecord]:
    """Reliability of the pooled out-of-fold predictions on the source."""
    mask = cell.grid_result.oof_mask
    keys = (cell.course_id, cell.course_id, cell.week, cell.learner,
            cell.strategy)
    return _cell_calibration(
        cell.grid_result.oof_probs[mask], cell.labels[mask], cell.platt, keys
    )


def _transfer_cell(
    cell: FittedCell,
    source: CourseData,
    target: CourseData,
    plan: ExperimentPlan,
    cache: _RetrainCache,
):
    rows: list[ResultRow] = []
    records: list[CalibrationRecord] = []
    failures: list[CellFailure] = []
    where = dict(
        course_id=source.course_id, week=cell.week, learner=cell.learner,
        strategy=cell.strategy, target=target.course_id,
    )
    if cell.week > target.weekly.n_weeks:
        failures.append(CellFailure(
            stage="transfer", message="target course lacks this week", **where
        ))
        return rows, records, failures
    try:
        target_table = aggregate(target.weekly, cell.week, cell.strategy)
        alignment = align_schemas(cell.columns, target_table.columns)
        if not alignment.shared:
            failures.append(CellFailure(
                stage="transfer",
                message="transfer impossible: empty shared feature schema",
                **where,
            ))
            return rows, records, failures
        if alignment.dropped_from_source:
            fitted = cache.get(cell, alignment)
            if fitted.platt_note:
                failures.append(CellFailure(
                    stage="calibrate", message=fitted.platt_note, fatal=False,
                    **where,
                ))
        else:
            fitted = _TransferModel(
                cell.model, cell.threshold, cell.platt, None, alignment
            )
        probs = predict_proba(fitted.model, target_table)
        y = target.label_vector(target_table.student_ids)
        if y.min() == y.max():
            failures.append(CellFailure(
                stage="transfer",
                message="target labels contain a single class", **where,
            ))
            return rows, records, failures
        for policy in plan.policies:
            if policy == "youden_source":
                threshold = fitted.threshold
            else:
                threshold = prevalence_threshold(probs, float(y.mean()))
            rows.append(ResultRow(
                reference=source.course_id,
                target=target.course_id,
                week=cell.week,
                learner=cell.learner,
                strategy=cell.strategy,
                policy=policy,
                report=score_predictions(y, probs, threshold),
            ))
        records.extend(_cell_calibration(
            probs, y, fitted.platt,
            (source.course_id, target.course_id, cell.week, cell.learner,
             cell.strategy),
        ))
    except EarlywarnError as exc:
        failures.append(CellFailure(stage="transfer", message=str(exc), **where))
    return rows, records, failures


def transfer_evaluate(
    cells: Mapping[tuple[int, str, str], FittedCell],
    source: CourseData,
    target: CourseData,
    plan: ExperimentPlan,
    cache: _RetrainCache | None = None,
):
    """Apply fitted reference cells to one target course.

    Returns (rows, calibration records, failures).
    """
    if cache is None:
        cache = _RetrainCache(source, plan)
    rows: list[ResultRow] = []
    records: list[CalibrationRecord] = []
    failures: list[CellFailure] = []
    for key in sorted(cells):
        cell_rows, cell_records, cell_failures = _transfer_cell(
            cells[key], source, target, plan, cache
        )
        rows.extend(cell_rows)
        records.extend(cell_records)
        failures.extend(cell_failures)
    return rows, records, failures


@dataclass(frozen=True)
class ExperimentResult:
    plan: ExperimentPlan
    cells: dict
    rows: tuple[ResultRow, ...]
    calibration: tuple[CalibrationRecord, ...]
    failures: tuple[CellFailure, ...]
    n_cells_total: int
    n_cells_failed: int

    @property
    def failure_fraction(self) -> float:
        if self.n_cells_total == 0:
            return 0.0
        return self.n_cells_failed / self.n_cells_total


def run_experiment(
    courses: Mapping[str, CourseData], plan: ExperimentPlan
) -> ExperimentResult:
    for name in (plan.reference, *plan.targets):
        if name not in courses:
            raise ConfigError(f"course {name!r} not loaded")
    source = courses[plan.reference]
    cells, rows, failures = run_weekly_pipeline(source, plan)
    records: list[CalibrationRecord] = []
    for key in sorted(cells):
        records.extend(_source_calibration(cells[key]))

    cache = _RetrainCache(source, plan)
    for target_name in plan.targets:
        trows, trecords, tfailures = transfer_evaluate(
            cells, source, courses[target_name], plan, cache
        )
        rows.extend(trows)
        records.extend(trecords)
        failures.extend(tfailures)

    n_phase1 = len(plan.cell_keys())
    n_phase1_failed = n_phase1 - len(cells)
    n_total = n_phase1 * (1 + len(plan.targets))
    n_failed = n_phase1_failed * (1 + len(plan.targets)) + sum(
        1 for f in failures if f.fatal and f.stage == "transfer"
    )
    rows.sort(key=ResultRow.sort_key)
    return ExperimentResult(
        plan=plan,
        cells=cells,
        rows=tuple(rows),
        calibration=tuple(records),
        failures=tuple(failures),
        n_cells_total=n_total,
        n_cells_failed=n_failed,
    )


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in text)


def build_manifest(
    courses: Mapping[str, CourseData],
    plan: ExperimentPlan,
    inputs: Mapping[str, Mapping[str, str]] | None = None,
) -> dict:
    """Reproducibility record: seed, plan, grids, config hashes, versions.

    Contains nothing time- or path-dependent, so a rerun in the same
    environment produces identical bytes.
    """
    import platform

    from . import __version__

    grid = hyper_grid(plan.grid_preset)
    return {
        "format": "earlywarn-run/1",
        "package_version": __version__,
        "python_version": platform.python_version(),
        "numpy_version": np.__version__,
        "seed": plan.seed,
        "plan": {
            "reference": plan.reference,
            "targets": list(plan.targets),
            "weeks": list(plan.weeks),
            "learners": list(plan.learners),
            "strategies": list(plan.strategies),
            "policies": list(plan.policies),
            "grid_preset": plan.grid_preset,
            "replication_screening": plan.replication_screening,
            "jobs": plan.jobs,
        },
        "grid": grid.to_dict(),
        "courses": {
            name: {
                "n_students": len(data.weekly.student_ids),
                "n_weeks": data.weekly.n_weeks,
                "slide_forum_available": data.config.slide_forum_available,
                "config_sha256": sha256_hex(
                    canonical_json(config_to_dict(data.config))
                ),
            }
            for name, data in sorted(courses.items())
        },
        "inputs": dict(inputs) if inputs else {},
    }


CALIBRATION_COLUMNS = (
    "stage", "bin", "mean_pred", "frac_pos", "count",
    "slope", "intercept", "brier", "log_loss", "platt_a", "platt_b",
)

FAILURE_COLUMNS = (
    "stage", "course", "week", "learner", "strategy", "target", "fatal",
    "message",
)

IMPORTANCE_COLUMNS = ("week", "learner", "strategy", "rank", "feature", "score")

SCREENING_COLUMNS = ("week", "strategy", "kind", "name", "partner", "r", "note")


def _calibration_lines(records: list[CalibrationRecord]) -> list[str]:
    lines = [",".join(CALIBRATION_COLUMNS)]
    for rec in records:
        stats = (
            format_value(rec.slope), format_value(rec.intercept),
            format_value(rec.brier), format_value(rec.logloss),
            format_value(rec.platt_a), format_value(rec.platt_b),
        )
        if rec.curve is None:
            lines.append(",".join((rec.stage, "0", "nan", "nan", "0") + stats))
            continue
        for i, (mp, fp, cnt) in enumerate(
            zip(rec.curve.bin_mean_pred, rec.curve.bin_frac_pos,
                rec.curve.bin_counts),
            start=1,
        ):
            lines.append(",".join(
                (rec.stage, str(i), format_value(mp), format_value(fp),
                 str(cnt)) + stats
            ))
    return lines


def write_outputs(
    result: ExperimentResult,
    out_dir: str | Path,
    manifest: dict,
) -> dict[str, Path]:
    """Write the manifest first, then all result tables and models."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {"manifest": out / "manifest.json"}
    atomic_write_text(paths["manifest"], canonical_json(manifest) + "\n")

    paths["results"] = out / "results.csv"
    write_delimited(
        paths["results"], RESULT_COLUMNS, [row.cells() for row in result.rows]
    )

    importance_rows = []
    for key in sorted(result.cells):
        cell = result.cells[key]
        for rank, (feature, score) in enumerate(
            learner_importance(cell.model), start=1
        ):
            importance_rows.append((
                str(cell.week), cell.learner, cell.strategy, str(rank),
                feature, format_value(score),
            ))
    paths["importance"] = out / "importance.csv"
    write_delimited(paths["importance"], IMPORTANCE_COLUMNS, importance_rows)

    screening_rows = []
    seen: set[tuple[int, str]] = set()
    for key in sorted(result.cells):
        cell = result.cells[key]
        if (cell.week, cell.strategy) in seen:
            continue
        seen.add((cell.week, cell.strategy))
        for kind, name, partner, r, note in cell.drop_report.iter_rows():
            screening_rows.append(
                (str(cell.week), cell.strategy, kind, name, partner, r, note)
            )
    paths["screening"] = out / "screening.csv"
    write_delimited(paths["screening"], SCREENING_COLUMNS, screening_rows)

    failure_rows = [
        (
            f.stage, f.course_id, str(f.week), f.learner, f.strategy,
            f.target, "true" if f.fatal else "false",
            f.message.replace(",", ";").replace("\n", " "),
        )
        for f in result.failures
    ]
    paths["failures"] = out / "failures.csv"
    write_delimited(paths["failures"], FAILURE_COLUMNS, failure_rows)

    cal_dir = out / "calibration"
    grouped: dict[tuple, list[CalibrationRecord]] = {}
    for rec in result.calibration:
        grouped.setdefault(
            (rec.reference, rec.target, rec.week, rec.learner, rec.strategy),
            [],
        ).append(rec)
    for (ref, tgt, week, learner, strategy), records in sorted(
        grouped.items()
    ):
        name = (
            f"cal_w{week:02d}_{learner}_{strategy}_"
            f"{_slug(ref)}_to_{_slug(tgt)}.csv"
        )
        atomic_write_text(
            cal_dir / name, "\n".join(_calibration_lines(records)) + "\n"
        )
    paths["calibration_dir"] = cal_dir

    model_dir = out / "models"
    for key in sorted(result.cells):
        cell = result.cells[key]
        payload = {
            "format": "earlywarn-cell/1",
            "course_id": cell.course_id,
            "week": cell.week,
            "learner": cell.learner,
            "strategy": cell.strategy,
            "columns": list(cell.columns),
            "best_params": cell.grid_result.best_params,
            "best_cv_auc": cell.grid_result.best_cv_auc,
            "cv_skipped_folds": list(cell.grid_result.skipped_folds),
            "threshold": {
                "value": cell.threshold.value,
                "policy": cell.threshold.policy,
            },
            "platt": None if cell.platt is None else {
                "a": cell.platt.a,
                "b": cell.platt.b,
                "n_iter": cell.platt.n_iter,
                "score_space": cell.platt.score_space,
            },
            "model": model_to_dict(cell.model),
        }
        name = f"model_w{cell.week:02d}_{cell.learner}_{cell.strategy}.json"
        atomic_write_text(model_dir / name, canonical_json(payload) + "\n")
    paths["model_dir"] = model_dir
    return paths
