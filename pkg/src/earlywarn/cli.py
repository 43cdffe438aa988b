"""Command-line entry point.

Subcommands:

* ``simulate``  — generate a synthetic cohort from a JSON cohort spec.
* ``featurize`` — parse an event log and emit weekly + aggregated matrices.
* ``run``       — execute an experiment plan: weekly models on a reference
  course, optional transfer to target courses, full result tables.
* ``report``    — render metric trajectories and calibration curves from a
  finished run directory as standalone SVG line charts.

Exit codes: 0 success; 2 invalid configuration or parameters; 3 input
parse failure; 4 more than 10% of experiment cells failed; 1 unexpected
error.  Every run writes ``manifest.json`` before any result file, and all
outputs are deterministic functions of the inputs and the seed.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import traceback
import warnings
from pathlib import Path

from .aggregate import aggregate
from .errors import (
    ConfigError,
    FitError,
    MetricUndefinedError,
    ParameterError,
    ParseError,
    SchemaError,
)
from .features import extract_weekly_features
from .learners import canonical_learner
from .synthgen import cohort_spec_from_dict, generate_cohort, write_cohort
from .tables import atomic_write_text, canonical_json, sha256_hex
from .trace import (
    config_from_dict,
    config_to_dict,
    label_at_risk,
    parse_event_log,
    parse_grades,
)
from .transfer import (
    POLICIES,
    STRATEGIES,
    CourseData,
    ExperimentPlan,
    build_manifest,
    run_experiment,
    write_outputs,
)

_CHART_COLORS = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
    "#ff7f0e", "#8c564b", "#17becf", "#e377c2",
)


def _load_json(path: str | Path):
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"missing file: {p}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{p}: {exc.msg}", exc.lineno) from None


def _parse_weeks(text: str) -> tuple[int, ...]:
    """Comma list with ranges: "1-4,6" -> (1, 2, 3, 4, 6)."""
    weeks: set[int] = set()
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                lo, hi = part.split("-", 1)
                lo, hi = int(lo), int(hi)
                if lo > hi:
                    raise ValueError
                weeks.update(range(lo, hi + 1))
            else:
                weeks.add(int(part))
        except ValueError:
            raise ConfigError(f"bad week selector {part!r}") from None
    if not weeks:
        raise ConfigError("empty week selection")
    return tuple(sorted(weeks))


def _parse_list(text: str) -> tuple[str, ...]:
    items = tuple(s.strip() for s in text.split(",") if s.strip())
    if not items:
        raise ConfigError("empty list option")
    return items


def _version_stamp() -> dict:
    import platform

    import numpy

    from . import __version__

    return {
        "package_version": __version__,
        "python_version": platform.python_version(),
        "numpy_version": numpy.__version__,
    }


def cmd_simulate(args) -> int:
    data = _load_json(args.spec)
    spec = cohort_spec_from_dict(data)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": "earlywarn-sim/1",
        **_version_stamp(),
        "spec": dataclasses.asdict(spec),
    }
    atomic_write_text(out / "manifest.json", canonical_json(manifest) + "\n")
    course = generate_cohort(spec)
    paths = write_cohort(course, out)
    labels = course.labels()
    prevalence = sum(labels.values()) / len(labels)
    print(
        f"simulated {spec.course_id}: {len(course.events)} events, "
        f"{spec.n_students} students, at-risk fraction {prevalence:.3f}"
    )
    for name in ("events", "grades", "config"):
        print(f"  {name}: {paths[name]}")
    return 0


def cmd_featurize(args) -> int:
    config = config_from_dict(_load_json(args.config))
    events_path = Path(args.events)
    if not events_path.exists():
        raise ConfigError(f"missing file: {events_path}")
    with events_path.open(encoding="utf-8") as fh:
        events = parse_event_log(fh, config)
    roster = None
    if args.grades:
        with Path(args.grades).open(encoding="utf-8") as fh:
            roster = sorted(parse_grades(fh))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": "earlywarn-featurize/1",
        **_version_stamp(),
        "inputs": {
            "events_sha256": sha256_hex(events_path.read_text(encoding="utf-8")),
            "config_sha256": sha256_hex(canonical_json(_load_json(args.config))),
        },
    }
    atomic_write_text(out / "manifest.json", canonical_json(manifest) + "\n")
    if not events:
        warnings.warn("no events parsed; matrices will be all zero")
    weekly = extract_weekly_features(events, config, roster=roster)
    atomic_write_text(out / "weekly.csv", weekly.to_text())
    for strategy in STRATEGIES:
        for week in range(1, config.n_weeks + 1):
            table = aggregate(weekly, week, strategy)
            table.write(out / f"agg_{strategy}_w{week:02d}.csv")
    print(
        f"featurized {config.course_id}: {len(weekly.student_ids)} students, "
        f"{len(weekly.feature_ids)} weekly features, "
        f"{config.n_weeks} weeks x {len(STRATEGIES)} strategies"
    )
    return 0


def _load_course(name: str, entry, base: Path) -> tuple[CourseData, dict]:
    if not isinstance(entry, dict):
        raise ConfigError(f"course {name!r}: expected an object with file paths")
    for key in ("events", "grades", "config"):
        if key not in entry:
            raise ConfigError(f"course {name!r}: missing {key!r} path")

    def resolve(p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else base / path

    config_path = resolve(entry["config"])
    config = config_from_dict(_load_json(config_path))
    if config.course_id != name:
        raise ConfigError(
            f"course key {name!r} does not match config course_id "
            f"{config.course_id!r}"
        )
    events_path = resolve(entry["events"])
    grades_path = resolve(entry["grades"])
    for p in (events_path, grades_path):
        if not p.exists():
            raise ConfigError(f"course {name!r}: missing file {p}")
    try:
        with events_path.open(encoding="utf-8") as fh:
            events = parse_event_log(fh, config)
    except ParseError as exc:
        raise ParseError(f"{events_path}: {exc}") from None
    with grades_path.open(encoding="utf-8") as fh:
        grades = parse_grades(fh)
    try:
        labels = label_at_risk(grades)
    except ValueError as exc:
        raise ConfigError(f"course {name!r}: {exc}") from None
    weekly = extract_weekly_features(events, config, roster=sorted(grades))
    hashes = {
        "events_sha256": sha256_hex(events_path.read_text(encoding="utf-8")),
        "grades_sha256": sha256_hex(grades_path.read_text(encoding="utf-8")),
        "config_sha256": sha256_hex(canonical_json(config_to_dict(config))),
    }
    return CourseData(name, weekly, labels, config), hashes


def _plan_from_file(data: dict, args) -> tuple[ExperimentPlan, dict]:
    if not isinstance(data, dict) or "courses" not in data:
        raise ConfigError("plan must be an object with a 'courses' mapping")
    courses = data["courses"]
    if not isinstance(courses, dict) or not courses:
        raise ConfigError("'courses' must be a nonempty mapping")
    reference = data.get("reference")
    if reference is None:
        raise ConfigError("plan needs a 'reference' course key")
    targets = data.get("targets")
    if targets is None:
        targets = sorted(k for k in courses if k != reference)

    fields = {
        "reference": reference,
        "targets": tuple(targets),
        "weeks": tuple(data.get("weeks", ())) or None,
        "learners": tuple(data.get("learners", ())) or None,
        "strategies": tuple(data.get("strategies", ())) or None,
        "policies": tuple(data.get("policies", ())) or None,
        "seed": data.get("seed", 0),
        "grid_preset": data.get("grid_preset", "paper"),
        "replication_screening": bool(data.get("replication_screening", False)),
        "jobs": data.get("jobs", 1),
    }
    # command-line overrides
    if args.seed is not None:
        fields["seed"] = args.seed
    if args.weeks is not None:
        fields["weeks"] = _parse_weeks(args.weeks)
    if args.learners is not None:
        fields["learners"] = tuple(
            canonical_learner(l) for l in _parse_list(args.learners)
        )
    elif fields["learners"] is not None:
        fields["learners"] = tuple(
            canonical_learner(l) for l in fields["learners"]
        )
    if args.strategy is not None:
        fields["strategies"] = _parse_list(args.strategy)
    if args.policy is not None:
        fields["policies"] = _parse_list(args.policy)
    if args.grid_preset is not None:
        fields["grid_preset"] = args.grid_preset
    if args.replication_screening:
        fields["replication_screening"] = True
    if args.jobs is not None:
        fields["jobs"] = args.jobs

    defaults = {
        "weeks": None,  # filled in after courses load
        "learners": ExperimentPlan.__dataclass_fields__["learners"].default,
        "strategies": STRATEGIES,
        "policies": POLICIES,
    }
    for key in ("learners", "strategies", "policies"):
        if fields[key] is None:
            fields[key] = defaults[key]
    return fields, courses


def cmd_run(args) -> int:
    data = _load_json(args.plan)
    base = Path(args.plan).resolve().parent
    fields, course_entries = _plan_from_file(data, args)

    courses: dict[str, CourseData] = {}
    input_hashes: dict[str, dict] = {}
    for name in sorted(course_entries):
        course, hashes = _load_course(name, course_entries[name], base)
        courses[name] = course
        input_hashes[name] = hashes

    if fields["weeks"] is None:
        reference = fields["reference"]
        if reference not in courses:
            raise ConfigError(f"course {reference!r} not loaded")
        fields["weeks"] = tuple(
            range(1, courses[reference].weekly.n_weeks + 1)
        )
    plan = ExperimentPlan(**fields)

    out = Path(args.out)
    manifest = build_manifest(courses, plan, inputs=input_hashes)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "manifest.json", canonical_json(manifest) + "\n")

    result = run_experiment(courses, plan)
    paths = write_outputs(result, out, manifest)
    print(
        f"wrote {len(result.rows)} result rows to {paths['results']} "
        f"({result.n_cells_failed}/{result.n_cells_total} cells failed)"
    )
    for failure in result.failures:
        kind = "failure" if failure.fatal else "note"
        print(
            f"  {kind} [{failure.stage}] week {failure.week} "
            f"{failure.learner}/{failure.strategy}"
            + (f" -> {failure.target}" if failure.target else "")
            + f": {failure.message}"
        )
    if result.failure_fraction > 0.10:
        print(
            f"error: {result.n_cells_failed} of {result.n_cells_total} "
            "cells failed (over 10%)",
            file=sys.stderr,
        )
        return 4
    return 0


def _read_csv(path: Path) -> list[dict]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        return []
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:] if line]


def _scale(v, lo, hi, out_lo, out_hi) -> float:
    if hi == lo:
        return (out_lo + out_hi) / 2.0
    return out_lo + (v - lo) * (out_hi - out_lo) / (hi - lo)


def _svg_line_chart(title, x_label, y_label, series, y_range, x_ticks) -> str:
    """Minimal standalone SVG line chart; one polyline per series."""
    width, height = 760, 440
    left, right, top, bottom = 64.0, 560.0, 48.0, 392.0
    x_lo, x_hi = (min(x_ticks), max(x_ticks)) if x_ticks else (0.0, 1.0)
    y_lo, y_hi = y_range

    def sx(x):
        return _scale(x, x_lo, x_hi, left, right)

    def sy(y):
        return _scale(y, y_lo, y_hi, bottom, top)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left}" y="24" font-family="sans-serif" font-size="15" '
        f'font-weight="bold">{title}</text>',
        f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" '
        'stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" '
        'stroke="black"/>',
        f'<text x="{(left + right) / 2:.1f}" y="{height - 8}" '
        'font-family="sans-serif" font-size="12" text-anchor="middle">'
        f"{x_label}</text>",
        f'<text x="16" y="{(top + bottom) / 2:.1f}" font-family="sans-serif" '
        f'font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 16 {(top + bottom) / 2:.1f})">{y_label}</text>',
    ]
    for tick in x_ticks:
        x = sx(tick)
        parts.append(
            f'<line x1="{x:.1f}" y1="{bottom}" x2="{x:.1f}" y2="{bottom + 5}" '
            'stroke="black"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{bottom + 18}" font-family="sans-serif" '
            f'font-size="11" text-anchor="middle">{tick:g}</text>'
        )
    for i in range(5):
        yv = y_lo + i * (y_hi - y_lo) / 4
        y = sy(yv)
        parts.append(
            f'<line x1="{left - 5}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" '
            'stroke="black"/>'
        )
        parts.append(
            f'<line x1="{left}" y1="{y:.1f}" x2="{right}" y2="{y:.1f}" '
            'stroke="#dddddd"/>'
        )
        parts.append(
            f'<text x="{left - 9}" y="{y + 4:.1f}" font-family="sans-serif" '
            f'font-size="11" text-anchor="end">{yv:g}</text>'
        )
    for i, (label, points, dashed) in enumerate(series):
        color = _CHART_COLORS[i % len(_CHART_COLORS)]
        finite = [
            (x, y) for x, y in points
            if isinstance(y, float) and math.isfinite(y)
        ]
        if finite:
            coords = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in finite)
            dash = ' stroke-dasharray="6,4"' if dashed else ""
            parts.append(
                f'<polyline points="{coords}" fill="none" stroke="{color}" '
                f'stroke-width="1.8"{dash}/>'
            )
            for x, y in finite:
                parts.append(
                    f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="2.4" '
                    f'fill="{color}"/>'
                )
        ly = top + 16 * i
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        parts.append(
            f'<line x1="{right + 12}" y1="{ly:.1f}" x2="{right + 34}" '
            f'y2="{ly:.1f}" stroke="{color}" stroke-width="1.8"{dash}/>'
        )
        parts.append(
            f'<text x="{right + 40}" y="{ly + 4:.1f}" '
            f'font-family="sans-serif" font-size="11">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_report(args) -> int:
    results_dir = Path(args.results)
    results_path = results_dir / "results.csv"
    if not results_path.exists():
        raise ConfigError(f"missing file: {results_path}")
    out = Path(args.out) if args.out else results_dir
    out.mkdir(parents=True, exist_ok=True)
    rows = _read_csv(results_path)
    written: list[Path] = []

    strategies = sorted({r["strategy"] for r in rows})
    weeks = sorted({int(r["week"]) for r in rows})
    for strategy in strategies:
        for metric, y_range in (("auc", (0.0, 1.0)), ("kappa", (-1.0, 1.0))):
            series = []
            groups = sorted({
                (r["learner"], r["target"], r["reference"]) for r in rows
                if r["strategy"] == strategy and r["policy"] == "youden_source"
            })
            for learner, target, reference in groups:
                points = sorted(
                    (int(r["week"]), float(r[metric]))
                    for r in rows
                    if r["strategy"] == strategy
                    and r["policy"] == "youden_source"
                    and r["learner"] == learner
                    and r["target"] == target
                    and r["reference"] == reference
                )
                in_sample = target == reference
                label = learner if in_sample else f"{learner} on {target}"
                series.append((label, points, not in_sample))
            svg = _svg_line_chart(
                f"{metric} by week ({strategy})", "course week", metric,
                series, y_range, weeks,
            )
            path = out / f"{metric}_by_week_{strategy}.svg"
            atomic_write_text(path, svg)
            written.append(path)

    cal_dir = results_dir / "calibration"
    if cal_dir.is_dir():
        for cal_path in sorted(cal_dir.glob("cal_*.csv")):
            cal_rows = _read_csv(cal_path)
            series = [("ideal", [(0.0, 0.0), (1.0, 1.0)], True)]
            for stage in ("raw", "platt"):
                points = [
                    (float(r["mean_pred"]), float(r["frac_pos"]))
                    for r in cal_rows
                    if r["stage"] == stage and int(r["count"]) > 0
                ]
                points = [
                    (x, y) for x, y in points
                    if math.isfinite(x) and math.isfinite(y)
                ]
                if points:
                    series.append((stage, sorted(points), False))
            svg = _svg_line_chart(
                cal_path.stem, "mean predicted probability",
                "observed at-risk fraction", series, (0.0, 1.0),
                [0.0, 0.25, 0.5, 0.75, 1.0],
            )
            path = out / f"{cal_path.stem}.svg"
            atomic_write_text(path, svg)
            written.append(path)

    print(f"wrote {len(written)} charts to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="earlywarn",
        description=(
            "At-risk student prediction from course event logs: simulate "
            "cohorts, build weekly features, train and transfer models."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic cohort")
    p_sim.add_argument("spec", help="cohort spec JSON file")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--seed", type=int, default=None,
                       help="override the spec's seed")
    p_sim.set_defaults(func=cmd_simulate)

    p_feat = sub.add_parser(
        "featurize", help="event log -> weekly and aggregated matrices"
    )
    p_feat.add_argument("--events", required=True, help="event log CSV")
    p_feat.add_argument("--config", required=True, help="course config JSON")
    p_feat.add_argument("--grades", default=None,
                        help="grade file fixing the student roster")
    p_feat.add_argument("--out", required=True, help="output directory")
    p_feat.set_defaults(func=cmd_featurize)

    p_run = sub.add_parser("run", help="execute an experiment plan")
    p_run.add_argument("plan", help="experiment plan JSON file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--weeks", default=None,
                       help='week selection, e.g. "1-6" or "2,4,8"')
    p_run.add_argument(
        "--learners", default=None,
        help="comma list: elastic_net|en, probability_forest|rf, "
             "gradient_boosting|gbt",
    )
    p_run.add_argument("--strategy", default=None,
                       help="comma list: progressive, early_reset")
    p_run.add_argument("--policy", default=None,
                       help="comma list: youden_source, prevalence_target")
    p_run.add_argument("--grid-preset", choices=("paper", "small"),
                       default=None, dest="grid_preset")
    p_run.add_argument(
        "--replication-screening", action="store_true", default=False,
        dest="replication_screening",
        help="force the fixed six-family screening exclusions",
    )
    p_run.add_argument("--jobs", type=int, default=None,
                       help="parallel workers for model-fitting cells")
    p_run.set_defaults(func=cmd_run)

    p_rep = sub.add_parser("report", help="render SVG charts from a run")
    p_rep.add_argument("results", help="run output directory")
    p_rep.add_argument("--out", default=None,
                       help="chart directory (default: the run directory)")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ParameterError, SchemaError, MetricUndefinedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
