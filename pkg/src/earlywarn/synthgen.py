"""Synthetic cohort generator with planted, tunable effect sizes.

Produces event logs and exam grades in the exact file formats the parser
consumes.  Each student gets two standard-normal latent traits: ability
(drives correctness and paper points) and conscientiousness (drives how
much, how early, and how regularly they work).  A continuous exam score

    score = beta_engagement * z(total activity)
          + beta_timing * z(mean submission lead days)
          + ability + noise_sd * eps

is cut at the realized sample quantile to hit the target at-risk
prevalence exactly (to 1/n), then spread over the grade scale: the at-risk
tail onto {5.0, 4.0, 3.7}, the rest onto {3.3 .. 0.7}.  The latent traits
are returned for diagnostics but never serialized into the outputs.

Two course templates exist: "weekly" (one incentivized, one
non-incentivized and one paper assignment released every week, 7-day
completion windows, bonus-point incentive) and "biweekly" (same trio
released every other week, 14-day windows, exam-admission incentive).

Generation is deterministic per (spec, seed): each student draws from an
independent generator spawned from the cohort seed, so per-student work
can be parallelized without changing the output.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .tables import atomic_write_text, canonical_json
from .trace import (
    EVENT_LOG_HEADER,
    AssignmentSpec,
    CourseConfig,
    EventKind,
    IncentivePolicy,
    RawEvent,
    TaskClass,
    config_to_dict,
    label_at_risk,
    render_event,
)

SIM_START_DATE = date(2024, 4, 1)  # a Monday

TEMPLATES = ("weekly", "biweekly")

#: Grade values for the at-risk tail (worst score first) and the rest.
AT_RISK_GRADES = (5.0, 4.0, 3.7)
PASS_GRADES = (3.3, 3.0, 2.7, 2.3, 2.0, 1.7, 1.3, 1.0, 0.7)


@dataclass(frozen=True)
class CohortSpec:
    """Course template plus cohort size, outcome mix, and effect sizes."""

    course_id: str
    n_students: int
    template: str
    target_prevalence: float
    beta_engagement: float = 0.0
    beta_timing: float = 0.0
    noise_sd: float = 1.0
    seed: int = 0
    slide_forum_available: bool = True
    n_weeks: int = 12

    def __post_init__(self):
        if not self.course_id:
            raise ConfigError("course_id must be nonempty")
        if self.template not in TEMPLATES:
            raise ConfigError(
                f"template must be one of {TEMPLATES}, got {self.template!r}"
            )
        if self.n_students < 2:
            raise ConfigError("n_students must be >= 2")
        if not 0.0 < self.target_prevalence < 1.0:
            raise ConfigError("target_prevalence must be in (0, 1)")
        n_risk = round(self.n_students * self.target_prevalence)
        if not 1 <= n_risk <= self.n_students - 1:
            raise ConfigError(
                f"target_prevalence {self.target_prevalence} infeasible at "
                f"n={self.n_students}: needs between 1 and n-1 at-risk students"
            )
        for name in ("beta_engagement", "beta_timing", "noise_sd"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be >= 0")
        if self.n_weeks < 2:
            raise ConfigError("n_weeks must be >= 2")

    @property
    def n_at_risk(self) -> int:
        return round(self.n_students * self.target_prevalence)


@dataclass(frozen=True)
class LatentStudent:
    """Ground-truth traits; diagnostics only, never written to outputs."""

    student_id: str
    ability: float
    conscientiousness: float


@dataclass(frozen=True)
class SynthCourse:
    spec: CohortSpec
    config: CourseConfig
    events: tuple[RawEvent, ...]
    grades: dict[str, float]
    latents: tuple[LatentStudent, ...]

    def labels(self) -> dict[str, bool]:
        return label_at_risk(self.grades)

    def event_log_lines(self) -> list[str]:
        return [EVENT_LOG_HEADER] + [render_event(e) for e in self.events]

    def grade_file_lines(self) -> list[str]:
        return ["student_id,grade"] + [
            f"{sid},{float(self.grades[sid])!r}" for sid in sorted(self.grades)
        ]


def build_course_config(spec: CohortSpec) -> CourseConfig:
    """Instantiate the course template: releases, pages, tasks, deadlines.

    Every cycle releases one incentivized assignment (2 pages x 4 tasks),
    one non-incentivized (1 page x 4 tasks) and one paper assignment
    (1 page x 3 tasks, 10 points).  Deadlines fall at 23:59 UTC on the
    last day of the 7- or 14-day completion window.
    """
    cycle = 1 if spec.template == "weekly" else 2
    span_days = 7 * cycle
    assignments: list[AssignmentSpec] = []
    for week in range(1, spec.n_weeks + 1, cycle):
        if week + cycle - 1 > spec.n_weeks:
            break
        release = SIM_START_DATE + timedelta(days=7 * (week - 1))
        deadline = datetime.combine(
            release + timedelta(days=span_days - 1), time(23, 59), timezone.utc
        )
        tag = f"{week:02d}"
        assignments.append(
            AssignmentSpec(
                assignment_id=f"i{tag}",
                task_class=TaskClass.INCENTIVIZED,
                release_date=release,
                deadline=deadline,
                page_ids=(f"i{tag}a", f"i{tag}b"),
                task_count_per_page={f"i{tag}a": 4, f"i{tag}b": 4},
            )
        )
        assignments.append(
            AssignmentSpec(
                assignment_id=f"n{tag}",
                task_class=TaskClass.NONINCENTIVIZED,
                release_date=release,
                deadline=deadline,
                page_ids=(f"n{tag}a",),
                task_count_per_page={f"n{tag}a": 4},
            )
        )
        assignments.append(
            AssignmentSpec(
                assignment_id=f"p{tag}",
                task_class=TaskClass.PAPER,
                release_date=release,
                deadline=deadline,
                page_ids=(f"p{tag}a",),
                task_count_per_page={f"p{tag}a": 3},
                max_points=10.0,
            )
        )
    policy = (
        IncentivePolicy.BONUS_POINTS
        if spec.template == "weekly"
        else IncentivePolicy.EXAM_ADMISSION
    )
    return CourseConfig(
        course_id=spec.course_id,
        start_date=SIM_START_DATE,
        n_weeks=spec.n_weeks,
        assignments=tuple(assignments),
        incentive_policy=policy,
        slide_forum_available=spec.slide_forum_available,
    )


def _sig(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _whole_second(epoch: float) -> datetime:
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc)


def _daytime(day: date, rng: np.random.Generator) -> float:
    """Epoch seconds of a random daytime instant (08:30-21:30 UTC) on day."""
    base = datetime.combine(day, time(0), timezone.utc).timestamp()
    return base + float(rng.uniform(8.5, 21.5)) * 3600.0


def _simulate_student(
    sid: str, rng: np.random.Generator, config: CourseConfig
) -> tuple[list[RawEvent], float, float, float, float]:
    """One student's events plus (ability, conscientiousness, eps, mean lead).

    Work volume, timing and coverage depend only on conscientiousness;
    correctness and paper points depend only on ability.  This keeps the
    engagement channel separable from the ability channel when effect
    sizes are zeroed.
    """
    theta = float(rng.normal())
    c = float(rng.normal())
    eps = float(rng.normal())
    engage_p = _sig(1.8 + 1.1 * c)
    late_p = _sig(-2.0 - 0.9 * c)
    attempt_bias = {
        TaskClass.INCENTIVIZED: 1.2,
        TaskClass.NONINCENTIVIZED: 0.4,
        TaskClass.PAPER: 0.9,
    }
    events: list[RawEvent] = []
    lead_sum = 0.0
    lead_n = 0

    for spec_a in config.assignments:
        if rng.random() >= engage_p:
            continue
        release_start = datetime.combine(
            spec_a.release_date, time(0), timezone.utc
        )
        span_days = 7 if spec_a.deadline - release_start <= timedelta(days=7) else 14
        center = (1.1 + 1.4 * c) * (span_days / 7.0)
        d_lead = float(np.clip(center + 0.9 * rng.normal(), 0.3, span_days - 0.5))
        work_day = (spec_a.deadline - timedelta(days=d_lead)).date()
        t = _daytime(work_day, rng)
        p_attempt = _sig(attempt_bias[spec_a.task_class] + 0.9 * c)
        for page in spec_a.page_ids:
            events.append(
                RawEvent(sid, _whole_second(t), EventKind.PAGE_VIEW, page,
                         spec_a.task_class)
            )
            t += float(rng.uniform(45.0, 400.0))
            for task in spec_a.task_ids(page):
                if rng.random() >= p_attempt:
                    continue
                tries = 1
                if spec_a.task_class is TaskClass.PAPER:
                    raw = 0.55 + 0.16 * theta + 0.12 * float(rng.normal())
                    points = round(10.0 * float(np.clip(raw, 0.0, 1.0)), 1)
                    events.append(
                        RawEvent(sid, _whole_second(t), EventKind.SUBMISSION,
                                 task, spec_a.task_class, points=points)
                    )
                    t += float(rng.uniform(45.0, 400.0))
                else:
                    while True:
                        correct = rng.random() < _sig(0.6 + 0.9 * theta)
                        events.append(
                            RawEvent(sid, _whole_second(t), EventKind.SUBMISSION,
                                     task, spec_a.task_class, correct=correct)
                        )
                        t += float(rng.uniform(45.0, 400.0))
                        if correct or tries >= 2 or rng.random() >= 0.45:
                            break
                        tries += 1
        if spec_a.task_class in (TaskClass.INCENTIVIZED, TaskClass.PAPER):
            lead_sum += d_lead
            lead_n += 1
        if rng.random() < late_p:
            # review visit in the week after the deadline
            late_day = (
                spec_a.deadline + timedelta(days=float(rng.uniform(0.4, 6.2)))
            ).date()
            lt = _daytime(late_day, rng)
            events.append(
                RawEvent(sid, _whole_second(lt), EventKind.PAGE_VIEW,
                         spec_a.page_ids[0], spec_a.task_class)
            )
            if spec_a.task_class is not TaskClass.PAPER and rng.random() < 0.5:
                lt += float(rng.uniform(45.0, 400.0))
                correct = rng.random() < _sig(0.6 + 0.9 * theta)
                events.append(
                    RawEvent(sid, _whole_second(lt), EventKind.SUBMISSION,
                             spec_a.task_ids(spec_a.page_ids[0])[0],
                             spec_a.task_class, correct=correct)
                )

    if config.slide_forum_available:
        for week in range(1, config.n_weeks + 1):
            week_start = SIM_START_DATE + timedelta(days=7 * (week - 1))
            for _ in range(int(rng.poisson(0.7 + 0.5 * _sig(c)))):
                day = week_start + timedelta(days=int(rng.integers(0, 7)))
                events.append(
                    RawEvent(sid, _whole_second(_daytime(day, rng)),
                             EventKind.SLIDE_DOWNLOAD, f"slides{week:02d}")
                )
            for _ in range(int(rng.poisson(0.5 + 0.4 * _sig(c)))):
                day = week_start + timedelta(days=int(rng.integers(0, 7)))
                events.append(
                    RawEvent(sid, _whole_second(_daytime(day, rng)),
                             EventKind.FORUM_CLICK, f"forum{week:02d}")
                )

    lead_mean = lead_sum / lead_n if lead_n else float("nan")
    return events, theta, c, eps, lead_mean


def _zscore(x: np.ndarray) -> np.ndarray:
    sd = float(x.std())
    if sd == 0.0:
        return np.zeros_like(x)
    return (x - x.mean()) / sd


def _grades_from_scores(scores: np.ndarray, spec: CohortSpec) -> np.ndarray:
    """Quantile cut: lowest scores go at-risk, spread over the grade scale."""
    n = scores.size
    n_risk = spec.n_at_risk
    order = np.argsort(scores, kind="mergesort")
    grades = np.empty(n, dtype=float)
    for chunk, grade in zip(np.array_split(order[:n_risk], 3), AT_RISK_GRADES):
        grades[chunk] = grade
    for chunk, grade in zip(np.array_split(order[n_risk:], 9), PASS_GRADES):
        grades[chunk] = grade
    return grades


def generate_cohort(spec: CohortSpec) -> SynthCourse:
    """Simulate one cohort; deterministic under (spec, seed)."""
    config = build_course_config(spec)
    n = spec.n_students
    student_ids = [f"s{i:04d}" for i in range(1, n + 1)]
    streams = np.random.SeedSequence(spec.seed).spawn(n)
    all_events: list[RawEvent] = []
    theta = np.empty(n)
    consc = np.empty(n)
    eps = np.empty(n)
    engagement = np.empty(n)
    lead = np.empty(n)
    for i, (sid, stream) in enumerate(zip(student_ids, streams)):
        events, theta_i, c_i, eps_i, lead_i = _simulate_student(
            sid, np.random.default_rng(stream), config
        )
        all_events.extend(events)
        theta[i] = theta_i
        consc[i] = c_i
        eps[i] = eps_i
        engagement[i] = len(events)
        lead[i] = lead_i

    if np.isnan(lead).all():
        lead = np.zeros(n)
    elif np.isnan(lead).any():
        lead = np.where(np.isnan(lead), np.nanmean(lead), lead)
    score = (
        spec.beta_engagement * _zscore(engagement)
        + spec.beta_timing * _zscore(lead)
        + theta
        + spec.noise_sd * eps
    )
    grades = _grades_from_scores(score, spec)
    all_events.sort(key=lambda e: (e.student_id, e.timestamp))
    latents = tuple(
        LatentStudent(sid, float(theta[i]), float(consc[i]))
        for i, sid in enumerate(student_ids)
    )
    return SynthCourse(
        spec=spec,
        config=config,
        events=tuple(all_events),
        grades={sid: float(grades[i]) for i, sid in enumerate(student_ids)},
        latents=latents,
    )


#: Fields two paired cohorts must share so the latent-to-score mapping is
#: identical; prevalence, template, size, seed, and feature availability
#: are allowed to differ.
PAIR_SHARED_FIELDS = ("beta_engagement", "beta_timing", "noise_sd", "n_weeks")


def generate_paired_courses(
    spec_a: CohortSpec, spec_b: CohortSpec
) -> tuple[SynthCourse, SynthCourse]:
    """Two cohorts with the same planted mechanism, for transfer studies."""
    if spec_a.course_id == spec_b.course_id:
        raise ConfigError("paired cohorts need distinct course ids")
    for name in PAIR_SHARED_FIELDS:
        if getattr(spec_a, name) != getattr(spec_b, name):
            raise ConfigError(
                f"paired cohorts must share {name}: "
                f"{getattr(spec_a, name)!r} != {getattr(spec_b, name)!r}"
            )
    return generate_cohort(spec_a), generate_cohort(spec_b)


def cohort_spec_to_dict(spec: CohortSpec) -> dict:
    return asdict(spec)


def cohort_spec_from_dict(data: dict) -> CohortSpec:
    if not isinstance(data, dict):
        raise ConfigError("cohort spec must be a JSON object")
    known = {f for f in CohortSpec.__dataclass_fields__}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown cohort spec fields: {sorted(unknown)}")
    try:
        return CohortSpec(**data)
    except TypeError as exc:
        raise ConfigError(f"bad cohort spec: {exc}") from None


def write_cohort(course: SynthCourse, out_dir: str | Path) -> dict[str, Path]:
    """Write events, grades, course config, and the generating spec."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "events": out / "events.csv",
        "grades": out / "grades.csv",
        "config": out / "config.json",
        "cohort_spec": out / "cohort_spec.json",
    }
    atomic_write_text(paths["events"], "\n".join(course.event_log_lines()) + "\n")
    atomic_write_text(paths["grades"], "\n".join(course.grade_file_lines()) + "\n")
    atomic_write_text(
        paths["config"], canonical_json(config_to_dict(course.config)) + "\n"
    )
    atomic_write_text(
        paths["cohort_spec"],
        canonical_json(cohort_spec_to_dict(course.spec)) + "\n",
    )
    return paths
