"""Weekly behavioral and performance features from course event traces.

Each feature is identified by a four-part id ``family.class.window.statistic``
(e.g. ``eng1.I.redu1.raw_week``):

* family: what is measured (see the table below),
* class: material class, ``I`` (digital incentivized), ``NI`` (digital
  non-incentivized), ``P`` (paper), or ``course_level``,
* window: ``redu1`` (at or before the deadline), ``redu2`` (within the week
  after), or ``na`` for course-level families,
* statistic: ``raw_week`` for weekly values; aggregation adds ``cum_mean``
  and ``cum_sd``.

Engagement families (per class and window):

==========  ============================================================
eng1        number of task submissions
eng2        days between first page interaction and the deadline (mean
            over interacted pages, clipped at 0)
eng3        indicator: a submission happened on the deadline day
eng4        indicator: submitted and all submissions before the deadline day
eng5        minutes spent on exercise pages (session dwell, 30 min cap)
eng6        indicator: any interaction before the deadline day
eng7        indicator: any interaction after the first correct submission
eng8        minutes on pages after the first correct submission
eng9        number of distinct weekdays with interactions
eng10       number of distinct study sessions with interactions
==========  ============================================================

Performance and participation families: per1 proportion of fully correctly
solved pages, per2 proportion of correctly solved tasks, per3 the same on
started pages only, per4 points-weighted proportion of fully solved pages,
par1 proportion of tasks with a submission, par2 proportion of pages with a
submission.  Course-level families: lecture_clicks and forum counts per week
(absent entirely when the course offers no slide/forum data).

A week with no scheduled assignment of a class contributes zeros for that
class; students without any events keep all-zero rows.  Values are never NaN:
"no activity" is encoded as 0 and the indicator families double as
availability flags for the continuous ones.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, ParameterError, ParseError, SchemaError
from .tables import FeatureTable, format_value
from .trace import (
    AssignmentSpec,
    CourseConfig,
    DeadlineWindow,
    EventKind,
    RawEvent,
    TaskClass,
    assign_week,
    events_by_student,
    sessionize,
    window_of,
)

logger = logging.getLogger(__name__)

DWELL_CAP_SECONDS = 30 * 60.0


class Family(str, enum.Enum):
    ENG1 = "eng1"
    ENG2 = "eng2"
    ENG3 = "eng3"
    ENG4 = "eng4"
    ENG5 = "eng5"
    ENG6 = "eng6"
    ENG7 = "eng7"
    ENG8 = "eng8"
    ENG9 = "eng9"
    ENG10 = "eng10"
    PER1 = "per1"
    PER2 = "per2"
    PER3 = "per3"
    PER4 = "per4"
    PAR1 = "par1"
    PAR2 = "par2"
    LECTURE_CLICKS = "lecture_clicks"
    FORUM = "forum"


#: Families measured per (class, window) cell, in canonical column order.
ASSIGNMENT_FAMILIES = (
    Family.ENG1,
    Family.ENG2,
    Family.ENG3,
    Family.ENG4,
    Family.ENG5,
    Family.ENG6,
    Family.ENG7,
    Family.ENG8,
    Family.ENG9,
    Family.ENG10,
    Family.PER1,
    Family.PER2,
    Family.PER3,
    Family.PER4,
    Family.PAR1,
    Family.PAR2,
)

COURSE_FAMILIES = (Family.LECTURE_CLICKS, Family.FORUM)

#: Families carrying performance information; the early-reset aggregation
#: keeps these only in its frozen block.
PERFORMANCE_FAMILIES = frozenset({Family.PER1, Family.PER2, Family.PER3, Family.PER4})

INDICATOR_FAMILIES = frozenset({Family.ENG3, Family.ENG4, Family.ENG6, Family.ENG7})
PROPORTION_FAMILIES = frozenset(
    {Family.PER1, Family.PER2, Family.PER3, Family.PER4, Family.PAR1, Family.PAR2}
)


class FeatureClass(str, enum.Enum):
    I = "I"
    NI = "NI"
    P = "P"
    COURSE = "course_level"


_CLASS_OF_TASK_CLASS = {
    TaskClass.INCENTIVIZED: FeatureClass.I,
    TaskClass.NONINCENTIVIZED: FeatureClass.NI,
    TaskClass.PAPER: FeatureClass.P,
}

ASSIGNMENT_CLASSES = (FeatureClass.I, FeatureClass.NI, FeatureClass.P)


class Window(str, enum.Enum):
    ON_TIME = "redu1"
    LATE_WEEK = "redu2"
    NA = "na"


ASSIGNMENT_WINDOWS = (Window.ON_TIME, Window.LATE_WEEK)


class Statistic(str, enum.Enum):
    RAW_WEEK = "raw_week"
    CUM_MEAN = "cum_mean"
    CUM_SD = "cum_sd"


@dataclass(frozen=True, slots=True, order=True)
class FeatureId:
    family: Family
    feature_class: FeatureClass
    window: Window
    statistic: Statistic

    def render(self) -> str:
        return ".".join(
            (self.family.value, self.feature_class.value, self.window.value, self.statistic.value)
        )

    def with_statistic(self, statistic: Statistic) -> "FeatureId":
        return FeatureId(self.family, self.feature_class, self.window, statistic)

    @staticmethod
    def parse(text: str) -> "FeatureId":
        parts = text.split(".")
        if len(parts) != 4:
            raise ParseError(f"feature id needs 4 dot-separated parts: {text!r}")
        try:
            return FeatureId(
                Family(parts[0]), FeatureClass(parts[1]), Window(parts[2]), Statistic(parts[3])
            )
        except ValueError as exc:
            raise ParseError(f"bad feature id {text!r}: {exc}") from None


def weekly_feature_ids(slide_forum_available: bool) -> tuple[FeatureId, ...]:
    """Pre-screening weekly column inventory in canonical order."""
    ids = [
        FeatureId(fam, cls, win, Statistic.RAW_WEEK)
        for fam in ASSIGNMENT_FAMILIES
        for cls in ASSIGNMENT_CLASSES
        for win in ASSIGNMENT_WINDOWS
    ]
    if slide_forum_available:
        ids.extend(
            FeatureId(fam, FeatureClass.COURSE, Window.NA, Statistic.RAW_WEEK)
            for fam in COURSE_FAMILIES
        )
    return tuple(ids)


@dataclass(frozen=True)
class WeeklyFeatures:
    """Weekly feature values for a cohort: students x weeks x features."""

    student_ids: tuple[str, ...]
    n_weeks: int
    feature_ids: tuple[FeatureId, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        expected = (len(self.student_ids), self.n_weeks, len(self.feature_ids))
        if v.shape != expected:
            raise SchemaError(f"value block {v.shape}, expected {expected}")
        if np.isnan(v).any():
            raise ValueError("weekly features must not contain NaN")
        object.__setattr__(self, "values", v)

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(f.render() for f in self.feature_ids)

    def to_text(self) -> str:
        header = ("student_id", "week") + self.column_names
        lines = [",".join(header)]
        for i, sid in enumerate(self.student_ids):
            for w in range(self.n_weeks):
                cells = [sid, str(w + 1)]
                cells.extend(format_value(x) for x in self.values[i, w])
                lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "WeeklyFeatures":
        lines = [ln for ln in text.splitlines() if ln]
        if not lines:
            raise ParseError("empty weekly feature table", 1)
        header = lines[0].split(",")
        if header[:2] != ["student_id", "week"]:
            raise ParseError("weekly table must start with student_id,week", 1)
        feature_ids = tuple(FeatureId.parse(c) for c in header[2:])
        rows: dict[str, dict[int, list[float]]] = {}
        order: list[str] = []
        max_week = 0
        for no, line in enumerate(lines[1:], start=2):
            cells = line.split(",")
            if len(cells) != len(header):
                raise ParseError(f"expected {len(header)} cells", no)
            sid, week_text = cells[0], cells[1]
            try:
                week = int(week_text)
                vals = [float(c) for c in cells[2:]]
            except ValueError as exc:
                raise ParseError(str(exc), no) from None
            if sid not in rows:
                rows[sid] = {}
                order.append(sid)
            rows[sid][week] = vals
            max_week = max(max_week, week)
        values = np.zeros((len(order), max_week, len(feature_ids)))
        for i, sid in enumerate(order):
            for week, vals in rows[sid].items():
                values[i, week - 1] = vals
        return WeeklyFeatures(tuple(order), max_week, feature_ids, values)


class _ObjectIndex:
    """Resolves submission/page-view object ids to (assignment, page)."""

    def __init__(self, config: CourseConfig):
        self.by_object: dict[str, tuple[AssignmentSpec, str]] = {}
        self.anchor_week: dict[str, int] = {}
        for spec in config.assignments:
            release = datetime.combine(
                spec.release_date, datetime.min.time(), tzinfo=config.start_instant.tzinfo
            )
            self.anchor_week[spec.assignment_id] = assign_week(release, config)
            for page in spec.page_ids:
                self.by_object[page] = (spec, page)
                for task in spec.task_ids(page):
                    self.by_object[task] = (spec, page)

    def resolve(self, object_id: str) -> tuple[AssignmentSpec, str]:
        try:
            return self.by_object[object_id]
        except KeyError:
            raise SchemaError(
                f"event object {object_id!r} matches no assignment page or task"
            ) from None


class _CellAccumulator:
    """Per (student, class, window, anchor week) running state."""

    __slots__ = (
        "n_subs",
        "sub_on_deadline_day",
        "sub_on_or_after_deadline_day",
        "any_before_deadline_day",
        "dwell_minutes",
        "after_success_seen",
        "after_success_dwell",
        "first_interaction",
        "deadline_of_page",
        "weekdays",
        "sessions",
        "submitted_tasks",
        "correct_tasks",
        "pages_with_sub",
        "started_pages",
    )

    def __init__(self):
        self.n_subs = 0
        self.sub_on_deadline_day = False
        self.sub_on_or_after_deadline_day = False
        self.any_before_deadline_day = False
        self.dwell_minutes = 0.0
        self.after_success_seen = False
        self.after_success_dwell = 0.0
        self.first_interaction: dict[str, datetime] = {}
        self.deadline_of_page: dict[str, datetime] = {}
        self.weekdays: set[int] = set()
        self.sessions: set[int] = set()
        self.submitted_tasks: set[str] = set()
        self.correct_tasks: set[str] = set()
        self.pages_with_sub: set[str] = set()
        self.started_pages: set[str] = set()


def _is_successful(event: RawEvent) -> bool:
    """A correct digital submission or a paper submission earning points."""
    if event.kind is not EventKind.SUBMISSION:
        return False
    if event.task_class is TaskClass.PAPER:
        return event.points is not None and event.points > 0
    return bool(event.correct)


def _cell_denominators(config: CourseConfig, index: _ObjectIndex):
    """Scheduled task/page totals per (class, anchor week)."""
    totals: dict[tuple[FeatureClass, int], dict] = {}
    for spec in config.assignments:
        key = (_CLASS_OF_TASK_CLASS[spec.task_class], index.anchor_week[spec.assignment_id])
        entry = totals.setdefault(
            key, {"n_tasks": 0, "n_pages": 0, "page_weight": {}, "page_tasks": {}}
        )
        entry["n_tasks"] += spec.n_tasks
        entry["n_pages"] += len(spec.page_ids)
        weight = (
            spec.max_points / len(spec.page_ids) if spec.max_points is not None else 1.0
        )
        for page in spec.page_ids:
            entry["page_weight"][page] = weight
            entry["page_tasks"][page] = frozenset(spec.task_ids(page))
    return totals


def extract_weekly_features(
    events: Sequence[RawEvent],
    config: CourseConfig,
    roster: Iterable[str] | None = None,
) -> WeeklyFeatures:
    """Compute the weekly feature matrix for a cohort.

    ``events`` is the full (student, timestamp)-sorted stream of the course.
    ``roster`` adds students that must be present even without events (their
    rows are all zero).  Events on assignment material are anchored to the
    week the assignment was released; slide and forum events count in the
    week they occurred and are an error when the course declares no
    slide/forum data.
    """
    index = _ObjectIndex(config)
    denominators = _cell_denominators(config, index)
    per_student = events_by_student(events)

    ids = set(per_student)
    if roster is not None:
        ids.update(roster)
    student_ids = tuple(sorted(ids))
    feature_ids = weekly_feature_ids(config.slide_forum_available)
    col_of = {fid: i for i, fid in enumerate(feature_ids)}
    values = np.zeros((len(student_ids), config.n_weeks, len(feature_ids)))

    for row, sid in enumerate(student_ids):
        stream = per_student.get(sid, [])
        if not stream:
            continue
        _extract_for_student(stream, config, index, denominators, values[row], col_of)
    return WeeklyFeatures(student_ids, config.n_weeks, feature_ids, values)


def _extract_for_student(stream, config, index, denominators, out, col_of) -> None:
    sessions = sessionize(stream)

    # Dwell time of each event: gap to the next event in the same session,
    # capped at 30 minutes; the last event of a session contributes 0.
    dwell_min: dict[int, float] = {}
    session_of: dict[int, int] = {}
    pos = 0
    for s_idx, session in enumerate(sessions):
        evs = session.events
        for k, ev in enumerate(evs):
            session_of[pos] = s_idx
            if k + 1 < len(evs):
                gap = (evs[k + 1].timestamp - ev.timestamp).total_seconds()
                dwell_min[pos] = min(gap, DWELL_CAP_SECONDS) / 60.0
            else:
                dwell_min[pos] = 0.0
            pos += 1

    # First successful submission per page, across all windows, so that
    # re-engagement in the late week after an on-time success still counts.
    first_success: dict[str, datetime] = {}
    for ev in stream:
        if _is_successful(ev):
            _, page = index.resolve(ev.object_id)
            if page not in first_success or ev.timestamp < first_success[page]:
                first_success[page] = ev.timestamp

    cells: dict[tuple[FeatureClass, DeadlineWindow, int], _CellAccumulator] = {}
    for i, ev in enumerate(stream):
        if ev.kind is EventKind.SLIDE_DOWNLOAD or ev.kind is EventKind.FORUM_CLICK:
            if not config.slide_forum_available:
                raise ConfigError(
                    f"{ev.kind.value} event present but the course declares no "
                    "slide/forum data"
                )
            try:
                week = assign_week(ev.timestamp, config)
            except ValueError:
                continue  # outside the course span
            family = (
                Family.LECTURE_CLICKS
                if ev.kind is EventKind.SLIDE_DOWNLOAD
                else Family.FORUM
            )
            fid = FeatureId(family, FeatureClass.COURSE, Window.NA, Statistic.RAW_WEEK)
            out[week - 1, col_of[fid]] += 1.0
            continue

        spec, page = index.resolve(ev.object_id)
        window = window_of(ev.timestamp, spec)
        if window is None:
            continue  # beyond the late week, dropped
        cls = _CLASS_OF_TASK_CLASS[spec.task_class]
        anchor = index.anchor_week[spec.assignment_id]
        cell = cells.setdefault((cls, window, anchor), _CellAccumulator())

        deadline_day = spec.deadline.date()
        day = ev.timestamp.date()
        cell.started_pages.add(page)
        cell.weekdays.add(ev.timestamp.weekday())
        cell.sessions.add(session_of[i])
        if page not in cell.first_interaction or ev.timestamp < cell.first_interaction[page]:
            cell.first_interaction[page] = ev.timestamp
            cell.deadline_of_page[page] = spec.deadline
        if day < deadline_day:
            cell.any_before_deadline_day = True
        success_at = first_success.get(page)
        after_success = success_at is not None and ev.timestamp > success_at
        if after_success:
            cell.after_success_seen = True

        if ev.kind is EventKind.PAGE_VIEW:
            cell.dwell_minutes += dwell_min[i]
            if after_success:
                cell.after_success_dwell += dwell_min[i]
        else:  # submission
            cell.n_subs += 1
            cell.submitted_tasks.add(ev.object_id)
            cell.pages_with_sub.add(page)
            if _is_successful(ev):
                cell.correct_tasks.add(ev.object_id)
            if day == deadline_day:
                cell.sub_on_deadline_day = True
            if day >= deadline_day:
                cell.sub_on_or_after_deadline_day = True

    window_of_cell = {DeadlineWindow.ON_TIME: Window.ON_TIME, DeadlineWindow.LATE_WEEK: Window.LATE_WEEK}
    for (cls, dwindow, anchor), cell in cells.items():
        denom = denominators[(cls, anchor)]
        win = window_of_cell[dwindow]
        week_row = out[anchor - 1]

        def put(family: Family, value: float) -> None:
            fid = FeatureId(family, cls, win, Statistic.RAW_WEEK)
            week_row[col_of[fid]] = value

        put(Family.ENG1, float(cell.n_subs))
        if cell.first_interaction:
            leads = [
                max(
                    (cell.deadline_of_page[p] - t).total_seconds() / 86400.0,
                    0.0,
                )
                for p, t in cell.first_interaction.items()
            ]
            put(Family.ENG2, float(np.mean(leads)))
        put(Family.ENG3, 1.0 if cell.sub_on_deadline_day else 0.0)
        put(
            Family.ENG4,
            1.0 if cell.n_subs > 0 and not cell.sub_on_or_after_deadline_day else 0.0,
        )
        put(Family.ENG5, cell.dwell_minutes)
        put(Family.ENG6, 1.0 if cell.any_before_deadline_day else 0.0)
        put(Family.ENG7, 1.0 if cell.after_success_seen else 0.0)
        put(Family.ENG8, cell.after_success_dwell)
        put(Family.ENG9, float(len(cell.weekdays)))
        put(Family.ENG10, float(len(cell.sessions)))

        completed_pages = [
            p
            for p, tasks in denom["page_tasks"].items()
            if tasks <= cell.correct_tasks
        ]
        put(Family.PER1, len(completed_pages) / denom["n_pages"])
        put(Family.PER2, len(cell.correct_tasks) / denom["n_tasks"])
        started_tasks = sum(
            len(denom["page_tasks"][p]) for p in cell.started_pages
        )
        put(
            Family.PER3,
            len(cell.correct_tasks) / started_tasks if started_tasks else 0.0,
        )
        total_weight = sum(denom["page_weight"].values())
        won_weight = sum(denom["page_weight"][p] for p in completed_pages)
        put(Family.PER4, won_weight / total_weight if total_weight else 0.0)
        put(Family.PAR1, len(cell.submitted_tasks) / denom["n_tasks"])
        put(Family.PAR2, len(cell.pages_with_sub) / denom["n_pages"])


# ---------------------------------------------------------------------------
# Collinearity screening
# ---------------------------------------------------------------------------

#: Exclusions applied first when reproducing the published variable screen:
#: proportion of submitted tasks, the all-before-deadline indicator, time on
#: page after success, the proportion of fully solved pages (plus its literal
#: duplicate column), and the started-pages correctness proportion.
REPLICATION_EXCLUSIONS = (
    "par1",
    "eng4",
    "eng8",
    "per1",
    "per1 (duplicate)",
    "per3",
)


@dataclass(frozen=True)
class ForcedDrop:
    name: str
    columns: tuple[str, ...]
    note: str = ""


@dataclass(frozen=True)
class CollinearDrop:
    column: str
    partner: str
    r: float


@dataclass(frozen=True)
class DropReport:
    forced: tuple[ForcedDrop, ...]
    collinear: tuple[CollinearDrop, ...]
    constant: tuple[str, ...]

    def dropped_columns(self) -> list[str]:
        out = [c for f in self.forced for c in f.columns]
        out.extend(d.column for d in self.collinear)
        return out

    def iter_rows(self):
        """(kind, name, partner, r, note) tuples, one per report line."""
        for f in self.forced:
            for col in f.columns:
                yield ("forced", col, "", "", f.name)
            if not f.columns:
                yield ("forced", "", "", "", f"{f.name}: {f.note}")
        for d in self.collinear:
            yield ("collinear", d.column, d.partner, format_value(d.r), "")
        for c in self.constant:
            yield ("constant", c, "", "", "retained")

    def to_text(self) -> str:
        lines = ["kind,name,partner,r,note"]
        lines.extend(",".join(row) for row in self.iter_rows())
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ScreenResult:
    table: FeatureTable
    report: DropReport


def family_of_column(name: str) -> str:
    """Family token of a rendered (possibly block-prefixed) column name."""
    for prefix in ("frozen.", "reset."):
        if name.startswith(prefix):
            name = name[len(prefix):]
            break
    return name.split(".", 1)[0]


def screen_collinear(
    table: FeatureTable,
    cutoff: float = 0.90,
    forced_exclusions: Sequence[str] | None = None,
) -> ScreenResult:
    """Drop near-duplicate features by pairwise Pearson correlation.

    While any pair of non-constant columns has ``|r| > cutoff``, the member
    of the worst pair with the larger mean absolute correlation to the other
    remaining columns is dropped (ties drop the later column in table
    order).  Constant columns are flagged and retained but never enter the
    correlation computation.  ``forced_exclusions`` names feature families
    that are removed before screening; the marker ``" (duplicate)"`` on a
    name records a known duplicated family without requiring a second copy
    in the table.
    """
    if not 0.0 < cutoff < 1.0:
        raise ParameterError(f"cutoff must be in (0, 1), got {cutoff}")
    if table.n_rows < 2:
        raise ValueError("screening needs at least 2 rows")

    work = table
    forced_drops: list[ForcedDrop] = []
    if forced_exclusions:
        for name in forced_exclusions:
            family = name.removesuffix(" (duplicate)")
            cols = tuple(c for c in work.columns if family_of_column(c) == family)
            note = ""
            if name.endswith(" (duplicate)"):
                note = f"literal duplicate of {family}; columns already removed"
            forced_drops.append(ForcedDrop(name, cols, note))
            if cols:
                work = work.drop_columns(cols)

    sds = work.values.std(axis=0)
    constant = tuple(c for c, s in zip(work.columns, sds) if s == 0.0)
    if constant:
        logger.warning("screening: %d constant columns retained: %s",
                       len(constant), ", ".join(constant[:8]))

    live = [c for c, s in zip(work.columns, sds) if s > 0.0]
    collinear: list[CollinearDrop] = []
    if len(live) >= 2:
        sub = work.select_columns(live)
        corr = np.corrcoef(sub.values, rowvar=False)
        np.fill_diagonal(corr, 0.0)
        alive = np.ones(len(live), dtype=bool)
        while alive.sum() >= 2:
            acorr = np.abs(corr)
            acorr[~alive, :] = 0.0
            acorr[:, ~alive] = 0.0
            i, j = np.unravel_index(np.argmax(acorr), acorr.shape)
            if acorr[i, j] <= cutoff:
                break
            i, j = min(i, j), max(i, j)
            mean_i = acorr[i, alive].sum() / (alive.sum() - 1)
            mean_j = acorr[j, alive].sum() / (alive.sum() - 1)
            if mean_i > mean_j:
                drop, keep = i, j
            elif mean_j > mean_i:
                drop, keep = j, i
            else:
                drop, keep = j, i  # exact tie: the later column goes
            collinear.append(
                CollinearDrop(live[drop], live[keep], float(corr[i, j]))
            )
            alive[drop] = False
        kept = {live[k] for k in np.nonzero(alive)[0]}
        reduced_cols = [
            c for c in work.columns if c in kept or c in set(constant)
        ]
        work = work.select_columns(reduced_cols)

    report = DropReport(tuple(forced_drops), tuple(collinear), constant)
    return ScreenResult(work, report)
