"""Core types for course event traces.

An event log is a stream of timestamped student interactions with course
material: task submissions, exercise page views, lecture slide downloads and
forum clicks.  This module defines the event and course-configuration types,
parses the external log format, groups events into study sessions, and maps
timestamps onto course weeks and deadline-relative windows.

Conventions
-----------
* All timestamps are UTC.  Week 1 starts at 00:00 UTC on the course start
  date; week ``w`` covers ``[start + (w-1)*7d, start + w*7d)``.
* A study session ends when more than 90 minutes pass between consecutive
  events of the same student.  A gap of exactly 90 minutes stays inside the
  session.
* Relative to an assignment deadline, an event falls in the on-time window
  (``redu1``, at or before the deadline), the week-after window (``redu2``,
  within 7 days past the deadline), or outside both (dropped).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from typing import Iterable, Mapping, Sequence

from .errors import ConfigError, ParseError

SESSION_GAP = timedelta(minutes=90)
WEEK = timedelta(days=7)
LATE_WINDOW = timedelta(days=7)

#: Column order of the external event-log format.  The header line is
#: required verbatim; optional fields are empty strings when absent.
EVENT_LOG_HEADER = "student_id,timestamp,kind,object_id,task_class,correct,points"

#: Grading scale; values at or above AT_RISK_GRADE count as at risk.
GRADE_SCALE = (0.7, 1.0, 1.3, 1.7, 2.0, 2.3, 2.7, 3.0, 3.3, 3.7, 4.0, 5.0)
AT_RISK_GRADE = 3.7


class EventKind(str, enum.Enum):
    SUBMISSION = "submission"
    PAGE_VIEW = "page_view"
    SLIDE_DOWNLOAD = "slide_download"
    FORUM_CLICK = "forum_click"


class TaskClass(str, enum.Enum):
    """Material class: digital incentivized, digital non-incentivized, paper."""

    INCENTIVIZED = "digital_incentivized"
    NONINCENTIVIZED = "digital_nonincentivized"
    PAPER = "paper"


class IncentivePolicy(str, enum.Enum):
    BONUS_POINTS = "bonus_points"
    EXAM_ADMISSION = "exam_admission"


class DeadlineWindow(str, enum.Enum):
    ON_TIME = "redu1"
    LATE_WEEK = "redu2"


@dataclass(frozen=True, slots=True)
class RawEvent:
    """One logged interaction.

    Parameters
    ----------
    student_id : str
        Opaque pseudonymous identifier.
    timestamp : datetime
        Timezone-aware UTC instant.
    kind : EventKind
    object_id : str
        Task, page, slide, or thread identifier.  Task ids use the form
        ``"<page_id>#<n>"`` so submissions resolve to their page.
    task_class : TaskClass or None
        Required for submissions and page views, absent otherwise.
    correct : bool or None
        Auto-grader verdict; submissions only.
    points : float or None
        Awarded points; paper submissions only.
    """

    student_id: str
    timestamp: datetime
    kind: EventKind
    object_id: str
    task_class: TaskClass | None = None
    correct: bool | None = None
    points: float | None = None

    def __post_init__(self):
        if self.timestamp.tzinfo is None or self.timestamp.utcoffset() != timedelta(0):
            raise ValueError(f"timestamp must be UTC-aware: {self.timestamp!r}")
        needs_class = self.kind in (EventKind.SUBMISSION, EventKind.PAGE_VIEW)
        if needs_class and self.task_class is None:
            raise ValueError(f"{self.kind.value} events require task_class")
        if not needs_class and self.task_class is not None:
            raise ValueError(f"{self.kind.value} events must not carry task_class")
        if self.correct is not None and self.kind is not EventKind.SUBMISSION:
            raise ValueError("correct is only meaningful on submissions")
        if self.points is not None:
            if self.kind is not EventKind.SUBMISSION or self.task_class is not TaskClass.PAPER:
                raise ValueError("points are only meaningful on paper submissions")
            if self.points < 0:
                raise ValueError("points must be nonnegative")


@dataclass(frozen=True, slots=True)
class AssignmentSpec:
    """One released assignment with its completion window.

    ``release_date`` is the day the material became available; the deadline
    is a UTC instant on the last day of the completion window.  For
    incentivized material the window spans exactly 7 or 14 calendar days
    (release day inclusive).
    """

    assignment_id: str
    task_class: TaskClass
    release_date: date
    deadline: datetime
    page_ids: tuple[str, ...]
    task_count_per_page: Mapping[str, int] = field(default_factory=dict)
    max_points: float | None = None

    def __post_init__(self):
        if self.deadline.tzinfo is None or self.deadline.utcoffset() != timedelta(0):
            raise ValueError("deadline must be UTC-aware")
        release_start = datetime.combine(self.release_date, datetime.min.time(), timezone.utc)
        if self.deadline <= release_start:
            raise ValueError(
                f"{self.assignment_id}: deadline {self.deadline} not after release "
                f"{self.release_date}"
            )
        window = self.deadline - release_start
        if self.task_class in (TaskClass.INCENTIVIZED, TaskClass.PAPER):
            # completion window must span exactly 7 or 14 calendar days
            ok = timedelta(days=6) < window <= timedelta(days=7) or timedelta(
                days=13
            ) < window <= timedelta(days=14)
            if not ok:
                raise ValueError(
                    f"{self.assignment_id}: incentivized window must span 7 or 14 "
                    f"days, got {window}"
                )
        if not self.page_ids:
            raise ValueError(f"{self.assignment_id}: needs at least one page")
        if len(set(self.page_ids)) != len(self.page_ids):
            raise ValueError(f"{self.assignment_id}: duplicate page ids")
        for page in self.page_ids:
            n = self.task_count_per_page.get(page, 0)
            if n < 1:
                raise ValueError(f"{self.assignment_id}: page {page} needs >= 1 task")
        if self.max_points is not None and self.max_points <= 0:
            raise ValueError(f"{self.assignment_id}: max_points must be positive")

    @property
    def n_tasks(self) -> int:
        return sum(self.task_count_per_page[p] for p in self.page_ids)

    def task_ids(self, page_id: str) -> tuple[str, ...]:
        return tuple(
            f"{page_id}#{i}" for i in range(1, self.task_count_per_page[page_id] + 1)
        )


@dataclass(frozen=True)
class CourseConfig:
    """Static description of one course run."""

    course_id: str
    start_date: date
    n_weeks: int
    assignments: tuple[AssignmentSpec, ...]
    incentive_policy: IncentivePolicy
    slide_forum_available: bool = True

    def __post_init__(self):
        if self.n_weeks < 1:
            raise ConfigError("n_weeks must be >= 1")
        start = self.start_instant
        end = start + self.n_weeks * WEEK
        seen_pages: set[str] = set()
        seen_ids: set[str] = set()
        for spec in self.assignments:
            if spec.assignment_id in seen_ids:
                raise ConfigError(f"duplicate assignment id {spec.assignment_id}")
            seen_ids.add(spec.assignment_id)
            if not (start < spec.deadline < end):
                raise ConfigError(
                    f"{spec.assignment_id}: deadline {spec.deadline} outside the "
                    f"course span ({start} .. {end})"
                )
            if spec.release_date < self.start_date:
                raise ConfigError(
                    f"{spec.assignment_id}: released before course start"
                )
            overlap = seen_pages.intersection(spec.page_ids)
            if overlap:
                raise ConfigError(f"pages assigned twice: {sorted(overlap)}")
            seen_pages.update(spec.page_ids)

    @property
    def start_instant(self) -> datetime:
        return datetime.combine(self.start_date, datetime.min.time(), timezone.utc)

    @property
    def end_instant(self) -> datetime:
        return self.start_instant + self.n_weeks * WEEK


@dataclass(frozen=True)
class Session:
    """A contiguous run of one student's events with gaps <= 90 minutes."""

    student_id: str
    events: tuple[RawEvent, ...]

    @property
    def start(self) -> datetime:
        return self.events[0].timestamp

    @property
    def end(self) -> datetime:
        return self.events[-1].timestamp


def assign_week(t: datetime, config: CourseConfig) -> int:
    """Course week (1-based) containing instant ``t``.

    Raises
    ------
    ValueError
        If ``t`` falls before week 1 or after week ``n_weeks``.
    """
    delta = t - config.start_instant
    if delta < timedelta(0):
        raise ValueError(f"{t} precedes the course start")
    week = int(delta // WEEK) + 1
    if week > config.n_weeks:
        raise ValueError(f"{t} is past week {config.n_weeks}")
    return week


def window_of(event_time: datetime, spec: AssignmentSpec) -> DeadlineWindow | None:
    """Deadline-relative window of an instant, or None past the late week."""
    if event_time <= spec.deadline:
        return DeadlineWindow.ON_TIME
    if event_time <= spec.deadline + LATE_WINDOW:
        return DeadlineWindow.LATE_WEEK
    return None


def sessionize(events: Sequence[RawEvent]) -> list[Session]:
    """Group one student's time-ordered events into study sessions.

    A new session starts when the gap to the previous event strictly
    exceeds 90 minutes.  The returned sessions partition the input.
    """
    if not events:
        return []
    student = events[0].student_id
    sessions: list[Session] = []
    current: list[RawEvent] = [events[0]]
    for prev, ev in zip(events, events[1:]):
        if ev.student_id != student:
            raise ValueError("sessionize expects events of a single student")
        if ev.timestamp < prev.timestamp:
            raise ValueError("events must be ordered by timestamp")
        if ev.timestamp - prev.timestamp > SESSION_GAP:
            sessions.append(Session(student, tuple(current)))
            current = [ev]
        else:
            current.append(ev)
    sessions.append(Session(student, tuple(current)))
    return sessions


def _parse_timestamp(text: str, line_no: int) -> datetime:
    if not text.endswith("Z"):
        raise ParseError(f"timestamp must be ISO-8601 with Z suffix: {text!r}", line_no)
    try:
        ts = datetime.fromisoformat(text[:-1])
    except ValueError:
        raise ParseError(f"bad timestamp {text!r}", line_no) from None
    return ts.replace(tzinfo=timezone.utc)


def _parse_bool(text: str, line_no: int) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ParseError(f"correct must be 'true' or 'false', got {text!r}", line_no)


def parse_event_log(
    lines: Iterable[str], config: CourseConfig | None = None
) -> list[RawEvent]:
    """Parse the external line-delimited event-log format.

    The first line must equal :data:`EVENT_LOG_HEADER`.  Events are returned
    sorted by ``(student_id, timestamp)``; input order is otherwise free.
    When ``config`` is given, each timestamp must lie within the tolerated
    span ``[course start - 7d, course end + 28d]``.

    Raises
    ------
    ParseError
        On any malformed line, with its 1-based line number.
    """
    it = iter(lines)
    try:
        header = next(it).rstrip("\n").rstrip("\r")
    except StopIteration:
        raise ParseError("empty event log, header line required", 1) from None
    if header != EVENT_LOG_HEADER:
        raise ParseError(f"header must be {EVENT_LOG_HEADER!r}", 1)

    lo = hi = None
    if config is not None:
        lo = config.start_instant - timedelta(days=7)
        hi = config.end_instant + timedelta(days=28)

    events: list[RawEvent] = []
    for line_no, raw in enumerate(it, start=2):
        line = raw.rstrip("\n").rstrip("\r")
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != 7:
            raise ParseError(f"expected 7 fields, found {len(cells)}", line_no)
        sid, ts_text, kind_text, object_id, class_text, correct_text, points_text = cells
        if not sid:
            raise ParseError("empty student_id", line_no)
        if not object_id:
            raise ParseError("empty object_id", line_no)
        ts = _parse_timestamp(ts_text, line_no)
        try:
            kind = EventKind(kind_text)
        except ValueError:
            raise ParseError(f"unknown event kind {kind_text!r}", line_no) from None
        task_class = None
        if class_text:
            try:
                task_class = TaskClass(class_text)
            except ValueError:
                raise ParseError(f"unknown task class {class_text!r}", line_no) from None
        correct = _parse_bool(correct_text, line_no) if correct_text else None
        points = None
        if points_text:
            try:
                points = float(points_text)
            except ValueError:
                raise ParseError(f"bad points value {points_text!r}", line_no) from None
        if lo is not None and not (lo <= ts <= hi):
            raise ParseError(
                f"timestamp {ts_text} outside tolerated course span", line_no
            )
        try:
            events.append(
                RawEvent(sid, ts, kind, object_id, task_class, correct, points)
            )
        except ValueError as exc:
            raise ParseError(str(exc), line_no) from None
    events.sort(key=lambda e: (e.student_id, e.timestamp))
    return events


def render_event(event: RawEvent) -> str:
    """Inverse of one parsed log line (used by the generator and tests)."""
    ts = event.timestamp.strftime("%Y-%m-%dT%H:%M:%SZ")
    task_class = event.task_class.value if event.task_class is not None else ""
    if event.correct is None:
        correct = ""
    else:
        correct = "true" if event.correct else "false"
    points = repr(float(event.points)) if event.points is not None else ""
    return ",".join(
        [event.student_id, ts, event.kind.value, event.object_id, task_class, correct, points]
    )


def events_by_student(events: Sequence[RawEvent]) -> dict[str, list[RawEvent]]:
    """Split a (student, timestamp)-sorted stream per student."""
    out: dict[str, list[RawEvent]] = {}
    for ev in events:
        out.setdefault(ev.student_id, []).append(ev)
    return out


def label_at_risk(grades: Mapping[str, float]) -> dict[str, bool]:
    """Map final grades to the binary at-risk label (grade >= 3.7).

    Raises
    ------
    ValueError
        If a grade is not on the grading scale (tolerance 1e-9).
    """
    labels: dict[str, bool] = {}
    for sid, grade in grades.items():
        if not any(abs(grade - g) <= 1e-9 for g in GRADE_SCALE):
            raise ValueError(f"grade {grade!r} for {sid!r} is not on the scale")
        labels[sid] = grade >= AT_RISK_GRADE - 1e-9
    return labels


def config_to_dict(config: CourseConfig) -> dict:
    """JSON-ready form of a course configuration (inverse of config_from_dict)."""
    return {
        "course_id": config.course_id,
        "start_date": config.start_date.isoformat(),
        "n_weeks": config.n_weeks,
        "incentive_policy": config.incentive_policy.value,
        "slide_forum_available": config.slide_forum_available,
        "assignments": [
            {
                "assignment_id": spec.assignment_id,
                "task_class": spec.task_class.value,
                "release_date": spec.release_date.isoformat(),
                "deadline": spec.deadline.strftime("%Y-%m-%dT%H:%M:%SZ"),
                "page_ids": list(spec.page_ids),
                "task_count_per_page": {
                    p: spec.task_count_per_page[p] for p in spec.page_ids
                },
                "max_points": spec.max_points,
            }
            for spec in config.assignments
        ],
    }


def config_from_dict(data: Mapping) -> CourseConfig:
    """Build a course configuration from its JSON form.

    Raises
    ------
    ConfigError
        On missing or malformed fields.
    """
    try:
        assignments = tuple(
            AssignmentSpec(
                assignment_id=a["assignment_id"],
                task_class=TaskClass(a["task_class"]),
                release_date=date.fromisoformat(a["release_date"]),
                deadline=_parse_timestamp(a["deadline"], 0),
                page_ids=tuple(a["page_ids"]),
                task_count_per_page=dict(a["task_count_per_page"]),
                max_points=a.get("max_points"),
            )
            for a in data["assignments"]
        )
        return CourseConfig(
            course_id=data["course_id"],
            start_date=date.fromisoformat(data["start_date"]),
            n_weeks=int(data["n_weeks"]),
            assignments=assignments,
            incentive_policy=IncentivePolicy(data["incentive_policy"]),
            slide_forum_available=bool(data.get("slide_forum_available", True)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, ParseError) as exc:
        raise ConfigError(f"bad course configuration: {exc}") from None


def parse_grades(lines: Iterable[str]) -> dict[str, float]:
    """Parse the 'student_id,grade' file; duplicate students are an error."""
    it = iter(lines)
    try:
        header = next(it).rstrip("\n").rstrip("\r")
    except StopIteration:
        raise ParseError("empty grade file, header line required", 1) from None
    if header != "student_id,grade":
        raise ParseError("header must be 'student_id,grade'", 1)
    grades: dict[str, float] = {}
    for line_no, raw in enumerate(it, start=2):
        line = raw.rstrip("\n").rstrip("\r")
        if not line:
            continue
        cells = line.split(",")
        if len(cells) != 2:
            raise ParseError(f"expected 2 fields, found {len(cells)}", line_no)
        sid, grade_text = cells
        if sid in grades:
            raise ParseError(f"duplicate grade for student {sid!r}", line_no)
        try:
            grades[sid] = float(grade_text)
        except ValueError:
            raise ParseError(f"bad grade {grade_text!r}", line_no) from None
    return grades
