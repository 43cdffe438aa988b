"""Shared fixtures: a small hand-built course whose feature values are
worked out by hand in the tests."""
from __future__ import annotations

from datetime import date, datetime, timezone

import pytest

from earlywarn.trace import (
    AssignmentSpec,
    CourseConfig,
    EventKind,
    IncentivePolicy,
    RawEvent,
    TaskClass,
)


def utc(y, mo, d, h=0, mi=0, s=0) -> datetime:
    return datetime(y, mo, d, h, mi, s, tzinfo=timezone.utc)


@pytest.fixture
def fixture_config() -> CourseConfig:
    """4-week course: one incentivized, one non-incentivized, one paper
    assignment, slides/forum available."""
    a1 = AssignmentSpec(
        assignment_id="a1",
        task_class=TaskClass.INCENTIVIZED,
        release_date=date(2024, 4, 1),
        deadline=utc(2024, 4, 7, 23, 59),
        page_ids=("p1", "p2"),
        task_count_per_page={"p1": 2, "p2": 1},
    )
    a2 = AssignmentSpec(
        assignment_id="a2",
        task_class=TaskClass.NONINCENTIVIZED,
        release_date=date(2024, 4, 1),
        deadline=utc(2024, 4, 4, 12, 0),
        page_ids=("n1",),
        task_count_per_page={"n1": 1},
    )
    a3 = AssignmentSpec(
        assignment_id="a3",
        task_class=TaskClass.PAPER,
        release_date=date(2024, 4, 8),
        deadline=utc(2024, 4, 21, 23, 59),
        page_ids=("q1",),
        task_count_per_page={"q1": 2},
        max_points=10.0,
    )
    return CourseConfig(
        course_id="fix-a",
        start_date=date(2024, 4, 1),
        n_weeks=4,
        assignments=(a1, a2, a3),
        incentive_policy=IncentivePolicy.BONUS_POINTS,
        slide_forum_available=True,
    )


def make_course_data(course_id: str, n_students: int, n_weeks: int, seed: int,
                     n_feature_ids: int = 12):
    """Small randomized course for structural pipeline tests (no parsing).

    Uses a thin slice of the real feature vocabulary with random values, so
    grid searches stay fast while exercising the same code paths.
    """
    import numpy as np

    from earlywarn.features import WeeklyFeatures, weekly_feature_ids
    from earlywarn.transfer import CourseData

    ids = weekly_feature_ids(True)[:n_feature_ids]
    rng = np.random.default_rng(seed)
    student_ids = tuple(f"t{i:03d}" for i in range(n_students))
    labels = {sid: i % 2 == 0 for i, sid in enumerate(student_ids)}
    values = rng.random((n_students, n_weeks, len(ids)))
    # plant a weak signal so fits are not pure noise
    y = np.array([1.0 if labels[s] else 0.0 for s in student_ids])
    values[:, :, 0] += 0.8 * y[:, None]
    weekly = WeeklyFeatures(student_ids, n_weeks, ids, values)

    a1 = AssignmentSpec(
        assignment_id="a1",
        task_class=TaskClass.INCENTIVIZED,
        release_date=date(2024, 4, 1),
        deadline=utc(2024, 4, 7, 23, 59),
        page_ids=("p1",),
        task_count_per_page={"p1": 1},
    )
    config = CourseConfig(
        course_id=course_id,
        start_date=date(2024, 4, 1),
        n_weeks=n_weeks,
        assignments=(a1,),
        incentive_policy=IncentivePolicy.BONUS_POINTS,
        slide_forum_available=True,
    )
    return CourseData(course_id, weekly, labels, config)


@pytest.fixture
def fixture_events() -> list[RawEvent]:
    """One student's trace covering every feature family at least once.

    Chronological shape (all 2024, UTC):
      04-02 10:00 view p1      (I)   dwell 10 to next
      04-02 10:10 sub  p1#1    (I)   correct
      04-02 10:20 sub  p1#2    (I)   wrong
      04-02 12:00 view p2      (I)   new session (100 min gap), dwell 5
      04-02 12:05 sub  p2#1    (I)   correct
      04-02 16:00 slide_download slides01
      04-03 08:00 sub  n1#1    (NI)  wrong
      04-07 09:00 sub  p1#2    (I)   correct, on the deadline day
      04-09 08:00 view p1      (I)   late week (redu2)
      04-09 11:00 forum_click forum02
      04-10 14:00 view q1      (P)   dwell 35 -> capped at 30
      04-10 14:35 sub  q1#1    (P)   7.5 points
    """
    I, NI, P = TaskClass.INCENTIVIZED, TaskClass.NONINCENTIVIZED, TaskClass.PAPER
    V, S = EventKind.PAGE_VIEW, EventKind.SUBMISSION
    return [
        RawEvent("s1", utc(2024, 4, 2, 10, 0), V, "p1", I),
        RawEvent("s1", utc(2024, 4, 2, 10, 10), S, "p1#1", I, correct=True),
        RawEvent("s1", utc(2024, 4, 2, 10, 20), S, "p1#2", I, correct=False),
        RawEvent("s1", utc(2024, 4, 2, 12, 0), V, "p2", I),
        RawEvent("s1", utc(2024, 4, 2, 12, 5), S, "p2#1", I, correct=True),
        RawEvent("s1", utc(2024, 4, 2, 16, 0), EventKind.SLIDE_DOWNLOAD, "slides01"),
        RawEvent("s1", utc(2024, 4, 3, 8, 0), S, "n1#1", NI, correct=False),
        RawEvent("s1", utc(2024, 4, 7, 9, 0), S, "p1#2", I, correct=True),
        RawEvent("s1", utc(2024, 4, 9, 8, 0), V, "p1", I),
        RawEvent("s1", utc(2024, 4, 9, 11, 0), EventKind.FORUM_CLICK, "forum02"),
        RawEvent("s1", utc(2024, 4, 10, 14, 0), V, "q1", P),
        RawEvent("s1", utc(2024, 4, 10, 14, 35), S, "q1#1", P, points=7.5),
    ]
