"""Weekly feature extraction and collinearity screening."""
import logging
from datetime import timedelta

import numpy as np
import pytest

from earlywarn.features import (
    ASSIGNMENT_FAMILIES,
    REPLICATION_EXCLUSIONS,
    FeatureId,
    Family,
    FeatureClass,
    Statistic,
    WeeklyFeatures,
    Window,
    extract_weekly_features,
    family_of_column,
    screen_collinear,
    weekly_feature_ids,
)
from earlywarn.tables import FeatureTable

from conftest import utc


def fid(family, cls, window) -> str:
    return FeatureId(family, cls, window, Statistic.RAW_WEEK).render()


def value(weekly: WeeklyFeatures, sid: str, week: int, name: str) -> float:
    row = weekly.student_ids.index(sid)
    col = weekly.column_names.index(name)
    return float(weekly.values[row, week - 1, col])


# ---------------------------------------------------------------------------
# column scheme
# ---------------------------------------------------------------------------

def test_weekly_feature_count_with_and_without_slides():
    with_course = weekly_feature_ids(True)
    without = weekly_feature_ids(False)
    # 16 families x 3 classes x 2 windows = 96, plus 2 course-level columns
    assert len(with_course) == 98
    assert len(without) == 96
    names = [f.render() for f in with_course]
    assert len(set(names)) == 98
    assert "eng1.I.redu1.raw_week" in names
    assert "lecture_clicks.course_level.na.raw_week" in names
    assert all("course_level" not in f.render() for f in without)


def test_feature_id_parse_render_round_trip():
    for f in weekly_feature_ids(True):
        assert FeatureId.parse(f.render()) == f


# ---------------------------------------------------------------------------
# hand-computed fixture values
# ---------------------------------------------------------------------------

@pytest.fixture
def weekly(fixture_config, fixture_events):
    return extract_weekly_features(fixture_events, fixture_config)


I, NI, P = FeatureClass.I, FeatureClass.NI, FeatureClass.P
R1, R2 = Window.ON_TIME, Window.LATE_WEEK


def test_incentivized_on_time_cell(weekly, fixture_config):
    deadline = fixture_config.assignments[0].deadline
    get = lambda fam: value(weekly, "s1", 1, fid(fam, I, R1))
    assert get(Family.ENG1) == 4.0          # four submissions
    lead_p1 = (deadline - utc(2024, 4, 2, 10, 0)).total_seconds() / 86400.0
    lead_p2 = (deadline - utc(2024, 4, 2, 12, 0)).total_seconds() / 86400.0
    assert get(Family.ENG2) == pytest.approx((lead_p1 + lead_p2) / 2, abs=1e-12)
    assert get(Family.ENG3) == 1.0          # submission on the deadline day
    assert get(Family.ENG4) == 0.0          # ... so not all-before-deadline
    assert get(Family.ENG5) == 15.0         # 10 + 5 minutes of page dwell
    assert get(Family.ENG6) == 1.0
    assert get(Family.ENG7) == 1.0          # wrong retry after p1 success
    assert get(Family.ENG8) == 0.0          # no page dwell after success
    assert get(Family.ENG9) == 2.0          # Tuesday and Sunday
    assert get(Family.ENG10) == 3.0         # three distinct sessions
    assert get(Family.PER1) == 1.0          # both pages fully solved
    assert get(Family.PER2) == 1.0
    assert get(Family.PER3) == 1.0
    assert get(Family.PER4) == 1.0
    assert get(Family.PAR1) == 1.0
    assert get(Family.PAR2) == 1.0


def test_incentivized_late_week_cell(weekly):
    get = lambda fam: value(weekly, "s1", 1, fid(fam, I, R2))
    assert get(Family.ENG1) == 0.0
    assert get(Family.ENG2) == 0.0          # post-deadline lead clips to 0
    assert get(Family.ENG5) == 0.0          # lone view ends its session
    assert get(Family.ENG6) == 0.0
    assert get(Family.ENG7) == 1.0          # revisit after earlier success
    assert get(Family.ENG9) == 1.0
    assert get(Family.ENG10) == 1.0
    assert get(Family.PER2) == 0.0
    assert get(Family.PER3) == 0.0          # started p1, solved nothing here


def test_nonincentivized_cell(weekly):
    get = lambda fam: value(weekly, "s1", 1, fid(fam, NI, R1))
    assert get(Family.ENG1) == 1.0
    assert get(Family.ENG3) == 0.0
    assert get(Family.ENG4) == 1.0          # submitted, before deadline day
    assert get(Family.ENG6) == 1.0
    assert get(Family.PER2) == 0.0          # the one submission was wrong
    assert get(Family.PAR1) == 1.0
    assert get(Family.PAR2) == 1.0


def test_paper_cell_anchored_to_release_week(weekly):
    # q1 events happen in week 2 and anchor to the release week 2
    get = lambda fam: value(weekly, "s1", 2, fid(fam, P, R1))
    assert get(Family.ENG1) == 1.0
    assert get(Family.ENG5) == 30.0         # 35-minute gap capped at 30
    assert get(Family.ENG7) == 0.0          # nothing after the success
    assert get(Family.PER1) == 0.0          # one of two tasks solved
    assert get(Family.PER2) == 0.5
    assert get(Family.PER3) == 0.5
    assert get(Family.PER4) == 0.0
    assert get(Family.PAR1) == 0.5
    assert get(Family.PAR2) == 1.0
    # week 1 has no paper assignment: everything stays zero
    assert value(weekly, "s1", 1, fid(Family.ENG1, P, R1)) == 0.0


def test_course_level_counts(weekly):
    lect = "lecture_clicks.course_level.na.raw_week"
    forum = "forum.course_level.na.raw_week"
    assert value(weekly, "s1", 1, lect) == 1.0
    assert value(weekly, "s1", 2, lect) == 0.0
    assert value(weekly, "s1", 2, forum) == 1.0
    assert value(weekly, "s1", 1, forum) == 0.0


def test_roster_students_without_events_are_zero(fixture_config, fixture_events):
    weekly = extract_weekly_features(
        fixture_events, fixture_config, roster=["s1", "s9"]
    )
    assert weekly.student_ids == ("s1", "s9")
    row = weekly.student_ids.index("s9")
    assert np.all(weekly.values[row] == 0.0)


def test_event_doubling_doubles_count_features(fixture_config, fixture_events):
    """A time-shifted disjoint copy of each event doubles additive counts."""
    shifted = [
        type(e)(
            e.student_id,
            e.timestamp + timedelta(hours=3),
            e.kind,
            e.object_id,
            e.task_class,
            e.correct,
            e.points,
        )
        for e in fixture_events
    ]
    merged = sorted(fixture_events + shifted, key=lambda e: (e.student_id, e.timestamp))
    base = extract_weekly_features(fixture_events, fixture_config)
    doubled = extract_weekly_features(merged, fixture_config)
    # eng1 (submission count) and course-level counts are additive
    for week in (1, 2):
        for cls in (I, NI, P):
            a = value(base, "s1", week, fid(Family.ENG1, cls, R1))
            b = value(doubled, "s1", week, fid(Family.ENG1, cls, R1))
            assert b == 2 * a
    assert value(doubled, "s1", 1, "lecture_clicks.course_level.na.raw_week") == 2.0


def test_weekly_round_trip(weekly):
    text = weekly.to_text()
    back = WeeklyFeatures.from_text(text)
    assert back.student_ids == weekly.student_ids
    assert back.n_weeks == weekly.n_weeks
    assert [f.render() for f in back.feature_ids] == [
        f.render() for f in weekly.feature_ids
    ]
    assert np.array_equal(back.values, weekly.values)


# ---------------------------------------------------------------------------
# screening
# ---------------------------------------------------------------------------

def _table(cols: dict[str, list[float]]) -> FeatureTable:
    names = tuple(cols)
    values = np.array([list(v) for v in zip(*cols.values())], dtype=float)
    sids = tuple(f"s{i}" for i in range(values.shape[0]))
    return FeatureTable(sids, names, values)


def test_screen_drops_perfectly_correlated_pair():
    rng = np.random.default_rng(0)
    a = rng.normal(size=40)
    b = 2.0 * a + 1.0          # |r| = 1 with a
    c = rng.normal(size=40)
    result = screen_collinear(_table({"a": a, "b": b, "c": c}))
    kept = result.table.columns
    assert "c" in kept
    assert len(kept) == 2      # one of a/b dropped
    assert len(result.report.collinear) == 1
    drop = result.report.collinear[0]
    assert abs(drop.r) == pytest.approx(1.0)


def test_screen_tie_drops_later_column():
    # a and b are identical: mean |r| against others ties exactly
    x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    result = screen_collinear(_table({"a": x, "b": x.copy()}))
    assert result.table.columns == ("a",)
    assert result.report.collinear[0].column == "b"
    assert result.report.collinear[0].partner == "a"


def test_screen_cutoff_is_strict():
    # the rule is |r| > cutoff: reaching the cutoff exactly is kept
    rng = np.random.default_rng(1)
    a = rng.normal(size=2000)
    b = 0.9 * a + np.sqrt(1 - 0.81) * rng.normal(size=2000)
    table = _table({"a": a, "b": b})
    r = abs(float(np.corrcoef(table.values.T)[0, 1]))
    kept = screen_collinear(table, cutoff=r + 1e-9)
    assert len(kept.table.columns) == 2
    dropped = screen_collinear(table, cutoff=r - 1e-9)
    assert len(dropped.table.columns) == 1


def test_screen_constant_columns_flagged_and_retained(caplog):
    rng = np.random.default_rng(2)
    table = _table({"a": rng.normal(size=10), "k": np.zeros(10)})
    with caplog.at_level(logging.WARNING):
        result = screen_collinear(table)
    assert "k" in result.report.constant
    assert "k" in result.table.columns
    assert any("constant" in r.message for r in caplog.records)


def test_screen_forced_exclusions_drop_matching_families():
    rng = np.random.default_rng(3)
    names = [
        "eng4.I.redu1.cum_mean",
        "eng8.P.redu2.cum_sd",
        "per1.NI.redu1.cum_mean",
        "per3.I.redu1.cum_mean",
        "par1.I.redu1.cum_mean",
        "eng1.I.redu1.cum_mean",   # survives
    ]
    table = _table({n: rng.normal(size=12) for n in names})
    result = screen_collinear(table, forced_exclusions=REPLICATION_EXCLUSIONS)
    assert result.table.columns == ("eng1.I.redu1.cum_mean",)
    forced_names = {f.name for f in result.report.forced}
    assert "per1 (duplicate)" in forced_names


def test_family_of_column_strips_block_prefixes():
    assert family_of_column("eng1.I.redu1.cum_mean") == "eng1"
    assert family_of_column("frozen.per2.P.redu2.cum_sd") == "per2"
    assert family_of_column("reset.eng10.NI.redu1.cum_mean") == "eng10"


def test_iter_rows_covers_report():
    rng = np.random.default_rng(4)
    x = rng.normal(size=15)
    table = _table({
        "per1.I.redu1.cum_mean": rng.normal(size=15),
        "eng1.I.redu1.cum_mean": x,
        "eng1.I.redu1.cum_sd": x.copy(),      # collinear drop
        "eng2.I.redu1.cum_mean": np.ones(15),  # constant
    })
    result = screen_collinear(table, forced_exclusions=REPLICATION_EXCLUSIONS)
    rows = list(result.report.iter_rows())
    kinds = {r[0] for r in rows}
    assert kinds == {"forced", "collinear", "constant"}
    text = result.report.to_text()
    assert text.startswith("kind,name,partner,r,note\n")
    assert len(text.strip().splitlines()) == len(rows) + 1
