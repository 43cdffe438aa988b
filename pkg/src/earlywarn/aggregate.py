"""Cumulative aggregation of weekly features up to a prediction week.

Two strategies turn weekly rows into one row per student:

* progressive: running mean and running sample standard deviation of every
  weekly feature over weeks ``1..k``.  The column set is identical for every
  k, so week-k models share one schema.
* early_reset: identical to progressive while ``k < reset_week`` (default 5).
  From the reset week on, the weeks ``1..reset_week-1`` are summarized once
  into a ``frozen.`` block that never changes again, and a ``reset.`` block
  restarts the running statistics at the reset week.  Performance families
  (per1..per4) describe material that is mostly settled by then and appear
  only in the frozen block.

Standard deviations use the n-1 denominator; a single week yields 0.
"""
from __future__ import annotations

import numpy as np

from .features import PERFORMANCE_FAMILIES, Statistic, WeeklyFeatures
from .tables import FeatureTable

RESET_WEEK = 5


def _check_week(weekly: WeeklyFeatures, k: int) -> None:
    if not 1 <= k <= weekly.n_weeks:
        raise ValueError(f"week {k} outside 1..{weekly.n_weeks}")


def _mean_sd(block: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and sample SD over the week axis of (students, weeks, features)."""
    mean = block.mean(axis=1)
    if block.shape[1] < 2:
        sd = np.zeros_like(mean)
    else:
        sd = block.std(axis=1, ddof=1)
    return mean, sd


def _interleave(mean: np.ndarray, sd: np.ndarray) -> np.ndarray:
    out = np.empty((mean.shape[0], 2 * mean.shape[1]))
    out[:, 0::2] = mean
    out[:, 1::2] = sd
    return out


def aggregate_progressive(weekly: WeeklyFeatures, k: int) -> FeatureTable:
    """Running mean/SD over weeks 1..k; constant column set across k."""
    _check_week(weekly, k)
    mean, sd = _mean_sd(weekly.values[:, :k, :])
    columns: list[str] = []
    for fid in weekly.feature_ids:
        columns.append(fid.with_statistic(Statistic.CUM_MEAN).render())
        columns.append(fid.with_statistic(Statistic.CUM_SD).render())
    return FeatureTable(weekly.student_ids, tuple(columns), _interleave(mean, sd))


def aggregate_early_reset(
    weekly: WeeklyFeatures, k: int, reset_week: int = RESET_WEEK
) -> FeatureTable:
    """Frozen early-term block plus statistics restarted at the reset week.

    For ``k < reset_week`` the output equals :func:`aggregate_progressive`
    exactly.  From the reset week on, the frozen block is computed from
    weeks ``1..reset_week-1`` only, so its bytes are identical for every
    later k.
    """
    _check_week(weekly, k)
    if reset_week < 2:
        raise ValueError("reset_week must be >= 2")
    if k < reset_week:
        return aggregate_progressive(weekly, k)

    frozen_mean, frozen_sd = _mean_sd(weekly.values[:, : reset_week - 1, :])
    reset_mean, reset_sd = _mean_sd(weekly.values[:, reset_week - 1 : k, :])

    columns: list[str] = []
    blocks: list[np.ndarray] = []
    for j, fid in enumerate(weekly.feature_ids):
        columns.append("frozen." + fid.with_statistic(Statistic.CUM_MEAN).render())
        blocks.append(frozen_mean[:, j])
        columns.append("frozen." + fid.with_statistic(Statistic.CUM_SD).render())
        blocks.append(frozen_sd[:, j])
    for j, fid in enumerate(weekly.feature_ids):
        if fid.family in PERFORMANCE_FAMILIES:
            continue
        columns.append("reset." + fid.with_statistic(Statistic.CUM_MEAN).render())
        blocks.append(reset_mean[:, j])
        columns.append("reset." + fid.with_statistic(Statistic.CUM_SD).render())
        blocks.append(reset_sd[:, j])
    values = np.column_stack(blocks) if blocks else np.zeros((len(weekly.student_ids), 0))
    return FeatureTable(weekly.student_ids, tuple(columns), values)


def aggregate(weekly: WeeklyFeatures, k: int, strategy: str) -> FeatureTable:
    """Dispatch on strategy name ('progressive' or 'early_reset')."""
    if strategy == "progressive":
        return aggregate_progressive(weekly, k)
    if strategy == "early_reset":
        return aggregate_early_reset(weekly, k)
    raise ValueError(f"unknown aggregation strategy {strategy!r}")
