"""Probability calibration: sigmoid recalibration and reliability curves.

The recalibrator maps a raw probability p through its log-odds s and back
through a fitted sigmoid 1 / (1 + exp(a*s + b)).  Targets are smoothed
toward the prior: positives train toward (n_pos + 1) / (n_pos + 2) and
negatives toward 1 / (n_neg + 2), which keeps the fit finite even when the
raw scores separate the classes perfectly.  The two parameters are found by
Newton's method with step halving on the cross-entropy objective.

A fitted map is order-preserving exactly when a < 0 (larger raw score,
larger calibrated probability); callers should check `is_monotone` before
comparing rank metrics across the map.

Reliability is summarised by equal-count binning plus the slope/intercept
of an unpenalized logistic fit of the labels on the raw log-odds: slope 1,
intercept 0 is perfect calibration, slope < 1 means overconfidence.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FitError, ParameterError

RAW_CLIP = 1e-6
LOSS_CLIP = 1e-15
NEWTON_TOL = 1e-10
MAX_NEWTON_ITER = 200


@dataclass(frozen=True)
class PlattParams:
    a: float
    b: float
    converged: bool
    n_iter: int
    score_space: str = "log_odds"


def _logit(p: np.ndarray, clip: float) -> np.ndarray:
    q = np.clip(np.asarray(p, dtype=float), clip, 1.0 - clip)
    return np.log(q / (1.0 - q))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def fit_platt(probs: np.ndarray, labels: np.ndarray) -> PlattParams:
    """Fit the two-parameter sigmoid on raw probabilities vs binary labels."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if probs.shape != labels.shape or probs.ndim != 1:
        raise ParameterError("probs and labels must be equal-length vectors")
    if not np.isfinite(probs).all():
        raise ParameterError("probs must be finite")
    if not np.isin(labels, (0.0, 1.0)).all():
        raise ParameterError("labels must be 0/1")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ParameterError("calibration needs both classes")

    s = _logit(probs, RAW_CLIP)
    t_pos = (n_pos + 1.0) / (n_pos + 2.0)
    t_neg = 1.0 / (n_neg + 2.0)
    t = np.where(labels == 1.0, t_pos, t_neg)

    def loss(a: float, b: float) -> float:
        f = a * s + b
        # cross-entropy of sigma(-f) against smoothed targets, stable form
        return float(np.sum(t * f + np.logaddexp(0.0, -f)))

    a, b = -1.0, 0.0
    value = loss(a, b)
    converged = False
    it = 0
    for it in range(1, MAX_NEWTON_ITER + 1):
        f = a * s + b
        q = _sigmoid(f)
        resid = q - (1.0 - t)
        grad_a = float(np.dot(resid, s))
        grad_b = float(resid.sum())
        w = q * (1.0 - q)
        h_aa = float(np.dot(w, s * s)) + 1e-12
        h_ab = float(np.dot(w, s))
        h_bb = float(w.sum()) + 1e-12
        det = h_aa * h_bb - h_ab * h_ab
        if det <= 0:
            raise FitError(
                f"singular curvature in sigmoid recalibration at iter {it}: "
                f"a={a!r} b={b!r}"
            )
        step_a = (h_bb * grad_a - h_ab * grad_b) / det
        step_b = (h_aa * grad_b - h_ab * grad_a) / det
        if max(abs(step_a), abs(step_b)) < NEWTON_TOL:
            converged = True
            break
        scale = 1.0
        while scale >= 1e-10:
            na, nb = a - scale * step_a, b - scale * step_b
            nv = loss(na, nb)
            if nv < value + 1e-12:
                a, b, value = na, nb, nv
                break
            scale *= 0.5
        else:
            raise FitError(
                f"line search stalled in sigmoid recalibration at iter {it}: "
                f"a={a!r} b={b!r} loss={value!r}"
            )
    if not converged:
        raise FitError(
            f"sigmoid recalibration did not converge in {MAX_NEWTON_ITER} "
            f"iterations: a={a!r} b={b!r} loss={value!r}"
        )
    return PlattParams(a=a, b=b, converged=True, n_iter=it)


def apply_platt(params: PlattParams, probs: np.ndarray) -> np.ndarray:
    s = _logit(probs, RAW_CLIP)
    return _sigmoid(-(params.a * s + params.b))


def is_monotone(params: PlattParams) -> bool:
    return params.a < 0


@dataclass(frozen=True)
class CalibrationCurve:
    bin_mean_pred: tuple[float, ...]
    bin_frac_pos: tuple[float, ...]
    bin_counts: tuple[int, ...]
    slope: float
    intercept: float


def _logistic_slope_intercept(s: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Unpenalized logistic fit of y on scalar s: returns (slope, intercept).

    Newton iterations; on (near-)separation the slope diverges, so iteration
    stops after a cap and the large values are returned as-is.
    """
    if np.ptp(s) == 0:
        return float("nan"), float("nan")
    w0, w1 = 0.0, 0.0  # intercept, slope
    for _ in range(100):
        f = w0 + w1 * s
        q = _sigmoid(f)
        g0 = float(np.sum(q - y))
        g1 = float(np.dot(q - y, s))
        w = q * (1.0 - q)
        h00 = float(w.sum()) + 1e-12
        h01 = float(np.dot(w, s))
        h11 = float(np.dot(w, s * s)) + 1e-12
        det = h00 * h11 - h01 * h01
        if det <= 0:
            break
        d0 = (h11 * g0 - h01 * g1) / det
        d1 = (h00 * g1 - h01 * g0) / det
        w0 -= d0
        w1 -= d1
        if max(abs(d0), abs(d1)) < 1e-10:
            break
    return w1, w0


def calibration_curve(
    probs: np.ndarray, labels: np.ndarray, n_bins: int = 10
) -> CalibrationCurve:
    """Equal-count reliability bins plus a logistic calibration line.

    Rows are sorted by predicted probability and split into `n_bins`
    near-equal groups; each bin reports its mean prediction and observed
    positive fraction.  The slope/intercept come from an unpenalized
    logistic fit of the labels on the prediction log-odds.
    """
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if probs.shape != labels.shape or probs.ndim != 1:
        raise ParameterError("probs and labels must be equal-length vectors")
    if n_bins < 1:
        raise ParameterError(f"n_bins must be positive, got {n_bins}")
    if probs.size < n_bins:
        raise ParameterError(
            f"need at least n_bins={n_bins} points, got {probs.size}"
        )
    order = np.argsort(probs, kind="mergesort")
    chunks = np.array_split(order, n_bins)
    mean_pred = tuple(float(probs[c].mean()) for c in chunks)
    frac_pos = tuple(float(labels[c].mean()) for c in chunks)
    counts = tuple(int(c.size) for c in chunks)
    slope, intercept = _logistic_slope_intercept(_logit(probs, RAW_CLIP), labels)
    return CalibrationCurve(mean_pred, frac_pos, counts, slope, intercept)


def brier_score(probs: np.ndarray, labels: np.ndarray) -> float:
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    return float(np.mean((probs - labels) ** 2))


def log_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    p = np.clip(np.asarray(probs, dtype=float), LOSS_CLIP, 1.0 - LOSS_CLIP)
    y = np.asarray(labels, dtype=float)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))
