"""Ranking and classification metrics, decision thresholds, fold plans.

The flagging rule everywhere is ``probability >= threshold -> positive``.
AUC uses the rank-sum pair formula with half credit for ties.  F1 is the
NaN sentinel when no positive predictions or no positive cases exist;
Cohen's kappa uses marginal-product chance agreement, can be negative, and
is defined as 0 when predictions (or both margins) are constant.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import MetricUndefinedError, ParameterError


@dataclass(frozen=True)
class Threshold:
    value: float
    policy: str  # "youden_source" or "prevalence_target"

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ParameterError(f"threshold outside [0, 1]: {self.value}")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricReport:
    auc: float
    acc: float
    sens: float
    spec: float
    f1: float
    kappa: float
    threshold: float
    n_flagged: int


def _check_probs(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or probs.size == 0:
        raise ParameterError("probabilities must be a nonempty 1-d array")
    if np.isnan(probs).any() or probs.min() < 0.0 or probs.max() > 1.0:
        raise ParameterError("probabilities must lie in [0, 1]")
    return probs


def _check_labels(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.dtype == bool:
        labels = labels.astype(float)
    labels = labels.astype(float)
    if not np.isin(labels, (0.0, 1.0)).all():
        raise ParameterError("labels must be binary 0/1")
    return labels


def auc_rank(scores_pos: np.ndarray, scores_neg: np.ndarray) -> float:
    """Probability a random positive outranks a random negative, ties at 1/2.

    Computed with mid-ranks: AUC = (R_pos - n_pos (n_pos + 1) / 2)
    / (n_pos n_neg), where R_pos is the rank sum of the positives in the
    pooled ordering.
    """
    pos = np.asarray(scores_pos, dtype=float)
    neg = np.asarray(scores_neg, dtype=float)
    if pos.size == 0 or neg.size == 0:
        raise MetricUndefinedError("AUC needs at least one score of each class")
    pooled = np.concatenate([pos, neg])
    _, inverse, counts = np.unique(pooled, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    midranks = ends - (counts - 1) / 2.0  # average of each tie run's ranks
    rank_sum_pos = midranks[inverse[: pos.size]].sum()
    return float(
        (rank_sum_pos - pos.size * (pos.size + 1) / 2.0) / (pos.size * neg.size)
    )


def auc_score(labels: np.ndarray, probs: np.ndarray) -> float:
    labels = _check_labels(labels)
    probs = np.asarray(probs, dtype=float)
    return auc_rank(probs[labels == 1.0], probs[labels == 0.0])


def _candidate_thresholds(probs: np.ndarray) -> np.ndarray:
    uniq = np.unique(probs)
    mids = (uniq[1:] + uniq[:-1]) / 2.0
    return np.unique(np.concatenate([np.array([0.0, 1.0]), mids]))


def youden_threshold(probs: np.ndarray, labels: np.ndarray) -> Threshold:
    """Candidate threshold maximizing J = sensitivity + specificity - 1.

    Candidates are the midpoints between adjacent distinct probabilities
    plus {0, 1}; exact ties go to the smallest threshold.
    """
    probs = _check_probs(probs)
    labels = _check_labels(labels)
    if labels.size != probs.size:
        raise ParameterError("labels and probabilities differ in length")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("Youden's J needs both classes")

    cands = _candidate_thresholds(probs)
    pos_sorted = np.sort(probs[labels == 1.0])
    neg_sorted = np.sort(probs[labels == 0.0])
    tp = n_pos - np.searchsorted(pos_sorted, cands, side="left")
    fp = n_neg - np.searchsorted(neg_sorted, cands, side="left")
    j = tp / n_pos + (n_neg - fp) / n_neg - 1.0
    best = int(np.argmax(j))  # first maximum: smallest threshold
    return Threshold(float(cands[best]), "youden_source")


def prevalence_threshold(probs: np.ndarray, target_prevalence: float) -> Threshold:
    """Threshold flagging the achievable fraction closest to the target.

    Equivalent to cutting at the empirical (1 - target) quantile; with ties
    the smaller threshold (flagging more) wins.
    """
    probs = _check_probs(probs)
    if not 0.0 < target_prevalence < 1.0:
        raise ParameterError("target prevalence must be in (0, 1)")
    n = probs.size
    sorted_probs = np.sort(probs)
    cands = np.unique(sorted_probs)
    if cands[-1] < 1.0:
        cands = np.append(cands, 1.0)  # flag-none cut when no probability is 1
    flagged = n - np.searchsorted(sorted_probs, cands, side="left")
    err = np.abs(flagged / n - target_prevalence)
    best = int(np.argmin(err))  # ascending candidates: smaller threshold wins
    return Threshold(float(cands[best]), "prevalence_target")


def confusion(labels: np.ndarray, flags: np.ndarray) -> ConfusionMatrix:
    labels = _check_labels(labels)
    flags = np.asarray(flags, dtype=bool)
    if flags.shape != labels.shape:
        raise ParameterError("labels and flags differ in shape")
    pos = labels == 1.0
    return ConfusionMatrix(
        tp=int((flags & pos).sum()),
        fp=int((flags & ~pos).sum()),
        fn=int((~flags & pos).sum()),
        tn=int((~flags & ~pos).sum()),
    )


def metrics_from_confusion(cm: ConfusionMatrix) -> MetricReport:
    """Accuracy, sensitivity, specificity, F1, and kappa from one matrix.

    Each value is a single integer division, so results agree bit-for-bit
    with exact rational evaluation.  AUC and threshold are NaN here; callers
    with scores fill them in.
    """
    tp, fp, fn, tn = cm.tp, cm.fp, cm.fn, cm.tn
    if min(tp, fp, fn, tn) < 0:
        raise ParameterError("confusion cells must be nonnegative")
    n = cm.n
    if n == 0:
        raise MetricUndefinedError("empty confusion matrix")
    nan = float("nan")
    acc = (tp + tn) / n
    sens = tp / (tp + fn) if tp + fn > 0 else nan
    spec = tn / (tn + fp) if tn + fp > 0 else nan
    f1 = 2 * tp / (2 * tp + fp + fn) if (tp + fp > 0 and tp + fn > 0) else nan
    # kappa via integer arithmetic: chance agreement from the margins
    margin = (tp + fn) * (tp + fp) + (fp + tn) * (fn + tn)
    denom = n * n - margin
    kappa = (n * (tp + tn) - margin) / denom if denom != 0 else 0.0
    return MetricReport(nan, acc, sens, spec, f1, kappa, nan, tp + fp)


def score_predictions(
    labels: np.ndarray, probs: np.ndarray, threshold: Threshold
) -> MetricReport:
    """Full report for scored predictions under a flagging threshold."""
    probs = _check_probs(probs)
    labels = _check_labels(labels)
    flags = probs >= threshold.value
    report = metrics_from_confusion(confusion(labels, flags))
    auc = auc_score(labels, probs)
    return replace(report, auc=auc, threshold=threshold.value)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    fold_of: np.ndarray  # fold index per row
    seed: int
    student_ids: tuple[str, ...] | None = None

    @property
    def assignment(self) -> dict[str, int]:
        if self.student_ids is None:
            raise ParameterError("fold plan carries no student ids")
        return {s: int(f) for s, f in zip(self.student_ids, self.fold_of)}

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(train_rows, validation_rows) for one fold."""
        val = np.nonzero(self.fold_of == fold)[0]
        train = np.nonzero(self.fold_of != fold)[0]
        return train, val


def stratified_kfold(
    labels: np.ndarray,
    k: int,
    seed: int,
    student_ids: tuple[str, ...] | None = None,
) -> FoldPlan:
    """Seeded stratified fold assignment.

    Each class is shuffled and dealt round-robin, so per-class fold counts
    differ from perfect stratification by at most one.  Requires
    ``2 <= k <=`` the minority class count.
    """
    labels = _check_labels(labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if k < 2:
        raise ParameterError("k must be >= 2")
    if k > min(n_pos, n_neg):
        raise ParameterError(
            f"k={k} exceeds the minority class count {min(n_pos, n_neg)}"
        )
    rng = np.random.default_rng(seed)
    fold_of = np.empty(labels.size, dtype=np.int32)
    for cls in (0.0, 1.0):
        rows = np.nonzero(labels == cls)[0]
        rng.shuffle(rows)
        fold_of[rows] = np.arange(rows.size) % k
    return FoldPlan(k, fold_of, seed, student_ids)


def single_class_warning(fold: int) -> None:
    warnings.warn(
        f"fold {fold}: training part contains a single class, fold skipped",
        RuntimeWarning,
        stacklevel=2,
    )
