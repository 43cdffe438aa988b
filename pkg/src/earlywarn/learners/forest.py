"""Probability forest: bagged decision trees with class-proportion leaves.

Each tree is grown on a bootstrap sample.  At every node a random draw of
``mtry`` features is inspected; the split maximizing the Gini impurity
decrease wins, with exact ties broken toward the lowest feature index and
then the lowest threshold so that a fixed seed reproduces the forest
bit-for-bit.  Candidate thresholds are midpoints between consecutive
distinct feature values.  A split is only valid when both children keep at
least ``min_node_size`` samples, which keeps leaves large enough for their
class proportions to act as probability estimates; predictions average the
leaf proportions over trees.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ParameterError
from .tree import Tree, TreeBuilder


@dataclass(frozen=True)
class ForestParams:
    n_trees: int
    mtry: int
    min_node_size: int
    seed: int = 0


@dataclass(frozen=True)
class ForestModel:
    feature_names: tuple[str, ...]
    params: ForestParams
    trees: tuple[Tree, ...]
    gini_importance: np.ndarray  # mean weighted impurity decrease per feature


def _validate(X: np.ndarray, y: np.ndarray, params: ForestParams) -> None:
    n, p = X.shape
    if not np.isfinite(X).all():
        raise ParameterError("X contains non-finite values")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ParameterError("y must be binary 0/1")
    if params.n_trees < 1:
        raise ParameterError("n_trees must be >= 1")
    if not 1 <= params.mtry <= p:
        raise ParameterError(f"mtry must be in [1, {p}], got {params.mtry}")
    if not 1 <= params.min_node_size < n:
        raise ParameterError(
            f"min_node_size must be in [1, {n - 1}], got {params.min_node_size}"
        )


def _best_split(Xb, yb, rows, mtry, min_node_size, rng):
    """Best (feature, threshold, gain, left_rows, right_rows) or None.

    Gain is the unnormalized child-impurity reduction
    ``sum_counts - (sum_counts_L + sum_counts_R)`` with
    ``sum_counts = n - (pos^2 + neg^2)/n``, proportional to the weighted
    Gini decrease.
    """
    n = rows.size
    pos_total = yb[rows].sum()
    parent = n - (pos_total**2 + (n - pos_total) ** 2) / n
    p = Xb.shape[1]
    chosen = np.sort(rng.choice(p, size=mtry, replace=False))

    best = None  # (gain, feature, threshold, order, split_pos)
    for f in chosen:
        v = Xb[rows, f]
        order = np.argsort(v, kind="mergesort")
        vs = v[order]
        boundaries = np.nonzero(vs[1:] > vs[:-1])[0]  # split after index i
        if boundaries.size == 0:
            continue
        n_left = boundaries + 1
        n_right = n - n_left
        valid = (n_left >= min_node_size) & (n_right >= min_node_size)
        if not valid.any():
            continue
        boundaries = boundaries[valid]
        n_left = n_left[valid]
        n_right = n_right[valid]
        pos_cum = np.cumsum(yb[rows][order])
        pos_left = pos_cum[boundaries]
        pos_right = pos_total - pos_left
        child = (
            n_left
            - (pos_left**2 + (n_left - pos_left) ** 2) / n_left
            + n_right
            - (pos_right**2 + (n_right - pos_right) ** 2) / n_right
        )
        k = int(np.argmin(child))  # first minimum: lowest threshold wins ties
        gain = parent - child[k]
        if gain <= 1e-12:
            continue
        if best is None or gain > best[0]:  # strict: lowest feature wins ties
            b = boundaries[k]
            threshold = (vs[b] + vs[b + 1]) / 2.0
            best = (gain, int(f), threshold, order, b)
    if best is None:
        return None
    gain, f, threshold, order, b = best
    left_rows = rows[order[: b + 1]]
    right_rows = rows[order[b + 1 :]]
    return gain, f, threshold, left_rows, right_rows


def _grow_tree(Xb, yb, params, rng, importance, n_root):
    builder = TreeBuilder()

    def grow(rows) -> int:
        n = rows.size
        pos = yb[rows].sum()
        if pos == 0 or pos == n or n < 2 * params.min_node_size:
            return builder.add_leaf(pos / n)
        found = _best_split(Xb, yb, rows, params.mtry, params.min_node_size, rng)
        if found is None:
            return builder.add_leaf(pos / n)
        gain, f, threshold, left_rows, right_rows = found
        importance[f] += gain / n_root  # == (n/n_root) * per-sample Gini decrease
        node = builder.add_split(f, threshold)
        builder.wire(node, grow(left_rows), grow(right_rows))
        return node

    grow(np.arange(Xb.shape[0]))
    return builder.build()


def fit_probability_forest(
    X: np.ndarray,
    y: np.ndarray,
    params: ForestParams,
    feature_names: Sequence[str] | None = None,
) -> ForestModel:
    """Grow the forest; a fixed ``params.seed`` reproduces it exactly."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    _validate(X, y, params)
    n, p = X.shape
    names = (
        tuple(feature_names)
        if feature_names is not None
        else tuple(f"x{i}" for i in range(p))
    )
    if len(names) != p:
        raise ParameterError(f"{len(names)} names for {p} columns")

    streams = np.random.SeedSequence(params.seed).spawn(params.n_trees)
    trees: list[Tree] = []
    importance = np.zeros(p)
    for child in streams:
        rng = np.random.default_rng(child)
        sample = rng.integers(0, n, size=n)
        trees.append(_grow_tree(X[sample], y[sample], params, rng, importance, n))
    importance /= params.n_trees
    return ForestModel(names, params, tuple(trees), importance)


def predict_proba(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """Mean leaf class-1 proportion over trees; lies in [0, 1]."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise ParameterError(
            f"X must have {len(model.feature_names)} columns"
        )
    total = np.zeros(X.shape[0])
    for tree in model.trees:
        total += tree.predict(X)
    return total / len(model.trees)


def importance(model: ForestModel) -> list[tuple[str, float]]:
    """Total Gini impurity decrease per feature, averaged over trees."""
    pairs = [
        (name, float(v))
        for name, v in zip(model.feature_names, model.gini_importance)
    ]
    pairs.sort(key=lambda kv: (-kv[1], kv[0]))
    return pairs
