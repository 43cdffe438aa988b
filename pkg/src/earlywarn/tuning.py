"""Cross-validated grid search over the learner hyperparameter grids.

Configurations are scored by the AUC of the pooled out-of-fold predictions.
Exact score ties resolve toward stronger regularization: larger penalty
then larger L1 share for the elastic net; larger node size, smaller mtry,
fewer trees for the forest; smaller depth, larger child weight, smaller
row/column subsampling, fewer rounds for boosting.  The winning
configuration is refit on all rows.

Boosting rounds are chosen by early stopping: every configuration is
trained to the grid's round cap and the pooled out-of-fold AUC is evaluated
after each round; the best round count becomes part of the winning
configuration.

A fold whose training part collapses to a single class is skipped with a
warning and its rows drop out of the pooled score; if every fold is skipped
the search fails.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import FitError
from .learners import (
    BoostParams,
    ForestParams,
    HyperGrid,
    boosting,
    canonical_learner,
    elastic_net,
    fit_elastic_net,
    fit_elastic_net_path,
    fit_gbt,
    fit_probability_forest,
    forest,
)
from .metrics import FoldPlan, auc_score, single_class_warning
from .tables import canonical_json, derive_seed


@dataclass(frozen=True)
class GridSearchResult:
    learner: str
    best_params: dict
    best_cv_auc: float
    model: object
    oof_probs: np.ndarray  # NaN where no out-of-fold prediction exists
    oof_mask: np.ndarray
    cv_table: tuple[tuple[str, float], ...]  # (canonical params, pooled AUC)
    skipped_folds: tuple[int, ...]


def grid_search_cv(
    X: np.ndarray,
    y: np.ndarray,
    learner: str,
    grid: HyperGrid,
    folds: FoldPlan,
    seed: int,
    feature_names: tuple[str, ...] | None = None,
) -> GridSearchResult:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    learner = canonical_learner(learner)
    usable, skipped = _usable_folds(y, folds)
    if not usable:
        raise FitError("all folds skipped: no training part holds both classes")
    if learner == "elastic_net":
        return _search_elastic_net(X, y, grid, folds, usable, skipped, feature_names)
    if learner == "probability_forest":
        return _search_forest(X, y, grid, folds, usable, skipped, seed, feature_names)
    return _search_boosting(X, y, grid, folds, usable, skipped, seed, feature_names)


def _usable_folds(y: np.ndarray, folds: FoldPlan) -> tuple[list[int], tuple[int, ...]]:
    usable: list[int] = []
    skipped: list[int] = []
    for fold in range(folds.k):
        train, _ = folds.split(fold)
        if y[train].min() == y[train].max():
            single_class_warning(fold)
            skipped.append(fold)
        else:
            usable.append(fold)
    return usable, tuple(skipped)


def _pooled_auc(y: np.ndarray, oof: np.ndarray, mask: np.ndarray) -> float:
    return auc_score(y[mask], oof[mask])


def _search_elastic_net(X, y, grid, folds, usable, skipped, feature_names):
    n = y.size
    alphas = grid.alphas
    lambdas = grid.lambdas
    oof = np.full((len(alphas), len(lambdas), n), np.nan)
    mask = np.zeros(n, dtype=bool)
    lam_pos = {lam: j for j, lam in enumerate(lambdas)}
    for fold in usable:
        train, val = folds.split(fold)
        mask[val] = True
        for i, alpha in enumerate(alphas):
            path = fit_elastic_net_path(X[train], y[train], alpha, lambdas)
            for lam, model in path.items():
                oof[i, lam_pos[lam], val] = elastic_net.predict_proba(model, X[val])

    cv_rows: list[tuple[str, float]] = []
    best = None  # (auc, lam, alpha, i, j)
    for i, alpha in enumerate(alphas):
        for j, lam in enumerate(lambdas):
            auc = _pooled_auc(y, oof[i, j], mask)
            cv_rows.append((canonical_json({"alpha": alpha, "lam": lam}), auc))
            key = (auc, lam, alpha)
            if best is None or key > best[:3]:
                best = (auc, lam, alpha, i, j)
    auc, lam, alpha, i, j = best
    model = fit_elastic_net(X, y, alpha, lam, feature_names=feature_names)
    return GridSearchResult(
        "elastic_net",
        {"alpha": alpha, "lam": lam},
        auc,
        model,
        oof[i, j],
        mask,
        tuple(cv_rows),
        skipped,
    )


def _search_forest(X, y, grid, folds, usable, skipped, seed, feature_names):
    n, p = X.shape
    configs = [
        {"mtry": mtry, "min_node_size": mns, "n_trees": n_trees}
        for mtry in grid.mtry_candidates(p)
        for mns in grid.forest_min_node_sizes
        for n_trees in grid.forest_n_trees
        if mns < n
    ]
    if not configs:
        raise FitError("no admissible forest configuration for this data size")

    cv_rows: list[tuple[str, float]] = []
    best = None  # (key, config_idx, oof)
    mask = np.zeros(n, dtype=bool)
    for idx, cfg in enumerate(configs):
        oof = np.full(n, np.nan)
        for fold in usable:
            train, val = folds.split(fold)
            mask[val] = True
            params = ForestParams(
                n_trees=cfg["n_trees"],
                mtry=cfg["mtry"],
                min_node_size=cfg["min_node_size"],
                seed=derive_seed(seed, "forest", idx, fold),
            )
            model = fit_probability_forest(X[train], y[train], params)
            oof[val] = forest.predict_proba(model, X[val])
        auc = _pooled_auc(y, oof, mask)
        cv_rows.append((canonical_json(cfg), auc))
        key = (auc, cfg["min_node_size"], -cfg["mtry"], -cfg["n_trees"])
        if best is None or key > best[0]:
            best = (key, idx, oof)

    _, idx, oof = best
    cfg = configs[idx]
    refit = fit_probability_forest(
        X,
        y,
        ForestParams(
            n_trees=cfg["n_trees"],
            mtry=cfg["mtry"],
            min_node_size=cfg["min_node_size"],
            seed=derive_seed(seed, "forest", idx, "refit"),
        ),
        feature_names=feature_names,
    )
    return GridSearchResult(
        "probability_forest",
        dict(cfg),
        best[0][0],
        refit,
        oof,
        mask,
        tuple(cv_rows),
        skipped,
    )


def _search_boosting(X, y, grid, folds, usable, skipped, seed, feature_names):
    n, p = X.shape
    combos = list(
        itertools.product(
            grid.boost_max_depths,
            grid.boost_min_child_weights,
            grid.boost_subsamples,
            grid.boost_colsamples,
        )
    )
    rounds_cap = grid.boost_n_rounds
    mask = np.zeros(n, dtype=bool)
    cv_rows: list[tuple[str, float]] = []
    best = None  # (key, config dict, oof at best rounds)
    for idx, (depth, mcw, sub, col) in enumerate(combos):
        staged = np.full((rounds_cap + 1, n), np.nan)
        for fold in usable:
            train, val = folds.split(fold)
            mask[val] = True
            params = BoostParams(
                max_depth=depth,
                min_child_weight=mcw,
                subsample=sub,
                colsample=col,
                n_rounds=rounds_cap,
                seed=derive_seed(seed, "boost", idx, fold),
            )
            model = fit_gbt(X[train], y[train], params, compute_importance=False)
            staged[:, val] = boosting.staged_decision_function(model, X[val])
        # early stopping: pooled out-of-fold AUC per round, ties to fewer rounds
        y_m = y[mask]
        aucs = np.array(
            [auc_score(y_m, staged[r, mask]) for r in range(1, rounds_cap + 1)]
        )
        best_round = int(np.argmax(aucs)) + 1
        auc = float(aucs[best_round - 1])
        cfg = {
            "max_depth": depth,
            "min_child_weight": mcw,
            "subsample": sub,
            "colsample": col,
            "n_rounds": best_round,
        }
        cv_rows.append((canonical_json(cfg), auc))
        key = (auc, -depth, mcw, -sub, -col, -best_round)
        if best is None or key > best[0]:
            oof = _sigmoid_masked(staged[best_round], mask)
            best = (key, cfg, oof)

    key, cfg, oof = best
    refit = fit_gbt(
        X,
        y,
        BoostParams(
            max_depth=cfg["max_depth"],
            min_child_weight=cfg["min_child_weight"],
            subsample=cfg["subsample"],
            colsample=cfg["colsample"],
            n_rounds=cfg["n_rounds"],
            seed=derive_seed(seed, "boost", "refit", canonical_json(cfg)),
        ),
        feature_names=feature_names,
    )
    return GridSearchResult(
        "gradient_boosting", cfg, key[0], refit, oof, mask, tuple(cv_rows), skipped
    )


def _sigmoid_masked(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = np.full(scores.shape, np.nan)
    z = scores[mask]
    pos = z >= 0
    vals = np.empty_like(z)
    vals[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    vals[~pos] = ez / (1.0 + ez)
    out[mask] = vals
    return out
