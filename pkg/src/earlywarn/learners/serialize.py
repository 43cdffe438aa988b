"""Model (de)serialization to a self-describing JSON document.

Every fitted model round-trips exactly: floats are emitted with their
shortest repr, so reloaded models predict bit-identically.
"""
from __future__ import annotations

import json

import numpy as np

from ..errors import ParseError
from ..tables import atomic_write_text
from .boosting import BoostModel, BoostParams
from .elastic_net import ElasticNetModel
from .forest import ForestModel, ForestParams
from .tree import Tree

FORMAT = "earlywarn-model/1"


def _tree_to_dict(tree: Tree) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "value": tree.value.tolist(),
    }


def _tree_from_dict(d: dict) -> Tree:
    return Tree(
        np.asarray(d["feature"], dtype=np.int32),
        np.asarray(d["threshold"], dtype=float),
        np.asarray(d["left"], dtype=np.int32),
        np.asarray(d["right"], dtype=np.int32),
        np.asarray(d["value"], dtype=float),
    )


def model_to_dict(model) -> dict:
    if isinstance(model, ElasticNetModel):
        return {
            "format": FORMAT,
            "kind": "elastic_net",
            "feature_names": list(model.feature_names),
            "alpha": model.alpha,
            "lam": model.lam,
            "intercept": model.intercept,
            "coef": model.coef.tolist(),
            "feature_means": model.feature_means.tolist(),
            "feature_sds": model.feature_sds.tolist(),
            "n_sweeps": model.n_sweeps,
            "converged": model.converged,
        }
    if isinstance(model, ForestModel):
        return {
            "format": FORMAT,
            "kind": "probability_forest",
            "feature_names": list(model.feature_names),
            "params": {
                "n_trees": model.params.n_trees,
                "mtry": model.params.mtry,
                "min_node_size": model.params.min_node_size,
                "seed": model.params.seed,
            },
            "gini_importance": model.gini_importance.tolist(),
            "trees": [_tree_to_dict(t) for t in model.trees],
        }
    if isinstance(model, BoostModel):
        p = model.params
        return {
            "format": FORMAT,
            "kind": "gradient_boosting",
            "feature_names": list(model.feature_names),
            "params": {
                "max_depth": p.max_depth,
                "min_child_weight": p.min_child_weight,
                "subsample": p.subsample,
                "colsample": p.colsample,
                "learning_rate": p.learning_rate,
                "n_rounds": p.n_rounds,
                "seed": p.seed,
            },
            "base_score": model.base_score,
            "permutation_importance": model.permutation_importance.tolist(),
            "trees": [_tree_to_dict(t) for t in model.trees],
        }
    raise TypeError(f"not a serializable model: {type(model).__name__}")


def model_from_dict(doc: dict):
    if doc.get("format") != FORMAT:
        raise ParseError(f"unknown model format {doc.get('format')!r}")
    kind = doc.get("kind")
    names = tuple(doc["feature_names"])
    if kind == "elastic_net":
        return ElasticNetModel(
            names,
            float(doc["alpha"]),
            float(doc["lam"]),
            float(doc["intercept"]),
            np.asarray(doc["coef"], dtype=float),
            np.asarray(doc["feature_means"], dtype=float),
            np.asarray(doc["feature_sds"], dtype=float),
            int(doc["n_sweeps"]),
            bool(doc["converged"]),
        )
    if kind == "probability_forest":
        return ForestModel(
            names,
            ForestParams(**doc["params"]),
            tuple(_tree_from_dict(t) for t in doc["trees"]),
            np.asarray(doc["gini_importance"], dtype=float),
        )
    if kind == "gradient_boosting":
        return BoostModel(
            names,
            BoostParams(**doc["params"]),
            float(doc["base_score"]),
            tuple(_tree_from_dict(t) for t in doc["trees"]),
            np.asarray(doc["permutation_importance"], dtype=float),
        )
    raise ParseError(f"unknown model kind {kind!r}")


def save_model(model, path: str) -> None:
    atomic_write_text(path, json.dumps(model_to_dict(model)) + "\n")


def load_model(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
