"""Learners: elastic-net logistic regression, probability forest, GBT."""
from __future__ import annotations

import numpy as np

from ..errors import ParameterError
from ..tables import FeatureTable
from . import boosting, elastic_net, forest
from .boosting import BoostModel, BoostParams, fit_gbt
from .elastic_net import ElasticNetModel, fit_elastic_net, fit_elastic_net_path
from .forest import ForestModel, ForestParams, fit_probability_forest
from .grids import PRESETS, HyperGrid, hyper_grid
from .serialize import load_model, model_from_dict, model_to_dict, save_model

LEARNER_KINDS = ("elastic_net", "probability_forest", "gradient_boosting")

_ALIASES = {
    "en": "elastic_net",
    "rf": "probability_forest",
    "gbt": "gradient_boosting",
}


def canonical_learner(name: str) -> str:
    kind = _ALIASES.get(name, name)
    if kind not in LEARNER_KINDS:
        raise ParameterError(f"unknown learner {name!r}; options: {LEARNER_KINDS}")
    return kind


def learner_kind(model) -> str:
    if isinstance(model, ElasticNetModel):
        return "elastic_net"
    if isinstance(model, ForestModel):
        return "probability_forest"
    if isinstance(model, BoostModel):
        return "gradient_boosting"
    raise TypeError(f"not a model: {type(model).__name__}")


def predict_proba(model, data) -> np.ndarray:
    """Class-1 probabilities from any fitted model.

    ``data`` is either a plain (n, p) array in the model's column order or a
    :class:`FeatureTable`, which is reindexed by the model's feature names
    (missing columns raise a schema error).
    """
    if isinstance(data, FeatureTable):
        X = data.select_columns(model.feature_names).values
    else:
        X = np.asarray(data, dtype=float)
    kind = learner_kind(model)
    if kind == "elastic_net":
        return elastic_net.predict_proba(model, X)
    if kind == "probability_forest":
        return forest.predict_proba(model, X)
    return boosting.predict_proba(model, X)


def importance(model) -> list[tuple[str, float]]:
    """Ranked (feature, score) pairs; scheme depends on the learner.

    Elastic net: signed standardized coefficients (nonzero only).
    Probability forest: mean total Gini impurity decrease.
    Boosting: mean permutation AUC drop over 10 seeded permutations.
    """
    kind = learner_kind(model)
    if kind == "elastic_net":
        return elastic_net.importance(model)
    if kind == "probability_forest":
        return forest.importance(model)
    return boosting.importance(model)


__all__ = [
    "BoostModel",
    "BoostParams",
    "ElasticNetModel",
    "ForestModel",
    "ForestParams",
    "HyperGrid",
    "LEARNER_KINDS",
    "PRESETS",
    "canonical_learner",
    "fit_elastic_net",
    "fit_elastic_net_path",
    "fit_gbt",
    "fit_probability_forest",
    "hyper_grid",
    "importance",
    "learner_kind",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "predict_proba",
    "save_model",
]
