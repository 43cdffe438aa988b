"""Hyperparameter candidate grids.

Two presets exist: ``paper`` is the full search space (11 mixing values by
100 log-spaced penalties for the elastic net; node sizes, tree counts and
the mtry neighborhood for the forest; depth 3..10 with three 8-point ranges
for boosting), ``small`` is a reduced grid for quick runs and CI.  The
boosting learning rate is fixed at 0.1 and the round count is an upper
bound subject to early stopping on cross-validated AUC.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError

PRESETS = ("paper", "small")


@dataclass(frozen=True)
class HyperGrid:
    preset: str
    alphas: tuple[float, ...]
    lambdas: tuple[float, ...]
    forest_min_node_sizes: tuple[int, ...]
    forest_n_trees: tuple[int, ...]
    forest_mtry_full: bool  # False: only the sqrt(p) default
    boost_max_depths: tuple[int, ...]
    boost_min_child_weights: tuple[float, ...]
    boost_subsamples: tuple[float, ...]
    boost_colsamples: tuple[float, ...]
    boost_n_rounds: int

    def mtry_candidates(self, p: int) -> tuple[int, ...]:
        if p < 1:
            raise ParameterError("p must be >= 1")
        d = max(1, math.isqrt(p))
        if not self.forest_mtry_full:
            return (min(d, p),)
        lo = (d + 1) // 2
        hi = (3 * d) // 2
        values = list(range(lo, hi + 1)) + [(5 * d) // 2, 3 * d]
        return tuple(sorted({min(v, p) for v in values if v >= 1}))

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "alphas": list(self.alphas),
            "lambdas": list(self.lambdas),
            "forest_min_node_sizes": list(self.forest_min_node_sizes),
            "forest_n_trees": list(self.forest_n_trees),
            "forest_mtry_full": self.forest_mtry_full,
            "boost_max_depths": list(self.boost_max_depths),
            "boost_min_child_weights": list(self.boost_min_child_weights),
            "boost_subsamples": list(self.boost_subsamples),
            "boost_colsamples": list(self.boost_colsamples),
            "boost_n_rounds": self.boost_n_rounds,
        }


def hyper_grid(preset: str) -> HyperGrid:
    if preset == "paper":
        return HyperGrid(
            preset="paper",
            alphas=tuple(round(i / 10.0, 1) for i in range(11)),
            lambdas=tuple(float(v) for v in np.logspace(-3.0, 3.0, 100)),
            forest_min_node_sizes=(10, 12, 15, 17, 20, 23, 25, 30),
            forest_n_trees=(500, 1000, 2000),
            forest_mtry_full=True,
            boost_max_depths=tuple(range(3, 11)),
            boost_min_child_weights=tuple(float(v) for v in np.linspace(1.0, 10.0, 8)),
            boost_subsamples=tuple(float(v) for v in np.linspace(0.5, 1.0, 8)),
            boost_colsamples=tuple(float(v) for v in np.linspace(0.5, 1.0, 8)),
            boost_n_rounds=200,
        )
    if preset == "small":
        return HyperGrid(
            preset="small",
            alphas=(0.0, 0.5, 1.0),
            lambdas=tuple(float(v) for v in np.logspace(-3.0, 3.0, 10)),
            forest_min_node_sizes=(10, 25),
            forest_n_trees=(150,),
            forest_mtry_full=False,
            boost_max_depths=(3,),
            boost_min_child_weights=(1.0, 5.0),
            boost_subsamples=(0.8,),
            boost_colsamples=(0.8,),
            boost_n_rounds=100,
        )
    raise ParameterError(f"unknown grid preset {preset!r}; options: {PRESETS}")
