"""Flat-array binary decision tree shared by the tree ensembles.

Nodes live in parallel arrays: ``feature[i] >= 0`` marks an internal node
sending rows with ``x[feature] <= threshold`` to ``left[i]`` and the rest to
``right[i]``; ``feature[i] == -1`` marks a leaf whose payload sits in
``value[i]`` (a class-1 proportion for probability forests, an additive
log-odds step for boosting).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray  # int32, LEAF for leaves
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    value: np.ndarray  # float64 leaf payload

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Leaf payload per row, vectorized level-by-level descent."""
        node = np.zeros(X.shape[0], dtype=np.int32)
        while True:
            feat = self.feature[node]
            moving = np.nonzero(feat >= 0)[0]
            if moving.size == 0:
                return self.value[node]
            cur = node[moving]
            go_left = X[moving, feat[moving]] <= self.threshold[cur]
            node[moving] = np.where(go_left, self.left[cur], self.right[cur])


class TreeBuilder:
    """Accumulates nodes during recursive growth, then freezes to a Tree."""

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def add_leaf(self, value: float) -> int:
        idx = len(self.feature)
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(float(value))
        return idx

    def add_split(self, feature: int, threshold: float) -> int:
        idx = len(self.feature)
        self.feature.append(int(feature))
        self.threshold.append(float(threshold))
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(0.0)
        return idx

    def wire(self, parent: int, left: int, right: int) -> None:
        self.left[parent] = left
        self.right[parent] = right

    def build(self) -> Tree:
        return Tree(
            np.asarray(self.feature, dtype=np.int32),
            np.asarray(self.threshold, dtype=float),
            np.asarray(self.left, dtype=np.int32),
            np.asarray(self.right, dtype=np.int32),
            np.asarray(self.value, dtype=float),
        )
