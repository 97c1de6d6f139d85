"""Bagged and extremely randomized tree ensembles."""

from __future__ import annotations

import numpy as np

from .base import TrainedModel, as_matrix, check_training_inputs
from .tree import Tree, grow_tree, int_codes_or_none


class EnsembleModel(TrainedModel):
    family = "forest"

    def __init__(self, trees: list[Tree], n_features: int, **kwargs):
        super().__init__(**kwargs)
        self.trees = trees
        self._n_features = n_features

    @property
    def n_features(self) -> int:
        return self._n_features

    def _predict(self, values: np.ndarray) -> np.ndarray:
        total = np.zeros(values.shape[0], dtype=np.float64)
        for tree in self.trees:
            total += tree.predict_values(values)
        return total / len(self.trees)

    def importances_raw(self) -> np.ndarray:
        stacked = np.vstack([t.importance for t in self.trees])
        return stacked.mean(axis=0)

    def to_state(self) -> dict:
        return {"trees": [t.to_state() for t in self.trees], "n_features": self._n_features}

    @classmethod
    def from_state(cls, state: dict, **kwargs) -> "EnsembleModel":
        trees = [Tree.from_state(s) for s in state["trees"]]
        return cls(trees, state["n_features"], **kwargs)


class ExtraTreesModel(EnsembleModel):
    family = "extra_trees"


def train_forest(
    X,
    y,
    max_features="sqrt",
    min_samples_leaf: int = 1,
    n_estimators: int = 500,
    seed: int = 0,
    bootstrap: bool = True,
) -> EnsembleModel:
    """Bagged Gini trees: one bootstrap resample per tree, per-node feature
    subsampling, unbounded depth. ``bootstrap=False`` is a test hook that
    fits every tree on the full sample."""
    values, fingerprint, names = as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    check_training_inputs(values, y, require_variation=False)
    codes = int_codes_or_none(values)
    n = values.shape[0]
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_estimators):
        rng = np.random.default_rng(child)
        if bootstrap:
            rows = rng.integers(0, n, size=n)
            X_fit, y_fit = values[rows], y[rows]
            codes_fit = codes[rows] if codes is not None else None
        else:
            X_fit, y_fit, codes_fit = values, y, codes
        trees.append(
            grow_tree(
                X_fit,
                criterion="gini",
                y=y_fit,
                max_depth=None,
                min_samples_leaf=min_samples_leaf,
                max_features=max_features,
                rng=rng,
                codes=codes_fit,
            )
        )
    return EnsembleModel(
        trees,
        values.shape[1],
        params={
            "max_features": max_features,
            "min_samples_leaf": min_samples_leaf,
            "n_estimators": n_estimators,
        },
        seed=seed,
        fingerprint=fingerprint,
        column_names=names,
    )


def train_extra_trees(
    X,
    y,
    max_features="sqrt",
    min_samples_leaf: int = 1,
    n_estimators: int = 500,
    seed: int = 0,
) -> ExtraTreesModel:
    """Extra trees: full sample per tree, one uniform random threshold per
    candidate feature, best random candidate by Gini."""
    values, fingerprint, names = as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    check_training_inputs(values, y, require_variation=False)
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_estimators):
        rng = np.random.default_rng(child)
        trees.append(
            grow_tree(
                values,
                criterion="gini",
                y=y,
                max_depth=None,
                min_samples_leaf=min_samples_leaf,
                max_features=max_features,
                rng=rng,
                random_thresholds=True,
            )
        )
    return ExtraTreesModel(
        trees,
        values.shape[1],
        params={
            "max_features": max_features,
            "min_samples_leaf": min_samples_leaf,
            "n_estimators": n_estimators,
        },
        seed=seed,
        fingerprint=fingerprint,
        column_names=names,
    )
