"""Newton boosting on the logistic loss with depth-limited regression trees.

Each round fits a tree to the current gradients g = p - y with Hessians
h = p(1 - p); leaf values are -sum(g)/(sum(h) + lam) with lam fixed at 1,
and the score is advanced by learning_rate times the tree output. The
initial score is the log-odds of the base rate. ``subsample`` < 1 draws a
fresh row sample (without replacement) every round; the per-round mean
training log-loss is recorded on the model.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit

from ..errors import PipelineError
from .base import TrainedModel, as_matrix, check_training_inputs
from .tree import Tree, grow_tree, int_codes_or_none

LAMBDA = 1.0


def mean_log_loss(y: np.ndarray, score: np.ndarray) -> float:
    sign = 2.0 * y - 1.0
    return float(np.logaddexp(0.0, -sign * score).mean())


class BoostingModel(TrainedModel):
    family = "boosting"

    def __init__(self, base_score, trees, learning_rate, n_features, train_loss_path, **kwargs):
        super().__init__(**kwargs)
        self.base_score = float(base_score)
        self.trees = list(trees)
        self.learning_rate = float(learning_rate)
        self._n_features = int(n_features)
        self.train_loss_path = list(train_loss_path)

    @property
    def n_features(self) -> int:
        return self._n_features

    def _predict(self, values: np.ndarray) -> np.ndarray:
        score = np.full(values.shape[0], self.base_score)
        for tree in self.trees:
            score += self.learning_rate * tree.predict_values(values)
        return expit(score)

    def importances_raw(self) -> np.ndarray:
        total = np.zeros(self._n_features)
        for tree in self.trees:
            total += tree.importance
        return total

    def to_state(self) -> dict:
        return {
            "base_score": self.base_score,
            "trees": [t.to_state() for t in self.trees],
            "learning_rate": self.learning_rate,
            "n_features": self._n_features,
            "train_loss_path": self.train_loss_path,
        }

    @classmethod
    def from_state(cls, state: dict, **kwargs) -> "BoostingModel":
        state = dict(state)
        state["trees"] = [Tree.from_state(s) for s in state["trees"]]
        return cls(**state, **kwargs)


def train_boosting(
    X,
    y,
    max_depth: int = 3,
    n_estimators: int = 100,
    learning_rate: float = 0.1,
    subsample: float = 1.0,
    seed: int = 0,
) -> BoostingModel:
    if not 0.0 < subsample <= 1.0:
        raise PipelineError("CONFIG_INVALID", f"subsample must be in (0, 1], got {subsample}")
    if n_estimators < 0:
        raise PipelineError("CONFIG_INVALID", "n_estimators must be >= 0")
    values, fingerprint, names = as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    check_training_inputs(values, y, require_variation=True)
    codes = int_codes_or_none(values)
    n = values.shape[0]
    rng = np.random.default_rng(seed)

    base_rate = float(y.mean())
    base_score = math.log(base_rate / (1.0 - base_rate))
    score = np.full(n, base_score)
    trees: list[Tree] = []
    loss_path = [mean_log_loss(y, score)]

    sample_size = max(1, int(round(subsample * n)))
    for _ in range(n_estimators):
        prob = expit(score)
        grad = prob - y
        hess = prob * (1.0 - prob)
        if subsample < 1.0:
            rows = np.sort(rng.choice(n, size=sample_size, replace=False))
            X_fit, codes_fit = values[rows], (codes[rows] if codes is not None else None)
            g_fit, h_fit = grad[rows], hess[rows]
        else:
            X_fit, codes_fit, g_fit, h_fit = values, codes, grad, hess
        tree = grow_tree(
            X_fit,
            criterion="newton",
            grad=g_fit,
            hess=h_fit,
            max_depth=max_depth,
            min_samples_leaf=1,
            lam=LAMBDA,
            codes=codes_fit,
        )
        trees.append(tree)
        score = score + learning_rate * tree.predict_values(values)
        loss_path.append(mean_log_loss(y, score))

    return BoostingModel(
        base_score=base_score,
        trees=trees,
        learning_rate=learning_rate,
        n_features=values.shape[1],
        train_loss_path=loss_path,
        params={
            "max_depth": max_depth,
            "n_estimators": n_estimators,
            "learning_rate": learning_rate,
            "subsample": subsample,
        },
        seed=seed,
        fingerprint=fingerprint,
        column_names=names,
    )
