"""Five model families, grid enumeration, training, scoring and importances.

All trainers accept either a FeatureMatrix or a bare 2-D array plus binary
labels, and return an immutable model that scores rows in [0, 1] and
exposes per-column importances. Fits are deterministic given the seed.
Training is invariant to row order for single trees and (up to solver
rounding) for the logistic model; the resampling families draw row indices,
so permuting rows permutes their bootstrap draws.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from ..errors import PipelineError
from .base import TrainedModel
from .boosting import BoostingModel, mean_log_loss, train_boosting
from .ensemble import EnsembleModel, ExtraTreesModel, train_extra_trees, train_forest
from .logistic import LogisticModel, logistic_loss_and_grad, train_logistic
from .specs import (
    BOOSTING,
    EXTRA_TREES,
    FAMILIES,
    FEATURE_GROUPS,
    FOREST,
    LOGISTIC,
    TREE,
    ModelSpec,
    default_grid,
    enumerate_grid,
    enumerate_settings,
    group_label,
    load_grid_config,
)
from .tree import Tree, TreeModel, train_tree

logger = logging.getLogger(__name__)

_FORMAT_VERSION = 1
_MODEL_CLASSES = {
    "logistic": LogisticModel,
    "tree": TreeModel,
    "forest": EnsembleModel,
    "extra_trees": ExtraTreesModel,
    "boosting": BoostingModel,
}

__all__ = [
    "BOOSTING", "EXTRA_TREES", "FAMILIES", "FEATURE_GROUPS", "FOREST", "LOGISTIC", "TREE",
    "ModelSpec", "Tree", "TrainedModel",
    "default_grid", "enumerate_grid", "enumerate_settings", "group_label", "load_grid_config",
    "train_logistic", "train_tree", "train_forest", "train_extra_trees", "train_boosting",
    "train_spec", "predict_proba", "feature_importances", "save_model", "load_model",
    "logistic_loss_and_grad", "mean_log_loss",
]


def train_spec(spec: ModelSpec, X, y, seed: int = 0) -> TrainedModel:
    """Train one model specification on (X, y)."""
    params = spec.params
    if spec.family == LOGISTIC:
        return train_logistic(X, y, seed=seed, **params)
    if spec.family == TREE:
        return train_tree(X, y, seed=seed, **params)
    if spec.family == FOREST:
        return train_forest(X, y, seed=seed, **params)
    if spec.family == EXTRA_TREES:
        return train_extra_trees(X, y, seed=seed, **params)
    if spec.family == BOOSTING:
        return train_boosting(X, y, seed=seed, **params)
    raise PipelineError("CONFIG_INVALID", f"unknown family {spec.family!r}")


def predict_proba(model: TrainedModel, X) -> np.ndarray:
    """Probability scores in [0, 1], one per row; deterministic given model."""
    return model.predict_proba(X)


def feature_importances(model: TrainedModel) -> dict:
    """Per-column importance scaled so the maximum is 100.

    Logistic models report absolute standardized coefficients; Gini trees
    and their ensembles report accumulated impurity decrease; boosting
    reports accumulated split gain. An all-zero map (no split or selection
    happened) is returned as-is with a warning.
    """
    raw = model.importances_raw()
    top = raw.max() if raw.size else 0.0
    if top <= 0.0:
        logger.warning("all-zero importances for %s model", model.family)
        scaled = np.zeros_like(raw)
    else:
        scaled = raw * (100.0 / top)
    keys = model.column_names if model.column_names is not None else range(len(raw))
    return {k: float(v) for k, v in zip(keys, scaled)}


def save_model(model: TrainedModel, path: str | Path) -> None:
    payload = {
        "format_version": _FORMAT_VERSION,
        "family": model.family,
        "params": model.params,
        "seed": model.seed,
        "fingerprint": model.fingerprint,
        "column_names": model.column_names,
        "state": model.to_state(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_model(path: str | Path) -> TrainedModel:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format_version") != _FORMAT_VERSION:
        raise PipelineError("CONFIG_INVALID", f"unsupported model format in {path}")
    cls = _MODEL_CLASSES[payload["family"]]
    return cls.from_state(
        payload["state"],
        params=payload["params"],
        seed=payload["seed"],
        fingerprint=payload["fingerprint"],
        column_names=payload["column_names"],
    )
