"""Shared trained-model plumbing: schema fingerprints and prediction guards."""

from __future__ import annotations

import numpy as np

from ..errors import PipelineError


def as_matrix(X) -> tuple[np.ndarray, str, list[str] | None]:
    """Accept a FeatureMatrix or a bare 2-D array.

    Returns (values, schema fingerprint, column names). Bare arrays get a
    shape-derived fingerprint so prediction still rejects column-count
    mismatches.
    """
    if hasattr(X, "values") and hasattr(X, "schema_fingerprint"):
        return np.asarray(X.values, dtype=np.float64), X.schema_fingerprint, X.column_names()
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise PipelineError("NON_FINITE_INPUT", f"expected 2-D features, got shape {arr.shape}")
    return arr, f"ndarray:{arr.shape[1]}", None


class TrainedModel:
    """Base class for fitted scorers; immutable after fit."""

    family: str = ""

    def __init__(self, params: dict, seed: int, fingerprint: str, column_names: list[str] | None):
        self.params = dict(params)
        self.seed = seed
        self.fingerprint = fingerprint
        self.column_names = column_names

    @property
    def n_features(self) -> int:
        raise NotImplementedError

    def predict_proba(self, X) -> np.ndarray:
        values, fingerprint, _ = as_matrix(X)
        if fingerprint != self.fingerprint:
            raise PipelineError(
                "SCHEMA_MISMATCH",
                f"model fitted on schema {self.fingerprint} cannot score {fingerprint}",
            )
        return self._predict(values)

    def _predict(self, values: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def importances_raw(self) -> np.ndarray:
        """Unscaled per-column importance scores (length n_features)."""
        raise NotImplementedError


def check_training_inputs(X: np.ndarray, y: np.ndarray, require_variation: bool) -> None:
    if X.shape[0] != y.shape[0]:
        raise PipelineError("NON_FINITE_INPUT", f"{X.shape[0]} rows vs {y.shape[0]} labels")
    if X.shape[0] == 0:
        raise PipelineError("NON_FINITE_INPUT", "empty training set")
    if not np.isfinite(X).all() or not np.isfinite(y).all():
        raise PipelineError("NON_FINITE_INPUT", "features/labels contain NaN or inf")
    if not np.isin(y, (0, 1)).all():
        raise PipelineError("NON_FINITE_INPUT", "labels must be binary 0/1")
    if require_variation and (y.min() == y.max()):
        raise PipelineError("NO_VARIATION", "single-class training labels")
