"""Rolling-origin train/test wave pairs and dataset materialization.

Each split trains on features as of one wave with the outcome ``horizon``
(+ optional ``gap``) waves later, and tests on the same construction shifted
one wave forward. Features never see any wave at or beyond their label wave.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import feature_forge as ff
from . import panel_store as ps
from .errors import PipelineError


@dataclass(frozen=True)
class Split:
    train_as_of: int
    train_label: int
    test_as_of: int
    test_label: int


@dataclass(frozen=True)
class SplitPlan:
    splits: tuple[Split, ...]
    horizon: int
    gap: int

    def to_json(self) -> list[dict]:
        return [asdict(s) for s in self.splits]

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    def __len__(self) -> int:
        return len(self.splits)


def rolling_splits(n_waves: int, horizon: int = 1, gap: int = 0) -> SplitPlan:
    """Maximal ordered list of rolling-origin splits for an n-wave panel.

    The first split anchors at wave 0; each subsequent split advances the
    origin by one wave. Requires n_waves >= horizon + gap + 2 so at least
    one train/test pair fits.
    """
    if horizon < 1 or gap < 0:
        raise PipelineError("CONFIG_INVALID", f"horizon {horizon} must be >= 1, gap {gap} >= 0")
    if n_waves < horizon + gap + 2:
        raise PipelineError(
            "TOO_FEW_WAVES",
            f"{n_waves} waves cannot host any split with horizon {horizon} and gap {gap}",
        )
    splits = []
    train_as_of = 0
    while True:
        split = Split(
            train_as_of=train_as_of,
            train_label=train_as_of + gap + horizon,
            test_as_of=train_as_of + 1,
            test_label=train_as_of + 1 + gap + horizon,
        )
        if split.test_label > n_waves - 1:
            break
        splits.append(split)
        train_as_of += 1
    return SplitPlan(tuple(splits), horizon, gap)


@dataclass(frozen=True)
class SplitData:
    """Materialized (X, y) pair for one side of a split."""

    X: ff.FeatureMatrix
    y: np.ndarray  # aligned with X.row_ids
    label_wave: int

    @property
    def ids(self) -> tuple[str, ...]:
        return self.X.row_ids


def materialize_side(
    ds: ps.PanelDataset, as_of: int, label: int, groups
) -> SplitData:
    """Features as of ``as_of`` with outcomes from ``label``, one row per
    panelist active at the label wave."""
    outcome = ps.outcome_vector(ds, label)
    panelists = sorted(outcome)
    X = ff.build_feature_matrix(ds, as_of, groups, panelists=panelists)
    y = np.array([outcome[p] for p in panelists], dtype=np.int8)
    y.setflags(write=False)
    return SplitData(X, y, label)


def materialize(ds: ps.PanelDataset, split: Split, groups) -> dict[str, SplitData]:
    """Both sides of a split: exactly one row per active panelist per side."""
    return {
        "train": materialize_side(ds, split.train_as_of, split.train_label, groups),
        "test": materialize_side(ds, split.test_as_of, split.test_label, groups),
    }
