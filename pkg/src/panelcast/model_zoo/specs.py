"""Model specifications and exhaustive grid enumeration."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from itertools import product

from ..errors import PipelineError

LOGISTIC = "logistic"
TREE = "tree"
FOREST = "forest"
EXTRA_TREES = "extra_trees"
BOOSTING = "boosting"
FAMILIES = (LOGISTIC, TREE, FOREST, EXTRA_TREES, BOOSTING)

# Canonical hyperparameter order per family; grids enumerate in this order.
PARAM_ORDER: dict[str, tuple[str, ...]] = {
    LOGISTIC: ("penalty", "C"),
    TREE: ("max_depth", "max_features"),
    FOREST: ("max_features", "min_samples_leaf", "n_estimators"),
    EXTRA_TREES: ("max_features", "min_samples_leaf", "n_estimators"),
    BOOSTING: ("max_depth", "n_estimators", "learning_rate", "subsample"),
}

# The five feature-group masks every setting is crossed with.
FEATURE_GROUPS: tuple[tuple[str, ...], ...] = (
    ("I",),
    ("II",),
    ("III",),
    ("IV",),
    ("I", "II", "III", "IV"),
)


def group_label(groups: tuple[str, ...]) -> str:
    return "all" if set(groups) == {"I", "II", "III", "IV"} else "+".join(groups)


@dataclass(frozen=True)
class ModelSpec:
    """Model family + hyperparameters + feature-group mask."""

    family: str
    hyperparameters: tuple[tuple[str, object], ...]
    feature_groups: tuple[str, ...]

    @property
    def params(self) -> dict:
        return dict(self.hyperparameters)

    @property
    def spec_id(self) -> str:
        blob = json.dumps(
            [self.family, list(map(list, self.hyperparameters)), list(self.feature_groups)],
            sort_keys=False,
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def describe(self) -> str:
        params = ", ".join(f"{k}={v}" for k, v in self.hyperparameters)
        return f"{self.family}({params}) on {group_label(self.feature_groups)}"


def default_grid() -> dict[str, dict[str, list]]:
    """The stock tuning grid: 8 + 6 + 4 + 4 + 18 = 40 settings."""
    return {
        LOGISTIC: {"penalty": ["l1", "l2"], "C": [0.05, 0.1, 1.0, 1000.0]},
        TREE: {"max_depth": [3, 5, 10], "max_features": [None, "sqrt"]},
        FOREST: {
            "max_features": ["sqrt", "log2"],
            "min_samples_leaf": [1, 10],
            "n_estimators": [500],
        },
        EXTRA_TREES: {
            "max_features": ["sqrt", "log2"],
            "min_samples_leaf": [1, 10],
            "n_estimators": [500],
        },
        BOOSTING: {
            "max_depth": [3, 5, 10],
            "n_estimators": [250, 500, 1000],
            "learning_rate": [0.1, 0.05],
            "subsample": [0.8],
        },
    }


def enumerate_settings(grid_config: dict) -> list[tuple[str, tuple[tuple[str, object], ...]]]:
    """Flatten the per-family grids into (family, hyperparameters) pairs."""
    if not grid_config:
        raise PipelineError("EMPTY_GRID", "grid config declares no families")
    unknown = set(grid_config) - set(FAMILIES)
    if unknown:
        raise PipelineError("CONFIG_INVALID", f"unknown model families: {sorted(unknown)}")
    settings = []
    for family in FAMILIES:
        if family not in grid_config:
            continue
        family_grid = grid_config[family]
        unknown = set(family_grid) - set(PARAM_ORDER[family])
        if unknown:
            raise PipelineError(
                "CONFIG_INVALID", f"unknown {family} hyperparameters: {sorted(unknown)}"
            )
        names = [p for p in PARAM_ORDER[family] if p in family_grid]
        if not names:
            raise PipelineError("EMPTY_GRID", f"no hyperparameters declared for {family}")
        value_lists = [family_grid[p] for p in names]
        if any(len(vals) == 0 for vals in value_lists):
            raise PipelineError("EMPTY_GRID", f"empty value list in {family} grid")
        for combo in product(*value_lists):
            settings.append((family, tuple(zip(names, combo))))
    if not settings:
        raise PipelineError("EMPTY_GRID", "grid enumerates to zero settings")
    return settings


def enumerate_grid(grid_config: dict) -> list[ModelSpec]:
    """Cartesian product of hyperparameter settings and the five feature
    groups per family, in deterministic order."""
    specs = [
        ModelSpec(family, hyper, groups)
        for family, hyper in enumerate_settings(grid_config)
        for groups in FEATURE_GROUPS
    ]
    ids = [s.spec_id for s in specs]
    if len(set(ids)) != len(ids):
        raise PipelineError("CONFIG_INVALID", "spec_id collision; widen the id digest")
    return specs


def load_grid_config(obj: dict) -> dict:
    """Validate a JSON grid config ({family: {param: [values...]}})."""
    enumerate_settings(obj)
    return obj
