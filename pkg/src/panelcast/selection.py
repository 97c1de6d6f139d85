"""Best-average model selection over temporal metric trajectories.

For every model family, the winner is the (hyperparameters, feature groups)
combination with the highest mean metric over all test sets except the
final one, which stays held out for deployment evaluation. Ties break by
lower trajectory variance, then lexicographic spec id; degenerate waves
(None metrics) are excluded from means rather than imputed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import PipelineError
from .eval_bench import EvaluationRecord, jaccard
from .model_zoo import FAMILIES

DEFAULT_METRIC = "roc_auc"
REPORT_PCT = 0.10


@dataclass
class FamilyWinner:
    family: str
    spec_id: str
    groups: str
    hyperparameters: dict
    mean_metric: float
    variance: float
    trajectory: dict[int, float | None] = field(default_factory=dict)


@dataclass
class SelectionResult:
    metric: str
    window_splits: tuple[int, ...]
    final_split: int
    winners: dict[str, FamilyWinner]

    def to_json(self) -> dict:
        return {
            "metric": self.metric,
            "window_splits": list(self.window_splits),
            "final_split": self.final_split,
            "winners": {
                family: {
                    "spec_id": w.spec_id,
                    "groups": w.groups,
                    "hyperparameters": w.hyperparameters,
                    "mean_metric": w.mean_metric,
                    "variance": w.variance,
                    "trajectory": {str(k): v for k, v in sorted(w.trajectory.items())},
                }
                for family, w in self.winners.items()
            },
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, obj: dict) -> "SelectionResult":
        winners = {
            family: FamilyWinner(
                family=family,
                spec_id=w["spec_id"],
                groups=w["groups"],
                hyperparameters=w["hyperparameters"],
                mean_metric=w["mean_metric"],
                variance=w["variance"],
                trajectory={int(k): v for k, v in w["trajectory"].items()},
            )
            for family, w in obj["winners"].items()
        }
        return cls(
            metric=obj["metric"],
            window_splits=tuple(obj["window_splits"]),
            final_split=obj["final_split"],
            winners=winners,
        )

    @classmethod
    def load(cls, path: str | Path) -> "SelectionResult":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def best_average(records: list[EvaluationRecord], metric: str = DEFAULT_METRIC) -> SelectionResult:
    """Pick each family's winner by mean metric over all but the last split."""
    splits = sorted({r.split_index for r in records})
    if len(splits) < 2:
        raise PipelineError(
            "INSUFFICIENT_SPLITS", f"selection needs >= 2 evaluated splits, got {len(splits)}"
        )
    window = splits[:-1]
    window_set = set(window)
    final_split = splits[-1]

    by_spec: dict[tuple[str, str], dict] = {}
    for rec in records:
        if metric not in rec.metrics:
            raise PipelineError("CONFIG_INVALID", f"metric {metric!r} absent from records")
        entry = by_spec.setdefault(
            (rec.family, rec.spec_id),
            {"groups": rec.groups, "hyperparameters": rec.hyperparameters, "trajectory": {}},
        )
        entry["trajectory"][rec.split_index] = rec.metrics[metric]

    winners: dict[str, FamilyWinner] = {}
    families = [f for f in FAMILIES if any(key[0] == f for key in by_spec)]
    for family in families:
        best: tuple | None = None  # (-mean, variance, spec_id) for min()
        best_entry = None
        for (fam, spec_id), entry in by_spec.items():
            if fam != family:
                continue
            values = [
                v
                for s, v in entry["trajectory"].items()
                if s in window_set and v is not None
            ]
            if not values:
                continue
            mean = float(np.mean(values))
            variance = float(np.var(values))
            key = (-mean, variance, spec_id)
            if best is None or key < best:
                best = key
                best_entry = (spec_id, entry, mean, variance)
        if best_entry is None:
            continue
        spec_id, entry, mean, variance = best_entry
        winners[family] = FamilyWinner(
            family=family,
            spec_id=spec_id,
            groups=entry["groups"],
            hyperparameters=entry["hyperparameters"],
            mean_metric=mean,
            variance=variance,
            trajectory=dict(sorted(entry["trajectory"].items())),
        )
    return SelectionResult(
        metric=metric,
        window_splits=tuple(window),
        final_split=final_split,
        winners=winners,
    )


def deployment_report(
    selection: SelectionResult,
    last_split_records: list[EvaluationRecord],
    jaccard_pct: float = REPORT_PCT,
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Final-wave metrics per family winner plus the pairwise Jaccard matrix
    of their top-``jaccard_pct`` risk lists."""
    by_spec = {
        (r.family, r.spec_id): r
        for r in last_split_records
        if r.split_index == selection.final_split
    }
    rows = []
    lists: dict[str, list] = {}
    for family, winner in selection.winners.items():
        rec = by_spec.get((family, winner.spec_id))
        if rec is None:
            raise PipelineError(
                "MISSING_EVALUATION",
                f"winner {winner.spec_id} of {family} has no record on the final split",
            )
        if jaccard_pct not in rec.top_lists:
            raise PipelineError(
                "MISSING_EVALUATION",
                f"no top-{jaccard_pct:g} list stored for {family} winner on the final split",
            )
        lists[family] = rec.top_lists[jaccard_pct]
        row = {
            "family": family,
            "spec_id": winner.spec_id,
            "groups": winner.groups,
            "hyperparameters": json.dumps(winner.hyperparameters, sort_keys=True),
            "selection_mean": winner.mean_metric,
        }
        row.update(rec.metrics)
        rows.append(row)
    report = pd.DataFrame(rows)

    families = list(selection.winners)
    matrix = pd.DataFrame(
        [[jaccard(lists[a], lists[b]) for b in families] for a in families],
        index=families,
        columns=families,
    )
    return report, matrix
