"""Seeded generator of synthetic panels for desk-scale pipeline runs.

Participation at each wave follows a logit of recruitment attributes plus a
state-dependence term on the count of nonresponses in the last three waves.
Survey-evaluation items are 5-point ordinals whose distribution shifts with
the latent participation propensity, so response histories carry signal
beyond raw response status. Panelists drop out voluntarily via a per-wave
hazard or involuntarily after three consecutive nonresponses.

The ground-truth per-wave propensities are written to a sidecar file for
diagnostics only; they are never visible to feature construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import expit

from . import panel_store as ps
from .errors import PipelineError

TRUTH_FILE = "truth.csv"

# Marginal category distributions for recruitment attributes and the
# per-category contributions to the participation logit.
_ATTRIBUTE_DISTRIBUTIONS: dict[str, tuple[str, dict[str, float]]] = {
    "sex": (ps.SOCIODEMOGRAPHIC, {"male": 0.49, "female": 0.51}),
    "age_group": (
        ps.SOCIODEMOGRAPHIC,
        {"18_30": 0.20, "31_45": 0.30, "46_60": 0.30, "61_70": 0.20},
    ),
    "education": (ps.SOCIODEMOGRAPHIC, {"lower": 0.30, "medium": 0.45, "higher": 0.25}),
    "employment": (
        ps.SOCIODEMOGRAPHIC,
        {"full_time": 0.45, "part_time": 0.15, "not_employed": 0.15, "retired": 0.25},
    ),
    "hh_size": (ps.SOCIODEMOGRAPHIC, {"1": 0.25, "2": 0.40, "3": 0.20, "4plus": 0.15}),
    "life_satisfaction": (ps.SOCIODEMOGRAPHIC, {"low": 0.15, "medium": 0.50, "high": 0.35}),
    "survey_experience": (ps.SURVEY_COOPERATION, {"yes": 0.40, "no": 0.60}),
    "willingness_respond": (ps.SURVEY_COOPERATION, {"good": 0.50, "fair": 0.35, "bad": 0.15}),
    "provided_email": (ps.SURVEY_COOPERATION, {"yes": 0.70, "no": 0.30}),
}

_ORDINAL = ("1", "2", "3", "4", "5")


def default_demographic_effects() -> dict[str, dict[str, float]]:
    return {
        "sex": {"male": -0.05, "female": 0.05},
        "age_group": {"18_30": -0.45, "31_45": -0.15, "46_60": 0.15, "61_70": 0.35},
        "education": {"lower": -0.25, "medium": 0.0, "higher": 0.25},
        "employment": {"full_time": 0.0, "part_time": -0.05, "not_employed": -0.20, "retired": 0.20},
        "hh_size": {"1": -0.10, "2": 0.10, "3": 0.0, "4plus": -0.05},
        "life_satisfaction": {"low": -0.30, "medium": 0.0, "high": 0.15},
        "survey_experience": {"yes": 0.15, "no": -0.15},
        "willingness_respond": {"good": 0.35, "fair": 0.0, "bad": -0.45},
        "provided_email": {"yes": 0.20, "no": -0.20},
    }


def default_schema() -> ps.Schema:
    variables = [
        ps.VariableSchema(name, concept, tuple(dist))
        for name, (concept, dist) in _ATTRIBUTE_DISTRIBUTIONS.items()
    ]
    variables.append(ps.VariableSchema("response_status", ps.RESPONSE_STATUS, ps.RESPONSE_STATUSES))
    for name in ("eval_interesting", "eval_too_long", "eval_difficult"):
        variables.append(ps.VariableSchema(name, ps.SURVEY_EVALUATION, _ORDINAL))
    variables.append(ps.VariableSchema("mode", ps.SURVEY_PARTICIPATION, ("online", "offline")))
    variables.append(ps.VariableSchema("interrupted", ps.SURVEY_PARTICIPATION, ("yes", "no")))
    return ps.Schema(tuple(variables))


@dataclass
class SimConfig:
    """Knobs for one synthetic panel.

    ``state_dependence`` is the drop in the participation logit per
    nonresponse in the last three waves; positive values make past
    nonresponse predict future nonresponse. ``voluntary_hazard`` is the
    per-wave probability of unsubscribing.
    """

    n_panelists: int = 1000
    n_waves: int = 12
    seed: int = 7
    intercept: float = 2.2
    demographic_effects: dict[str, dict[str, float]] = field(
        default_factory=default_demographic_effects
    )
    state_dependence: float = 1.2
    evaluation_link: float = 0.8
    voluntary_hazard: float = 0.01
    recruitment_missing_rate: float = 0.02
    item_missing_rate: float = 0.05
    partial_rate: float = 0.08
    partial_item_missing_rate: float = 0.35

    def validate(self) -> None:
        if self.n_panelists < 1:
            raise PipelineError("INVALID_CONFIG", "n_panelists must be >= 1")
        if self.n_waves < 4:
            raise PipelineError("INVALID_CONFIG", "n_waves must be >= 4")
        if not 0.0 <= self.voluntary_hazard < 1.0:
            raise PipelineError("INVALID_CONFIG", "voluntary_hazard must be in [0, 1)")
        if not math.isfinite(self.state_dependence):
            raise PipelineError("INVALID_CONFIG", "state_dependence must be finite")
        for name in (
            "recruitment_missing_rate",
            "item_missing_rate",
            "partial_rate",
            "partial_item_missing_rate",
        ):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise PipelineError("INVALID_CONFIG", f"{name} must be in [0, 1]")
        unknown = set(self.demographic_effects) - set(_ATTRIBUTE_DISTRIBUTIONS)
        if unknown:
            raise PipelineError(
                "INVALID_CONFIG", f"effects for unknown attributes: {sorted(unknown)}"
            )

    @classmethod
    def from_json(cls, obj: dict) -> "SimConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise PipelineError("INVALID_CONFIG", f"unknown sim config keys: {sorted(unknown)}")
        cfg = cls(**obj)
        cfg.validate()
        return cfg


def simulate(config: SimConfig) -> ps.PanelDataset:
    """Generate a validated PanelDataset, fully determined by ``config.seed``."""
    ds, _ = simulate_with_truth(config)
    return ds


def simulate_with_truth(config: SimConfig) -> tuple[ps.PanelDataset, pd.DataFrame]:
    """Like :func:`simulate` but also returns the latent propensities.

    The truth frame has one row per active (panelist, wave) with the
    participation probability that generated the outcome.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    schema = default_schema()
    n, n_waves = config.n_panelists, config.n_waves
    ids = [f"P{i:06d}" for i in range(n)]

    # Recruitment attributes; missing values injected before effects so that
    # a missing attribute contributes nothing to the logit.
    attrs: dict[str, list[str | None]] = {}
    for name, (_, dist) in _ATTRIBUTE_DISTRIBUTIONS.items():
        cats = list(dist)
        draws = rng.choice(len(cats), size=n, p=list(dist.values()))
        values: list[str | None] = [cats[k] for k in draws]
        miss = rng.random(n) < config.recruitment_missing_rate
        attrs[name] = [None if m else v for v, m in zip(values, miss)]

    base_eta = np.full(n, config.intercept)
    for name, effects in config.demographic_effects.items():
        col = attrs[name]
        base_eta += np.array([effects.get(v, 0.0) if v is not None else 0.0 for v in col])

    mode = np.where(rng.random(n) < 0.65, "online", "offline")

    eval_signs = {"eval_interesting": 1.0, "eval_too_long": -1.0, "eval_difficult": -1.0}

    outcomes = np.zeros((n, n_waves), dtype=np.int8)  # 1 = nonresponse
    dropout = np.full(n, -1, dtype=np.int64)  # -1 = never
    consec_nr = np.zeros(n, dtype=np.int64)
    records: list[ps.WaveRecord] = []
    truth_rows: list[tuple[str, int, float]] = []

    for w in range(n_waves):
        active = (dropout == -1) | (dropout > w)
        lo = max(0, w - 3)
        lag_nr = outcomes[:, lo:w].sum(axis=1)
        eta = base_eta - config.state_dependence * lag_nr
        p_participate = expit(eta)

        # Fixed-length draws every wave keep the stream independent of who
        # is still active.
        participates = rng.random(n) < p_participate
        is_partial = rng.random(n) < config.partial_rate
        eval_draws = {}
        for name, sign in eval_signs.items():
            q = expit(sign * config.evaluation_link * (eta - config.intercept))
            eval_draws[name] = rng.binomial(4, q)
        interrupted = rng.random(n) < expit(-2.0 + 0.5 * (config.intercept - eta))
        item_miss = {
            name: rng.random(n)
            for name in ("eval_interesting", "eval_too_long", "eval_difficult", "mode", "interrupted")
        }
        u_voluntary = rng.random(n)

        for i in np.flatnonzero(active):
            pid = ids[i]
            truth_rows.append((pid, w, float(p_participate[i])))
            if participates[i]:
                status = ps.PARTIAL if is_partial[i] else ps.COMPLETE
                miss_rate = (
                    config.partial_item_missing_rate
                    if status == ps.PARTIAL
                    else config.item_missing_rate
                )
                evaluation = {
                    name: None if item_miss[name][i] < miss_rate else _ORDINAL[eval_draws[name][i]]
                    for name in eval_signs
                }
                participation = {
                    "mode": None if item_miss["mode"][i] < miss_rate else str(mode[i]),
                    "interrupted": (
                        None
                        if item_miss["interrupted"][i] < miss_rate
                        else ("yes" if interrupted[i] else "no")
                    ),
                }
            else:
                status = ps.NONRESPONSE
                evaluation = {name: None for name in eval_signs}
                participation = {"mode": None, "interrupted": None}
            records.append(ps.WaveRecord(pid, w, status, evaluation, participation))
            outcomes[i, w] = 0 if participates[i] else 1

        consec_nr = np.where(active & (outcomes[:, w] == 1), consec_nr + 1, 0)
        hit_three = active & (consec_nr >= 3)
        dropout[hit_three] = w + 1
        still = active & ~hit_three
        dropout[still & (u_voluntary < config.voluntary_hazard)] = w + 1

    recruitment = {
        pid: {name: attrs[name][i] for name in _ATTRIBUTE_DISTRIBUTIONS}
        for i, pid in enumerate(ids)
    }
    dropout_map = {pid: int(dropout[i]) for i, pid in enumerate(ids) if dropout[i] != -1}
    ds = ps.PanelDataset.from_components(
        schema, recruitment, records, dropout_map, n_waves=n_waves
    )
    truth = pd.DataFrame(truth_rows, columns=["panelist_id", "wave", "propensity"])
    return ds, truth


def write_dataset(config: SimConfig, out_dir: str | Path) -> dict[str, Path]:
    """Simulate and emit the ingestible file set plus the truth sidecar."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds, truth = simulate_with_truth(config)
    paths = {
        "schema": out / "schema.json",
        "recruitment": out / "recruitment.csv",
        "waves": out / "waves.csv",
        "truth": out / TRUTH_FILE,
    }
    ps.save_schema(ds.schema, paths["schema"])
    ps.export_dataset(ds, paths["recruitment"], paths["waves"])
    with open(paths["truth"], "w") as fh:
        fh.write("panelist_id,wave,propensity\n")
        for pid, w, p in truth.itertuples(index=False):
            fh.write(f"{pid},{w},{p!r}\n")
    return paths
