from __future__ import annotations

import numpy as np
import pytest

from panelcast import panel_store as ps
from panelcast import synth_panel as sp


def tiny_schema() -> ps.Schema:
    return ps.Schema(
        (
            ps.VariableSchema("sex", ps.SOCIODEMOGRAPHIC, ("male", "female")),
            ps.VariableSchema("willing", ps.SURVEY_COOPERATION, ("good", "bad")),
            ps.VariableSchema("response_status", ps.RESPONSE_STATUS, ps.RESPONSE_STATUSES),
            ps.VariableSchema("enjoy", ps.SURVEY_EVALUATION, ("1", "2", "3")),
            ps.VariableSchema("mode", ps.SURVEY_PARTICIPATION, ("online", "offline")),
        )
    )


_STATUS = {"C": ps.COMPLETE, "P": ps.PARTIAL, "N": ps.NONRESPONSE}


def records_from_statuses(status_map: dict[str, str]) -> list[ps.WaveRecord]:
    """Compact record builder: 'C'/'P'/'N' per wave, '.' = no record."""
    records = []
    for pid, statuses in status_map.items():
        for wave, token in enumerate(statuses):
            if token == ".":
                continue
            status = _STATUS[token]
            if status == ps.NONRESPONSE:
                ev, pa = {"enjoy": None}, {"mode": None}
            else:
                ev, pa = {"enjoy": "2"}, {"mode": "online"}
            records.append(ps.WaveRecord(pid, wave, status, ev, pa))
    return records


def make_dataset(
    status_map: dict[str, str],
    dropout: dict[str, int] | None = None,
    n_waves: int | None = None,
    attrs: dict[str, dict] | None = None,
) -> ps.PanelDataset:
    recruitment = {
        pid: (attrs or {}).get(pid, {"sex": "male", "willing": "good"})
        for pid in status_map
    }
    if n_waves is None:
        n_waves = max(len(s) for s in status_map.values())
    return ps.PanelDataset.from_components(
        tiny_schema(), recruitment, records_from_statuses(status_map), dropout or {}, n_waves
    )


@pytest.fixture(scope="session")
def small_panel() -> ps.PanelDataset:
    return sp.simulate(sp.SimConfig(n_panelists=80, n_waves=8, seed=11))


@pytest.fixture(scope="session")
def medium_panel() -> ps.PanelDataset:
    return sp.simulate(sp.SimConfig(n_panelists=250, n_waves=10, seed=23))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


def mutate_future_record(
    ds: ps.PanelDataset, wave_threshold: int, rng: np.random.Generator
) -> ps.PanelDataset | None:
    """Rebuild the dataset with one record at wave > wave_threshold altered.

    Picks a random explicit record and either flips its response status,
    changes an item answer, or deletes the record. Returns None when no
    record lies beyond the threshold.
    """
    records = list(ds.records())
    candidates = [i for i, r in enumerate(records) if r.wave_index > wave_threshold]
    if not candidates:
        return None
    idx = int(rng.choice(candidates))
    target = records[idx]
    mode = int(rng.integers(3))
    wave_count = sum(1 for r in records if r.wave_index == target.wave_index)
    if mode == 0 and wave_count > 1:
        records.pop(idx)  # deletion: active panelist with no record
    elif mode == 1 and target.response_status != ps.NONRESPONSE:
        records[idx] = ps.WaveRecord(
            target.panelist_id,
            target.wave_index,
            ps.NONRESPONSE,
            {k: None for k in target.evaluation},
            {k: None for k in target.participation},
        )
    else:
        ev = dict(target.evaluation)
        pa = dict(target.participation)
        status = target.response_status
        if status == ps.NONRESPONSE:
            status = ps.COMPLETE
            ev = {k: ds.schema[k].categories[0] for k in ev}
            pa = {k: ds.schema[k].categories[0] for k in pa}
        else:
            key = sorted(ev)[0]
            cats = ds.schema[key].categories
            current = ev[key]
            ev[key] = cats[0] if current != cats[0] else cats[-1]
        records[idx] = ps.WaveRecord(target.panelist_id, target.wave_index, status, ev, pa)
    dropout = {pid: ds.dropout_of(pid) for pid in ds.ids if ds.dropout_of(pid) is not None}
    recruitment = {
        pid: {v.name: ds.recruitment_value(pid, v.name) for v in ds.schema.recruitment_variables}
        for pid in ds.ids
    }
    return ps.PanelDataset.from_components(
        ds.schema, recruitment, records, dropout, ds.n_waves, ds.wave_labels
    )
