from __future__ import annotations

import numpy as np
import pytest

from panelcast import panel_store as ps
from panelcast import synth_panel as sp
from panelcast.errors import PipelineError


class TestLimits:
    def test_no_state_dependence_no_hazard_huge_intercept(self):
        config = sp.SimConfig(
            n_panelists=400, n_waves=5, seed=1,
            intercept=12.0, state_dependence=0.0, voluntary_hazard=0.0,
        )
        ds = sp.simulate(config)
        table = ps.panel_descriptives(ds)
        assert (table["participation_rate"] > 0.99).all()
        assert (table["cumulative_attrition"] == 0.0).all()
        assert ps.check_involuntary_attrition(ds) == []

    def test_same_seed_identical_output(self, tmp_path):
        config = sp.SimConfig(n_panelists=60, n_waves=6, seed=42)
        a = sp.write_dataset(config, tmp_path / "a")
        b = sp.write_dataset(config, tmp_path / "b")
        for name in ("schema", "recruitment", "waves", "truth"):
            assert a[name].read_bytes() == b[name].read_bytes()

    def test_different_seed_differs(self):
        base = sp.SimConfig(n_panelists=60, n_waves=6, seed=1)
        other = sp.SimConfig(n_panelists=60, n_waves=6, seed=2)
        da, db = sp.simulate(base), sp.simulate(other)
        assert [r.response_status for r in da.records()] != [
            r.response_status for r in db.records()
        ]


class TestCalibration:
    def test_wave_zero_rate_within_monte_carlo_error(self):
        config = sp.SimConfig(n_panelists=5000, n_waves=4, seed=77)
        ds, truth = sp.simulate_with_truth(config)
        p0 = truth[truth["wave"] == 0]["propensity"].to_numpy()
        analytic_mean = p0.mean()
        se = np.sqrt(np.sum(p0 * (1 - p0))) / len(p0)
        outcome = ps.outcome_vector(ds, 0)
        observed = 1.0 - np.mean(list(outcome.values()))
        assert abs(observed - analytic_mean) < 3 * se


class TestInvariants:
    def test_involuntary_rule_always_enforced(self):
        for seed in range(5):
            ds = sp.simulate(
                sp.SimConfig(n_panelists=150, n_waves=9, seed=seed, state_dependence=2.0)
            )
            assert ps.check_involuntary_attrition(ds) == []

    def test_positive_hazard_shrinks_panel(self):
        ds = sp.simulate(
            sp.SimConfig(n_panelists=1000, n_waves=8, seed=3, voluntary_hazard=0.05)
        )
        first = len(ps.active_panelists(ds, 0))
        last = len(ps.active_panelists(ds, ds.n_waves - 1))
        assert last < first

    def test_state_dependence_signal_present(self):
        ds = sp.simulate(sp.SimConfig(n_panelists=1500, n_waves=8, seed=9))
        wave = 5
        outcome = ps.outcome_vector(ds, wave)
        lagged: dict[str, int] = {}
        for pid in outcome:
            nr = 0
            for w in range(wave - 3, wave):
                rec = ds.record(pid, w)
                if rec is None or rec.response_status == ps.NONRESPONSE:
                    nr += 1
            lagged[pid] = nr
        with_history = [outcome[p] for p in outcome if lagged[p] >= 1]
        without = [outcome[p] for p in outcome if lagged[p] == 0]
        assert np.mean(with_history) > np.mean(without)

    def test_truth_covers_active_rows_only(self):
        config = sp.SimConfig(n_panelists=100, n_waves=6, seed=4, voluntary_hazard=0.05)
        ds, truth = sp.simulate_with_truth(config)
        for wave, group in truth.groupby("wave"):
            assert set(group["panelist_id"]) == ps.active_panelists(ds, int(wave))
        assert ((truth["propensity"] > 0) & (truth["propensity"] < 1)).all()


class TestConfig:
    def test_too_few_waves_rejected(self):
        with pytest.raises(PipelineError) as err:
            sp.SimConfig(n_waves=3).validate()
        assert err.value.code == "INVALID_CONFIG"

    def test_hazard_bounds(self):
        with pytest.raises(PipelineError):
            sp.SimConfig(voluntary_hazard=1.0).validate()

    def test_unknown_json_key_rejected(self):
        with pytest.raises(PipelineError) as err:
            sp.SimConfig.from_json({"n_panelist": 10})
        assert err.value.code == "INVALID_CONFIG"

    def test_emitted_files_ingest_cleanly(self, tmp_path):
        paths = sp.write_dataset(sp.SimConfig(n_panelists=50, n_waves=6, seed=8), tmp_path)
        ds = ps.ingest(paths["recruitment"], paths["waves"], paths["schema"])
        assert ds.n_panelists == 50
        assert ds.n_waves == 6
