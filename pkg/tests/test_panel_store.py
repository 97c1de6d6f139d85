from __future__ import annotations

import numpy as np
import pytest

from panelcast import panel_store as ps
from panelcast import synth_panel as sp
from panelcast.errors import PipelineError

from conftest import make_dataset, records_from_statuses, tiny_schema


RECRUITMENT_CSV = """panelist_id,sex,willing,dropout_wave
A,male,good,
B,female,bad,
"""

WAVES_CSV = """panelist_id,wave,response_status,enjoy,mode
A,0,complete,2,online
A,1,partial,1,
A,2,complete,3,offline
B,0,complete,2,online
B,1,nonresponse,,
B,2,complete,,online
"""


def write_pair(tmp_path, recruitment=RECRUITMENT_CSV, waves=WAVES_CSV):
    rec = tmp_path / "recruitment.csv"
    wav = tmp_path / "waves.csv"
    rec.write_text(recruitment)
    wav.write_text(waves)
    return rec, wav


class TestIngest:
    def test_round_trip_of_constructed_input(self, tmp_path):
        rec, wav = write_pair(tmp_path)
        ds = ps.ingest(rec, wav, tiny_schema())
        assert ds.n_panelists == 2
        assert ds.n_waves == 3
        assert sum(1 for _ in ds.records()) == 6
        assert ds.record("A", 1).evaluation["enjoy"] == "1"
        assert ds.record("B", 1).response_status == ps.NONRESPONSE

    def test_record_after_dropout_rejected(self, tmp_path):
        recruitment = RECRUITMENT_CSV.replace("B,female,bad,", "B,female,bad,1")
        rec, wav = write_pair(tmp_path, recruitment=recruitment)
        with pytest.raises(PipelineError) as err:
            ps.ingest(rec, wav, tiny_schema())
        assert err.value.code == "RECORD_AFTER_DROPOUT"

    def test_unknown_category_rejected(self, tmp_path):
        rec, wav = write_pair(tmp_path, recruitment=RECRUITMENT_CSV.replace("male", "blue"))
        with pytest.raises(PipelineError) as err:
            ps.ingest(rec, wav, tiny_schema())
        assert err.value.code == "UNKNOWN_CATEGORY"

    def test_lenient_downgrades_unknown_category(self, tmp_path, caplog):
        rec, wav = write_pair(tmp_path, recruitment=RECRUITMENT_CSV.replace("male", "blue"))
        with caplog.at_level("WARNING"):
            ds = ps.ingest(rec, wav, tiny_schema(), lenient=True)
        assert ds.recruitment_value("A", "sex") is None
        assert any("downgraded" in m for m in caplog.messages)

    def test_duplicate_record_rejected(self, tmp_path):
        waves = WAVES_CSV + "B,2,complete,,online\n"
        rec, wav = write_pair(tmp_path, waves=waves)
        with pytest.raises(PipelineError) as err:
            ps.ingest(rec, wav, tiny_schema())
        assert err.value.code == "DUPLICATE_KEY"

    def test_non_contiguous_waves_rejected(self):
        with pytest.raises(PipelineError) as err:
            make_dataset({"A": "C.C", "B": "C.C"})  # wave 1 absent entirely
        assert err.value.code == "NON_CONTIGUOUS_WAVES"

    def test_nonresponse_with_items_rejected(self):
        rec = ps.WaveRecord("A", 0, ps.NONRESPONSE, {"enjoy": "2"}, {"mode": None})
        with pytest.raises(PipelineError) as err:
            ps.PanelDataset.from_components(
                tiny_schema(), {"A": {"sex": "male", "willing": "good"}}, [rec], {}, 1
            )
        assert err.value.code == "NONRESPONSE_WITH_ITEMS"

    def test_unknown_panelist_in_waves_rejected(self, tmp_path):
        rec, wav = write_pair(tmp_path, waves=WAVES_CSV + "Z,0,complete,2,online\n")
        with pytest.raises(PipelineError) as err:
            ps.ingest(rec, wav, tiny_schema())
        assert err.value.code == "UNKNOWN_PANELIST"


class TestActivePanelists:
    def test_dropout_boundary(self):
        ds = make_dataset({"A": "CCCCC", "B": "CCCC."}, dropout={"B": 4}, n_waves=5)
        assert "B" in ps.active_panelists(ds, 3)
        assert "B" not in ps.active_panelists(ds, 4)

    def test_wave_out_of_range(self):
        ds = make_dataset({"A": "CCC"})
        with pytest.raises(PipelineError) as err:
            ps.active_panelists(ds, 3)
        assert err.value.code == "WAVE_OUT_OF_RANGE"

    def test_active_counts_non_increasing(self, medium_panel):
        # independent recount from the dropout map by linear scan
        counts = []
        for w in range(medium_panel.n_waves):
            n = sum(
                1
                for pid in medium_panel.ids
                if medium_panel.dropout_of(pid) is None or medium_panel.dropout_of(pid) > w
            )
            assert n == len(ps.active_panelists(medium_panel, w))
            counts.append(n)
        assert all(a >= b for a, b in zip(counts, counts[1:]))

    def test_active_sets_nested(self, small_panel):
        previous = None
        for w in range(small_panel.n_waves):
            current = ps.active_panelists(small_panel, w)
            if previous is not None:
                assert current <= previous
            previous = current


class TestOutcomeVector:
    def test_status_mapping(self):
        ds = make_dataset({"A": "C", "B": "P", "D": "N"})
        outcome = ps.outcome_vector(ds, 0)
        assert outcome == {"A": 0, "B": 0, "D": 1}

    def test_missing_record_counts_as_nonresponse(self):
        ds = make_dataset({"A": "C.C", "B": "CCC"})
        assert ps.outcome_vector(ds, 1)["A"] == 1

    def test_domain_is_exactly_active_set(self, medium_panel):
        for w in (0, 4, medium_panel.n_waves - 1):
            outcome = ps.outcome_vector(medium_panel, w)
            assert set(outcome) == ps.active_panelists(medium_panel, w)

    def test_mean_matches_participation_rate_oracle(self, medium_panel):
        # direct count oracle over explicit records
        for w in (1, 5):
            outcome = ps.outcome_vector(medium_panel, w)
            active = ps.active_panelists(medium_panel, w)
            participated = 0
            for pid in active:
                rec = medium_panel.record(pid, w)
                if rec is not None and rec.response_status != ps.NONRESPONSE:
                    participated += 1
            assert np.isclose(np.mean(list(outcome.values())), 1 - participated / len(active))


class TestInvoluntaryAttrition:
    def test_compliant_dropout_after_three(self):
        ds = make_dataset({"A": "NNN"}, dropout={"A": 3}, n_waves=3)
        assert ps.check_involuntary_attrition(ds) == []

    def test_missing_dropout_flagged(self):
        ds = make_dataset({"A": "NNCNNN", "B": "CCCCCC"})
        violations = ps.check_involuntary_attrition(ds)
        assert len(violations) == 1
        assert violations[0].panelist_id == "A"
        assert violations[0].run_start_wave == 3
        assert violations[0].expected_dropout_wave == 6

    def test_late_dropout_flagged(self):
        ds = make_dataset({"A": "NNNC", "B": "CCCC"}, dropout={"A": 4})
        violations = ps.check_involuntary_attrition(ds)
        assert [v.panelist_id for v in violations] == ["A"]

    def test_synthetic_panel_is_clean(self, medium_panel):
        assert ps.check_involuntary_attrition(medium_panel) == []


class TestDescriptives:
    def test_all_complete_wave(self):
        ds = make_dataset({"A": "CC", "B": "CC"})
        table = ps.panel_descriptives(ds)
        assert (table["participation_rate"] == 1.0).all()

    def test_no_dropouts_zero_attrition(self):
        ds = make_dataset({"A": "CNC", "B": "CCC"})
        table = ps.panel_descriptives(ds)
        assert (table["cumulative_attrition"] == 0.0).all()

    def test_matches_recount_oracle(self, medium_panel):
        table = ps.panel_descriptives(medium_panel)
        n_total = medium_panel.n_panelists
        for w in range(medium_panel.n_waves):
            active = ps.active_panelists(medium_panel, w)
            outcome = ps.outcome_vector(medium_panel, w)
            rate = sum(1 for v in outcome.values() if v == 0) / len(active)
            dropped = sum(
                1
                for pid in medium_panel.ids
                if medium_panel.dropout_of(pid) is not None
                and medium_panel.dropout_of(pid) <= w
            )
            row = table.iloc[w]
            assert row["participation_rate"] == pytest.approx(rate)
            assert row["cumulative_attrition"] == pytest.approx(dropped / n_total)

    def test_cumulative_attrition_non_decreasing(self, medium_panel):
        values = ps.panel_descriptives(medium_panel)["cumulative_attrition"].to_numpy()
        assert (np.diff(values) >= 0).all()


class TestRoundTrip:
    def test_export_ingest_export_is_byte_identical(self, tmp_path):
        config = sp.SimConfig(n_panelists=40, n_waves=6, seed=5)
        paths = sp.write_dataset(config, tmp_path / "first")
        ds = ps.ingest(paths["recruitment"], paths["waves"], paths["schema"])
        out = tmp_path / "second"
        out.mkdir()
        ps.export_dataset(ds, out / "recruitment.csv", out / "waves.csv")
        assert (out / "recruitment.csv").read_bytes() == paths["recruitment"].read_bytes()
        assert (out / "waves.csv").read_bytes() == paths["waves"].read_bytes()
