from __future__ import annotations

import json

import numpy as np
import pytest

from panelcast import feature_forge as ff
from panelcast import panel_store as ps
from panelcast import temporal_cv as tc
from panelcast.errors import PipelineError

from conftest import make_dataset


def enumerate_splits_oracle(n_waves, horizon, gap):
    """All split tuples satisfying the plan invariants, by exhaustive scan."""
    out = []
    for ta in range(n_waves):
        split = (ta, ta + gap + horizon, ta + 1, ta + 1 + gap + horizon)
        if split[3] <= n_waves - 1:
            out.append(split)
    return out


class TestRollingSplits:
    def test_paper_shaped_panel_yields_twenty(self):
        plan = tc.rolling_splits(22)
        assert len(plan) == 20
        first = plan.splits[0]
        assert (first.train_as_of, first.train_label, first.test_as_of, first.test_label) == (
            0, 1, 1, 2,
        )

    def test_minimal_panel_single_split(self):
        plan = tc.rolling_splits(3)
        assert len(plan) == 1

    def test_general_horizon_gap_matches_enumeration(self):
        for n_waves, horizon, gap in [(22, 2, 1), (10, 1, 2), (8, 3, 0)]:
            plan = tc.rolling_splits(n_waves, horizon, gap)
            got = [
                (s.train_as_of, s.train_label, s.test_as_of, s.test_label) for s in plan.splits
            ]
            assert got == enumerate_splits_oracle(n_waves, horizon, gap)

    def test_split_count_property(self):
        for n_waves in range(3, 30):
            assert len(tc.rolling_splits(n_waves)) == n_waves - 2

    def test_too_few_waves(self):
        with pytest.raises(PipelineError) as err:
            tc.rolling_splits(2)
        assert err.value.code == "TOO_FEW_WAVES"

    def test_temporal_ordering_invariants(self):
        for horizon, gap in [(1, 0), (2, 0), (1, 3)]:
            plan = tc.rolling_splits(15, horizon, gap)
            labels = [s.test_label for s in plan.splits]
            assert labels == sorted(set(labels))
            for s in plan.splits:
                assert s.train_as_of < s.train_label
                assert s.test_as_of < s.test_label
                assert s.test_as_of == s.train_as_of + 1
                assert s.test_label > s.train_label

    def test_default_chain_matches_one_step_layout(self):
        for s in tc.rolling_splits(12).splits:
            assert s.train_as_of < s.train_label <= s.test_as_of < s.test_label

    def test_deterministic_and_serializable(self, tmp_path):
        a = tc.rolling_splits(9, 1, 1)
        b = tc.rolling_splits(9, 1, 1)
        assert a == b
        path = tmp_path / "plan.json"
        a.save(path)
        payload = json.loads(path.read_text())
        assert payload[0] == {
            "train_as_of": 0, "train_label": 2, "test_as_of": 1, "test_label": 3,
        }


class TestMaterialize:
    def test_first_split_wave_layout(self, medium_panel):
        split = tc.rolling_splits(medium_panel.n_waves).splits[0]
        data = tc.materialize(medium_panel, split, ff.GROUP_ALL)
        test = data["test"]
        assert test.X.as_of_wave == 1
        assert test.label_wave == 2
        outcome = ps.outcome_vector(medium_panel, 2)
        assert list(test.ids) == sorted(outcome)
        assert test.y.tolist() == [outcome[p] for p in test.ids]
        # features must equal an independent rebuild at as-of wave 1
        rebuilt = ff.build_feature_matrix(
            medium_panel, 1, ff.GROUP_ALL, panelists=list(test.ids)
        )
        assert np.array_equal(test.X.values, rebuilt.values)

    def test_dropout_at_test_label_excluded(self):
        ds = make_dataset(
            {"A": "CCC", "B": "CC.", "D": "CCC"}, dropout={"B": 2}, n_waves=3
        )
        split = tc.rolling_splits(3).splits[0]
        data = tc.materialize(ds, split, ("I",))
        assert "B" in data["train"].ids
        assert "B" not in data["test"].ids

    def test_row_counts_match_active_oracle(self, medium_panel):
        plan = tc.rolling_splits(medium_panel.n_waves)
        dropout = {pid: medium_panel.dropout_of(pid) for pid in medium_panel.ids}
        for split in plan.splits:
            data = tc.materialize(medium_panel, split, ("I",))
            for side, label in (("train", split.train_label), ("test", split.test_label)):
                expected = sum(1 for d in dropout.values() if d is None or d > label)
                assert len(data[side].ids) == expected

    def test_one_row_per_panelist(self, small_panel):
        split = tc.rolling_splits(small_panel.n_waves).splits[2]
        data = tc.materialize(small_panel, split, ff.GROUP_ALL)
        for side in data.values():
            assert len(set(side.ids)) == len(side.ids)
            assert side.X.values.shape[0] == len(side.ids) == len(side.y)
