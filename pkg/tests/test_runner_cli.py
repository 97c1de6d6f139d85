from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
import pytest

from panelcast import cli
from panelcast import model_zoo as mz
from panelcast import runner as rn
from panelcast import synth_panel as sp
from panelcast.errors import PipelineError
from panelcast.selection import SelectionResult

TINY_GRID = {
    "logistic": {"penalty": ["l2"], "C": [1.0]},
    "tree": {"max_depth": [3], "max_features": [None]},
}


def store_bytes(store: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(store.iterdir())}


def write_run_setup(tmp_path: Path, n_panelists=60, n_waves=5, grid=None, **overrides):
    data_dir = tmp_path / "data"
    sp.write_dataset(sp.SimConfig(n_panelists=n_panelists, n_waves=n_waves, seed=13), data_dir)
    config = {
        "data": {
            "schema": "data/schema.json",
            "recruitment": "data/recruitment.csv",
            "waves": "data/waves.csv",
        },
        "store": "store",
        "grid": grid or TINY_GRID,
        "seed": 99,
        "n_jobs": 1,
        **overrides,
    }
    config_path = tmp_path / "run.json"
    config_path.write_text(json.dumps(config))
    return config_path


class TestRunPlan:
    def test_paper_shaped_counts(self):
        plan = rn.run_plan(22, mz.default_grid())
        assert plan == {
            "n_settings": 40,
            "n_specs_per_split": 200,
            "n_splits": 20,
            "n_records": 4000,
        }

    def test_tiny_plan(self):
        plan = rn.run_plan(3, {"tree": {"max_depth": [3]}})
        assert plan["n_splits"] == 1
        assert plan["n_specs_per_split"] == 5
        assert plan["n_records"] == 5


class TestRunPipeline:
    def test_single_setting_three_waves_single_record(self, tmp_path):
        data_dir = tmp_path / "data"
        sp.write_dataset(sp.SimConfig(n_panelists=50, n_waves=4, seed=5), data_dir)
        # restrict to one spec by using one family and one group via grid of 1 setting
        config = rn.RunConfig(
            recruitment=data_dir / "recruitment.csv",
            waves=data_dir / "waves.csv",
            schema=data_dir / "schema.json",
            store=tmp_path / "store",
            grid={"tree": {"max_depth": [3]}},
            seed=1,
        )
        config.validate()
        manifest = rn.execute_run(config)
        assert manifest["n_splits"] == 2
        records = rn.read_records(config.store)
        assert len(records) == 10  # 2 splits x 1 setting x 5 groups
        assert {r.split_index for r in records} == {0, 1}

    def test_store_round_trip(self, tmp_path):
        config_path = write_run_setup(tmp_path)
        assert cli.main(["run", "--config", str(config_path)]) == 0
        store = tmp_path / "store"
        for name in (
            "manifest.json", "split_plan.json", "columns.csv",
            "records.csv", "risk_lists.csv", "importances.csv", "scores.csv",
        ):
            assert (store / name).exists()
        records = rn.read_records(store, with_lists=True)
        manifest = rn.read_manifest(store)
        assert len(records) == manifest["n_records"]
        final = manifest["n_splits"] - 1
        final_records = [r for r in records if r.split_index == final]
        assert all(r.top_lists for r in final_records)
        assert all(not r.top_lists for r in records if r.split_index != final)
        parsed = {
            (r.family, json.dumps(r.hyperparameters, sort_keys=True)) for r in records
        }
        assert ("logistic", json.dumps({"C": 1.0, "penalty": "l2"}, sort_keys=True)) in parsed
        importances = rn.read_importances(store)
        assert all(key[0] == final for key in importances)
        columns = rn.read_columns(store)
        assert {c.block for c in columns} == {"I", "II", "III", "IV"}

    def test_determinism_across_parallelism(self, tmp_path):
        config_path = write_run_setup(tmp_path)
        assert cli.main(["run", "--config", str(config_path)]) == 0
        first = store_bytes(tmp_path / "store")
        os.environ[cli.ENV_JOBS] = "4"
        try:
            assert cli.main(["run", "--config", str(config_path)]) == 0
        finally:
            del os.environ[cli.ENV_JOBS]
        second = store_bytes(tmp_path / "store")
        assert first == second

    def test_seed_changes_store(self, tmp_path):
        config_path = write_run_setup(tmp_path)
        cli.main(["run", "--config", str(config_path)])
        first = store_bytes(tmp_path / "store")
        os.environ[cli.ENV_SEED] = "12345"
        try:
            cli.main(["run", "--config", str(config_path)])
        finally:
            del os.environ[cli.ENV_SEED]
        assert store_bytes(tmp_path / "store") != first

    def test_invalid_config_rejected(self, tmp_path):
        config_path = write_run_setup(tmp_path, pcts=[0.0, 0.1])
        assert cli.main(["run", "--config", str(config_path)]) == 2


class TestCliSurface:
    def test_simulate_and_ingest(self, tmp_path, capsys):
        sim_config = tmp_path / "sim.json"
        sim_config.write_text(json.dumps({"n_panelists": 30, "n_waves": 5, "seed": 2}))
        out_dir = tmp_path / "out"
        assert cli.main(["simulate", "--config", str(sim_config), "--out", str(out_dir)]) == 0
        capsys.readouterr()
        code = cli.main([
            "ingest",
            "--schema", str(out_dir / "schema.json"),
            "--recruitment", str(out_dir / "recruitment.csv"),
            "--waves", str(out_dir / "waves.csv"),
        ])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["panelists"] == 30
        assert report["involuntary_attrition_violations"] == 0

    def test_structured_error_on_missing_file(self, tmp_path, capsys):
        code = cli.main([
            "ingest",
            "--schema", str(tmp_path / "nope.json"),
            "--recruitment", str(tmp_path / "nope.csv"),
            "--waves", str(tmp_path / "nope.csv"),
        ])
        assert code == 2
        err = capsys.readouterr().err
        assert "IO_ERROR" in err or "error" in err

    def test_select_and_report_from_store_only(self, tmp_path, capsys):
        config_path = write_run_setup(tmp_path)
        cli.main(["run", "--config", str(config_path)])
        store = tmp_path / "store"

        # the report stage must never touch the raw panel files
        for name in ("recruitment.csv", "waves.csv", "schema.json", "truth.csv"):
            (tmp_path / "data" / name).unlink()

        selection_path = tmp_path / "selection.json"
        assert cli.main([
            "select", "--store", str(store), "--out", str(selection_path),
        ]) == 0
        selection = SelectionResult.load(selection_path)
        assert set(selection.winners) == {"logistic", "tree"}

        report_dir = tmp_path / "report"
        assert cli.main([
            "report", "--store", str(store),
            "--selection", str(selection_path),
            "--out", str(report_dir),
        ]) == 0
        for name in (
            "deployment_report.csv", "jaccard_matrix.csv", "metric_trajectories.csv",
            "curves_roc.csv", "curves_pr.csv", "grouped_importance.csv",
        ):
            assert (report_dir / name).exists()
        report_lines = (report_dir / "deployment_report.csv").read_text().splitlines()
        assert len(report_lines) == 3  # header + 2 families

    def test_select_insufficient_store(self, tmp_path):
        data_dir = tmp_path / "data"
        sp.write_dataset(sp.SimConfig(n_panelists=40, n_waves=4, seed=5), data_dir)
        config = rn.RunConfig(
            recruitment=data_dir / "recruitment.csv",
            waves=data_dir / "waves.csv",
            schema=data_dir / "schema.json",
            store=tmp_path / "store",
            grid={"tree": {"max_depth": [3]}},
        )
        rn.execute_run(config)
        records = [r for r in rn.read_records(config.store) if r.split_index == 0]
        with pytest.raises(PipelineError) as err:
            from panelcast.selection import best_average

            best_average(records)
        assert err.value.code == "INSUFFICIENT_SPLITS"


class TestSeedDerivation:
    def test_stable_and_distinct(self):
        a = rn.derive_task_seed(1, 0, "abc")
        assert a == rn.derive_task_seed(1, 0, "abc")
        assert a != rn.derive_task_seed(1, 1, "abc")
        assert a != rn.derive_task_seed(2, 0, "abc")
        assert 0 <= a < 2**63
