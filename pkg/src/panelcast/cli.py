"""Command-line surface: simulate, ingest, run, select, report."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import pandas as pd

from . import eval_bench as eb
from . import panel_store as ps
from . import runner as rn
from . import synth_panel as sp
from .errors import PipelineError
from .selection import SelectionResult, best_average, deployment_report

logger = logging.getLogger(__name__)

ENV_SEED = "PANELCAST_SEED"
ENV_JOBS = "PANELCAST_JOBS"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panelcast",
        description="Wave-by-wave panel nonresponse prediction pipeline",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic panel")
    p_sim.add_argument("--config", required=True, help="sim config JSON")
    p_sim.add_argument("--out", required=True, help="output directory")

    p_ing = sub.add_parser("ingest", help="validate a panel CSV pair")
    p_ing.add_argument("--schema", required=True)
    p_ing.add_argument("--recruitment", required=True)
    p_ing.add_argument("--waves", required=True)
    p_ing.add_argument("--lenient", action="store_true", help="downgrade unknown categories")

    p_run = sub.add_parser("run", help="train and evaluate the full grid")
    p_run.add_argument("--config", required=True, help="run config JSON")

    p_sel = sub.add_parser("select", help="apply best-average selection to a record store")
    p_sel.add_argument("--store", required=True)
    p_sel.add_argument("--metric", default="roc_auc")
    p_sel.add_argument("--out", default=None, help="selection JSON (default: STORE/selection.json)")

    p_rep = sub.add_parser("report", help="deployment report from a store and selection")
    p_rep.add_argument("--store", required=True)
    p_rep.add_argument("--selection", required=True)
    p_rep.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return _dispatch(args)
    except PipelineError as err:
        print(json.dumps({"error": err.code, "message": err.message}), file=sys.stderr)
        return 2
    except OSError as err:
        print(json.dumps({"error": "IO_ERROR", "message": str(err)}), file=sys.stderr)
        return 2


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "simulate":
        return cmd_simulate(args.config, args.out)
    if args.command == "ingest":
        return cmd_ingest(args.schema, args.recruitment, args.waves, args.lenient)
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "select":
        return cmd_select(args.store, args.metric, args.out)
    if args.command == "report":
        return cmd_report(args.store, args.selection, args.out)
    raise PipelineError("CONFIG_INVALID", f"unknown command {args.command!r}")


def cmd_simulate(config_path: str, out_dir: str) -> int:
    with open(config_path) as fh:
        config = sp.SimConfig.from_json(json.load(fh))
    paths = sp.write_dataset(config, out_dir)
    print(json.dumps({name: str(path) for name, path in paths.items()}, indent=2))
    return 0


def cmd_ingest(schema: str, recruitment: str, waves: str, lenient: bool) -> int:
    ds = ps.ingest(recruitment, waves, schema, lenient=lenient)
    violations = ps.check_involuntary_attrition(ds)
    report = {
        "panelists": ds.n_panelists,
        "waves": ds.n_waves,
        "records": int(sum(1 for _ in ds.records())),
        "involuntary_attrition_violations": len(violations),
    }
    print(json.dumps(report, indent=2))
    for v in violations[:20]:
        logger.warning(
            "panelist %s: 3 straight nonresponses from wave %d, expected dropout at wave %d",
            v.panelist_id, v.run_start_wave, v.expected_dropout_wave,
        )
    return 0


def cmd_run(config_path: str) -> int:
    config = rn.load_run_config(config_path)
    if ENV_SEED in os.environ:
        config.seed = int(os.environ[ENV_SEED])
    if ENV_JOBS in os.environ:
        config.n_jobs = int(os.environ[ENV_JOBS])
    manifest = rn.execute_run(config)
    print(json.dumps({k: manifest[k] for k in ("n_settings", "n_specs_per_split", "n_splits", "n_records")}))
    return 0


def cmd_select(store: str, metric: str, out: str | None) -> int:
    records = rn.read_records(store)
    result = best_average(records, metric=metric)
    out_path = Path(out) if out else Path(store) / "selection.json"
    result.save(out_path)
    print(json.dumps({f: w.spec_id for f, w in result.winners.items()}, indent=2))
    return 0


def cmd_report(store: str, selection_path: str, out_dir: str) -> int:
    """Deployment CSVs; reads only the record store, never the panel data."""
    sel = SelectionResult.load(selection_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = rn.read_records(store, with_lists=True)
    final_records = [r for r in records if r.split_index == sel.final_split]
    report, matrix = deployment_report(sel, final_records)
    report.to_csv(out / "deployment_report.csv", index=False)
    matrix.to_csv(out / "jaccard_matrix.csv")

    trajectory_rows = []
    for family, winner in sel.winners.items():
        for rec in records:
            if rec.spec_id == winner.spec_id and rec.family == family:
                row = {"family": family, "spec_id": rec.spec_id, "split": rec.split_index}
                row.update(rec.metrics)
                trajectory_rows.append(row)
    pd.DataFrame(trajectory_rows).sort_values(["family", "split"]).to_csv(
        out / "metric_trajectories.csv", index=False
    )

    scores = rn.read_scores(store)
    roc_rows, pr_rows = [], []
    for family, winner in sel.winners.items():
        key = (sel.final_split, winner.spec_id)
        if key not in scores:
            continue
        _, s, y = scores[key]
        try:
            cc = eb.curves(s, y)
        except PipelineError as err:
            logger.warning("no curves for %s winner: %s", family, err.message)
            continue
        roc_rows += [
            {"family": family, "spec_id": winner.spec_id, "point": i, "fpr": f, "tpr": t}
            for i, (f, t) in enumerate(cc["roc"])
        ]
        pr_rows += [
            {"family": family, "spec_id": winner.spec_id, "point": i, "recall": r, "precision": p}
            for i, (r, p) in enumerate(cc["pr"])
        ]
    pd.DataFrame(roc_rows).to_csv(out / "curves_roc.csv", index=False)
    pd.DataFrame(pr_rows).to_csv(out / "curves_pr.csv", index=False)

    importances = rn.read_importances(store)
    columns = rn.read_columns(store)
    grouped_rows = []
    for family, winner in sel.winners.items():
        key = (sel.final_split, winner.spec_id)
        if key not in importances:
            continue
        table = eb.grouped_importance(importances[key], columns)
        for concept, row in table.iterrows():
            for block, value in row.items():
                if pd.notna(value):
                    grouped_rows.append(
                        {
                            "family": family,
                            "spec_id": winner.spec_id,
                            "concept": concept,
                            "block": block,
                            "mean_importance": value,
                        }
                    )
    pd.DataFrame(grouped_rows).to_csv(out / "grouped_importance.csv", index=False)

    print(json.dumps({"out": str(out), "families": list(sel.winners)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
