"""Batch runner: trains every (split, spec) task and writes the record store.

The record store is a directory of append-only CSVs plus a manifest:

    manifest.json     run configuration echo and structural counts
    split_plan.json   the rolling-origin plan
    columns.csv       feature column descriptors (name, block, concept, ...)
    records.csv       one row per (split, spec): metrics and hyperparameters
    risk_lists.csv    top-k%% membership (final split by default)
    importances.csv   scaled per-column importances (final split by default)
    scores.csv        raw test scores and labels (final split by default)

Workers share the immutable dataset and pre-built feature matrices via fork;
results are merged in canonical (split, spec_id) order before writing, so
stores are byte-identical across parallelism degrees.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import multiprocessing as mp
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import eval_bench as eb
from . import feature_forge as ff
from . import model_zoo as mz
from . import panel_store as ps
from . import temporal_cv as tc
from .errors import PipelineError

logger = logging.getLogger(__name__)

PACKAGE_VERSION = "0.1.0"

HYPERPARAM_COLUMNS = (
    "penalty",
    "C",
    "max_depth",
    "max_features",
    "min_samples_leaf",
    "n_estimators",
    "learning_rate",
    "subsample",
)

_PARAM_PARSERS = {
    "penalty": str,
    "C": float,
    "max_depth": "int_or_null",
    "max_features": "str_or_null",
    "min_samples_leaf": int,
    "n_estimators": int,
    "learning_rate": float,
    "subsample": float,
}

NULL_TOKEN = "null"


@dataclass
class RunConfig:
    """Everything one batch run needs; see README for the JSON layout."""

    recruitment: Path
    waves: Path
    schema: Path
    store: Path
    grid: dict = field(default_factory=mz.default_grid)
    horizon: int = 1
    gap: int = 0
    pcts: tuple[float, ...] = (0.05, 0.10)
    seed: int = 0
    n_jobs: int = 1
    metric: str = "roc_auc"
    lenient: bool = False
    persist_risk_lists: str = "final"  # "final" or "all"
    persist_importances: str = "final"
    persist_scores: str = "final"  # "final" or "none"

    def validate(self) -> None:
        for pct in self.pcts:
            if not 0.0 < pct < 1.0:
                raise PipelineError("CONFIG_INVALID", f"pct cutoff {pct} outside (0, 1)")
        if self.n_jobs < 1:
            raise PipelineError("CONFIG_INVALID", "n_jobs must be >= 1")
        for name in ("persist_risk_lists", "persist_importances"):
            if getattr(self, name) not in ("final", "all"):
                raise PipelineError("CONFIG_INVALID", f"{name} must be 'final' or 'all'")
        if self.persist_scores not in ("final", "none"):
            raise PipelineError("CONFIG_INVALID", "persist_scores must be 'final' or 'none'")
        mz.load_grid_config(self.grid)
        for path_attr in ("recruitment", "waves", "schema"):
            path = getattr(self, path_attr)
            if not Path(path).exists():
                raise PipelineError("IO_ERROR", f"{path_attr} file not found: {path}")

    @classmethod
    def from_json(cls, obj: dict, base_dir: Path | None = None) -> "RunConfig":
        base = Path(base_dir) if base_dir is not None else Path(".")

        def respath(value: str) -> Path:
            p = Path(value)
            return p if p.is_absolute() else base / p

        try:
            data = obj["data"]
            cfg = cls(
                recruitment=respath(data["recruitment"]),
                waves=respath(data["waves"]),
                schema=respath(data["schema"]),
                store=respath(obj["store"]),
            )
        except KeyError as exc:
            raise PipelineError("CONFIG_INVALID", f"run config missing key: {exc}")
        if "grid" in obj:
            cfg.grid = obj["grid"]
        elif "grid_path" in obj:
            with open(respath(obj["grid_path"])) as fh:
                cfg.grid = json.load(fh)
        cv = obj.get("cv", {})
        cfg.horizon = int(cv.get("horizon", 1))
        cfg.gap = int(cv.get("gap", 0))
        cfg.pcts = tuple(obj.get("pcts", (0.05, 0.10)))
        cfg.seed = int(obj.get("seed", 0))
        cfg.n_jobs = int(obj.get("n_jobs", os.cpu_count() or 1))
        cfg.metric = obj.get("metric", "roc_auc")
        cfg.lenient = bool(obj.get("lenient", False))
        persist = obj.get("persist", {})
        cfg.persist_risk_lists = persist.get("risk_lists", "final")
        cfg.persist_importances = persist.get("importances", "final")
        cfg.persist_scores = persist.get("scores", "final")
        return cfg


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    with open(path) as fh:
        return RunConfig.from_json(json.load(fh), base_dir=path.parent)


def run_plan(n_waves: int, grid_config: dict, horizon: int = 1, gap: int = 0) -> dict:
    """Structural counts of a run without training anything."""
    settings = mz.enumerate_settings(grid_config)
    specs = mz.enumerate_grid(grid_config)
    splits = tc.rolling_splits(n_waves, horizon, gap)
    return {
        "n_settings": len(settings),
        "n_specs_per_split": len(specs),
        "n_splits": len(splits),
        "n_records": len(specs) * len(splits),
    }


def derive_task_seed(master_seed: int, split_index: int, spec_id: str) -> int:
    digest = hashlib.sha256(f"{master_seed}:{split_index}:{spec_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


# -- task execution ----------------------------------------------------------

_CTX: dict = {}


def _init_context(ctx: dict) -> None:
    global _CTX
    _CTX = ctx


def _run_task(task: tuple[int, int]) -> tuple:
    split_idx, spec_idx = task
    ctx = _CTX
    spec: mz.ModelSpec = ctx["specs"][spec_idx]
    split: tc.Split = ctx["splits"][split_idx]
    label = mz.group_label(spec.feature_groups)
    X_train, y_train, _ = ctx["sides"][(split.train_as_of, split.train_label)][label]
    X_test, y_test, test_ids = ctx["sides"][(split.test_as_of, split.test_label)][label]

    seed = derive_task_seed(ctx["seed"], split_idx, spec.spec_id)
    model = mz.train_spec(spec, X_train, y_train, seed=seed)
    scores = model.predict_proba(X_test)
    importance = mz.feature_importances(model)
    record = eb.evaluate_scores(
        split_index=split_idx,
        spec_id=spec.spec_id,
        family=spec.family,
        groups=label,
        hyperparameters=spec.params,
        scores=scores,
        labels=y_test,
        ids=test_ids,
        pcts=ctx["pcts"],
        importance=importance,
    )
    keep_scores = ctx["persist_scores"] == "final" and split_idx == ctx["final_split"]
    payload = (
        [float(v) for v in scores] if keep_scores else None,
        [int(v) for v in y_test] if keep_scores else None,
    )
    return split_idx, spec.spec_id, record, payload


def run_pipeline(ds: ps.PanelDataset, config: RunConfig) -> dict:
    """Train and evaluate the full grid over all splits; write the store."""
    counts = run_plan(ds.n_waves, config.grid, config.horizon, config.gap)
    specs = mz.enumerate_grid(config.grid)
    plan = tc.rolling_splits(ds.n_waves, config.horizon, config.gap)
    logger.info(
        "run: %d splits x %d specs = %d tasks",
        counts["n_splits"], counts["n_specs_per_split"], counts["n_records"],
    )

    # Materialize each distinct (as_of, label) side once; every spec of a
    # split shares the same five group views.
    needed: list[tuple[int, int]] = []
    for split in plan.splits:
        for pair in ((split.train_as_of, split.train_label), (split.test_as_of, split.test_label)):
            if pair not in needed:
                needed.append(pair)
    sides: dict[tuple[int, int], dict[str, tuple]] = {}
    columns_all: tuple[ff.ColumnInfo, ...] | None = None
    for as_of, label_wave in needed:
        side = tc.materialize_side(ds, as_of, label_wave, ff.GROUP_ALL)
        columns_all = side.X.columns
        by_group = {}
        for groups in mz.FEATURE_GROUPS:
            name = mz.group_label(groups)
            if set(groups) == set(ff.GROUP_ALL):
                fm = side.X
            else:
                idx = side.X.block_column_indices(groups)
                sub = np.ascontiguousarray(side.X.values[:, idx])
                sub.setflags(write=False)
                fm = ff.FeatureMatrix(
                    as_of, side.X.row_ids, tuple(side.X.columns[j] for j in idx), sub
                )
            by_group[name] = (fm, side.y, side.ids)
        sides[(as_of, label_wave)] = by_group

    final_split = len(plan.splits) - 1
    ctx = {
        "specs": specs,
        "splits": plan.splits,
        "sides": sides,
        "seed": config.seed,
        "pcts": tuple(config.pcts),
        "persist_scores": config.persist_scores,
        "final_split": final_split,
    }
    tasks = [(s, k) for s in range(len(plan.splits)) for k in range(len(specs))]

    results = []
    if config.n_jobs > 1:
        _init_context(ctx)
        with mp.get_context("fork").Pool(config.n_jobs) as pool:
            chunk = max(1, len(tasks) // (config.n_jobs * 8))
            for i, res in enumerate(pool.imap_unordered(_run_task, tasks, chunksize=chunk)):
                results.append(res)
                if (i + 1) % 200 == 0:
                    logger.info("finished %d/%d tasks", i + 1, len(tasks))
    else:
        _init_context(ctx)
        for i, task in enumerate(tasks):
            results.append(_run_task(task))
            if (i + 1) % 200 == 0:
                logger.info("finished %d/%d tasks", i + 1, len(tasks))
    _init_context({})

    results.sort(key=lambda r: (r[0], r[1]))
    records = [r[2] for r in results]
    scores_rows = []
    for split_idx, spec_id, record, (score_list, label_list) in results:
        if score_list is None:
            continue
        ids = sides[(plan.splits[split_idx].test_as_of, plan.splits[split_idx].test_label)]["all"][2]
        scores_rows.extend(
            (split_idx, spec_id, pid, s, lab)
            for pid, s, lab in zip(ids, score_list, label_list)
        )

    store = Path(config.store)
    store.mkdir(parents=True, exist_ok=True)
    plan.save(store / "split_plan.json")
    _write_columns(store / "columns.csv", columns_all or ())
    _write_records(store / "records.csv", records, config.pcts)
    _write_risk_lists(
        store / "risk_lists.csv", records, final_split, config.persist_risk_lists
    )
    _write_importances(
        store / "importances.csv", records, final_split, config.persist_importances
    )
    _write_scores(store / "scores.csv", scores_rows)

    manifest = {
        "package_version": PACKAGE_VERSION,
        "seed": config.seed,
        "horizon": config.horizon,
        "gap": config.gap,
        "pcts": list(config.pcts),
        "metric": config.metric,
        "n_waves": ds.n_waves,
        "n_panelists": ds.n_panelists,
        "grid": config.grid,
        "persist": {
            "risk_lists": config.persist_risk_lists,
            "importances": config.persist_importances,
            "scores": config.persist_scores,
        },
        **counts,
    }
    with open(store / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def execute_run(config: RunConfig) -> dict:
    config.validate()
    ds = ps.ingest(config.recruitment, config.waves, config.schema, lenient=config.lenient)
    return run_pipeline(ds, config)


# -- store writing -----------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _fmt_param(value) -> str:
    if value is None:
        return NULL_TOKEN
    return _fmt(value)


def _write_columns(path: Path, columns) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "block", "variable", "concept", "category", "window"])
        for col in columns:
            writer.writerow(
                [
                    col.name,
                    col.block,
                    col.variable,
                    col.concept,
                    "" if col.category is None else col.category,
                    col.window,
                ]
            )


def _write_records(path: Path, records: list[eb.EvaluationRecord], pcts) -> None:
    metric_cols = eb.metric_names(pcts)
    header = ["split", "spec_id", "family", "groups", *HYPERPARAM_COLUMNS, *metric_cols, "flags"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for rec in records:
            row = [rec.split_index, rec.spec_id, rec.family, rec.groups]
            row += [
                _fmt_param(rec.hyperparameters[p]) if p in rec.hyperparameters else ""
                for p in HYPERPARAM_COLUMNS
            ]
            row += [_fmt(rec.metrics.get(m)) for m in metric_cols]
            row.append(";".join(rec.flags))
            writer.writerow(row)


def _write_risk_lists(path: Path, records, final_split: int, mode: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["split", "spec_id", "pct", "threshold", "rank", "panelist_id"])
        for rec in records:
            if mode == "final" and rec.split_index != final_split:
                continue
            for pct in sorted(rec.top_lists):
                threshold = rec.thresholds[pct]
                for rank, pid in enumerate(rec.top_lists[pct], start=1):
                    writer.writerow(
                        [rec.split_index, rec.spec_id, _fmt(pct), _fmt(threshold), rank, pid]
                    )


def _write_importances(path: Path, records, final_split: int, mode: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["split", "spec_id", "column", "importance"])
        for rec in records:
            if mode == "final" and rec.split_index != final_split:
                continue
            for name, value in rec.importance.items():
                writer.writerow([rec.split_index, rec.spec_id, name, _fmt(value)])


def _write_scores(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["split", "spec_id", "panelist_id", "score", "label"])
        for split_idx, spec_id, pid, score, label in rows:
            writer.writerow([split_idx, spec_id, pid, _fmt(score), label])


# -- store reading -----------------------------------------------------------


def _parse_param(name: str, text: str):
    if text == "":
        return None, False
    parser = _PARAM_PARSERS[name]
    if parser in (int, float, str):
        return parser(text), True
    if text == NULL_TOKEN:
        return None, True
    if parser == "int_or_null":
        return int(text), True
    return text, True


def read_records(store: str | Path, with_lists: bool = False) -> list[eb.EvaluationRecord]:
    """Load records.csv (optionally joining risk_lists.csv) back into memory."""
    store = Path(store)
    records = []
    with open(store / "records.csv", newline="") as fh:
        reader = csv.DictReader(fh)
        metric_cols = [
            c
            for c in (reader.fieldnames or [])
            if c not in ("split", "spec_id", "family", "groups", "flags")
            and c not in HYPERPARAM_COLUMNS
        ]
        for line in reader:
            params = {}
            for p in HYPERPARAM_COLUMNS:
                value, present = _parse_param(p, line[p])
                if present:
                    params[p] = value
            metrics = {m: (float(line[m]) if line[m] != "" else None) for m in metric_cols}
            records.append(
                eb.EvaluationRecord(
                    split_index=int(line["split"]),
                    spec_id=line["spec_id"],
                    family=line["family"],
                    groups=line["groups"],
                    hyperparameters=params,
                    metrics=metrics,
                    flags=tuple(line["flags"].split(";")) if line["flags"] else (),
                )
            )
    if with_lists:
        lists = read_risk_lists(store)
        for rec in records:
            key = (rec.split_index, rec.spec_id)
            if key in lists:
                rec.top_lists = {pct: members for pct, (members, _) in lists[key].items()}
                rec.thresholds = {pct: thr for pct, (_, thr) in lists[key].items()}
    return records


def read_risk_lists(store: str | Path) -> dict:
    """{(split, spec_id): {pct: (ids in rank order, threshold)}}"""
    out: dict = {}
    with open(Path(store) / "risk_lists.csv", newline="") as fh:
        for line in csv.DictReader(fh):
            key = (int(line["split"]), line["spec_id"])
            pct = float(line["pct"])
            members, threshold = out.setdefault(key, {}).setdefault(
                pct, ([], float(line["threshold"]))
            )
            members.append(line["panelist_id"])
    return out


def read_importances(store: str | Path) -> dict:
    """{(split, spec_id): {column: importance}}"""
    out: dict = {}
    with open(Path(store) / "importances.csv", newline="") as fh:
        for line in csv.DictReader(fh):
            key = (int(line["split"]), line["spec_id"])
            out.setdefault(key, {})[line["column"]] = float(line["importance"])
    return out


def read_scores(store: str | Path) -> dict:
    """{(split, spec_id): (ids, scores, labels)}"""
    out: dict = {}
    with open(Path(store) / "scores.csv", newline="") as fh:
        for line in csv.DictReader(fh):
            key = (int(line["split"]), line["spec_id"])
            ids, scores, labels = out.setdefault(key, ([], [], []))
            ids.append(line["panelist_id"])
            scores.append(float(line["score"]))
            labels.append(int(line["label"]))
    return out


def read_columns(store: str | Path) -> list[ff.ColumnInfo]:
    cols = []
    with open(Path(store) / "columns.csv", newline="") as fh:
        for line in csv.DictReader(fh):
            cols.append(
                ff.ColumnInfo(
                    block=line["block"],
                    variable=line["variable"],
                    concept=line["concept"],
                    category=line["category"] or None,
                )
            )
    return cols


def read_manifest(store: str | Path) -> dict:
    with open(Path(store) / "manifest.json") as fh:
        return json.load(fh)
