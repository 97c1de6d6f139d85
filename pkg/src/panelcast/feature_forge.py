"""Block I-IV feature construction with a wave-independent column schema.

Block I one-hot encodes recruitment attributes (with one binary missing flag
per variable). Blocks II, III and IV count category occurrences of each wave
variable over the last wave, the last three waves and all previous waves
respectively, always including the as-of wave, plus a missing count per
variable. Near the panel start, windows are clipped rather than padded, so
counts always sum to the clipped window length.

Column layout is a pure function of the schema and requested blocks; the
as-of wave only changes values, never columns.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import panel_store as ps
from .errors import PipelineError

BLOCKS = ("I", "II", "III", "IV")
ALL_PREVIOUS = "all"

# Aggregation window per time-variant block.
BLOCK_WINDOW: dict[str, int | str] = {"II": 1, "III": 3, "IV": ALL_PREVIOUS}
_WINDOW_TOKEN = {"I": "none", "II": "1", "III": "3", "IV": "all"}

MISSING_TOKEN = "MISSING"

GROUP_ALL = ("I", "II", "III", "IV")


@dataclass(frozen=True)
class ColumnInfo:
    """Descriptor of one feature column.

    ``category`` is None for a missing-indicator (Block I flag or window
    missing count) column.
    """

    block: str
    variable: str
    concept: str
    category: str | None

    @property
    def window(self) -> str:
        return _WINDOW_TOKEN[self.block]

    @property
    def name(self) -> str:
        cat = MISSING_TOKEN if self.category is None else self.category
        return f"b{self.block}__{self.variable}__{cat}__w{self.window}"


@dataclass(frozen=True)
class FeatureBlockSpec:
    block_id: str
    window: int | str | None  # None for time-invariant, 1/3/"all" otherwise
    variables: tuple[tuple[str, str], ...]  # (variable, concept)


def block_specs(schema: ps.Schema) -> dict[str, FeatureBlockSpec]:
    """The four block definitions induced by a schema."""
    rec = tuple((v.name, v.concept) for v in schema.recruitment_variables)
    wave = tuple(
        (v.name, v.concept)
        for v in [schema.status_variable, *schema.item_variables]
    )
    out = {"I": FeatureBlockSpec("I", None, rec)}
    for block in ("II", "III", "IV"):
        out[block] = FeatureBlockSpec(block, BLOCK_WINDOW[block], wave)
    return out


def columns_for(schema: ps.Schema, groups) -> list[ColumnInfo]:
    """Column descriptors for the requested blocks, in canonical block order."""
    blocks = _normalize_groups(groups)
    specs = block_specs(schema)
    cols: list[ColumnInfo] = []
    for block in blocks:
        for var, concept in specs[block].variables:
            for cat in schema[var].categories:
                cols.append(ColumnInfo(block, var, concept, cat))
            cols.append(ColumnInfo(block, var, concept, None))
    return cols


def _normalize_groups(groups) -> list[str]:
    blocks = [b for b in BLOCKS if b in set(groups)]
    if not blocks:
        raise PipelineError("EMPTY_GROUPS", "at least one feature block is required")
    unknown = set(groups) - set(BLOCKS)
    if unknown:
        raise PipelineError("CONFIG_INVALID", f"unknown feature blocks: {sorted(unknown)}")
    return blocks


@dataclass(frozen=True)
class FeatureMatrix:
    """Numeric features for one as-of wave, one row per panelist."""

    as_of_wave: int
    row_ids: tuple[str, ...]
    columns: tuple[ColumnInfo, ...]
    values: np.ndarray

    @property
    def schema_fingerprint(self) -> str:
        joined = "|".join(c.name for c in self.columns)
        return hashlib.sha256(joined.encode()).hexdigest()[:16]

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=list(self.row_ids), columns=self.column_names())

    def to_csv(self, path) -> None:
        frame = self.to_frame().astype(int)
        frame.index.name = "panelist_id"
        frame.to_csv(path)

    def block_column_indices(self, groups) -> np.ndarray:
        wanted = set(_normalize_groups(groups))
        return np.array([j for j, c in enumerate(self.columns) if c.block in wanted], dtype=int)


def encode_time_invariant(ds: ps.PanelDataset, panelists) -> tuple[list[ColumnInfo], np.ndarray]:
    """Block I column group: one-hot per (variable, category) over the full
    schema category set plus one missing flag per variable."""
    rows = np.array([ds.row_of(p) for p in panelists], dtype=int)
    rec_vars = ds.schema.recruitment_variables
    codes = ds.recruitment_codes()[rows] if len(rows) else np.zeros((0, len(rec_vars)), dtype=np.int8)
    cols: list[ColumnInfo] = []
    blocks: list[np.ndarray] = []
    for j, v in enumerate(rec_vars):
        for k, cat in enumerate(v.categories):
            cols.append(ColumnInfo("I", v.name, v.concept, cat))
            blocks.append((codes[:, j] == k).astype(np.float64))
        cols.append(ColumnInfo("I", v.name, v.concept, None))
        blocks.append((codes[:, j] == ps.MISSING_CODE).astype(np.float64))
    values = np.column_stack(blocks) if blocks else np.zeros((len(rows), 0))
    return cols, values


def aggregate_window(
    ds: ps.PanelDataset,
    panelist: str,
    variable: str,
    as_of_wave: int,
    window: int | str,
) -> tuple[dict[str, int], int]:
    """Category counts plus missing count for one panelist over one window.

    ``window`` is 1, 3 (last-k waves, clipped at wave 0) or "all" (waves 0
    through as_of). Counts sum to the clipped window length.
    """
    ds._check_wave(as_of_wave)
    if window not in (1, 3, ALL_PREVIOUS):
        raise PipelineError("CONFIG_INVALID", f"unsupported window {window!r}")
    var = ds.schema[variable]
    if var.concept not in ps.WAVE_CONCEPTS:
        raise PipelineError("UNKNOWN_VARIABLE", f"{variable!r} is not a wave variable")
    row = ds.row_of(panelist)
    lo = 0 if window == ALL_PREVIOUS else max(0, as_of_wave - int(window) + 1)
    if var.concept == ps.RESPONSE_STATUS:
        codes = ds.status_codes()[row, lo : as_of_wave + 1]
    else:
        codes = ds.item_code_array(variable)[row, lo : as_of_wave + 1]
    counts = {cat: int((codes == k).sum()) for k, cat in enumerate(var.categories)}
    missing = int((codes == ps.MISSING_CODE).sum())
    return counts, missing


def _window_block(
    ds: ps.PanelDataset, rows: np.ndarray, block: str, as_of_wave: int
) -> tuple[list[ColumnInfo], np.ndarray]:
    window = BLOCK_WINDOW[block]
    lo = 0 if window == ALL_PREVIOUS else max(0, as_of_wave - int(window) + 1)
    hi = as_of_wave + 1
    cols: list[ColumnInfo] = []
    parts: list[np.ndarray] = []
    wave_vars = [ds.schema.status_variable, *ds.schema.item_variables]
    for v in wave_vars:
        if v.concept == ps.RESPONSE_STATUS:
            codes = ds.status_codes()[rows][:, lo:hi]
        else:
            codes = ds.item_code_array(v.name)[rows][:, lo:hi]
        for k, cat in enumerate(v.categories):
            cols.append(ColumnInfo(block, v.name, v.concept, cat))
            parts.append((codes == k).sum(axis=1).astype(np.float64))
        cols.append(ColumnInfo(block, v.name, v.concept, None))
        parts.append((codes == ps.MISSING_CODE).sum(axis=1).astype(np.float64))
    return cols, np.column_stack(parts)


def build_feature_matrix(
    ds: ps.PanelDataset,
    as_of_wave: int,
    groups,
    panelists=None,
) -> FeatureMatrix:
    """Concatenate the requested blocks' columns using data up to the as-of
    wave only.

    Rows default to the panelists active at ``as_of_wave + 1``, the
    population eligible for the next-wave label; pass ``panelists`` to
    override (e.g. for longer horizons).
    """
    blocks = _normalize_groups(groups)
    ds._check_wave(as_of_wave)
    if panelists is None:
        ds._check_wave(as_of_wave + 1)
        panelists = sorted(active_ids(ds, as_of_wave + 1))
    else:
        panelists = list(panelists)
    rows = np.array([ds.row_of(p) for p in panelists], dtype=int)

    cols: list[ColumnInfo] = []
    parts: list[np.ndarray] = []
    for block in blocks:
        if block == "I":
            c, v = encode_time_invariant(ds, panelists)
        else:
            c, v = _window_block(ds, rows, block, as_of_wave)
        cols.extend(c)
        parts.append(v)
    values = np.hstack(parts)
    values.setflags(write=False)
    return FeatureMatrix(as_of_wave, tuple(panelists), tuple(cols), values)


def active_ids(ds: ps.PanelDataset, wave: int) -> set[str]:
    return ps.active_panelists(ds, wave)
