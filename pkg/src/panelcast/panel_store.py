"""Panel data model: schema, ingestion, validation, membership and outcomes.

A panel is a recruitment table of time-invariant attributes plus one record
per (panelist, wave) while the panelist is an active member. Panelists leave
permanently either by unsubscribing or after three consecutive nonresponses;
``dropout_wave`` marks the first wave they are excluded from.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import PipelineError

logger = logging.getLogger(__name__)

# Response status values as encoded in wave files.
COMPLETE = "complete"
PARTIAL = "partial"
NONRESPONSE = "nonresponse"
RESPONSE_STATUSES = (COMPLETE, PARTIAL, NONRESPONSE)

# Variable concepts. The first two are measured once at recruitment, the
# remaining three once per wave.
SOCIODEMOGRAPHIC = "sociodemographic"
SURVEY_COOPERATION = "survey_cooperation"
RESPONSE_STATUS = "response_status"
SURVEY_EVALUATION = "survey_evaluation"
SURVEY_PARTICIPATION = "survey_participation"

RECRUITMENT_CONCEPTS = (SOCIODEMOGRAPHIC, SURVEY_COOPERATION)
WAVE_CONCEPTS = (RESPONSE_STATUS, SURVEY_EVALUATION, SURVEY_PARTICIPATION)

# Reserved (optional) column in the recruitment CSV declaring permanent exit;
# empty field means the panelist never dropped out.
DROPOUT_COLUMN = "dropout_wave"

# Internal category code for a missing value.
MISSING_CODE = -1

NEVER = -1  # dropout sentinel: never dropped out


@dataclass(frozen=True)
class VariableSchema:
    """One categorical variable: its concept and the full category set."""

    name: str
    concept: str
    categories: tuple[str, ...]

    def code_of(self, value: str | None) -> int:
        if value is None:
            return MISSING_CODE
        try:
            return self.categories.index(value)
        except ValueError:
            raise PipelineError(
                "UNKNOWN_CATEGORY",
                f"value {value!r} not a category of variable {self.name!r} "
                f"(categories: {list(self.categories)})",
            )


@dataclass(frozen=True)
class Schema:
    """Ordered variable declarations for one panel study.

    Exactly one variable must carry the ``response_status`` concept and its
    categories must be (complete, partial, nonresponse). ``wave_labels`` is
    optional display metadata; wave identity is always the 0-based index.
    """

    variables: tuple[VariableSchema, ...]
    wave_labels: tuple[str, ...] = ()

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise PipelineError("DUPLICATE_KEY", "duplicate variable names in schema")
        for v in self.variables:
            if v.concept not in RECRUITMENT_CONCEPTS + WAVE_CONCEPTS:
                raise PipelineError("CONFIG_INVALID", f"unknown concept {v.concept!r}")
            if not v.categories:
                raise PipelineError("CONFIG_INVALID", f"variable {v.name!r} has no categories")
            if len(set(v.categories)) != len(v.categories):
                raise PipelineError("CONFIG_INVALID", f"duplicate categories on {v.name!r}")
            if "" in v.categories:
                raise PipelineError(
                    "CONFIG_INVALID",
                    f"empty string category on {v.name!r} (empty field encodes MISSING)",
                )
        status_vars = [v for v in self.variables if v.concept == RESPONSE_STATUS]
        if len(status_vars) != 1 or status_vars[0].categories != RESPONSE_STATUSES:
            raise PipelineError(
                "CONFIG_INVALID",
                "schema needs exactly one response_status variable with categories "
                f"{list(RESPONSE_STATUSES)}",
            )

    def __getitem__(self, name: str) -> VariableSchema:
        for v in self.variables:
            if v.name == name:
                return v
        raise PipelineError("UNKNOWN_VARIABLE", f"variable {name!r} not in schema")

    def by_concept(self, concept: str) -> list[VariableSchema]:
        return [v for v in self.variables if v.concept == concept]

    @property
    def recruitment_variables(self) -> list[VariableSchema]:
        return [v for v in self.variables if v.concept in RECRUITMENT_CONCEPTS]

    @property
    def status_variable(self) -> VariableSchema:
        return self.by_concept(RESPONSE_STATUS)[0]

    @property
    def evaluation_variables(self) -> list[VariableSchema]:
        return self.by_concept(SURVEY_EVALUATION)

    @property
    def participation_variables(self) -> list[VariableSchema]:
        return self.by_concept(SURVEY_PARTICIPATION)

    @property
    def item_variables(self) -> list[VariableSchema]:
        """Wave variables other than response status."""
        return self.evaluation_variables + self.participation_variables

    def to_json(self) -> dict:
        out = {
            "variables": [
                {"name": v.name, "concept": v.concept, "categories": list(v.categories)}
                for v in self.variables
            ]
        }
        if self.wave_labels:
            out["wave_labels"] = list(self.wave_labels)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Schema":
        try:
            variables = tuple(
                VariableSchema(d["name"], d["concept"], tuple(d["categories"]))
                for d in obj["variables"]
            )
        except (KeyError, TypeError) as exc:
            raise PipelineError("CONFIG_INVALID", f"malformed schema JSON: {exc}")
        return cls(variables, tuple(obj.get("wave_labels", ())))


def load_schema(path: str | Path) -> Schema:
    with open(path) as fh:
        return Schema.from_json(json.load(fh))


def save_schema(schema: Schema, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(schema.to_json(), fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class WaveRecord:
    """One panelist's explicit record for one wave.

    A nonresponse record carries no item answers: every evaluation and
    participation entry must be MISSING (None).
    """

    panelist_id: str
    wave_index: int
    response_status: str
    evaluation: dict[str, str | None] = field(default_factory=dict)
    participation: dict[str, str | None] = field(default_factory=dict)


@dataclass(frozen=True)
class Violation:
    """A panelist who should have been dropped after three straight nonresponses."""

    panelist_id: str
    run_start_wave: int
    expected_dropout_wave: int


class PanelDataset:
    """Immutable, validated panel. Safe for concurrent reads.

    Construction validates every type invariant; afterwards all state lives in
    dense per-variable code arrays indexed (panelist row, wave). A missing
    record for an active panelist is treated as a nonresponse whose item
    answers are all MISSING.
    """

    def __init__(
        self,
        schema: Schema,
        ids: tuple[str, ...],
        n_waves: int,
        wave_labels: tuple[str, ...],
        dropout: np.ndarray,
        rec_codes: np.ndarray,
        record_mask: np.ndarray,
        explicit_status: np.ndarray,
        item_codes: dict[str, np.ndarray],
    ):
        self.schema = schema
        self.ids = ids
        self.n_waves = n_waves
        self.wave_labels = wave_labels
        self._id_row = {pid: i for i, pid in enumerate(ids)}
        self._dropout = dropout
        self._rec_codes = rec_codes
        self._record_mask = record_mask
        self._explicit_status = explicit_status
        # Effective status: explicit where recorded, else imputed nonresponse.
        nr_code = RESPONSE_STATUSES.index(NONRESPONSE)
        self._status = np.where(record_mask, explicit_status, np.int8(nr_code)).astype(np.int8)
        self._item_codes = item_codes
        for arr in (dropout, rec_codes, record_mask, explicit_status, *item_codes.values()):
            arr.setflags(write=False)

    # -- construction ------------------------------------------------------

    @classmethod
    def from_components(
        cls,
        schema: Schema,
        recruitment: dict[str, dict[str, str | None]],
        records: list[WaveRecord],
        dropout_wave: dict[str, int | None] | None = None,
        n_waves: int | None = None,
        wave_labels: tuple[str, ...] | None = None,
        lenient: bool = False,
    ) -> "PanelDataset":
        """Build and validate a dataset from in-memory pieces.

        ``n_waves`` is inferred from the records when omitted. With
        ``lenient``, unknown categories are downgraded to MISSING with a
        warning instead of failing.
        """
        dropout_wave = dropout_wave or {}
        ids = tuple(sorted(recruitment))
        if len(ids) != len(recruitment):
            raise PipelineError("DUPLICATE_KEY", "duplicate panelist_id in recruitment")
        n = len(ids)
        id_row = {pid: i for i, pid in enumerate(ids)}

        waves_present = sorted({r.wave_index for r in records})
        if n_waves is None:
            if not waves_present:
                raise PipelineError("NON_CONTIGUOUS_WAVES", "no wave records at all")
            n_waves = waves_present[-1] + 1
        if waves_present and (waves_present[0] < 0 or waves_present[-1] >= n_waves):
            raise PipelineError(
                "WAVE_OUT_OF_RANGE",
                f"record wave indices span {waves_present[0]}..{waves_present[-1]} "
                f"for a {n_waves}-wave panel",
            )
        if waves_present != list(range(waves_present[-1] + 1 if waves_present else 0)):
            raise PipelineError(
                "NON_CONTIGUOUS_WAVES", f"waves present: {waves_present} (gap before the end)"
            )

        dropout = np.full(n, NEVER, dtype=np.int32)
        for pid, w in dropout_wave.items():
            if pid not in id_row:
                raise PipelineError("UNKNOWN_PANELIST", f"dropout entry for unknown id {pid!r}")
            if w is None:
                continue
            if not 0 <= w <= n_waves:
                raise PipelineError(
                    "WAVE_OUT_OF_RANGE", f"dropout_wave {w} for {pid!r} outside [0, {n_waves}]"
                )
            dropout[id_row[pid]] = w

        rec_vars = schema.recruitment_variables
        rec_codes = np.full((n, len(rec_vars)), MISSING_CODE, dtype=np.int8)
        for pid, attrs in recruitment.items():
            row = id_row[pid]
            unknown = set(attrs) - {v.name for v in rec_vars}
            if unknown:
                raise PipelineError(
                    "UNKNOWN_VARIABLE", f"recruitment attributes not in schema: {sorted(unknown)}"
                )
            for j, v in enumerate(rec_vars):
                rec_codes[row, j] = _code_or_lenient(v, attrs.get(v.name), lenient)

        status_var = schema.status_variable
        item_vars = schema.item_variables
        record_mask = np.zeros((n, n_waves), dtype=bool)
        explicit_status = np.full((n, n_waves), MISSING_CODE, dtype=np.int8)
        item_codes = {
            v.name: np.full((n, n_waves), MISSING_CODE, dtype=np.int8) for v in item_vars
        }
        for rec in records:
            if rec.panelist_id not in id_row:
                raise PipelineError(
                    "UNKNOWN_PANELIST", f"wave record for unknown id {rec.panelist_id!r}"
                )
            row = id_row[rec.panelist_id]
            w = rec.wave_index
            d = dropout[row]
            if d != NEVER and w >= d:
                raise PipelineError(
                    "RECORD_AFTER_DROPOUT",
                    f"{rec.panelist_id!r} has a record at wave {w} but dropped out at wave {d}",
                )
            if record_mask[row, w]:
                raise PipelineError(
                    "DUPLICATE_KEY", f"duplicate record for ({rec.panelist_id!r}, wave {w})"
                )
            record_mask[row, w] = True
            explicit_status[row, w] = status_var.code_of(rec.response_status)
            items = dict(rec.evaluation)
            items.update(rec.participation)
            unknown = set(items) - {v.name for v in item_vars}
            if unknown:
                raise PipelineError(
                    "UNKNOWN_VARIABLE", f"wave items not in schema: {sorted(unknown)}"
                )
            is_nr = rec.response_status == NONRESPONSE
            for v in item_vars:
                value = items.get(v.name)
                if is_nr and value is not None:
                    if lenient:
                        logger.warning(
                            "nonresponse record (%s, wave %d) carries item %s=%r; "
                            "downgraded to MISSING",
                            rec.panelist_id, w, v.name, value,
                        )
                        value = None
                    else:
                        raise PipelineError(
                            "NONRESPONSE_WITH_ITEMS",
                            f"nonresponse record ({rec.panelist_id!r}, wave {w}) has "
                            f"item {v.name}={value!r}",
                        )
                item_codes[v.name][row, w] = _code_or_lenient(v, value, lenient)

        labels = wave_labels or (schema.wave_labels if schema.wave_labels else None)
        if labels is None:
            labels = tuple(f"w{w:02d}" for w in range(n_waves))
        if len(labels) != n_waves:
            raise PipelineError(
                "CONFIG_INVALID", f"{len(labels)} wave labels for {n_waves} waves"
            )

        return cls(
            schema, ids, n_waves, tuple(labels), dropout, rec_codes,
            record_mask, explicit_status, item_codes,
        )

    # -- row-level accessors ----------------------------------------------

    def row_of(self, panelist_id: str) -> int:
        try:
            return self._id_row[panelist_id]
        except KeyError:
            raise PipelineError("UNKNOWN_PANELIST", f"unknown panelist {panelist_id!r}")

    def dropout_of(self, panelist_id: str) -> int | None:
        d = int(self._dropout[self.row_of(panelist_id)])
        return None if d == NEVER else d

    def recruitment_value(self, panelist_id: str, variable: str) -> str | None:
        rec_vars = self.schema.recruitment_variables
        j = [v.name for v in rec_vars].index(variable)
        code = self._rec_codes[self.row_of(panelist_id), j]
        return None if code == MISSING_CODE else rec_vars[j].categories[code]

    def record(self, panelist_id: str, wave: int) -> WaveRecord | None:
        """The explicit record at (panelist, wave), or None if absent."""
        row = self.row_of(panelist_id)
        self._check_wave(wave)
        if not self._record_mask[row, wave]:
            return None
        status = RESPONSE_STATUSES[self._explicit_status[row, wave]]
        ev, pa = {}, {}
        for v in self.schema.evaluation_variables:
            code = self._item_codes[v.name][row, wave]
            ev[v.name] = None if code == MISSING_CODE else v.categories[code]
        for v in self.schema.participation_variables:
            code = self._item_codes[v.name][row, wave]
            pa[v.name] = None if code == MISSING_CODE else v.categories[code]
        return WaveRecord(panelist_id, wave, status, ev, pa)

    def records(self):
        """All explicit records in canonical (panelist_id, wave) order."""
        for pid in self.ids:
            row = self._id_row[pid]
            for w in range(self.n_waves):
                if self._record_mask[row, w]:
                    yield self.record(pid, w)

    @property
    def n_panelists(self) -> int:
        return len(self.ids)

    def _check_wave(self, wave: int) -> None:
        if not 0 <= wave < self.n_waves:
            raise PipelineError(
                "WAVE_OUT_OF_RANGE", f"wave {wave} outside [0, {self.n_waves - 1}]"
            )

    # -- array accessors (used by feature building) ------------------------

    def active_mask(self, wave: int) -> np.ndarray:
        self._check_wave(wave)
        return (self._dropout == NEVER) | (self._dropout > wave)

    def status_codes(self) -> np.ndarray:
        """(n, W) effective response-status codes; rows valid while active."""
        return self._status

    def item_code_array(self, variable: str) -> np.ndarray:
        if variable not in self._item_codes:
            raise PipelineError("UNKNOWN_VARIABLE", f"{variable!r} is not a wave item variable")
        return self._item_codes[variable]

    def recruitment_codes(self) -> np.ndarray:
        return self._rec_codes

    def dropout_array(self) -> np.ndarray:
        return self._dropout


def _code_or_lenient(var: VariableSchema, value: str | None, lenient: bool) -> int:
    try:
        return var.code_of(value)
    except PipelineError:
        if not lenient:
            raise
        logger.warning("unknown category %r for %s downgraded to MISSING", value, var.name)
        return MISSING_CODE


# -- operations -------------------------------------------------------------


def active_panelists(ds: PanelDataset, wave: int) -> set[str]:
    """Panelists still in the panel at ``wave``: never dropped, or dropping later."""
    mask = ds.active_mask(wave)
    return {pid for pid, keep in zip(ds.ids, mask) if keep}


def outcome_vector(ds: PanelDataset, label_wave: int) -> dict[str, int]:
    """Binary nonresponse outcome over the active panelists of ``label_wave``.

    0 for a complete or partial interview, 1 otherwise; an active panelist
    with no record at all counts as 1.
    """
    mask = ds.active_mask(label_wave)
    nr = RESPONSE_STATUSES.index(NONRESPONSE)
    status = ds.status_codes()[:, label_wave]
    return {
        pid: int(status[i] == nr)
        for i, (pid, keep) in enumerate(zip(ds.ids, mask))
        if keep
    }


def check_involuntary_attrition(ds: PanelDataset) -> list[Violation]:
    """Panelists with >= 3 consecutive nonresponse outcomes who were not
    dropped at the wave after the third. Report-only; empty means consistent."""
    nr = RESPONSE_STATUSES.index(NONRESPONSE)
    status = ds.status_codes()
    dropout = ds.dropout_array()
    out: list[Violation] = []
    for i, pid in enumerate(ds.ids):
        last = ds.n_waves if dropout[i] == NEVER else int(dropout[i])
        run = 0
        for w in range(min(last, ds.n_waves)):
            run = run + 1 if status[i, w] == nr else 0
            if run == 3:
                expected = w + 1
                if dropout[i] == NEVER or dropout[i] > expected:
                    out.append(Violation(pid, w - 2, expected))
                break  # one violation per panelist is enough to flag
    return out


def panel_descriptives(ds: PanelDataset) -> pd.DataFrame:
    """Per-wave participation rate and cumulative attrition.

    participation_rate is the share of outcome 0 among active invitees;
    cumulative_attrition is dropped-so-far over the initial panel size.
    """
    rows = []
    n_total = ds.n_panelists
    dropout = ds.dropout_array()
    nr = RESPONSE_STATUSES.index(NONRESPONSE)
    status = ds.status_codes()
    for w in range(ds.n_waves):
        active = ds.active_mask(w)
        n_active = int(active.sum())
        n_part = int((status[active, w] != nr).sum())
        dropped = int(((dropout != NEVER) & (dropout <= w)).sum())
        rows.append(
            {
                "wave": w,
                "label": ds.wave_labels[w],
                "n_active": n_active,
                "participation_rate": n_part / n_active if n_active else float("nan"),
                "cumulative_attrition": dropped / n_total if n_total else float("nan"),
            }
        )
    return pd.DataFrame(rows)


# -- CSV / file interfaces ---------------------------------------------------


def ingest(
    recruitment_file: str | Path,
    waves_file: str | Path,
    schema: Schema | str | Path,
    lenient: bool = False,
) -> PanelDataset:
    """Read and validate a panel from its CSV pair.

    recruitment CSV: ``panelist_id,<var1>,...`` plus an optional reserved
    ``dropout_wave`` column; waves CSV (long format):
    ``panelist_id,wave,response_status,<eval vars...>,<participation vars...>``.
    MISSING is encoded as an empty field.

    Raises PipelineError with codes UNKNOWN_CATEGORY, DUPLICATE_KEY,
    RECORD_AFTER_DROPOUT, NON_CONTIGUOUS_WAVES, UNKNOWN_PANELIST and friends.
    With ``lenient``, unknown categories become MISSING plus a warning.
    """
    if not isinstance(schema, Schema):
        schema = load_schema(schema)

    recruitment: dict[str, dict[str, str | None]] = {}
    dropout: dict[str, int | None] = {}
    with open(recruitment_file, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if "panelist_id" not in fields:
            raise PipelineError("CONFIG_INVALID", "recruitment CSV lacks panelist_id column")
        expected = {v.name for v in schema.recruitment_variables}
        present = set(fields) - {"panelist_id", DROPOUT_COLUMN}
        if present - expected:
            raise PipelineError(
                "UNKNOWN_VARIABLE",
                f"recruitment columns not in schema: {sorted(present - expected)}",
            )
        if expected - present:
            raise PipelineError(
                "MISSING_VARIABLE",
                f"recruitment CSV lacks schema variables: {sorted(expected - present)}",
            )
        for line in reader:
            pid = line["panelist_id"]
            if pid in recruitment:
                raise PipelineError("DUPLICATE_KEY", f"duplicate panelist_id {pid!r}")
            recruitment[pid] = {
                v.name: (line[v.name] or None) for v in schema.recruitment_variables
            }
            if DROPOUT_COLUMN in line and (line[DROPOUT_COLUMN] or "").strip():
                dropout[pid] = _parse_int(line[DROPOUT_COLUMN], "dropout_wave")

    records: list[WaveRecord] = []
    ev_names = [v.name for v in schema.evaluation_variables]
    pa_names = [v.name for v in schema.participation_variables]
    with open(waves_file, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        needed = {"panelist_id", "wave", "response_status"} | set(ev_names) | set(pa_names)
        if set(fields) - needed:
            raise PipelineError(
                "UNKNOWN_VARIABLE", f"wave columns not in schema: {sorted(set(fields) - needed)}"
            )
        if needed - set(fields):
            raise PipelineError(
                "MISSING_VARIABLE", f"waves CSV lacks columns: {sorted(needed - set(fields))}"
            )
        for line in reader:
            records.append(
                WaveRecord(
                    panelist_id=line["panelist_id"],
                    wave_index=_parse_int(line["wave"], "wave"),
                    response_status=line["response_status"],
                    evaluation={k: (line[k] or None) for k in ev_names},
                    participation={k: (line[k] or None) for k in pa_names},
                )
            )

    return PanelDataset.from_components(
        schema, recruitment, records, dropout, lenient=lenient
    )


def _parse_int(text: str, what: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise PipelineError("INVALID_VALUE", f"non-integer {what}: {text!r}")


def export_dataset(ds: PanelDataset, recruitment_file: str | Path, waves_file: str | Path) -> None:
    """Write the canonical CSV pair: schema column order, rows sorted by
    (panelist_id, wave). Ingesting the output reproduces the dataset."""
    rec_vars = ds.schema.recruitment_variables
    with open(recruitment_file, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["panelist_id", *[v.name for v in rec_vars], DROPOUT_COLUMN])
        for pid in ds.ids:
            d = ds.dropout_of(pid)
            writer.writerow(
                [pid]
                + [(ds.recruitment_value(pid, v.name) or "") for v in rec_vars]
                + ["" if d is None else d]
            )

    ev = [v.name for v in ds.schema.evaluation_variables]
    pa = [v.name for v in ds.schema.participation_variables]
    with open(waves_file, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["panelist_id", "wave", "response_status", *ev, *pa])
        for rec in ds.records():
            writer.writerow(
                [rec.panelist_id, rec.wave_index, rec.response_status]
                + [(rec.evaluation[k] or "") for k in ev]
                + [(rec.participation[k] or "") for k in pa]
            )
