"""Long-format choice data: ingest, screening, and design-matrix coding.

The interchange format is one CSV row per respondent x task x alternative:

  respondent_id, task_id, block_id, alt_id, chosen,
  <context columns>, <design columns>, <demographic columns>, extras...

``chosen`` is 1 on exactly one row per task. Context columns must be constant
within a task; demographic columns constant within a respondent. Shared
attributes (one coefficient block across alternatives) carry per-alternative
values like any design column.
Demographics may instead live in a companion respondent-level CSV keyed by
``respondent_id``. Unrecognized columns are kept as respondent-level
passthrough when constant within a respondent and dropped otherwise.

Coding produces a panel design matrix with one row per alternative, rows
grouped by task and tasks grouped by respondent, columns laid out by
``build_parameter_index``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError, EstimationError, SchemaError
from .schema import ExperimentSchema, ParameterIndex, build_parameter_index, effects_code

__all__ = [
    "Observation",
    "RespondentRecord",
    "ChoiceDataset",
    "CodedPanel",
    "ScreeningRules",
    "ScreeningReport",
    "ingest_choices",
    "write_choices_csv",
    "screen_responses",
    "code_dataset",
]

_CORE_COLUMNS = ("respondent_id", "task_id", "block_id", "alt_id", "chosen")


@dataclass(frozen=True)
class Observation:
    """One choice task: task-level values, per-alternative values, the choice."""

    task_id: str
    block_id: str
    task_values: dict[str, str]
    alt_values: dict[str, dict[str, str]]
    chosen: str

    def alternatives(self, schema: ExperimentSchema) -> tuple[str, ...]:
        return tuple(a for a in schema.alternative_ids() if a in self.alt_values)


@dataclass(frozen=True)
class RespondentRecord:
    respondent_id: str
    demographics: dict[str, str]
    observations: tuple[Observation, ...]
    extra: dict[str, str] = field(default_factory=dict)

    @property
    def n_tasks(self) -> int:
        return len(self.observations)


@dataclass(frozen=True)
class ChoiceDataset:
    schema: ExperimentSchema
    respondents: tuple[RespondentRecord, ...]

    @property
    def n_respondents(self) -> int:
        return len(self.respondents)

    @property
    def n_tasks(self) -> int:
        return sum(r.n_tasks for r in self.respondents)

    @property
    def n_rows(self) -> int:
        return sum(len(o.alt_values) for r in self.respondents for o in r.observations)

    def subset(self, respondent_ids) -> "ChoiceDataset":
        keep = set(respondent_ids)
        return ChoiceDataset(self.schema,
                             tuple(r for r in self.respondents if r.respondent_id in keep))


# ---------------------------------------------------------------------------
# Ingest
# ---------------------------------------------------------------------------

def _read_rows(path: str | Path) -> tuple[list[str], list[dict[str, str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DatasetError("empty_dataset", f"{path}: no header row")
        rows = list(reader)
    return list(reader.fieldnames), rows


def _require_columns(have: list[str], needed, path) -> None:
    missing = [c for c in needed if c not in have]
    if missing:
        raise DatasetError("missing_column", f"{path}: missing columns {missing}")


def _read_respondent_table(path: str | Path, demo_columns) -> dict[str, dict[str, str]]:
    header, rows = _read_rows(path)
    _require_columns(header, ("respondent_id", *demo_columns), path)
    table: dict[str, dict[str, str]] = {}
    for n, row in enumerate(rows, start=2):
        rid = (row.get("respondent_id") or "").strip()
        if not rid:
            raise DatasetError("missing_column", f"{path}: blank respondent_id", row=n)
        if rid in table:
            raise DatasetError("duplicate_respondent", f"{path}: respondent {rid!r} repeated",
                               row=n)
        table[rid] = {k: (v or "").strip() for k, v in row.items() if k != "respondent_id"}
    return table


def ingest_choices(path: str | Path, schema: ExperimentSchema,
                   respondents_path: str | Path | None = None) -> ChoiceDataset:
    """Read a long-format choice CSV into a validated dataset.

    Raises DatasetError with a 1-based CSV row number wherever the offending
    row is identifiable.
    """
    header, rows = _read_rows(path)
    if not rows:
        raise DatasetError("empty_dataset", f"{path}: no data rows")

    context_cols = tuple(a.csv_column for a in schema.context_attributes())
    design_cols = schema.design_columns()
    demo_attrs = schema.demographic_attributes()
    demo_cols = tuple(a.csv_column for a in demo_attrs)

    companion = None
    if respondents_path is not None:
        companion = _read_respondent_table(respondents_path, demo_cols)

    needed = list(_CORE_COLUMNS[:2]) + ["alt_id", "chosen"] + list(context_cols) + list(design_cols)
    if companion is None:
        needed += list(demo_cols)
    _require_columns(header, needed, path)

    known = set(_CORE_COLUMNS) | set(context_cols) | set(design_cols) | set(demo_cols)
    extra_cols = [c for c in header if c not in known]

    alt_ids = set(schema.alternative_ids())
    task_level_attrs = [(a.csv_column, a) for a in schema.context_attributes()]
    # respondent -> task -> accumulated rows; insertion order preserved
    per_resp: dict[str, dict[str, dict]] = {}
    resp_demo: dict[str, dict[str, str]] = {}
    resp_demo_row: dict[str, int] = {}
    resp_extra: dict[str, dict[str, str | None]] = {}

    for n, row in enumerate(rows, start=2):
        rid = (row.get("respondent_id") or "").strip()
        tid = (row.get("task_id") or "").strip()
        aid = (row.get("alt_id") or "").strip()
        if not rid or not tid or not aid:
            raise DatasetError("missing_column",
                               f"blank respondent_id/task_id/alt_id", row=n)
        if aid not in alt_ids:
            raise DatasetError("unknown_alternative", f"alternative {aid!r}", row=n)

        chosen_raw = (row.get("chosen") or "").strip()
        if chosen_raw not in ("0", "1"):
            raise DatasetError("bad_chosen", f"chosen must be 0 or 1, got {chosen_raw!r}", row=n)

        tasks = per_resp.setdefault(rid, {})
        task = tasks.setdefault(tid, {"block": (row.get("block_id") or "").strip(),
                                      "task_values": {}, "alts": {}, "chosen": [],
                                      "first_row": n})
        if aid in task["alts"]:
            raise DatasetError("duplicate_alternative",
                               f"alternative {aid!r} repeated in task {tid!r}", row=n)

        # task-level columns must agree across the task's rows
        for col, attr in task_level_attrs:
            val = (row.get(col) or "").strip()
            prev = task["task_values"].get(col)
            if prev is None:
                if val not in attr.level_labels():
                    raise DatasetError("unknown_level",
                                       f"column {col!r}: {val!r} is not a level of "
                                       f"{attr.name}", row=n)
                task["task_values"][col] = val
            elif prev != val:
                raise DatasetError("inconsistent_task_value",
                                   f"column {col!r} differs within task {tid!r}", row=n)

        # design columns, validated against the attribute that fills each
        alt_vals: dict[str, str] = {}
        for col in design_cols:
            try:
                attr = schema.attribute_for_column(col, aid)
            except SchemaError:
                continue  # column not applicable to this alternative
            val = (row.get(col) or "").strip()
            if val not in attr.level_labels():
                raise DatasetError("unknown_level",
                                   f"column {col!r}: {val!r} is not a level of {attr.name}",
                                   row=n)
            alt_vals[col] = val
        task["alts"][aid] = alt_vals
        if chosen_raw == "1":
            task["chosen"].append((aid, n))

        # demographics: inline, companion, or both (must then agree)
        demo_inline = {}
        for attr in demo_attrs:
            col = attr.csv_column
            if col in row and row.get(col) is not None:
                demo_inline[col] = (row.get(col) or "").strip()
        if companion is not None:
            comp = companion.get(rid)
            if comp is None:
                raise DatasetError("missing_demographics",
                                   f"respondent {rid!r} absent from respondent table", row=n)
            for col, val in demo_inline.items():
                if val and val != comp.get(col, ""):
                    raise DatasetError("demographic_mismatch",
                                       f"column {col!r} disagrees with respondent table "
                                       f"for {rid!r}", row=n)
            demo = {col: comp.get(col, "") for col in demo_cols}
            extras_src = {k: v for k, v in comp.items() if k not in demo_cols}
        else:
            demo = demo_inline
            extras_src = {c: (row.get(c) or "").strip() for c in extra_cols}

        if rid not in resp_demo:
            for attr in demo_attrs:
                val = demo.get(attr.csv_column, "")
                if val not in attr.level_labels():
                    raise DatasetError("unknown_level",
                                       f"column {attr.csv_column!r}: {val!r} is not a level "
                                       f"of {attr.name}", row=n)
            resp_demo[rid] = demo
            resp_demo_row[rid] = n
        elif companion is None and demo != resp_demo[rid]:
            raise DatasetError("demographic_mismatch",
                               f"demographics differ within respondent {rid!r}", row=n)

        # passthrough: keep only values constant within the respondent
        pool = resp_extra.setdefault(rid, {})
        for k, v in extras_src.items():
            if k not in pool:
                pool[k] = v
            elif pool[k] != v:
                pool[k] = None  # poisoned; dropped below

    records = []
    for rid, tasks in per_resp.items():
        observations = []
        for tid, t in tasks.items():
            if len(t["alts"]) < 2:
                raise DatasetError("too_few_alternatives",
                                   f"task {tid!r} of respondent {rid!r} has "
                                   f"{len(t['alts'])} alternative(s)", row=t["first_row"])
            if not t["chosen"]:
                raise DatasetError("missing_chosen",
                                   f"no chosen alternative in task {tid!r} of "
                                   f"respondent {rid!r}", row=t["first_row"])
            if len(t["chosen"]) > 1:
                raise DatasetError("multiple_chosen",
                                   f"{len(t['chosen'])} chosen alternatives in task {tid!r} "
                                   f"of respondent {rid!r}", row=t["chosen"][1][1])
            observations.append(Observation(
                task_id=tid, block_id=t["block"], task_values=dict(t["task_values"]),
                alt_values={a: dict(v) for a, v in t["alts"].items()},
                chosen=t["chosen"][0][0]))
        records.append(RespondentRecord(
            respondent_id=rid, demographics=dict(resp_demo[rid]),
            observations=tuple(observations),
            extra={k: v for k, v in resp_extra.get(rid, {}).items() if v is not None}))
    return ChoiceDataset(schema, tuple(records))


def write_choices_csv(dataset: ChoiceDataset, path: str | Path) -> None:
    """Write the long-format CSV (UTF-8, LF). Inverse of ingest up to column
    order and passthrough placement."""
    schema = dataset.schema
    context_cols = [a.csv_column for a in schema.context_attributes()]
    design_cols = list(schema.design_columns())
    demo_cols = [a.csv_column for a in schema.demographic_attributes()]
    extra_cols = sorted({k for r in dataset.respondents for k in r.extra})
    header = list(_CORE_COLUMNS) + context_cols + design_cols + demo_cols + extra_cols

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for rec in dataset.respondents:
            for obs in rec.observations:
                for aid in obs.alternatives(schema):
                    row = [rec.respondent_id, obs.task_id, obs.block_id, aid,
                           "1" if aid == obs.chosen else "0"]
                    row += [obs.task_values.get(c, "") for c in context_cols]
                    vals = obs.alt_values[aid]
                    for c in design_cols:
                        row.append(vals.get(c, obs.task_values.get(c, "")))
                    row += [rec.demographics.get(c, "") for c in demo_cols]
                    row += [rec.extra.get(c, "") for c in extra_cols]
                    writer.writerow(row)


# ---------------------------------------------------------------------------
# Screening
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScreeningRules:
    """Quality screens applied respondent by respondent.

    incomplete     drop respondents with fewer tasks than expected_tasks
                   (default: the maximum task count observed)
    straight_line  drop respondents who picked the same alternative in every
                   task (two or more tasks)
    fast_seconds   drop respondents whose response_seconds passthrough value
                   is below this threshold
    """

    incomplete: bool = True
    straight_line: bool = True
    fast_seconds: float | None = None
    expected_tasks: int | None = None


@dataclass(frozen=True)
class ScreeningReport:
    n_input: int
    n_kept: int
    dropped: dict[str, str]
    counts: dict[str, int]

    def summary(self) -> str:
        parts = [f"kept {self.n_kept} of {self.n_input} respondents"]
        for reason, count in sorted(self.counts.items()):
            parts.append(f"{reason}: {count}")
        return "; ".join(parts)


def screen_responses(dataset: ChoiceDataset,
                     rules: ScreeningRules = ScreeningRules(),
                     ) -> tuple[ChoiceDataset, ScreeningReport]:
    expected = rules.expected_tasks
    if expected is None and dataset.respondents:
        expected = max(r.n_tasks for r in dataset.respondents)

    dropped: dict[str, str] = {}
    for rec in dataset.respondents:
        if rules.incomplete and rec.n_tasks < (expected or 0):
            dropped[rec.respondent_id] = "incomplete"
            continue
        if rules.fast_seconds is not None:
            raw = rec.extra.get("response_seconds")
            if raw is None:
                raise DatasetError("missing_column",
                                   f"respondent {rec.respondent_id!r} has no "
                                   f"response_seconds value")
            try:
                seconds = float(raw)
            except ValueError:
                raise DatasetError("bad_number",
                                   f"response_seconds {raw!r} for respondent "
                                   f"{rec.respondent_id!r}") from None
            if seconds < rules.fast_seconds:
                dropped[rec.respondent_id] = "fast_response"
                continue
        if rules.straight_line and rec.n_tasks >= 2:
            chosen = {o.chosen for o in rec.observations}
            if len(chosen) == 1:
                dropped[rec.respondent_id] = "straight_line"

    kept = dataset.subset(r.respondent_id for r in dataset.respondents
                          if r.respondent_id not in dropped)
    counts: dict[str, int] = {}
    for reason in dropped.values():
        counts[reason] = counts.get(reason, 0) + 1
    report = ScreeningReport(n_input=dataset.n_respondents, n_kept=kept.n_respondents,
                             dropped=dropped, counts=counts)
    return kept, report


# ---------------------------------------------------------------------------
# Coding
# ---------------------------------------------------------------------------

class _Coder:
    """Precomputed fill rules mapping one alternative row to feature values."""

    def __init__(self, schema: ExperimentSchema, index: ParameterIndex):
        self.schema = schema
        self.codes: dict[str, dict[str, np.ndarray]] = {}
        for attr in schema.attributes:
            self.codes[attr.name] = {lv.label: effects_code(attr, lv.label)
                                     for lv in attr.levels}
        # one instruction per fixed column: (kind, attr name, csv column, alt, component)
        self.rules = []
        for e in index.entries[:index.n_fixed]:
            if e.kind == "asc":
                self.rules.append(("asc", None, None, e.alternative, 0))
                continue
            attr = schema.attribute(e.attribute)
            comp = 0
            if attr.coding == "effects":
                comp = attr.level_labels().index(e.level)
            self.rules.append((e.kind, attr.name, attr.csv_column, e.alternative, comp))

    def row(self, alt_id: str, task_values: dict[str, str],
            alt_values: dict[str, str], demographics: dict[str, str]) -> np.ndarray:
        out = np.zeros(len(self.rules), dtype=np.float64)
        for i, (kind, attr_name, column, owner, comp) in enumerate(self.rules):
            if kind == "asc":
                out[i] = 1.0 if alt_id == owner else 0.0
            elif kind == "context" or kind == "demographic":
                if alt_id == owner:
                    source = task_values if kind == "context" else demographics
                    out[i] = self.codes[attr_name][source[column]][comp]
            elif owner is not None:  # alternative-specific attribute
                if alt_id == owner:
                    out[i] = self.codes[attr_name][alt_values[column]][comp]
            else:  # shared block: every row codes its own level
                out[i] = self.codes[attr_name][alt_values[column]][comp]
        return out


@dataclass(frozen=True)
class CodedPanel:
    """Design matrix plus panel bookkeeping.

    Rows are alternatives in schema order, grouped by task; tasks grouped by
    respondent in dataset order. ``task_ptr`` delimits tasks CSR-style.
    """

    schema: ExperimentSchema
    index: ParameterIndex
    X: np.ndarray
    task_ptr: np.ndarray
    chosen_row: np.ndarray
    task_respondent: np.ndarray
    respondent_ids: tuple[str, ...]
    row_alternative: tuple[str, ...]

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_tasks(self) -> int:
        return len(self.chosen_row)

    @property
    def n_respondents(self) -> int:
        return len(self.respondent_ids)

    @property
    def task_sizes(self) -> np.ndarray:
        return np.diff(self.task_ptr)

    @property
    def chosen_pos(self) -> np.ndarray:
        """Chosen alternative's position within its task."""
        return self.chosen_row - self.task_ptr[:-1]

    def null_loglik(self) -> float:
        """Log likelihood of equal shares: -sum over tasks of ln(task size)."""
        return float(-np.sum(np.log(self.task_sizes)))

    def as_rectangular(self):
        """Reshape to (R, T, J, K) features and (R, T) chosen positions.

        Requires every respondent to face the same number of tasks and every
        task the same number of alternatives.
        """
        sizes = self.task_sizes
        if self.n_tasks == 0:
            raise EstimationError("panel_not_rectangular", "empty panel")
        n_alts = int(sizes[0])
        if not np.all(sizes == n_alts):
            raise EstimationError("panel_not_rectangular",
                                  "tasks have differing alternative counts")
        counts = np.bincount(self.task_respondent, minlength=self.n_respondents)
        n_tasks = int(counts[0]) if len(counts) else 0
        if not np.all(counts == n_tasks) or n_tasks == 0:
            raise EstimationError("panel_not_rectangular",
                                  "respondents have differing task counts")
        k = self.X.shape[1]
        features = self.X.reshape(self.n_respondents, n_tasks, n_alts, k)
        chosen = self.chosen_pos.reshape(self.n_respondents, n_tasks)
        return features, chosen


def code_dataset(dataset: ChoiceDataset, index: ParameterIndex | None = None) -> CodedPanel:
    """Code a dataset against a parameter index (defaults to the schema's)."""
    schema = dataset.schema
    if index is None:
        index = build_parameter_index(schema)
    if not dataset.respondents:
        raise DatasetError("empty_dataset", "dataset has no respondents")
    coder = _Coder(schema, index)

    rows, ptr, chosen_rows, task_resp, row_alts = [], [0], [], [], []
    for r_i, rec in enumerate(dataset.respondents):
        for obs in rec.observations:
            alts = obs.alternatives(schema)
            start = ptr[-1]
            for j, aid in enumerate(alts):
                rows.append(coder.row(aid, obs.task_values, obs.alt_values[aid],
                                      rec.demographics))
                row_alts.append(aid)
                if aid == obs.chosen:
                    chosen_rows.append(start + j)
            ptr.append(start + len(alts))
            task_resp.append(r_i)

    return CodedPanel(
        schema=schema,
        index=index,
        X=np.vstack(rows),
        task_ptr=np.asarray(ptr, dtype=np.intp),
        chosen_row=np.asarray(chosen_rows, dtype=np.intp),
        task_respondent=np.asarray(task_resp, dtype=np.intp),
        respondent_ids=tuple(r.respondent_id for r in dataset.respondents),
        row_alternative=tuple(row_alts),
    )
