"""Experiment schema: alternatives, attributes, coding, and the parameter layout.

A schema declares the choice setting once; the design generator, the data
pipeline, the estimators, and the simulator all derive their column layout
from it through ``build_parameter_index``, so a coefficient name means the
same thing everywhere.

Scopes:
  alternative_specific  levels and coefficients belong to one alternative
  shared                every alternative carries its own level of the
                        attribute, but all alternatives share one
                        coefficient block (identified by cross-alternative
                        level variation within a task)
  context               task-level variable entering only through declared
                        interactions with non-reference alternatives
  demographic           respondent-level variable entering only through
                        declared interactions with non-reference alternatives

Effects coding: an L-level attribute spans L - 1 columns; the base level is
the last level listed and codes -1 in every column, so each column's codes
sum to zero across levels and the implied base coefficient is the negated
sum of the estimated ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SchemaError

__all__ = [
    "Level",
    "AlternativeDef",
    "AttributeDef",
    "ExperimentSchema",
    "ParamInfo",
    "ParameterIndex",
    "SchemaIssue",
    "effects_code",
    "build_parameter_index",
    "validate_schema",
]

SCOPES = ("alternative_specific", "shared", "context", "demographic")
CODINGS = ("effects", "linear")


@dataclass(frozen=True)
class Level:
    """One attribute level: machine label, optional numeric value, display text."""

    label: str
    value: float | None = None
    display: str | None = None

    def shown(self) -> str:
        return self.display if self.display is not None else self.label


@dataclass(frozen=True)
class AlternativeDef:
    id: str
    label: str = ""
    is_reference: bool = False


@dataclass(frozen=True)
class AttributeDef:
    """One attribute. ``applies_to`` empty means all alternatives.

    ``column`` is the CSV column carrying this attribute's level labels in
    long-format data and design exports; it defaults to ``name``. Several
    alternative-specific attributes may share a column (one per alternative)
    when they represent the same underlying quantity with different level
    sets, e.g. per-mode delivery cost.
    """

    name: str
    scope: str
    levels: tuple[Level, ...]
    applies_to: tuple[str, ...] = ()
    coding: str = "effects"
    column: str | None = None

    def __post_init__(self):
        if self.scope not in SCOPES:
            raise SchemaError("bad_scope", f"attribute {self.name}: unknown scope {self.scope!r}")
        if self.coding not in CODINGS:
            raise SchemaError("bad_coding", f"attribute {self.name}: unknown coding {self.coding!r}")

    @property
    def csv_column(self) -> str:
        return self.column if self.column is not None else self.name

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def n_columns(self) -> int:
        return 1 if self.coding == "linear" else len(self.levels) - 1

    @property
    def base_level(self) -> Level:
        return self.levels[-1]

    def level_labels(self) -> tuple[str, ...]:
        return tuple(l.label for l in self.levels)

    def level(self, label: str) -> Level:
        for l in self.levels:
            if l.label == label:
                return l
        raise SchemaError("unknown_level",
                          f"attribute {self.name}: unknown level {label!r}")


def effects_code(attribute: AttributeDef, label: str) -> np.ndarray:
    """Code one level of an attribute.

    Effects coding returns a length L-1 vector: unit vector for a non-base
    level, all -1 for the base (last listed) level. Linear coding returns the
    level's numeric value as a length-1 vector.
    """
    lv = attribute.level(label)
    if attribute.coding == "linear":
        if lv.value is None:
            raise SchemaError("missing_value",
                              f"attribute {attribute.name}: level {label!r} has no numeric value")
        return np.array([lv.value], dtype=np.float64)
    pos = attribute.level_labels().index(label)
    code = np.zeros(attribute.n_levels - 1, dtype=np.float64)
    if pos == attribute.n_levels - 1:
        code[:] = -1.0
    else:
        code[pos] = 1.0
    return code


@dataclass(frozen=True)
class ExperimentSchema:
    """Alternatives, attributes, and interaction declarations."""

    name: str
    alternatives: tuple[AlternativeDef, ...]
    attributes: tuple[AttributeDef, ...]
    context_interactions: tuple[tuple[str, str], ...] = ()
    demographic_interactions: tuple[tuple[str, str], ...] = ()

    # -- lookups ----------------------------------------------------------

    def alternative_ids(self) -> tuple[str, ...]:
        return tuple(a.id for a in self.alternatives)

    @property
    def reference(self) -> AlternativeDef:
        refs = [a for a in self.alternatives if a.is_reference]
        if len(refs) != 1:
            raise SchemaError("reference", f"schema {self.name}: need exactly one reference "
                                           f"alternative, found {len(refs)}")
        return refs[0]

    def attribute(self, name: str) -> AttributeDef:
        for a in self.attributes:
            if a.name == name:
                return a
        raise SchemaError("unknown_attribute", f"schema {self.name}: no attribute {name!r}")

    def applies(self, attr: AttributeDef, alt_id: str) -> bool:
        return not attr.applies_to or alt_id in attr.applies_to

    def design_attributes(self, alt_id: str) -> tuple[AttributeDef, ...]:
        """Attributes whose levels vary run-by-run for this alternative."""
        out = []
        for a in self.attributes:
            if a.scope == "alternative_specific" and self.applies(a, alt_id):
                out.append(a)
            elif a.scope == "shared" and self.applies(a, alt_id):
                out.append(a)
        return tuple(out)

    def context_attributes(self) -> tuple[AttributeDef, ...]:
        return tuple(a for a in self.attributes if a.scope == "context")

    def demographic_attributes(self) -> tuple[AttributeDef, ...]:
        return tuple(a for a in self.attributes if a.scope == "demographic")

    def attribute_for_column(self, column: str, alt_id: str) -> AttributeDef:
        """Resolve a long-format CSV design column to the attribute that fills
        it for the given alternative."""
        for a in self.attributes:
            if a.scope in ("alternative_specific", "shared") and a.csv_column == column \
                    and self.applies(a, alt_id):
                return a
        raise SchemaError("unknown_column",
                          f"schema {self.name}: no design attribute fills column {column!r} "
                          f"for alternative {alt_id!r}")

    def design_columns(self) -> tuple[str, ...]:
        """Long-format design columns in first-appearance order."""
        seen: list[str] = []
        for a in self.attributes:
            if a.scope in ("alternative_specific", "shared") and a.csv_column not in seen:
                seen.append(a.csv_column)
        return tuple(seen)

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        def level_dict(l: Level) -> dict:
            d: dict = {"label": l.label}
            if l.value is not None:
                d["value"] = l.value
            if l.display is not None:
                d["display"] = l.display
            return d

        return {
            "name": self.name,
            "alternatives": [
                {"id": a.id, "label": a.label, "is_reference": a.is_reference}
                for a in self.alternatives
            ],
            "attributes": [
                {
                    "name": a.name,
                    "scope": a.scope,
                    "coding": a.coding,
                    "applies_to": list(a.applies_to),
                    "column": a.csv_column,
                    "levels": [level_dict(l) for l in a.levels],
                }
                for a in self.attributes
            ],
            "interactions": {
                "context": [list(p) for p in self.context_interactions],
                "demographic": [list(p) for p in self.demographic_interactions],
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSchema":
        try:
            alts = tuple(
                AlternativeDef(a["id"], a.get("label", ""), bool(a.get("is_reference", False)))
                for a in d["alternatives"]
            )
            attrs = tuple(
                AttributeDef(
                    name=a["name"],
                    scope=a["scope"],
                    coding=a.get("coding", "effects"),
                    applies_to=tuple(a.get("applies_to", ())),
                    # the JSON always materializes the column; fold the
                    # default back to None so round trips compare equal
                    column=None if a.get("column") == a["name"] else a.get("column"),
                    levels=tuple(
                        Level(l["label"], l.get("value"), l.get("display"))
                        for l in a["levels"]
                    ),
                )
                for a in d["attributes"]
            )
            inter = d.get("interactions", {})
            return cls(
                name=d["name"],
                alternatives=alts,
                attributes=attrs,
                context_interactions=tuple((p[0], p[1]) for p in inter.get("context", ())),
                demographic_interactions=tuple((p[0], p[1]) for p in inter.get("demographic", ())),
            )
        except (KeyError, IndexError, TypeError) as exc:
            raise SchemaError("schema_json", f"malformed schema JSON: {exc!r}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentSchema":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError("schema_json", f"malformed schema JSON: {exc!r}") from exc
        return cls.from_dict(d)


# ---------------------------------------------------------------------------
# Parameter index
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamInfo:
    """One utility-function column."""

    name: str
    kind: str  # asc | context | attribute | demographic | sd
    attribute: str | None = None
    alternative: str | None = None  # owning alternative; None for shared blocks
    level: str | None = None


@dataclass(frozen=True)
class ParameterIndex:
    """Bijective, deterministic map between coefficient names and columns."""

    schema_name: str
    entries: tuple[ParamInfo, ...]
    random_params: tuple[str, ...] = ()

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError("duplicate_parameter", f"duplicate parameter names: {dupes}")

    @property
    def n_params(self) -> int:
        return len(self.entries)

    @property
    def n_fixed(self) -> int:
        return len(self.entries) - len(self.random_params)

    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries)

    def position(self, name: str) -> int:
        for i, e in enumerate(self.entries):
            if e.name == name:
                return i
        raise SchemaError("unknown_parameter", f"no parameter named {name!r}")

    def positions(self, names) -> np.ndarray:
        return np.array([self.position(n) for n in names], dtype=np.intp)

    def block(self, kind: str, attribute: str | None = None,
              alternative: str | None = None) -> list[int]:
        """Column positions of one logical block, in layout order."""
        return [i for i, e in enumerate(self.entries)
                if e.kind == kind and e.attribute == attribute and e.alternative == alternative]

    def sd_position(self, param_name: str) -> int:
        return self.position(f"sd:{param_name}")


def _block_prefix(attr: AttributeDef, alt_id: str | None) -> str:
    if alt_id is None or (len(attr.applies_to) == 1 and attr.applies_to[0] == alt_id):
        return attr.name
    return f"{attr.name}_{alt_id}"


def build_parameter_index(schema: ExperimentSchema,
                          random_params: tuple[str, ...] = ()) -> ParameterIndex:
    """Lay out utility columns for a schema.

    Order: ASCs for non-reference alternatives (schema order), context
    interaction blocks (declared order), design attributes (declared order;
    an alternative_specific attribute contributes one block per applicable
    alternative, a shared attribute one block total), demographic interaction
    blocks (declared order), then one sd column per entry of
    ``random_params``. Identical schemas produce identical orderings.
    """
    ref = schema.reference
    entries: list[ParamInfo] = []

    for alt in schema.alternatives:
        if not alt.is_reference:
            entries.append(ParamInfo(f"asc_{alt.id}", "asc", alternative=alt.id))

    def _add_block(kind: str, attr: AttributeDef, alt_id: str | None, prefix: str):
        if attr.coding == "linear":
            entries.append(ParamInfo(prefix, kind, attribute=attr.name,
                                     alternative=alt_id, level=None))
            return
        for lv in attr.levels[:-1]:
            entries.append(ParamInfo(f"{prefix}:{lv.label}", kind, attribute=attr.name,
                                     alternative=alt_id, level=lv.label))

    for attr_name, alt_id in schema.context_interactions:
        attr = schema.attribute(attr_name)
        _add_block("context", attr, alt_id, f"{attr.name}_{alt_id}")

    for attr in schema.attributes:
        if attr.scope == "alternative_specific":
            for alt in schema.alternatives:
                if schema.applies(attr, alt.id):
                    _add_block("attribute", attr, alt.id, _block_prefix(attr, alt.id))
        elif attr.scope == "shared":
            _add_block("attribute", attr, None, attr.name)

    for attr_name, alt_id in schema.demographic_interactions:
        attr = schema.attribute(attr_name)
        _add_block("demographic", attr, alt_id, f"{attr.name}_{alt_id}")

    fixed_names = {e.name for e in entries}
    for rp in random_params:
        if rp not in fixed_names:
            raise SchemaError("unknown_parameter",
                              f"random parameter {rp!r} is not a fixed-part coefficient")
    for rp in random_params:
        entries.append(ParamInfo(f"sd:{rp}", "sd", attribute=None, alternative=None, level=rp))

    return ParameterIndex(schema.name, tuple(entries), tuple(random_params))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SchemaIssue:
    code: str
    message: str


def validate_schema(schema: ExperimentSchema) -> list[SchemaIssue]:
    """Collect all schema violations; returns an empty list when valid.

    Never raises: callers decide whether issues are fatal.
    """
    issues: list[SchemaIssue] = []
    alt_ids = [a.id for a in schema.alternatives]

    if len(alt_ids) != len(set(alt_ids)):
        issues.append(SchemaIssue("duplicate_alternative", "alternative ids are not unique"))
    refs = [a.id for a in schema.alternatives if a.is_reference]
    if len(refs) == 0:
        issues.append(SchemaIssue("no_reference", "no reference alternative declared"))
    elif len(refs) > 1:
        issues.append(SchemaIssue("multiple_reference",
                                  f"multiple reference alternatives: {refs}"))

    names = [a.name for a in schema.attributes]
    if len(names) != len(set(names)):
        issues.append(SchemaIssue("duplicate_attribute", "attribute names are not unique"))

    for attr in schema.attributes:
        if attr.n_levels < 2:
            issues.append(SchemaIssue("degenerate_attribute",
                                      f"attribute {attr.name}: fewer than 2 levels"))
        labels = attr.level_labels()
        if len(labels) != len(set(labels)):
            issues.append(SchemaIssue("duplicate_level",
                                      f"attribute {attr.name}: duplicate level labels"))
        for alt_id in attr.applies_to:
            if alt_id not in alt_ids:
                issues.append(SchemaIssue("unknown_alternative",
                                          f"attribute {attr.name}: applies_to references "
                                          f"unknown alternative {alt_id!r}"))
        if attr.coding == "linear":
            for lv in attr.levels:
                if lv.value is None:
                    issues.append(SchemaIssue("missing_value",
                                              f"attribute {attr.name}: linear coding needs a "
                                              f"numeric value for level {lv.label!r}"))

    ref_id = refs[0] if len(refs) == 1 else None
    known = set(names)
    for kind, pairs, want_scope in (
        ("context", schema.context_interactions, "context"),
        ("demographic", schema.demographic_interactions, "demographic"),
    ):
        for attr_name, alt_id in pairs:
            if attr_name not in known:
                issues.append(SchemaIssue("unknown_interaction_attribute",
                                          f"{kind} interaction references unknown attribute "
                                          f"{attr_name!r}"))
                continue
            if schema.attribute(attr_name).scope != want_scope:
                issues.append(SchemaIssue("interaction_scope",
                                          f"{kind} interaction with {attr_name!r}, whose scope "
                                          f"is {schema.attribute(attr_name).scope!r}"))
            if alt_id not in alt_ids:
                issues.append(SchemaIssue("interaction_unknown_alternative",
                                          f"{kind} interaction references unknown alternative "
                                          f"{alt_id!r}"))
            elif ref_id is not None and alt_id == ref_id:
                issues.append(SchemaIssue("interaction_with_reference",
                                          f"{kind} interaction with the reference "
                                          f"alternative {alt_id!r}"))
    return issues
