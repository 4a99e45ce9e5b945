"""Structured insight representation.

Free-form observations about an explanation table reduce to three insight
shapes: Read (an aggregated attribution-related statistic compared against a
threshold), Correlation (two per-row variables and a claimed direction), and
Comparison (two aggregated variables and a claimed ordering).  All three may
be conditioned on feature value ranges.  This module defines the dataclasses,
the document validator that reports missing/ambiguous slots, the canonical
JSON form, and binding of feature references against a concrete table.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Union

from .data import ExplanationTable
from .errors import SchemaViolation, UnknownInsightType

SCHEMA_ID = "insight/v1"

FACETS = ("value", "attribution")
AGGREGATORS = ("identity", "mean", "variance", "min", "max", "count", "fraction")
AGGREGATED = ("mean", "variance", "min", "max", "count", "fraction")
PREDICATE_AGGREGATORS = ("count", "fraction")
PREDICATE_COMPARATORS = ("<", "<=", ">", ">=", "=")
READ_COMPARATORS = ("<", "<=", ">", ">=", "~=")
CONDITION_OPS = ("<", "<=", ">", ">=", "=", "in-range")
DIRECTIONS = ("positive", "negative", "none")
RELATIONS = ("greater", "less", "approx-equal")

#: shared relative tolerance for approx-equal / ~= comparisons
APPROX_RTOL = 0.05


@dataclass(frozen=True)
class Predicate:
    """Row predicate for count/fraction aggregators: facet <comparator> constant."""

    comparator: str
    constant: float


@dataclass(frozen=True)
class TVariable:
    """A value drawn from the table: a facet of one feature, optionally
    aggregated over rows."""

    feature: str
    facet: str
    aggregator: str
    predicate: Predicate | None = None


@dataclass(frozen=True)
class TCondition:
    """Row filter on a feature's value.  Bounds are a single number, a
    (lo, hi) pair for in-range, or a category string for equality on
    categorical features."""

    feature: str
    op: str
    bounds: Union[float, str, tuple]
    facet: str = "value"


@dataclass(frozen=True)
class Read:
    variable: TVariable
    comparator: str
    threshold: float
    conditions: tuple = ()


@dataclass(frozen=True)
class Correlation:
    x: TVariable
    y: TVariable
    direction: str
    conditions: tuple = ()


@dataclass(frozen=True)
class Comparison:
    left: TVariable
    right: TVariable
    relation: str
    conditions: tuple = ()


StructuredInsight = Union[Read, Correlation, Comparison]

INSIGHT_TAGS = {"read": Read, "correlation": Correlation, "comparison": Comparison}


@dataclass(frozen=True)
class SlotStatus:
    """One incomplete or unusable field of an insight document."""

    path: str
    state: str  # filled | missing | ambiguous
    candidates: tuple | None = None


@dataclass
class ValidationResult:
    insight: StructuredInsight | None
    slots: list[SlotStatus]

    @property
    def ok(self) -> bool:
        return self.insight is not None


def insight_tag(insight: StructuredInsight) -> str:
    for tag, cls in INSIGHT_TAGS.items():
        if isinstance(insight, cls):
            return tag
    raise UnknownInsightType(type(insight).__name__)


# ---------------------------------------------------------------------------
# validation


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


class _Collector:
    def __init__(self):
        self.slots: list[SlotStatus] = []

    def missing(self, path, candidates=None):
        self.slots.append(SlotStatus(path, "missing", tuple(candidates) if candidates else None))

    def ambiguous(self, path, candidates=None):
        self.slots.append(SlotStatus(path, "ambiguous", tuple(candidates) if candidates else None))


def _pick_enum(doc, key, allowed, path, col, required=True):
    v = doc.get(key)
    if v is None:
        if required:
            col.missing(f"{path}.{key}", allowed)
        return None
    if not isinstance(v, str) or v not in allowed:
        col.ambiguous(f"{path}.{key}", allowed)
        return None
    return v


def _pick_number(doc, key, path, col, required=True):
    v = doc.get(key)
    if v is None:
        if required:
            col.missing(f"{path}.{key}")
        return None
    if not _is_number(v):
        col.ambiguous(f"{path}.{key}")
        return None
    return float(v)


def _validate_variable(doc, path, col, identity: bool) -> TVariable | None:
    """identity=True for correlation variables (must be per-row), False for
    aggregated read/comparison variables."""
    if not isinstance(doc, dict):
        col.missing(path)
        return None
    feature = doc.get("feature")
    if not isinstance(feature, str) or not feature:
        col.missing(f"{path}.feature")
        feature = None
    facet = _pick_enum(doc, "facet", FACETS, path, col)
    if identity:
        agg = doc.get("aggregator", "identity")
        if agg != "identity":
            col.ambiguous(f"{path}.aggregator", ("identity",))
            agg = None
    else:
        agg = _pick_enum(doc, "aggregator", AGGREGATED, path, col)
    pred_doc = doc.get("predicate")
    predicate = None
    if agg in PREDICATE_AGGREGATORS:
        if not isinstance(pred_doc, dict):
            col.missing(f"{path}.predicate")
        else:
            cmp_ = _pick_enum(pred_doc, "comparator", PREDICATE_COMPARATORS, f"{path}.predicate", col)
            const = _pick_number(pred_doc, "constant", f"{path}.predicate", col)
            if cmp_ is not None and const is not None:
                predicate = Predicate(comparator=cmp_, constant=const)
    elif pred_doc is not None and agg is not None:
        col.ambiguous(f"{path}.predicate")
    if feature is None or facet is None or agg is None:
        return None
    if agg in PREDICATE_AGGREGATORS and predicate is None:
        return None
    return TVariable(feature=feature, facet=facet, aggregator=agg, predicate=predicate)


def _validate_condition(doc, path, col) -> TCondition | None:
    if not isinstance(doc, dict):
        col.ambiguous(path)
        return None
    feature = doc.get("feature")
    if not isinstance(feature, str) or not feature:
        col.missing(f"{path}.feature")
        feature = None
    facet = doc.get("facet", "value")
    if facet != "value":
        # conditions are restricted to feature values
        col.ambiguous(f"{path}.facet", ("value",))
        facet = None
    op = _pick_enum(doc, "op", CONDITION_OPS, path, col)
    bounds = doc.get("bounds")
    parsed_bounds = None
    if bounds is None:
        col.missing(f"{path}.bounds")
    elif op == "in-range":
        if (
            isinstance(bounds, (list, tuple))
            and len(bounds) == 2
            and all(_is_number(b) for b in bounds)
            and bounds[0] <= bounds[1]
        ):
            parsed_bounds = (float(bounds[0]), float(bounds[1]))
        else:
            col.ambiguous(f"{path}.bounds")
    elif op is not None:
        if _is_number(bounds):
            parsed_bounds = float(bounds)
        elif isinstance(bounds, str) and op == "=":
            parsed_bounds = bounds
        else:
            col.ambiguous(f"{path}.bounds")
    if feature is None or facet is None or op is None or parsed_bounds is None:
        return None
    return TCondition(feature=feature, op=op, bounds=parsed_bounds)


def _validate_conditions(doc, path, col) -> tuple | None:
    conds_doc = doc.get("conditions")
    if conds_doc is None:
        return ()
    if not isinstance(conds_doc, list):
        col.ambiguous(f"{path}.conditions")
        return None
    out = []
    ok = True
    for i, cd in enumerate(conds_doc):
        c = _validate_condition(cd, f"{path}.conditions[{i}]", col)
        if c is None:
            ok = False
        else:
            out.append(c)
    return tuple(out) if ok else None


def validate(document) -> ValidationResult:
    """Check an insight-shaped document; return either a fully valid insight
    or the complete list of missing/ambiguous slots (never a partial list).

    Raises UnknownInsightType when the type tag is not one of
    read/correlation/comparison.
    """
    if not isinstance(document, dict):
        raise UnknownInsightType(f"document must be an object, got {type(document).__name__}")
    tag = document.get("type")
    if isinstance(tag, str):
        tag = tag.lower()
    if tag not in INSIGHT_TAGS:
        raise UnknownInsightType(repr(tag))
    schema = document.get("schema")
    if schema is not None and schema != SCHEMA_ID:
        raise SchemaViolation(["$.schema"], f"unsupported schema {schema!r}")

    col = _Collector()
    if tag == "read":
        variable = _validate_variable(document.get("variable"), "read.variable", col, identity=False)
        comparator = _pick_enum(document, "comparator", READ_COMPARATORS, "read", col)
        threshold = _pick_number(document, "threshold", "read", col)
        conditions = _validate_conditions(document, "read", col)
        if not col.slots:
            return ValidationResult(
                Read(variable=variable, comparator=comparator, threshold=threshold, conditions=conditions),
                [],
            )
    elif tag == "correlation":
        x = _validate_variable(document.get("x"), "correlation.x", col, identity=True)
        y = _validate_variable(document.get("y"), "correlation.y", col, identity=True)
        direction = _pick_enum(document, "direction", DIRECTIONS, "correlation", col)
        conditions = _validate_conditions(document, "correlation", col)
        if x is not None and y is not None and x.feature == y.feature and x.facet == y.facet:
            col.ambiguous("correlation.y")
        if not col.slots:
            return ValidationResult(
                Correlation(x=x, y=y, direction=direction, conditions=conditions), []
            )
    else:
        left = _validate_variable(document.get("left"), "comparison.left", col, identity=False)
        right = _validate_variable(document.get("right"), "comparison.right", col, identity=False)
        relation = _pick_enum(document, "relation", RELATIONS, "comparison", col)
        conditions = _validate_conditions(document, "comparison", col)
        if not col.slots:
            return ValidationResult(
                Comparison(left=left, right=right, relation=relation, conditions=conditions), []
            )
    return ValidationResult(None, col.slots)


# ---------------------------------------------------------------------------
# canonical JSON


def _variable_doc(v: TVariable | None) -> dict | None:
    if v is None:
        return None
    return {
        "feature": v.feature,
        "facet": v.facet,
        "aggregator": v.aggregator,
        "predicate": None
        if v.predicate is None
        else {"comparator": v.predicate.comparator, "constant": v.predicate.constant},
    }


def _condition_doc(c: TCondition) -> dict:
    bounds = list(c.bounds) if isinstance(c.bounds, tuple) else c.bounds
    return {"feature": c.feature, "facet": c.facet, "op": c.op, "bounds": bounds}


def to_document(insight: StructuredInsight) -> dict:
    """Canonical JSON-shaped document: explicit nulls for absent conditions
    and predicates, tagged with the schema version."""
    tag = insight_tag(insight)
    doc = {"schema": SCHEMA_ID, "type": tag}
    if isinstance(insight, Read):
        doc["variable"] = _variable_doc(insight.variable)
        doc["comparator"] = insight.comparator
        doc["threshold"] = insight.threshold
    elif isinstance(insight, Correlation):
        doc["x"] = _variable_doc(insight.x)
        doc["y"] = _variable_doc(insight.y)
        doc["direction"] = insight.direction
    else:
        doc["left"] = _variable_doc(insight.left)
        doc["right"] = _variable_doc(insight.right)
        doc["relation"] = insight.relation
    doc["conditions"] = [_condition_doc(c) for c in insight.conditions] or None
    return doc


def serialize(insight: StructuredInsight) -> str:
    return json.dumps(to_document(insight), sort_keys=True)


def deserialize(text: str) -> StructuredInsight:
    """Parse canonical (or canonicalizable) insight JSON; SchemaViolation
    carries the offending paths."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(["$"], f"invalid JSON: {exc}") from exc
    try:
        result = validate(doc)
    except UnknownInsightType as exc:
        raise SchemaViolation(["$.type"], f"unknown insight type: {exc}") from exc
    if not result.ok:
        raise SchemaViolation([f"$.{s.path}" for s in result.slots])
    return result.insight


# ---------------------------------------------------------------------------
# binding feature references against a table


@dataclass
class BoundInsight:
    insight: StructuredInsight
    slots: list[SlotStatus]

    @property
    def fully_bound(self) -> bool:
        return not self.slots


def resolve_feature(ref: str, table: ExplanationTable):
    """Resolve a feature reference: exact name, case-folded name, then
    description substring, in that order.  Returns (name, None) on success,
    (None, ties) on an ambiguous match, (None, None) when nothing matches."""
    for f in table.features:
        if f.name == ref:
            return f.name, None
    folded = ref.casefold()
    hits = [f.name for f in table.features if f.name.casefold() == folded]
    if len(hits) == 1:
        return hits[0], None
    if len(hits) > 1:
        return None, tuple(hits)
    hits = [
        f.name
        for f in table.features
        if f.description and folded and folded in f.description.casefold()
    ]
    if len(hits) == 1:
        return hits[0], None
    if len(hits) > 1:
        return None, tuple(hits)
    return None, None


def bind(insight: StructuredInsight, table: ExplanationTable) -> BoundInsight:
    """Resolve every feature reference in an insight against the table's
    features (fuzzy: case-insensitive, then description synonyms).
    Unresolved references come back as slots, never as errors."""
    tag = insight_tag(insight)
    slots: list[SlotStatus] = []

    def bind_var(v: TVariable | None, path: str) -> TVariable | None:
        if v is None:
            return None
        name, ties = resolve_feature(v.feature, table)
        if name is not None:
            return replace(v, feature=name)
        if ties:
            slots.append(SlotStatus(f"{path}.feature", "ambiguous", ties))
        else:
            slots.append(SlotStatus(f"{path}.feature", "missing", tuple(table.feature_names)))
        return v

    def bind_cond(c: TCondition, path: str) -> TCondition:
        name, ties = resolve_feature(c.feature, table)
        if name is not None:
            return replace(c, feature=name)
        if ties:
            slots.append(SlotStatus(f"{path}.feature", "ambiguous", ties))
        else:
            slots.append(SlotStatus(f"{path}.feature", "missing", tuple(table.feature_names)))
        return c

    conds = tuple(
        bind_cond(c, f"{tag}.conditions[{i}]") for i, c in enumerate(insight.conditions)
    )
    if isinstance(insight, Read):
        bound = Read(
            variable=bind_var(insight.variable, "read.variable"),
            comparator=insight.comparator,
            threshold=insight.threshold,
            conditions=conds,
        )
    elif isinstance(insight, Correlation):
        bound = Correlation(
            x=bind_var(insight.x, "correlation.x"),
            y=bind_var(insight.y, "correlation.y"),
            direction=insight.direction,
            conditions=conds,
        )
    else:
        bound = Comparison(
            left=bind_var(insight.left, "comparison.left"),
            right=bind_var(insight.right, "comparison.right"),
            relation=insight.relation,
            conditions=conds,
        )
    return BoundInsight(insight=bound, slots=slots)


def bind_document(document: dict, table: ExplanationTable) -> tuple[dict, list[SlotStatus]]:
    """bind() for raw documents: resolves feature strings in place where
    possible and reports the rest as slots.  Used by the extraction pipeline
    before a document is fully valid."""
    doc = json.loads(json.dumps(document))  # deep copy
    tag = doc.get("type")
    slots: list[SlotStatus] = []

    def resolve_in(obj, path):
        if not isinstance(obj, dict):
            return
        ref = obj.get("feature")
        if not isinstance(ref, str) or not ref:
            return
        name, ties = resolve_feature(ref, table)
        if name is not None:
            obj["feature"] = name
        elif ties:
            slots.append(SlotStatus(f"{path}.feature", "ambiguous", ties))
        else:
            slots.append(SlotStatus(f"{path}.feature", "missing", tuple(table.feature_names)))

    for key in ("variable", "x", "y", "left", "right"):
        if key in doc:
            resolve_in(doc.get(key), f"{tag}.{key}")
    conds = doc.get("conditions")
    if isinstance(conds, list):
        for i, cd in enumerate(conds):
            resolve_in(cd, f"{tag}.conditions[{i}]")
    return doc, slots
