"""Tabular attribution-based explanations.

An explanation table holds, per data point, the feature values, the model
prediction, and one attribution value per feature relative to a shared base
value.  This module ingests and serializes such tables (CSV and JSON),
filters rows by value conditions, and provides an exact Shapley oracle for
linear models (plus a brute-force enumerator used to cross-check it) so
tests can build ground-truth tables.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Iterable

from .errors import (
    DuplicateRowId,
    EmptyTable,
    MalformedInput,
    MissingFeature,
    TooManyFeatures,
    TypeMismatch,
    UnknownFeature,
)

if TYPE_CHECKING:  # pragma: no cover
    from .insights import TCondition

QUANTITATIVE = "quantitative"
CATEGORICAL = "categorical"

#: cap for the 2**n coalition enumeration
BRUTE_FORCE_MAX_FEATURES = 12

_BASE_VALUE_RE = re.compile(r"#\s*base_value\s*=\s*(\S+)")


@dataclass(frozen=True)
class FeatureMeta:
    """Name and kind of one input feature, plus optional documentation."""

    name: str
    kind: str = QUANTITATIVE
    unit: str | None = None
    description: str | None = None

    def __post_init__(self):
        if not self.name:
            raise MalformedInput("feature name must be non-empty")
        if self.kind not in (QUANTITATIVE, CATEGORICAL):
            raise MalformedInput(f"unknown feature kind {self.kind!r}")


@dataclass(frozen=True)
class Row:
    """One explained data point: feature values, attributions, prediction."""

    id: str
    values: dict
    attributions: dict
    prediction: float


@dataclass
class ExplanationTable:
    """Validated, immutable-by-convention global explanation table.

    Efficiency (base_value + sum of attributions == prediction) is checked
    per row but only recorded as a warning: non-Shapley attribution methods
    need not satisfy it.
    """

    features: list[FeatureMeta]
    base_value: float
    rows: list[Row]
    warnings: list[str] = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise MalformedInput("duplicate feature names")
        seen_ids = set()
        for row in self.rows:
            if row.id in seen_ids:
                raise DuplicateRowId(f"duplicate row id {row.id!r}")
            seen_ids.add(row.id)
            for f in self.features:
                if f.name not in row.values:
                    raise MalformedInput(f"row {row.id!r} missing value for {f.name!r}")
                if f.name not in row.attributions:
                    raise MalformedInput(f"row {row.id!r} missing attribution for {f.name!r}")
                v = row.values[f.name]
                if v is None:
                    raise MalformedInput(f"row {row.id!r} has a missing value for {f.name!r}")
                if f.kind == QUANTITATIVE and not _is_number(v):
                    raise MalformedInput(
                        f"row {row.id!r}: quantitative feature {f.name!r} has non-numeric value {v!r}"
                    )
                if f.kind == CATEGORICAL and not isinstance(v, str):
                    raise MalformedInput(
                        f"row {row.id!r}: categorical feature {f.name!r} has non-string value {v!r}"
                    )
                if not _is_number(row.attributions[f.name]):
                    raise MalformedInput(f"row {row.id!r}: non-numeric attribution for {f.name!r}")
            residual = abs(self.base_value + sum(row.attributions.values()) - row.prediction)
            if residual > 1e-6 * (1.0 + abs(row.prediction)):
                self.warnings.append(
                    f"row {row.id!r}: attributions do not sum to the prediction "
                    f"(residual {residual:.3g})"
                )

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    def feature(self, name: str) -> FeatureMeta:
        for f in self.features:
            if f.name == name:
                return f
        raise UnknownFeature(name)

    @property
    def n_rows(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class LinearModel:
    """Linear model with an independent-feature background distribution."""

    weights: dict
    intercept: float
    background_means: dict

    def __post_init__(self):
        if set(self.weights) != set(self.background_means):
            raise MalformedInput("weights and background_means must cover the same features")


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _as_text(source) -> str:
    if isinstance(source, bytes):
        try:
            return source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedInput(f"input is not valid UTF-8: {exc}") from exc
    if isinstance(source, str):
        return source
    if hasattr(source, "read"):
        return _as_text(source.read())
    raise MalformedInput(f"unsupported source type {type(source).__name__}")


# ---------------------------------------------------------------------------
# loading / serialization


def load_table(source, format: str = "csv") -> ExplanationTable:
    """Parse a CSV or JSON byte stream into a validated ExplanationTable.

    CSV header: ``id, f:<name>..., attr:<name>..., prediction`` with an
    optional ``# base_value=<real>`` comment line.  JSON follows the
    documented dataset schema.  Efficiency violations become warnings on
    the returned table, never failures.
    """
    text = _as_text(source)
    if format == "csv":
        return _load_csv(text)
    if format == "json":
        return _load_json(text)
    raise MalformedInput(f"unknown format {format!r}")


def _load_csv(text: str) -> ExplanationTable:
    base_value = 0.0
    data_lines = []
    for line in text.splitlines():
        if line.lstrip().startswith("#"):
            m = _BASE_VALUE_RE.search(line)
            if m:
                try:
                    base_value = float(m.group(1))
                except ValueError as exc:
                    raise MalformedInput(f"bad base_value {m.group(1)!r}") from exc
            continue
        if line.strip():
            data_lines.append(line)
    if not data_lines:
        raise EmptyTable("no header line")

    reader = csv.reader(io.StringIO("\n".join(data_lines)))
    header = next(reader)
    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        raise MalformedInput("duplicate column in header")

    value_cols: dict[str, int] = {}
    attr_cols: dict[str, int] = {}
    id_col = pred_col = None
    for i, col in enumerate(header):
        if col == "id":
            id_col = i
        elif col == "prediction":
            pred_col = i
        elif col.startswith("f:"):
            value_cols[col[2:]] = i
        elif col.startswith("attr:"):
            attr_cols[col[5:]] = i
        else:
            raise MalformedInput(f"unrecognized column {col!r}")
    if id_col is None or pred_col is None:
        raise MalformedInput("header must contain 'id' and 'prediction'")
    if set(value_cols) != set(attr_cols):
        missing = set(value_cols) ^ set(attr_cols)
        raise MalformedInput(f"feature/attribution columns do not pair up: {sorted(missing)}")
    if not value_cols:
        raise MalformedInput("no feature columns")

    names = list(value_cols)
    raw_rows = []
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != len(header):
            raise MalformedInput(f"line {lineno}: expected {len(header)} fields, got {len(rec)}")
        raw_rows.append(rec)
    if not raw_rows:
        raise EmptyTable("no data rows")

    # a feature column is quantitative iff every value parses as a float
    kinds = {}
    for name in names:
        col = value_cols[name]
        kinds[name] = QUANTITATIVE if all(_parses_float(r[col]) for r in raw_rows) else CATEGORICAL

    features = [FeatureMeta(name=n, kind=kinds[n]) for n in names]
    rows = []
    for rec in raw_rows:
        values = {}
        attrs = {}
        for name in names:
            raw = rec[value_cols[name]]
            values[name] = float(raw) if kinds[name] == QUANTITATIVE else raw
            a_raw = rec[attr_cols[name]]
            if not _parses_float(a_raw):
                raise MalformedInput(f"non-numeric attribution {a_raw!r} for {name!r}")
            attrs[name] = float(a_raw)
        if not _parses_float(rec[pred_col]):
            raise MalformedInput(f"non-numeric prediction {rec[pred_col]!r}")
        rows.append(
            Row(id=rec[id_col], values=values, attributions=attrs, prediction=float(rec[pred_col]))
        )
    return ExplanationTable(features=features, base_value=base_value, rows=rows)


def _parses_float(s: str) -> bool:
    try:
        f = float(s)
    except ValueError:
        return False
    return math.isfinite(f)


def _load_json(text: str) -> ExplanationTable:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedInput("top-level JSON value must be an object")
    feats_doc = doc.get("features")
    rows_doc = doc.get("rows")
    if not isinstance(feats_doc, list) or not feats_doc:
        raise MalformedInput("'features' must be a non-empty array")
    if not isinstance(rows_doc, list):
        raise MalformedInput("'rows' must be an array")
    if not rows_doc:
        raise EmptyTable("no data rows")
    base_value = doc.get("base_value", 0.0)
    if not _is_number(base_value):
        raise MalformedInput("'base_value' must be a number")

    features = []
    for fd in feats_doc:
        if not isinstance(fd, dict) or not isinstance(fd.get("name"), str):
            raise MalformedInput(f"bad feature entry {fd!r}")
        features.append(
            FeatureMeta(
                name=fd["name"],
                kind=fd.get("kind", QUANTITATIVE),
                unit=fd.get("unit"),
                description=fd.get("description"),
            )
        )

    rows = []
    for rd in rows_doc:
        if not isinstance(rd, dict):
            raise MalformedInput(f"bad row entry {rd!r}")
        rid = rd.get("id")
        if not isinstance(rid, str):
            raise MalformedInput(f"row id must be a string, got {rid!r}")
        values = rd.get("values")
        attrs = rd.get("attributions")
        pred = rd.get("prediction")
        if not isinstance(values, dict) or not isinstance(attrs, dict):
            raise MalformedInput(f"row {rid!r}: 'values' and 'attributions' must be objects")
        if not _is_number(pred):
            raise MalformedInput(f"row {rid!r}: non-numeric prediction {pred!r}")
        values = {k: float(v) if _is_number(v) else v for k, v in values.items()}
        rows.append(Row(id=rid, values=values, attributions=dict(attrs), prediction=float(pred)))
    return ExplanationTable(features=features, base_value=float(base_value), rows=rows)


def serialize_table(table: ExplanationTable, format: str = "csv") -> str:
    """Inverse of load_table.  JSON is lossless; CSV cannot carry feature
    units/descriptions and infers kinds from the values on reload."""
    if format == "csv":
        buf = io.StringIO()
        buf.write(f"# base_value={_fmt(table.base_value)}\n")
        writer = csv.writer(buf, lineterminator="\n")
        names = table.feature_names
        writer.writerow(["id"] + [f"f:{n}" for n in names] + [f"attr:{n}" for n in names] + ["prediction"])
        for row in table.rows:
            rec = [row.id]
            for n in names:
                v = row.values[n]
                rec.append(_fmt(v) if _is_number(v) else v)
            rec.extend(_fmt(row.attributions[n]) for n in names)
            rec.append(_fmt(row.prediction))
            writer.writerow(rec)
        return buf.getvalue()
    if format == "json":
        feats = []
        for f in table.features:
            fd = {"name": f.name, "kind": f.kind}
            if f.unit is not None:
                fd["unit"] = f.unit
            if f.description is not None:
                fd["description"] = f.description
            feats.append(fd)
        doc = {
            "base_value": table.base_value,
            "features": feats,
            "rows": [
                {
                    "id": r.id,
                    "values": r.values,
                    "attributions": r.attributions,
                    "prediction": r.prediction,
                }
                for r in table.rows
            ],
        }
        return json.dumps(doc, sort_keys=True)
    raise MalformedInput(f"unknown format {format!r}")


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# Shapley oracle


def exact_shapley_linear(model: LinearModel, instance: dict) -> dict:
    """Closed-form Shapley attributions of a linear model with independent
    features: attribution_i = w_i * (x_i - mean_i).

    The returned prediction is defined as base_value + sum(attributions) so
    efficiency holds exactly in floating point.
    """
    for name in model.weights:
        if name not in instance:
            raise MissingFeature(name)
    attrs = {
        name: model.weights[name] * (instance[name] - model.background_means[name])
        for name in model.weights
    }
    base = model.intercept + sum(
        model.weights[n] * model.background_means[n] for n in model.weights
    )
    return {
        "attributions": attrs,
        "base_value": base,
        "prediction": base + sum(attrs.values()),
    }


def brute_force_shapley(value_fn: Callable[[frozenset], float], n: int) -> list[float]:
    """Exact Shapley values of an n-player coalition game by full 2**n
    enumeration; independent oracle for exact_shapley_linear."""
    if n > BRUTE_FORCE_MAX_FEATURES:
        raise TooManyFeatures(f"n={n} exceeds cap of {BRUTE_FORCE_MAX_FEATURES}")
    if n < 0:
        raise ValueError("n must be non-negative")
    values = [
        value_fn(frozenset(i for i in range(n) if mask >> i & 1)) for mask in range(1 << n)
    ]
    fact = math.factorial
    weight = [fact(s) * fact(n - s - 1) / fact(n) for s in range(n)]
    phi = [0.0] * n
    for mask in range(1 << n):
        s = bin(mask).count("1")
        for i in range(n):
            if not mask >> i & 1:
                phi[i] += weight[s] * (values[mask | (1 << i)] - values[mask])
    return phi


def mean_imputation_value_fn(model: LinearModel, instance: dict, order: list[str]):
    """Coalition value function of a linear model where absent features are
    imputed by their background means."""

    def value(coalition: frozenset) -> float:
        total = model.intercept
        for i, name in enumerate(order):
            x = instance[name] if i in coalition else model.background_means[name]
            total += model.weights[name] * x
        return total

    return value


def linear_explanation_table(
    model: LinearModel,
    instances: Iterable[dict],
    ids: Iterable[str] | None = None,
    features: list[FeatureMeta] | None = None,
) -> ExplanationTable:
    """Build a ground-truth table from a linear model; efficiency holds
    exactly on every row by construction."""
    order = list(model.weights)
    feats = features or [FeatureMeta(name=n) for n in order]
    rows = []
    instances = list(instances)
    row_ids = list(ids) if ids is not None else [f"r{i}" for i in range(len(instances))]
    base = None
    for rid, inst in zip(row_ids, instances):
        res = exact_shapley_linear(model, inst)
        base = res["base_value"]
        rows.append(
            Row(
                id=rid,
                values={n: inst[n] for n in order},
                attributions=res["attributions"],
                prediction=res["prediction"],
            )
        )
    if base is None:
        raise EmptyTable("no instances")
    return ExplanationTable(features=feats, base_value=base, rows=rows)


# ---------------------------------------------------------------------------
# filtering


def filter_rows(table: ExplanationTable, conditions: Iterable["TCondition"]) -> list[Row]:
    """Rows satisfying every condition (conjunction); [] is a valid result."""
    conditions = list(conditions)
    known = {f.name: f for f in table.features}
    for cond in conditions:
        meta = known.get(cond.feature)
        if meta is None:
            raise UnknownFeature(cond.feature)
        if meta.kind == CATEGORICAL:
            if cond.op != "=":
                raise TypeMismatch(
                    f"condition op {cond.op!r} not allowed on categorical feature {cond.feature!r}"
                )
            if not isinstance(cond.bounds, str):
                raise TypeMismatch(
                    f"equality on categorical feature {cond.feature!r} needs a string bound"
                )
        else:
            if isinstance(cond.bounds, str):
                raise TypeMismatch(
                    f"string bound on quantitative feature {cond.feature!r}"
                )
    return [r for r in table.rows if all(_matches(r, c) for c in conditions)]


def _matches(row: Row, cond) -> bool:
    v = row.values[cond.feature]
    op = cond.op
    b = cond.bounds
    if op == "in-range":
        lo, hi = b
        return lo <= v <= hi
    if op == "=":
        return v == b
    if op == "<":
        return v < b
    if op == "<=":
        return v <= b
    if op == ">":
        return v > b
    if op == ">=":
        return v >= b
    raise TypeMismatch(f"unknown condition op {op!r}")
