"""Minimal declarative chart model and its Vega-Lite v5 compiler.

A VisSpec is a mark, a channel->encoding map, and a list of annotation
layers (dim / dashed reference line / axis-legend emphasis).  compile()
resolves every field against an explanation table, inlines the data values,
and emits deterministic Vega-Lite JSON so the UI renders without any layout
logic; beeswarm offsets are computed here.

Encodable fields are either a (feature, facet) pair of the table or one of a
small set of synthetic fields: instance-index and density-offset, plus
feature-name / melted-attribution for the heatmap melt, sign-group for dual
beeswarms, and series-label / series-value for paired aggregate bars.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

from .data import QUANTITATIVE, ExplanationTable, filter_rows
from .errors import InvariantViolation, UndefinedStatistic, UnresolvableField
from .evaluator import _aggregate  # aggregation shared with the evaluator
from .insights import TCondition, TVariable

VEGA_LITE_SCHEMA = "https://vega.github.io/schema/vega-lite/v5.json"

MARKS = ("point", "rect", "bar", "tick", "beeswarm-point")
CHANNELS = ("x", "y", "color", "size", "opacity", "row-facet", "column-facet")
POSITIONAL = ("x", "y")
SYNTHETIC_KINDS = (
    "instance-index",
    "density-offset",
    "feature-name",
    "melted-attribution",
    "sign-group",
    "series-label",
    "series-value",
)
SCALES = ("linear", "ordinal", "diverging-color")

DEFAULT_DIM_OPACITY = 0.2
#: beeswarm point diameter in offset-axis units
POINT_DIAMETER = 0.05


@dataclass(frozen=True)
class FieldRef:
    """Either a (feature, facet) data field or a synthetic field."""

    feature: str | None = None
    facet: str | None = None
    synthetic: str | None = None
    param: float | None = None  # sign-group split point

    def __post_init__(self):
        if self.synthetic is not None:
            if self.synthetic not in SYNTHETIC_KINDS:
                raise InvariantViolation(f"unknown synthetic field {self.synthetic!r}")
            if self.feature is not None or self.facet is not None:
                raise InvariantViolation("synthetic fields carry no feature/facet")
        else:
            if not self.feature or self.facet not in ("value", "attribution"):
                raise InvariantViolation(f"bad data field {self.feature!r}/{self.facet!r}")

    @property
    def is_data(self) -> bool:
        return self.synthetic is None

    def key(self) -> str:
        """Column name in the inlined records."""
        if self.synthetic is not None:
            return {
                "instance-index": "instance",
                "density-offset": "offset",
                "feature-name": "feature",
                "melted-attribution": "attribution",
                "sign-group": "side",
                "series-label": "series",
                "series-value": "value",
            }[self.synthetic]
        return f"{self.facet}:{self.feature}"

    def to_doc(self) -> dict:
        if self.synthetic is not None:
            doc = {"synthetic": self.synthetic}
            if self.param is not None:
                doc["param"] = self.param
            return doc
        return {"feature": self.feature, "facet": self.facet}

    @staticmethod
    def from_doc(doc: dict) -> "FieldRef":
        if "synthetic" in doc:
            return FieldRef(synthetic=doc["synthetic"], param=doc.get("param"))
        return FieldRef(feature=doc["feature"], facet=doc["facet"])


def data_field(feature: str, facet: str) -> FieldRef:
    return FieldRef(feature=feature, facet=facet)


def synthetic_field(kind: str, param: float | None = None) -> FieldRef:
    return FieldRef(synthetic=kind, param=param)


@dataclass(frozen=True)
class Encoding:
    field: FieldRef
    scale: str = "linear"
    axis_title: str | None = None

    def __post_init__(self):
        if self.scale not in SCALES:
            raise InvariantViolation(f"unknown scale {self.scale!r}")

    def to_doc(self) -> dict:
        return {"field": self.field.to_doc(), "scale": self.scale, "axis_title": self.axis_title}

    @staticmethod
    def from_doc(doc: dict) -> "Encoding":
        return Encoding(
            field=FieldRef.from_doc(doc["field"]),
            scale=doc.get("scale", "linear"),
            axis_title=doc.get("axis_title"),
        )


@dataclass(frozen=True)
class DataRef:
    dataset: str
    filter: tuple = ()  # tuple of TCondition

    def to_doc(self) -> dict:
        return {
            "dataset": self.dataset,
            "filter": [
                {
                    "feature": c.feature,
                    "facet": c.facet,
                    "op": c.op,
                    "bounds": list(c.bounds) if isinstance(c.bounds, tuple) else c.bounds,
                }
                for c in self.filter
            ],
        }

    @staticmethod
    def from_doc(doc: dict) -> "DataRef":
        conds = []
        for cd in doc.get("filter") or []:
            bounds = cd["bounds"]
            if isinstance(bounds, list):
                bounds = tuple(bounds)
            conds.append(TCondition(feature=cd["feature"], op=cd["op"], bounds=bounds))
        return DataRef(dataset=doc["dataset"], filter=tuple(conds))


@dataclass(frozen=True)
class KeepSelector:
    """Marks whose record field takes one of these values stay at full
    opacity; everything else is dimmed."""

    field: FieldRef
    values: tuple

    def to_doc(self) -> dict:
        return {"field": self.field.to_doc(), "values": list(self.values)}

    @staticmethod
    def from_doc(doc: dict) -> "KeepSelector":
        return KeepSelector(field=FieldRef.from_doc(doc["field"]), values=tuple(doc["values"]))


@dataclass(frozen=True)
class DimLayer:
    keep: KeepSelector | None = None  # None keeps every mark
    opacity: float = DEFAULT_DIM_OPACITY

    def __post_init__(self):
        if not (0.0 < self.opacity < 1.0):
            raise InvariantViolation("dim opacity must be in (0, 1)")

    def to_doc(self) -> dict:
        return {
            "kind": "dim",
            "keep": self.keep.to_doc() if self.keep else None,
            "opacity": self.opacity,
        }


@dataclass(frozen=True)
class ReferenceLine:
    channel: str  # x | y
    at: float
    style: str = "dashed"

    def __post_init__(self):
        if self.channel not in POSITIONAL:
            raise InvariantViolation("reference lines are positional")
        if not math.isfinite(self.at):
            raise InvariantViolation("reference line position must be finite")

    def to_doc(self) -> dict:
        return {"kind": "reference-line", "channel": self.channel, "at": self.at, "style": self.style}


@dataclass(frozen=True)
class Emphasis:
    target: str  # axis | legend
    channel: str

    def __post_init__(self):
        if self.target not in ("axis", "legend"):
            raise InvariantViolation(f"unknown emphasis target {self.target!r}")

    def to_doc(self) -> dict:
        return {"kind": "emphasis", "target": self.target, "channel": self.channel}


def layer_from_doc(doc: dict):
    kind = doc.get("kind")
    if kind == "dim":
        keep = doc.get("keep")
        return DimLayer(
            keep=KeepSelector.from_doc(keep) if keep else None, opacity=doc["opacity"]
        )
    if kind == "reference-line":
        return ReferenceLine(channel=doc["channel"], at=doc["at"], style=doc.get("style", "dashed"))
    if kind == "emphasis":
        return Emphasis(target=doc["target"], channel=doc["channel"])
    raise InvariantViolation(f"unknown layer kind {kind!r}")


@dataclass(frozen=True)
class SeriesSpec:
    """One bar of a paired aggregate bar chart."""

    label: str
    feature: str
    facet: str
    aggregator: str

    def to_doc(self) -> dict:
        return {
            "label": self.label,
            "feature": self.feature,
            "facet": self.facet,
            "aggregator": self.aggregator,
        }

    @staticmethod
    def from_doc(doc: dict) -> "SeriesSpec":
        return SeriesSpec(doc["label"], doc["feature"], doc["facet"], doc["aggregator"])


@dataclass(frozen=True)
class VisSpec:
    data_ref: DataRef
    mark: str
    encodings: dict  # channel -> Encoding
    layers: tuple = ()
    title: str = ""
    series: tuple = ()  # SeriesSpec, only with series-label/value fields

    def encoding(self, channel: str) -> Encoding | None:
        return self.encodings.get(channel)

    def with_layers(self, *layers) -> "VisSpec":
        return replace(self, layers=self.layers + tuple(layers))

    def to_doc(self) -> dict:
        return {
            "data_ref": self.data_ref.to_doc(),
            "mark": self.mark,
            "encodings": {ch: e.to_doc() for ch, e in self.encodings.items()},
            "layers": [l.to_doc() for l in self.layers],
            "title": self.title,
            "series": [s.to_doc() for s in self.series],
        }

    @staticmethod
    def from_doc(doc: dict) -> "VisSpec":
        return VisSpec(
            data_ref=DataRef.from_doc(doc["data_ref"]),
            mark=doc["mark"],
            encodings={ch: Encoding.from_doc(e) for ch, e in doc["encodings"].items()},
            layers=tuple(layer_from_doc(l) for l in doc.get("layers", [])),
            title=doc.get("title", ""),
            series=tuple(SeriesSpec.from_doc(s) for s in doc.get("series", [])),
        )


# ---------------------------------------------------------------------------
# validation


def validate_spec(spec: VisSpec) -> None:
    if spec.mark not in MARKS:
        raise InvariantViolation(f"unknown mark {spec.mark!r}")
    for ch in spec.encodings:
        if ch not in CHANNELS:
            raise InvariantViolation(f"unknown channel {ch!r}")
    if "x" not in spec.encodings and "y" not in spec.encodings:
        raise InvariantViolation("spec needs an x or y encoding")
    if spec.mark == "rect":
        if not all(ch in spec.encodings for ch in ("x", "y", "color")):
            raise InvariantViolation("rect (heatmap) requires x, y and color")
    for ch, enc in spec.encodings.items():
        f = enc.field
        if enc.scale == "diverging-color" and ch != "color":
            raise InvariantViolation("diverging-color only on the color channel")
        if f.synthetic == "instance-index" and ch not in POSITIONAL:
            raise InvariantViolation("instance-index is positional")
        if f.synthetic == "density-offset" and (
            ch not in POSITIONAL or spec.mark != "beeswarm-point"
        ):
            raise InvariantViolation("density-offset only on a beeswarm positional channel")
        if f.synthetic == "feature-name" and (ch not in POSITIONAL or spec.mark != "rect"):
            raise InvariantViolation("feature-name only on a rect positional channel")
        if f.synthetic == "melted-attribution" and (ch != "color" or spec.mark != "rect"):
            raise InvariantViolation("melted-attribution only on rect color")
        if f.synthetic == "sign-group" and spec.mark != "beeswarm-point":
            raise InvariantViolation("sign-group only on beeswarm marks")
        if f.synthetic in ("series-label", "series-value") and spec.mark != "bar":
            raise InvariantViolation("series fields only on bar marks")
    if spec.mark == "beeswarm-point":
        pos = [spec.encodings.get(ch) for ch in POSITIONAL]
        data_channels = [e for e in pos if e is not None and e.field.is_data]
        offset_channels = [
            e for e in pos if e is not None and e.field.synthetic == "density-offset"
        ]
        if len(data_channels) != 1 or len(offset_channels) != 1:
            raise InvariantViolation(
                "beeswarm-point needs exactly one positional data channel and one density-offset"
            )
    uses_series = any(
        e.field.synthetic in ("series-label", "series-value") for e in spec.encodings.values()
    )
    if uses_series and not spec.series:
        raise InvariantViolation("series fields need spec.series entries")


# ---------------------------------------------------------------------------
# beeswarm layout


def beeswarm_layout(values, bin_width, ids=None, diameter: float = 1.0) -> list[float]:
    """Perpendicular offsets for a beeswarm: values fall into bins of
    bin_width; within a bin the offsets are 0, +d, -d, +2d, -2d, ... assigned
    in sorted-value then id order.  Input-order independent given stable ids."""
    if bin_width <= 0:
        raise InvariantViolation("bin_width must be positive")
    n = len(values)
    if ids is None:
        ids = list(range(n))
    order = sorted(range(n), key=lambda i: (values[i], str(ids[i])))
    offsets = [0.0] * n
    counts: dict[int, int] = {}
    for i in order:
        b = math.floor(values[i] / bin_width)
        k = counts.get(b, 0)
        counts[b] = k + 1
        if k == 0:
            mult = 0.0
        else:
            step = (k + 1) // 2
            mult = float(step) if k % 2 == 1 else float(-step)
        offsets[i] = mult * diameter
    return offsets


# ---------------------------------------------------------------------------
# compilation


def _resolve_data_field(f: FieldRef, table: ExplanationTable):
    meta = None
    for fm in table.features:
        if fm.name == f.feature:
            meta = fm
            break
    if meta is None:
        raise UnresolvableField(f.feature)
    return meta


def _record_value(row, f: FieldRef):
    return row.values[f.feature] if f.facet == "value" else row.attributions[f.feature]


def _build_records(spec: VisSpec, table: ExplanationTable, rows) -> list[dict]:
    if spec.mark == "rect":
        records = []
        for idx, row in enumerate(rows):
            for fm in table.features:
                records.append(
                    {"instance": idx, "id": row.id, "feature": fm.name,
                     "attribution": row.attributions[fm.name]}
                )
        return records

    if spec.mark == "beeswarm-point":
        value_enc = next(
            spec.encodings[ch] for ch in POSITIONAL if spec.encodings[ch].field.is_data
        )
        value_field = value_enc.field
        _resolve_data_field(value_field, table)
        values = [float(_record_value(r, value_field)) for r in rows]
        ids = [r.id for r in rows]
        sign_enc = next(
            (e for e in spec.encodings.values() if e.field.synthetic == "sign-group"), None
        )
        if values:
            spread = max(values) - min(values)
            bin_width = spread / 40.0 if spread > 0 else 1.0
        else:
            bin_width = 1.0
        records = []
        if sign_enc is not None:
            split = sign_enc.field.param if sign_enc.field.param is not None else 0.0
            sides = ["left" if v < split else "right" for v in values]
            groups = {"left": [], "right": []}
            for i, side in enumerate(sides):
                groups[side].append(i)
            centers = {"left": -1.0, "right": 1.0}
            offsets = [0.0] * len(values)
            for side, idxs in groups.items():
                side_offsets = beeswarm_layout(
                    [values[i] for i in idxs], bin_width,
                    ids=[ids[i] for i in idxs], diameter=POINT_DIAMETER,
                )
                for i, off in zip(idxs, side_offsets):
                    offsets[i] = centers[side] + off
            for i, row in enumerate(rows):
                records.append(
                    {"id": row.id, value_field.key(): values[i], "offset": offsets[i],
                     "side": sides[i]}
                )
        else:
            offsets = beeswarm_layout(values, bin_width, ids=ids, diameter=POINT_DIAMETER)
            for i, row in enumerate(rows):
                records.append(
                    {"id": row.id, value_field.key(): values[i], "offset": offsets[i]}
                )
        return records

    if spec.series:
        records = []
        for s in spec.series:
            variable = TVariable(s.feature, s.facet, s.aggregator)
            try:
                value = _aggregate(rows, variable)
            except UndefinedStatistic:
                continue  # no rows to aggregate: empty bar
            records.append({"series": s.label, "value": value})
        return records

    data_fields = [e.field for e in spec.encodings.values() if e.field.is_data]
    uses_index = any(
        e.field.synthetic == "instance-index" for e in spec.encodings.values()
    )
    records = []
    for idx, row in enumerate(rows):
        rec = {"id": row.id}
        if uses_index:
            rec["instance"] = idx
        for f in data_fields:
            _resolve_data_field(f, table)
            rec[f.key()] = _record_value(row, f)
        records.append(rec)
    return records


def _vl_type(enc: Encoding, table: ExplanationTable) -> str:
    f = enc.field
    if enc.scale == "ordinal":
        return "ordinal"
    if f.synthetic in ("instance-index", "feature-name"):
        return "ordinal"
    if f.synthetic in ("sign-group", "series-label"):
        return "nominal"
    if f.synthetic in ("density-offset", "melted-attribution", "series-value"):
        return "quantitative"
    meta = _resolve_data_field(f, table)
    return "quantitative" if meta.kind == QUANTITATIVE else "nominal"


def _vl_encoding(ch: str, enc: Encoding, spec: VisSpec, table: ExplanationTable) -> dict:
    f = enc.field
    out = {"field": f.key(), "type": _vl_type(enc, table)}
    if enc.axis_title is not None:
        out["title"] = enc.axis_title
    elif f.is_data:
        out["title"] = f"{f.feature} ({f.facet})"
    if enc.scale == "diverging-color" or f.synthetic == "melted-attribution":
        # SHAP-convention diverging colors: blue (negative) to red (positive),
        # centered at zero attribution
        out["scale"] = {"scheme": "redblue", "reverse": True, "domainMid": 0}
    if f.synthetic == "feature-name":
        out["sort"] = list(table.feature_names)
    if f.synthetic == "instance-index" and ch in POSITIONAL:
        out["axis"] = {"labels": False, "ticks": False, "title": "instance"}
    if f.synthetic == "density-offset" and ch in POSITIONAL:
        out["axis"] = None
    return out


def _keep_test(keep: KeepSelector | None):
    if keep is None:
        return "true"
    return {"field": keep.field.key(), "oneOf": list(keep.values)}


def compile(spec: VisSpec, table: ExplanationTable) -> dict:
    """Deterministic Vega-Lite v5 document with inlined data values."""
    validate_spec(spec)
    rows = filter_rows(table, spec.data_ref.filter)
    records = _build_records(spec, table, rows)

    encoding = {}
    for ch in CHANNELS:
        enc = spec.encodings.get(ch)
        if enc is None:
            continue
        vl_channel = {"row-facet": "row", "column-facet": "column"}.get(ch, ch)
        encoding[vl_channel] = _vl_encoding(ch, enc, spec, table)

    dim_layers = [l for l in spec.layers if isinstance(l, DimLayer)]
    emphases = [l for l in spec.layers if isinstance(l, Emphasis)]
    rule_layers = [l for l in spec.layers if isinstance(l, ReferenceLine)]

    for dim in dim_layers:
        encoding["opacity"] = {
            "condition": {"test": _keep_test(dim.keep), "value": 1.0},
            "value": dim.opacity,
        }
    for emphasis in emphases:
        vl_channel = {"row-facet": "row", "column-facet": "column"}.get(
            emphasis.channel, emphasis.channel
        )
        enc_doc = encoding.get(vl_channel)
        if enc_doc is None:
            continue
        bold = {"titleFontWeight": "bold", "labelFontWeight": "bold"}
        if emphasis.target == "axis":
            axis = enc_doc.get("axis") or {}
            axis.update(bold)
            enc_doc["axis"] = axis
        else:
            legend = enc_doc.get("legend") or {}
            legend.update(bold)
            enc_doc["legend"] = legend

    vl_mark = "point" if spec.mark == "beeswarm-point" else spec.mark
    mark_doc = {"type": vl_mark}
    if vl_mark == "point":
        mark_doc["filled"] = True

    base = {"mark": mark_doc, "encoding": encoding}
    doc = {"$schema": VEGA_LITE_SCHEMA, "data": {"values": records}}
    if spec.title:
        doc["title"] = spec.title
    if rule_layers:
        layers = [base]
        for rule in rule_layers:
            layers.append(
                {
                    "mark": {"type": "rule", "strokeDash": [4, 4]},
                    "encoding": {rule.channel: {"datum": rule.at}},
                }
            )
        doc["layer"] = layers
    else:
        doc.update(base)
    return doc


def compile_to_json(spec: VisSpec, table: ExplanationTable) -> str:
    """Byte-stable compilation: identical spec+table give identical JSON."""
    return json.dumps(compile(spec, table), sort_keys=True)
