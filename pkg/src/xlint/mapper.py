"""Reverse mapping: project a structured insight back onto charts.

Two enhancement routes compose here.  annotate() appends layers to the
current spec: a dim layer keeping only the marks related to the insight, an
emphasis layer on each axis or legend that explains a matched channel, and
dashed reference lines at the constants the insight mentions.  recommend()
consults a deterministic rule table distilled from visualization design
guidelines (correlations want scatter plots; count claims want dual
beeswarms whose shape area shows quantity; aggregate comparisons want paired
bars) and proposes a coordinated view when the current chart is not already
the right one.  map() runs both and binds the two specs to the same dataset
and the same condition filter so the views stay coordinated.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .insights import Comparison, Correlation, Read, StructuredInsight, TVariable
from .visspec import (
    DEFAULT_DIM_OPACITY,
    DataRef,
    DimLayer,
    Emphasis,
    Encoding,
    KeepSelector,
    ReferenceLine,
    SeriesSpec,
    VisSpec,
    data_field,
    synthetic_field,
)

RULE_RATIONALES = {
    "correlation-scatter": (
        "A scatter plot of the two variables shows their relationship more "
        "directly than color gradients or bars."
    ),
    "count-dual-beeswarm": (
        "A dual beeswarm plot conveys data point quantities as shape area, so "
        "the two groups can be compared at a glance."
    ),
    "aggregate-comparison-bar": (
        "Paired bars put the two aggregated magnitudes side by side on a "
        "common scale."
    ),
    "read-aggregate-beeswarm": (
        "A beeswarm plot shows the whole distribution against the claimed "
        "threshold line."
    ),
    "already-suitable": (
        "The current view already encodes the insight's variables with the "
        "recommended mark."
    ),
}


@dataclass
class AnnotateResult:
    spec: VisSpec
    matched: bool
    matched_channels: tuple = ()


@dataclass
class MappingResult:
    annotated_spec: VisSpec
    recommended_spec: VisSpec | None
    rationale: str
    rule_id: str
    coordination: DataRef
    annotation_matched: bool

    def to_doc(self) -> dict:
        return {
            "annotated_spec": self.annotated_spec.to_doc(),
            "recommended_spec": self.recommended_spec.to_doc() if self.recommended_spec else None,
            "rationale": self.rationale,
            "rule_id": self.rule_id,
            "coordination": self.coordination.to_doc(),
            "annotation_matched": self.annotation_matched,
        }

    @staticmethod
    def from_doc(doc: dict) -> "MappingResult":
        rec = doc.get("recommended_spec")
        return MappingResult(
            annotated_spec=VisSpec.from_doc(doc["annotated_spec"]),
            recommended_spec=VisSpec.from_doc(rec) if rec else None,
            rationale=doc["rationale"],
            rule_id=doc["rule_id"],
            coordination=DataRef.from_doc(doc["coordination"]),
            annotation_matched=doc.get("annotation_matched", True),
        )


def insight_variables(insight: StructuredInsight) -> list[TVariable]:
    if isinstance(insight, Read):
        return [insight.variable]
    if isinstance(insight, Correlation):
        return [insight.x, insight.y]
    return [insight.left, insight.right]


def insight_pairs(insight: StructuredInsight) -> set:
    """(feature, facet) pairs an insight talks about, conditions included."""
    pairs = {(v.feature, v.facet) for v in insight_variables(insight)}
    pairs.update((c.feature, "value") for c in insight.conditions)
    return pairs


def insight_features(insight: StructuredInsight) -> set:
    return {f for f, _ in insight_pairs(insight)}


# ---------------------------------------------------------------------------
# annotation


def annotate(
    insight: StructuredInsight, spec: VisSpec, *, dim_opacity: float = DEFAULT_DIM_OPACITY
) -> AnnotateResult:
    """Append dim / emphasis / reference-line layers for this insight.

    Field matching is exact on (feature, facet); synthetic fields never match
    directly, but a feature-name partition (heatmap rows) matches when any
    insight feature appears among its values.  When nothing matches, the spec
    comes back unchanged with matched=False so the caller can force a
    recommended view instead.
    """
    pairs = insight_pairs(insight)
    features = insight_features(insight)

    matched_channels = []
    partition_channel = None
    for channel in ("x", "y", "color", "size", "opacity", "row-facet", "column-facet"):
        enc = spec.encodings.get(channel)
        if enc is None:
            continue
        f = enc.field
        if f.is_data and (f.feature, f.facet) in pairs:
            matched_channels.append(channel)
        elif f.synthetic == "feature-name" and features:
            partition_channel = channel
            matched_channels.append(channel)
        elif f.synthetic == "melted-attribution" and any(
            facet == "attribution" for _, facet in pairs
        ):
            matched_channels.append(channel)

    if not matched_channels:
        return AnnotateResult(spec=spec, matched=False)

    layers = []
    if partition_channel is not None:
        keep = KeepSelector(synthetic_field("feature-name"), tuple(sorted(features)))
    else:
        keep = None
    layers.append(DimLayer(keep=keep, opacity=dim_opacity))

    for channel in matched_channels:
        if channel in ("x", "y"):
            layers.append(Emphasis(target="axis", channel=channel))
        elif channel in ("color", "size"):
            layers.append(Emphasis(target="legend", channel=channel))

    def positional_channel_for(feature: str, facet: str):
        for channel in ("x", "y"):
            enc = spec.encodings.get(channel)
            if enc is not None and enc.field.is_data and (
                enc.field.feature, enc.field.facet
            ) == (feature, facet):
                return channel
        return None

    for cond in insight.conditions:
        channel = positional_channel_for(cond.feature, "value")
        if channel is None:
            continue
        bounds = cond.bounds if isinstance(cond.bounds, tuple) else (cond.bounds,)
        for b in bounds:
            if isinstance(b, str):
                continue
            layers.append(ReferenceLine(channel=channel, at=float(b)))
    if isinstance(insight, Read):
        channel = positional_channel_for(insight.variable.feature, insight.variable.facet)
        if channel is not None:
            layers.append(ReferenceLine(channel=channel, at=float(insight.threshold)))

    return AnnotateResult(
        spec=spec.with_layers(*layers), matched=True, matched_channels=tuple(matched_channels)
    )


# ---------------------------------------------------------------------------
# recommendation


def _scatter_target(insight: Correlation, data_ref: DataRef) -> VisSpec:
    return VisSpec(
        data_ref=data_ref,
        mark="point",
        encodings={
            "x": Encoding(data_field(insight.x.feature, insight.x.facet)),
            "y": Encoding(data_field(insight.y.feature, insight.y.facet)),
        },
        title=f"{insight.x.feature} {insight.x.facet} vs {insight.y.feature} {insight.y.facet}",
    )


def _dual_beeswarm_target(variable: TVariable, data_ref: DataRef) -> VisSpec:
    split = variable.predicate.constant if variable.predicate else 0.0
    return VisSpec(
        data_ref=data_ref,
        mark="beeswarm-point",
        encodings={
            "y": Encoding(data_field(variable.feature, variable.facet)),
            "x": Encoding(synthetic_field("density-offset")),
            "color": Encoding(synthetic_field("sign-group", param=float(split))),
        },
        title=f"{variable.feature} {variable.facet} split at {split:g}",
    )


def _var_label(v: TVariable) -> str:
    return f"{v.aggregator} {v.facet} of {v.feature}"


def _paired_bar_target(insight: Comparison, data_ref: DataRef) -> VisSpec:
    return VisSpec(
        data_ref=data_ref,
        mark="bar",
        encodings={
            "x": Encoding(synthetic_field("series-label"), scale="ordinal"),
            "y": Encoding(synthetic_field("series-value")),
        },
        series=(
            SeriesSpec(_var_label(insight.left), insight.left.feature,
                       insight.left.facet, insight.left.aggregator),
            SeriesSpec(_var_label(insight.right), insight.right.feature,
                       insight.right.facet, insight.right.aggregator),
        ),
        title=f"{_var_label(insight.left)} vs {_var_label(insight.right)}",
    )


def _single_beeswarm_target(insight: Read, data_ref: DataRef) -> VisSpec:
    v = insight.variable
    spec = VisSpec(
        data_ref=data_ref,
        mark="beeswarm-point",
        encodings={
            "x": Encoding(data_field(v.feature, v.facet)),
            "y": Encoding(synthetic_field("density-offset")),
        },
        title=f"distribution of {v.feature} {v.facet}",
    )
    return spec.with_layers(ReferenceLine(channel="x", at=float(insight.threshold)))


def _rule_target(insight: StructuredInsight, data_ref: DataRef):
    """The deterministic rule table; total over
    {Read, Correlation, Comparison} x aggregators."""
    if isinstance(insight, Correlation):
        return "correlation-scatter", _scatter_target(insight, data_ref)
    if isinstance(insight, Read):
        if insight.variable.aggregator in ("count", "fraction"):
            return "count-dual-beeswarm", _dual_beeswarm_target(insight.variable, data_ref)
        return "read-aggregate-beeswarm", _single_beeswarm_target(insight, data_ref)
    counting = [
        v for v in (insight.left, insight.right) if v.aggregator in ("count", "fraction")
    ]
    if counting:
        return "count-dual-beeswarm", _dual_beeswarm_target(counting[0], data_ref)
    return "aggregate-comparison-bar", _paired_bar_target(insight, data_ref)


def _positional_data_fields(spec: VisSpec) -> set:
    out = set()
    for channel in ("x", "y"):
        enc = spec.encodings.get(channel)
        if enc is not None and enc.field.is_data:
            out.add((enc.field.feature, enc.field.facet))
    return out


def _already_shown(current: VisSpec, target: VisSpec) -> bool:
    if current.mark != target.mark:
        return False
    if _positional_data_fields(current) != _positional_data_fields(target):
        return False
    if {s for s in current.series} != {s for s in target.series}:
        return False
    return True


def recommend(
    insight: StructuredInsight, current_spec: VisSpec, *, force: bool = False
):
    """Rule-based view recommendation; None when the current view already has
    the target mark with the same field bindings (unless force)."""
    rule_id, target = _rule_target(insight, current_spec.data_ref)
    if not force and _already_shown(current_spec, target):
        return None
    return target, RULE_RATIONALES[rule_id], rule_id


# ---------------------------------------------------------------------------
# composition


def _merge_filter(existing: tuple, conditions: tuple) -> tuple:
    merged = list(existing)
    for cond in conditions:
        if cond not in merged:
            merged.append(cond)
    return tuple(merged)


def map_insight(
    insight: StructuredInsight,
    spec: VisSpec,
    *,
    dim_opacity: float = DEFAULT_DIM_OPACITY,
) -> MappingResult:
    """annotate + recommend with a shared row filter on both specs.

    A NoMatch from annotate forces a recommended view so the user is never
    left with zero enhancement.
    """
    ann = annotate(insight, spec, dim_opacity=dim_opacity)
    rec = recommend(insight, spec, force=not ann.matched)
    shared = replace(
        spec.data_ref, filter=_merge_filter(spec.data_ref.filter, insight.conditions)
    )
    annotated = replace(ann.spec, data_ref=shared)
    if rec is None:
        return MappingResult(
            annotated_spec=annotated,
            recommended_spec=None,
            rationale=RULE_RATIONALES["already-suitable"],
            rule_id="already-suitable",
            coordination=shared,
            annotation_matched=ann.matched,
        )
    target, rationale, rule_id = rec
    recommended = replace(target, data_ref=shared)
    return MappingResult(
        annotated_spec=annotated,
        recommended_spec=recommended,
        rationale=rationale,
        rule_id=rule_id,
        coordination=shared,
        annotation_matched=ann.matched,
    )
