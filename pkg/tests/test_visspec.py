import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genlib import vocab_table
from xlint.errors import InvariantViolation, UnresolvableField
from xlint.insights import TCondition
from xlint.visspec import (
    DataRef,
    DimLayer,
    Emphasis,
    Encoding,
    KeepSelector,
    ReferenceLine,
    SeriesSpec,
    VisSpec,
    beeswarm_layout,
    compile,
    compile_to_json,
    data_field,
    synthetic_field,
    validate_spec,
)

TABLE = vocab_table()
SCHEMA_PATH = Path(__file__).parent / "vendor" / "vega-lite-v5.schema.json"


@pytest.fixture(scope="module")
def vl_validator():
    jsonschema = pytest.importorskip("jsonschema")
    schema = json.loads(SCHEMA_PATH.read_text())
    return jsonschema.Draft7Validator(schema)


def heatmap_spec(dataset="d0"):
    return VisSpec(
        data_ref=DataRef(dataset),
        mark="rect",
        encodings={
            "x": Encoding(synthetic_field("instance-index"), scale="ordinal"),
            "y": Encoding(synthetic_field("feature-name"), scale="ordinal"),
            "color": Encoding(synthetic_field("melted-attribution"), scale="diverging-color"),
        },
        title="Feature attribution heatmap",
    )


def scatter_spec(dataset="d0"):
    return VisSpec(
        data_ref=DataRef(dataset),
        mark="point",
        encodings={
            "x": Encoding(data_field("bp", "value")),
            "y": Encoding(data_field("bp", "attribution")),
        },
        title="bp values vs attributions",
    )


class TestCompile:
    def test_heatmap(self, vl_validator):
        doc = compile(heatmap_spec(), TABLE)
        assert doc["mark"]["type"] == "rect"
        assert set(doc["encoding"]) == {"x", "y", "color"}
        assert len(doc["data"]["values"]) == TABLE.n_rows * len(TABLE.features)
        assert doc["encoding"]["color"]["scale"]["domainMid"] == 0
        assert not list(vl_validator.iter_errors(doc))

    def test_scatter(self, vl_validator):
        doc = compile(scatter_spec(), TABLE)
        assert doc["mark"]["type"] == "point"
        assert doc["encoding"]["x"]["field"] == "value:bp"
        assert doc["encoding"]["y"]["field"] == "attribution:bp"
        assert not list(vl_validator.iter_errors(doc))

    def test_empty_beeswarm(self, vl_validator):
        spec = VisSpec(
            data_ref=DataRef("d0", filter=(TCondition("age", ">", 1e9),)),
            mark="beeswarm-point",
            encodings={
                "x": Encoding(data_field("bmi", "attribution")),
                "y": Encoding(synthetic_field("density-offset")),
            },
        )
        doc = compile(spec, TABLE)
        assert doc["data"]["values"] == []
        assert not list(vl_validator.iter_errors(doc))

    def test_deterministic(self):
        a = compile_to_json(heatmap_spec(), TABLE)
        b = compile_to_json(heatmap_spec(), TABLE)
        assert a == b

    def test_unresolvable_field(self):
        spec = VisSpec(
            data_ref=DataRef("d0"),
            mark="point",
            encodings={"x": Encoding(data_field("nope", "value"))},
        )
        with pytest.raises(UnresolvableField):
            compile(spec, TABLE)

    def test_filter_applies(self):
        spec = scatter_spec()
        filtered = VisSpec(
            data_ref=DataRef("d0", filter=(TCondition("age", ">", 0.5),)),
            mark=spec.mark,
            encodings=spec.encodings,
        )
        n_all = len(compile(spec, TABLE)["data"]["values"])
        n_f = len(compile(filtered, TABLE)["data"]["values"])
        assert n_f < n_all

    def test_dim_layer_compiles_to_conditional_opacity(self, vl_validator):
        spec = heatmap_spec().with_layers(
            DimLayer(
                keep=KeepSelector(synthetic_field("feature-name"), ("bp", "bmi")), opacity=0.2
            )
        )
        doc = compile(spec, TABLE)
        op = doc["encoding"]["opacity"]
        assert op["value"] == 0.2
        assert op["condition"]["test"] == {"field": "feature", "oneOf": ["bp", "bmi"]}
        assert not list(vl_validator.iter_errors(doc))

    def test_reference_line_layer(self, vl_validator):
        spec = scatter_spec().with_layers(ReferenceLine(channel="x", at=65.0))
        doc = compile(spec, TABLE)
        assert "layer" in doc
        rule = doc["layer"][1]
        assert rule["mark"] == {"type": "rule", "strokeDash": [4, 4]}
        assert rule["encoding"]["x"]["datum"] == 65.0
        assert not list(vl_validator.iter_errors(doc))

    def test_emphasis_bolds_axis(self):
        spec = scatter_spec().with_layers(Emphasis(target="axis", channel="y"))
        doc = compile(spec, TABLE)
        assert doc["encoding"]["y"]["axis"]["titleFontWeight"] == "bold"

    def test_paired_bar_series(self, vl_validator):
        spec = VisSpec(
            data_ref=DataRef("d0"),
            mark="bar",
            encodings={
                "x": Encoding(synthetic_field("series-label"), scale="ordinal"),
                "y": Encoding(synthetic_field("series-value")),
            },
            series=(
                SeriesSpec("mean attribution of bmi", "bmi", "attribution", "mean"),
                SeriesSpec("mean attribution of bp", "bp", "attribution", "mean"),
            ),
        )
        doc = compile(spec, TABLE)
        assert [r["series"] for r in doc["data"]["values"]] == [
            "mean attribution of bmi",
            "mean attribution of bp",
        ]
        assert not list(vl_validator.iter_errors(doc))

    def test_dual_beeswarm_sides(self, vl_validator):
        spec = VisSpec(
            data_ref=DataRef("d0"),
            mark="beeswarm-point",
            encodings={
                "y": Encoding(data_field("bp", "attribution")),
                "x": Encoding(synthetic_field("density-offset")),
                "color": Encoding(synthetic_field("sign-group", param=0.05)),
            },
        )
        doc = compile(spec, TABLE)
        # vocab_table attrs are 0.0, 0.1, 0.2 -> one below 0.05, two above
        sides = [r["side"] for r in doc["data"]["values"]]
        assert sides.count("left") == 1 and sides.count("right") == 2
        lefts = [r for r in doc["data"]["values"] if r["side"] == "left"]
        assert all(r["offset"] < 0 for r in lefts)
        assert not list(vl_validator.iter_errors(doc))


class TestValidateSpec:
    def test_rect_needs_color(self):
        spec = VisSpec(
            data_ref=DataRef("d0"),
            mark="rect",
            encodings={
                "x": Encoding(synthetic_field("instance-index")),
                "y": Encoding(synthetic_field("feature-name")),
            },
        )
        with pytest.raises(InvariantViolation):
            validate_spec(spec)

    def test_needs_positional(self):
        spec = VisSpec(
            data_ref=DataRef("d0"),
            mark="point",
            encodings={"color": Encoding(data_field("bp", "value"))},
        )
        with pytest.raises(InvariantViolation):
            validate_spec(spec)

    def test_diverging_only_on_color(self):
        spec = VisSpec(
            data_ref=DataRef("d0"),
            mark="point",
            encodings={
                "x": Encoding(data_field("bp", "value"), scale="diverging-color"),
                "y": Encoding(data_field("bp", "attribution")),
            },
        )
        with pytest.raises(InvariantViolation):
            validate_spec(spec)

    def test_beeswarm_needs_one_data_channel(self):
        spec = VisSpec(
            data_ref=DataRef("d0"),
            mark="beeswarm-point",
            encodings={
                "x": Encoding(data_field("bp", "value")),
                "y": Encoding(data_field("bp", "attribution")),
            },
        )
        with pytest.raises(InvariantViolation):
            validate_spec(spec)

    def test_dim_opacity_bounds(self):
        with pytest.raises(InvariantViolation):
            DimLayer(opacity=0.0)
        with pytest.raises(InvariantViolation):
            DimLayer(opacity=1.0)

    def test_reference_line_finite(self):
        with pytest.raises(InvariantViolation):
            ReferenceLine(channel="x", at=float("inf"))


class TestBeeswarmLayout:
    def test_three_identical_values(self):
        offsets = beeswarm_layout([0.1, 0.1, 0.1], 0.05, diameter=1.0)
        assert sorted(offsets) == [-1.0, 0.0, 1.0]

    def test_single_value(self):
        assert beeswarm_layout([3.2], 0.5) == [0.0]

    def test_distinct_bins_no_offsets(self):
        assert beeswarm_layout([0.0, 10.0, 20.0], 1.0) == [0.0, 0.0, 0.0]

    def test_input_order_independent(self):
        values = [0.1, 0.1, 0.1, 0.1, 5.0]
        ids = ["a", "b", "c", "d", "e"]
        base = beeswarm_layout(values, 0.05, ids=ids)
        perm = [3, 0, 4, 1, 2]
        shuffled = beeswarm_layout([values[i] for i in perm], 0.05, ids=[ids[i] for i in perm])
        assert shuffled == [base[i] for i in perm]

    def test_rejects_bad_bin_width(self):
        with pytest.raises(InvariantViolation):
            beeswarm_layout([1.0], 0.0)

    @given(
        st.lists(st.integers(min_value=-50, max_value=50).map(lambda x: x / 4.0), min_size=1, max_size=40)
    )
    @settings(max_examples=60)
    def test_symmetric_prefix_per_bin(self, values):
        import math

        offsets = beeswarm_layout(values, 0.5, diameter=1.0)
        bins = {}
        for v, off in zip(values, offsets):
            bins.setdefault(math.floor(v / 0.5), []).append(off)
        for offs in bins.values():
            expect = [0.0]
            k = 1
            while len(expect) < len(offs):
                expect.extend([float(k), float(-k)][: len(offs) - len(expect)])
                k += 1
            assert sorted(offs) == sorted(expect)


def test_spec_doc_roundtrip():
    spec = heatmap_spec().with_layers(
        DimLayer(keep=KeepSelector(synthetic_field("feature-name"), ("bp",))),
        ReferenceLine(channel="x", at=1.0),
        Emphasis(target="legend", channel="color"),
    )
    assert VisSpec.from_doc(json.loads(json.dumps(spec.to_doc()))) == spec
