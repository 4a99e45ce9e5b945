import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genlib import VOCAB_FEATURES, rand_insight, vocab_table
from xlint.data import ExplanationTable, FeatureMeta, Row
from xlint.grammar import (
    NoParse,
    PartialParse,
    Segment,
    format_number,
    needs_quote,
    parse_controlled,
    render,
    roundtrip_check,
    tokenize,
)
from xlint.insights import (
    Comparison,
    Correlation,
    Predicate,
    Read,
    TCondition,
    TVariable,
    validate,
)

TABLE = vocab_table()

CASE1_TEXT = (
    "there is no correlation between blood pressure attributions "
    "and serum triglycerides attributions"
)
CASE2_TEXT = (
    "The number of patients with positive attribution for blood pressure "
    "is greater than the number with negative attribution"
)


class TestParsePaperSentences:
    def test_case1_correlation_none(self):
        insight = parse_controlled(CASE1_TEXT, TABLE)
        assert insight == Correlation(
            x=TVariable("bp", "attribution", "identity"),
            y=TVariable("serum triglycerides", "attribution", "identity"),
            direction="none",
        )

    def test_case2_count_comparison(self):
        insight = parse_controlled(CASE2_TEXT, TABLE)
        assert insight == Comparison(
            left=TVariable("bp", "attribution", "count", Predicate(">", 0.0)),
            right=TVariable("bp", "attribution", "count", Predicate("<", 0.0)),
            relation="greater",
        )

    def test_fraction_pattern(self):
        insight = parse_controlled(
            "for more than 65% of patients, BMI has a positive attribution", TABLE
        )
        assert insight == Read(
            variable=TVariable("bmi", "attribution", "fraction", Predicate(">", 0.0)),
            comparator=">",
            threshold=0.65,
        )

    def test_as_increases_pattern(self):
        insight = parse_controlled(
            "as age increases, the attribution of age also tends to increase", TABLE
        )
        assert insight == Correlation(
            x=TVariable("age", "value", "identity"),
            y=TVariable("age", "attribution", "identity"),
            direction="positive",
        )

    def test_condition_above(self):
        insight = parse_controlled(
            "the mean attribution of bmi is greater than 0.5 when age is above 65", TABLE
        )
        assert insight.conditions == (TCondition("age", ">", 65.0),)

    def test_that_of_elision(self):
        insight = parse_controlled(
            "the mean attribution of BMI is greater than that of blood pressure", TABLE
        )
        assert insight == Comparison(
            left=TVariable("bmi", "attribution", "mean"),
            right=TVariable("bp", "attribution", "mean"),
            relation="greater",
        )


class TestParseOutcomes:
    def test_out_of_grammar(self):
        assert isinstance(parse_controlled("blood pressure matters a lot", TABLE), NoParse)

    def test_empty(self):
        assert isinstance(parse_controlled("", TABLE), NoParse)

    def test_most_yields_ambiguous_slot(self):
        result = parse_controlled("for most patients, BMI has a positive attribution", TABLE)
        assert isinstance(result, PartialParse)
        (slot,) = result.slots
        assert slot.path == "read.threshold"
        assert slot.state == "ambiguous"

    def test_unknown_quoted_feature_gives_candidates(self):
        result = parse_controlled("the mean value of 'cholesterol' is greater than 1", TABLE)
        assert isinstance(result, PartialParse)
        (slot,) = result.slots
        assert slot.path == "read.variable.feature"
        assert slot.state == "missing"
        assert slot.candidates == tuple(TABLE.feature_names)

    def test_direction_missing(self):
        result = parse_controlled(
            "there is a correlation between age values and bmi values", TABLE
        )
        assert isinstance(result, PartialParse)
        (slot,) = result.slots
        assert slot.path == "correlation.direction"
        assert slot.candidates == ("positive", "negative", "none")

    def test_same_variable_correlation_is_ambiguous(self):
        result = parse_controlled(
            "there is a positive correlation between age values and age values", TABLE
        )
        assert isinstance(result, PartialParse)
        assert [s.path for s in result.slots] == ["correlation.y"]

    def test_percent_token(self):
        insight = parse_controlled(
            "the fraction of rows with attribution of bmi greater than 0 is greater than 65%",
            TABLE,
        )
        assert insight.threshold == 0.65


@given(st.text(max_size=120))
@settings(max_examples=300)
def test_parse_total_on_arbitrary_text(text):
    result = parse_controlled(text, TABLE)
    assert isinstance(result, (NoParse, PartialParse, Read, Correlation, Comparison))


def test_roundtrip_seeded_sweep():
    rnd = random.Random(4242)
    for _ in range(500):
        insight = rand_insight(rnd)
        assert roundtrip_check(insight, TABLE), render(insight, [], TABLE).text


@given(st.integers(min_value=0, max_value=10**9))
@settings(max_examples=150, deadline=None)
def test_roundtrip_property(seed):
    insight = rand_insight(random.Random(seed))
    rendered = render(insight, [], TABLE)
    assert parse_controlled(rendered.text, TABLE) == insight


def test_keyword_named_feature_is_quoted():
    insight = Read(TVariable("greater", "value", "mean"), ">", 1.0)
    rendered = render(insight, [], TABLE)
    assert "'greater'" in rendered.text
    assert roundtrip_check(insight, TABLE)


def test_needs_quote_rules():
    assert needs_quote("greater")
    assert needs_quote("mean attribution")
    assert needs_quote("65")
    assert not needs_quote("bmi", TABLE)
    assert not needs_quote("serum triglycerides", TABLE)


def test_casefold_colliding_names_roundtrip():
    features = [FeatureMeta("BMI"), FeatureMeta("bmi")]
    rows = [Row("r0", {"BMI": 1.0, "bmi": 2.0}, {"BMI": 0.0, "bmi": 0.0}, 0.0)]
    table = ExplanationTable(features=features, base_value=0.0, rows=rows)
    for name in ("BMI", "bmi"):
        insight = Read(TVariable(name, "value", "mean"), ">", 1.0)
        assert roundtrip_check(insight, table)


def test_null_and_empty_conditions_render_identically():
    insight = Read(TVariable("bmi", "value", "mean"), ">", 1.0)
    doc_null = dict(
        type="read",
        variable={"feature": "bmi", "facet": "value", "aggregator": "mean", "predicate": None},
        comparator=">",
        threshold=1.0,
        conditions=None,
    )
    doc_empty = dict(doc_null, conditions=[])
    assert render(doc_null, [], TABLE).text == render(doc_empty, [], TABLE).text
    assert parse_controlled(render(insight, [], TABLE).text, TABLE) == insight


class TestRenderedSegments:
    def test_fraction_read_highlights(self):
        insight = Read(
            variable=TVariable("bmi", "attribution", "fraction", Predicate(">", 0.0)),
            comparator=">",
            threshold=0.65,
        )
        rendered = render(insight, [], TABLE)
        highlights = {(s.text, s.highlight) for s in rendered.segments if s.kind == "keyword"}
        assert ("bmi", "feature") in highlights
        assert ("positive", "attribution") in highlights
        assert ("attribution", "attribution") in highlights
        assert ("more than", "insight-type") in highlights
        assert ("65%", "insight-type") in highlights

    def test_missing_relation_slot_segment(self):
        doc = {
            "type": "comparison",
            "left": {"feature": "bmi", "facet": "attribution", "aggregator": "mean"},
            "right": {"feature": "bp", "facet": "attribution", "aggregator": "mean"},
            "conditions": None,
        }
        result = validate(doc)
        rendered = render(doc, result.slots, TABLE)
        (slot,) = rendered.slot_segments()
        assert slot.slot_ref == "comparison.relation"
        assert slot.candidates == ("greater", "less", "approx-equal")

    def test_every_slot_appears_exactly_once(self):
        doc = {"type": "read", "variable": {"feature": "bmi"}, "conditions": None}
        result = validate(doc)
        rendered = render(doc, result.slots, TABLE)
        refs = [s.slot_ref for s in rendered.slot_segments()]
        assert sorted(refs) == sorted(s.path for s in result.slots)
        assert len(refs) == len(set(refs))

    def test_condition_segments_highlighted(self):
        insight = Read(
            TVariable("bmi", "value", "mean"), ">", 1.0,
            (TCondition("age", ">", 65.0),),
        )
        rendered = render(insight, [], TABLE)
        when_index = next(i for i, s in enumerate(rendered.segments) if s.text == "when")
        tail = [s for s in rendered.segments[when_index:] if s.text not in ",.;:!?"]
        assert all(s.highlight in ("condition", "feature") for s in tail)
        assert any(s.text == "age" and s.highlight == "feature" for s in tail)
        assert any(s.text.startswith("65") and s.highlight == "condition" for s in tail)

    def test_as_form_used_for_value_correlations(self):
        insight = Correlation(
            TVariable("age", "value", "identity"),
            TVariable("age", "attribution", "identity"),
            "positive",
        )
        text = render(insight, [], TABLE).text
        assert text.startswith("as age increases")
        assert "tends to increase" in text


@given(st.integers(min_value=0, max_value=10**9))
@settings(max_examples=100, deadline=None)
def test_flatten_parses_back_for_valid_insights(seed):
    # RenderedInsight invariant: concatenated text parses to the same insight
    insight = rand_insight(random.Random(seed))
    rendered = render(insight, [], TABLE)
    assert parse_controlled(rendered.text, TABLE) == insight


def test_format_number_roundtrips():
    for v in (0.0, -0.0, 1.0, -2.5, 0.65, 1e-9, 2.5e17, 0.07, 65.0, -1234.5678):
        assert float(format_number(v)) == v


def test_tokenizer_handles_operators_and_percents():
    toks = tokenize("age>=65 and bmi < 30%")
    assert [t.text for t in toks] == ["age", ">=", "65", "and", "bmi", "<", "30%"]
    assert toks[2].value == 65.0
    assert toks[-1].value == pytest.approx(0.30)
