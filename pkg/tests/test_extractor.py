import json
from pathlib import Path

import pytest

from xlint.errors import (
    ProviderUnavailable,
    SchemaViolation,
    UnparseableClassification,
)
from xlint.extractor import (
    ExtractorConfig,
    InsightExtractor,
    extract_json,
    fixture_name,
    recommend_llm,
    write_fixture,
)
from xlint.insights import Comparison, Correlation, Predicate, Read, TVariable, serialize, validate
from xlint.mapper import MappingResult, map_insight
from xlint.synthetic import CASE1_SENTENCE, CASE2_RAW_SENTENCE, demo_table
from xlint.visspec import DataRef, Encoding, VisSpec, data_field

FIXTURE_DIR = Path(__file__).parent / "fixtures" / "extractor"
TABLE = demo_table()


@pytest.fixture()
def extractor():
    return InsightExtractor(ExtractorConfig(mode="fixture", fixture_dir=FIXTURE_DIR))


class TestClassify:
    def test_case2_raw_is_comparison(self, extractor):
        result = extractor.classify(CASE2_RAW_SENTENCE, TABLE)
        assert result == {"type": "comparison", "has_condition": False}

    def test_fixture_mode_deterministic(self, extractor):
        a = extractor.classify(CASE1_SENTENCE, TABLE)
        b = extractor.classify(CASE1_SENTENCE, TABLE)
        assert a == b == {"type": "correlation", "has_condition": False}

    def test_prose_without_type_exhausts_retries(self):
        cfg = ExtractorConfig(mode="fixture", fixture_dir=FIXTURE_DIR, max_repair_retries=1)
        with pytest.raises(UnparseableClassification):
            InsightExtractor(cfg).classify("the colors look nice together", TABLE)

    def test_missing_fixture_is_provider_unavailable(self, extractor):
        with pytest.raises(ProviderUnavailable):
            extractor.classify("text with no recorded fixture", TABLE)


class TestFillTemplate:
    def test_case2_full_document(self, extractor):
        outcome = extractor.extract(CASE2_RAW_SENTENCE, TABLE)
        assert outcome.ok
        assert outcome.insight == Comparison(
            left=TVariable("bp", "attribution", "count", Predicate(">", 0.0)),
            right=TVariable("bp", "attribution", "count", Predicate("<", 0.0)),
            relation="greater",
        )
        assert outcome.trace.stage1["classified_type"] == "comparison"
        assert outcome.trace.stage2["document"]["type"] == "comparison"

    def test_case1_binds_synonyms(self, extractor):
        outcome = extractor.extract(CASE1_SENTENCE, TABLE)
        assert outcome.ok
        assert outcome.insight.x.feature == "bp"
        assert outcome.insight.y.feature == "stg"
        assert outcome.insight.direction == "none"

    def test_slot_path_surfaces_gaps(self, extractor):
        outcome = extractor.extract("BMI matters when patients are older", TABLE)
        assert not outcome.ok
        paths = {s.path for s in outcome.slots}
        assert paths == {"read.threshold", "read.conditions[0].bounds"}
        assert len(outcome.trace.repairs) == 2  # retried, gaps persisted

    def test_malformed_fill_raises_schema_violation(self, extractor):
        with pytest.raises(SchemaViolation):
            extractor.extract("age is the strongest driver overall", TABLE)

    def test_repair_path_recovers(self, extractor):
        outcome = extractor.extract("bmi is usually important for the prediction", TABLE)
        assert outcome.ok
        assert outcome.insight == Read(
            variable=TVariable("bmi", "attribution", "mean"), comparator=">", threshold=5.0
        )
        assert len(outcome.trace.repairs) == 1

    def test_all_authored_fixtures_validate_or_slot(self, extractor):
        texts = [
            json.loads(p.read_text())["text"] for p in sorted(FIXTURE_DIR.glob("*.json"))
        ]
        assert len(texts) >= 12
        for text in texts:
            try:
                outcome = extractor.extract(text, TABLE)
            except (UnparseableClassification, SchemaViolation):
                continue  # typed failure; nothing unvalidated escaped
            if outcome.ok:
                # a returned insight must re-validate from its own document
                from xlint.insights import to_document

                assert validate(to_document(outcome.insight)).ok
            else:
                assert outcome.slots
                assert not validate(outcome.document).ok or outcome.slots

    def test_unvalidated_documents_never_escape(self, tmp_path):
        # a fixture whose fill response is schema-valid JSON of the wrong shape
        text = "weird shape response"
        write_fixture(
            tmp_path,
            text,
            [
                '{"type": "read", "has_condition": false}',
                '{"type": "read", "variable": {"feature": "bmi"}, "bogus": 1}',
                '{"type": "read", "variable": {"feature": "bmi"}, "bogus": 1}',
                '{"type": "read", "variable": {"feature": "bmi"}, "bogus": 1}',
            ],
        )
        extractor = InsightExtractor(ExtractorConfig(mode="fixture", fixture_dir=tmp_path))
        outcome = extractor.extract(text, TABLE)
        assert not outcome.ok
        assert {s.path for s in outcome.slots} >= {"read.comparator", "read.threshold"}


class TestHelpers:
    def test_extract_json_from_prose(self):
        raw = 'Sure! Here is the answer:\n{"type": "read", "has_condition": true}\nHope that helps.'
        assert extract_json(raw) == {"type": "read", "has_condition": True}

    def test_extract_json_none(self):
        assert extract_json("no objects here") is None

    def test_fixture_name_is_sha256(self):
        assert fixture_name("abc") == (
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad.json"
        )

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ExtractorConfig(mode="fixture", fixture_dir=None)
        with pytest.raises(ValueError):
            ExtractorConfig(mode="live", temperature=3.0)


class TestLlmGuidedRecommendation:
    def current_spec(self):
        return VisSpec(
            data_ref=DataRef("d0"),
            mark="point",
            encodings={
                "x": Encoding(data_field("bp", "value")),
                "y": Encoding(data_field("bp", "attribution")),
            },
        )

    def test_llm_choice_respected_when_applicable(self, tmp_path):
        insight = Correlation(
            TVariable("bp", "attribution", "identity"),
            TVariable("stg", "attribution", "identity"),
            "none",
        )
        key = serialize(insight)
        write_fixture(tmp_path, key, ['{"rule": "correlation-scatter"}'])
        extractor = InsightExtractor(ExtractorConfig(mode="fixture", fixture_dir=tmp_path))
        spec, rationale, rule_id = recommend_llm(insight, self.current_spec(), extractor, key)
        assert rule_id == "correlation-scatter"
        assert spec.mark == "point"

    def test_falls_back_to_rules_on_garbage(self, tmp_path):
        insight = Read(TVariable("bmi", "attribution", "mean"), ">", 0.5)
        key = serialize(insight)
        write_fixture(tmp_path, key, ["bars are pretty"])
        extractor = InsightExtractor(ExtractorConfig(mode="fixture", fixture_dir=tmp_path))
        spec, _, rule_id = recommend_llm(insight, self.current_spec(), extractor, key)
        assert rule_id == "read-aggregate-beeswarm"
        assert spec.mark == "beeswarm-point"


def test_mapping_for_extracted_case2(extractor):
    outcome = extractor.extract(CASE2_RAW_SENTENCE, TABLE)
    result = map_insight(outcome.insight, VisSpec(
        data_ref=DataRef("d0"),
        mark="point",
        encodings={
            "x": Encoding(data_field("bp", "value")),
            "y": Encoding(data_field("bp", "attribution")),
        },
    ))
    assert isinstance(result, MappingResult)
    assert result.recommended_spec.mark == "beeswarm-point"
