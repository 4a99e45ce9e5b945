"""Two-stage LLM extraction of structured insights from free-form text.

Stage one classifies the insight type (read / correlation / comparison) and
whether a feature-range condition is present; stage two fills the JSON
template for that type.  Every document coming back from the model is bound
against the table and validated; invalid documents trigger repair prompts
that quote the validator's slot paths, up to a retry cap.  The extractor
never hands an unvalidated document downstream: the result is either a valid
insight or a document plus explicit slots.

The provider is any OpenAI-compatible chat-completion endpoint.  In fixture
mode responses are replayed from ``{sha256(text)}.json`` files, which makes
the whole pipeline byte-deterministic and is what the test suite runs on;
live mode is integration-only.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .data import ExplanationTable
from .errors import (
    ProviderUnavailable,
    SchemaViolation,
    UnknownInsightType,
    UnparseableClassification,
)
from .insights import (
    SlotStatus,
    StructuredInsight,
    bind_document,
    validate,
)

INSIGHT_TYPES = ("read", "correlation", "comparison")


@dataclass
class ExtractorConfig:
    provider_endpoint: str = "https://api.openai.com/v1"
    model_name: str = "gpt-4o"
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.0
    max_repair_retries: int = 2
    mode: str = "fixture"  # live | fixture
    fixture_dir: str | Path | None = None
    timeout_s: float = 30.0

    def __post_init__(self):
        if self.mode not in ("live", "fixture"):
            raise ValueError(f"unknown extractor mode {self.mode!r}")
        if self.mode == "fixture" and not self.fixture_dir:
            raise ValueError("fixture mode requires fixture_dir")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be within [0, 2]")


def fixture_name(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest() + ".json"


class _LiveSession:
    def __init__(self, config: ExtractorConfig):
        self.config = config

    def complete(self, messages: list[dict]) -> str:
        url = self.config.provider_endpoint.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": self.config.model_name,
            "messages": messages,
            "temperature": self.config.temperature,
        }
        try:
            resp = httpx.post(url, json=body, headers=headers, timeout=self.config.timeout_s)
        except httpx.HTTPError as exc:
            raise ProviderUnavailable(str(exc)) from exc
        if resp.status_code != 200:
            raise ProviderUnavailable(f"provider returned HTTP {resp.status_code}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise ProviderUnavailable(f"malformed provider response: {exc}") from exc


class _FixtureSession:
    def __init__(self, fixture_dir: Path, text: str):
        path = Path(fixture_dir) / fixture_name(text)
        if not path.exists():
            raise ProviderUnavailable(f"no fixture for input (expected {path.name})")
        doc = json.loads(path.read_text())
        self.responses = list(doc.get("responses", []))
        self.cursor = 0

    def complete(self, messages: list[dict]) -> str:
        if self.cursor >= len(self.responses):
            raise ProviderUnavailable("fixture exhausted")
        out = self.responses[self.cursor]
        self.cursor += 1
        return out


@dataclass
class ExtractionTrace:
    stage1: dict = field(default_factory=dict)
    stage2: dict = field(default_factory=dict)
    repairs: list = field(default_factory=list)

    def to_doc(self) -> dict:
        return {"stage1": self.stage1, "stage2": self.stage2, "repairs": self.repairs}


@dataclass
class ExtractionOutcome:
    document: dict
    slots: list[SlotStatus]
    insight: StructuredInsight | None
    trace: ExtractionTrace

    @property
    def ok(self) -> bool:
        return self.insight is not None


# ---------------------------------------------------------------------------
# prompts

_TYPE_DEFINITIONS = """\
Insight types over a feature-attribution explanation table:
- read: one aggregated statistic of a single feature's values or attributions
  is compared against a number. Aggregators: mean, variance, min, max, count,
  fraction (count and fraction need a row predicate such as "attribution > 0").
  Example: "for more than 65% of patients, BMI has a positive attribution".
- correlation: two per-row quantities (a feature's values or attributions)
  move together, in a direction: positive, negative, or none.
  Example: "as age increases, the attribution of age tends to increase".
- comparison: two aggregated quantities are ordered: greater, less, or
  approx-equal. Example: "BMI on average has a larger attribution than blood
  pressure"; counting claims like "more patients have positive than negative
  attribution for blood pressure" compare two counts.
Insights may carry conditions on feature value ranges, e.g. "when age is
above 65"."""

_CLASSIFY_EXAMPLES = """\
Examples:
text: "there is no correlation between blood pressure attributions and serum
triglycerides attributions" -> {"type": "correlation", "has_condition": false}
text: "the average attribution of bmi is higher than that of age when age is
above 65" -> {"type": "comparison", "has_condition": true}
text: "most patients have a positive bmi attribution"
-> {"type": "read", "has_condition": false}"""

_TEMPLATES = {
    "read": {
        "type": "read",
        "variable": {
            "feature": "<feature name>",
            "facet": "value | attribution",
            "aggregator": "mean | variance | min | max | count | fraction",
            "predicate": {"comparator": "< | <= | > | >= | =", "constant": 0.0},
        },
        "comparator": "< | <= | > | >= | ~=",
        "threshold": 0.0,
        "conditions": [],
    },
    "correlation": {
        "type": "correlation",
        "x": {"feature": "<feature name>", "facet": "value | attribution", "aggregator": "identity"},
        "y": {"feature": "<feature name>", "facet": "value | attribution", "aggregator": "identity"},
        "direction": "positive | negative | none",
        "conditions": [],
    },
    "comparison": {
        "type": "comparison",
        "left": {
            "feature": "<feature name>",
            "facet": "value | attribution",
            "aggregator": "mean | variance | min | max | count | fraction",
            "predicate": {"comparator": "< | <= | > | >= | =", "constant": 0.0},
        },
        "right": {"...": "same shape as left"},
        "relation": "greater | less | approx-equal",
        "conditions": [],
    },
}

_CONDITION_SHAPE = (
    '{"feature": "<feature name>", "facet": "value", '
    '"op": "< | <= | > | >= | = | in-range", "bounds": 0.0}'
)


def _feature_lines(table: ExplanationTable) -> str:
    lines = []
    for f in table.features:
        desc = f" ({f.description})" if f.description else ""
        lines.append(f"- {f.name}: {f.kind}{desc}")
    return "\n".join(lines)


def build_classify_messages(text: str, table: ExplanationTable) -> list[dict]:
    system = (
        "You classify a user observation about an AI explanation table.\n\n"
        + _TYPE_DEFINITIONS
        + "\n\n"
        + _CLASSIFY_EXAMPLES
        + "\n\nThink step by step about which type fits, then respond with ONLY "
        'a JSON object: {"type": "read" | "correlation" | "comparison", '
        '"has_condition": true | false}.'
    )
    user = f"Features:\n{_feature_lines(table)}\n\nObservation: {text!r}"
    return [{"role": "system", "content": system}, {"role": "user", "content": user}]


def build_fill_messages(text: str, insight_type: str, table: ExplanationTable) -> list[dict]:
    template = json.dumps(_TEMPLATES[insight_type], indent=2)
    system = (
        "You convert a user observation about an AI explanation table into a "
        f"structured {insight_type} insight.\n\n"
        + _TYPE_DEFINITIONS
        + f"\n\nFill this JSON template:\n{template}\n\n"
        f"Each condition has the shape {_CONDITION_SHAPE}; use \"conditions\": null "
        "when there is none. Use only feature names from the provided list. Use "
        "null for any value the observation does not state instead of guessing. "
        "Percentages become fractions (65% -> 0.65). Respond with JSON only."
    )
    user = f"Features:\n{_feature_lines(table)}\n\nObservation: {text!r}"
    return [{"role": "system", "content": system}, {"role": "user", "content": user}]


def build_repair_messages(previous_raw: str, problem: str) -> list[dict]:
    return [
        {
            "role": "system",
            "content": "Your previous answer was not a usable JSON document. "
            "Respond with corrected JSON only, no prose.",
        },
        {
            "role": "user",
            "content": f"Previous answer:\n{previous_raw}\n\nProblem: {problem}",
        },
    ]


# ---------------------------------------------------------------------------
# response parsing


def extract_json(raw: str):
    """First parseable JSON object in a model response, or None."""
    try:
        return json.loads(raw)
    except (json.JSONDecodeError, TypeError):
        pass
    decoder = json.JSONDecoder()
    for match in re.finditer(r"\{", raw or ""):
        try:
            doc, _ = decoder.raw_decode(raw, match.start())
            return doc
        except json.JSONDecodeError:
            continue
    return None


class InsightExtractor:
    def __init__(self, config: ExtractorConfig):
        self.config = config

    def _begin(self, text: str):
        if self.config.mode == "fixture":
            return _FixtureSession(Path(self.config.fixture_dir), text)
        return _LiveSession(self.config)

    # -- stage 1 -------------------------------------------------------------

    def classify(self, text: str, table: ExplanationTable, *, _session=None, _trace=None) -> dict:
        """{"type": ..., "has_condition": ...} or UnparseableClassification
        after the retry cap."""
        if not text or not text.strip():
            raise UnparseableClassification("empty input text")
        session = _session or self._begin(text)
        trace = _trace if _trace is not None else ExtractionTrace()
        messages = build_classify_messages(text, table)
        raw = session.complete(messages)
        attempts = 0
        while True:
            doc = extract_json(raw)
            if isinstance(doc, dict):
                itype = doc.get("type")
                if isinstance(itype, str) and itype.lower() in INSIGHT_TYPES:
                    result = {
                        "type": itype.lower(),
                        "has_condition": bool(doc.get("has_condition", False)),
                    }
                    trace.stage1 = {
                        "prompt": messages,
                        "raw_response": raw,
                        "classified_type": result["type"],
                        "has_condition": result["has_condition"],
                    }
                    return result
            if attempts >= self.config.max_repair_retries:
                trace.stage1 = {"prompt": messages, "raw_response": raw,
                                "classified_type": None, "has_condition": None}
                raise UnparseableClassification(
                    f"no insight type after {attempts + 1} attempts"
                )
            attempts += 1
            repair = build_repair_messages(
                raw, 'expected {"type": "read|correlation|comparison", "has_condition": bool}'
            )
            raw = session.complete(repair)
            trace.repairs.append(
                {"reason": "unparseable classification", "prompt": repair, "raw_response": raw}
            )

    # -- stage 2 -------------------------------------------------------------

    def fill_template(
        self,
        text: str,
        insight_type: str,
        table: ExplanationTable,
        *,
        _session=None,
        _trace=None,
    ) -> ExtractionOutcome:
        """Template filling with validation-driven repair.  The outcome always
        went through validate(): either a valid insight or document+slots."""
        if insight_type not in INSIGHT_TYPES:
            raise UnknownInsightType(insight_type)
        session = _session or self._begin(text)
        trace = _trace if _trace is not None else ExtractionTrace()
        messages = build_fill_messages(text, insight_type, table)
        raw = session.complete(messages)
        attempts = 0
        last = None  # (document, slots)
        while True:
            doc = extract_json(raw)
            problem = None
            if isinstance(doc, dict):
                doc.setdefault("type", insight_type)
                doc.pop("schema", None)
                bound, bind_slots = bind_document(doc, table)
                try:
                    result = validate(bound)
                except UnknownInsightType:
                    result = None
                    problem = 'the "type" field must be read, correlation or comparison'
                if result is not None:
                    slots = list(result.slots)
                    paths = {s.path for s in slots}
                    for s in bind_slots:
                        if s.path in paths:
                            slots[[x.path for x in slots].index(s.path)] = s
                        else:
                            slots.append(s)
                    if result.ok and not bind_slots:
                        trace.stage2 = {"prompt": messages, "raw_response": raw, "document": bound}
                        return ExtractionOutcome(bound, [], result.insight, trace)
                    last = (bound, slots)
                    problem = "incomplete or invalid fields at: " + ", ".join(
                        sorted(s.path for s in slots)
                    )
            else:
                problem = "the response contained no JSON object"
            if attempts >= self.config.max_repair_retries:
                trace.stage2 = {
                    "prompt": messages,
                    "raw_response": raw,
                    "document": last[0] if last else None,
                }
                if last is None:
                    raise SchemaViolation(
                        ["$"], f"no JSON document after {attempts + 1} attempts"
                    )
                return ExtractionOutcome(last[0], last[1], None, trace)
            attempts += 1
            repair = build_repair_messages(raw, problem or "invalid document")
            raw = session.complete(repair)
            trace.repairs.append({"reason": problem, "prompt": repair, "raw_response": raw})

    # -- pipeline ------------------------------------------------------------

    def extract(self, text: str, table: ExplanationTable) -> ExtractionOutcome:
        """classify then fill_template over one provider session."""
        session = self._begin(text)
        trace = ExtractionTrace()
        classified = self.classify(text, table, _session=session, _trace=trace)
        return self.fill_template(
            text, classified["type"], table, _session=session, _trace=trace
        )


# ---------------------------------------------------------------------------
# optional LLM-guided view recommendation

_GUIDELINES = """\
Design guidelines:
- correlation insights: scatter plots show relationships between two
  continuous variables better than bar charts or color gradients.
- count or fraction claims: dual beeswarm plots convey data point quantities
  as shape area.
- comparing aggregated magnitudes (mean/min/max/variance): paired bars.
- a single aggregate against a threshold: a beeswarm with a reference line."""


def recommend_llm(insight, current_spec, extractor: InsightExtractor, insight_json: str):
    """LLM-guided choice among the deterministic rule targets; falls back to
    the rule table on any unusable answer."""
    from .mapper import RULE_RATIONALES, _rule_target  # local import: avoid cycle

    session = extractor._begin(insight_json)
    messages = [
        {
            "role": "system",
            "content": _GUIDELINES
            + "\n\nPick the best view for the given insight. Respond with ONLY "
            '{"rule": "correlation-scatter" | "count-dual-beeswarm" | '
            '"aggregate-comparison-bar" | "read-aggregate-beeswarm"}.',
        },
        {"role": "user", "content": insight_json},
    ]
    fallback_id, fallback_target = _rule_target(insight, current_spec.data_ref)
    try:
        raw = session.complete(messages)
    except ProviderUnavailable:
        return fallback_target, RULE_RATIONALES[fallback_id], fallback_id
    doc = extract_json(raw)
    choice = doc.get("rule") if isinstance(doc, dict) else None
    if choice == fallback_id:
        return fallback_target, RULE_RATIONALES[fallback_id], fallback_id
    applicable = {
        "correlation-scatter": "Correlation",
        "count-dual-beeswarm": None,  # any insight with a variable works
        "aggregate-comparison-bar": "Comparison",
        "read-aggregate-beeswarm": "Read",
    }
    if choice in applicable:
        needed = applicable[choice]
        if needed is None or type(insight).__name__ == needed:
            from .mapper import (
                _dual_beeswarm_target,
                _paired_bar_target,
                _scatter_target,
                _single_beeswarm_target,
                insight_variables,
            )

            builders = {
                "correlation-scatter": lambda: _scatter_target(insight, current_spec.data_ref),
                "count-dual-beeswarm": lambda: _dual_beeswarm_target(
                    insight_variables(insight)[0], current_spec.data_ref
                ),
                "aggregate-comparison-bar": lambda: _paired_bar_target(
                    insight, current_spec.data_ref
                ),
                "read-aggregate-beeswarm": lambda: _single_beeswarm_target(
                    insight, current_spec.data_ref
                ),
            }
            return builders[choice](), RULE_RATIONALES[choice], choice
    return fallback_target, RULE_RATIONALES[fallback_id], fallback_id


def write_fixture(fixture_dir, text: str, responses: list[str], trace: dict | None = None):
    """Author or record a fixture file for the given input text."""
    path = Path(fixture_dir) / fixture_name(text)
    doc = {"text": text, "responses": responses}
    if trace is not None:
        doc["trace"] = trace
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))
    return path
