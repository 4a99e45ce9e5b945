#!/usr/bin/env python3
"""Author the extractor fixtures used by the offline test suite.

Each fixture file carries the raw provider responses, in call order, for one
input text (named {sha256(text)}.json).  The documents below are hand-written
stand-ins for recorded model output; regenerate with this script after
changing prompts or the fixture set.  Use scripts/record_llm_fixtures.py to
record from a live provider instead.
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from xlint.extractor import write_fixture
from xlint.synthetic import CASE1_SENTENCE, CASE2_RAW_SENTENCE

FIXTURE_DIR = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "extractor"


def classify(itype, has_condition=False, chatty=False):
    doc = json.dumps({"type": itype, "has_condition": has_condition})
    if chatty:
        return f"The statement describes a {itype} pattern. Final answer:\n{doc}"
    return doc


def var(feature, facet="attribution", aggregator="mean", predicate=None):
    return {"feature": feature, "facet": facet, "aggregator": aggregator, "predicate": predicate}


def count_var(feature, comparator, constant=0.0):
    return var(feature, aggregator="count",
               predicate={"comparator": comparator, "constant": constant})


def doc_json(doc):
    return json.dumps(doc, indent=1)


CASES = []

# --- the two walkthrough sentences ------------------------------------------

CASES.append(
    (
        CASE1_SENTENCE,
        [
            classify("correlation", chatty=True),
            doc_json(
                {
                    "type": "correlation",
                    "x": {"feature": "blood pressure", "facet": "attribution", "aggregator": "identity"},
                    "y": {"feature": "serum triglycerides", "facet": "attribution", "aggregator": "identity"},
                    "direction": "none",
                    "conditions": None,
                }
            ),
        ],
    )
)

CASES.append(
    (
        CASE2_RAW_SENTENCE,
        [
            classify("comparison", chatty=True),
            doc_json(
                {
                    "type": "comparison",
                    "left": count_var("blood pressure", ">"),
                    "right": count_var("blood pressure", "<"),
                    "relation": "greater",
                    "conditions": None,
                }
            ),
        ],
    )
)

# --- ten authored paraphrases -------------------------------------------------

CASES.append(
    (
        "in most patients, blood pressure pushes the prediction up",
        [
            classify("comparison"),
            doc_json(
                {
                    "type": "comparison",
                    "left": count_var("bp", ">"),
                    "right": count_var("bp", "<"),
                    "relation": "greater",
                    "conditions": None,
                }
            ),
        ],
    )
)

CASES.append(
    (
        "bmi has a positive average attribution",
        [
            classify("read"),
            doc_json(
                {
                    "type": "read",
                    "variable": var("bmi"),
                    "comparator": ">",
                    "threshold": 0,
                    "conditions": None,
                }
            ),
        ],
    )
)

CASES.append(
    (
        "on average, the attribution of body mass index is larger than that of blood pressure",
        [
            classify("comparison"),
            doc_json(
                {
                    "type": "comparison",
                    "left": var("body mass index"),
                    "right": var("blood pressure"),
                    "relation": "greater",
                    "conditions": None,
                }
            ),
        ],
    )
)

CASES.append(
    (
        "older patients get bigger age attributions",
        [
            classify("correlation"),
            doc_json(
                {
                    "type": "correlation",
                    "x": {"feature": "age", "facet": "value", "aggregator": "identity"},
                    "y": {"feature": "age", "facet": "attribution", "aggregator": "identity"},
                    "direction": "positive",
                    "conditions": None,
                }
            ),
        ],
    )
)

_BMI_MATTERS_FILL = doc_json(
    {
        "type": "read",
        "variable": var("bmi"),
        "comparator": ">",
        "threshold": None,
        "conditions": [{"feature": "age", "facet": "value", "op": ">", "bounds": None}],
    }
)
CASES.append(
    (
        "BMI matters when patients are older",
        [classify("read", has_condition=True)] + [_BMI_MATTERS_FILL] * 3,
    )
)

CASES.append(
    (
        "serum triglycerides attributions are unrelated to blood pressure attributions",
        [
            classify("correlation"),
            doc_json(
                {
                    "type": "correlation",
                    "x": {"feature": "stg", "facet": "attribution", "aggregator": "identity"},
                    "y": {"feature": "bp", "facet": "attribution", "aggregator": "identity"},
                    "direction": "none",
                    "conditions": None,
                }
            ),
        ],
    )
)

CASES.append(
    (
        "for at least half of the patients, the bmi attribution is positive",
        [
            classify("read"),
            doc_json(
                {
                    "type": "read",
                    "variable": var("bmi", aggregator="fraction",
                                    predicate={"comparator": ">", "constant": 0}),
                    "comparator": ">=",
                    "threshold": 0.5,
                    "conditions": None,
                }
            ),
        ],
    )
)

_RARELY_FILL = doc_json(
    {
        "type": "read",
        "variable": var("blood pressure", aggregator="fraction",
                        predicate={"comparator": "<", "constant": 0}),
        "comparator": "<",
        "threshold": None,
        "conditions": None,
    }
)
CASES.append(
    (
        "blood pressure rarely has a negative attribution",
        [classify("read")] + [_RARELY_FILL] * 3,
    )
)

CASES.append(
    (
        "the spread of bmi attributions is about 2",
        [
            classify("read"),
            doc_json(
                {
                    "type": "read",
                    "variable": var("bmi", aggregator="variance"),
                    "comparator": "~=",
                    "threshold": 2,
                    "conditions": None,
                }
            ),
        ],
    )
)

CASES.append(
    (
        "more patients have a positive bmi attribution than a negative one",
        [
            classify("comparison"),
            doc_json(
                {
                    "type": "comparison",
                    "left": count_var("bmi", ">"),
                    "right": count_var("bmi", "<"),
                    "relation": "greater",
                    "conditions": None,
                }
            ),
        ],
    )
)

# --- failure-path fixtures ----------------------------------------------------

CASES.append(
    (
        "the colors look nice together",
        [
            "This statement is aesthetic, not analytic. I cannot classify it.",
            "As mentioned, there is no insight here to classify.",
            "Still nothing to classify.",
        ],
    )
)

CASES.append(
    (
        "age is the strongest driver overall",
        [
            classify("read"),
            "The age feature dominates the model, as is plain to see.",
            "I already explained the answer in prose.",
            "No JSON needed, surely.",
        ],
    )
)

CASES.append(
    (
        "bmi is usually important for the prediction",
        [
            classify("read"),
            doc_json(
                {
                    "type": "read",
                    "variable": var("bmi"),
                    "comparator": None,
                    "threshold": None,
                    "conditions": None,
                }
            ),
            doc_json(
                {
                    "type": "read",
                    "variable": var("bmi"),
                    "comparator": ">",
                    "threshold": 5.0,
                    "conditions": None,
                }
            ),
        ],
    )
)


def main():
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    for text, responses in CASES:
        path = write_fixture(FIXTURE_DIR, text, responses)
        print(f"wrote {path.name}  ({len(responses)} responses)  {text[:50]!r}")


if __name__ == "__main__":
    main()
