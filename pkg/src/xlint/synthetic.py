"""Seeded synthetic explanation tables for demos and scenario tests.

The demo table mimics a diabetes-progression model with ten input features
(age, sex, BMI, blood pressure among them).  Two constraints are built in so
the canonical walkthrough scenarios work against one dataset:

- blood-pressure and serum-triglycerides attributions are drawn
  independently (|pearson r| < 0.25), so a no-correlation claim holds;
- exactly 40% of blood-pressure attributions are positive (80 of 200), so
  "more patients have positive than negative bp attribution" is refuted
  with counts 80 vs 120.

Predictions are base_value + sum(attributions), so efficiency holds exactly.
"""

from __future__ import annotations

import numpy as np

from .data import CATEGORICAL, ExplanationTable, FeatureMeta, Row

DEMO_FEATURES = [
    FeatureMeta("age", unit="years", description="age in years"),
    FeatureMeta("sex", kind=CATEGORICAL, description="sex"),
    FeatureMeta("bmi", description="body mass index"),
    FeatureMeta("bp", unit="mm Hg", description="blood pressure"),
    FeatureMeta("tc", description="total cholesterol"),
    FeatureMeta("ldl", description="low-density lipoproteins"),
    FeatureMeta("hdl", description="high-density lipoproteins"),
    FeatureMeta("tch", description="total cholesterol ratio"),
    FeatureMeta("stg", description="serum triglycerides"),
    FeatureMeta("glu", description="blood sugar level"),
]

DEMO_BASE_VALUE = 152.13
DEMO_N_ROWS = 200
#: positive share of bp attributions: 80 of 200
_POSITIVE_BP = 80


def demo_table(seed: int = 7, n_rows: int = DEMO_N_ROWS) -> ExplanationTable:
    rng = np.random.default_rng(seed)
    n_pos = round(n_rows * _POSITIVE_BP / DEMO_N_ROWS)

    bp_attr = np.concatenate(
        [
            rng.uniform(0.5, 20.0, size=n_pos),
            rng.uniform(-20.0, -0.5, size=n_rows - n_pos),
        ]
    )
    rng.shuffle(bp_attr)

    # redraw until the independent stg attributions are comfortably inside
    # the "no correlation" band
    while True:
        stg_attr = rng.normal(0.0, 8.0, size=n_rows)
        r = np.corrcoef(bp_attr, stg_attr)[0, 1]
        if abs(r) < 0.25:
            break

    values = {
        "age": np.round(rng.uniform(20.0, 80.0, size=n_rows), 1),
        "bmi": np.round(rng.uniform(18.0, 42.0, size=n_rows), 1),
        "bp": np.round(rng.uniform(60.0, 130.0, size=n_rows), 1),
        "tc": np.round(rng.uniform(120.0, 300.0, size=n_rows), 1),
        "ldl": np.round(rng.uniform(50.0, 200.0, size=n_rows), 1),
        "hdl": np.round(rng.uniform(20.0, 100.0, size=n_rows), 1),
        "tch": np.round(rng.uniform(2.0, 9.0, size=n_rows), 2),
        "stg": np.round(rng.uniform(50.0, 400.0, size=n_rows), 1),
        "glu": np.round(rng.uniform(70.0, 180.0, size=n_rows), 1),
    }
    sex = rng.choice(["male", "female"], size=n_rows)

    attrs = {
        name: np.round(rng.normal(0.0, 6.0, size=n_rows), 4)
        for name in ("age", "sex", "bmi", "tc", "ldl", "hdl", "tch", "glu")
    }
    attrs["bp"] = np.round(bp_attr, 4)
    attrs["stg"] = np.round(stg_attr, 4)
    # keep the bp positive/negative counts exact after rounding
    assert int((attrs["bp"] > 0).sum()) == n_pos

    rows = []
    for i in range(n_rows):
        row_values = {name: float(values[name][i]) for name in values}
        row_values["sex"] = str(sex[i])
        row_attrs = {name: float(attrs[name][i]) for name in attrs}
        prediction = DEMO_BASE_VALUE + sum(row_attrs.values())
        rows.append(
            Row(id=f"p{i:03d}", values=row_values, attributions=row_attrs, prediction=prediction)
        )
    return ExplanationTable(features=list(DEMO_FEATURES), base_value=DEMO_BASE_VALUE, rows=rows)


CASE1_SENTENCE = (
    "there is no correlation between blood pressure attributions and "
    "serum triglycerides attributions"
)
CASE2_RAW_SENTENCE = "Blood pressure contributes to increased diabetes progression in most patients"
CASE2_SENTENCE = (
    "The number of patients with positive attribution for blood pressure is "
    "greater than the number with negative attribution"
)
