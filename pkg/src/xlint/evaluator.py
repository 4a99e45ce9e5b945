"""Evaluate bound structured insights against an explanation table.

Every evaluation yields a Verdict: supported, refuted, or undetermined, plus
the computed statistics and a machine-readable trace so a UI can show
"0.40 < 0.60"-style evidence.  Undetermined is reserved for genuinely
undefined situations (no rows after conditioning, too few points or zero
variance for a correlation, non-numeric values); everything else is a hard
supported/refuted call.  Ties at a strict comparator count as refuted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ExplanationTable, filter_rows
from .errors import UndefinedStatistic
from .insights import (
    APPROX_RTOL,
    Comparison,
    Correlation,
    Read,
    StructuredInsight,
    TVariable,
)

SUPPORTED = "supported"
REFUTED = "refuted"
UNDETERMINED = "undetermined"

#: |pearson r| at or above this counts as a direction; below is "none"
CORRELATION_TAU = 0.3
#: minimum rows for a correlation to be defined
CORRELATION_MIN_N = 3


@dataclass
class Verdict:
    outcome: str
    statistics: dict = field(default_factory=dict)
    threshold_used: float | None = None
    explanation: dict = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {
            "outcome": self.outcome,
            "statistics": self.statistics,
            "threshold_used": self.threshold_used,
            "explanation": self.explanation,
        }


def _facet_values(rows, variable: TVariable) -> list:
    if variable.facet == "value":
        return [r.values[variable.feature] for r in rows]
    return [r.attributions[variable.feature] for r in rows]


def _numeric(values, what: str) -> np.ndarray:
    for v in values:
        if isinstance(v, str):
            raise UndefinedStatistic(f"{what}: non-numeric values")
    return np.asarray(values, dtype=float)


def _aggregate(rows, variable: TVariable) -> float:
    """Aggregator over the rows' chosen facet; raises UndefinedStatistic
    when the statistic does not exist on this data."""
    values = _facet_values(rows, variable)
    n = len(values)
    agg = variable.aggregator
    if n == 0:
        raise UndefinedStatistic("no rows after conditions")
    if agg in ("count", "fraction"):
        arr = _numeric(values, variable.feature)
        cmp_, c = variable.predicate.comparator, variable.predicate.constant
        if cmp_ == "<":
            hits = arr < c
        elif cmp_ == "<=":
            hits = arr <= c
        elif cmp_ == ">":
            hits = arr > c
        elif cmp_ == ">=":
            hits = arr >= c
        else:
            hits = arr == c
        matched = float(np.count_nonzero(hits))
        return matched if agg == "count" else matched / n
    arr = _numeric(values, variable.feature)
    if agg == "mean":
        return float(np.mean(arr))
    if agg == "variance":
        if n < 2:
            raise UndefinedStatistic("variance needs at least 2 rows")
        return float(np.sum((arr - np.mean(arr)) ** 2) / n)
    if agg == "min":
        return float(np.min(arr))
    if agg == "max":
        return float(np.max(arr))
    raise UndefinedStatistic(f"aggregator {agg!r} is not a row statistic")


def _approx_equal(a: float, b: float, rtol: float) -> bool:
    return abs(a - b) <= rtol * max(abs(a), abs(b))


def _compare(statistic: float, comparator: str, threshold: float, rtol: float) -> bool:
    if comparator == "<":
        return statistic < threshold
    if comparator == "<=":
        return statistic <= threshold
    if comparator == ">":
        return statistic > threshold
    if comparator == ">=":
        return statistic >= threshold
    if comparator == "~=":
        return _approx_equal(statistic, threshold, rtol)
    raise UndefinedStatistic(f"unknown comparator {comparator!r}")


def eval_read(insight: Read, table: ExplanationTable, *, approx_rtol: float = APPROX_RTOL) -> Verdict:
    rows = filter_rows(table, insight.conditions)
    stats = {"n_rows": float(len(rows))}
    explanation = {
        "kind": "read",
        "aggregator": insight.variable.aggregator,
        "feature": insight.variable.feature,
        "facet": insight.variable.facet,
        "comparator": insight.comparator,
        "threshold": insight.threshold,
    }
    try:
        statistic = _aggregate(rows, insight.variable)
    except UndefinedStatistic as exc:
        explanation["reason"] = str(exc)
        return Verdict(UNDETERMINED, stats, insight.threshold, explanation)
    stats["statistic"] = statistic
    if insight.variable.aggregator == "fraction":
        stats["fraction"] = statistic
    explanation["statistic"] = statistic
    holds = _compare(statistic, insight.comparator, insight.threshold, approx_rtol)
    return Verdict(SUPPORTED if holds else REFUTED, stats, insight.threshold, explanation)


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - np.mean(x)
    yc = y - np.mean(y)
    sx = float(np.sum(xc * xc))
    sy = float(np.sum(yc * yc))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedStatistic("zero variance")
    return float(np.sum(xc * yc) / np.sqrt(sx * sy))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=float)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def eval_correlation(
    insight: Correlation,
    table: ExplanationTable,
    *,
    tau: float = CORRELATION_TAU,
    min_n: int = CORRELATION_MIN_N,
) -> Verdict:
    rows = filter_rows(table, insight.conditions)
    stats = {"n_rows": float(len(rows)), "tau": tau}
    explanation = {
        "kind": "correlation",
        "x": {"feature": insight.x.feature, "facet": insight.x.facet},
        "y": {"feature": insight.y.feature, "facet": insight.y.facet},
        "claimed": insight.direction,
    }
    try:
        if len(rows) < min_n:
            raise UndefinedStatistic(f"needs at least {min_n} rows")
        x = _numeric(_facet_values(rows, insight.x), insight.x.feature)
        y = _numeric(_facet_values(rows, insight.y), insight.y.feature)
        r = _pearson(x, y)
        rho = _pearson(_average_ranks(x), _average_ranks(y))
    except UndefinedStatistic as exc:
        explanation["reason"] = str(exc)
        return Verdict(UNDETERMINED, stats, None, explanation)
    stats["pearson_r"] = r
    stats["spearman_rho"] = rho
    if r >= tau:
        computed = "positive"
    elif r <= -tau:
        computed = "negative"
    else:
        computed = "none"
    explanation["computed"] = computed
    explanation["pearson_r"] = r
    return Verdict(SUPPORTED if computed == insight.direction else REFUTED, stats, None, explanation)


def eval_comparison(
    insight: Comparison, table: ExplanationTable, *, approx_rtol: float = APPROX_RTOL
) -> Verdict:
    rows = filter_rows(table, insight.conditions)
    stats = {"n_rows": float(len(rows))}
    explanation = {
        "kind": "comparison",
        "relation": insight.relation,
        "left": {"feature": insight.left.feature, "facet": insight.left.facet,
                 "aggregator": insight.left.aggregator},
        "right": {"feature": insight.right.feature, "facet": insight.right.facet,
                  "aggregator": insight.right.aggregator},
    }
    try:
        lhs = _aggregate(rows, insight.left)
        rhs = _aggregate(rows, insight.right)
    except UndefinedStatistic as exc:
        explanation["reason"] = str(exc)
        return Verdict(UNDETERMINED, stats, None, explanation)
    stats["lhs"] = lhs
    stats["rhs"] = rhs
    explanation["lhs"] = lhs
    explanation["rhs"] = rhs
    if insight.relation == "greater":
        holds = lhs > rhs
    elif insight.relation == "less":
        holds = lhs < rhs
    else:
        holds = _approx_equal(lhs, rhs, approx_rtol)
    return Verdict(SUPPORTED if holds else REFUTED, stats, None, explanation)


def evaluate(insight: StructuredInsight, table: ExplanationTable, **config) -> Verdict:
    """Dispatch on insight type; config keys are forwarded (tau, min_n,
    approx_rtol)."""
    if isinstance(insight, Read):
        return eval_read(insight, table, approx_rtol=config.get("approx_rtol", APPROX_RTOL))
    if isinstance(insight, Correlation):
        return eval_correlation(
            insight,
            table,
            tau=config.get("tau", CORRELATION_TAU),
            min_n=config.get("min_n", CORRELATION_MIN_N),
        )
    if isinstance(insight, Comparison):
        return eval_comparison(insight, table, approx_rtol=config.get("approx_rtol", APPROX_RTOL))
    raise TypeError(f"cannot evaluate {type(insight).__name__}")
