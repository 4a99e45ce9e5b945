"""Brute-force reference evaluator: independent oracle for xlint.evaluator.

Deliberately written with plain Python loops and no shared aggregation code.
Only the verdict contract is mirrored (outcome, statistics keys, tie and
tolerance rules); the implementation shares nothing with the main path.
"""

from __future__ import annotations

import math

from xlint.insights import APPROX_RTOL, Comparison, Correlation, Read


def _row_passes(row, cond) -> bool:
    v = row.values[cond.feature]
    if cond.op == "in-range":
        return cond.bounds[0] <= v <= cond.bounds[1]
    if cond.op == "=":
        return v == cond.bounds
    if cond.op == "<":
        return v < cond.bounds
    if cond.op == "<=":
        return v <= cond.bounds
    if cond.op == ">":
        return v > cond.bounds
    if cond.op == ">=":
        return v >= cond.bounds
    raise AssertionError(cond.op)


def _select(table, conditions):
    out = []
    for row in table.rows:
        keep = True
        for cond in conditions:
            if not _row_passes(row, cond):
                keep = False
                break
        if keep:
            out.append(row)
    return out


def _pick(row, variable):
    if variable.facet == "value":
        return row.values[variable.feature]
    return row.attributions[variable.feature]


class _Undefined(Exception):
    pass


def _agg(rows, variable) -> float:
    vals = []
    for row in rows:
        v = _pick(row, variable)
        if isinstance(v, str):
            raise _Undefined("non-numeric")
        vals.append(v)
    if not vals:
        raise _Undefined("empty")
    a = variable.aggregator
    if a in ("count", "fraction"):
        c = variable.predicate.constant
        op = variable.predicate.comparator
        hits = 0
        for v in vals:
            if op == "<" and v < c:
                hits += 1
            elif op == "<=" and v <= c:
                hits += 1
            elif op == ">" and v > c:
                hits += 1
            elif op == ">=" and v >= c:
                hits += 1
            elif op == "=" and v == c:
                hits += 1
        return float(hits) if a == "count" else hits / len(vals)
    if a == "mean":
        total = 0.0
        for v in vals:
            total += v
        return total / len(vals)
    if a == "variance":
        if len(vals) < 2:
            raise _Undefined("variance of <2 rows")
        m = 0.0
        for v in vals:
            m += v
        m /= len(vals)
        acc = 0.0
        for v in vals:
            acc += (v - m) ** 2
        return acc / len(vals)
    if a == "min":
        best = vals[0]
        for v in vals[1:]:
            if v < best:
                best = v
        return float(best)
    if a == "max":
        best = vals[0]
        for v in vals[1:]:
            if v > best:
                best = v
        return float(best)
    raise _Undefined(a)


def _holds(stat, comparator, threshold) -> bool:
    if comparator == "<":
        return stat < threshold
    if comparator == "<=":
        return stat <= threshold
    if comparator == ">":
        return stat > threshold
    if comparator == ">=":
        return stat >= threshold
    if comparator == "~=":
        return abs(stat - threshold) <= APPROX_RTOL * max(abs(stat), abs(threshold))
    raise AssertionError(comparator)


def _pearson_loops(xs, ys) -> float:
    n = len(xs)
    mx = 0.0
    my = 0.0
    for x in xs:
        mx += x
    for y in ys:
        my += y
    mx /= n
    my /= n
    sxy = sxx = syy = 0.0
    for x, y in zip(xs, ys):
        sxy += (x - mx) * (y - my)
        sxx += (x - mx) ** 2
        syy += (y - my) ** 2
    if sxx == 0.0 or syy == 0.0:
        raise _Undefined("zero variance")
    return sxy / math.sqrt(sxx * syy)


def _ranks_loops(xs) -> list[float]:
    indexed = sorted(range(len(xs)), key=lambda i: (xs[i], i))
    ranks = [0.0] * len(xs)
    i = 0
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and xs[indexed[j + 1]] == xs[indexed[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[indexed[k]] = avg
        i = j + 1
    return ranks


def reference_evaluate(insight, table, tau=0.3, min_n=3):
    """Returns (outcome, statistics) computed by brute force."""
    rows = _select(table, insight.conditions)
    if isinstance(insight, Read):
        stats = {"n_rows": float(len(rows))}
        try:
            stat = _agg(rows, insight.variable)
        except _Undefined:
            return "undetermined", stats
        stats["statistic"] = stat
        if insight.variable.aggregator == "fraction":
            stats["fraction"] = stat
        return ("supported" if _holds(stat, insight.comparator, insight.threshold) else "refuted"), stats
    if isinstance(insight, Correlation):
        stats = {"n_rows": float(len(rows)), "tau": tau}
        try:
            if len(rows) < min_n:
                raise _Undefined("too few")
            xs = []
            ys = []
            for row in rows:
                x = _pick(row, insight.x)
                y = _pick(row, insight.y)
                if isinstance(x, str) or isinstance(y, str):
                    raise _Undefined("non-numeric")
                xs.append(float(x))
                ys.append(float(y))
            r = _pearson_loops(xs, ys)
            rho = _pearson_loops(_ranks_loops(xs), _ranks_loops(ys))
        except _Undefined:
            return "undetermined", stats
        stats["pearson_r"] = r
        stats["spearman_rho"] = rho
        if r >= tau:
            computed = "positive"
        elif r <= -tau:
            computed = "negative"
        else:
            computed = "none"
        return ("supported" if computed == insight.direction else "refuted"), stats
    if isinstance(insight, Comparison):
        stats = {"n_rows": float(len(rows))}
        try:
            lhs = _agg(rows, insight.left)
            rhs = _agg(rows, insight.right)
        except _Undefined:
            return "undetermined", stats
        stats["lhs"] = lhs
        stats["rhs"] = rhs
        if insight.relation == "greater":
            ok = lhs > rhs
        elif insight.relation == "less":
            ok = lhs < rhs
        else:
            ok = abs(lhs - rhs) <= APPROX_RTOL * max(abs(lhs), abs(rhs))
        return ("supported" if ok else "refuted"), stats
    raise AssertionError(type(insight))
