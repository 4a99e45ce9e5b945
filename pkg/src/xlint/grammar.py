"""Controlled insight language: deterministic parser and rule-based renderer.

The parser recognizes a small English-like grammar (see docs/grammar.ebnf)
covering read, correlation, and comparison sentences over a table's feature
vocabulary, including the phrasings used when people describe attribution
tables ("there is no correlation between X attributions and Y attributions",
"the number of patients with positive attribution for X is greater than the
number with negative attribution", "for more than 65% of rows, X has a
positive attribution", "as X increases, the attribution of X tends to
increase").

The renderer is the inverse direction: it turns a structured insight (or a
partially valid document plus its slots) into a sentence made of typed
segments, so a UI can highlight feature names, facets, insight-type cues and
conditions, and turn open slots into dropdowns or inputs.  For every fully
valid insight, parse(render(insight)) reproduces the insight exactly.

Feature names are matched greedily against the table vocabulary (names plus
description synonyms), case-insensitively.  Names that collide with grammar
keywords or number syntax are quoted with single quotes when rendered.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .data import ExplanationTable
from .insights import (
    AGGREGATED,
    DIRECTIONS,
    READ_COMPARATORS,
    RELATIONS,
    SlotStatus,
    StructuredInsight,
    insight_tag,
    to_document,
    validate,
)

# ---------------------------------------------------------------------------
# tokens


@dataclass(frozen=True)
class Token:
    kind: str  # word | number | quoted
    text: str  # raw text (words keep their case; quoted strings are unescaped)
    value: float | None = None  # numeric value; percents are pre-divided by 100

    @property
    def folded(self) -> str:
        return self.text.casefold()


_NUMBER_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?%?")
_WORD_RE = re.compile(r"[^\s,.;:!?'\"<>=~]+")
_OP_RE = re.compile(r"[<>=~]+")
_PUNCT = set(",.;:!?")


class _Unlexable(Exception):
    pass


def tokenize(text: str) -> list[Token]:
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace() or ch in _PUNCT:
            i += 1
            continue
        if ch in "'\"":
            quote = ch
            j = i + 1
            out = []
            while j < n:
                if text[j] == "\\" and j + 1 < n:
                    out.append(text[j + 1])
                    j += 2
                    continue
                if text[j] == quote:
                    break
                out.append(text[j])
                j += 1
            else:
                raise _Unlexable("unterminated quote")
            tokens.append(Token("quoted", "".join(out)))
            i = j + 1
            continue
        m = _NUMBER_RE.match(text, i)
        if m:
            raw = m.group(0)
            if raw.endswith("%"):
                tokens.append(Token("number", raw, float(raw[:-1]) / 100.0))
            else:
                tokens.append(Token("number", raw, float(raw)))
            i = m.end()
            continue
        m = _OP_RE.match(text, i)
        if m:
            tokens.append(Token("word", m.group(0)))
            i = m.end()
            continue
        m = _WORD_RE.match(text, i)
        if m:
            tokens.append(Token("word", m.group(0)))
            i = m.end()
            continue
        i += 1  # unknown character: skip
    return tokens


# ---------------------------------------------------------------------------
# word tables

AGG_WORDS = {
    "mean": "mean",
    "average": "mean",
    "variance": "variance",
    "minimum": "min",
    "min": "min",
    "maximum": "max",
    "max": "max",
}
AGG_CANONICAL = {"mean": "mean", "variance": "variance", "min": "minimum", "max": "maximum"}

COUNTER_WORDS = {
    "number": "count",
    "count": "count",
    "fraction": "fraction",
    "proportion": "fraction",
    "percentage": "fraction",
    "share": "fraction",
}
COUNTER_CANONICAL = {"count": "number", "fraction": "fraction"}

FACET_WORDS = {
    "value": "value",
    "values": "value",
    "attribution": "attribution",
    "attributions": "attribution",
}
FACET_SINGULAR = {"value": "value", "attribution": "attribution"}
FACET_PLURAL = {"value": "values", "attribution": "attributions"}

ROW_WORDS = ("rows", "patients", "instances", "samples", "cases", "records")

# ordered longest-first; maps surface phrases to comparator symbols
CMP_PHRASES = [
    (("greater", "than", "or", "equal", "to"), ">="),
    (("less", "than", "or", "equal", "to"), "<="),
    (("approximately", "equal", "to"), "~="),
    (("greater", "than"), ">"),
    (("larger", "than"), ">"),
    (("higher", "than"), ">"),
    (("bigger", "than"), ">"),
    (("more", "than"), ">"),
    (("less", "than"), "<"),
    (("smaller", "than"), "<"),
    (("lower", "than"), "<"),
    (("fewer", "than"), "<"),
    (("at", "least"), ">="),
    (("at", "most"), "<="),
    (("equal", "to"), "="),
    (("above",), ">"),
    (("over",), ">"),
    (("exceeds",), ">"),
    (("below",), "<"),
    (("under",), "<"),
    (("approximately",), "~="),
    (("about",), "~="),
    (("around",), "~="),
    (("roughly",), "~="),
    (("equals",), "="),
    (("exactly",), "="),
    ((">=",), ">="),
    (("<=",), "<="),
    ((">",), ">"),
    (("<",), "<"),
    (("==",), "="),
    (("=",), "="),
    (("~=",), "~="),
]

CMP_CANONICAL = {
    ">": "greater than",
    ">=": "at least",
    "<": "less than",
    "<=": "at most",
    "~=": "approximately",
    "=": "equal to",
}
CMP_PCT_CANONICAL = {
    ">": "more than",
    ">=": "at least",
    "<": "less than",
    "<=": "at most",
    "~=": "approximately",
}

RELATION_FROM_CMP = {">": "greater", "<": "less", "~=": "approx-equal", "=": "approx-equal"}
RELATION_CANONICAL = {
    "greater": "greater than",
    "less": "less than",
    "approx-equal": "approximately equal to",
}

SIGN_WORDS = {"positive": (">", 0.0), "negative": ("<", 0.0)}
DIRECTION_WORDS = {"positive": "positive", "negative": "negative", "inverse": "negative", "no": "none"}
DIRECTION_CANONICAL = {"positive": "positive", "negative": "negative", "none": "no"}
TREND_WORDS = {
    "increase": "positive",
    "grow": "positive",
    "rise": "positive",
    "decrease": "negative",
    "drop": "negative",
    "fall": "negative",
}
TREND_CANONICAL = {"positive": "increase", "negative": "decrease"}

COND_INTRO = ("when", "where", "while", "if")

RESERVED_WORDS = frozenset(
    list(AGG_WORDS)
    + list(COUNTER_WORDS)
    + list(FACET_WORDS)
    + list(ROW_WORDS)
    + [w for phrase, _ in CMP_PHRASES for w in phrase]
    + list(SIGN_WORDS)
    + list(DIRECTION_WORDS)
    + list(TREND_WORDS)
    + list(COND_INTRO)
    + list(TREND_WORDS.values())
    + [
        "the", "a", "an", "of", "is", "are", "with", "for", "and", "between",
        "there", "no", "not", "as", "to", "that", "has", "have", "most",
        "than", "or", "correlation", "increases", "decreases", "tends",
        "tend", "also", "data", "points",
    ]
)


# ---------------------------------------------------------------------------
# feature vocabulary


@dataclass
class _VocabEntry:
    name_matches: set = field(default_factory=set)
    desc_matches: set = field(default_factory=set)


class Vocabulary:
    """Greedy phrase table over feature names and description synonyms."""

    def __init__(self, table: ExplanationTable):
        self.feature_names = tuple(table.feature_names)
        self.entries: dict[tuple, _VocabEntry] = {}
        self._descriptions = {}
        for f in table.features:
            self._add_phrase(f.name, f.name, is_name=True)
            if f.description:
                self._add_phrase(f.description, f.name, is_name=False)
                self._descriptions[f.description.casefold()] = self._descriptions.get(
                    f.description.casefold(), set()
                ) | {f.name}
        self.lengths = sorted({len(k) for k in self.entries}, reverse=True)

    def _add_phrase(self, phrase: str, canonical: str, is_name: bool):
        try:
            toks = tokenize(phrase)
        except _Unlexable:
            return
        key = tuple(t.folded for t in toks)
        if not key:
            return
        entry = self.entries.setdefault(key, _VocabEntry())
        (entry.name_matches if is_name else entry.desc_matches).add(canonical)

    def resolve_key(self, key: tuple):
        """(name, None) | (None, ties) | None — names win over descriptions."""
        entry = self.entries.get(key)
        if entry is None:
            return None
        pool = entry.name_matches or entry.desc_matches
        if len(pool) == 1:
            return next(iter(pool)), None
        return None, tuple(sorted(pool))

    def resolve_quoted(self, raw: str):
        exact = [n for n in self.feature_names if n == raw]
        if exact:
            return exact[0], None
        folded = raw.casefold()
        hits = [n for n in self.feature_names if n.casefold() == folded]
        if len(hits) == 1:
            return hits[0], None
        if hits:
            return None, tuple(hits)
        desc_hits = sorted(self._descriptions.get(folded, ()))
        if len(desc_hits) == 1:
            return desc_hits[0], None
        if desc_hits:
            return None, tuple(desc_hits)
        return None, None


# ---------------------------------------------------------------------------
# parse results


@dataclass
class NoParse:
    """Text is outside the controlled grammar; callers fall back to the LLM."""

    reason: str


@dataclass
class PartialParse:
    """Grammar matched but the insight is incomplete or ambiguous."""

    document: dict
    slots: list[SlotStatus]


ParseResult = "StructuredInsight | PartialParse | NoParse"


@dataclass(frozen=True)
class _Feat:
    kind: str  # ok | ambiguous | unknown
    name: str | None = None
    ties: tuple = ()
    raw: str = ""


@dataclass
class _Var:
    feat: _Feat
    facet: str
    aggregator: str
    predicate: tuple | None = None  # (comparator, constant)


@dataclass
class _Cond:
    feat: _Feat
    op: str
    bounds: object


class _Parser:
    def __init__(self, tokens: list[Token], vocab: Vocabulary):
        self.ts = tokens
        self.vocab = vocab

    # -- primitive matchers ------------------------------------------------

    def word(self, pos, *alternatives):
        if pos < len(self.ts) and self.ts[pos].kind == "word" and self.ts[pos].folded in alternatives:
            return pos + 1
        return None

    def words(self, pos, *seq):
        for w in seq:
            pos2 = self.word(pos, w)
            if pos2 is None:
                return None
            pos = pos2
        return pos

    def opt_word(self, pos, *alternatives):
        return self.word(pos, *alternatives) or pos

    def number(self, pos):
        if pos < len(self.ts) and self.ts[pos].kind == "number":
            return self.ts[pos].value, pos + 1
        return None

    def cmp(self, pos, allowed=None):
        for phrase, symbol in CMP_PHRASES:
            if allowed is not None and symbol not in allowed:
                continue
            pos2 = self.words(pos, *phrase)
            if pos2 is not None:
                return symbol, pos2
        return None

    def rows_noun(self, pos):
        pos = self.opt_word(pos, "the")
        pos2 = self.word(pos, *ROW_WORDS)
        if pos2 is not None:
            return pos2
        pos2 = self.words(pos, "data", "points")
        return pos2

    def features(self, pos):
        """All vocabulary matches at pos, longest first, plus quoted names."""
        out = []
        if pos < len(self.ts) and self.ts[pos].kind == "quoted":
            raw = self.ts[pos].text
            name, ties = self.vocab.resolve_quoted(raw)
            if name is not None:
                out.append((_Feat("ok", name=name), pos + 1))
            elif ties:
                out.append((_Feat("ambiguous", ties=ties, raw=raw), pos + 1))
            else:
                out.append((_Feat("unknown", raw=raw), pos + 1))
            return out
        for length in self.vocab.lengths:
            if pos + length > len(self.ts):
                continue
            key = tuple(t.folded for t in self.ts[pos : pos + length])
            res = self.vocab.resolve_key(key)
            if res is None:
                continue
            name, ties = res
            if name is not None:
                out.append((_Feat("ok", name=name), pos + length))
            else:
                out.append((_Feat("ambiguous", ties=ties, raw=" ".join(key)), pos + length))
        return out

    # -- shared phrases ----------------------------------------------------

    def facet_word(self, pos):
        if pos < len(self.ts) and self.ts[pos].kind == "word":
            facet = FACET_WORDS.get(self.ts[pos].folded)
            if facet:
                return facet, pos + 1
        return None

    def condition(self, pos):
        """cond → FEAT ('is'|'are')? condexpr ; yields (_Cond, pos)."""
        results = []
        for feat, p in self.features(pos):
            p = self.opt_word(p, "is", "are")
            p_between = self.word(p, "between")
            if p_between is not None:
                first = self.number(p_between)
                if first is not None:
                    lo, p2 = first
                    p3 = self.word(p2, "and")
                    if p3 is not None:
                        second = self.number(p3)
                        if second is not None:
                            hi, p4 = second
                            bounds = (min(lo, hi), max(lo, hi))
                            results.append((_Cond(feat, "in-range", bounds), p4))
                continue
            got = self.cmp(p, allowed=("<", "<=", ">", ">=", "="))
            if got is not None:
                symbol, p2 = got
                num = self.number(p2)
                if num is not None:
                    value, p3 = num
                    results.append((_Cond(feat, symbol, value), p3))
                continue
            if p < len(self.ts) and self.ts[p].kind == "quoted":
                results.append((_Cond(feat, "=", self.ts[p].text), p + 1))
                continue
            num = self.number(p)
            if num is not None:
                value, p2 = num
                results.append((_Cond(feat, "=", value), p2))
        return results

    def conditions(self, pos):
        """conds → INTRO cond ('and' cond)* ; yields (list[_Cond], pos)."""
        p = self.word(pos, *COND_INTRO)
        if p is None:
            return [([], pos)]
        results = []

        def extend(acc, p):
            matched = False
            for cond, p2 in self.condition(p):
                p3 = self.word(p2, "and")
                if p3 is not None:
                    extend(acc + [cond], p3)
                results.append((acc + [cond], p2))
                matched = True
            return matched

        extend([], p)
        return results

    def agg_variable(self, pos):
        """'the' AGG FACET 'of' FEAT."""
        results = []
        p = self.word(pos, "the")
        if p is None:
            return results
        if p >= len(self.ts) or self.ts[p].kind != "word":
            return results
        agg = AGG_WORDS.get(self.ts[p].folded)
        if agg is None:
            return results
        got = self.facet_word(p + 1)
        if got is None:
            return results
        facet, p2 = got
        p3 = self.word(p2, "of")
        if p3 is None:
            return results
        for feat, p4 in self.features(p3):
            results.append((_Var(feat, facet, agg), p4))
        return results

    def count_variable(self, pos, allow_elided=False):
        """'the' COUNTER ['of' ROWS] 'with' body."""
        results = []
        p = self.word(pos, "the")
        if p is None:
            return results
        if p >= len(self.ts) or self.ts[p].kind != "word":
            return results
        counter = COUNTER_WORDS.get(self.ts[p].folded)
        if counter is None:
            return results
        p = p + 1
        p_of = self.word(p, "of")
        if p_of is not None:
            p_rows = self.rows_noun(p_of)
            if p_rows is None:
                return results
            p = p_rows
        elif not allow_elided:
            return results
        p = self.word(p, "with")
        if p is None:
            return results

        # body alt 1: SIGN FACET [('for'|'of') FEAT]
        if p < len(self.ts) and self.ts[p].kind == "word" and self.ts[p].folded in SIGN_WORDS:
            predicate = SIGN_WORDS[self.ts[p].folded]
            got = self.facet_word(p + 1)
            if got is not None:
                facet, p2 = got
                p3 = self.word(p2, "for", "of")
                if p3 is not None:
                    for feat, p4 in self.features(p3):
                        results.append((_Var(feat, facet, counter, predicate), p4))
                if allow_elided:
                    results.append((_Var(None, facet, counter, predicate), p2))
        # body alt 2: FACET 'of' FEAT PREDCMP NUM
        got = self.facet_word(p)
        if got is not None:
            facet, p2 = got
            p3 = self.word(p2, "of", "for")
            if p3 is not None:
                for feat, p4 in self.features(p3):
                    cmp_got = self.cmp(p4, allowed=("<", "<=", ">", ">=", "="))
                    if cmp_got is None:
                        continue
                    symbol, p5 = cmp_got
                    num = self.number(p5)
                    if num is None:
                        continue
                    value, p6 = num
                    results.append((_Var(feat, facet, counter, (symbol, value)), p6))
        return results

    def left_variable(self, pos):
        return self.agg_variable(pos) + self.count_variable(pos, allow_elided=False)

    def right_variable(self, pos, left: _Var):
        results = self.agg_variable(pos) + self.count_variable(pos, allow_elided=True)
        p = self.words(pos, "that", "of")
        if p is not None:
            for feat, p2 in self.features(p):
                results.append((_Var(feat, left.facet, left.aggregator, left.predicate), p2))
        # inherit the left feature where the phrase elides it
        out = []
        for var, p in results:
            if var.feat is None:
                var = _Var(left.feat, var.facet, var.aggregator, var.predicate)
            out.append((var, p))
        return out

    def var_phrase(self, pos):
        """correlation variable: FEAT FACET | 'the' FACET 'of' FEAT."""
        results = []
        p_the = self.word(pos, "the")
        if p_the is not None:
            got = self.facet_word(p_the)
            if got is not None:
                facet, p2 = got
                p3 = self.word(p2, "of")
                if p3 is not None:
                    for feat, p4 in self.features(p3):
                        results.append((_Var(feat, facet, "identity"), p4))
        start = self.opt_word(pos, "the")
        for feat, p in self.features(start):
            got = self.facet_word(p)
            if got is not None:
                facet, p2 = got
                results.append((_Var(feat, facet, "identity"), p2))
        return results

    # -- sentences ----------------------------------------------------------

    def sentence(self):
        for builder in (
            self._correlation_as,
            self._correlation_there,
            self._read_pct,
            self._the_sentence,
        ):
            for doc_parts, pos in builder(0):
                if pos == len(self.ts):
                    return doc_parts
        return None

    def _with_conditions(self, pos, make):
        out = []
        for conds, p in self.conditions(pos):
            out.append((make(conds), p))
        return out

    def _correlation_there(self, pos):
        results = []
        p = self.word(pos, "there")
        if p is None:
            return results
        p = self.word(p, "is", "are", "exists")
        if p is None:
            return results
        p = self.opt_word(p, "a", "an")
        direction = None
        if p < len(self.ts) and self.ts[p].kind == "word" and self.ts[p].folded in DIRECTION_WORDS:
            direction = DIRECTION_WORDS[self.ts[p].folded]
            p += 1
        p = self.word(p, "correlation", "relationship")
        if p is None:
            return results
        p = self.word(p, "between")
        if p is None:
            return results
        for x, p2 in self.var_phrase(p):
            p3 = self.word(p2, "and")
            if p3 is None:
                continue
            for y, p4 in self.var_phrase(p3):
                results.extend(
                    self._with_conditions(
                        p4, lambda conds, x=x, y=y: ("correlation", x, y, direction, conds, ())
                    )
                )
        return results

    def _correlation_as(self, pos):
        results = []
        p = self.word(pos, "as")
        if p is None:
            return results
        for feat, p2 in self.features(p):
            p3 = self.word(p2, "increases", "grows", "rises")
            if p3 is None:
                continue
            p4 = self.words(p3, "the")
            if p4 is None:
                continue
            got = self.facet_word(p4)
            if got is None:
                continue
            facet, p5 = got
            p6 = self.word(p5, "of")
            if p6 is None:
                continue
            for feat2, p7 in self.features(p6):
                p8 = self.opt_word(p7, "also")
                p8 = self.word(p8, "tends", "tend")
                if p8 is None:
                    continue
                p8 = self.word(p8, "to")
                if p8 is None:
                    continue
                if p8 >= len(self.ts) or self.ts[p8].kind != "word":
                    continue
                trend = TREND_WORDS.get(self.ts[p8].folded)
                if trend is None:
                    continue
                x = _Var(feat, "value", "identity")
                y = _Var(feat2, facet, "identity")
                results.extend(
                    self._with_conditions(
                        p8 + 1,
                        lambda conds, x=x, y=y, trend=trend: ("correlation", x, y, trend, conds, ()),
                    )
                )
        return results

    def _read_pct(self, pos):
        """'for' CMP NUM 'of' ROWS FEAT 'has' 'a' SIGN FACET."""
        results = []
        p = self.word(pos, "for", "in")
        if p is None:
            return results
        alts = []
        got = self.cmp(p, allowed=("<", "<=", ">", ">=", "~="))
        if got is not None:
            symbol, p2 = got
            num = self.number(p2)
            if num is not None:
                alts.append((symbol, num[0], None, num[1]))
        p_most = self.word(p, "most")
        if p_most is not None:
            alts.append((">", None, ("read.threshold", "ambiguous", None), p_most))
        for symbol, threshold, extra_slot, p2 in alts:
            p3 = self.opt_word(p2, "of")
            p3 = self.rows_noun(p3)
            if p3 is None:
                continue
            for feat, p4 in self.features(p3):
                p5 = self.word(p4, "has", "have", "show", "shows")
                if p5 is None:
                    continue
                p5 = self.opt_word(p5, "a", "an")
                if p5 >= len(self.ts) or self.ts[p5].kind != "word":
                    continue
                sign = self.ts[p5].folded
                if sign not in SIGN_WORDS:
                    continue
                got2 = self.facet_word(p5 + 1)
                if got2 is None:
                    continue
                facet, p6 = got2
                var = _Var(feat, facet, "fraction", SIGN_WORDS[sign])
                slots = (extra_slot,) if extra_slot else ()
                results.extend(
                    self._with_conditions(
                        p6,
                        lambda conds, var=var, symbol=symbol, threshold=threshold, slots=slots: (
                            "read", var, symbol, threshold, conds, slots
                        ),
                    )
                )
        return results

    def _the_sentence(self, pos):
        results = []
        for left, p in self.left_variable(pos):
            p2 = self.word(p, "is", "are", "was", "were")
            if p2 is None:
                continue
            got = self.cmp(p2)
            if got is None:
                continue
            symbol, p3 = got
            num = self.number(p3)
            if num is not None and symbol in READ_COMPARATORS:
                value, p4 = num
                results.extend(
                    self._with_conditions(
                        p4,
                        lambda conds, left=left, symbol=symbol, value=value: (
                            "read", left, symbol, value, conds, ()
                        ),
                    )
                )
            if symbol in RELATION_FROM_CMP:
                relation = RELATION_FROM_CMP[symbol]
                for right, p4 in self.right_variable(p3, left):
                    results.extend(
                        self._with_conditions(
                            p4,
                            lambda conds, left=left, right=right, relation=relation: (
                                "comparison", left, right, relation, conds, ()
                            ),
                        )
                    )
        return results


# ---------------------------------------------------------------------------
# document assembly


def _feat_doc(feat: _Feat | None, path: str, pslots: list):
    if feat is None or feat.kind == "unknown":
        if feat is not None:
            pslots.append((f"{path}.feature", "missing", None))
        return None
    if feat.kind == "ambiguous":
        pslots.append((f"{path}.feature", "ambiguous", feat.ties))
        return None
    return feat.name


def _var_doc(var: _Var, path: str, pslots: list) -> dict:
    doc = {
        "feature": _feat_doc(var.feat, path, pslots),
        "facet": var.facet,
        "aggregator": var.aggregator,
    }
    if var.predicate is not None:
        doc["predicate"] = {"comparator": var.predicate[0], "constant": var.predicate[1]}
    return doc


def _cond_doc(cond: _Cond, path: str, pslots: list) -> dict:
    bounds = list(cond.bounds) if isinstance(cond.bounds, tuple) else cond.bounds
    return {
        "feature": _feat_doc(cond.feat, path, pslots),
        "facet": "value",
        "op": cond.op,
        "bounds": bounds,
    }


def _assemble(parts) -> tuple[dict, list]:
    tag = parts[0]
    pslots: list = []
    conds = parts[4]
    extra = parts[5]
    if tag == "read":
        _, var, comparator, threshold, _, _ = parts
        doc = {
            "type": "read",
            "variable": _var_doc(var, "read.variable", pslots),
            "comparator": comparator,
            "threshold": threshold,
        }
    elif tag == "correlation":
        _, x, y, direction, _, _ = parts
        doc = {
            "type": "correlation",
            "x": _var_doc(x, "correlation.x", pslots),
            "y": _var_doc(y, "correlation.y", pslots),
            "direction": direction,
        }
    else:
        _, left, right, relation, _, _ = parts
        doc = {
            "type": "comparison",
            "left": _var_doc(left, "comparison.left", pslots),
            "right": _var_doc(right, "comparison.right", pslots),
            "relation": relation,
        }
    doc["conditions"] = [
        _cond_doc(c, f"{tag}.conditions[{i}]", pslots) for i, c in enumerate(conds)
    ] or None
    pslots.extend(extra)
    return doc, pslots


def parse_controlled(text: str, table: ExplanationTable):
    """Parse controlled-language text against a table's feature vocabulary.

    Returns a StructuredInsight on a complete parse, a PartialParse carrying
    the document plus slots when the sentence is recognized but incomplete or
    ambiguous, and NoParse for anything outside the grammar.  Total: never
    raises on arbitrary text.
    """
    try:
        tokens = tokenize(text or "")
    except _Unlexable as exc:
        return NoParse(str(exc))
    if not tokens:
        return NoParse("empty input")
    vocab = Vocabulary(table)
    parts = _Parser(tokens, vocab).sentence()
    if parts is None:
        return NoParse("text is outside the controlled insight language")
    document, pslots = _assemble(parts)
    result = validate(document)
    if result.ok and not pslots:
        return result.insight
    slots = list(result.slots)
    by_path = {s.path: i for i, s in enumerate(slots)}
    for path, state, candidates in pslots:
        cand = tuple(candidates) if candidates else None
        if cand is None and state == "missing":
            cand = vocab.feature_names
        slot = SlotStatus(path, state, cand)
        if path in by_path:
            slots[by_path[path]] = slot
        else:
            by_path[path] = len(slots)
            slots.append(slot)
    return PartialParse(document=document, slots=slots)


# ---------------------------------------------------------------------------
# rendering


@dataclass(frozen=True)
class Segment:
    kind: str  # literal | keyword | slot
    text: str
    slot_ref: str | None = None
    highlight: str = "none"  # feature | attribution | insight-type | condition | none
    candidates: tuple | None = None

    def to_doc(self) -> dict:
        return {
            "kind": self.kind,
            "text": self.text,
            "slot_ref": self.slot_ref,
            "highlight": self.highlight,
            "candidates": list(self.candidates) if self.candidates else None,
        }


@dataclass
class RenderedInsight:
    segments: list[Segment]

    @property
    def text(self) -> str:
        out = []
        for s in self.segments:
            if not s.text:
                continue
            if out and s.text[0] not in ",.;:!?":
                out.append(" ")
            out.append(s.text)
        return "".join(out)

    def slot_segments(self) -> list[Segment]:
        return [s for s in self.segments if s.kind == "slot"]

    def to_doc(self) -> dict:
        return {"segments": [s.to_doc() for s in self.segments], "text": self.text}


def format_number(x: float) -> str:
    x = float(x)
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def _percent_string(threshold: float) -> str | None:
    p = threshold * 100.0
    for text in (format_number(p), repr(p)):
        try:
            if float(text.rstrip("%")) / 100.0 == threshold:
                return text + "%"
        except (ValueError, OverflowError):
            continue
    return None


def quote_name(name: str) -> str:
    return "'" + name.replace("\\", "\\\\").replace("'", "\\'") + "'"


def needs_quote(name: str, table: ExplanationTable | None = None) -> bool:
    try:
        toks = tokenize(name)
    except _Unlexable:
        return True
    if not toks or any(t.kind != "word" for t in toks):
        return True
    folded = [t.folded for t in toks]
    if any(w in RESERVED_WORDS for w in folded):
        return True
    if table is not None:
        key = tuple(folded)
        matches = [
            f.name
            for f in table.features
            if tuple(t.folded for t in tokenize(f.name)) == key
        ]
        if len(matches) > 1 or (matches and matches[0] != name):
            return True
        if not matches:
            return True
    return False


class _Builder:
    def __init__(self, slot_map: dict):
        self.segments: list[Segment] = []
        self.slot_map = slot_map
        self.emitted: set = set()

    def lit(self, text, hl="none"):
        self.segments.append(Segment("literal", text, highlight=hl))

    def kw(self, text, hl):
        self.segments.append(Segment("keyword", text, highlight=hl))

    def punct(self, ch):
        if self.segments:
            self.segments.append(Segment("literal", ch))

    def take_slot(self, path) -> SlotStatus | None:
        slot = self.slot_map.get(path)
        if slot is not None:
            self.emitted.add(path)
        return slot

    def slot(self, path, current, hl, default_candidates=None):
        status = self.take_slot(path)
        candidates = status.candidates if status and status.candidates else default_candidates
        text = str(current) if current is not None else "___"
        self.segments.append(
            Segment("slot", text, slot_ref=path, highlight=hl,
                    candidates=tuple(candidates) if candidates else None)
        )

    def value_or_slot(self, path, value, render_fn, hl, default_candidates=None):
        if path in self.slot_map:
            self.slot(path, value, hl, default_candidates)
        else:
            render_fn(value)

    def leftovers(self):
        for path, status in self.slot_map.items():
            if path not in self.emitted:
                self.segments.append(
                    Segment("slot", "___", slot_ref=path, highlight="none",
                            candidates=status.candidates)
                )


def _render_feature(b: _Builder, doc, path, table, hl="feature"):
    feat_path = f"{path}.feature"
    name = (doc or {}).get("feature") if isinstance(doc, dict) else None
    if feat_path in b.slot_map or name is None:
        b.slot(feat_path, name, hl)
        return
    text = quote_name(name) if needs_quote(name, table) else name
    b.kw(text, hl)


def _render_number(b: _Builder, path, value, hl):
    b.value_or_slot(path, value, lambda v: b.kw(format_number(v), hl), hl)


def _render_agg_phrase(b: _Builder, doc, path, table):
    """'the mean attribution of bmi' / 'the number of rows with ...'."""
    if not isinstance(doc, dict):
        b.slot(path, None, "insight-type")
        return
    agg = doc.get("aggregator")
    b.lit("the")
    if agg in AGG_CANONICAL:
        b.value_or_slot(
            f"{path}.aggregator", agg,
            lambda v: b.kw(AGG_CANONICAL[v], "insight-type"),
            "insight-type", AGGREGATED,
        )
        facet = doc.get("facet")
        b.value_or_slot(
            f"{path}.facet", facet,
            lambda v: b.kw(FACET_SINGULAR[v], "attribution"),
            "attribution", ("value", "attribution"),
        )
        b.lit("of")
        _render_feature(b, doc, path, table)
    elif agg in ("count", "fraction"):
        b.value_or_slot(
            f"{path}.aggregator", agg,
            lambda v: b.kw(COUNTER_CANONICAL[v], "insight-type"),
            "insight-type", AGGREGATED,
        )
        b.lit("of rows with")
        facet = doc.get("facet")
        b.value_or_slot(
            f"{path}.facet", facet,
            lambda v: b.kw(FACET_SINGULAR[v], "attribution"),
            "attribution", ("value", "attribution"),
        )
        b.lit("of")
        _render_feature(b, doc, path, table)
        pred = doc.get("predicate")
        ppath = f"{path}.predicate"
        if ppath in b.slot_map or not isinstance(pred, dict):
            b.slot(ppath, None, "insight-type")
        else:
            b.value_or_slot(
                f"{ppath}.comparator", pred.get("comparator"),
                lambda v: b.kw(CMP_CANONICAL[v], "insight-type"),
                "insight-type", ("<", "<=", ">", ">=", "="),
            )
            _render_number(b, f"{ppath}.constant", pred.get("constant"), "insight-type")
    else:
        # aggregator missing or unusable: render the simple-aggregate shape
        b.slot(f"{path}.aggregator", agg, "insight-type", AGGREGATED)
        facet = doc.get("facet")
        b.value_or_slot(
            f"{path}.facet", facet,
            lambda v: b.kw(FACET_SINGULAR.get(v, str(v)), "attribution"),
            "attribution", ("value", "attribution"),
        )
        b.lit("of")
        _render_feature(b, doc, path, table)


def _render_var_phrase(b: _Builder, doc, path, table):
    """correlation variable: 'bmi attributions'."""
    if not isinstance(doc, dict):
        b.slot(path, None, "attribution")
        return
    _render_feature(b, doc, path, table)
    facet = doc.get("facet")
    b.value_or_slot(
        f"{path}.facet", facet,
        lambda v: b.kw(FACET_PLURAL.get(v, str(v)), "attribution"),
        "attribution", ("value", "attribution"),
    )


def _render_conditions(b: _Builder, doc, tag, table):
    conds = doc.get("conditions")
    path = f"{tag}.conditions"
    if path in b.slot_map:
        b.slot(path, None, "condition")
        return
    if not conds:
        return
    b.kw("when", "condition")
    for i, cond in enumerate(conds):
        if i:
            b.lit("and", "condition")
        cpath = f"{path}[{i}]"
        if cpath in b.slot_map or not isinstance(cond, dict):
            b.slot(cpath, None, "condition")
            continue
        _render_feature(b, cond, cpath, table)
        b.lit("is", "condition")
        op = cond.get("op")
        bounds = cond.get("bounds")
        if f"{cpath}.op" in b.slot_map:
            b.slot(f"{cpath}.op", op, "condition", ("<", "<=", ">", ">=", "=", "in-range"))
            _render_number(b, f"{cpath}.bounds", None, "condition")
        elif op == "in-range":
            b.kw("between", "condition")
            if f"{cpath}.bounds" in b.slot_map or not isinstance(bounds, (list, tuple)):
                b.slot(f"{cpath}.bounds", bounds, "condition")
            else:
                b.kw(format_number(bounds[0]), "condition")
                b.kw("and", "condition")
                b.kw(format_number(bounds[1]), "condition")
        elif isinstance(bounds, str) and f"{cpath}.bounds" not in b.slot_map:
            b.kw(quote_name(bounds), "condition")
        else:
            b.kw(CMP_CANONICAL.get(op, str(op)), "condition")
            _render_number(b, f"{cpath}.bounds", bounds, "condition")


def _pct_form_applicable(doc, slot_map) -> str | None:
    var = doc.get("variable")
    if not isinstance(var, dict):
        return None
    if var.get("aggregator") != "fraction" or var.get("facet") != "attribution":
        return None
    pred = var.get("predicate")
    if not isinstance(pred, dict):
        return None
    if (pred.get("comparator"), pred.get("constant")) not in ((">", 0.0), ("<", 0.0), (">", 0), ("<", 0)):
        return None
    comparator = doc.get("comparator")
    if comparator not in CMP_PCT_CANONICAL:
        return None
    threshold = doc.get("threshold")
    if not isinstance(threshold, (int, float)) or isinstance(threshold, bool):
        return None
    blocked = {"read.variable", "read.variable.feature", "read.variable.facet",
               "read.variable.aggregator", "read.variable.predicate",
               "read.variable.predicate.comparator", "read.variable.predicate.constant",
               "read.comparator", "read.threshold"}
    if blocked & set(slot_map):
        return None
    return _percent_string(float(threshold))


def render(insight_or_document, slots=(), table: ExplanationTable | None = None) -> RenderedInsight:
    """Rule-based rendering of a structured insight (or partial document) into
    one sentence of typed segments; every slot appears as exactly one slot
    segment."""
    if isinstance(insight_or_document, dict):
        doc = insight_or_document
    else:
        doc = to_document(insight_or_document)
    slot_map = {s.path: s for s in slots}
    b = _Builder(slot_map)
    tag = doc.get("type")

    if tag == "read":
        pct = _pct_form_applicable(doc, slot_map)
        if pct is not None:
            var = doc["variable"]
            sign = "positive" if var["predicate"]["comparator"] == ">" else "negative"
            b.lit("for")
            b.kw(CMP_PCT_CANONICAL[doc["comparator"]], "insight-type")
            b.kw(pct, "insight-type")
            b.lit("of rows")
            b.punct(",")
            _render_feature(b, var, "read.variable", table)
            b.lit("has a")
            b.kw(sign, "attribution")
            b.kw("attribution", "attribution")
        else:
            _render_agg_phrase(b, doc.get("variable"), "read.variable", table)
            b.lit("is")
            b.value_or_slot(
                "read.comparator", doc.get("comparator"),
                lambda v: b.kw(CMP_CANONICAL[v], "insight-type"),
                "insight-type", READ_COMPARATORS,
            )
            _render_number(b, "read.threshold", doc.get("threshold"), "insight-type")
    elif tag == "correlation":
        x, y = doc.get("x"), doc.get("y")
        direction = doc.get("direction")
        as_form = (
            direction in ("positive", "negative")
            and isinstance(x, dict)
            and isinstance(y, dict)
            and x.get("facet") == "value"
            and x.get("feature")
            and y.get("feature")
            and y.get("facet") in FACET_SINGULAR
            and not ({"correlation.x", "correlation.y", "correlation.direction",
                      "correlation.x.feature", "correlation.x.facet",
                      "correlation.y.feature", "correlation.y.facet"} & set(slot_map))
        )
        if as_form:
            b.lit("as")
            _render_feature(b, x, "correlation.x", table)
            b.kw("increases", "insight-type")
            b.punct(",")
            b.lit("the")
            b.kw(FACET_SINGULAR[y["facet"]], "attribution")
            b.lit("of")
            _render_feature(b, y, "correlation.y", table)
            b.kw("tends", "insight-type")
            b.lit("to")
            b.kw(TREND_CANONICAL[direction], "insight-type")
        else:
            b.lit("there is")
            if "correlation.direction" in slot_map or direction is None:
                b.lit("a")
                b.slot("correlation.direction", direction, "insight-type", DIRECTIONS)
            elif direction == "none":
                b.kw("no", "insight-type")
            else:
                b.lit("a")
                b.kw(direction, "insight-type")
            b.kw("correlation", "insight-type")
            b.lit("between")
            _render_var_phrase(b, x, "correlation.x", table)
            b.lit("and")
            _render_var_phrase(b, y, "correlation.y", table)
    elif tag == "comparison":
        _render_agg_phrase(b, doc.get("left"), "comparison.left", table)
        b.lit("is")
        b.value_or_slot(
            "comparison.relation", doc.get("relation"),
            lambda v: b.kw(RELATION_CANONICAL[v], "insight-type"),
            "insight-type", RELATIONS,
        )
        _render_agg_phrase(b, doc.get("right"), "comparison.right", table)
    else:
        b.slot("type", tag, "insight-type", ("read", "correlation", "comparison"))

    _render_conditions(b, doc, tag, table)
    b.leftovers()
    b.punct(".")
    return RenderedInsight(segments=b.segments)


def roundtrip_check(insight: StructuredInsight, table: ExplanationTable) -> bool:
    """parse(render(insight)) == insight for a fully valid insight."""
    rendered = render(insight, [], table)
    parsed = parse_controlled(rendered.text, table)
    return parsed == insight


# quiet linters: insight_tag re-exported for service use
__all__ = [
    "NoParse",
    "PartialParse",
    "RenderedInsight",
    "Segment",
    "Token",
    "Vocabulary",
    "format_number",
    "insight_tag",
    "needs_quote",
    "parse_controlled",
    "quote_name",
    "render",
    "roundtrip_check",
    "tokenize",
]
