"""Text-to-structured-insight orchestration: grammar first, LLM fallback."""

from __future__ import annotations

from dataclasses import dataclass

from .data import ExplanationTable
from .errors import NoParseError
from .extractor import InsightExtractor
from .grammar import NoParse, PartialParse, RenderedInsight, parse_controlled, render
from .insights import SlotStatus, StructuredInsight, to_document


@dataclass
class StructureResult:
    source: str  # grammar | llm
    document: dict
    slots: list[SlotStatus]
    insight: StructuredInsight | None
    rendered: RenderedInsight
    trace: object | None = None

    @property
    def complete(self) -> bool:
        return self.insight is not None


def structure_text(
    text: str,
    table: ExplanationTable,
    extractor: InsightExtractor | None = None,
    use_llm: bool = False,
) -> StructureResult:
    """Controlled-grammar parse first; on NoParse, the two-stage LLM
    extractor (when enabled).  Raises NoParseError when neither applies;
    extractor errors propagate typed."""
    parsed = parse_controlled(text, table)
    if isinstance(parsed, PartialParse):
        return StructureResult(
            source="grammar",
            document=parsed.document,
            slots=parsed.slots,
            insight=None,
            rendered=render(parsed.document, parsed.slots, table),
        )
    if not isinstance(parsed, NoParse):
        insight = parsed
        return StructureResult(
            source="grammar",
            document=to_document(insight),
            slots=[],
            insight=insight,
            rendered=render(insight, [], table),
        )
    if not use_llm or extractor is None:
        raise NoParseError(parsed.reason)
    outcome = extractor.extract(text, table)
    return StructureResult(
        source="llm",
        document=outcome.document,
        slots=outcome.slots,
        insight=outcome.insight,
        rendered=render(outcome.document, outcome.slots, table),
        trace=outcome.trace,
    )
