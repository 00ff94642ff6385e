"""Document language assignment from per-node classifier predictions.

Each text node gets a top-3 prediction; the document verdict sums
probabilities weighted by node character counts, so short boilerplate
segments cannot outvote the main content.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import Document
from .scorer import Scorer, ScorerError


class LangIdError(ValueError):
    pass


@dataclass(frozen=True)
class NodePrediction:
    top3: tuple[tuple[str, float], ...]  # probabilities non-increasing
    char_count: int


@dataclass(frozen=True)
class LangVerdict:
    winner: str
    table: dict[str, float]


def aggregate(predictions: list[NodePrediction]) -> LangVerdict:
    """Character-weighted probability sum; ties break to the smallest code."""
    if not predictions:
        raise LangIdError("no_text")
    table: dict[str, float] = {}
    for pred in predictions:
        for code, prob in pred.top3:
            table[code] = table.get(code, 0.0) + prob * pred.char_count
    winner = min(table.items(), key=lambda kv: (-kv[1], kv[0]))[0]
    return LangVerdict(winner=winner, table=table)


def verdict_scores(verdict: LangVerdict) -> list[tuple[str, float]]:
    """Score table as a list sorted by (score desc, code asc) for serialization."""
    return sorted(verdict.table.items(), key=lambda kv: (-kv[1], kv[0]))


def classify_document(
    doc: Document,
    scorer: Scorer,
    retries: int = 2,
) -> Document:
    """Set doc.lang / doc.lang_scores from per-node scorer predictions.

    Raises LangIdError("no_text") for documents without text nodes and
    ScorerError after the retry budget is exhausted.
    """
    texts = doc.texts()
    if not texts:
        raise LangIdError("no_text")
    predictions: list[NodePrediction] = []
    for text in texts:
        last_exc: Exception | None = None
        for _ in range(retries + 1):
            try:
                top3 = scorer.lid(text)
                break
            except ScorerError as exc:
                last_exc = exc
        else:
            raise ScorerError(f"lid unavailable after {retries + 1} attempts: {last_exc}")
        predictions.append(NodePrediction(top3=tuple(top3), char_count=len(text)))
    verdict = aggregate(predictions)
    doc.lang = verdict.winner
    doc.lang_scores = verdict_scores(verdict)
    return doc
