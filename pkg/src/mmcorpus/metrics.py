"""Corpus metrology: diversity scores, count distributions, node offsets.

The Vendi score is the exponential of the von Neumann entropy of the
normalized cosine-similarity kernel's spectrum: the effective number of
distinct items in a batch. Lexical diversity uses distinct word n-gram
ratios. Distributions summarize tokens/images per document, and node
offsets locate each node's most relevant partner in document order.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from statistics import median
from typing import Iterable, Sequence

import numpy as np

from .jointfilter import PairDecision
from .model import Document

MAX_KERNEL_BATCH = 65_536


class MetricsError(ValueError):
    pass


def vendi_score(batch: np.ndarray) -> float:
    """exp(-sum(lam * ln lam)) over eigenvalues of the cosine kernel / n.

    Rows are re-normalized defensively; the result lies in [1, n].
    """
    X = np.asarray(batch, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise MetricsError("batch must be a non-empty 2-D array")
    if X.shape[0] > MAX_KERNEL_BATCH:
        raise MetricsError(f"batch exceeds {MAX_KERNEL_BATCH} rows")
    if not np.isfinite(X).all():
        raise MetricsError("non-finite embedding")
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if (norms == 0).any():
        raise MetricsError("zero-norm embedding row")
    Xn = X / norms
    n = Xn.shape[0]
    kernel = (Xn @ Xn.T) / n
    lam = np.linalg.eigvalsh(kernel)
    lam = np.clip(lam, 0.0, None)
    pos = lam[lam > 0]
    entropy = float(-(pos * np.log(pos)).sum())
    return float(np.exp(entropy))


def word_tokens(text: str) -> list[str]:
    """Lowercased Unicode-whitespace tokens: the cheapest reproducible unit."""
    return text.lower().split()


def distinct_ngram_ratio(
    docs_tokens: Iterable[Sequence[str]],
    n_min: int = 1,
    n_max: int = 4,
) -> dict:
    """Per-n distinct ratios plus their mean over n.

    ratio_n = unique n-grams / total n-grams across the sample;
    documents shorter than n tokens contribute nothing at that n.
    """
    docs = [list(t) for t in docs_tokens]
    if not docs:
        raise MetricsError("empty sample")
    ratios: dict[int, float | None] = {}
    for n in range(n_min, n_max + 1):
        unique: set[tuple[str, ...]] = set()
        total = 0
        for tokens in docs:
            for i in range(len(tokens) - n + 1):
                unique.add(tuple(tokens[i : i + n]))
                total += 1
        ratios[n] = (len(unique) / total) if total else None
    defined = [r for r in ratios.values() if r is not None]
    if not defined:
        raise MetricsError("no document long enough for any n")
    return {"ratios": ratios, "mean": sum(defined) / len(defined)}


@dataclass
class CorpusDistributions:
    token_counts: list[int] = field(default_factory=list)
    image_counts: list[int] = field(default_factory=list)
    per_language: Counter = field(default_factory=Counter)

    @property
    def empty(self) -> bool:
        return not self.token_counts

    def summary(self) -> dict:
        if self.empty:
            return {"documents": 0, "tokens": None, "images": None}
        return {
            "documents": len(self.token_counts),
            "tokens": {
                "mean": sum(self.token_counts) / len(self.token_counts),
                "median": median(self.token_counts),
            },
            "images": {
                "mean": sum(self.image_counts) / len(self.image_counts),
                "median": median(self.image_counts),
            },
        }

    def _binned(self, values: list[int], bin_width: int) -> list[tuple[int, int, int]]:
        counts: Counter = Counter(v // bin_width for v in values)
        return [(b * bin_width, (b + 1) * bin_width, counts[b]) for b in sorted(counts)]

    def token_histogram(self, bin_width: int = 1) -> list[tuple[int, int, int]]:
        return self._binned(self.token_counts, bin_width)

    def image_histogram(self, bin_width: int = 1) -> list[tuple[int, int, int]]:
        return self._binned(self.image_counts, bin_width)

    def joint_histogram(self, token_bin: int = 10, image_bin: int = 1) -> list[tuple[int, int, int]]:
        counts: Counter = Counter(
            (t // token_bin, i // image_bin)
            for t, i in zip(self.token_counts, self.image_counts)
        )
        return [(tb * token_bin, ib * image_bin, counts[(tb, ib)])
                for tb, ib in sorted(counts)]


def distributions(docs: Iterable[Document]) -> CorpusDistributions:
    dist = CorpusDistributions()
    for doc in docs:
        dist.token_counts.append(sum(len(word_tokens(t)) for t in doc.texts()))
        dist.image_counts.append(len(doc.image_nodes()))
        dist.per_language[doc.lang] += 1
    return dist


def write_histogram_csv(path, rows: list[tuple], header: tuple[str, ...]) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def node_offset_histogram(decisions: Iterable[PairDecision], window: int = 5) -> dict:
    """Histogram of (partner position - node position) over judged nodes.

    Also reports the cumulative share of offsets within [-window, window].
    """
    counts: Counter = Counter()
    total = 0
    for d in decisions:
        if d.partner_pos is None:
            continue
        counts[d.partner_pos - d.node_pos] += 1
        total += 1
    within = sum(c for off, c in counts.items() if -window <= off <= window)
    return {
        "offsets": dict(sorted(counts.items())),
        "total": total,
        "share_within_window": (within / total) if total else None,
        "window": window,
    }
