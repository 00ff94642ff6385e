"""Three deduplication tiers: exact documents, in-document text nodes
(exact + edit-distance near-dups), and per-language corpus-level
MinHash LSH.

MinHash uses universal hashing h(x) = (a*x + b) mod p with the Mersenne
prime p = 2^61 - 1, vectorized with uint64-safe split arithmetic so
signatures are cheap and fully deterministic for a fixed seed.
"""

from __future__ import annotations

import hashlib
from typing import Iterable, Iterator

import numpy as np

from .model import Document, TextNode
from .stats import StageStats

FEATURE_SPACE = 2_097_152  # 21-bit feature indices
NUM_PERM = 256
MERSENNE_P = (1 << 61) - 1
_SENTINEL = np.uint64(0xFFFFFFFFFFFFFFFF)
_LOW40 = np.uint64((1 << 40) - 1)
_LOW21 = np.uint64((1 << 21) - 1)


def _hash64(s: str) -> int:
    return int.from_bytes(hashlib.blake2b(s.encode("utf-8"), digest_size=8).digest(), "big")


def feature_set(text: str, feature_space: int = FEATURE_SPACE) -> set[int]:
    """Character 4/5-gram features within word boundaries.

    Words are padded with one space on each side; words too short to
    yield an n-gram contribute the padded word itself.
    """
    feats: set[int] = set()
    for word in text.split():
        padded = f" {word} "
        for n in (4, 5):
            if len(word) < n - 2:
                grams: Iterable[str] = (padded,)
            else:
                grams = (padded[i : i + n] for i in range(len(padded) - n + 1))
            for gram in grams:
                feats.add(_hash64(gram) % feature_space)
    return feats


class MinHasher:
    """256-slot MinHash signatures from a seeded permutation family."""

    def __init__(self, num_perm: int = NUM_PERM, seed: int = 0):
        rng = np.random.Generator(np.random.PCG64(seed))
        self.num_perm = num_perm
        self.seed = seed
        self._a = rng.integers(1, MERSENNE_P, size=num_perm, dtype=np.uint64)
        self._b = rng.integers(0, MERSENNE_P, size=num_perm, dtype=np.uint64)

    def signature(self, features: set[int]) -> np.ndarray:
        if not features:
            return np.full(self.num_perm, _SENTINEL, dtype=np.uint64)
        x = np.fromiter(sorted(features), dtype=np.uint64, count=len(features))
        # (a*x + b) mod p without overflow: split a = q*2^40 + r, use 2^61 = 1 (mod p)
        q = self._a >> np.uint64(40)          # < 2^21
        r = self._a & _LOW40                  # < 2^40
        t = q[:, None] * x[None, :]           # < 2^42
        t_hi = t >> np.uint64(21)
        t_lo = t & _LOW21
        val = t_hi + (t_lo << np.uint64(40)) + r[:, None] * x[None, :] + self._b[:, None]
        val %= np.uint64(MERSENNE_P)
        return val.min(axis=1)

    @staticmethod
    def estimate(sig_a: np.ndarray, sig_b: np.ndarray) -> float:
        """Matching-slot fraction: unbiased Jaccard estimate."""
        return float(np.mean(sig_a == sig_b))


def lsh_probability(jaccard: float, bands: int, rows: int) -> float:
    """S-curve: probability that at least one band collides."""
    return 1.0 - (1.0 - jaccard**rows) ** bands


def optimal_bands(threshold: float, num_perm: int = NUM_PERM) -> tuple[int, int]:
    """(bands, rows) minimizing the FP+FN integral around the threshold."""
    steps = 1000
    s_lo = np.linspace(0.0, threshold, steps, endpoint=False) + threshold / (2 * steps)
    s_hi = np.linspace(threshold, 1.0, steps, endpoint=False) + (1 - threshold) / (2 * steps)
    best: tuple[float, int, int] | None = None
    for b in range(1, num_perm + 1):
        for r in range(1, num_perm // b + 1):
            fp = float(np.mean(1.0 - (1.0 - s_lo**r) ** b) * threshold)
            fn = float(np.mean((1.0 - s_hi**r) ** b) * (1.0 - threshold))
            err = fp + fn
            if best is None or err < best[0]:
                best = (err, b, r)
    assert best is not None
    return best[1], best[2]


class LshIndex:
    """Banded index over MinHash signatures with keep-first semantics.

    Duplicates are never inserted, so every cluster's index entry is its
    earliest (kept) representative.
    """

    def __init__(self, num_perm: int = NUM_PERM, threshold: float = 0.8,
                 bands: int | None = None, rows: int | None = None):
        if bands is None or rows is None:
            bands, rows = optimal_bands(threshold, num_perm)
        if bands * rows > num_perm:
            raise ValueError("bands*rows must not exceed num_perm")
        self.bands = bands
        self.rows = rows
        self._tables: list[dict[bytes, str]] = [{} for _ in range(bands)]
        self.members: list[str] = []

    def _keys(self, sig: np.ndarray) -> list[bytes]:
        r = self.rows
        return [sig[i * r : (i + 1) * r].tobytes() for i in range(self.bands)]

    def query_insert(self, doc_id: str, sig: np.ndarray) -> str | None:
        """Insert unless any band collides; return the colliding member id."""
        keys = self._keys(sig)
        for table, key in zip(self._tables, keys):
            hit = table.get(key)
            if hit is not None:
                return hit
        for table, key in zip(self._tables, keys):
            table[key] = doc_id
        self.members.append(doc_id)
        return None


def lsh_dedup(
    stream: Iterable[tuple[str, np.ndarray]],
    num_perm: int = NUM_PERM,
    threshold: float = 0.8,
    stats: StageStats | None = None,
) -> set[str]:
    """Ids of later near-duplicate documents to drop (keep-first)."""
    index = LshIndex(num_perm=num_perm, threshold=threshold)
    dropped: set[str] = set()
    for doc_id, sig in stream:
        if stats is not None:
            stats.add_in(1)
        if index.query_insert(doc_id, sig) is not None:
            dropped.add(doc_id)
            if stats is not None:
                stats.drop("near_duplicate", 1)
    return dropped


def levenshtein(a: str, b: str, sub_cost: int = 1) -> int:
    """Edit distance over Unicode scalar values (insert/delete cost 1)."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    bv = np.fromiter((ord(c) for c in b), dtype=np.int64, count=len(b))
    m = len(b)
    cols = np.arange(m + 1, dtype=np.int64)
    prev = cols.copy()
    for i, ca in enumerate(a, start=1):
        sub = prev[:-1] + np.where(bv == ord(ca), 0, sub_cost)
        cand = np.minimum(prev[1:] + 1, sub)
        c = np.concatenate(([i], cand))
        # insertion chain via prefix-min: cur[j] = j + min_{k<=j}(c[k] - k)
        prev = np.minimum.accumulate(c - cols) + cols
    return int(prev[-1])


def lev_ratio(a: str, b: str, convention: str = "uniform") -> float:
    """Normalized edit similarity in [0, 1]; identical strings score 1.

    uniform: 1 - dist/max(len) with unit costs.
    indel:   1 - dist/(len_a + len_b) with substitutions costing 2.
    """
    if not a and not b:
        return 1.0
    if convention == "uniform":
        return 1.0 - levenshtein(a, b, sub_cost=1) / max(len(a), len(b))
    if convention == "indel":
        return 1.0 - levenshtein(a, b, sub_cost=2) / (len(a) + len(b))
    raise ValueError(f"unknown levenshtein convention: {convention}")


def _near_dup(a: str, b: str, threshold: float, convention: str) -> bool:
    # Length prefilter: |len diff| lower-bounds the distance.
    la, lb = len(a), len(b)
    if convention == "uniform":
        if abs(la - lb) > (1.0 - threshold) * max(la, lb):
            return False
    else:
        if abs(la - lb) > (1.0 - threshold) * (la + lb):
            return False
    return lev_ratio(a, b, convention) >= threshold


def node_dedup(
    doc: Document,
    threshold: float = 0.95,
    convention: str = "uniform",
    stats: StageStats | None = None,
) -> Document:
    """Remove duplicate text nodes within a document, keeping the first.

    Exact duplicates go first, then near-duplicates at the ratio
    threshold against every earlier surviving node. Image nodes and
    overall node order are untouched.
    """
    seen_exact: set[str] = set()
    kept_texts: list[str] = []
    new_nodes = []
    for node in doc.nodes:
        if not isinstance(node, TextNode):
            new_nodes.append(node)
            continue
        if stats is not None:
            stats.add_in(1)
        if node.text in seen_exact:
            if stats is not None:
                stats.drop("exact_node", 1)
            continue
        if any(_near_dup(prev, node.text, threshold, convention) for prev in kept_texts):
            if stats is not None:
                stats.drop("near_node", 1)
            continue
        seen_exact.add(node.text)
        kept_texts.append(node.text)
        new_nodes.append(node)
    doc.nodes = new_nodes
    return doc


def content_key(doc: Document) -> bytes:
    """Hash of the canonical joined text, the exact-dedup identity."""
    return hashlib.blake2b(doc.canonical_text().encode("utf-8"), digest_size=16).digest()


def exact_doc_dedup(
    docs: Iterable[Document],
    stats: StageStats | None = None,
) -> Iterator[Document]:
    """Drop documents whose canonical text repeats within their language."""
    seen: set[tuple[str, bytes]] = set()
    for doc in docs:
        if stats is not None:
            stats.add_in(1)
        key = (doc.lang, content_key(doc))
        if key in seen:
            if stats is not None:
                stats.drop("exact_duplicate", 1)
            continue
        seen.add(key)
        yield doc
