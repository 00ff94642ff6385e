"""Retrieval-style text-image consistency filter.

Each text node is scored against every image in its document plus 63
sampled negative images from other same-language documents (and images
symmetrically against negative paragraphs of similar length). A node is
valid when, for at least one in-document partner, its cosine similarity
ranks in the top 8 of the 64 scores. No cosine thresholds anywhere:
only ranks, so any monotone transform of the scores is irrelevant.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import Document, ImageNode, TextNode, doc_text_bytes
from .scorer import Scorer

DEFAULT_NEGATIVES = 63
DEFAULT_TOP = 8
DEFAULT_POOL_CAP = 10_000
LENGTH_TOLERANCE = 0.5  # similar-length: within +/-50% of the doc mean


@dataclass(frozen=True)
class PoolText:
    doc_id: str
    pos: int
    byte_len: int
    emb: np.ndarray


@dataclass(frozen=True)
class PoolImage:
    doc_id: str
    pos: int
    emb: np.ndarray


@dataclass
class PairDecision:
    kind: str            # "text" | "image"
    node_pos: int
    valid: bool
    best_rank: int
    rank_threshold: int
    partner_pos: int | None


class NegativePool:
    """Per-language reservoirs of paragraph and image embeddings.

    Reservoir sampling keeps entries uniform over the stream once the
    capacity is exceeded; entries always come from other documents than
    the one under test (filtered at selection time).
    """

    def __init__(self, capacity: int = DEFAULT_POOL_CAP, seed: int = 0):
        self.capacity = capacity
        self.texts: list[PoolText] = []
        self.images: list[PoolImage] = []
        self._seen_texts = 0
        self._seen_images = 0
        self._rng = random.Random(seed)

    def _reservoir_add(self, bucket: list, seen: int, entry) -> int:
        seen += 1
        if len(bucket) < self.capacity:
            bucket.append(entry)
        else:
            j = self._rng.randrange(seen)
            if j < self.capacity:
                bucket[j] = entry
        return seen

    def add_text(self, entry: PoolText) -> None:
        self._seen_texts = self._reservoir_add(self.texts, self._seen_texts, entry)

    def add_image(self, entry: PoolImage) -> None:
        self._seen_images = self._reservoir_add(self.images, self._seen_images, entry)


def _unit(vec: np.ndarray) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ValueError("zero embedding")
    return v / norm


def embed_document(
    doc: Document,
    scorer: Scorer,
    image_path_for: Callable[[str], str],
) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray]]:
    """Unit embeddings for every text node and every fetched image node.

    Returns ({node_pos: emb}, {node_pos: emb}); image nodes without a
    sha512 (not fetched) are skipped.
    """
    text_embs: dict[int, np.ndarray] = {}
    img_embs: dict[int, np.ndarray] = {}
    for pos, node in enumerate(doc.nodes):
        if isinstance(node, TextNode):
            text_embs[pos] = _unit(scorer.embed_text(node.text))
        elif isinstance(node, ImageNode) and node.sha512 is not None:
            img_embs[pos] = _unit(scorer.embed_image(image_path_for(node.sha512)))
    return text_embs, img_embs


def scaled_rank_threshold(k_negatives: int, top: int = DEFAULT_TOP,
                          negatives: int = DEFAULT_NEGATIVES) -> int:
    """Rank threshold preserving top/(negatives+1) quantile for thin pools."""
    if k_negatives >= negatives:
        return top
    return max(1, math.ceil(top * (k_negatives + 1) / (negatives + 1)))


def _rank(candidate: float, negative_scores: np.ndarray) -> int:
    """1 + number of negatives scoring strictly greater; ties favor the candidate."""
    if negative_scores.size == 0:
        return 1
    return 1 + int((negative_scores > candidate).sum())


def _judge(
    node_pos: int,
    node_emb: np.ndarray,
    partners: list[tuple[int, np.ndarray]],
    negative_embs: list[np.ndarray],
    kind: str,
    top: int,
    negatives: int,
) -> PairDecision | None:
    if not partners:
        return None  # deferred to the document-level gate
    neg = (np.stack(negative_embs) @ node_emb) if negative_embs else np.empty(0)
    threshold = scaled_rank_threshold(len(negative_embs), top, negatives)
    best_rank = None
    best_partner = None
    for pos, emb in partners:
        rank = _rank(float(np.dot(node_emb, emb)), neg)
        if best_rank is None or rank < best_rank:
            best_rank = rank
            best_partner = pos
    assert best_rank is not None
    return PairDecision(
        kind=kind,
        node_pos=node_pos,
        valid=best_rank <= threshold,
        best_rank=best_rank,
        rank_threshold=threshold,
        partner_pos=best_partner,
    )


def judge_text_node(node_pos, node_emb, doc_images, negative_embs,
                    top: int = DEFAULT_TOP, negatives: int = DEFAULT_NEGATIVES):
    return _judge(node_pos, node_emb, doc_images, negative_embs, "text", top, negatives)


def judge_image(node_pos, node_emb, doc_texts, negative_embs,
                top: int = DEFAULT_TOP, negatives: int = DEFAULT_NEGATIVES):
    return _judge(node_pos, node_emb, doc_texts, negative_embs, "image", top, negatives)


def _doc_rng(seed: int, doc_id: str) -> random.Random:
    digest = hashlib.blake2b(
        seed.to_bytes(8, "big", signed=False) + doc_id.encode("utf-8"),
        digest_size=8,
    ).digest()
    return random.Random(int.from_bytes(digest, "big"))


def select_negative_images(pool: NegativePool, doc_id: str, rng: random.Random,
                           want: int = DEFAULT_NEGATIVES) -> list[PoolImage]:
    candidates = [e for e in pool.images if e.doc_id != doc_id]
    if len(candidates) <= want:
        return candidates
    return rng.sample(candidates, want)


def select_negative_texts(pool: NegativePool, doc_id: str, mean_len: float,
                          rng: random.Random, want: int = DEFAULT_NEGATIVES,
                          tolerance: float = LENGTH_TOLERANCE) -> list[PoolText]:
    """Similar-length paragraphs; shortfall filled by closest byte length."""
    candidates = [e for e in pool.texts if e.doc_id != doc_id]
    lo = mean_len * (1.0 - tolerance)
    hi = mean_len * (1.0 + tolerance)
    eligible = [e for e in candidates if lo <= e.byte_len <= hi]
    if len(eligible) >= want:
        return rng.sample(eligible, want)
    rest = [e for e in candidates if not (lo <= e.byte_len <= hi)]
    rest.sort(key=lambda e: (abs(e.byte_len - mean_len), e.doc_id, e.pos))
    return eligible + rest[: want - len(eligible)]


def judge_document(
    doc: Document,
    text_embs: dict[int, np.ndarray],
    img_embs: dict[int, np.ndarray],
    pool: NegativePool,
    seed: int = 0,
    top: int = DEFAULT_TOP,
    negatives: int = DEFAULT_NEGATIVES,
) -> list[PairDecision]:
    """Judge every node of one document against one pool snapshot.

    Negatives are sampled once per document with a per-document RNG
    derived from (seed, doc id), so results are independent of worker
    scheduling.
    """
    rng = _doc_rng(seed, doc.id)
    doc_texts = sorted(text_embs.items())
    doc_images = sorted(img_embs.items())
    neg_images = [e.emb for e in select_negative_images(pool, doc.id, rng, negatives)]
    text_lens = [len(n.text.encode("utf-8")) for n in doc.text_nodes()]
    mean_len = sum(text_lens) / len(text_lens) if text_lens else 0.0
    neg_texts = [
        e.emb for e in select_negative_texts(pool, doc.id, mean_len, rng, negatives)
    ]
    decisions: list[PairDecision] = []
    for pos, emb in doc_texts:
        d = judge_text_node(pos, emb, doc_images, neg_images, top, negatives)
        if d is not None:
            decisions.append(d)
    for pos, emb in doc_images:
        d = judge_image(pos, emb, doc_texts, neg_texts, top, negatives)
        if d is not None:
            decisions.append(d)
    return decisions


def apply_joint_filter(
    doc: Document,
    decisions: list[PairDecision],
    min_doc_bytes: int = 100,
) -> tuple[Document | None, str | None, int, int]:
    """Remove invalid nodes, then apply the document gates.

    Returns (doc or None, drop reason, texts removed, images removed).
    Gates: at least one text node, at least one image, and strictly more
    than ``min_doc_bytes`` of text.
    """
    invalid = {d.node_pos for d in decisions if not d.valid}
    texts_removed = sum(
        1 for d in decisions if not d.valid and d.kind == "text"
    )
    images_removed = sum(
        1 for d in decisions if not d.valid and d.kind == "image"
    )
    if invalid:
        doc.nodes = [n for pos, n in enumerate(doc.nodes) if pos not in invalid]
    n_text = len(doc.text_nodes())
    n_img = len(doc.image_nodes())
    if n_img == 0:
        return None, "no_images", texts_removed, images_removed
    if n_text == 0:
        return None, "no_text", texts_removed, images_removed
    if doc_text_bytes(doc) < min_doc_bytes:
        return None, "too_small_bytes", texts_removed, images_removed
    return doc, None, texts_removed, images_removed
