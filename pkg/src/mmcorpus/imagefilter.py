"""Rule-based image filtering, NSFW/CSAM gating, image dedup caps, and
benchmark decontamination.

URL rules run before download; geometry and model-score gates run on
fetched images. A single nsfw/csam verdict removes the whole document.
Dedup is per language: within a document by URL then pHash (keep
first), across the language a cap on how many documents may carry the
same URL or pHash key.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath
from typing import Iterable
from urllib.parse import urlsplit

from .model import Document, ImageNode
from .phash import phash64_bytes
from .stats import StageStats


class GateError(ValueError):
    pass


@dataclass
class ImageRuleConfig:
    min_side: int = 150
    aspect_min: float = 1.0 / 3.0
    aspect_max: float = 3.0
    url_banned_substrings: tuple[str, ...] = (
        "logo", "banner", "button", "widget", "icon", "plugin",
    )
    name_banned_exact: tuple[str, ...] = ("twitter", "facebook", "rss")


@dataclass
class NsfwThresholds:
    porn_hentai_sum: float = 0.8
    nudenet_exposed: float = 0.5
    safer_porn: float = 0.8
    csam: float = 0.4


def url_rule_filter(url: str, cfg: ImageRuleConfig | None = None) -> str | None:
    """Return a drop reason (banned_substring / banned_name / malformed) or None."""
    cfg = cfg or ImageRuleConfig()
    try:
        parts = urlsplit(url)
        if not parts.scheme or not parts.netloc:
            return "malformed"
    except ValueError:
        return "malformed"
    lowered = url.lower()
    for sub in cfg.url_banned_substrings:
        if sub in lowered:
            return "banned_substring"
    segment = PurePosixPath(parts.path).name
    stem = PurePosixPath(segment).stem
    if stem.lower() in cfg.name_banned_exact:
        return "banned_name"
    return None


def geometry_filter(width: int, height: int, cfg: ImageRuleConfig | None = None) -> str | None:
    """Return too_small / aspect or None; aspect bounds are inclusive."""
    cfg = cfg or ImageRuleConfig()
    if min(width, height) < cfg.min_side:
        return "too_small"
    ratio = width / height
    if ratio > cfg.aspect_max or ratio < cfg.aspect_min:
        return "aspect"
    return None


_NSFW_KEYS = ("porn", "hentai", "nudenet_exposed_max", "safer_porn", "safer_csam")


def nsfw_gate(scores: dict[str, float], t: NsfwThresholds | None = None) -> str:
    """Classify scores as safe / nsfw / csam; a missing key is an error."""
    t = t or NsfwThresholds()
    missing = [k for k in _NSFW_KEYS if k not in scores]
    if missing:
        raise GateError(f"missing score keys: {missing}")
    if scores["safer_csam"] > t.csam:
        return "csam"
    if (scores["porn"] + scores["hentai"] > t.porn_hentai_sum
            and scores["nudenet_exposed_max"] > t.nudenet_exposed):
        return "nsfw"
    if scores["safer_porn"] > t.safer_porn:
        return "nsfw"
    return "safe"


def image_dedup(
    docs: Iterable[Document],
    cap: int = 10,
    stats: StageStats | None = None,
) -> list[Document]:
    """Per-language image dedup over an in-order document stream.

    Within a document, later images repeating a URL and then a pHash are
    dropped. Across the stream, each URL or pHash key may appear in at
    most ``cap`` documents; later occurrences are dropped. Callers feed
    one language at a time.
    """
    url_docs: dict[str, int] = {}
    phash_docs: dict[int, int] = {}
    out = []
    for doc in docs:
        seen_urls: set[str] = set()
        seen_phashes: set[int] = set()
        kept_urls: set[str] = set()
        kept_phashes: set[int] = set()
        new_nodes = []
        for node in doc.nodes:
            if not isinstance(node, ImageNode):
                new_nodes.append(node)
                continue
            if stats is not None:
                stats.add_in(1)
            if node.url in seen_urls:
                if stats is not None:
                    stats.drop("dup_url_in_doc", 1)
                continue
            seen_urls.add(node.url)
            if node.phash is not None:
                if node.phash in seen_phashes:
                    if stats is not None:
                        stats.drop("dup_phash_in_doc", 1)
                    continue
                seen_phashes.add(node.phash)
            if url_docs.get(node.url, 0) >= cap:
                if stats is not None:
                    stats.drop("url_cap", 1)
                continue
            if node.phash is not None and phash_docs.get(node.phash, 0) >= cap:
                if stats is not None:
                    stats.drop("phash_cap", 1)
                continue
            kept_urls.add(node.url)
            if node.phash is not None:
                kept_phashes.add(node.phash)
            new_nodes.append(node)
        for url in kept_urls:
            url_docs[url] = url_docs.get(url, 0) + 1
        for ph in kept_phashes:
            phash_docs[ph] = phash_docs.get(ph, 0) + 1
        doc.nodes = new_nodes
        out.append(doc)
    return out


@dataclass(frozen=True)
class ContaminationSet:
    """Immutable set of benchmark-image pHashes; matching is exact equality."""

    phashes: frozenset[int] = field(default_factory=frozenset)

    @classmethod
    def from_file(cls, path: str | Path) -> "ContaminationSet":
        hashes = set()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                hashes.add(int(line, 16))
        return cls(phashes=frozenset(hashes))

    @classmethod
    def from_images(cls, paths: Iterable[str | Path]) -> "ContaminationSet":
        return cls(phashes=frozenset(
            phash64_bytes(Path(p).read_bytes()) for p in paths
        ))

    def to_file(self, path: str | Path) -> None:
        lines = sorted(f"{h:016x}" for h in self.phashes)
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    def __contains__(self, phash: int) -> bool:
        return phash in self.phashes


def decontaminate(
    docs: Iterable[Document],
    contamination: ContaminationSet,
    stats: StageStats | None = None,
) -> list[Document]:
    """Remove every image whose pHash is in the contamination set."""
    out = []
    for doc in docs:
        new_nodes = []
        for node in doc.nodes:
            if isinstance(node, ImageNode):
                if stats is not None:
                    stats.add_in(1)
                if node.phash is not None and node.phash in contamination:
                    if stats is not None:
                        stats.drop("benchmark_phash", 1)
                    continue
            new_nodes.append(node)
        doc.nodes = new_nodes
        out.append(doc)
    return out
