"""Core document model: interleaved text/image nodes plus provenance metadata.

A document is an ordered sequence of nodes extracted from one web page.
Filters may delete nodes but never reorder them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Union

# Sentinel for "language identification has not run yet".
UNASSIGNED = ""

_DOC_KEYS = ("id", "url", "lang", "lang_scores", "nodes", "meta")


@dataclass(frozen=True)
class TextNode:
    """One DOM text node: whitespace-normalized content of an allow-listed tag."""

    text: str
    tag: str


@dataclass(frozen=True)
class ImageNode:
    """One DOM image node. Fetch/filter stages fill in the optional fields."""

    url: str
    sha512: str | None = None  # hex digest of the raw downloaded bytes
    phash: int | None = None   # 64-bit perceptual hash
    width: int | None = None
    height: int | None = None


Node = Union[TextNode, ImageNode]


@dataclass
class ImageRecord:
    """A fetched image: raw-byte digest, perceptual hash, geometry, scores."""

    url: str
    bytes_sha512: str
    width: int
    height: int
    phash: int | None = None
    scores: dict[str, float] = field(default_factory=dict)


def make_doc_id(record_id: str, url: str) -> str:
    """Stable 128-bit document id from (WARC record id, document URL)."""
    h = hashlib.blake2b(digest_size=16)
    h.update(record_id.encode("utf-8"))
    h.update(b"\x00")
    h.update(url.encode("utf-8"))
    return h.hexdigest()


@dataclass
class Document:
    id: str
    url: str
    lang: str = UNASSIGNED
    lang_scores: list[tuple[str, float]] = field(default_factory=list)
    nodes: list[Node] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)
    # Unknown top-level JSON fields, preserved opaquely on round-trip.
    extra: dict[str, Any] = field(default_factory=dict)

    def text_nodes(self) -> list[TextNode]:
        return [n for n in self.nodes if isinstance(n, TextNode)]

    def image_nodes(self) -> list[ImageNode]:
        return [n for n in self.nodes if isinstance(n, ImageNode)]

    def texts(self) -> list[str]:
        return [n.text for n in self.nodes if isinstance(n, TextNode)]

    def canonical_text(self) -> str:
        """Newline-joined text node contents, the document's text identity."""
        return "\n".join(self.texts())

    def stage_flags(self) -> list[str]:
        return self.meta.get("stages", [])

    def mark_stage(self, name: str) -> None:
        stages = self.meta.setdefault("stages", [])
        if name not in stages:
            stages.append(name)

    def to_json_obj(self) -> dict[str, Any]:
        nodes = []
        for n in self.nodes:
            if isinstance(n, TextNode):
                nodes.append({"kind": "text", "tag": n.tag, "text": n.text})
            else:
                nodes.append({
                    "kind": "image",
                    "url": n.url,
                    "sha512": n.sha512,
                    "phash": None if n.phash is None else f"{n.phash:016x}",
                    "width": n.width,
                    "height": n.height,
                })
        obj: dict[str, Any] = {
            "id": self.id,
            "url": self.url,
            "lang": self.lang,
            "lang_scores": [[code, score] for code, score in self.lang_scores],
            "nodes": nodes,
            "meta": self.meta,
        }
        for key in sorted(self.extra):
            if key not in obj:
                obj[key] = self.extra[key]
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict[str, Any]) -> "Document":
        nodes: list[Node] = []
        for item in obj.get("nodes", []):
            kind = item.get("kind")
            if kind == "text":
                nodes.append(TextNode(text=item["text"], tag=item["tag"]))
            elif kind == "image":
                phash = item.get("phash")
                nodes.append(ImageNode(
                    url=item["url"],
                    sha512=item.get("sha512"),
                    phash=None if phash is None else int(phash, 16),
                    width=item.get("width"),
                    height=item.get("height"),
                ))
            else:
                raise ValueError(f"unknown node kind: {kind!r}")
        return cls(
            id=obj["id"],
            url=obj["url"],
            lang=obj.get("lang", UNASSIGNED),
            lang_scores=[(c, float(s)) for c, s in obj.get("lang_scores", [])],
            nodes=nodes,
            meta=obj.get("meta", {}),
            extra={k: v for k, v in obj.items() if k not in _DOC_KEYS},
        )

    def to_json_line(self) -> bytes:
        """One UTF-8 JSONL line (no trailing newline). Raises on unencodable text."""
        return json.dumps(self.to_json_obj(), ensure_ascii=False).encode("utf-8")


def doc_text_bytes(doc: Document) -> int:
    """UTF-8 byte length of all text node contents joined by single newlines."""
    return len(doc.canonical_text().encode("utf-8"))


def doc_char_count(doc: Document) -> int:
    """Total Unicode scalar values across text node contents (no separators)."""
    return sum(len(t) for t in doc.texts())


