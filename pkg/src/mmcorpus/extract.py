"""HTML response -> interleaved document extraction.

Builds an error-tolerant DOM from the raw payload and walks it depth
first, emitting one text node per outermost allow-listed tag and one
image node per ``<img src>``. Dropped subtrees (tables, scripts, ...)
contribute nothing. Documents failing the size gates are rejected with
a reason instead of raised errors.
"""

from __future__ import annotations

import codecs
import re
from dataclasses import dataclass, field
from html.parser import HTMLParser
from urllib.parse import urljoin, urlsplit

from .model import Document, ImageNode, Node, TextNode, make_doc_id
from .stats import StageStats

DEFAULT_TEXT_TAGS = frozenset({
    "p", "h1", "h2", "h3", "h4", "h5", "h6", "title", "description",
    "ul", "ol", "aside", "dl", "dd", "dt",
})
# Superset of the required {table}: script-ish subtrees are never content.
DEFAULT_DROP_SUBTREES = frozenset({"table", "script", "style", "noscript", "template"})

VOID_TAGS = frozenset({
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link",
    "meta", "param", "source", "track", "wbr",
})
_P_CLOSERS = frozenset({
    "address", "article", "aside", "blockquote", "div", "dl", "dd", "dt",
    "fieldset", "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5",
    "h6", "header", "hr", "main", "nav", "ol", "p", "pre", "section",
    "table", "ul",
})
_SELF_CLOSERS = {
    "li": frozenset({"li"}),
    "dt": frozenset({"dt", "dd"}),
    "dd": frozenset({"dt", "dd"}),
    "tr": frozenset({"tr", "td", "th"}),
    "td": frozenset({"td", "th"}),
    "th": frozenset({"td", "th"}),
    "option": frozenset({"option"}),
}

_WS_RE = re.compile(r"\s+")
_META_CHARSET_RE = re.compile(
    rb"""<meta[^>]+charset\s*=\s*["']?([a-zA-Z0-9_\-]{2,32})""", re.IGNORECASE
)


@dataclass(frozen=True)
class TagPolicy:
    """Which tags contribute text, which tag is the image tag, which subtrees die."""

    text_allow: frozenset[str] = DEFAULT_TEXT_TAGS
    image_tag: str = "img"
    drop_subtrees: frozenset[str] = DEFAULT_DROP_SUBTREES


class _El:
    __slots__ = ("tag", "attrs", "children")

    def __init__(self, tag: str, attrs: dict[str, str] | None = None):
        self.tag = tag
        self.attrs = attrs or {}
        self.children: list = []  # _El | str interleaved, in source order


class _TreeBuilder(HTMLParser):
    """Lenient DOM builder: unknown end tags ignored, open tags auto-closed."""

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.root = _El("#root")
        self._stack = [self.root]

    def _implied_close(self, tag: str) -> None:
        closers = _SELF_CLOSERS.get(tag)
        if closers:
            while len(self._stack) > 1 and self._stack[-1].tag in closers:
                self._stack.pop()
        if tag in _P_CLOSERS:
            while len(self._stack) > 1 and self._stack[-1].tag == "p":
                self._stack.pop()

    def _open(self, tag: str, attrs, push: bool) -> None:
        tag = tag.lower()
        self._implied_close(tag)
        attr_map: dict[str, str] = {}
        for name, value in attrs:
            attr_map.setdefault(name.lower(), value if value is not None else "")
        el = _El(tag, attr_map)
        self._stack[-1].children.append(el)
        if push and tag not in VOID_TAGS:
            self._stack.append(el)

    def handle_starttag(self, tag, attrs):
        self._open(tag, attrs, push=True)

    def handle_startendtag(self, tag, attrs):
        self._open(tag, attrs, push=False)

    def handle_endtag(self, tag):
        tag = tag.lower()
        for i in range(len(self._stack) - 1, 0, -1):
            if self._stack[i].tag == tag:
                del self._stack[i:]
                return

    def handle_data(self, data):
        if data:
            self._stack[-1].children.append(data)


def build_dom(html: str) -> _El:
    builder = _TreeBuilder()
    try:
        builder.feed(html)
        builder.close()
    except Exception:
        pass  # error-tolerant: keep whatever tree was built
    return builder.root


def normalize_ws(text: str) -> str:
    """Collapse Unicode whitespace runs to single spaces and trim."""
    return _WS_RE.sub(" ", text).strip()


def detect_charset(content_type: str, payload: bytes) -> str:
    if payload.startswith(codecs.BOM_UTF8):
        return "utf-8-sig"
    if payload.startswith(codecs.BOM_UTF16_LE) or payload.startswith(codecs.BOM_UTF16_BE):
        return "utf-16"
    m = re.search(r"charset\s*=\s*([a-zA-Z0-9_\-]+)", content_type or "")
    if m:
        return m.group(1)
    m2 = _META_CHARSET_RE.search(payload[:2048])
    if m2:
        return m2.group(1).decode("ascii")
    return "utf-8"


def decode_payload(payload: bytes, content_type: str = "") -> str:
    charset = detect_charset(content_type, payload)
    try:
        return payload.decode(charset, errors="replace")
    except LookupError:
        return payload.decode("utf-8", errors="replace")


def resolve_url(base: str, src: str) -> str | None:
    """RFC 3986 reference resolution; data:/javascript:-style URLs are invalid."""
    src = (src or "").strip()
    if not src:
        return None
    try:
        resolved = urljoin(base or "", src)
        scheme = urlsplit(resolved).scheme.lower()
    except ValueError:
        return None
    if scheme not in ("http", "https"):
        return None
    return resolved


# Elements whose boundaries separate rendered text.
_BLOCK_SEPARATED = _P_CLOSERS | frozenset({"li", "tr", "td", "th", "caption", "option", "div"})


def _collect_text(el: _El, drop: frozenset[str]) -> str:
    parts: list[str] = []

    def rec(e: _El) -> None:
        for child in e.children:
            if isinstance(child, str):
                parts.append(child)
                continue
            block = child.tag in _BLOCK_SEPARATED
            if child.tag in drop:
                if block:
                    parts.append(" ")
                continue
            if child.tag == "br":
                parts.append(" ")
                continue
            if block:
                parts.append(" ")
            rec(child)
            if block:
                parts.append(" ")

    rec(el)
    return "".join(parts)


def _walk(el: _El, policy: TagPolicy, base_url: str, nodes: list[Node], in_allowed: bool) -> None:
    for child in el.children:
        if isinstance(child, str):
            continue
        tag = child.tag
        if tag in policy.drop_subtrees:
            continue
        if tag == policy.image_tag:
            src = child.attrs.get("src", "")
            url = resolve_url(base_url, src)
            if url is not None:
                nodes.append(ImageNode(url=url))
            continue
        if tag == "meta" and "description" in policy.text_allow:
            if child.attrs.get("name", "").lower() == "description":
                content = normalize_ws(child.attrs.get("content", ""))
                if content:
                    nodes.append(TextNode(text=content, tag="description"))
            continue
        if not in_allowed and tag in policy.text_allow:
            text = normalize_ws(_collect_text(child, policy.drop_subtrees))
            if text:
                nodes.append(TextNode(text=text, tag=tag))
            _walk(child, policy, base_url, nodes, in_allowed=True)
        else:
            _walk(child, policy, base_url, nodes, in_allowed=in_allowed)


@dataclass
class ExtractGates:
    min_doc_bytes: int = 500
    min_text_nodes: int = 3
    max_image_nodes: int = 30


def extract_document(
    record,
    policy: TagPolicy | None = None,
    gates: ExtractGates | None = None,
    stats: StageStats | None = None,
) -> tuple[Document | None, str | None]:
    """Extract an interleaved document from one WARC record.

    Returns (document, None) on success or (None, reason) when a size
    gate fails; the reason is also recorded in ``stats`` when given.
    Malformed HTML never aborts: whatever parses contributes.
    """
    policy = policy or TagPolicy()
    gates = gates or ExtractGates()
    if stats is not None:
        stats.add_in(1)

    def rejected(reason: str) -> tuple[None, str]:
        if stats is not None:
            stats.drop(reason, 1)
        return None, reason

    if len(record.payload) < gates.min_doc_bytes:
        return rejected("too_small")
    html = decode_payload(record.payload, record.content_type)
    root = build_dom(html)
    nodes: list[Node] = []
    _walk(root, policy, record.target_uri, nodes, in_allowed=False)

    n_text = sum(1 for n in nodes if isinstance(n, TextNode))
    n_img = sum(1 for n in nodes if isinstance(n, ImageNode))
    if n_text < gates.min_text_nodes:
        return rejected("too_few_text_nodes")
    if n_img > gates.max_image_nodes:
        return rejected("too_many_images")

    doc = Document(
        id=make_doc_id(record.record_id, record.target_uri),
        url=record.target_uri,
        nodes=nodes,
        meta={"warc_record_id": record.record_id},
    )
    return doc, None
