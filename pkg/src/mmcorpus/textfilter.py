"""Text node heuristics, cleaning transforms, and document-level filters.

Node heuristics fire in a fixed order (1-12) and the reported reason is
always the first firing rule. The full node chain is: clean, the 5-byte
post-clean gate, the heuristics, then the stricter 10-byte gate.
Document filtering drops NSFW-matching documents whole (recall over
precision) and under-sized documents.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .model import Document

_MONTHS = (
    "january", "february", "march", "april", "may", "june", "july",
    "august", "september", "october", "november", "december",
    "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept",
    "oct", "nov", "dec",
)
_MONTH_ALT = "|".join(_MONTHS)
DATE_PATTERNS = (
    r"\d{1,4}[-/.]\d{1,2}[-/.]\d{1,4}",
    rf"\d{{1,2}} (?:{_MONTH_ALT}) \d{{2,4}}",
    rf"(?:{_MONTH_ALT}) \d{{1,2}}(?:, \d{{2,4}})?",
)


@lru_cache(maxsize=16)
def _compile_dates(patterns: tuple[str, ...]) -> re.Pattern:
    return re.compile("|".join(patterns), re.IGNORECASE)

_URL_RE = re.compile(r"(?:[a-zA-Z][a-zA-Z0-9+.\-]*://\S+|\bwww\.\S+)")
# Runs of one special character collapse to a single occurrence.
_SPECIAL_RUN_RE = re.compile(r"([\t\n#/$)(\[\]!?%<>])\1+")
_WS_RE = re.compile(r"\s+")

_ANGLE_SYMBOLS = ("≥", "≤", ">", "<")  # >=, <=, >, <


@dataclass
class NodeFilterConfig:
    min_bytes_latin: int = 5
    min_bytes_nonlatin: int = 15
    min_bytes_cleaned: int = 5   # post-clean keep-if-superior gate
    min_bytes_post: int = 10     # final keep-if-superior gate (the stricter one)
    digit_ratio_max: float = 0.30
    nonalpha_ratio_max: float = 0.33
    caps_ratio_max: float = 0.20
    char_dominance_max: float = 0.33
    angle_symbol_max: int = 2
    # Substrings match case-sensitively, as written.
    banned_substrings: tuple[str, ...] = ("Follow us", "javascript", "copyright", "©")
    banned_exact: tuple[str, ...] = (
        "comment", "facebook", "instagram", "twitter", "rss",
        "newsletter", "share", "follow us",
    )
    date_patterns: tuple[str, ...] = DATE_PATTERNS

    def date_regex(self) -> re.Pattern:
        return _compile_dates(self.date_patterns)


@lru_cache(maxsize=8192)
def _is_latin_letter(ch: str) -> bool:
    if not ch.isalpha():
        return False
    try:
        return unicodedata.name(ch).startswith("LATIN")
    except ValueError:
        return False


def is_latin_script(text: str) -> bool:
    """True iff Latin letters are a strict majority of the letters."""
    letters = 0
    latin = 0
    for ch in text:
        if ch.isalpha():
            letters += 1
            if _is_latin_letter(ch):
                latin += 1
    if letters == 0:
        return False
    return latin * 2 > letters


def _utf8_len(text: str) -> int:
    return len(text.encode("utf-8"))


def filter_node(text: str, cfg: NodeFilterConfig | None = None) -> str | None:
    """Apply heuristics 1-12 in order; return the first firing reason or None."""
    cfg = cfg or NodeFilterConfig()

    if not text:  # 1
        return "empty"
    min_bytes = cfg.min_bytes_latin if is_latin_script(text) else cfg.min_bytes_nonlatin
    if _utf8_len(text) < min_bytes:  # 2
        return "min_bytes"
    total = len(text)
    digits = sum(1 for ch in text if ch.isdigit())
    if digits > cfg.digit_ratio_max * total:  # 3
        return "digit_ratio"
    if len(cfg.date_regex().findall(text)) > 1:  # 4
        return "dates"
    if "lorem ipsum" in text.lower():  # 5
        return "lorem_ipsum"
    non_ws = [ch for ch in text if not ch.isspace()]
    non_alpha = sum(1 for ch in non_ws if not ch.isalpha())
    if non_ws and non_alpha > cfg.nonalpha_ratio_max * len(non_ws):  # 6
        return "nonalpha_ratio"
    if "{" in text or "}" in text:  # 7
        return "braces"
    if sum(text.count(s) for s in _ANGLE_SYMBOLS) > cfg.angle_symbol_max:  # 8
        return "angle_symbols"
    if any(s in text for s in cfg.banned_substrings):  # 9
        return "banned_substring"
    letters = sum(1 for ch in text if ch.isalpha())
    caps = sum(1 for ch in text if ch.isupper())
    if letters and caps > cfg.caps_ratio_max * letters:  # 10
        return "caps_ratio"
    if text.strip().lower() in cfg.banned_exact:  # 11
        return "banned_exact"
    counts: dict[str, int] = {}
    for ch in text:
        counts[ch] = counts.get(ch, 0) + 1
    if max(counts.values()) > cfg.char_dominance_max * total:  # 12
        return "char_dominance"
    return None


def clean_node(text: str) -> str:
    """Delete URLs, collapse special-character runs, normalize whitespace."""
    text = _URL_RE.sub("", text)
    text = _SPECIAL_RUN_RE.sub(r"\1", text)
    return _WS_RE.sub(" ", text).strip()


def post_clean_gate(text: str, cfg: NodeFilterConfig | None = None) -> bool:
    """Final size gate: keep only nodes strictly over min_bytes_post bytes."""
    cfg = cfg or NodeFilterConfig()
    return _utf8_len(text) > cfg.min_bytes_post


def process_node(text: str, cfg: NodeFilterConfig | None = None) -> tuple[str | None, str | None]:
    """Full node chain: clean -> 5-byte gate -> heuristics -> 10-byte gate.

    Returns (cleaned_text, None) for keepers, (None, reason) for drops.
    """
    cfg = cfg or NodeFilterConfig()
    cleaned = clean_node(text)
    if _utf8_len(cleaned) <= cfg.min_bytes_cleaned:
        return None, "cleaned_too_small"
    reason = filter_node(cleaned, cfg)
    if reason is not None:
        return None, reason
    if not post_clean_gate(cleaned, cfg):
        return None, "post_gate_bytes"
    return cleaned, None


def load_wordlist(path: str | Path) -> list[str]:
    """One term per line, UTF-8, '#' comments."""
    terms = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            terms.append(line)
    return terms


def default_nsfw_terms() -> list[str]:
    text = resources.files("mmcorpus.data").joinpath("nsfw_words.txt").read_text("utf-8")
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


def compile_nsfw_regex(terms: list[str]) -> re.Pattern:
    """Case-insensitive, word-boundary anchored alternation over the wordlist."""
    if not terms:
        return re.compile(r"(?!x)x")  # matches nothing
    alternation = "|".join(re.escape(t) for t in sorted(terms, key=len, reverse=True))
    return re.compile(rf"\b(?:{alternation})\b", re.IGNORECASE)


@dataclass
class DocFilterConfig:
    min_text_nodes: int = 5
    min_chars: int = 300
    nsfw_regex: re.Pattern = field(default_factory=lambda: compile_nsfw_regex(default_nsfw_terms()))


def filter_document(doc: Document, cfg: DocFilterConfig | None = None) -> str | None:
    """Return a drop reason (nsfw / too_small_nodes / too_small_chars) or None."""
    cfg = cfg or DocFilterConfig()
    texts = doc.texts()
    for text in texts:
        if cfg.nsfw_regex.search(text):
            return "nsfw"
    if len(texts) < cfg.min_text_nodes:
        return "too_small_nodes"
    if sum(len(t) for t in texts) < cfg.min_chars:
        return "too_small_chars"
    return None
