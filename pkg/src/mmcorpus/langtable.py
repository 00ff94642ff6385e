"""The language label set used for identification and shard routing."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=1)
def default_languages() -> tuple[str, ...]:
    """Sorted tuple of supported language codes (`<iso639-3>_<Script>`)."""
    text = resources.files("mmcorpus.data").joinpath("languages.txt").read_text("utf-8")
    codes = [ln.strip() for ln in text.splitlines()]
    return tuple(c for c in codes if c and not c.startswith("#"))


def is_known_language(code: str) -> bool:
    return code in set(default_languages())
