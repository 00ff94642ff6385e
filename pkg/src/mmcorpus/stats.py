"""Per-stage drop accounting.

Every pipeline stage records how many items it received and how many it
dropped, with a reason histogram, at one granularity (documents, text
nodes, images, or URLs). The report mirrors the drop percentages a crawl
run exposes at each step.
"""

from __future__ import annotations

import json
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

GRANULARITIES = ("documents", "text_nodes", "images", "urls")


class StatsError(ValueError):
    pass


@dataclass
class StageStats:
    """Counters for one stage. Thread-safe; counters only ever increase."""

    name: str
    granularity: str
    items_in: int = 0
    items_dropped: int = 0
    reasons: Counter = field(default_factory=Counter)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def add_in(self, n: int = 1) -> None:
        if n < 0:
            raise StatsError("counters are monotone")
        with self._lock:
            self.items_in += n

    def drop(self, reason: str, n: int = 1) -> None:
        if n < 0:
            raise StatsError("counters are monotone")
        if n == 0:
            return
        with self._lock:
            self.items_dropped += n
            self.reasons[reason] += n
            if self.items_dropped > self.items_in:
                raise StatsError(
                    f"stage {self.name}: dropped {self.items_dropped} > in {self.items_in}"
                )

    @property
    def items_out(self) -> int:
        return self.items_in - self.items_dropped


class StatsBook:
    """Ordered collection of StageStats, serializable to stats.json."""

    def __init__(self) -> None:
        self._stages: dict[str, StageStats] = {}
        self._lock = threading.Lock()

    def stage(self, name: str, granularity: str) -> StageStats:
        if granularity not in GRANULARITIES:
            raise StatsError(f"unknown granularity: {granularity}")
        with self._lock:
            st = self._stages.get(name)
            if st is None:
                st = StageStats(name=name, granularity=granularity)
                self._stages[name] = st
            elif st.granularity != granularity:
                raise StatsError(f"stage {name} re-registered with different granularity")
            return st

    def get(self, name: str) -> StageStats | None:
        return self._stages.get(name)

    def reset(self, names: Iterable[str]) -> None:
        """Forget entries for stages about to be re-executed."""
        with self._lock:
            for name in names:
                self._stages.pop(name, None)

    def stages(self) -> list[StageStats]:
        return list(self._stages.values())

    def to_json_obj(self) -> dict:
        out = {}
        for name, st in self._stages.items():
            out[name] = {
                "granularity": st.granularity,
                "in": st.items_in,
                "dropped": st.items_dropped,
                "reasons": {k: st.reasons[k] for k in sorted(st.reasons)},
            }
        return out

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_obj(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "StatsBook":
        book = cls()
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        for name in sorted(obj):
            entry = obj[name]
            st = book.stage(name, entry["granularity"])
            st.items_in = int(entry["in"])
            st.items_dropped = int(entry["dropped"])
            st.reasons = Counter({k: int(v) for k, v in entry["reasons"].items()})
        return book

    def check_conservation(self, chain: list[str]) -> None:
        """Assert items_in(k+1) == items_out(k) along a same-granularity chain.

        Stages missing from the book are skipped (they did not run).
        """
        present = [self._stages[n] for n in chain if n in self._stages]
        for prev, cur in zip(present, present[1:]):
            if prev.granularity != cur.granularity:
                raise StatsError(
                    f"chain mixes granularities: {prev.name}/{cur.name}"
                )
            if cur.items_in != prev.items_out:
                raise StatsError(
                    f"conservation violated: {cur.name}.in={cur.items_in} "
                    f"!= {prev.name}.out={prev.items_out}"
                )


# Same-granularity chains that must conserve counts over a full run.
DOCUMENT_CHAIN = [
    "extract",
    "lang_id",
    "text_filter_docs",
    "dedup_exact_docs",
    "lsh_dedup",
    "image_filter_docs",
    "joint_filter_docs",
    "shard_routing",
]
IMAGE_CHAIN = [
    "fetch_images",
    "image_filter_images",
    "image_dedup",
    "decontaminate",
    "joint_filter_images",
]
