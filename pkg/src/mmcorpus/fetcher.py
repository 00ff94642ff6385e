"""Polite concurrent image downloader.

Honors the Robots Exclusion Protocol (longest-match Allow/Disallow with
wildcard and end-anchor support), caps per-host concurrency, spaces
request starts per host, streams bodies with a size guard, validates
payloads by decoding them, and digests raw bytes with sha512. Fetched
bytes land in a content-addressed store keyed by the digest.
"""

from __future__ import annotations

import hashlib
import io
import json
import re
import threading
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable
from urllib.parse import urlsplit, urljoin

import httpx
from PIL import Image

from .model import ImageRecord
from .stats import StageStats


@dataclass
class FetchPolicy:
    user_agent: str = "mmcorpus-bot/0.1"
    per_host_concurrency: int = 2
    per_host_delay_ms: int = 1000
    timeout_ms: int = 30000
    max_bytes: int = 20 * 1024 * 1024
    respect_robots: bool = True
    retries: int = 2
    retry_backoff_s: float = 0.1
    redirect_limit: int = 5
    robots_ttl_s: float = 3600.0


@dataclass
class FetchResult:
    url: str
    outcome: str  # ok | denied_robots | timeout | too_large | not_image | http_error | network_error
    record: ImageRecord | None = None
    status: int | None = None
    detail: str = ""
    body: bytes | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.outcome == "ok"


_WILDCARD_SPLIT = re.compile(r"(\*|\$$)")


@lru_cache(maxsize=4096)
def _compile_robots_pattern(pattern: str) -> re.Pattern:
    regex = ""
    for part in _WILDCARD_SPLIT.split(pattern):
        if part == "*":
            regex += ".*"
        elif part == "$":
            regex += "$"
        else:
            regex += re.escape(part)
    return re.compile(regex)


class RobotsRules:
    """Parsed robots.txt: agent groups of (allow, pattern) rules."""

    def __init__(self, groups: dict[str, list[tuple[bool, str]]]):
        self._groups = groups

    @classmethod
    def parse(cls, text: str) -> "RobotsRules":
        groups: dict[str, list[tuple[bool, str]]] = {}
        current: list[str] = []
        rules_seen_for_current = False
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line or ":" not in line:
                continue
            name, _, value = line.partition(":")
            name = name.strip().lower()
            value = value.strip()
            if name == "user-agent":
                if rules_seen_for_current:
                    current = []
                    rules_seen_for_current = False
                current.append(value.lower())
                for agent in current:
                    groups.setdefault(agent, [])
            elif name in ("allow", "disallow"):
                if not current:
                    continue
                rules_seen_for_current = True
                if value:
                    for agent in current:
                        groups[agent].append((name == "allow", value))
        return cls(groups)

    @staticmethod
    def _pattern_matches(pattern: str, path: str) -> bool:
        return _compile_robots_pattern(pattern).match(path) is not None

    def _group_for(self, user_agent: str) -> list[tuple[bool, str]] | None:
        ua = user_agent.lower()
        best: str | None = None
        for agent in self._groups:
            if agent != "*" and agent in ua:
                if best is None or len(agent) > len(best):
                    best = agent
        if best is not None:
            return self._groups[best]
        return self._groups.get("*")

    def allows(self, path: str, user_agent: str) -> bool:
        """Longest-match evaluation; ties prefer Allow; no match allows."""
        group = self._group_for(user_agent)
        if not group:
            return True
        best_len = -1
        best_allow = True
        for allow, pattern in group:
            if self._pattern_matches(pattern, path):
                if len(pattern) > best_len or (len(pattern) == best_len and allow):
                    best_len = len(pattern)
                    best_allow = allow
        return best_allow if best_len >= 0 else True


class RobotsCache:
    """Per-host robots rules with TTL; fetch failures degrade to allow."""

    def __init__(self, policy: FetchPolicy, client: httpx.Client):
        self._policy = policy
        self._client = client
        self._cache: dict[str, tuple[float, RobotsRules | None]] = {}
        self._lock = threading.Lock()
        self.fetch_failures = 0

    def _fetch_rules(self, origin: str) -> RobotsRules | None:
        try:
            resp = self._client.get(
                origin + "/robots.txt",
                headers={"User-Agent": self._policy.user_agent},
                timeout=self._policy.timeout_ms / 1000.0,
            )
            if resp.status_code == 200:
                return RobotsRules.parse(resp.text)
            return None  # missing robots.txt: allow
        except Exception:
            self.fetch_failures += 1
            return None

    def rules_for(self, url: str) -> RobotsRules | None:
        parts = urlsplit(url)
        origin = f"{parts.scheme}://{parts.netloc}"
        now = time.monotonic()
        with self._lock:
            hit = self._cache.get(origin)
            if hit is not None and hit[0] > now:
                return hit[1]
        rules = self._fetch_rules(origin)
        with self._lock:
            self._cache[origin] = (now + self._policy.robots_ttl_s, rules)
        return rules

    def allows(self, url: str, user_agent: str) -> bool:
        rules = self.rules_for(url)
        if rules is None:
            return True
        parts = urlsplit(url)
        path = parts.path or "/"
        if parts.query:
            path += "?" + parts.query
        return rules.allows(path, user_agent)


def robots_allows(cache: RobotsCache, url: str, user_agent: str) -> bool:
    return cache.allows(url, user_agent)


class HostGate:
    """Per-host politeness: bounded in-flight slots, spaced request starts.

    Issue timestamps are recorded so tests can assert the start-to-start
    spacing contract exactly.
    """

    def __init__(self, concurrency: int, delay_s: float):
        self._sem = threading.BoundedSemaphore(max(1, concurrency))
        self._lock = threading.Lock()
        self._next_start = 0.0
        self._delay = delay_s
        self.issue_times: list[float] = []

    def __enter__(self):
        self._sem.acquire()
        # issuance is serialized: the next request may only start delay_s
        # after the previous one actually started, so start-to-start gaps
        # are never compressed by sleep jitter
        with self._lock:
            while True:
                wait = self._next_start - time.monotonic()
                if wait <= 0:
                    break
                time.sleep(wait)
            actual = time.monotonic()
            self._next_start = actual + self._delay
            self.issue_times.append(actual)
        return self

    def __exit__(self, *exc):
        self._sem.release()
        return False


def _stream_body(client: httpx.Client, url: str, policy: FetchPolicy) -> tuple[int, dict, bytes | None]:
    """GET one URL without redirects; body is None when over max_bytes."""
    with client.stream(
        "GET", url,
        headers={"User-Agent": policy.user_agent},
        timeout=policy.timeout_ms / 1000.0,
        follow_redirects=False,
    ) as resp:
        if resp.status_code // 100 == 3:
            return resp.status_code, dict(resp.headers), b""
        declared = resp.headers.get("content-length")
        if declared is not None and declared.isdigit() and int(declared) > policy.max_bytes:
            return resp.status_code, dict(resp.headers), None
        chunks = bytearray()
        for chunk in resp.iter_bytes():
            chunks.extend(chunk)
            if len(chunks) > policy.max_bytes:
                return resp.status_code, dict(resp.headers), None
        return resp.status_code, dict(resp.headers), bytes(chunks)


def fetch(
    url: str,
    policy: FetchPolicy,
    client: httpx.Client,
    robots: RobotsCache | None = None,
) -> FetchResult:
    """Fetch one image URL per policy. Never contacts robots-disallowed URLs."""
    current = url
    redirects = 0
    while True:
        if policy.respect_robots and robots is not None:
            if not robots.allows(current, policy.user_agent):
                return FetchResult(url=url, outcome="denied_robots")
        status = None
        headers: dict = {}
        body: bytes | None = b""
        last_error = ""
        for attempt in range(policy.retries + 1):
            try:
                status, headers, body = _stream_body(client, current, policy)
                last_error = ""
                break
            except httpx.TimeoutException as exc:
                return FetchResult(url=url, outcome="timeout", detail=str(exc))
            except httpx.HTTPError as exc:
                last_error = str(exc)
                if attempt < policy.retries:
                    time.sleep(policy.retry_backoff_s * (2 ** attempt))
        if last_error:
            return FetchResult(url=url, outcome="network_error", detail=last_error)
        assert status is not None
        if status // 100 == 3:
            location = headers.get("location")
            if not location:
                return FetchResult(url=url, outcome="http_error", status=status)
            redirects += 1
            if redirects > policy.redirect_limit:
                return FetchResult(url=url, outcome="http_error", status=status,
                                   detail="redirect limit exceeded")
            nxt = urljoin(current, location)
            # robots re-check happens at loop top; cross-host redirects
            # consult the new host's rules.
            current = nxt
            continue
        if status != 200:
            return FetchResult(url=url, outcome="http_error", status=status)
        if body is None:
            return FetchResult(url=url, outcome="too_large", status=status)
        try:
            with Image.open(io.BytesIO(body)) as img:
                img.load()
                width, height = img.size
        except Exception as exc:
            return FetchResult(url=url, outcome="not_image", status=status, detail=str(exc))
        record = ImageRecord(
            url=url,
            bytes_sha512=hashlib.sha512(body).hexdigest(),
            width=width,
            height=height,
        )
        return FetchResult(url=url, outcome="ok", record=record, status=status, body=body)


class ImageStore:
    """Content-addressed image store: <first2>/<sha512>.bin plus an index."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._index: dict[str, dict] = {}

    def path_for(self, sha512: str) -> Path:
        return self.root / sha512[:2] / f"{sha512}.bin"

    def put(self, data: bytes, record: ImageRecord) -> Path:
        path = self.path_for(record.bytes_sha512)
        with self._lock:
            if not path.exists():
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(".tmp")
                tmp.write_bytes(data)
                tmp.replace(path)
            self._index[record.bytes_sha512] = {
                "sha512": record.bytes_sha512,
                "url": record.url,
                "width": record.width,
                "height": record.height,
            }
        return path

    def write_index(self) -> None:
        lines = [json.dumps(self._index[k], sort_keys=True) for k in sorted(self._index)]
        (self.root / "index.jsonl").write_text(
            "\n".join(lines) + ("\n" if lines else ""), encoding="utf-8"
        )

    def load_index(self) -> dict[str, dict]:
        path = self.root / "index.jsonl"
        if not path.exists():
            return {}
        out = {}
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                entry = json.loads(line)
                out[entry["sha512"]] = entry
        self._index.update(out)
        return out


def fetch_all(
    urls: Iterable[str],
    policy: FetchPolicy,
    store: ImageStore | None = None,
    workers: int = 8,
    stats: StageStats | None = None,
    gates_registry: dict[str, HostGate] | None = None,
) -> dict[str, FetchResult]:
    """Fetch unique URLs concurrently under the per-host politeness contract.

    ``gates_registry``, when given, receives the per-host gates so callers
    can inspect recorded issue times.
    """
    from concurrent.futures import ThreadPoolExecutor

    unique = list(dict.fromkeys(urls))
    gates: dict[str, HostGate] = gates_registry if gates_registry is not None else {}
    gates_lock = threading.Lock()
    results: dict[str, FetchResult] = {}

    with httpx.Client() as client:
        robots = RobotsCache(policy, client) if policy.respect_robots else None

        def work(u: str) -> None:
            host = urlsplit(u).netloc
            with gates_lock:
                gate = gates.setdefault(
                    host,
                    HostGate(policy.per_host_concurrency, policy.per_host_delay_ms / 1000.0),
                )
            with gate:
                res = fetch(u, policy, client, robots)
            if res.ok and store is not None and res.record is not None and res.body is not None:
                store.put(res.body, res.record)
            results[u] = res

        if workers <= 1:
            for u in unique:
                work(u)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(work, unique))

    if stats is not None:
        for u in unique:
            stats.add_in(1)
            res = results[u]
            if not res.ok:
                reason = res.outcome
                if res.outcome == "http_error" and res.status is not None:
                    reason = f"http_error_{res.status}"
                stats.drop(reason, 1)
    return results
