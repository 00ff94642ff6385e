"""Model-score clients: a deterministic built-in stub and a sidecar client.

The pipeline consumes five scoring operations (language id, text/image
embeddings, NSFW and CSAM probabilities) through the Scorer interface.
``StubScorer`` implements all of them with hash-derived deterministic
outputs so the full pipeline and test suite run without any ML models;
``RemoteScorer`` speaks newline-delimited JSON to a local inference
sidecar exposing the same operations.

Stub outputs honor fixture markers so synthetic corpora can steer them:

* ``lang:<code>`` in a text forces the stub language verdict.
* ``align:<key>`` in a text or in raw image bytes makes the stub
  embedding a function of the key alone, so any two inputs sharing a key
  embed identically (cosine 1.0).
* ``nsfw-marker`` / ``csam-marker`` in image bytes force scores above
  the corresponding default thresholds.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import socket
import struct
import threading
from pathlib import Path
from typing import Protocol

import numpy as np

from .langtable import default_languages

LANG_MARKER_RE = re.compile(r"lang:([a-z]{2,8}_[A-Za-z]{4})")
ALIGN_MARKER_RE = re.compile(rb"align:([a-z0-9-]+)")
NSFW_MARKER = b"nsfw-marker"
CSAM_MARKER = b"csam-marker"


class ScorerError(RuntimeError):
    pass


class Scorer(Protocol):
    def lid(self, text: str) -> list[tuple[str, float]]: ...
    def embed_text(self, text: str) -> np.ndarray: ...
    def embed_image(self, path: str) -> np.ndarray: ...
    def nsfw_image(self, path: str) -> dict[str, float]: ...
    def csam_image(self, path: str) -> dict[str, float]: ...


def _u64(digest: bytes) -> int:
    return int.from_bytes(digest[:8], "big")


def stub_embed(data: bytes, dim: int) -> np.ndarray:
    """Deterministic pseudo-random unit vector for ``data``.

    Component i is derived from SHA-256(data || LE32(i)) mapped to
    [-1, 1); the vector is L2-normalized in double precision and then
    truncated to single precision, matching what a sidecar serializes.
    The norm uses plain left-to-right summation so any reimplementation
    (whatever the language) reproduces the doubles bit for bit.
    """
    if dim < 2:
        raise ScorerError("embedding dim must be >= 2")
    comps = [0.0] * dim
    for i in range(dim):
        h = hashlib.sha256(data + struct.pack("<I", i)).digest()
        comps[i] = _u64(h) / 2.0**63 - 1.0
    total = 0.0
    for c in comps:
        total += c * c
    if total == 0.0:
        comps[0] = 1.0
        total = 1.0
    norm = math.sqrt(total)
    return np.array([c / norm for c in comps], dtype=np.float32)


def stub_lid(text: str, table: tuple[str, ...] | None = None) -> list[tuple[str, float]]:
    """Deterministic top-3 language prediction for ``text``."""
    if not text:
        raise ScorerError("empty text")
    table = table or default_languages()
    marker = LANG_MARKER_RE.search(text)
    if marker and marker.group(1) in table:
        idx = table.index(marker.group(1))
    else:
        idx = _u64(hashlib.sha256(text.encode("utf-8")).digest()) % len(table)
    n = len(table)
    return [
        (table[idx], 0.8),
        (table[(idx + 1) % n], 0.15),
        (table[(idx + 2) % n], 0.05),
    ]


def _embed_input(data: bytes) -> bytes:
    m = ALIGN_MARKER_RE.search(data)
    if m:
        return b"align-key:" + m.group(1)
    return data


def _tiny_score(data: bytes, tag: str) -> float:
    """Hash-derived probability in [0, 0.2): always below every gate."""
    h = hashlib.sha256(data + b"|" + tag.encode("ascii")).digest()
    return (_u64(h) / 2.0**64) * 0.2


class StubScorer:
    """In-process deterministic scorer; the test double for the sidecar."""

    def __init__(self, dim: int = 64, table: tuple[str, ...] | None = None):
        self.dim = dim
        self.table = table or default_languages()

    def lid(self, text: str) -> list[tuple[str, float]]:
        return stub_lid(text, self.table)

    def embed_text(self, text: str) -> np.ndarray:
        return stub_embed(_embed_input(text.encode("utf-8")), self.dim)

    def embed_image(self, path: str) -> np.ndarray:
        return stub_embed(_embed_input(Path(path).read_bytes()), self.dim)

    def nsfw_image(self, path: str) -> dict[str, float]:
        data = Path(path).read_bytes()
        if NSFW_MARKER in data:
            return {
                "porn": 0.55,
                "hentai": 0.30,
                "nudenet_exposed_max": 0.9,
                "safer_porn": 0.2,
            }
        return {
            "porn": _tiny_score(data, "porn"),
            "hentai": _tiny_score(data, "hentai"),
            "nudenet_exposed_max": _tiny_score(data, "nudenet"),
            "safer_porn": _tiny_score(data, "safer_porn"),
        }

    def csam_image(self, path: str) -> dict[str, float]:
        data = Path(path).read_bytes()
        if CSAM_MARKER in data:
            return {"safer_csam": 0.9}
        return {"safer_csam": _tiny_score(data, "safer_csam")}


class RemoteScorer:
    """Client for the newline-delimited JSON sidecar protocol.

    One TCP connection; requests carry unique ids and responses may
    arrive out of order, so a reader thread routes them to waiters.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0):
        host, _, port = endpoint.rpartition(":")
        self._sock = socket.create_connection((host, int(port)), timeout=timeout)
        self._wfile = self._sock.makefile("wb")
        self._rfile = self._sock.makefile("rb")
        self._timeout = timeout
        self._next_id = 1
        self._send_lock = threading.Lock()
        self._pending: dict[int, dict] = {}
        self._events: dict[int, threading.Event] = {}
        self._dead: Exception | None = None
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        try:
            for line in self._rfile:
                resp = json.loads(line)
                rid = int(resp.get("id", 0))
                with self._send_lock:
                    ev = self._events.get(rid)
                    if ev is not None:
                        self._pending[rid] = resp
                        ev.set()
        except Exception as exc:  # connection torn down
            with self._send_lock:
                self._dead = exc
                for ev in self._events.values():
                    ev.set()

    def call(self, op: str, payload: dict) -> object:
        with self._send_lock:
            if self._dead is not None:
                raise ScorerError(f"sidecar connection lost: {self._dead}")
            rid = self._next_id
            self._next_id += 1
            ev = threading.Event()
            self._events[rid] = ev
            req = {"id": rid, "op": op, **payload}
            self._wfile.write(json.dumps(req).encode("utf-8") + b"\n")
            self._wfile.flush()
        timed_out = not ev.wait(self._timeout)
        with self._send_lock:
            self._events.pop(rid, None)
            resp = self._pending.pop(rid, None)
        if timed_out:
            raise ScorerError(f"sidecar timeout on op {op}")
        if resp is None:
            raise ScorerError(f"sidecar connection lost: {self._dead}")
        if not resp.get("ok"):
            raise ScorerError(f"sidecar error on {op}: {resp.get('error')}")
        return resp.get("result")

    def ping(self) -> bool:
        return self.call("ping", {}) == "pong"

    def lid(self, text: str) -> list[tuple[str, float]]:
        result = self.call("lid", {"text": text})
        return [(str(code), float(p)) for code, p in result]

    def _embed(self, op: str, payload: dict) -> np.ndarray:
        result = self.call(op, payload)
        return np.asarray(result, dtype=np.float32)

    def embed_text(self, text: str) -> np.ndarray:
        return self._embed("embed_text", {"text": text})

    def embed_image(self, path: str) -> np.ndarray:
        return self._embed("embed_image", {"path": path})

    def nsfw_image(self, path: str) -> dict[str, float]:
        result = self.call("nsfw_image", {"path": path})
        return {str(k): float(v) for k, v in result.items()}

    def csam_image(self, path: str) -> dict[str, float]:
        result = self.call("csam_image", {"path": path})
        return {str(k): float(v) for k, v in result.items()}

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class CachingScorer:
    """Wraps a scorer with sha512-keyed caching of image scores.

    Image scoring is the expensive path on re-runs; embeddings and lid
    are cheap enough (or stubbed) that caching them buys nothing here.
    """

    def __init__(self, inner: Scorer):
        self._inner = inner
        self._nsfw: dict[str, dict[str, float]] = {}
        self._csam: dict[str, dict[str, float]] = {}
        self._lock = threading.Lock()

    def __getattr__(self, name):
        return getattr(self._inner, name)

    def _digest(self, path: str) -> str:
        return hashlib.sha512(Path(path).read_bytes()).hexdigest()

    def nsfw_image(self, path: str) -> dict[str, float]:
        key = self._digest(path)
        with self._lock:
            if key in self._nsfw:
                return self._nsfw[key]
        val = self._inner.nsfw_image(path)
        with self._lock:
            self._nsfw[key] = val
        return val

    def csam_image(self, path: str) -> dict[str, float]:
        key = self._digest(path)
        with self._lock:
            if key in self._csam:
                return self._csam[key]
        val = self._inner.csam_image(path)
        with self._lock:
            self._csam[key] = val
        return val
