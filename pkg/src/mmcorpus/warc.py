"""Streaming WARC reader tolerant of corrupt records.

Reads WARC/1.0 and WARC/1.1 files, plain or gzip-compressed (including
the per-record gzip member layout crawl archives use), and yields only
HTML ``response`` records. Corrupt records are skipped with a counter;
the reader resynchronizes on the next record header.
"""

from __future__ import annotations

import gzip
import io
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .stats import StageStats

_GZIP_MAGIC = b"\x1f\x8b"
_RECORD_MAGIC = b"WARC/1."


class WarcError(RuntimeError):
    pass


@dataclass(frozen=True)
class WarcRecordRef:
    """One HTML response record: identity, URI and the decoded HTTP body."""

    record_id: str
    target_uri: str
    payload: bytes
    content_type: str
    http_status: int


class _Stream:
    """Byte stream with push-back, flagging mid-stream decompression failures."""

    def __init__(self, f):
        self._f = f
        self._buf = b""
        self.truncated = False

    def read(self, n: int) -> bytes:
        out = self._buf[:n]
        self._buf = self._buf[n:]
        while len(out) < n and not self.truncated:
            try:
                chunk = self._f.read(n - len(out))
            except (EOFError, OSError, zlib.error):
                self.truncated = True
                break
            if not chunk:
                break
            out += chunk
        return out

    def readline(self, limit: int = 65536) -> bytes:
        while b"\n" not in self._buf and len(self._buf) < limit:
            if self.truncated:
                break
            try:
                chunk = self._f.read(8192)
            except (EOFError, OSError, zlib.error):
                self.truncated = True
                break
            if not chunk:
                break
            self._buf += chunk
        idx = self._buf.find(b"\n")
        if idx < 0:
            line, self._buf = self._buf, b""
        else:
            line, self._buf = self._buf[: idx + 1], self._buf[idx + 1 :]
        return line

    def push(self, data: bytes) -> None:
        self._buf = data + self._buf


def _parse_headers(stream: _Stream) -> dict[str, str] | None:
    headers: dict[str, str] = {}
    while True:
        line = stream.readline()
        if not line:
            return None
        line = line.rstrip(b"\r\n")
        if not line:
            return headers
        if b":" not in line:
            return None
        name, _, value = line.partition(b":")
        headers[name.strip().decode("latin-1").lower()] = value.strip().decode("latin-1")


def _dechunk(body: bytes) -> bytes:
    out = io.BytesIO()
    view = io.BytesIO(body)
    while True:
        size_line = view.readline().strip()
        if not size_line:
            break
        try:
            size = int(size_line.split(b";")[0], 16)
        except ValueError:
            return body  # not actually chunked; keep raw
        if size == 0:
            break
        chunk = view.read(size)
        out.write(chunk)
        view.read(2)  # trailing CRLF
        if len(chunk) < size:
            break
    return out.getvalue()


def _parse_http_response(block: bytes) -> tuple[int, dict[str, str], bytes] | None:
    head, sep, body = block.partition(b"\r\n\r\n")
    if not sep:
        head, sep, body = block.partition(b"\n\n")
        if not sep:
            return None
    lines = head.split(b"\n")
    status_line = lines[0].strip()
    parts = status_line.split(None, 2)
    if len(parts) < 2 or not parts[0].startswith(b"HTTP/"):
        return None
    try:
        status = int(parts[1])
    except ValueError:
        return None
    headers: dict[str, str] = {}
    for raw in lines[1:]:
        raw = raw.strip(b"\r")
        if b":" in raw:
            name, _, value = raw.partition(b":")
            headers[name.strip().decode("latin-1").lower()] = value.strip().decode("latin-1")
    if "chunked" in headers.get("transfer-encoding", "").lower():
        body = _dechunk(body)
    return status, headers, body


def _is_html(content_type: str) -> bool:
    ct = content_type.lower()
    return ct.startswith("text/html") or ct.startswith("application/xhtml")


def _open_stream(path: Path) -> _Stream:
    raw = open(path, "rb")
    magic = raw.read(2)
    raw.seek(0)
    if magic == _GZIP_MAGIC:
        return _Stream(gzip.GzipFile(fileobj=raw, mode="rb"))
    return _Stream(raw)


def iterate_records(
    warc_path: str | Path,
    stats: StageStats | None = None,
) -> Iterator[WarcRecordRef]:
    """Yield HTML response records from a WARC file in file order.

    Request/metadata records and non-HTML responses are skipped silently;
    corrupt records are skipped and counted as drops in ``stats``.
    An unreadable file raises WarcError.
    """
    path = Path(warc_path)
    try:
        stream = _open_stream(path)
    except OSError as exc:
        raise WarcError(f"cannot open WARC file {path}: {exc}") from exc

    def corrupt(reason: str) -> None:
        if stats is not None:
            stats.add_in(1)
            stats.drop(reason, 1)

    def resync(data: bytes) -> None:
        idx = data.find(_RECORD_MAGIC)
        if idx >= 0:
            stream.push(data[idx:])
            return
        while True:
            line = stream.readline()
            if not line:
                return
            if line.startswith(_RECORD_MAGIC):
                stream.push(line)
                return

    while True:
        line = stream.readline()
        if not line:
            if stream.truncated:
                corrupt("truncated_stream")
            return
        if not line.strip():
            continue
        if not line.startswith(_RECORD_MAGIC):
            corrupt("bad_record_header")
            resync(b"")
            continue
        headers = _parse_headers(stream)
        if headers is None or "content-length" not in headers:
            corrupt("bad_record_header")
            resync(b"")
            continue
        try:
            length = int(headers["content-length"])
        except ValueError:
            corrupt("bad_record_header")
            resync(b"")
            continue
        block = stream.read(length)
        if len(block) < length:
            corrupt("truncated_record")
            resync(block)
            continue
        trailer = stream.read(4)
        if trailer not in (b"\r\n\r\n", b""):
            corrupt("bad_record_trailer")
            resync(block + trailer)
            continue

        if headers.get("warc-type") != "response":
            continue
        parsed = _parse_http_response(block)
        if parsed is None:
            continue
        status, http_headers, body = parsed
        content_type = http_headers.get("content-type", "")
        if status // 100 != 2 or not _is_html(content_type):
            continue
        if stats is not None:
            stats.add_in(1)
        yield WarcRecordRef(
            record_id=headers.get("warc-record-id", ""),
            target_uri=headers.get("warc-target-uri", ""),
            payload=body,
            content_type=content_type,
            http_status=status,
        )


def write_warc(path: str | Path, records: list[dict], compress: bool = True) -> None:
    """Write a WARC file from record dicts (fixture/test tooling).

    Each dict: {record_id, target_uri, warc_type, content_type, status,
    http_headers, body} with sensible defaults for response records.
    A dict may instead carry a raw ``block`` plus ``declared_length`` to
    produce deliberately corrupt records.
    """
    out = io.BytesIO()
    for rec in records:
        if "block" in rec:
            block = rec["block"]
            declared = rec.get("declared_length", len(block))
        else:
            status = rec.get("status", 200)
            http_headers = dict(rec.get("http_headers", {}))
            http_headers.setdefault("Content-Type", rec.get("content_type", "text/html"))
            body = rec["body"]
            http_headers.setdefault("Content-Length", str(len(body)))
            head = f"HTTP/1.1 {status} OK\r\n" + "".join(
                f"{k}: {v}\r\n" for k, v in http_headers.items()
            )
            block = head.encode("latin-1") + b"\r\n" + body
            declared = len(block)
        warc_headers = (
            f"WARC/1.0\r\n"
            f"WARC-Type: {rec.get('warc_type', 'response')}\r\n"
            f"WARC-Record-ID: {rec.get('record_id', '<urn:uuid:fixture>')}\r\n"
            f"WARC-Target-URI: {rec.get('target_uri', 'http://example.invalid/')}\r\n"
            f"Content-Type: application/http; msgtype=response\r\n"
            f"Content-Length: {declared}\r\n"
            f"\r\n"
        )
        out.write(warc_headers.encode("latin-1"))
        out.write(block)
        out.write(b"\r\n\r\n")
    data = out.getvalue()
    if compress:
        buf = io.BytesIO()
        with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0) as gz:
            gz.write(data)
        data = buf.getvalue()
    Path(path).write_bytes(data)
