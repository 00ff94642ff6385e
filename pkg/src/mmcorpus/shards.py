"""Sharded corpus serialization: gzip JSONL, one document per line.

Shard files are written atomically (tmp + rename) with a fixed gzip mtime
so identical document streams produce byte-identical files.
"""

from __future__ import annotations

import gzip
import json
import os
from pathlib import Path
from typing import Iterable, Iterator

from .model import Document


class ShardWriteError(RuntimeError):
    pass


class ShardReadError(RuntimeError):
    def __init__(self, path: str, lineno: int | None, message: str):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno if lineno is not None else '?'}: {message}")


def shard_file_name(lang: str, seq: int) -> str:
    return f"{lang}_{seq:05d}.jsonl.gz"


def write_shard(
    documents: Iterable[Document],
    lang: str,
    shard_dir: str | Path,
    max_docs_per_file: int = 100_000,
) -> dict:
    """Serialize documents for one language into `<lang>/<lang>_<seq>.jsonl.gz`.

    Returns a manifest: file names, per-file document counts and byte sizes.
    Raises ShardWriteError (and leaves no partial file) on any failure;
    every document must already carry the shard language.
    """
    lang_dir = Path(shard_dir) / lang
    manifest: dict = {"lang": lang, "files": [], "documents": 0}

    seq = 0
    batch: list[bytes] = []

    def flush() -> None:
        nonlocal seq
        if not batch:
            return
        lang_dir.mkdir(parents=True, exist_ok=True)
        name = shard_file_name(lang, seq)
        final = lang_dir / name
        tmp = lang_dir / (name + ".tmp")
        try:
            with open(tmp, "wb") as raw:
                # mtime pinned to 0: identical inputs give identical bytes
                with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as gz:
                    for line in batch:
                        gz.write(line)
                        gz.write(b"\n")
            os.replace(tmp, final)
        except BaseException:
            tmp.unlink(missing_ok=True)
            raise
        manifest["files"].append({
            "name": f"{lang}/{name}",
            "documents": len(batch),
            "bytes": final.stat().st_size,
        })
        manifest["documents"] += len(batch)
        seq += 1
        batch.clear()

    try:
        for doc in documents:
            if doc.lang != lang:
                raise ShardWriteError(
                    f"document {doc.id} has lang {doc.lang!r}, shard is {lang!r}"
                )
            try:
                batch.append(doc.to_json_line())
            except UnicodeEncodeError as exc:
                raise ShardWriteError(
                    f"document {doc.id} contains non-UTF-8-encodable text: {exc}"
                ) from exc
            if len(batch) >= max_docs_per_file:
                flush()
        flush()
    except ShardWriteError:
        raise
    except OSError as exc:
        raise ShardWriteError(f"I/O failure writing shard {lang}: {exc}") from exc
    return manifest


def read_shard(path: str | Path) -> Iterator[Document]:
    """Yield documents from a shard file; write∘read is the identity.

    Raises ShardReadError with the offending line number on malformed
    lines, and on truncated gzip streams.
    """
    path = Path(path)
    try:
        with gzip.open(path, "rb") as gz:
            data = gz.read()
    except (OSError, EOFError, gzip.BadGzipFile) as exc:
        raise ShardReadError(str(path), None, f"unreadable gzip stream: {exc}") from exc
    for lineno, raw in enumerate(data.split(b"\n"), start=1):
        if not raw.strip():
            continue
        try:
            yield Document.from_json_obj(json.loads(raw))
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            raise ShardReadError(
                str(path), lineno, f"malformed document line: {exc}"
            ) from exc


def read_shard_dir(shard_dir: str | Path) -> Iterator[Document]:
    """Read every shard file under a directory tree, in sorted file order."""
    for path in sorted(Path(shard_dir).rglob("*.jsonl.gz")):
        yield from read_shard(path)
