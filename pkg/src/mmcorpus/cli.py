"""Command-line interface.

`pipeline run` drives the full stage graph from a TOML config; the other
subcommands expose individual stages over document files for ad-hoc use.
Document files are gzip JSONL, one document per line.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import dedup as dd
from . import imagefilter as imf
from .config import ConfigError, load_config
from .extract import ExtractGates, TagPolicy, extract_document
from .fetcher import FetchPolicy, ImageStore, fetch_all
from .metrics import (distinct_ngram_ratio, distributions, vendi_score,
                      word_tokens, write_histogram_csv)
from .pipeline import StageFailure, _read_docs, _write_docs, run
from .scorer import StubScorer
from .stats import StatsBook
from .warc import iterate_records


@click.group()
def main():
    """Web-crawl to interleaved text-image corpus pipeline."""


@main.command()
@click.option("--warc", "warcs", multiple=True, required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--min-doc-bytes", default=500, show_default=True)
@click.option("--min-text-nodes", default=3, show_default=True)
@click.option("--max-image-nodes", default=30, show_default=True)
def extract(warcs, out, min_doc_bytes, min_text_nodes, max_image_nodes):
    """Extract interleaved documents from WARC files."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    book = StatsBook()
    rec_stats = book.stage("warc_records", "documents")
    ex_stats = book.stage("extract", "documents")
    gates = ExtractGates(min_doc_bytes, min_text_nodes, max_image_nodes)
    policy = TagPolicy()
    docs = []
    for warc in warcs:
        for record in iterate_records(warc, stats=rec_stats):
            doc, _ = extract_document(record, policy, gates, stats=ex_stats)
            if doc is not None:
                doc.meta["dump"] = Path(warc).stem
                docs.append(doc)
    _write_docs(out_dir / "docs.jsonl.gz", docs)
    book.dump(out_dir / "stats.json")
    click.echo(f"extracted {len(docs)} documents from {len(warcs)} WARC file(s)")


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--lang", default=None, help="restrict to one language")
@click.option("--threshold", default=0.8, show_default=True)
@click.option("--perms", default=256, show_default=True)
@click.option("--features", default=2_097_152, show_default=True)
@click.option("--seed", default=0, show_default=True)
def dedup(in_path, out, lang, threshold, perms, features, seed):
    """Corpus-level MinHash LSH dedup; writes a drop-list of document ids."""
    docs = _read_docs(Path(in_path))
    hasher = dd.MinHasher(num_perm=perms, seed=seed)
    indexes: dict[str, dd.LshIndex] = {}
    dropped = []
    for doc in docs:
        if lang is not None and doc.lang != lang:
            continue
        index = indexes.setdefault(
            doc.lang, dd.LshIndex(num_perm=perms, threshold=threshold)
        )
        sig = hasher.signature(dd.feature_set(doc.canonical_text(), features))
        if index.query_insert(doc.id, sig) is not None:
            dropped.append(doc.id)
    Path(out).write_text("".join(f"{d}\n" for d in dropped), encoding="utf-8")
    click.echo(f"flagged {len(dropped)} near-duplicate documents")


@main.command("fetch-images")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--img-store", required=True, type=click.Path())
@click.option("--out", default=None, type=click.Path(),
              help="write documents with fetched image metadata attached")
@click.option("--ua", default="mmcorpus-bot/0.1", show_default=True)
@click.option("--timeout-ms", default=30000, show_default=True)
@click.option("--max-bytes", default=20971520, show_default=True)
@click.option("--no-robots", is_flag=True, help="disable robots.txt checks")
@click.option("--workers", default=8, show_default=True)
def fetch_images(in_path, img_store, out, ua, timeout_ms, max_bytes, no_robots, workers):
    """Download the image URLs referenced by documents."""
    from .model import ImageNode

    docs = _read_docs(Path(in_path))
    policy = FetchPolicy(
        user_agent=ua, timeout_ms=timeout_ms, max_bytes=max_bytes,
        respect_robots=not no_robots,
    )
    store = ImageStore(img_store)
    urls = [n.url for d in docs for n in d.image_nodes()]
    book = StatsBook()
    results = fetch_all(urls, policy, store=store, workers=workers,
                        stats=book.stage("fetch_urls", "urls"))
    store.write_index()
    ok = sum(1 for r in results.values() if r.ok)
    if out is not None:
        for doc in docs:
            new_nodes = []
            for node in doc.nodes:
                if not isinstance(node, ImageNode):
                    new_nodes.append(node)
                    continue
                res = results.get(node.url)
                if res is None or not res.ok or res.record is None:
                    continue
                new_nodes.append(ImageNode(
                    url=node.url, sha512=res.record.bytes_sha512,
                    width=res.record.width, height=res.record.height,
                ))
            doc.nodes = new_nodes
        _write_docs(Path(out), docs)
    click.echo(f"fetched {ok}/{len(results)} unique urls")


@main.command("filter-images")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--img-store", required=True, type=click.Path(exists=True))
@click.option("--min-side", default=150, show_default=True)
@click.option("--cap", default=10, show_default=True)
def filter_images(in_path, out, img_store, min_side, cap):
    """Geometry + NSFW/CSAM gates, pHash computation, and dedup caps."""
    from .phash import PhashError, phash64_bytes
    from .model import ImageNode

    docs = _read_docs(Path(in_path))
    store = ImageStore(img_store)
    scorer = StubScorer()
    rule_cfg = imf.ImageRuleConfig(min_side=min_side)
    thresholds = imf.NsfwThresholds()
    survivors = []
    for doc in docs:
        new_nodes = []
        for node in doc.nodes:
            if not isinstance(node, ImageNode) or node.sha512 is None:
                new_nodes.append(node)
                continue
            if imf.geometry_filter(node.width, node.height, rule_cfg) is not None:
                continue
            try:
                ph = phash64_bytes(store.path_for(node.sha512).read_bytes())
            except (PhashError, OSError):
                ph = None
            new_nodes.append(ImageNode(url=node.url, sha512=node.sha512, phash=ph,
                                       width=node.width, height=node.height))
        doc.nodes = new_nodes
        verdicts = []
        for node in doc.image_nodes():
            path = str(store.path_for(node.sha512))
            scores = dict(scorer.nsfw_image(path))
            scores.update(scorer.csam_image(path))
            verdicts.append(imf.nsfw_gate(scores, thresholds))
        if "csam" in verdicts or "nsfw" in verdicts:
            continue
        survivors.append(doc)
    by_lang: dict[str, list] = {}
    for doc in survivors:
        by_lang.setdefault(doc.lang, []).append(doc)
    final = []
    for lang in sorted(by_lang):
        final.extend(imf.image_dedup(by_lang[lang], cap=cap))
    final.sort(key=lambda d: d.id)
    _write_docs(Path(out), final)
    click.echo(f"kept {len(final)} of {len(docs)} documents")


@main.command("joint-filter")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--img-store", required=True, type=click.Path(exists=True))
@click.option("--neg", default=63, show_default=True)
@click.option("--top", default=8, show_default=True)
@click.option("--pool-cap", default=10000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--two-pass/--one-pass", default=True, show_default=True)
@click.option("--dim", default=64, show_default=True)
def joint_filter(in_path, out, img_store, neg, top, pool_cap, seed, two_pass, dim):
    """Retrieval-style text-image consistency filter over a document file."""
    from . import jointfilter as jf
    from .model import ImageNode, TextNode

    docs = _read_docs(Path(in_path))
    store = ImageStore(img_store)
    scorer = StubScorer(dim=dim)
    embeddings = [jf.embed_document(d, scorer, lambda sha: str(store.path_for(sha)))
                  for d in docs]
    pools: dict[str, jf.NegativePool] = {}

    def pool_for(lang):
        return pools.setdefault(lang, jf.NegativePool(capacity=pool_cap, seed=seed))

    def add(doc, embs):
        text_embs, img_embs = embs
        pool = pool_for(doc.lang)
        for pos, node in enumerate(doc.nodes):
            if isinstance(node, TextNode) and pos in text_embs:
                pool.add_text(jf.PoolText(doc_id=doc.id, pos=pos,
                                          byte_len=len(node.text.encode("utf-8")),
                                          emb=text_embs[pos]))
            elif isinstance(node, ImageNode) and pos in img_embs:
                pool.add_image(jf.PoolImage(doc_id=doc.id, pos=pos, emb=img_embs[pos]))

    if two_pass:
        for doc, embs in zip(docs, embeddings):
            add(doc, embs)
    kept = []
    for doc, embs in zip(docs, embeddings):
        decisions = jf.judge_document(doc, embs[0], embs[1], pool_for(doc.lang),
                                      seed=seed, top=top, negatives=neg)
        if not two_pass:
            add(doc, embs)
        result, _reason, _t, _i = jf.apply_joint_filter(doc, decisions)
        if result is not None:
            kept.append(result)
    _write_docs(Path(out), kept)
    click.echo(f"kept {len(kept)} of {len(docs)} documents")


@main.command("build-contamination")
@click.option("--images", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def build_contamination(images, out):
    """Compute pHashes of benchmark images into a contamination file."""
    paths = sorted(p for p in Path(images).rglob("*") if p.is_file())
    contamination = imf.ContaminationSet.from_images(paths)
    contamination.to_file(out)
    click.echo(f"wrote {len(contamination.phashes)} pHashes")


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--phashes", required=True, type=click.Path(exists=True))
def decontaminate(in_path, out, phashes):
    """Drop images whose pHash matches the contamination set."""
    docs = _read_docs(Path(in_path))
    contamination = imf.ContaminationSet.from_file(phashes)
    book = StatsBook()
    docs = imf.decontaminate(docs, contamination,
                             stats=book.stage("decontaminate", "images"))
    _write_docs(Path(out), docs)
    st = book.get("decontaminate")
    click.echo(f"removed {st.items_dropped} of {st.items_in} images")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--set", "sets", multiple=True, metavar="KEY=VALUE",
              help="override any config key")
@click.argument("action", type=click.Choice(["run"]))
def pipeline(config_path, sets, action):
    """Run the full pipeline from a TOML config (exit 2 config, 3 stage)."""
    try:
        overrides = {}
        for item in sets:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            overrides[key] = value
        cfg = load_config(config_path, overrides=overrides)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    try:
        result = run(cfg)
    except StageFailure as exc:
        click.echo(f"stage failure: {exc}", err=True)
        sys.exit(3)
    total = sum(
        m["documents"] for m in result.shard_manifest.get("languages", {}).values()
    )
    click.echo(f"pipeline complete: {total} documents sharded -> {result.out_dir}")


@main.command()
@click.option("--run-dir", required=True, type=click.Path(exists=True))
def stats(run_dir):
    """Print the per-stage drop report of a pipeline run."""
    book = StatsBook.load(Path(run_dir) / "stats.json")
    for st in book.stages():
        click.echo(
            f"{st.name:28s} {st.granularity:10s} in={st.items_in:<8d} "
            f"dropped={st.items_dropped:<8d} "
            + " ".join(f"{k}={v}" for k, v in sorted(st.reasons.items()))
        )


@main.command()
@click.option("--shards", "shards_dir", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--sample", default=8192, show_default=True)
@click.option("--batch", default=4096, show_default=True)
@click.option("--dim", default=64, show_default=True)
@click.option("--seed", default=0, show_default=True)
def metrics(shards_dir, out, sample, batch, dim, seed):
    """Corpus metrology: distributions, n-gram diversity, stub-embedding Vendi."""
    import random as _random

    import numpy as np

    from .shards import read_shard_dir

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    docs = list(read_shard_dir(shards_dir))
    dist = distributions(docs)
    write_histogram_csv(out_dir / "tokens_hist.csv", dist.token_histogram(),
                        ("tokens_lo", "tokens_hi", "documents"))
    write_histogram_csv(out_dir / "images_hist.csv", dist.image_histogram(),
                        ("images_lo", "images_hi", "documents"))
    write_histogram_csv(out_dir / "joint_hist.csv", dist.joint_histogram(),
                        ("tokens_lo", "images_lo", "documents"))
    report: dict = {"seed": seed, "summary": dist.summary()}
    if docs:
        rng = _random.Random(seed)
        picked = rng.sample(docs, min(sample, len(docs)))
        report["distinct_ngram"] = distinct_ngram_ratio(
            [word_tokens(d.canonical_text()) for d in picked]
        )
        scorer = StubScorer(dim=dim)
        rows = [scorer.embed_text(d.canonical_text()) for d in picked[:batch]]
        report["vendi_score"] = vendi_score(np.stack(rows)) if rows else None
    (out_dir / "metrics.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    click.echo(f"metrics written to {out_dir}")


@main.command("make-fixture")
@click.option("--out", required=True, type=click.Path())
@click.option("--base-url", default="http://127.0.0.1:8099", show_default=True)
def make_fixture(out, base_url):
    """Build the bundled synthetic mini-crawl fixture (WARC + docroot)."""
    from .fixtures import build_golden_fixture

    fixture = build_golden_fixture(Path(out), base_url)
    click.echo(f"fixture at {fixture.warc_path}; serve {fixture.docroot} at {base_url}")


if __name__ == "__main__":
    main()
