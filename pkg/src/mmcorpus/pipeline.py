"""Stage graph orchestration.

Fixed order: extract -> lang_id -> text_filter -> dedup -> fetch ->
image_filter -> decontaminate -> joint_filter -> shard. Each stage reads
the previous stage's output documents, writes its own sorted by doc id
(deterministic merge regardless of worker count), and records drops.
Completion markers carry content hashes of stage outputs, so interrupted
runs resume at the first incomplete stage and reproduce identical bytes.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from . import dedup as dd
from . import imagefilter as imf
from . import jointfilter as jf
from . import textfilter as tf
from .config import PipelineConfig
from .extract import ExtractGates, TagPolicy, extract_document
from .fetcher import FetchPolicy, ImageStore, fetch_all
from .langid import LangIdError, classify_document
from .langtable import default_languages
from .model import Document, ImageNode, TextNode
from .phash import PhashError, phash64_bytes
from .scorer import CachingScorer, RemoteScorer, Scorer, ScorerError, StubScorer
from .shards import write_shard
from .stats import DOCUMENT_CHAIN, IMAGE_CHAIN, StatsBook
from .warc import iterate_records

STAGES = [
    "extract",
    "lang_id",
    "text_filter",
    "dedup",
    "fetch",
    "image_filter",
    "decontaminate",
    "joint_filter",
    "shard",
]

# Stats entries owned by each stage (reset when the stage re-executes).
_STAGE_STATS = {
    "extract": ["warc_records", "extract"],
    "lang_id": ["lang_id"],
    "text_filter": ["text_filter_nodes", "text_filter_docs"],
    "dedup": ["dedup_exact_docs", "node_dedup", "lsh_dedup"],
    "fetch": ["fetch_urls", "fetch_images"],
    "image_filter": ["image_filter_images", "image_filter_docs", "image_dedup"],
    "decontaminate": ["decontaminate"],
    "joint_filter": ["joint_filter_text_nodes", "joint_filter_images", "joint_filter_docs"],
    "shard": ["shard_routing"],
}


class StageFailure(RuntimeError):
    pass


@dataclass
class RunResult:
    out_dir: Path
    stats: StatsBook
    shard_manifest: dict


class _Ctx:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.stats = StatsBook()
        self.scorer = _make_scorer(cfg)
        self.store = ImageStore(self.out / "images")

    def stage_dir(self, name: str) -> Path:
        idx = STAGES.index(name)
        return self.out / "stages" / f"{idx:02d}_{name}"

    def docs_path(self, name: str) -> Path:
        return self.stage_dir(name) / "docs.jsonl.gz"


def _make_scorer(cfg: PipelineConfig) -> Scorer:
    if cfg.stub_mode:
        return CachingScorer(StubScorer(dim=cfg.embed_dim))
    return CachingScorer(RemoteScorer(cfg.sidecar_endpoint, timeout=cfg.timeout_ms / 1000.0))


def _write_docs(path: Path, docs: list[Document]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as raw:
        with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as gz:
            for doc in sorted(docs, key=lambda d: d.id):
                gz.write(doc.to_json_line())
                gz.write(b"\n")
    tmp.replace(path)


def _read_docs(path: Path) -> list[Document]:
    docs = []
    with gzip.open(path, "rb") as gz:
        for line in gz:
            if line.strip():
                docs.append(Document.from_json_obj(json.loads(line)))
    return docs


def _file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _par_map(fn: Callable, items: list, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _node_filter_config(cfg: PipelineConfig) -> tf.NodeFilterConfig:
    return tf.NodeFilterConfig(
        min_bytes_latin=cfg.min_bytes_latin,
        min_bytes_nonlatin=cfg.min_bytes_nonlatin,
        min_bytes_cleaned=cfg.min_bytes_cleaned,
        min_bytes_post=cfg.min_bytes_post,
        digit_ratio_max=cfg.digit_ratio_max,
        nonalpha_ratio_max=cfg.nonalpha_ratio_max,
        caps_ratio_max=cfg.caps_ratio_max,
        char_dominance_max=cfg.char_dominance_max,
        angle_symbol_max=cfg.angle_symbol_max,
    )


def _doc_filter_config(cfg: PipelineConfig) -> tf.DocFilterConfig:
    if cfg.nsfw_wordlist:
        terms = tf.load_wordlist(cfg.nsfw_wordlist)
    else:
        terms = tf.default_nsfw_terms()
    return tf.DocFilterConfig(
        min_text_nodes=cfg.min_doc_text_nodes,
        min_chars=cfg.min_doc_chars,
        nsfw_regex=tf.compile_nsfw_regex(terms),
    )


def per_language_extraction_plan(
    dumps: list[str],
    counts: dict[str, int],
    high_resource_k: int = 6,
    low_resource_threshold: int = 1_000_000,
) -> list[set[str] | None]:
    """Per-dump language allow-sets; None means all languages.

    Dump 1 takes everything; dump 2 everything except the top-k
    high-resource languages; later dumps only languages under the
    document-count threshold. Without counts every dump takes all.
    """
    plans: list[set[str] | None] = []
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    for idx in range(len(dumps)):
        if idx == 0 or not counts:
            plans.append(None)
        elif idx == 1:
            top = {code for code, _ in ranked[:high_resource_k]}
            plans.append({c for c in counts if c not in top} if top else None)
        else:
            plans.append({c for c, n in counts.items() if n < low_resource_threshold})
    return plans


# ---------------------------------------------------------------- stages


def _stage_extract(ctx: _Ctx) -> list[Document]:
    cfg = ctx.cfg
    rec_stats = ctx.stats.stage("warc_records", "documents")
    ex_stats = ctx.stats.stage("extract", "documents")
    gates = ExtractGates(cfg.min_doc_bytes, cfg.min_text_nodes, cfg.max_image_nodes)
    policy = TagPolicy()
    docs: list[Document] = []
    for warc in cfg.warcs:
        dump = Path(warc).stem
        records = list(iterate_records(warc, stats=rec_stats))
        results = _par_map(
            lambda rec: extract_document(rec, policy, gates, stats=ex_stats),
            records,
            cfg.threads,
        )
        for doc, _reason in results:
            if doc is not None:
                doc.meta["dump"] = dump
                docs.append(doc)
    return docs


def _stage_lang_id(ctx: _Ctx, docs: list[Document]) -> list[Document]:
    cfg = ctx.cfg
    stats = ctx.stats.stage("lang_id", "documents")
    plans: list[set[str] | None] | None = None
    dump_index: dict[str, int] = {Path(w).stem: i for i, w in enumerate(cfg.warcs)}
    if cfg.plan_counts_file:
        counts = json.loads(Path(cfg.plan_counts_file).read_text(encoding="utf-8"))
        plans = per_language_extraction_plan(
            cfg.warcs, counts, cfg.plan_high_resource_k, cfg.plan_low_resource_threshold
        )

    def classify(doc: Document):
        try:
            return classify_document(doc, ctx.scorer, retries=cfg.scorer_retries), None
        except LangIdError:
            return None, "no_text"
        except ScorerError:
            return None, "lid_unavailable"

    out = []
    for (classified, reason), doc in zip(_par_map(classify, docs, cfg.threads), docs):
        stats.add_in(1)
        if classified is None:
            stats.drop(reason, 1)
            continue
        if plans is not None:
            plan = plans[dump_index.get(doc.meta.get("dump", ""), 0)]
            if plan is not None and classified.lang not in plan:
                stats.drop("not_in_dump_plan", 1)
                continue
        out.append(classified)
    return out


def _stage_text_filter(ctx: _Ctx, docs: list[Document]) -> list[Document]:
    cfg = ctx.cfg
    node_stats = ctx.stats.stage("text_filter_nodes", "text_nodes")
    doc_stats = ctx.stats.stage("text_filter_docs", "documents")
    node_cfg = _node_filter_config(cfg)
    doc_cfg = _doc_filter_config(cfg)

    out = []
    for doc in docs:
        doc_stats.add_in(1)
        new_nodes = []
        for node in doc.nodes:
            if not isinstance(node, TextNode):
                new_nodes.append(node)
                continue
            node_stats.add_in(1)
            cleaned, reason = tf.process_node(node.text, node_cfg)
            if cleaned is None:
                node_stats.drop(reason, 1)
                continue
            new_nodes.append(TextNode(text=cleaned, tag=node.tag))
        doc.nodes = new_nodes
        reason = tf.filter_document(doc, doc_cfg)
        if reason is not None:
            doc_stats.drop(reason, 1)
            # surviving nodes of a dropped document leave the population
            node_stats.drop("doc_dropped", len(doc.text_nodes()))
            continue
        out.append(doc)
    return out


def _stage_dedup(ctx: _Ctx, docs: list[Document]) -> list[Document]:
    cfg = ctx.cfg
    exact_stats = ctx.stats.stage("dedup_exact_docs", "documents")
    node_stats = ctx.stats.stage("node_dedup", "text_nodes")
    lsh_stats = ctx.stats.stage("lsh_dedup", "documents")

    survivors = list(dd.exact_doc_dedup(docs, stats=exact_stats))
    for doc in survivors:
        dd.node_dedup(doc, threshold=cfg.lev_threshold,
                      convention=cfg.lev_convention, stats=node_stats)

    hasher = dd.MinHasher(num_perm=cfg.minhash_perms, seed=cfg.seed)
    indexes: dict[str, dd.LshIndex] = {}
    out = []
    for doc in survivors:
        lsh_stats.add_in(1)
        index = indexes.get(doc.lang)
        if index is None:
            index = dd.LshIndex(num_perm=cfg.minhash_perms, threshold=cfg.lsh_threshold)
            indexes[doc.lang] = index
        sig = hasher.signature(dd.feature_set(doc.canonical_text(), cfg.feature_space))
        if index.query_insert(doc.id, sig) is not None:
            lsh_stats.drop("near_duplicate", 1)
            continue
        out.append(doc)
    return out


def _stage_fetch(ctx: _Ctx, docs: list[Document]) -> list[Document]:
    cfg = ctx.cfg
    url_stats = ctx.stats.stage("fetch_urls", "urls")
    img_stats = ctx.stats.stage("fetch_images", "images")
    rule_cfg = imf.ImageRuleConfig(
        min_side=cfg.min_side, aspect_min=cfg.aspect_min, aspect_max=cfg.aspect_max
    )

    # URL-rule prescreen happens before any download.
    url_verdicts: dict[str, str | None] = {}
    for doc in docs:
        for node in doc.image_nodes():
            if node.url not in url_verdicts:
                url_verdicts[node.url] = imf.url_rule_filter(node.url, rule_cfg)
    to_fetch = [u for u, v in url_verdicts.items() if v is None]

    policy = FetchPolicy(
        user_agent=cfg.user_agent,
        per_host_concurrency=cfg.per_host_concurrency,
        per_host_delay_ms=cfg.per_host_delay_ms,
        timeout_ms=cfg.timeout_ms,
        max_bytes=cfg.max_image_bytes,
        respect_robots=cfg.respect_robots,
        retries=cfg.fetch_retries,
    )
    results = fetch_all(to_fetch, policy, store=ctx.store, workers=cfg.fetch_workers)
    ctx.store.write_index()

    for url in sorted(url_verdicts):
        url_stats.add_in(1)
        verdict = url_verdicts[url]
        if verdict is not None:
            url_stats.drop(verdict, 1)
            continue
        res = results[url]
        if not res.ok:
            reason = res.outcome
            if res.outcome == "http_error" and res.status is not None:
                reason = f"http_error_{res.status}"
            url_stats.drop(reason, 1)

    for doc in docs:
        new_nodes = []
        for node in doc.nodes:
            if not isinstance(node, ImageNode):
                new_nodes.append(node)
                continue
            img_stats.add_in(1)
            verdict = url_verdicts[node.url]
            if verdict is not None:
                img_stats.drop(verdict, 1)
                continue
            res = results[node.url]
            if not res.ok or res.record is None:
                reason = res.outcome
                if res.outcome == "http_error" and res.status is not None:
                    reason = f"http_error_{res.status}"
                img_stats.drop(reason, 1)
                continue
            new_nodes.append(ImageNode(
                url=node.url,
                sha512=res.record.bytes_sha512,
                width=res.record.width,
                height=res.record.height,
            ))
        doc.nodes = new_nodes
    return docs


def _stage_image_filter(ctx: _Ctx, docs: list[Document]) -> list[Document]:
    cfg = ctx.cfg
    img_stats = ctx.stats.stage("image_filter_images", "images")
    doc_stats = ctx.stats.stage("image_filter_docs", "documents")
    dedup_stats = ctx.stats.stage("image_dedup", "images")
    rule_cfg = imf.ImageRuleConfig(
        min_side=cfg.min_side, aspect_min=cfg.aspect_min, aspect_max=cfg.aspect_max
    )
    thresholds = imf.NsfwThresholds(
        porn_hentai_sum=cfg.porn_hentai_sum,
        nudenet_exposed=cfg.nudenet_exposed,
        safer_porn=cfg.safer_porn,
        csam=cfg.csam_threshold,
    )
    phash_cache: dict[str, int | None] = {}

    def phash_for(sha: str) -> int | None:
        if sha not in phash_cache:
            try:
                phash_cache[sha] = phash64_bytes(ctx.store.path_for(sha).read_bytes())
            except (PhashError, OSError):
                phash_cache[sha] = None
        return phash_cache[sha]

    survivors = []
    for doc in docs:
        doc_stats.add_in(1)
        # geometry + phash
        new_nodes = []
        for node in doc.nodes:
            if not isinstance(node, ImageNode):
                new_nodes.append(node)
                continue
            img_stats.add_in(1)
            assert node.sha512 is not None and node.width is not None
            reason = imf.geometry_filter(node.width, node.height, rule_cfg)
            if reason is not None:
                img_stats.drop(reason, 1)
                continue
            new_nodes.append(ImageNode(
                url=node.url, sha512=node.sha512,
                phash=phash_for(node.sha512),
                width=node.width, height=node.height,
            ))
        doc.nodes = new_nodes

        # model-score gates: any non-safe verdict drops the whole document
        verdicts = []
        for node in doc.image_nodes():
            path = str(ctx.store.path_for(node.sha512))
            scores = dict(ctx.scorer.nsfw_image(path))
            scores.update(ctx.scorer.csam_image(path))
            verdicts.append(imf.nsfw_gate(scores, thresholds))
        if "csam" in verdicts or "nsfw" in verdicts:
            doc_verdict = "csam" if "csam" in verdicts else "nsfw"
            doc_stats.drop(doc_verdict, 1)
            for verdict in verdicts:
                img_stats.drop(
                    f"{verdict}_image" if verdict != "safe" else f"doc_{doc_verdict}", 1
                )
            continue
        survivors.append(doc)

    # per-language dedup and occurrence caps, in stream (id-sorted) order
    by_lang: dict[str, list[Document]] = {}
    for doc in survivors:
        by_lang.setdefault(doc.lang, []).append(doc)
    out: list[Document] = []
    for lang in sorted(by_lang):
        out.extend(imf.image_dedup(by_lang[lang], cap=cfg.image_cap, stats=dedup_stats))
    out.sort(key=lambda d: d.id)
    return out


def _stage_decontaminate(ctx: _Ctx, docs: list[Document]) -> list[Document]:
    cfg = ctx.cfg
    stats = ctx.stats.stage("decontaminate", "images")
    if cfg.contamination_file:
        contamination = imf.ContaminationSet.from_file(cfg.contamination_file)
    else:
        contamination = imf.ContaminationSet()
    return imf.decontaminate(docs, contamination, stats=stats)


def _stage_joint_filter(ctx: _Ctx, docs: list[Document]) -> list[Document]:
    cfg = ctx.cfg
    text_stats = ctx.stats.stage("joint_filter_text_nodes", "text_nodes")
    img_stats = ctx.stats.stage("joint_filter_images", "images")
    doc_stats = ctx.stats.stage("joint_filter_docs", "documents")

    def image_path(sha: str) -> str:
        return str(ctx.store.path_for(sha))

    def embed(doc: Document):
        try:
            return jf.embed_document(doc, ctx.scorer, image_path)
        except ScorerError:
            return None

    pools: dict[str, jf.NegativePool] = {}

    def pool_for(lang: str) -> jf.NegativePool:
        pool = pools.get(lang)
        if pool is None:
            pool = jf.NegativePool(capacity=cfg.joint_pool_cap, seed=cfg.seed)
            pools[lang] = pool
        return pool

    def add_to_pool(doc: Document, embs) -> None:
        text_embs, img_embs = embs
        pool = pool_for(doc.lang)
        for pos, node in enumerate(doc.nodes):
            if isinstance(node, TextNode) and pos in text_embs:
                pool.add_text(jf.PoolText(
                    doc_id=doc.id, pos=pos,
                    byte_len=len(node.text.encode("utf-8")),
                    emb=text_embs[pos],
                ))
            elif isinstance(node, ImageNode) and pos in img_embs:
                pool.add_image(jf.PoolImage(doc_id=doc.id, pos=pos, emb=img_embs[pos]))

    embeddings = _par_map(embed, docs, cfg.threads)

    out = []
    if cfg.joint_two_pass:
        for doc, embs in zip(docs, embeddings):
            if embs is not None:
                add_to_pool(doc, embs)

    for doc, embs in zip(docs, embeddings):
        doc_stats.add_in(1)
        n_text = len(doc.text_nodes())
        n_img = len(doc.image_nodes())
        text_stats.add_in(n_text)
        img_stats.add_in(n_img)
        if embs is None:
            doc_stats.drop("scorer_unavailable", 1)
            text_stats.drop("doc_dropped", n_text)
            img_stats.drop("doc_dropped", n_img)
            continue
        text_embs, img_embs = embs
        decisions = jf.judge_document(
            doc, text_embs, img_embs, pool_for(doc.lang),
            seed=cfg.seed, top=cfg.joint_top, negatives=cfg.joint_negatives,
        )
        if not cfg.joint_two_pass:
            add_to_pool(doc, embs)
        kept, reason, texts_removed, images_removed = jf.apply_joint_filter(
            doc, decisions, min_doc_bytes=cfg.joint_min_doc_bytes
        )
        text_stats.drop("invalid_rank", texts_removed)
        img_stats.drop("invalid_rank", images_removed)
        if kept is None:
            doc_stats.drop(reason, 1)
            text_stats.drop("doc_dropped", n_text - texts_removed)
            img_stats.drop("doc_dropped", n_img - images_removed)
            continue
        out.append(kept)
    return out


def _stage_shard(ctx: _Ctx, docs: list[Document]) -> dict:
    cfg = ctx.cfg
    stats = ctx.stats.stage("shard_routing", "documents")
    allowed = set(cfg.languages) if cfg.languages else set(default_languages())
    allowed -= set(cfg.deny_languages)
    by_lang: dict[str, list[Document]] = {}
    for doc in docs:
        stats.add_in(1)
        if doc.lang not in allowed:
            stats.drop("unsupported_lang", 1)
            continue
        by_lang.setdefault(doc.lang, []).append(doc)
    shard_dir = ctx.out / "shards"
    manifest: dict = {"languages": {}}
    for lang in sorted(by_lang):
        manifest["languages"][lang] = write_shard(
            by_lang[lang], lang, shard_dir, max_docs_per_file=cfg.max_docs_per_shard
        )
    shard_dir.mkdir(parents=True, exist_ok=True)
    (shard_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


# ------------------------------------------------------------ orchestration


def _marker_path(ctx: _Ctx, name: str) -> Path:
    return ctx.stage_dir(name) / ".complete"


def _stage_inputs(ctx: _Ctx, name: str) -> list[Path]:
    if name == "extract":
        return [Path(w) for w in ctx.cfg.warcs]
    prev = STAGES[STAGES.index(name) - 1]
    return [ctx.docs_path(prev)]


def _digest_map(paths: list[Path]) -> dict[str, str] | None:
    out = {}
    for p in paths:
        if not p.exists():
            return None
        out[str(p)] = _file_sha256(p)
    return out


def _stage_complete(ctx: _Ctx, name: str) -> bool:
    marker = _marker_path(ctx, name)
    if not marker.exists():
        return False
    try:
        info = json.loads(marker.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return False
    if info.get("config_hash") != ctx.cfg.config_hash():
        return False
    if info.get("inputs") != _digest_map(_stage_inputs(ctx, name)):
        return False
    for path_str, digest in info.get("outputs", {}).items():
        path = Path(path_str)
        if not path.exists() or _file_sha256(path) != digest:
            return False
    return True


def _write_marker(ctx: _Ctx, name: str, outputs: list[Path]) -> None:
    info = {
        "config_hash": ctx.cfg.config_hash(),
        "inputs": _digest_map(_stage_inputs(ctx, name)),
        "outputs": {str(p): _file_sha256(p) for p in outputs},
    }
    _marker_path(ctx, name).write_text(
        json.dumps(info, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def run(cfg: PipelineConfig, stop_after: str | None = None) -> RunResult:
    """Execute the pipeline; stages already complete are skipped.

    On stage failure the stage's partial outputs are removed and
    StageFailure raised; earlier stages' outputs stay intact.
    """
    ctx = _Ctx(cfg)
    ctx.out.mkdir(parents=True, exist_ok=True)
    (ctx.out / "run_manifest.json").write_text(
        json.dumps(cfg.to_manifest(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    stats_path = ctx.out / "stats.json"
    if stats_path.exists():
        ctx.stats = StatsBook.load(stats_path)

    transforms = {
        "extract": _stage_extract,
        "lang_id": _stage_lang_id,
        "text_filter": _stage_text_filter,
        "dedup": _stage_dedup,
        "fetch": _stage_fetch,
        "image_filter": _stage_image_filter,
        "decontaminate": _stage_decontaminate,
        "joint_filter": _stage_joint_filter,
    }

    try:
        docs, shard_manifest = _run_stages(ctx, stop_after, transforms, stats_path)
    finally:
        close = getattr(ctx.scorer, "close", None)
        if callable(close):
            close()

    if stop_after is None:
        ctx.stats.check_conservation(["warc_records"] + DOCUMENT_CHAIN)
        ctx.stats.check_conservation(IMAGE_CHAIN)
        ctx.stats.dump(stats_path)
    return RunResult(out_dir=ctx.out, stats=ctx.stats, shard_manifest=shard_manifest)


def _run_stages(ctx: _Ctx, stop_after, transforms, stats_path):
    docs: list[Document] | None = None
    shard_manifest: dict = {}
    for name in STAGES:
        if _stage_complete(ctx, name):
            docs = None  # lazily reloaded by the next executing stage
            if name == "shard":
                manifest_file = ctx.out / "shards" / "manifest.json"
                if manifest_file.exists():
                    shard_manifest = json.loads(manifest_file.read_text(encoding="utf-8"))
            if name == stop_after:
                break
            continue

        stage_dir = ctx.stage_dir(name)
        if stage_dir.exists():
            shutil.rmtree(stage_dir)
        stage_dir.mkdir(parents=True, exist_ok=True)
        ctx.stats.reset(_STAGE_STATS[name])
        try:
            if name == "extract":
                docs = _stage_extract(ctx)
            elif name == "shard":
                if docs is None:
                    docs = _read_docs(ctx.docs_path("joint_filter"))
                shard_manifest = _stage_shard(ctx, docs)
            else:
                if docs is None:
                    prev = STAGES[STAGES.index(name) - 1]
                    docs = _read_docs(ctx.docs_path(prev))
                docs = transforms[name](ctx, docs)
            outputs: list[Path] = []
            if name != "shard":
                _write_docs(ctx.docs_path(name), docs)
                outputs.append(ctx.docs_path(name))
            else:
                shard_dir = ctx.out / "shards"
                outputs.append(shard_dir / "manifest.json")
                for lang_manifest in shard_manifest.get("languages", {}).values():
                    for entry in lang_manifest["files"]:
                        outputs.append(shard_dir / entry["name"])
            ctx.stats.dump(stats_path)
            _write_marker(ctx, name, outputs)
        except Exception as exc:
            shutil.rmtree(stage_dir, ignore_errors=True)
            raise StageFailure(f"stage {name} failed: {exc}") from exc
        if name == stop_after:
            break

    return docs, shard_manifest
