"""Deterministic synthetic crawl fixture: a 12-page mini-WARC with a
served docroot, plus the hand-derived census of what every pipeline
stage must do with it.

Every page's fate is forced by construction: duplicate pages are byte
twins, the near-duplicate pair differs in one word, NSFW/CSAM and
alignment behavior is steered through the stub scorer's content
markers, and decoy paragraphs guarantee the planted mismatched image
loses its retrieval ranking deterministically.
"""

from __future__ import annotations

import io
import json
import random
import threading
from dataclasses import dataclass
from http.server import SimpleHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from time import monotonic, sleep

from PIL import Image
from PIL.PngImagePlugin import PngInfo

from .dedup import feature_set, lev_ratio
from .model import make_doc_id
from .phash import phash64_bytes
from .textfilter import NodeFilterConfig, filter_node, process_node
from .warc import write_warc

FRA = "fra_Latn"
DEU = "deu_Latn"

_WORD_BANK = (
    "moulin riviere vallee forets sentier colline lumiere matin soir pierre "
    "jardin fenetre chemin nuage prairie montagne ruisseau feuille branche racine "
    "dorf strasse wiese fluss garten himmel wolke berg tal wald "
    "abend morgen stein blatt wurzel pfad huegel licht quelle zweig"
).split()


def _sentence(page: int, node: int, lang: str, align: str) -> str:
    """Unique lowercase sentence carrying stub markers; passes every heuristic."""
    rng = random.Random(page * 100 + node)
    words = rng.sample(_WORD_BANK, 7)
    token = f"seite{page:02d}{'abcdefghij'[node]}"
    return f"{' '.join(words)} {token} lang:{lang} align:{align}"


def _page_html(texts: list[str], images: list[str], pad_to: int = 700) -> bytes:
    parts = ["<!DOCTYPE html>", "<html><head></head><body>"]
    n = max(len(texts), len(images))
    for i in range(n):
        if i < len(texts):
            parts.append(f"<p>{texts[i]}</p>")
        if i < len(images):
            parts.append(f'<img src="{images[i]}">')
    parts.append("</body></html>")
    html = "\n".join(parts)
    if len(html.encode()) < pad_to:
        html += "\n<!-- " + "pad " * ((pad_to - len(html.encode())) // 4 + 1) + "-->"
    return html.encode("utf-8")


def _png(width: int, height: int, seed: int, marker: str | None = None) -> bytes:
    """Structured noise image (distinct pHash per seed) with an optional
    ASCII marker embedded as an uncompressed tEXt chunk."""
    rng = random.Random(seed)
    img = Image.new("RGB", (width, height))
    px = img.load()
    # coarse 8x8 blocks so the low-frequency spectrum varies per seed
    block = max(1, width // 8)
    colors = {}
    for x in range(width):
        for y in range(height):
            key = (x // block, y // block)
            if key not in colors:
                colors[key] = (rng.randrange(256), rng.randrange(256), rng.randrange(256))
            px[x, y] = colors[key]
    info = PngInfo()
    if marker:
        # trailing ';' stops the stub's marker scan before the chunk CRC
        info.add_text("comment", marker + ";")
    buf = io.BytesIO()
    img.save(buf, "PNG", pnginfo=info)
    return buf.getvalue()


def _force_id_order(first_rec: str, first_url: str, second_rec_base: str, second_url: str) -> str:
    """Pick a record id for the second page so its doc id sorts after the first."""
    first_id = make_doc_id(first_rec, first_url)
    for i in range(10_000):
        candidate = f"{second_rec_base}-{i}"
        if make_doc_id(candidate, second_url) > first_id:
            return candidate
    raise RuntimeError("could not order ids")


@dataclass
class GoldenFixture:
    warc_path: Path
    docroot: Path
    contamination_file: Path
    trace: dict


def build_golden_fixture(root: str | Path, base_url: str) -> GoldenFixture:
    """Write fixture.warc.gz, the served docroot, the contamination file,
    and trace.json (the expected per-stage census) under ``root``.

    ``base_url`` (e.g. http://127.0.0.1:8123) is baked into page URLs and
    image references, so build after binding the fixture server's port.
    """
    root = Path(root)
    docroot = root / "docroot"
    img_dir = docroot / "img"
    img_dir.mkdir(parents=True, exist_ok=True)
    (docroot / "private").mkdir(exist_ok=True)

    # --- images -----------------------------------------------------------
    images = {
        "alpha.png": _png(200, 200, seed=1, marker="align:alpha"),
        "omega-mism.png": _png(200, 200, seed=2, marker="align:omega"),
        "tiny.png": _png(100, 100, seed=3, marker="align:alpha"),
        "beta.png": _png(200, 200, seed=4, marker="align:beta"),
        "zeta.png": _png(200, 200, seed=5, marker="align:zeta"),
        "csam.png": _png(200, 200, seed=6, marker="csam-marker"),
        "gamma.png": _png(200, 200, seed=7, marker="align:gamma"),
        "delta.png": _png(200, 200, seed=8, marker="align:delta"),
        "benchmark.png": _png(200, 200, seed=9, marker="align:delta"),
        "omega.png": _png(200, 200, seed=10, marker="align:omega"),
        "epsilon.png": _png(200, 200, seed=11, marker="align:epsilon"),
    }
    images["gamma-dup.png"] = images["gamma.png"]  # byte twin, second URL
    for name, data in images.items():
        (img_dir / name).write_bytes(data)
    (docroot / "robots.txt").write_text(
        "User-agent: *\nDisallow: /private/\n", encoding="utf-8"
    )

    phashes = {name: phash64_bytes(data) for name, data in images.items()}
    bench = phashes["benchmark.png"]
    for name, ph in phashes.items():
        if name not in ("benchmark.png",):
            assert ph != bench, f"fixture phash collision: {name}"
    assert phashes["gamma.png"] == phashes["gamma-dup.png"]
    contamination_file = root / "contamination.txt"
    contamination_file.write_text(f"{bench:016x}\n", encoding="utf-8")

    def img_url(name: str) -> str:
        return f"/img/{name}"

    # --- page texts -------------------------------------------------------
    def sentences(page: int, lang: str, align: str, count: int = 6) -> list[str]:
        return [_sentence(page, i, lang, align) for i in range(count)]

    p01_texts = sentences(1, FRA, "alpha")
    p02_texts = sentences(2, FRA, "beta")
    # planted in-document duplicates: exact copy of node 2, near copy of node 3
    p02_full = p02_texts + [p02_texts[1], p02_texts[2][:-1] + "x"]
    p04_full = list(p02_full)
    p04_full[3] = p04_full[3].replace("seite02d", "seite02z")  # one-word change
    p05_texts = sentences(5, FRA, "none")
    p05_texts[2] += " pornography"
    p06_good = sentences(6, FRA, "none", count=4)
    p06_junk = [
        "lorem ipsum dolor sit amet consectetur adipiscing",
        "bad { curly } text here",
        "FOLLOW THE CROWD RIGHT NOW FRIENDS",
    ]
    p07_texts = sentences(7, DEU, "zeta")
    p08_texts = sentences(8, DEU, "gamma")
    p09_texts = sentences(9, DEU, "delta")
    p10_texts = sentences(10, FRA, "omega")
    p11_texts = sentences(11, DEU, "epsilon")
    p12_texts = sentences(12, DEU, "eta")

    # construction self-checks: good nodes survive the node chain unchanged
    cfg = NodeFilterConfig()
    for text in (p01_texts + p02_full + p04_full + p05_texts + p06_good
                 + p07_texts + p08_texts + p09_texts + p10_texts
                 + p11_texts + p12_texts):
        cleaned, reason = process_node(text, cfg)
        assert cleaned == text and reason is None, (text, reason)
    assert filter_node(p06_junk[0], cfg) == "lorem_ipsum"
    assert filter_node(p06_junk[1], cfg) == "braces"
    assert filter_node(p06_junk[2], cfg) == "caps_ratio"
    assert lev_ratio(p02_full[2], p02_full[7]) >= 0.95
    for i, a in enumerate(p02_texts):
        for b in p02_texts[i + 1:]:
            assert lev_ratio(a, b) < 0.95, (a, b)
    f02 = feature_set("\n".join(p02_full[:6]))
    f04 = feature_set("\n".join(p04_full[:6]))
    jacc = len(f02 & f04) / len(f02 | f04)
    assert jacc >= 0.9, jacc

    # --- pages ------------------------------------------------------------
    pages = []

    def page(num: int, texts: list[str], imgs: list[str], rec_id: str | None = None):
        url = f"{base_url}/pages/p{num:02d}.html"
        pages.append({
            "record_id": rec_id or f"<urn:uuid:golden-{num:02d}>",
            "target_uri": url,
            "body": _page_html(texts, imgs),
            "content_type": "text/html; charset=utf-8",
        })
        return url

    p01_imgs = [img_url("alpha.png"), img_url("omega-mism.png"),
                img_url("tiny.png"), "/assets/logo-wide.png"]
    p01_url = page(1, p01_texts, p01_imgs)
    p02_url = page(2, p02_full, [img_url("beta.png"), img_url("beta.png")])
    # exact duplicate of page 1 (different record id and URL, same content)
    p03_url = f"{base_url}/pages/p03.html"
    p03_rec = _force_id_order("<urn:uuid:golden-01>", p01_url, "<urn:uuid:golden-03>", p03_url)
    pages.append({
        "record_id": p03_rec,
        "target_uri": p03_url,
        "body": _page_html(p01_texts, p01_imgs),
        "content_type": "text/html; charset=utf-8",
    })
    p04_url = f"{base_url}/pages/p04.html"
    p04_rec = _force_id_order("<urn:uuid:golden-02>", p02_url, "<urn:uuid:golden-04>", p04_url)
    pages.append({
        "record_id": p04_rec,
        "target_uri": p04_url,
        "body": _page_html(p04_full, [img_url("beta.png"), img_url("beta.png")]),
        "content_type": "text/html; charset=utf-8",
    })
    page(5, p05_texts, [])
    page(6, p06_good + p06_junk, [])
    page(7, p07_texts, [img_url("zeta.png"), img_url("csam.png")])
    page(8, p08_texts, [img_url("gamma.png"), img_url("gamma-dup.png")])
    page(9, p09_texts, [img_url("delta.png"), img_url("benchmark.png")])
    page(10, p10_texts, [img_url("omega.png")])
    page(11, p11_texts, [img_url("epsilon.png"), "/private/secret.png"])
    page(12, p12_texts, [img_url("missing.png")])

    warc_path = root / "fixture.warc.gz"
    write_warc(warc_path, pages, compress=True)

    # --- hand-derived census ----------------------------------------------
    trace = {
        "stats": {
            "warc_records": {"in": 12, "dropped": 0, "reasons": {}},
            "extract": {"in": 12, "dropped": 0, "reasons": {}},
            "lang_id": {"in": 12, "dropped": 0, "reasons": {}},
            "text_filter_nodes": {
                "in": 77, "dropped": 13,
                "reasons": {"lorem_ipsum": 1, "braces": 1, "caps_ratio": 1,
                            "doc_dropped": 10},
            },
            "text_filter_docs": {
                "in": 12, "dropped": 2,
                "reasons": {"nsfw": 1, "too_small_nodes": 1},
            },
            "dedup_exact_docs": {
                "in": 10, "dropped": 1, "reasons": {"exact_duplicate": 1},
            },
            "node_dedup": {
                "in": 58, "dropped": 4,
                "reasons": {"exact_node": 2, "near_node": 2},
            },
            "lsh_dedup": {
                "in": 9, "dropped": 1, "reasons": {"near_duplicate": 1},
            },
            "fetch_urls": {
                "in": 15, "dropped": 3,
                "reasons": {"banned_substring": 1, "denied_robots": 1,
                            "http_error_404": 1},
            },
            "fetch_images": {
                "in": 16, "dropped": 3,
                "reasons": {"banned_substring": 1, "denied_robots": 1,
                            "http_error_404": 1},
            },
            "image_filter_images": {
                "in": 13, "dropped": 3,
                "reasons": {"too_small": 1, "csam_image": 1, "doc_csam": 1},
            },
            "image_filter_docs": {
                "in": 8, "dropped": 1, "reasons": {"csam": 1},
            },
            "image_dedup": {
                "in": 10, "dropped": 2,
                "reasons": {"dup_url_in_doc": 1, "dup_phash_in_doc": 1},
            },
            "decontaminate": {
                "in": 8, "dropped": 1, "reasons": {"benchmark_phash": 1},
            },
            "joint_filter_text_nodes": {
                "in": 42, "dropped": 6, "reasons": {"doc_dropped": 6},
            },
            "joint_filter_images": {
                "in": 7, "dropped": 1, "reasons": {"invalid_rank": 1},
            },
            "joint_filter_docs": {
                "in": 7, "dropped": 1, "reasons": {"no_images": 1},
            },
            "shard_routing": {"in": 6, "dropped": 0, "reasons": {}},
        },
        "shards": {FRA: 3, DEU: 3},
        "final_images": 6,
        "kept_pages": ["p01", "p02", "p08", "p09", "p10", "p11"],
        "dropped_pages": {
            "p03": "exact duplicate of p01",
            "p04": "minhash-lsh near duplicate of p02",
            "p05": "nsfw wordlist match",
            "p06": "too few text nodes after heuristics",
            "p07": "csam-tagged image drops the document",
            "p12": "single image 404s; no images at joint gate",
        },
    }
    (root / "trace.json").write_text(
        json.dumps(trace, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return GoldenFixture(
        warc_path=warc_path,
        docroot=docroot,
        contamination_file=contamination_file,
        trace=trace,
    )


# --------------------------------------------------------------- server


class _Handler(SimpleHTTPRequestHandler):
    def log_message(self, *args):  # quiet
        pass

    def _maybe_redirect(self) -> bool:
        # /redir/<n>/<path...>: 302 chain of length n before the real path
        parts = self.path.split("/")
        if len(parts) >= 4 and parts[1] == "redir" and parts[2].isdigit():
            n = int(parts[2])
            rest = "/" + "/".join(parts[3:])
            target = rest if n <= 1 else f"/redir/{n - 1}{rest}"
            self.send_response(302)
            self.send_header("Location", target)
            self.end_headers()
            return True
        return False

    def do_GET(self):
        server: FixtureServer = self.server  # type: ignore[assignment]
        with server.lock:
            server.in_flight += 1
            server.request_log.append({
                "t": monotonic(),
                "path": self.path,
                "in_flight": server.in_flight,
            })
        try:
            if server.delay_s:
                sleep(server.delay_s)
            if not self._maybe_redirect():
                super().do_GET()
        finally:
            with server.lock:
                server.in_flight -= 1


class FixtureServer(ThreadingHTTPServer):
    """Instrumented static file server: logs arrival time, path, and the
    number of concurrently handled requests at entry."""

    daemon_threads = True

    def __init__(self, docroot: str | Path, port: int = 0, delay_s: float = 0.0):
        self.docroot = str(docroot)
        self.request_log: list[dict] = []
        self.in_flight = 0
        self.delay_s = delay_s
        self.lock = threading.Lock()
        handler = lambda *a, **kw: _Handler(*a, directory=self.docroot, **kw)  # noqa: E731
        super().__init__(("127.0.0.1", port), handler)
        self._thread: threading.Thread | None = None

    def handle_error(self, request, client_address):
        pass  # client aborts (size guards, timeouts) are expected

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.server_address[1]}"

    def start(self) -> "FixtureServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        if self._thread:
            self._thread.join(timeout=5)
        self.server_close()
