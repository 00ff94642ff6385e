from __future__ import annotations

import math

import numpy as np
import pytest

from mmcorpus.langtable import default_languages
from mmcorpus.scorer import (CachingScorer, ScorerError, StubScorer,
                             stub_embed, stub_lid)


def test_language_table_has_201_codes():
    table = default_languages()
    assert len(table) == 201
    assert len(set(table)) == 201
    assert list(table) == sorted(table)
    assert "fra_Latn" in table and "deu_Latn" in table and "eng_Latn" in table


def test_stub_embed_deterministic_unit():
    v1 = stub_embed(b"abc", 64)
    v2 = stub_embed(b"abc", 64)
    assert v1.dtype == np.float32
    assert (v1 == v2).all()
    assert abs(float(np.linalg.norm(v1.astype(np.float64))) - 1.0) < 1e-6


def test_stub_embed_distinct_inputs_low_cosine(rng):
    worst = 0.0
    for _ in range(1000):
        a = rng.getrandbits(64).to_bytes(8, "big")
        b = rng.getrandbits(64).to_bytes(8, "big")
        if a == b:
            continue
        va = stub_embed(a, 64).astype(np.float64)
        vb = stub_embed(b, 64).astype(np.float64)
        worst = max(worst, abs(float(np.dot(va, vb))))
    assert worst < 0.9, worst


def test_stub_embed_dim_guard():
    with pytest.raises(ScorerError):
        stub_embed(b"x", 1)


def test_stub_lid_deterministic_sums_to_one():
    t1 = stub_lid("hello world")
    assert t1 == stub_lid("hello world")
    assert [p for _, p in t1] == [0.8, 0.15, 0.05]
    assert math.isclose(sum(p for _, p in t1), 1.0)
    # neighbors are the next two table entries
    table = default_languages()
    idx = table.index(t1[0][0])
    assert t1[1][0] == table[(idx + 1) % len(table)]
    assert t1[2][0] == table[(idx + 2) % len(table)]


def test_stub_lid_empty_errors():
    with pytest.raises(ScorerError):
        stub_lid("")


def test_stub_lid_spread_over_table(rng):
    from collections import Counter

    table = default_languages()
    counts = Counter(stub_lid(f"string number {rng.random()}")[0][0]
                     for _ in range(5000))
    # roughly uniform: no bucket grossly over-represented
    assert max(counts.values()) / 5000 < 0.05
    assert len(counts) > 100


def test_lang_marker_override():
    assert stub_lid("text lang:deu_Latn more")[0] == ("deu_Latn", 0.8)
    # unknown code falls back to hashing
    out = stub_lid("text lang:zzz_Latn more")
    assert out[0][1] == 0.8


def test_align_marker_equalizes_text_and_image(tmp_path):
    s = StubScorer(dim=32)
    img_path = tmp_path / "img.bin"
    img_path.write_bytes(b"BINARY\x00DATA align:samekey; trailer")
    vt = s.embed_text("a sentence mentioning align:samekey here")
    vi = s.embed_image(str(img_path))
    assert (vt == vi).all()
    other = s.embed_text("different align:otherkey text")
    cos = float(np.dot(vt.astype(np.float64), other.astype(np.float64)))
    assert abs(cos) < 0.9


def test_nsfw_and_csam_markers(tmp_path):
    s = StubScorer()
    safe = tmp_path / "safe.bin"
    safe.write_bytes(b"plain image bytes")
    nsfw = tmp_path / "nsfw.bin"
    nsfw.write_bytes(b"bytes with nsfw-marker inside")
    csam = tmp_path / "csam.bin"
    csam.write_bytes(b"bytes with csam-marker inside")

    s_scores = s.nsfw_image(str(safe))
    assert all(0 <= v < 0.2 for v in s_scores.values())
    assert s.csam_image(str(safe))["safer_csam"] < 0.2

    n_scores = s.nsfw_image(str(nsfw))
    assert n_scores["porn"] + n_scores["hentai"] > 0.8
    assert n_scores["nudenet_exposed_max"] > 0.5
    assert s.csam_image(str(csam))["safer_csam"] > 0.4


def test_caching_scorer_scores_once(tmp_path):
    calls = {"nsfw": 0}

    class Counting(StubScorer):
        def nsfw_image(self, path):
            calls["nsfw"] += 1
            return super().nsfw_image(path)

    path = tmp_path / "img.bin"
    path.write_bytes(b"some bytes")
    scorer = CachingScorer(Counting())
    first = scorer.nsfw_image(str(path))
    second = scorer.nsfw_image(str(path))
    assert first == second and calls["nsfw"] == 1
    # same bytes at a different path: still cached by digest
    other = tmp_path / "copy.bin"
    other.write_bytes(b"some bytes")
    scorer.nsfw_image(str(other))
    assert calls["nsfw"] == 1
