from __future__ import annotations

import random

import pytest
from hypothesis import settings

from mmcorpus.model import Document, ImageNode, TextNode, make_doc_id

# property tests run with a fixed seed: fully deterministic across runs
settings.register_profile("fixed", derandomize=True, deadline=None)
settings.load_profile("fixed")


def random_document(rng: random.Random, lang: str = "fra_Latn") -> Document:
    nodes = []
    for i in range(rng.randint(0, 8)):
        if rng.random() < 0.7:
            words = [rng.choice("alpha beta gamma delta epsilon zeta".split())
                     for _ in range(rng.randint(1, 8))]
            nodes.append(TextNode(text=" ".join(words) + f" n{i}", tag=rng.choice(["p", "h1", "ul"])))
        else:
            node = ImageNode(
                url=f"https://example.test/img/{rng.randrange(1 << 30)}.png",
                sha512=None if rng.random() < 0.5 else f"{rng.randrange(1 << 60):0128x}",
                phash=None if rng.random() < 0.5 else rng.randrange(1 << 64),
                width=rng.choice([None, rng.randint(1, 4000)]),
                height=rng.choice([None, rng.randint(1, 4000)]),
            )
            nodes.append(node)
    rid = f"<urn:uuid:test-{rng.randrange(1 << 40)}>"
    url = f"https://example.test/page/{rng.randrange(1 << 30)}"
    return Document(
        id=make_doc_id(rid, url),
        url=url,
        lang=lang,
        lang_scores=[(lang, rng.random() * 100), ("eng_Latn", rng.random())],
        nodes=nodes,
        meta={"warc_record_id": rid, "stages": ["extract"]},
    )


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240607)
