#!/usr/bin/env python3
"""Dump reference stub outputs from the pipeline's built-in stub.

Writes 1000 cases (600 lid + 400 embed) with expected values encoded at
the float32 bit level, so the sidecar tests can assert bit-identical
parity after single-precision serialization.
"""

import json
import random
import struct
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "src"))
from mmcorpus.scorer import _embed_input, stub_embed, stub_lid  # noqa: E402

SEED = 20240608


def f32_bits(x: float) -> str:
    return struct.pack(">f", x).hex()


def random_text(rng: random.Random) -> str:
    alphabets = [
        "abcdefghijklmnopqrstuvwxyz ",
        "abc éèüß ",
        "世界你好 日本 ",
        "привет мир ",
    ]
    alphabet = rng.choice(alphabets)
    n = rng.randint(1, 80)
    return "".join(rng.choice(alphabet) for _ in range(n)).strip() or "x"


def main(out_path: str) -> None:
    rng = random.Random(SEED)
    lid_cases = []
    for i in range(600):
        if i % 50 == 0:
            text = f"prefix words lang:deu_Latn suffix {rng.random()}"
        elif i % 50 == 25:
            text = f"marker lang:zzz_Zzzz unknown {rng.random()}"
        else:
            text = random_text(rng)
        expect = [[code, f32_bits(p)] for code, p in stub_lid(text)]
        lid_cases.append({"text": text, "expect": expect})

    embed_cases = []
    for i in range(400):
        dim = rng.choice([8, 16, 64])
        if i % 40 == 0:
            data = f"content align:key{rng.randrange(10)} more".encode("utf-8")
        else:
            data = rng.randbytes(rng.randint(0, 120))
        vec = stub_embed(_embed_input(data), dim)
        embed_cases.append({
            "input_hex": data.hex(),
            "dim": dim,
            "expect_bits": [f32_bits(float(v)) for v in vec],
        })

    payload = {"seed": SEED, "lid": lid_cases, "embed": embed_cases}
    Path(out_path).write_text(json.dumps(payload) + "\n", encoding="utf-8")
    print(f"wrote {len(lid_cases)} lid + {len(embed_cases)} embed cases to {out_path}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "test/fixtures/parity.json")
