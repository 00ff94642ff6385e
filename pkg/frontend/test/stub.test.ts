import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { float32Bits, formatFloat32 } from "../src/float32.js";
import { embedInput, stubCsam, stubEmbed, stubLid, stubNsfw } from "../src/stub.js";
import { LANGUAGES } from "../src/languages.js";

const here = dirname(fileURLToPath(import.meta.url));

interface ParityFixtures {
  seed: number;
  lid: { text: string; expect: [string, string][] }[];
  embed: { input_hex: string; dim: number; expect_bits: string[] }[];
}

const fixtures: ParityFixtures = JSON.parse(
  readFileSync(join(here, "fixtures", "parity.json"), "utf8"),
);

describe("stubEmbed", () => {
  it("is deterministic and unit-norm", () => {
    const a = stubEmbed(Buffer.from("abc"), 64);
    const b = stubEmbed(Buffer.from("abc"), 64);
    expect(Array.from(a)).toEqual(Array.from(b));
    let norm = 0;
    for (const c of a) norm += c * c;
    expect(Math.abs(Math.sqrt(norm) - 1)).toBeLessThan(1e-6);
  });

  it("rejects dim < 2", () => {
    expect(() => stubEmbed(Buffer.from("x"), 1)).toThrow();
  });

  it("gives distinct inputs low cosine", () => {
    let worst = 0;
    for (let i = 0; i < 200; i++) {
      const a = stubEmbed(Buffer.from(`input-a-${i}`), 64);
      const b = stubEmbed(Buffer.from(`input-b-${i}`), 64);
      let dot = 0;
      for (let j = 0; j < 64; j++) dot += a[j] * b[j];
      worst = Math.max(worst, Math.abs(dot));
    }
    expect(worst).toBeLessThan(0.9);
  });

  it("align markers redirect the input", () => {
    const viaText = stubEmbed(embedInput(Buffer.from("words align:k1 more")), 32);
    const viaBytes = stubEmbed(
      embedInput(Buffer.concat([Buffer.from([0, 1, 2]), Buffer.from("align:k1;junk")])),
      32,
    );
    expect(Array.from(viaText)).toEqual(Array.from(viaBytes));
  });
});

describe("stubLid", () => {
  it("is deterministic with fixed probability mass", () => {
    const out = stubLid("hello world");
    expect(out).toEqual(stubLid("hello world"));
    expect(out.map(([, p]) => p)).toEqual([0.8, 0.15, 0.05]);
  });

  it("marker forces the language", () => {
    expect(stubLid("text lang:fra_Latn after")[0][0]).toBe("fra_Latn");
  });

  it("rejects empty text", () => {
    expect(() => stubLid("")).toThrow();
  });

  it("uses table neighbors", () => {
    const [top, second, third] = stubLid("some words");
    const idx = LANGUAGES.indexOf(top[0]);
    expect(second[0]).toBe(LANGUAGES[(idx + 1) % LANGUAGES.length]);
    expect(third[0]).toBe(LANGUAGES[(idx + 2) % LANGUAGES.length]);
  });
});

describe("nsfw/csam stubs", () => {
  it("markers force scores over the gates", () => {
    const n = stubNsfw(Buffer.from("bytes nsfw-marker bytes"));
    expect(n.porn + n.hentai).toBeGreaterThan(0.8);
    expect(n.nudenet_exposed_max).toBeGreaterThan(0.5);
    expect(stubCsam(Buffer.from("csam-marker")).safer_csam).toBeGreaterThan(0.4);
  });

  it("plain bytes stay under every gate", () => {
    const n = stubNsfw(Buffer.from("plain image"));
    for (const v of Object.values(n)) {
      expect(v).toBeGreaterThanOrEqual(0);
      expect(v).toBeLessThan(0.2);
    }
    expect(stubCsam(Buffer.from("plain image")).safer_csam).toBeLessThan(0.2);
  });
});

describe("formatFloat32", () => {
  it("round-trips through double parsing at single precision", () => {
    const values = [0, 1, -1, 0.1, 0.8, 0.15, 0.05, 1e-8, -3.25e20, 0.123456789];
    for (const raw of values) {
      const v = Math.fround(raw);
      expect(Math.fround(Number(formatFloat32(v)))).toBe(v);
    }
  });

  it("is shortest: trims redundant digits", () => {
    expect(formatFloat32(Math.fround(0.8))).toBe("0.8");
    expect(formatFloat32(1)).toBe("1");
    expect(formatFloat32(Math.fround(0.15))).toBe("0.15");
  });
});

describe("parity with the pipeline's built-in stub (1000 inputs)", () => {
  it("stub_lid matches bit-for-bit after single-precision serialization", () => {
    expect(fixtures.lid.length).toBe(600);
    for (const { text, expect: expected } of fixtures.lid) {
      const got = stubLid(text);
      expect(got.length).toBe(expected.length);
      for (let i = 0; i < got.length; i++) {
        expect(got[i][0]).toBe(expected[i][0]);
        expect(float32Bits(got[i][1])).toBe(expected[i][1]);
      }
    }
  });

  it("stub_embed matches bit-for-bit after single-precision serialization", () => {
    expect(fixtures.embed.length).toBe(400);
    for (const { input_hex, dim, expect_bits } of fixtures.embed) {
      const data = embedInput(Buffer.from(input_hex, "hex"));
      const vec = stubEmbed(data, dim);
      expect(vec.length).toBe(expect_bits.length);
      for (let i = 0; i < vec.length; i++) {
        expect(float32Bits(vec[i])).toBe(expect_bits[i]);
      }
    }
  });

  it("serialized components re-parse to the same float32 bits", () => {
    for (const { input_hex, dim, expect_bits } of fixtures.embed.slice(0, 50)) {
      const vec = stubEmbed(embedInput(Buffer.from(input_hex, "hex")), dim);
      for (let i = 0; i < vec.length; i++) {
        const text = formatFloat32(vec[i]);
        expect(float32Bits(Math.fround(Number(text)))).toBe(expect_bits[i]);
      }
    }
  });
});
