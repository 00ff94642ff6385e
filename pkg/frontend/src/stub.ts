/**
 * Deterministic stub scoring functions.
 *
 * These mirror the pipeline's built-in stub exactly: every double is
 * produced by the same sequence of IEEE-754 operations, so the float32
 * truncations are bit-identical across the two implementations.
 *
 * Fixture markers steer outputs the same way on both sides:
 *   - `lang:<code>` in a text forces the language verdict,
 *   - `align:<key>` in text or raw image bytes redirects the embedding
 *     input to the key, so matching inputs embed identically,
 *   - `nsfw-marker` / `csam-marker` in image bytes force scores above
 *     the default gates.
 */

import { createHash } from "node:crypto";

import { LANGUAGES } from "./languages.js";

const LANG_MARKER = /lang:([a-z]{2,8}_[A-Za-z]{4})/;
const ALIGN_MARKER = /align:([a-z0-9-]+)/;
const NSFW_MARKER = "nsfw-marker";
const CSAM_MARKER = "csam-marker";

function sha256(...parts: Buffer[]): Buffer {
  const h = createHash("sha256");
  for (const part of parts) {
    h.update(part);
  }
  return h.digest();
}

function first8AsU64(digest: Buffer): bigint {
  return digest.readBigUInt64BE(0);
}

/**
 * Pseudo-random unit vector: component i maps the first 8 bytes of
 * SHA-256(data || LE32(i)) into [-1, 1); L2-normalized in double
 * precision (plain left-to-right sum) and truncated to single precision.
 */
export function stubEmbed(data: Buffer, dim: number): Float32Array {
  if (dim < 2) {
    throw new Error("embedding dim must be >= 2");
  }
  const comps = new Float64Array(dim);
  const idx = Buffer.alloc(4);
  for (let i = 0; i < dim; i++) {
    idx.writeUInt32LE(i, 0);
    const u = first8AsU64(sha256(data, idx));
    // Number(u) rounds once; dividing by 2^63 is exact scaling, so the
    // result equals the correctly rounded u / 2^63.
    comps[i] = Number(u) / 2 ** 63 - 1.0;
  }
  let total = 0.0;
  for (let i = 0; i < dim; i++) {
    total += comps[i] * comps[i];
  }
  if (total === 0.0) {
    comps[0] = 1.0;
    total = 1.0;
  }
  const norm = Math.sqrt(total);
  const out = new Float32Array(dim);
  for (let i = 0; i < dim; i++) {
    out[i] = Math.fround(comps[i] / norm);
  }
  return out;
}

/** Effective embedding input: an align marker overrides the raw bytes. */
export function embedInput(data: Buffer): Buffer {
  const m = ALIGN_MARKER.exec(data.toString("latin1"));
  if (m) {
    return Buffer.from("align-key:" + m[1], "latin1");
  }
  return data;
}

export type LidPrediction = [string, number];

/** Deterministic top-3 language prediction with fixed 0.8/0.15/0.05 mass. */
export function stubLid(
  text: string,
  table: readonly string[] = LANGUAGES,
): LidPrediction[] {
  if (!text) {
    throw new Error("empty");
  }
  let idx: number;
  const marker = LANG_MARKER.exec(text);
  if (marker && table.includes(marker[1])) {
    idx = table.indexOf(marker[1]);
  } else {
    const u = first8AsU64(sha256(Buffer.from(text, "utf8")));
    idx = Number(u % BigInt(table.length));
  }
  const n = table.length;
  return [
    [table[idx], 0.8],
    [table[(idx + 1) % n], 0.15],
    [table[(idx + 2) % n], 0.05],
  ];
}

function tinyScore(data: Buffer, tag: string): number {
  const u = first8AsU64(sha256(data, Buffer.from("|" + tag, "ascii")));
  return (Number(u) / 2 ** 64) * 0.2;
}

export interface NsfwScores {
  porn: number;
  hentai: number;
  nudenet_exposed_max: number;
  safer_porn: number;
}

export function stubNsfw(data: Buffer): NsfwScores {
  if (data.includes(NSFW_MARKER)) {
    return { porn: 0.55, hentai: 0.3, nudenet_exposed_max: 0.9, safer_porn: 0.2 };
  }
  return {
    porn: tinyScore(data, "porn"),
    hentai: tinyScore(data, "hentai"),
    nudenet_exposed_max: tinyScore(data, "nudenet"),
    safer_porn: tinyScore(data, "safer_porn"),
  };
}

export function stubCsam(data: Buffer): { safer_csam: number } {
  if (data.includes(CSAM_MARKER)) {
    return { safer_csam: 0.9 };
  }
  return { safer_csam: tinyScore(data, "safer_csam") };
}
