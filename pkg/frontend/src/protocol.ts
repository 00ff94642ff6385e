/**
 * Newline-delimited JSON protocol.
 *
 * Request:  {"id": <u64>, "op": "...", "text": "..."} or {"path": "..."}
 * Response: {"id": ..., "ok": true, "result": ...} or
 *           {"id": ..., "ok": false, "error": "..."}
 *
 * Exactly one response per request; responses may be written out of
 * order (file-backed ops resolve asynchronously). A line that fails to
 * parse gets {"id": 0, "ok": false, "error": "parse"}.
 *
 * Result serialization is fixed: every float is rendered as the
 * shortest decimal that round-trips at single precision, so identical
 * requests produce byte-identical responses on every platform.
 */

import { readFile } from "node:fs/promises";

import { formatFloat32 } from "./float32.js";
import {
  embedInput,
  stubCsam,
  stubEmbed,
  stubLid,
  stubNsfw,
} from "./stub.js";

/**
 * Operator-supplied model implementation for `--mode model`: any subset
 * of the scoring ops, each returning the op's result shape. Ops the
 * module does not provide answer with an error.
 */
export interface ModelImpl {
  lid?(text: string): Promise<[string, number][]> | [string, number][];
  embedText?(text: string, dim: number): Promise<ArrayLike<number>> | ArrayLike<number>;
  embedImage?(data: Buffer, dim: number): Promise<ArrayLike<number>> | ArrayLike<number>;
  nsfwImage?(data: Buffer): Promise<Record<string, number>> | Record<string, number>;
  csamImage?(data: Buffer): Promise<Record<string, number>> | Record<string, number>;
}

export interface SidecarOptions {
  mode: "stub" | "model";
  dim: number;
  model?: ModelImpl;
}

export const OPS = ["ping", "lid", "embed_text", "embed_image", "nsfw_image", "csam_image"] as const;

function errorLine(id: number, message: string): string {
  return JSON.stringify({ id, ok: false, error: message });
}

function okLine(id: number, resultJson: string): string {
  // result is pre-serialized so float formatting stays fixed
  return `{"id":${JSON.stringify(id)},"ok":true,"result":${resultJson}}`;
}

function embedJson(vec: Float32Array): string {
  const parts = new Array<string>(vec.length);
  for (let i = 0; i < vec.length; i++) {
    parts[i] = formatFloat32(vec[i]);
  }
  return `[${parts.join(",")}]`;
}

function lidJson(preds: [string, number][]): string {
  return `[${preds
    .map(([code, p]) => `[${JSON.stringify(code)},${formatFloat32(p)}]`)
    .join(",")}]`;
}

function scoresJson(scores: Record<string, number>): string {
  const body = Object.keys(scores)
    .sort()
    .map((k) => `${JSON.stringify(k)}:${formatFloat32(scores[k])}`)
    .join(",");
  return `{${body}}`;
}

/**
 * Handle one raw request line; resolves to one response line (no
 * trailing newline). Never throws.
 */
export async function handleLine(
  line: string,
  options: SidecarOptions,
): Promise<string> {
  let request: Record<string, unknown>;
  try {
    request = JSON.parse(line);
    if (typeof request !== "object" || request === null) {
      throw new Error("not an object");
    }
  } catch {
    return errorLine(0, "parse");
  }
  const rawId = request["id"];
  const id = typeof rawId === "number" && Number.isFinite(rawId) ? rawId : 0;
  const op = request["op"];
  if (typeof op !== "string") {
    return errorLine(id, "missing op");
  }
  const model = options.mode === "model" ? options.model : undefined;
  if (options.mode === "model" && model === undefined && op !== "ping") {
    return errorLine(
      id,
      "model mode requires an operator-supplied model module (--model-module)",
    );
  }
  const toF32 = (vec: ArrayLike<number>) => Float32Array.from(vec, Math.fround);
  try {
    switch (op) {
      case "ping":
        return okLine(id, JSON.stringify("pong"));
      case "lid": {
        const text = request["text"];
        if (typeof text !== "string") {
          return errorLine(id, "lid requires a text payload");
        }
        if (!text) {
          return errorLine(id, "empty");
        }
        if (model) {
          if (!model.lid) return errorLine(id, "model module lacks lid");
          return okLine(id, lidJson(await model.lid(text)));
        }
        return okLine(id, lidJson(stubLid(text)));
      }
      case "embed_text": {
        const text = request["text"];
        if (typeof text !== "string") {
          return errorLine(id, "embed_text requires a text payload");
        }
        if (model) {
          if (!model.embedText) return errorLine(id, "model module lacks embedText");
          return okLine(id, embedJson(toF32(await model.embedText(text, options.dim))));
        }
        const vec = stubEmbed(embedInput(Buffer.from(text, "utf8")), options.dim);
        return okLine(id, embedJson(vec));
      }
      case "embed_image":
      case "nsfw_image":
      case "csam_image": {
        const path = request["path"];
        if (typeof path !== "string") {
          return errorLine(id, `${op} requires a path payload`);
        }
        const data = await readFile(path);
        if (op === "embed_image") {
          if (model) {
            if (!model.embedImage) return errorLine(id, "model module lacks embedImage");
            return okLine(id, embedJson(toF32(await model.embedImage(data, options.dim))));
          }
          return okLine(id, embedJson(stubEmbed(embedInput(data), options.dim)));
        }
        if (op === "nsfw_image") {
          if (model) {
            if (!model.nsfwImage) return errorLine(id, "model module lacks nsfwImage");
            return okLine(id, scoresJson(await model.nsfwImage(data)));
          }
          return okLine(id, scoresJson({ ...stubNsfw(data) }));
        }
        if (model) {
          if (!model.csamImage) return errorLine(id, "model module lacks csamImage");
          return okLine(id, scoresJson(await model.csamImage(data)));
        }
        return okLine(id, scoresJson(stubCsam(data)));
      }
      default:
        return errorLine(id, `unknown op: ${op}`);
    }
  } catch (exc) {
    return errorLine(id, exc instanceof Error ? exc.message : String(exc));
  }
}

/** Split a growing buffer into complete lines plus the unfinished tail. */
export function splitLines(buffer: string): { lines: string[]; rest: string } {
  const lines = buffer.split("\n");
  const rest = lines.pop() ?? "";
  return { lines: lines.filter((l) => l.trim().length > 0), rest };
}
