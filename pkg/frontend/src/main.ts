#!/usr/bin/env node
/**
 * CLI entry point.
 *
 *   mmcorpus-sidecar --listen 127.0.0.1:9090 --mode stub --dim 64
 *   mmcorpus-sidecar --stdio --mode stub --dim 64
 *
 * Health check: {"id":1,"op":"ping"} -> {"id":1,"ok":true,"result":"pong"}
 */

import { serveStdio, serveTcp } from "./server.js";
import { SidecarOptions } from "./protocol.js";

interface CliArgs {
  listen: string;
  stdio: boolean;
  mode: "stub" | "model";
  dim: number;
  modelModule: string | null;
}

function parseArgs(argv: string[]): CliArgs {
  const args: CliArgs = {
    listen: "127.0.0.1:9090",
    stdio: false,
    mode: "stub",
    dim: 64,
    modelModule: null,
  };
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    switch (arg) {
      case "--listen":
        args.listen = argv[++i];
        break;
      case "--stdio":
        args.stdio = true;
        break;
      case "--mode": {
        const mode = argv[++i];
        if (mode !== "stub" && mode !== "model") {
          throw new Error(`unknown mode: ${mode}`);
        }
        args.mode = mode;
        break;
      }
      case "--dim":
        args.dim = Number.parseInt(argv[++i], 10);
        break;
      case "--model-module":
        args.modelModule = argv[++i];
        break;
      case "--help":
        console.log(
          "usage: mmcorpus-sidecar [--listen host:port | --stdio] " +
          "[--mode stub|model] [--dim N] [--model-module path.js]",
        );
        process.exit(0);
        break;
      default:
        throw new Error(`unknown argument: ${arg}`);
    }
  }
  if (!Number.isInteger(args.dim) || args.dim < 2) {
    throw new Error("--dim must be an integer >= 2");
  }
  return args;
}

async function main(): Promise<void> {
  let args: CliArgs;
  try {
    args = parseArgs(process.argv.slice(2));
  } catch (exc) {
    console.error(String(exc instanceof Error ? exc.message : exc));
    process.exit(2);
  }
  const options: SidecarOptions = { mode: args.mode, dim: args.dim };
  if (args.mode === "model" && args.modelModule) {
    const { pathToFileURL } = await import("node:url");
    const loaded = await import(pathToFileURL(args.modelModule).href);
    options.model = loaded.default ?? loaded;
  }
  if (args.stdio) {
    serveStdio(options);
    return;
  }
  const sep = args.listen.lastIndexOf(":");
  const host = args.listen.slice(0, sep) || "127.0.0.1";
  const port = Number.parseInt(args.listen.slice(sep + 1), 10);
  const server = await serveTcp(host, port, options);
  const addr = server.address();
  if (addr && typeof addr === "object") {
    console.log(`listening on ${addr.address}:${addr.port}`);
  }
}

void main();
