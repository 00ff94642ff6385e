/**
 * TCP and stdio transports for the scoring protocol.
 *
 * Requests on one connection are handled concurrently: each line spawns
 * an async handler and responses are written as they resolve, so a
 * slow file-backed op never blocks later cheap ops (responses can and
 * do arrive out of order under pipelining).
 */

import { createServer, Server, Socket } from "node:net";

import { handleLine, SidecarOptions, splitLines } from "./protocol.js";

function attach(socket: Socket, options: SidecarOptions): void {
  let buffer = "";
  socket.on("data", (chunk) => {
    buffer += chunk.toString("utf8");
    const { lines, rest } = splitLines(buffer);
    buffer = rest;
    for (const line of lines) {
      void handleLine(line, options).then((response) => {
        if (!socket.destroyed) {
          socket.write(response + "\n");
        }
      });
    }
  });
  socket.on("error", () => {
    socket.destroy();
  });
}

export function serveTcp(
  host: string,
  port: number,
  options: SidecarOptions,
): Promise<Server> {
  const server = createServer((socket) => attach(socket, options));
  return new Promise((resolve, reject) => {
    server.once("error", reject);
    server.listen(port, host, () => resolve(server));
  });
}

export function serveStdio(options: SidecarOptions): void {
  let buffer = "";
  process.stdin.setEncoding("utf8");
  process.stdin.on("data", (chunk: string) => {
    buffer += chunk;
    const { lines, rest } = splitLines(buffer);
    buffer = rest;
    for (const line of lines) {
      void handleLine(line, options).then((response) => {
        process.stdout.write(response + "\n");
      });
    }
  });
  process.stdin.on("end", () => {
    process.exit(0);
  });
}
