/** Request loop: banner first, then one response line per request line. */

import { createInterface } from "node:readline";
import { createServer, type Server } from "node:net";
import type { Readable, Writable } from "node:stream";

import type { TitleEncoder } from "./encoder.js";
import { banner, parseRequestLine, type EmbedResponse } from "./protocol.js";

async function respond(encoder: TitleEncoder, line: string): Promise<EmbedResponse> {
  if (line.trim() === "") {
    return { id: "", error: "empty line" };
  }
  const parsed = parseRequestLine(line);
  if (!parsed.ok) {
    return { id: parsed.id, error: parsed.error };
  }
  try {
    const vec = await encoder.encode(parsed.request.title);
    return { id: parsed.request.id, vec };
  } catch (err) {
    return { id: parsed.request.id, error: String(err) };
  }
}

/** Serve one stream pair; resolves when the input ends.
 *
 * Responses are awaited sequentially, so their order always matches the
 * request order. Malformed input never terminates the loop.
 */
export async function serveStreams(encoder: TitleEncoder, input: Readable, output: Writable): Promise<void> {
  output.write(banner(encoder.dim, encoder.id) + "\n");
  const lines = createInterface({ input, crlfDelay: Infinity });
  for await (const line of lines) {
    const response = await respond(encoder, line);
    output.write(JSON.stringify(response) + "\n");
  }
}

/** TCP variant: each connection gets its own banner and request loop. */
export function serveTcp(encoder: TitleEncoder, port: number): Server {
  const server = createServer((socket) => {
    serveStreams(encoder, socket, socket).catch(() => socket.destroy());
  });
  server.listen(port);
  return server;
}
