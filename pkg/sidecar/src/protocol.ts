/** Wire protocol: newline-delimited UTF-8 JSON.
 *
 * Banner (first line):  {"ready": true, "dim": <d>, "model": "..."}
 * Request:              {"id": "...", "title": "..."}
 * Response:             {"id": "...", "vec": [...]} or {"id": "...", "error": "..."}
 *
 * Responses are emitted in request order, exactly one per request line.
 */

export interface EmbedRequest {
  id: string;
  title: string;
}

export interface Banner {
  ready: true;
  dim: number;
  model: string;
}

export type EmbedResponse =
  | { id: string; vec: number[] }
  | { id: string; error: string };

export type ParsedRequest =
  | { ok: true; request: EmbedRequest }
  | { ok: false; id: string; error: string };

/** Parse one request line; never throws. */
export function parseRequestLine(line: string): ParsedRequest {
  let value: unknown;
  try {
    value = JSON.parse(line);
  } catch {
    return { ok: false, id: "", error: "not valid JSON" };
  }
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    return { ok: false, id: "", error: "request must be a JSON object" };
  }
  const record = value as Record<string, unknown>;
  const id = typeof record.id === "string" ? record.id : "";
  if (!id) {
    return { ok: false, id: "", error: "missing or empty id" };
  }
  if (typeof record.title !== "string") {
    return { ok: false, id, error: "missing title field" };
  }
  return { ok: true, request: { id, title: record.title } };
}

export function banner(dim: number, model: string): string {
  return JSON.stringify({ ready: true, dim, model } satisfies Banner);
}
