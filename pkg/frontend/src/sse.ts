import type {
  ChatRequest,
  FeedbackRequest,
  GatewayEvent,
  Transport,
} from "./types.js";

/**
 * Incrementally parse an SSE byte stream into gateway events. Events are
 * `data: <json>` blocks separated by blank lines; chunk boundaries may fall
 * anywhere, so the parser buffers until a full block is available.
 */
export async function* parseSseStream(
  chunks: AsyncIterable<string>,
): AsyncGenerator<GatewayEvent> {
  let buffer = "";
  for await (const chunk of chunks) {
    buffer += chunk;
    let sep: number;
    while ((sep = buffer.indexOf("\n\n")) >= 0) {
      const block = buffer.slice(0, sep);
      buffer = buffer.slice(sep + 2);
      const event = parseBlock(block);
      if (event) yield event;
    }
  }
  const last = parseBlock(buffer);
  if (last) yield last;
}

function parseBlock(block: string): GatewayEvent | null {
  const data = block
    .split("\n")
    .filter((line) => line.startsWith("data: "))
    .map((line) => line.slice("data: ".length))
    .join("\n");
  if (!data.trim()) return null;
  return JSON.parse(data) as GatewayEvent;
}

async function* readBody(body: ReadableStream<Uint8Array>): AsyncIterable<string> {
  const reader = body.getReader();
  const decoder = new TextDecoder();
  for (;;) {
    const { done, value } = await reader.read();
    if (done) break;
    yield decoder.decode(value, { stream: true });
  }
}

/** HTTP transport against a running gateway. */
export function httpTransport(
  baseUrl: string,
  token = "",
  fetchImpl: typeof fetch = fetch,
): Transport {
  const headers: Record<string, string> = { "Content-Type": "application/json" };
  if (token) headers["Authorization"] = `Bearer ${token}`;

  return {
    async *chat(body: ChatRequest): AsyncIterable<GatewayEvent> {
      const response = await fetchImpl(`${baseUrl}/v1/chat`, {
        method: "POST",
        headers,
        body: JSON.stringify(body),
      });
      if (!response.ok || !response.body) {
        throw new Error(`chat request failed: ${response.status}`);
      }
      yield* parseSseStream(readBody(response.body));
    },

    async feedback(body: FeedbackRequest): Promise<void> {
      const response = await fetchImpl(`${baseUrl}/v1/feedback`, {
        method: "POST",
        headers,
        body: JSON.stringify(body),
      });
      if (!response.ok) {
        throw new Error(`feedback request failed: ${response.status}`);
      }
    },
  };
}
