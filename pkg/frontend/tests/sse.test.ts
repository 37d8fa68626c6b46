import { describe, expect, it } from "vitest";

import { httpTransport, parseSseStream } from "../src/sse.js";
import type { GatewayEvent } from "../src/types.js";

async function* chunked(text: string, size: number): AsyncIterable<string> {
  for (let i = 0; i < text.length; i += size) {
    yield text.slice(i, i + size);
  }
}

async function collect(events: AsyncIterable<GatewayEvent>): Promise<GatewayEvent[]> {
  const out: GatewayEvent[] = [];
  for await (const event of events) out.push(event);
  return out;
}

const STREAM =
  'data: {"event": "round-started"}\n\n' +
  'data: {"event": "skill-completed", "skill": "get_tsg", "error": null}\n\n' +
  'data: {"event": "agent-output", "text": "hello there"}\n\n';

describe("parseSseStream", () => {
  it("parses every event from a well-formed stream", async () => {
    const events = await collect(parseSseStream(chunked(STREAM, STREAM.length)));
    expect(events.map((e) => e.event)).toEqual([
      "round-started",
      "skill-completed",
      "agent-output",
    ]);
  });

  it("reassembles events split at arbitrary chunk boundaries", async () => {
    for (const size of [1, 3, 7, 16]) {
      const events = await collect(parseSseStream(chunked(STREAM, size)));
      expect(events).toHaveLength(3);
      expect(events[2]).toEqual({ event: "agent-output", text: "hello there" });
    }
  });

  it("ignores blank blocks and non-data lines", async () => {
    const noisy = "\n\n: keepalive\n\n" + 'data: {"event": "round-started"}\n\n';
    const events = await collect(parseSseStream(chunked(noisy, 5)));
    expect(events).toEqual([{ event: "round-started" }]);
  });
});

describe("httpTransport", () => {
  it("streams chat events from the response body and sends auth", async () => {
    const calls: { url: string; init: RequestInit }[] = [];
    const fakeFetch = (async (url: string, init: RequestInit) => {
      calls.push({ url, init });
      const body = new ReadableStream<Uint8Array>({
        start(controller) {
          controller.enqueue(new TextEncoder().encode(STREAM));
          controller.close();
        },
      });
      return { ok: true, status: 200, body } as Response;
    }) as unknown as typeof fetch;

    const transport = httpTransport("http://gw", "tok", fakeFetch);
    const events: GatewayEvent[] = [];
    for await (const event of transport.chat({
      question: "q",
      messages: [],
      meta_plan: { agents: [], cursor: 0, round: 0 },
      session_id: "s",
    })) {
      events.push(event);
    }
    expect(events).toHaveLength(3);
    expect(calls[0]!.url).toBe("http://gw/v1/chat");
    expect((calls[0]!.init.headers as Record<string, string>)["Authorization"]).toBe(
      "Bearer tok",
    );
  });

  it("posts feedback and surfaces HTTP failures", async () => {
    const fakeFetch = (async () => ({ ok: false, status: 400 })) as unknown as typeof fetch;
    const transport = httpTransport("http://gw", "", fakeFetch);
    await expect(
      transport.feedback({ stars: 5, session_id: "s" }),
    ).rejects.toThrow("400");
  });
});
