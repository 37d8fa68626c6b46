import type {
  ChatRequest,
  ChatResponse,
  FeedbackRequest,
  GatewayEvent,
  MetaPlan,
  PluginPayload,
  Transport,
} from "../src/types.js";
import type { KeyValueStore } from "../src/session.js";

export class MemoryStore implements KeyValueStore {
  private map = new Map<string, string>();
  getItem(key: string): string | null {
    return this.map.get(key) ?? null;
  }
  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }
}

export function makeResponse(overrides: Partial<ChatResponse>): ChatResponse {
  return {
    answer: "",
    skill_outputs: {},
    planner_output: { meta_plan: { agents: [], cursor: 0, round: 0 }, selected_agent: null },
    plugin_payloads: [],
    retrieved_contexts: [],
    terminated: true,
    ...overrides,
  };
}

export function plan(agents: string[], cursor: number, round: number): MetaPlan {
  return { agents, cursor, round };
}

/**
 * Scripted gateway double: each incoming chat request consumes the next
 * response from the script and streams the standard event sequence. Every
 * request body and feedback body is recorded; `trace` interleaves request
 * issuance with streamed events so ordering can be asserted.
 */
export class FakeTransport implements Transport {
  requests: ChatRequest[] = [];
  feedbacks: FeedbackRequest[] = [];
  trace: string[] = [];

  constructor(private script: ChatResponse[]) {}

  async *chat(body: ChatRequest): AsyncIterable<GatewayEvent> {
    this.requests.push(JSON.parse(JSON.stringify(body)) as ChatRequest);
    this.trace.push(`request:${this.requests.length}`);
    const response = this.script.shift();
    if (!response) throw new Error("no scripted response left");
    yield { event: "round-started" };
    if (response.answer) {
      this.trace.push(`output:${response.answer}`);
      yield { event: "agent-output", text: response.answer };
    }
    yield { event: "round-complete", response };
  }

  async feedback(body: FeedbackRequest): Promise<void> {
    this.feedbacks.push(body);
  }
}

export function queryPayload(queries: string[]): PluginPayload {
  return { kind: "telemetry-query", queries, targets: ["loginstore", "metricstore"] };
}
