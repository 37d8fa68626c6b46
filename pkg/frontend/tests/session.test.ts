import { describe, expect, it } from "vitest";

import { QueryPluginCard } from "../src/plugin.js";
import { ClientSession } from "../src/session.js";
import {
  FakeTransport,
  MemoryStore,
  makeResponse,
  plan,
  queryPayload,
} from "./helpers.js";

function twoRoundScript() {
  return [
    makeResponse({
      answer: "first agent output",
      planner_output: {
        meta_plan: plan(["researcher", "responder"], 1, 1),
        selected_agent: "researcher",
      },
      terminated: false,
    }),
    makeResponse({
      answer: "final answer",
      planner_output: {
        meta_plan: plan(["researcher", "responder"], 2, 2),
        selected_agent: "responder",
      },
      terminated: true,
    }),
  ];
}

describe("ClientSession rounds", () => {
  it("auto-reinvokes until terminated and renders the first output before the second request", async () => {
    const transport = new FakeTransport(twoRoundScript());
    const session = new ClientSession(transport, new MemoryStore());
    await session.ask("how do I fix it?");

    expect(transport.requests).toHaveLength(2);
    // Streaming order: the first round's output is observed before the
    // client issues the second round's request.
    expect(transport.trace).toEqual([
      "request:1",
      "output:first agent output",
      "request:2",
      "output:final answer",
    ]);
    expect(session.messages).toEqual([
      { role: "user", text: "how do I fix it?" },
      { role: "assistant", text: "first agent output" },
      { role: "assistant", text: "final answer" },
    ]);
  });

  it("carries the meta-plan and full history into the follow-up request", async () => {
    const transport = new FakeTransport(twoRoundScript());
    const session = new ClientSession(transport, new MemoryStore());
    await session.ask("how do I fix it?");

    const second = transport.requests[1]!;
    expect(second.question).toBe("");
    expect(second.meta_plan).toEqual(plan(["researcher", "responder"], 1, 1));
    expect(second.messages).toEqual([
      { role: "user", text: "how do I fix it?" },
      { role: "assistant", text: "first agent output" },
    ]);
  });

  it("rendered history is exactly what the next request would send", async () => {
    const transport = new FakeTransport([
      makeResponse({ answer: "done", terminated: true }),
    ]);
    const session = new ClientSession(transport, new MemoryStore());
    await session.ask("q1");
    expect(session.nextRequest("q2").messages).toEqual(session.messages);
  });

  it("stop prevents auto-reinvocation after the current round", async () => {
    const transport = new FakeTransport(twoRoundScript());
    const session = new ClientSession(transport, new MemoryStore());
    await session.ask("how do I fix it?", {
      onEvent: (event) => {
        if (event.event === "agent-output") session.stop();
      },
    });
    expect(transport.requests).toHaveLength(1);
    expect(session.messages.at(-1)).toEqual({
      role: "assistant",
      text: "first agent output",
    });
  });

  it("allows only one in-flight round", async () => {
    const transport = new FakeTransport([
      makeResponse({ answer: "a", terminated: true }),
    ]);
    const session = new ClientSession(transport, new MemoryStore());
    const first = session.ask("q1");
    await expect(session.ask("q2")).rejects.toThrow("already in flight");
    await first;
  });

  it("surfaces gateway error events with the opaque error id", async () => {
    const transport = new FakeTransport([]);
    transport.chat = async function* () {
      yield { event: "round-started" } as const;
      yield { event: "error", error_id: "abc123" } as const;
    };
    const session = new ClientSession(transport, new MemoryStore());
    await expect(session.ask("q")).rejects.toThrow("abc123");
  });
});

describe("session persistence", () => {
  it("survives a page reload via browser storage", async () => {
    const store = new MemoryStore();
    const transport = new FakeTransport([
      makeResponse({
        answer: "remembered",
        planner_output: { meta_plan: plan(["a"], 1, 1), selected_agent: "a" },
        terminated: true,
      }),
    ]);
    const before = new ClientSession(transport, store);
    await before.ask("remember me");

    const after = new ClientSession(new FakeTransport([]), store);
    expect(after.sessionId).toBe(before.sessionId);
    expect(after.messages).toEqual(before.messages);
    expect(after.metaPlan).toEqual(plan(["a"], 1, 1));
  });

  it("starts a fresh session when storage is empty", () => {
    const a = new ClientSession(new FakeTransport([]), new MemoryStore());
    const b = new ClientSession(new FakeTransport([]), new MemoryStore());
    expect(a.sessionId).not.toBe(b.sessionId);
    expect(a.messages).toEqual([]);
  });
});

describe("plugin round-trip", () => {
  it("sends the edited queries verbatim as skill data", async () => {
    const transport = new FakeTransport([
      makeResponse({
        answer: "Generated queries:\noriginal query",
        plugin_payloads: [queryPayload(["original query", "second query"])],
        terminated: true,
      }),
      makeResponse({ answer: "executed", terminated: true }),
    ]);
    const session = new ClientSession(transport, new MemoryStore());
    await session.ask("draft a query");

    const card = new QueryPluginCard(session.pendingPlugins[0]!);
    card.editQuery(0, "edited query text");
    card.setChecked(1, false);
    await session.submitSkillData(card.buildSkillData());

    const submitted = transport.requests[1]!;
    expect(submitted.skill_data).toEqual({
      kind: "telemetry-query",
      payload: { queries: ["edited query text"], target: "loginstore" },
    });
    expect(session.messages.at(-1)).toEqual({
      role: "assistant",
      text: "executed",
    });
  });
});

describe("feedback", () => {
  it("posts stars and attaches text only when provided", async () => {
    const transport = new FakeTransport([]);
    const session = new ClientSession(transport, new MemoryStore());
    await session.submitFeedback(5);
    await session.submitFeedback(2, "too slow");
    expect(transport.feedbacks[0]).toEqual({
      stars: 5,
      session_id: session.sessionId,
    });
    expect(transport.feedbacks[1]).toEqual({
      stars: 2,
      text: "too slow",
      session_id: session.sessionId,
    });
  });

  it("blocks out-of-range ratings client-side", async () => {
    const transport = new FakeTransport([]);
    const session = new ClientSession(transport, new MemoryStore());
    for (const stars of [0, 6, 2.5]) {
      await expect(session.submitFeedback(stars)).rejects.toThrow("1 to 5");
    }
    expect(transport.feedbacks).toHaveLength(0);
  });
});
