import type {
  ChatRequest,
  ChatResponse,
  GatewayEvent,
  Message,
  MetaPlan,
  PluginPayload,
  SkillData,
  Transport,
} from "./types.js";
import { emptyPlan } from "./types.js";

/** Minimal storage surface (window.localStorage satisfies it). */
export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

interface PersistedState {
  sessionId: string;
  messages: Message[];
  metaPlan: MetaPlan;
}

export interface RoundHandlers {
  onEvent?: (event: GatewayEvent) => void;
}

/**
 * One conversation with the gateway. All session state lives client-side:
 * the rendered history is exactly the message list the next request sends,
 * and it persists to browser storage so a reload resumes the conversation.
 * One round is in flight at a time; `stop()` ends auto-reinvocation after
 * the current round.
 */
export class ClientSession {
  messages: Message[] = [];
  metaPlan: MetaPlan = emptyPlan();
  pendingPlugins: PluginPayload[] = [];
  readonly sessionId: string;
  private inFlight = false;
  private stopRequested = false;

  constructor(
    private transport: Transport,
    private store: KeyValueStore,
    private storageKey = "pitcrew-session",
  ) {
    const raw = this.store.getItem(this.storageKey);
    if (raw) {
      const state = JSON.parse(raw) as PersistedState;
      this.sessionId = state.sessionId;
      this.messages = state.messages;
      this.metaPlan = state.metaPlan;
    } else {
      this.sessionId = `s-${Date.now().toString(36)}-${Math.random()
        .toString(36)
        .slice(2, 8)}`;
      this.persist();
    }
  }

  get busy(): boolean {
    return this.inFlight;
  }

  /** The exact body the next round will send for `question`. */
  nextRequest(question: string, skillData?: SkillData): ChatRequest {
    const body: ChatRequest = {
      question,
      messages: [...this.messages],
      meta_plan: { ...this.metaPlan },
      session_id: this.sessionId,
    };
    if (skillData) body.skill_data = skillData;
    return body;
  }

  /** Ask a question; keeps reinvoking rounds until the manager terminates. */
  async ask(question: string, handlers: RoundHandlers = {}): Promise<void> {
    if (!question) throw new Error("question must be nonempty");
    await this.drive(question, undefined, handlers);
  }

  /** Submit an approved plugin action (edited queries) as a round. */
  async submitSkillData(
    skillData: SkillData,
    handlers: RoundHandlers = {},
  ): Promise<void> {
    await this.drive("", skillData, handlers);
  }

  /** Finish the current round but do not start another. */
  stop(): void {
    this.stopRequested = true;
  }

  async submitFeedback(stars: number, text?: string): Promise<void> {
    if (!Number.isInteger(stars) || stars < 1 || stars > 5) {
      throw new Error("stars must be an integer from 1 to 5");
    }
    const body = text
      ? { stars, text, session_id: this.sessionId }
      : { stars, session_id: this.sessionId };
    await this.transport.feedback(body);
  }

  private async drive(
    question: string,
    skillData: SkillData | undefined,
    handlers: RoundHandlers,
  ): Promise<void> {
    if (this.inFlight) throw new Error("a round is already in flight");
    this.inFlight = true;
    this.stopRequested = false;
    let pending = question;
    try {
      for (;;) {
        const body = this.nextRequest(pending, skillData);
        skillData = undefined;
        const response = await this.runRound(body, handlers);
        if (pending) {
          this.messages.push({ role: "user", text: pending });
          pending = "";
        }
        if (response.answer) {
          this.messages.push({ role: "assistant", text: response.answer });
        }
        this.metaPlan = response.planner_output.meta_plan;
        this.pendingPlugins = response.plugin_payloads;
        this.persist();
        if (response.terminated || this.stopRequested) break;
      }
    } finally {
      this.inFlight = false;
    }
  }

  private async runRound(
    body: ChatRequest,
    handlers: RoundHandlers,
  ): Promise<ChatResponse> {
    let response: ChatResponse | null = null;
    for await (const event of this.transport.chat(body)) {
      handlers.onEvent?.(event);
      if (event.event === "round-complete") response = event.response;
      if (event.event === "error") {
        throw new Error(`round failed (error id ${event.error_id})`);
      }
    }
    if (!response) throw new Error("stream ended without round-complete");
    return response;
  }

  private persist(): void {
    const state: PersistedState = {
      sessionId: this.sessionId,
      messages: this.messages,
      metaPlan: this.metaPlan,
    };
    this.store.setItem(this.storageKey, JSON.stringify(state));
  }
}
