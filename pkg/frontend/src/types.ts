/** Wire types for the chat gateway's external interface. */

export interface Message {
  role: "user" | "assistant";
  text: string;
}

export interface MetaPlan {
  agents: string[];
  cursor: number;
  round: number;
}

export interface PluginPayload {
  kind: string;
  queries: string[];
  targets: string[];
}

export interface SkillData {
  kind: string;
  payload: { queries: string[]; target?: string };
}

export interface ChatRequest {
  question: string;
  messages: Message[];
  meta_plan: MetaPlan;
  session_id: string;
  skill_data?: SkillData;
}

export interface SkillOutputRecord {
  payload: unknown;
  error: string | null;
}

export interface ChatResponse {
  answer: string;
  skill_outputs: Record<string, SkillOutputRecord>;
  planner_output: { meta_plan: MetaPlan; selected_agent: string | null };
  plugin_payloads: PluginPayload[];
  retrieved_contexts: unknown[];
  terminated: boolean;
}

/** One server-sent event; the gateway tags every JSON object with `event`. */
export type GatewayEvent =
  | { event: "round-started" }
  | { event: "skill-completed"; skill: string; error: string | null }
  | { event: "agent-selected"; agent: string }
  | { event: "agent-output"; text: string }
  | { event: "round-complete"; response: ChatResponse }
  | { event: "error"; error_id: string };

export interface FeedbackRequest {
  stars: number;
  text?: string;
  session_id: string;
}

/** The only surface the session layer needs from the network. */
export interface Transport {
  chat(body: ChatRequest): AsyncIterable<GatewayEvent>;
  feedback(body: FeedbackRequest): Promise<void>;
}

export const emptyPlan = (): MetaPlan => ({ agents: [], cursor: 0, round: 0 });
