import { PluginRegistry, QueryPluginCard } from "./plugin.js";
import { ClientSession } from "./session.js";
import { httpTransport } from "./sse.js";
import type { GatewayEvent, PluginPayload } from "./types.js";

/** Browser entry point: wires the session to a minimal DOM console. */

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("gateway") ?? "";
const token = params.get("token") ?? "";

const registry = new PluginRegistry();
registry.register("telemetry-query", (payload) => new QueryPluginCard(payload));

const session = new ClientSession(httpTransport(baseUrl, token), localStorage);

const log = document.getElementById("log") as HTMLElement;
const form = document.getElementById("ask-form") as HTMLFormElement;
const input = document.getElementById("question") as HTMLInputElement;
const stopButton = document.getElementById("stop") as HTMLButtonElement;
const plugins = document.getElementById("plugins") as HTMLElement;

function line(cssClass: string, text: string): void {
  const div = document.createElement("div");
  div.className = cssClass;
  div.textContent = text;
  log.appendChild(div);
  log.scrollTop = log.scrollHeight;
}

function renderHistory(): void {
  log.replaceChildren();
  for (const message of session.messages) {
    line(message.role, `${message.role}: ${message.text}`);
  }
}

function onEvent(event: GatewayEvent): void {
  switch (event.event) {
    case "skill-completed":
      line("status", `· ${event.skill}${event.error ? " failed" : ""}`);
      break;
    case "agent-output":
      line("assistant", `assistant: ${event.text}`);
      break;
    case "round-complete":
      renderPlugins(event.response.plugin_payloads);
      break;
  }
}

function renderPlugins(payloads: PluginPayload[]): void {
  plugins.replaceChildren();
  for (const payload of payloads) {
    const card = registry.create(payload);
    const box = document.createElement("fieldset");
    box.appendChild(Object.assign(document.createElement("legend"), {
      textContent: payload.kind,
    }));
    if (card.readOnly || !(card instanceof QueryPluginCard)) {
      box.appendChild(Object.assign(document.createElement("pre"), {
        textContent: JSON.stringify(payload, null, 2),
      }));
      plugins.appendChild(box);
      continue;
    }
    card.queries.forEach((entry, i) => {
      const row = document.createElement("div");
      const check = Object.assign(document.createElement("input"), {
        type: "checkbox",
        checked: entry.checked,
      });
      check.addEventListener("change", () => card.setChecked(i, check.checked));
      const text = Object.assign(document.createElement("input"), {
        type: "text",
        value: entry.text,
      });
      text.addEventListener("input", () => card.editQuery(i, text.value));
      row.append(check, text);
      box.appendChild(row);
    });
    const target = document.createElement("select");
    for (const option of card.targets) {
      target.appendChild(Object.assign(document.createElement("option"), {
        value: option,
        textContent: option,
      }));
    }
    target.addEventListener("change", () => card.selectTarget(target.value));
    const submit = Object.assign(document.createElement("button"), {
      textContent: "Run approved queries",
    });
    submit.addEventListener("click", () => {
      void session
        .submitSkillData(card.buildSkillData(), { onEvent })
        .then(renderHistory)
        .catch((err: Error) => line("status", err.message));
      plugins.replaceChildren();
    });
    box.append(target, submit);
    plugins.appendChild(box);
  }
}

form.addEventListener("submit", (ev) => {
  ev.preventDefault();
  const question = input.value.trim();
  if (!question || session.busy) return;
  input.value = "";
  line("user", `user: ${question}`);
  void session
    .ask(question, { onEvent })
    .then(renderHistory)
    .catch((err: Error) => line("status", err.message));
});

stopButton.addEventListener("click", () => session.stop());

const feedbackForm = document.getElementById("feedback-form") as HTMLFormElement;
feedbackForm.addEventListener("submit", (ev) => {
  ev.preventDefault();
  const stars = Number(
    (document.getElementById("stars") as HTMLInputElement).value,
  );
  const text = (document.getElementById("feedback-text") as HTMLInputElement)
    .value;
  // Out-of-range ratings never leave the client.
  if (!Number.isInteger(stars) || stars < 1 || stars > 5) {
    line("status", "rating must be 1-5 stars");
    return;
  }
  void session
    .submitFeedback(stars, text || undefined)
    .then(() => line("status", "feedback recorded"))
    .catch((err: Error) => line("status", err.message));
});

renderHistory();
