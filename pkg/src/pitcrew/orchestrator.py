"""Per-round agent orchestration.

Each backend invocation executes at most one agent. The Manager runs the
termination check and the meta-plan update concurrently; the Executor
selects skills for the chosen agent, orders them into dependency stages,
runs each stage's skills in parallel, and optionally makes one final
completion call. The meta-plan travels inside the request/response, so the
orchestrator holds no session state and is safe to share across requests.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .provider import (ChatMessage, CompletionRequest, ProviderError,
                       ResponseSchema, SchemaField)

logger = logging.getLogger(__name__)

DEFAULT_MAX_ROUNDS = 5


class OrchestrationError(Exception):
    pass


class DependencyCycle(OrchestrationError):
    pass


@dataclass(frozen=True)
class ArgSpec:
    name: str
    semantic_type: str = "string"
    required: bool = True


@dataclass
class SkillDefinition:
    name: str
    description: str
    run: object  # callable(args: dict, context: dict) -> SkillOutput
    arg_specs: tuple[ArgSpec, ...] = ()
    dependencies: tuple[str, ...] = ()
    direct_return: bool = False
    plugin_kind: str | None = None  # set for skills that emit plugin payloads
    plugin_executor: bool = False  # consumes user-approved plugin payloads

    def __post_init__(self):
        names = [a.name for a in self.arg_specs]
        if len(set(names)) != len(names):
            raise ValueError(f"skill {self.name}: duplicate arg names")


@dataclass
class AgentDefinition:
    name: str
    description: str
    skills: tuple[str, ...]
    final_prompt: str | None = None
    next_agent_hint: str | None = None


@dataclass
class MetaPlan:
    agents: list[str] = field(default_factory=list)
    cursor: int = 0
    round: int = 0

    def to_record(self) -> dict:
        return {"agents": list(self.agents), "cursor": self.cursor, "round": self.round}

    @classmethod
    def from_record(cls, rec: dict | None) -> "MetaPlan":
        if not rec:
            return cls()
        plan = cls(agents=list(rec.get("agents", [])),
                   cursor=int(rec.get("cursor", 0)),
                   round=int(rec.get("round", 0)))
        if plan.cursor > len(plan.agents) or plan.cursor < 0 or plan.round < 0:
            raise ValueError("invalid meta-plan state")
        return plan

    def exhausted(self) -> bool:
        return self.cursor >= len(self.agents)


@dataclass
class SkillOutput:
    skill: str
    payload: object = ""
    plugin_payload: dict | None = None
    retrieved: object = None
    error: str | None = None


@dataclass
class RoundResult:
    agent: str | None
    agent_output: str
    skill_outputs: dict[str, SkillOutput]
    meta_plan: MetaPlan
    terminated: bool


_PLAN_SCHEMA = ResponseSchema("meta_plan", (SchemaField("agents", "list"),))
_TERMINATION_SCHEMA = ResponseSchema("termination", (SchemaField("terminated", "bool"),))
_SELECT_SCHEMA = ResponseSchema("skill_selection", (SchemaField("skills", "list"),))


def _history_text(history: list[ChatMessage]) -> str:
    return "\n".join(f"{m.role}: {m.text}" for m in history)


def plan_meta(history: list[ChatMessage], agents: dict[str, AgentDefinition],
              provider, prior_plan: MetaPlan | None = None,
              default_agent: str | None = None,
              max_rounds: int = DEFAULT_MAX_ROUNDS) -> MetaPlan:
    """Ask the provider for an ordered agent sequence; unknown names get one
    retry, then the plan falls back to the default agent. Plan length is
    clamped to max_rounds."""
    if not agents:
        raise OrchestrationError("no registered agents")
    if default_agent is None:
        default_agent = sorted(agents)[0]
    catalog = "\n".join(
        f"- {a.name}: {a.description}"
        + (f" (suggested next: {a.next_agent_hint})" if a.next_agent_hint else "")
        for a in agents.values())
    system = ("Choose the ordered sequence of agents to answer the user. "
              "Reply with a record {agents}. Available agents:\n" + catalog)
    if prior_plan and prior_plan.agents:
        system += "\nCurrent plan: " + ", ".join(prior_plan.agents)
    request = CompletionRequest(
        messages=(ChatMessage("system", system),
                  ChatMessage("user", _history_text(history) or "(no history)")),
        response_schema=_PLAN_SCHEMA)
    names = None
    for _ in range(2):  # one retry on unknown agent names
        try:
            rec = provider.complete(request)
        except ProviderError:
            break
        candidate = [str(n) for n in rec["agents"]]
        if candidate and all(n in agents for n in candidate):
            names = candidate
            break
    if names is None:
        names = [default_agent]
    names = names[:max_rounds]
    plan = MetaPlan(agents=names,
                    cursor=prior_plan.cursor if prior_plan else 0,
                    round=prior_plan.round if prior_plan else 0)
    # A shrunken replan must not strand the cursor past the end.
    plan.cursor = min(plan.cursor, len(plan.agents))
    return plan


def decide_termination(history: list[ChatMessage], provider, plan: MetaPlan,
                       max_rounds: int = DEFAULT_MAX_ROUNDS) -> bool:
    """True when the conversation is answered, the plan is exhausted, or the
    round budget is spent. Provider failure is a safe stop (True)."""
    if not history:
        raise ValueError("history must be nonempty")
    if plan.round >= max_rounds:
        return True
    if plan.agents and plan.exhausted():
        return True
    system = (
        "Decide whether the conversation below already answers the user's "
        "question. Terminate when the last assistant message resolves the "
        "question, when the user only acknowledged, or when no further agent "
        "could add information. Do not terminate when an agent output is "
        "still pending. Example: a complete answer followed by no new user "
        "question -> {\"terminated\": true}. Reply with a record {terminated}.")
    request = CompletionRequest(
        messages=(ChatMessage("system", system),
                  ChatMessage("user", _history_text(history))),
        response_schema=_TERMINATION_SCHEMA)
    try:
        return bool(provider.complete(request)["terminated"])
    except ProviderError:
        return True


def select_skills(agent: AgentDefinition, history: list[ChatMessage], provider,
                  registry: dict[str, SkillDefinition],
                  fewshot: str = "") -> list[tuple[str, dict]]:
    """Provider chooses (skill, args) pairs from the agent's skill set.
    Out-of-set skills are dropped; a skill missing a required arg gets one
    retry, then is dropped with a logged reason. Provider failure yields an
    empty selection."""
    catalog = []
    for name in agent.skills:
        sd = registry[name]
        args = ", ".join(f"{a.name}:{a.semantic_type}"
                         + ("" if a.required else "?") for a in sd.arg_specs)
        catalog.append(f"- {name}({args}): {sd.description}")
    system = (
        "Select the skills to run for this agent and their arguments. Reply "
        "with a record {skills} whose entries are records {name, args}.\n"
        "Available skills:\n" + "\n".join(catalog))
    if fewshot:
        system += "\nExamples:\n" + fewshot
    request = CompletionRequest(
        messages=(ChatMessage("system", system),
                  ChatMessage("user", _history_text(history))),
        response_schema=_SELECT_SCHEMA)

    def attempt():
        rec = provider.complete(request)
        out = []
        for entry in rec["skills"]:
            if not isinstance(entry, dict) or "name" not in entry:
                continue
            out.append((str(entry["name"]), dict(entry.get("args", {}))))
        return out

    try:
        pairs = attempt()
    except ProviderError:
        return []
    selected = []
    for name, args in pairs:
        if name not in agent.skills or name not in registry:
            logger.info("dropping skill %r: not in agent %s", name, agent.name)
            continue
        missing = [a.name for a in registry[name].arg_specs
                   if a.required and a.name not in args]
        if missing:
            try:  # one retry for the whole selection
                retried = dict(attempt())
                args = {**retried.get(name, args)}
                missing = [a.name for a in registry[name].arg_specs
                           if a.required and a.name not in args]
            except ProviderError:
                pass
        if missing:
            logger.info("dropping skill %r: missing required args %s", name, missing)
            continue
        selected.append((name, args))
    return selected


def build_execution_plan(selected: list[str],
                         registry: dict[str, SkillDefinition]) -> list[list[str]]:
    """Topological levels of the dependency sub-graph over the selection.
    Dependencies on unselected skills are ignored; skills within a stage are
    name-ordered for determinism."""
    chosen = set(selected)
    deps = {name: {d for d in registry[name].dependencies if d in chosen}
            for name in chosen}
    stages = []
    remaining = dict(deps)
    while remaining:
        ready = sorted(n for n, d in remaining.items() if not d)
        if not ready:
            cycle = sorted(remaining)
            raise DependencyCycle(f"dependency cycle among skills: {cycle}")
        stages.append(ready)
        for n in ready:
            del remaining[n]
        for d in remaining.values():
            d.difference_update(ready)
    return stages


def _render_payload(payload) -> str:
    if isinstance(payload, str):
        return payload
    import json
    return json.dumps(payload, sort_keys=True, default=str)


def execute_agent(agent: AgentDefinition, history: list[ChatMessage], provider,
                  registry: dict[str, SkillDefinition],
                  fewshot: str = "", on_event=None) -> tuple[str, dict[str, SkillOutput]]:
    """Run one agent: select skills, execute the dependency stages (skills
    within a stage run concurrently), then either return a direct-return
    skill's payload or make the agent's final completion."""
    selection = select_skills(agent, history, provider, registry, fewshot)
    stages = build_execution_plan([name for name, _ in selection], registry)
    args_by_name = dict(selection)
    outputs: dict[str, SkillOutput] = {}
    context = {"history": list(history)}

    def run_one(name: str) -> SkillOutput:
        sd = registry[name]
        args = dict(args_by_name.get(name, {}))
        # Upstream outputs resolved by name-keyed substitution.
        for dep in sd.dependencies:
            if dep in outputs and outputs[dep].error is None:
                args.setdefault(dep, outputs[dep].payload)
        try:
            result = sd.run(args, context)
            if not isinstance(result, SkillOutput):
                result = SkillOutput(skill=name, payload=result)
            return result
        except Exception as exc:  # a failing skill must not sink the round
            logger.warning("skill %s failed: %s", name, exc)
            return SkillOutput(skill=name, error=str(exc))

    for stage in stages:
        with ThreadPoolExecutor(max_workers=len(stage)) as pool:
            results = list(pool.map(run_one, stage))
        for name, result in zip(stage, results):  # merge by name order
            outputs[name] = result
            if on_event:
                on_event("skill-completed", {"skill": name,
                                             "error": result.error})

    for name in sorted(outputs):
        sd = registry[name]
        out = outputs[name]
        if sd.direct_return and out.error is None and out.payload:
            return _render_payload(out.payload), outputs

    good = {n: o for n, o in sorted(outputs.items()) if o.error is None}
    if agent.final_prompt is not None:
        context_text = "\n\n".join(
            f"[{n}]\n{_render_payload(o.payload)}" for n, o in good.items())
        request = CompletionRequest(
            messages=(ChatMessage("system", agent.final_prompt),
                      ChatMessage("user",
                                  _history_text(history)
                                  + ("\n\nContext:\n" + context_text
                                     if context_text else ""))))
        try:
            answer = provider.complete(request)
        except ProviderError as exc:
            answer = f"(agent {agent.name} could not produce a final answer: {exc})"
        return str(answer), outputs
    # No final prompt: concatenated skill outputs are the agent output.
    return "\n\n".join(_render_payload(o.payload) for o in good.values()), outputs


@dataclass
class ChatTurn:
    """Wire-level view of one round request, already validated."""
    history: list[ChatMessage]
    question: str
    skill_data: dict | None = None
    meta_plan: MetaPlan = field(default_factory=MetaPlan)


class Orchestrator:
    """Stateless round executor over fixed agent/skill registries."""

    def __init__(self, agents: dict[str, AgentDefinition],
                 skills: dict[str, SkillDefinition],
                 provider, default_agent: str | None = None,
                 max_rounds: int = DEFAULT_MAX_ROUNDS,
                 selection_fewshot: str = ""):
        for agent in agents.values():
            unknown = [s for s in agent.skills if s not in skills]
            if unknown:
                raise OrchestrationError(
                    f"agent {agent.name} references unknown skills {unknown}")
        self.agents = agents
        self.skills = skills
        self.provider = provider
        self.default_agent = default_agent or (sorted(agents)[0] if agents else None)
        self.max_rounds = max_rounds
        self.selection_fewshot = selection_fewshot

    def _find_plugin_executor(self, plugin_kind: str) -> SkillDefinition | None:
        for sd in self.skills.values():
            if sd.plugin_kind == plugin_kind and sd.plugin_executor:
                return sd
        return None

    def run_round(self, turn: ChatTurn, on_event=None) -> RoundResult:
        history = list(turn.history)
        if turn.question:
            history.append(ChatMessage("user", turn.question))
        if not history and not turn.skill_data:
            raise OrchestrationError("empty request: no question, history, or skill data")

        # Plugin-submitted skill data routes straight to its executor skill.
        if turn.skill_data:
            kind = str(turn.skill_data.get("kind", ""))
            sd = self._find_plugin_executor(kind)
            if sd is None:
                raise OrchestrationError(f"no executor skill for plugin kind {kind!r}")
            try:
                result = sd.run(dict(turn.skill_data.get("payload", {})),
                                {"history": history})
                if not isinstance(result, SkillOutput):
                    result = SkillOutput(skill=sd.name, payload=result)
            except Exception as exc:
                result = SkillOutput(skill=sd.name, error=str(exc))
            if on_event:
                on_event("skill-completed", {"skill": sd.name, "error": result.error})
            plan = turn.meta_plan
            plan.round += 1
            output = _render_payload(result.payload) if result.error is None \
                else f"(skill {sd.name} failed: {result.error})"
            return RoundResult(agent=None, agent_output=output,
                               skill_outputs={sd.name: result},
                               meta_plan=plan, terminated=True)

        plan = turn.meta_plan
        # Manager: termination check and replanning run concurrently.
        with ThreadPoolExecutor(max_workers=2) as pool:
            term_future = pool.submit(decide_termination, history, self.provider,
                                      plan, self.max_rounds)
            plan_future = pool.submit(plan_meta, history, self.agents,
                                      self.provider, plan, self.default_agent,
                                      self.max_rounds)
            terminated = term_future.result()
            new_plan = plan_future.result()

        if terminated:
            return RoundResult(agent=None, agent_output="",
                               skill_outputs={}, meta_plan=new_plan,
                               terminated=True)

        agent_name = (new_plan.agents[new_plan.cursor]
                      if not new_plan.exhausted() else self.default_agent)
        agent = self.agents[agent_name]
        if on_event:
            on_event("agent-selected", {"agent": agent_name})
        output, skill_outputs = execute_agent(
            agent, history, self.provider, self.skills,
            self.selection_fewshot, on_event=on_event)
        new_plan.cursor = min(new_plan.cursor + 1, len(new_plan.agents))
        new_plan.round += 1
        return RoundResult(agent=agent_name, agent_output=output,
                           skill_outputs=skill_outputs, meta_plan=new_plan,
                           terminated=False)
