"""Tenant configuration: one YAML file covering sources, retrieval settings,
agents/skills, provider, and gateway, with environment-variable overrides
for the operational knobs (port, token, telemetry path).

The builtin skill kinds wire the registries to the rest of the engine:

- ``builtin-retrieval``: get_tsg / get_icm / get_code over loaded indexes
- ``query-generator``: produces a query for human approval via a frontend
  plugin card
- ``query-executor``: runs a plugin-approved query on the user's behalf
- ``echo``: returns canned text (useful for tests and stub skills)
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from datetime import date, datetime
from pathlib import Path

import yaml

from .gateway import TelemetrySink
from .indexstore import Index
from .orchestrator import (AgentDefinition, ArgSpec, Orchestrator,
                           SkillDefinition, SkillOutput)
from .provider import (ChatMessage, CompletionRequest, HttpProvider,
                       ProviderError, ScriptedBehavior, ScriptedProvider,
                       ScriptedRule)
from .querygen import QueryCompiler
from .retrieval import RerankWeights, RetrievalConfig, Retriever


class ConfigError(Exception):
    pass


def load_behaviors(path: Path) -> ScriptedBehavior:
    data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    rules = [ScriptedRule(pattern=r["pattern"], response=r["response"],
                          regex=bool(r.get("regex", False)))
             for r in data.get("rules", [])]
    return ScriptedBehavior(matchers=rules, default=data.get("default"))


def build_provider(cfg: dict, base_dir: Path):
    ptype = cfg.get("type", "scripted")
    if ptype == "scripted":
        behaviors_path = cfg.get("behaviors")
        behavior = (load_behaviors(base_dir / behaviors_path)
                    if behaviors_path else ScriptedBehavior(default=""))
        return ScriptedProvider(behavior, dimension=int(cfg.get("dimension", 256)))
    if ptype == "http":
        return HttpProvider(
            base_url=cfg["base_url"],
            api_key_env=cfg.get("api_key_env", "PITCREW_API_KEY"),
            completion_model=cfg.get("completion_model", "default"),
            embedding_model=cfg.get("embedding_model", "default"),
            dimension=int(cfg.get("dimension", 256)),
            timeout=float(cfg.get("timeout", 30.0)),
            retries=int(cfg.get("retries", 1)),
        )
    raise ConfigError(f"unknown provider type {ptype!r}")


def build_retrieval_config(cfg: dict) -> RetrievalConfig:
    weights_cfg = cfg.get("weights", {})
    return RetrievalConfig(
        top_k=int(cfg.get("top_k", 4)),
        per_query_n=int(cfg.get("per_query_n", 20)),
        weights=RerankWeights(
            alpha=float(weights_cfg.get("alpha", 1 / 3)),
            beta=float(weights_cfg.get("beta", 1 / 3)),
            gamma=float(weights_cfg.get("gamma", 1 / 3)),
        ),
        time_decay_tau=float(cfg.get("time_decay_tau", 180.0)),
        margin_delta=float(cfg.get("margin_delta", 0.2)),
    )


def _render_context(ctx) -> str:
    parts = []
    for src, desc in sorted(ctx.repo_descriptions.items()):
        if desc:
            parts.append(f"[{src}] {desc}")
    for item in ctx.items:
        c = item.chunk
        title = c.fields.get("title", c.id)
        body = (c.fields.get("summary") or c.fields.get("content")
                or c.fields.get("description", ""))
        entry = f"{title} ({c.id}):\n{body}"
        mitigation = c.fields.get("mitigation")
        if mitigation:
            entry += f"\nMitigation: {mitigation}"
        parts.append(entry)
        for rel in item.related:
            parts.append(f"related {rel.id}:\n{rel.fields.get('content', '')}")
    return "\n\n".join(parts) if parts else "(no documents found)"


def make_skill(cfg: dict, retriever: Retriever, provider, clock) -> SkillDefinition:
    name = cfg["name"]
    kind = cfg.get("kind", "echo")
    description = cfg.get("description", name)
    deps = tuple(cfg.get("dependencies", []))
    args = tuple(ArgSpec(a["name"], a.get("semantic_type", "string"),
                         bool(a.get("required", True)))
                 for a in cfg.get("args", []))

    if kind == "builtin-retrieval":
        target = cfg.get("target")
        if target not in ("tsg", "icm", "code"):
            raise ConfigError(f"skill {name}: invalid retrieval target {target!r}")

        def run(call_args, context, _target=target):
            question = str(call_args.get("user_intent") or call_args.get("question")
                           or (context["history"][-1].text if context["history"] else ""))
            now = clock()
            if _target == "tsg":
                ctx = retriever.retrieve_tsg(
                    question, call_args.get("incident_summary"), now=now)
            elif _target == "icm":
                ctx = retriever.retrieve_icm(question, context["history"], now=now)
            else:
                ctx = retriever.retrieve_code(question, now=now)
            return SkillOutput(skill=name, payload=_render_context(ctx),
                               retrieved=ctx)

        return SkillDefinition(name=name, description=description, run=run,
                               arg_specs=args or (ArgSpec("user_intent"),),
                               dependencies=deps,
                               direct_return=bool(cfg.get("direct_return", False)))

    if kind == "query-generator":
        plugin_kind = cfg.get("plugin_kind", "query")
        targets = list(cfg.get("targets", []))

        def run(call_args, context):
            prompt = cfg.get("prompt",
                             "Generate a telemetry query for the question. "
                             "Reply with the query text.")
            question = str(call_args.get("user_intent")
                           or (context["history"][-1].text if context["history"] else ""))
            try:
                query_text = provider.complete(CompletionRequest(messages=(
                    ChatMessage("system", prompt), ChatMessage("user", question))))
            except ProviderError as exc:
                return SkillOutput(skill=name, error=str(exc))
            queries = [q for q in str(query_text).split("\n---\n") if q.strip()]
            return SkillOutput(
                skill=name,
                payload="Generated queries:\n" + "\n".join(queries),
                plugin_payload={"kind": plugin_kind, "queries": queries,
                                "targets": targets})

        return SkillDefinition(name=name, description=description, run=run,
                               arg_specs=args, dependencies=deps,
                               direct_return=bool(cfg.get("direct_return", True)),
                               plugin_kind=plugin_kind)

    if kind == "query-executor":
        plugin_kind = cfg.get("plugin_kind", "query")

        def run(call_args, context):
            queries = call_args.get("queries")
            if queries is None and "query" in call_args:
                queries = [call_args["query"]]
            if not queries:
                raise ValueError("no queries to execute")
            target = call_args.get("target", "default")
            lines = [f"executed on {target}: {q}" for q in queries]
            return SkillOutput(skill=name, payload="\n".join(lines))

        return SkillDefinition(name=name, description=description, run=run,
                               arg_specs=args, dependencies=deps,
                               direct_return=True, plugin_kind=plugin_kind,
                               plugin_executor=True)

    if kind == "echo":
        def run(call_args, context):
            return SkillOutput(skill=name,
                               payload=str(call_args.get("text", cfg.get("text", ""))))

        return SkillDefinition(name=name, description=description, run=run,
                               arg_specs=args, dependencies=deps,
                               direct_return=bool(cfg.get("direct_return", False)))

    raise ConfigError(f"skill {name}: unknown kind {kind!r}")


@dataclass
class TenantRuntime:
    name: str
    base_dir: Path
    config: dict
    provider: object
    retriever: Retriever
    orchestrator: Orchestrator
    telemetry: TelemetrySink
    clock: object

    @property
    def gateway_port(self) -> int:
        return int(os.environ.get("PITCREW_PORT",
                                  self.config.get("gateway", {}).get("port", 8080)))

    @property
    def gateway_token(self) -> str:
        return os.environ.get("PITCREW_TOKEN",
                              self.config.get("gateway", {}).get("token", ""))


def index_paths(config: dict, base_dir: Path) -> dict[str, Path]:
    index_dir = base_dir / config.get("indexes", {}).get("dir", "indexes")
    return {kind: index_dir / f"{kind}.jsonl" for kind in ("tsg", "icm", "code")}


def load_tenant(config_path: str | Path, load_indexes: bool = True) -> TenantRuntime:
    config_path = Path(config_path)
    if not config_path.is_file():
        raise ConfigError(f"missing config file: {config_path}")
    base_dir = config_path.parent
    try:
        config = yaml.safe_load(config_path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {config_path}: {exc}")

    provider = build_provider(config.get("provider", {}), base_dir)

    # Pinnable clock so time filters and recency decay are testable.
    pinned = config.get("now")
    if pinned:
        fixed = datetime.strptime(str(pinned), "%Y-%m-%d").date()
        clock = lambda: fixed
    else:
        clock = date.today

    compiler = QueryCompiler(
        provider,
        top_n=int(config.get("retrieval", {}).get("per_query_n", 20)),
        fewshot_icm=_resolve(base_dir, config.get("fewshot", {}).get("icm")),
        fewshot_code=_resolve(base_dir, config.get("fewshot", {}).get("code")),
    )

    paths = index_paths(config, base_dir)
    indexes = {}
    if load_indexes:
        for kind, path in paths.items():
            if path.exists():
                indexes[kind] = Index.load(path)

    retriever = Retriever(
        compiler,
        config=build_retrieval_config(config.get("retrieval", {})),
        icm_index=indexes.get("icm"),
        tsg_index=indexes.get("tsg"),
        code_index=indexes.get("code"),
        repo_descriptions=dict(config.get("repo_descriptions", {})),
        context_ids=list(config.get("context_ids", [])),
    )

    skills = {}
    for scfg in config.get("skills", []):
        sd = make_skill(scfg, retriever, provider, clock)
        skills[sd.name] = sd
    agents = {}
    for acfg in config.get("agents", []):
        final_prompt = acfg.get("final_prompt")
        prompt_file = acfg.get("final_prompt_file")
        if prompt_file:
            final_prompt = (base_dir / prompt_file).read_text(encoding="utf-8")
        agents[acfg["name"]] = AgentDefinition(
            name=acfg["name"],
            description=acfg.get("description", acfg["name"]),
            skills=tuple(acfg.get("skills", [])),
            final_prompt=final_prompt,
            next_agent_hint=acfg.get("next_agent_hint"),
        )

    fewshot = config.get("selection_fewshot", "")
    if isinstance(fewshot, list):
        fewshot = "\n".join(json.dumps(e, sort_keys=True) for e in fewshot)

    orchestrator = Orchestrator(
        agents=agents, skills=skills, provider=provider,
        default_agent=config.get("default_agent"),
        max_rounds=int(config.get("max_rounds", 5)),
        selection_fewshot=fewshot,
    )

    gateway_cfg = config.get("gateway", {})
    telemetry = TelemetrySink(
        path=base_dir / gateway_cfg.get("telemetry", "telemetry.jsonl"),
        detail_enabled=bool(gateway_cfg.get("detail_logging", False)),
    )

    return TenantRuntime(
        name=config.get("tenant", config_path.stem),
        base_dir=base_dir, config=config, provider=provider,
        retriever=retriever, orchestrator=orchestrator,
        telemetry=telemetry, clock=clock,
    )


def _resolve(base_dir: Path, rel: str | None) -> Path | None:
    return (base_dir / rel) if rel else None
