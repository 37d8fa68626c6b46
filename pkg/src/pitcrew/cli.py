"""Operator command line: ingest corpora, serve the gateway, chat in the
terminal, run evaluations, print stats.

Exit codes: 0 success, 1 evaluation threshold failure, 2 configuration
error.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import yaml

from . import config as tenant_config
from .evalkit import (eval_answer_similarity, eval_planner, eval_tsg,
                      load_cases, summarize_reports, write_report)
from .gateway import compute_stats, create_app
from .orchestrator import ChatTurn, MetaPlan
from .pipeline import ChunkingSpec, run_pipeline
from .provider import ChatMessage

EXIT_OK = 0
EXIT_THRESHOLD = 1
EXIT_CONFIG = 2


@click.group()
@click.option("--config", "config_path", required=True,
              type=click.Path(), help="Tenant config file.")
@click.option("--tenant", default=None, help="Tenant name override.")
@click.option("--verbose", is_flag=True, default=False)
@click.pass_context
def main(ctx, config_path, tenant, verbose):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = Path(config_path)
    ctx.obj["tenant"] = tenant


def _load(ctx, load_indexes=True):
    try:
        return tenant_config.load_tenant(ctx.obj["config_path"],
                                         load_indexes=load_indexes)
    except tenant_config.ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


@main.command()
@click.option("--kind", "kinds", multiple=True,
              type=click.Choice(["tsg", "icm", "code"]),
              help="Corpus kind(s) to ingest; default all configured.")
@click.pass_context
def ingest(ctx, kinds):
    """Run the preprocessing pipeline and write index files."""
    runtime = _load(ctx, load_indexes=False)
    sources = runtime.config.get("sources", [])
    if kinds:
        sources = [s for s in sources if s["kind"] in kinds]
    if not sources:
        click.echo("no matching sources configured", err=True)
        sys.exit(EXIT_CONFIG)
    chunk_cfg = runtime.config.get("chunking", {})
    spec = ChunkingSpec(
        max_tokens=int(chunk_cfg.get("max_tokens", 1000)),
        overlap_tokens=int(chunk_cfg.get("overlap_tokens", 200)),
        neighbor_window=int(chunk_cfg.get("neighbor_window", 5)),
    )
    paths = tenant_config.index_paths(runtime.config, runtime.base_dir)
    for source in sources:
        source = dict(source)
        source["path"] = str(runtime.base_dir / source["path"])
        try:
            manifest = run_pipeline(source, runtime.provider,
                                    paths[source["kind"]], spec)
        except Exception as exc:
            click.echo(f"ingest failed for {source['kind']}: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        click.echo(f"indexed {manifest['chunk_count']} chunks ({source['kind']})")


@main.command()
@click.pass_context
def serve(ctx):
    """Serve the chat gateway until interrupted."""
    import uvicorn
    runtime = _load(ctx)
    app = create_app(runtime.orchestrator, runtime.telemetry,
                     token=runtime.gateway_token)
    uvicorn.run(app, host="0.0.0.0", port=runtime.gateway_port)


@main.command()
@click.pass_context
def chat(ctx):
    """Interactive terminal chat; '/feedback N [text]' records stars."""
    runtime = _load(ctx)
    history: list[ChatMessage] = []
    plan = MetaPlan()
    click.echo("pitcrew chat (empty line to exit)")
    while True:
        try:
            question = click.prompt("you", default="", show_default=False)
        except (EOFError, click.Abort):
            break
        if not question:
            break
        if question.startswith("/feedback"):
            parts = question.split(maxsplit=2)
            try:
                stars = int(parts[1])
                assert 1 <= stars <= 5
            except (IndexError, ValueError, AssertionError):
                click.echo("usage: /feedback <1-5> [text]")
                continue
            runtime.telemetry.emit("feedback_stars",
                                   {"user_id": "cli", "session_id": "cli",
                                    "stars": stars})
            if len(parts) == 3:
                runtime.telemetry.emit("feedback_text",
                                       {"user_id": "cli", "session_id": "cli",
                                        "stars": stars, "text": parts[2]})
            click.echo("feedback recorded")
            continue
        turn_question = question
        # Auto-reinvoke rounds until the manager terminates.
        while True:
            turn = ChatTurn(history=list(history), question=turn_question,
                            meta_plan=plan)
            try:
                result = runtime.orchestrator.run_round(
                    turn,
                    on_event=lambda kind, payload: click.echo(
                        f"  [{kind}] {json.dumps(payload, default=str)}"))
            except Exception as exc:
                click.echo(f"round failed: {exc}", err=True)
                break
            plan = result.meta_plan
            if turn_question:
                history.append(ChatMessage("user", turn_question))
                turn_question = ""
            if result.agent_output:
                history.append(ChatMessage("assistant", result.agent_output))
                click.echo(f"{result.agent or 'copilot'}: {result.agent_output}")
            if result.terminated:
                plan = MetaPlan(agents=plan.agents, cursor=plan.cursor, round=0)
                break


@main.command("eval")
@click.option("--eval-config", "eval_config_path", required=True,
              type=click.Path(exists=True),
              help="Evaluation config listing enabled evaluators.")
@click.pass_context
def eval_cmd(ctx, eval_config_path):
    """Run the configured evaluators; nonzero exit on threshold failure."""
    runtime = _load(ctx)
    eval_cfg = yaml.safe_load(Path(eval_config_path).read_text(encoding="utf-8")) or {}
    base = Path(eval_config_path).parent
    out_dir = base / eval_cfg.get("report_dir", "reports")
    reports = []
    failed = False

    for entry in eval_cfg.get("evaluators", []):
        kind = entry["kind"]
        try:
            if kind == "planner":
                cases = load_cases(base / entry["cases"], "planner")

                def select(question):
                    turn = ChatTurn(history=[], question=question)
                    result = runtime.orchestrator.run_round(turn)
                    return set(result.skill_outputs)

                report = eval_planner(cases, select, runs=int(entry.get("runs", 1)))
                threshold = entry.get("min_coverage")
                if threshold is not None and report["coverage"] < threshold:
                    failed = True
            elif kind == "tsg":
                cases = load_cases(base / entry["cases"], "tsg")

                def retrieve(question):
                    ctx_ = runtime.retriever.retrieve_tsg(question,
                                                          now=runtime.clock())
                    return {item.chunk.id for item in ctx_.items}

                report = eval_tsg(cases, retrieve)
                threshold = entry.get("min_recall")
                if threshold is not None and (report["recall"] or 0) < threshold:
                    failed = True
                threshold = entry.get("min_coverage")
                if threshold is not None and report["coverage"] < threshold:
                    failed = True
            elif kind == "answer_similarity":
                pairs = []
                for line in (base / entry["pairs"]).read_text(
                        encoding="utf-8").splitlines():
                    if line.strip():
                        rec = json.loads(line)
                        pairs.append((rec["answer"], rec["golden"]))
                report = eval_answer_similarity(
                    pairs, runtime.provider,
                    threshold=float(entry.get("threshold", 4.0)))
                if not report["passed"]:
                    failed = True
            else:
                click.echo(f"unknown evaluator kind {kind!r}", err=True)
                sys.exit(EXIT_CONFIG)
        except FileNotFoundError as exc:
            click.echo(f"missing case file: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        reports.append(report)
        write_report(report, out_dir)

    click.echo(summarize_reports(reports))
    sys.exit(EXIT_THRESHOLD if failed else EXIT_OK)


@main.command()
@click.pass_context
def stats(ctx):
    """Print aggregate telemetry statistics."""
    runtime = _load(ctx)
    click.echo(json.dumps(compute_stats(runtime.telemetry.read_events()),
                          indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
