"""Stateless HTTP chat service.

POST /v1/chat streams server-sent events (one JSON object per event, tagged
with an ``event`` field): round-started, skill-completed per skill,
agent-output, and round-complete carrying the full response record. Any
request can hit any instance: the meta-plan rides inside request/response
and no session state is kept server-side.

Telemetry is an append-only line-delimited log per tenant; conversation
detail events are written only for tenants that opted in.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, Header, HTTPException, Request
from fastapi.responses import JSONResponse, StreamingResponse

from .orchestrator import ChatTurn, MetaPlan, Orchestrator
from .provider import ChatMessage
from .retrieval import RetrievedContext

logger = logging.getLogger(__name__)

TELEMETRY_KINDS = ("login", "conversation_stat", "feedback_stars",
                   "feedback_text", "conversation_detail")


@dataclass
class TelemetrySink:
    """Append-only JSONL log; appends serialized per file."""

    path: Path
    detail_enabled: bool = False
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def emit(self, kind: str, payload: dict, latency_ms: float | None = None):
        if kind not in TELEMETRY_KINDS:
            raise ValueError(f"unknown telemetry kind {kind!r}")
        if kind == "conversation_detail" and not self.detail_enabled:
            return
        event = {"kind": kind,
                 "timestamp": datetime.now(timezone.utc).isoformat(),
                 "payload": payload}
        if latency_ms is not None:
            event["latency_ms"] = latency_ms
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(event, sort_keys=True) + "\n")

    def read_events(self) -> list[dict]:
        if not self.path.exists():
            return []
        out = []
        with self.path.open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    out.append(json.loads(line))
        return out


def _percentile(values: list[float], q: float) -> float:
    if not values:
        return 0.0
    ordered = sorted(values)
    idx = min(len(ordered) - 1, max(0, round(q * (len(ordered) - 1))))
    return ordered[idx]


def compute_stats(events: list[dict]) -> dict:
    """Aggregate sessions, rounds, star average, latency percentiles from
    the telemetry log."""
    stats_events = [e for e in events if e["kind"] == "conversation_stat"]
    stars = [e["payload"]["stars"] for e in events if e["kind"] == "feedback_stars"]
    sessions: dict[str, int] = {}
    latencies = []
    for e in stats_events:
        sessions[e["payload"].get("session_id", "unknown")] = \
            sessions.get(e["payload"].get("session_id", "unknown"), 0) + 1
        if "latency_ms" in e:
            latencies.append(e["latency_ms"])
    n_sessions = len(sessions)
    n_rounds = sum(sessions.values())
    return {
        "sessions": n_sessions,
        "rounds": n_rounds,
        "avg_rounds_per_session": (n_rounds / n_sessions) if n_sessions else 0.0,
        "feedback_count": len(stars),
        "avg_stars": (sum(stars) / len(stars)) if stars else 0.0,
        "latency_ms_p50": _percentile(latencies, 0.50),
        "latency_ms_p95": _percentile(latencies, 0.95),
    }


def _context_record(ctx) -> dict:
    if not isinstance(ctx, RetrievedContext):
        return {}
    return {
        "kind": ctx.kind,
        "items": [{"id": it.chunk.id, "score": it.score,
                   "provenance": it.provenance,
                   "related": [r.id for r in it.related]}
                  for it in ctx.items],
        "repo_descriptions": dict(ctx.repo_descriptions),
    }


def parse_chat_request(body: dict) -> ChatTurn:
    if not isinstance(body, dict):
        raise ValueError("request body must be an object")
    question = body.get("question", "")
    skill_data = body.get("skill_data")
    if not question and not skill_data and not body.get("messages"):
        raise ValueError(
            "question is required unless skill_data or history is present")
    messages = []
    last_role = None
    for m in body.get("messages", []):
        role, text = m.get("role"), m.get("text", "")
        msg = ChatMessage(role, text)  # raises on invalid role
        # Lenient alternation check: flag only immediate user/user repeats.
        if role == "user" and last_role == "user":
            logger.debug("non-alternating history (consecutive user messages)")
        last_role = role
        messages.append(msg)
    return ChatTurn(
        history=messages,
        question=question,
        skill_data=skill_data,
        meta_plan=MetaPlan.from_record(body.get("meta_plan")),
    )


def build_chat_response(result) -> dict:
    skill_outputs = {}
    plugin_payloads = []
    retrieved = []
    for name, out in sorted(result.skill_outputs.items()):
        skill_outputs[name] = {"payload": out.payload, "error": out.error}
        if out.plugin_payload is not None:
            plugin_payloads.append(out.plugin_payload)
        if out.retrieved is not None:
            retrieved.append(_context_record(out.retrieved))
    return {
        "answer": result.agent_output,
        "skill_outputs": skill_outputs,
        "planner_output": {
            "meta_plan": result.meta_plan.to_record(),
            "selected_agent": result.agent,
        },
        "plugin_payloads": plugin_payloads,
        "retrieved_contexts": retrieved,
        "terminated": result.terminated,
    }


def create_app(orchestrator: Orchestrator, telemetry: TelemetrySink,
               token: str = "") -> FastAPI:
    app = FastAPI(title="pitcrew gateway")

    def check_auth(authorization: str | None):
        if token and authorization != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="invalid token")

    @app.get("/v1/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/v1/chat")
    async def chat(request: Request, authorization: str | None = Header(None)):
        check_auth(authorization)
        try:
            body = await request.json()
            turn = parse_chat_request(body)
        except (ValueError, TypeError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        session_id = body.get("session_id") or body.get("user_id", "anonymous")

        events: queue.Queue = queue.Queue()

        def on_event(kind: str, payload: dict):
            events.put({"event": kind, **payload})

        def worker():
            started = time.monotonic()
            events.put({"event": "round-started"})
            try:
                result = orchestrator.run_round(turn, on_event=on_event)
                response = build_chat_response(result)
                if response["answer"]:
                    events.put({"event": "agent-output",
                                "text": response["answer"]})
                events.put({"event": "round-complete", "response": response})
                telemetry.emit(
                    "conversation_stat",
                    {"session_id": session_id,
                     "agent": result.agent,
                     "terminated": result.terminated},
                    latency_ms=(time.monotonic() - started) * 1000.0)
                telemetry.emit("conversation_detail",
                               {"session_id": session_id,
                                "question": turn.question,
                                "answer": response["answer"]})
            except Exception as exc:
                error_id = uuid.uuid4().hex
                logger.exception("chat round failed (error id %s)", error_id)
                events.put({"event": "error", "error_id": error_id})
            finally:
                events.put(None)

        threading.Thread(target=worker, daemon=True).start()

        def stream():
            while True:
                item = events.get()
                if item is None:
                    break
                yield "data: " + json.dumps(item, sort_keys=True, default=str) + "\n\n"

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.post("/v1/feedback")
    async def feedback(request: Request, authorization: str | None = Header(None)):
        check_auth(authorization)
        body = await request.json()
        stars = body.get("stars")
        if not isinstance(stars, int) or not 1 <= stars <= 5:
            raise HTTPException(status_code=400, detail="stars must be an integer in 1..5")
        payload = {"user_id": body.get("user_id", "anonymous"),
                   "session_id": body.get("session_id", ""),
                   "stars": stars}
        telemetry.emit("feedback_stars", payload)
        text = body.get("text")
        if text:
            telemetry.emit("feedback_text", {**payload, "text": text})
        return JSONResponse({"ok": True})

    @app.get("/v1/stats")
    def stats(authorization: str | None = Header(None)):
        check_auth(authorization)
        return compute_stats(telemetry.read_events())

    return app
