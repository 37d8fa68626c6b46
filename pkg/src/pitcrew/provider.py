"""Text-completion and embedding providers.

Two implementations share one interface: :class:`ScriptedProvider`, a
deterministic test double driven by an ordered rule table, and
:class:`HttpProvider`, a thin client for an external chat-completion /
embedding endpoint. Everything above this module depends only on the
interface, so the two are interchangeable.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
from dataclasses import dataclass, field

import httpx

VALID_ROLES = ("system", "user", "assistant")

# Scalar/list kinds accepted in a response schema.
FIELD_KINDS = ("string", "int", "number", "bool", "list")


class ProviderError(Exception):
    """Base failure for completion/embedding calls."""


class SchemaViolation(ProviderError):
    """The model output does not conform to the requested response schema."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    text: str

    def __post_init__(self):
        if self.role not in VALID_ROLES:
            raise ValueError(f"invalid role {self.role!r}")


@dataclass(frozen=True)
class SchemaField:
    name: str
    kind: str  # one of FIELD_KINDS
    required: bool = True

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"invalid field kind {self.kind!r}")


@dataclass(frozen=True)
class ResponseSchema:
    name: str
    fields: tuple[SchemaField, ...]

    def validate(self, record) -> dict:
        if not isinstance(record, dict):
            raise SchemaViolation(
                f"schema {self.name!r}: expected a record, got {type(record).__name__}"
            )
        for f in self.fields:
            if f.name not in record:
                if f.required:
                    raise SchemaViolation(f"schema {self.name!r}: missing field {f.name!r}")
                continue
            value = record[f.name]
            ok = {
                "string": lambda v: isinstance(v, str),
                "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
                "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
                "bool": lambda v: isinstance(v, bool),
                "list": lambda v: isinstance(v, list),
            }[f.kind](value)
            if not ok:
                raise SchemaViolation(
                    f"schema {self.name!r}: field {f.name!r} is not a {f.kind}"
                )
        return record


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[ChatMessage, ...]
    response_schema: ResponseSchema | None = None
    temperature: float = 0.0

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be nonempty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def prompt_text(self) -> str:
        return "\n".join(f"{m.role}: {m.text}" for m in self.messages)


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    model_id: str

    def __len__(self):
        return len(self.values)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {len(a)} vs {len(b)}")
    dot = sum(x * y for x, y in zip(a.values, b.values))
    na = math.sqrt(sum(x * x for x in a.values))
    nb = math.sqrt(sum(y * y for y in b.values))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def hashed_embedding(text: str, dimension: int, model_id: str) -> EmbeddingVector:
    """Deterministic bag-of-tokens projection: each token hashed into one of
    ``dimension`` buckets, counts L2-normalized. Similarity-preserving enough
    for tests; no external dependency."""
    buckets = [0.0] * dimension
    for tok in tokenize(text):
        h = int.from_bytes(hashlib.md5(tok.encode("utf-8")).digest()[:8], "big")
        buckets[h % dimension] += 1.0
    norm = math.sqrt(sum(v * v for v in buckets))
    if norm > 0:
        buckets = [v / norm for v in buckets]
    return EmbeddingVector(values=tuple(buckets), model_id=model_id)


@dataclass(frozen=True)
class ScriptedRule:
    """One entry of the behavior table: a substring-or-regex pattern over the
    prompt text and a canned response (text or structured record)."""

    pattern: str
    response: object  # str or dict
    regex: bool = False

    def matches(self, prompt: str) -> bool:
        if self.regex:
            return re.search(self.pattern, prompt, re.IGNORECASE) is not None
        return self.pattern.lower() in prompt.lower()


@dataclass
class ScriptedBehavior:
    matchers: list[ScriptedRule] = field(default_factory=list)
    default: object | None = None  # canned response when no rule matches

    def respond(self, prompt: str):
        for rule in self.matchers:
            if rule.matches(prompt):
                return rule.response
        if self.default is None:
            raise ProviderError("no scripted rule matched and no default configured")
        return self.default


class ScriptedProvider:
    """Pure function of (request, behavior table). Safe to share across
    threads: the behavior table is read-only after construction."""

    def __init__(self, behavior: ScriptedBehavior, dimension: int = 256,
                 model_id: str = "scripted-hash"):
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        self.behavior = behavior
        self.dimension = dimension
        self.model_id = model_id

    def complete(self, request: CompletionRequest):
        response = self.behavior.respond(request.prompt_text())
        if request.response_schema is not None:
            return request.response_schema.validate(response)
        return response

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed empty text")
        return hashed_embedding(text, self.dimension, self.model_id)


class HttpProvider:
    """Client for an external endpoint speaking the common chat-completion
    and embedding JSON shapes. API key read from an environment variable so
    it never lands in config files."""

    def __init__(self, base_url: str, api_key_env: str = "PITCREW_API_KEY",
                 completion_model: str = "default", embedding_model: str = "default",
                 dimension: int = 256, timeout: float = 30.0, retries: int = 1):
        self.base_url = base_url.rstrip("/")
        self.api_key = os.environ.get(api_key_env, "")
        self.completion_model = completion_model
        self.embedding_model = embedding_model
        self.dimension = dimension
        self.timeout = timeout
        self.retries = retries

    def _headers(self):
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _post(self, path: str, body: dict) -> dict:
        last = None
        for _ in range(self.retries + 1):
            try:
                resp = httpx.post(self.base_url + path, json=body,
                                  headers=self._headers(), timeout=self.timeout)
                resp.raise_for_status()
                return resp.json()
            except (httpx.HTTPError, ValueError) as exc:
                last = exc
        raise ProviderError(f"endpoint unreachable: {last}")

    def complete(self, request: CompletionRequest):
        body = {
            "model": self.completion_model,
            "temperature": request.temperature,
            "messages": [{"role": m.role, "content": m.text} for m in request.messages],
        }
        if request.response_schema is not None:
            body["response_format"] = {"type": "json_object"}
        # Schema enforcement: check the first answer, retry once on violation.
        attempts = 2 if request.response_schema is not None else 1
        last_err = None
        for _ in range(attempts):
            data = self._post("/chat/completions", body)
            try:
                text = data["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise ProviderError(f"malformed completion response: {exc}")
            if request.response_schema is None:
                return text
            try:
                return request.response_schema.validate(json.loads(text))
            except (json.JSONDecodeError, SchemaViolation) as exc:
                last_err = exc
        raise SchemaViolation(f"schema violation after retry: {last_err}")

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed empty text")
        data = self._post("/embeddings", {"model": self.embedding_model, "input": text})
        try:
            values = tuple(float(v) for v in data["data"][0]["embedding"])
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed embedding response: {exc}")
        if len(values) != self.dimension:
            raise ProviderError(
                f"embedding dimension {len(values)} != configured {self.dimension}")
        return EmbeddingVector(values=values, model_id=self.embedding_model)
