"""Compilation of natural-language questions into structured search queries.

Primary path: a schema-constrained completion extracts the search arguments
(intent, fields, filters). Degradation path: a deterministic rule-based
parser (:func:`fallback_parse`) that never fails.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .indexstore import SearchQuery
from .provider import (ChatMessage, CompletionRequest, ProviderError,
                       ResponseSchema, SchemaField)

ICM_FIELDS = ("summary", "title", "property", "mitigation")
TSG_FIELDS = ("title", "content")
CODE_FIELDS = ("title", "description", "content", "reference")

DEFAULT_FIELDS = {"icm": ("summary", "title"), "tsg": TSG_FIELDS, "code": CODE_FIELDS}

MAX_HISTORY_MESSAGES = 6
MAX_FEWSHOT_EXAMPLES = 4


@dataclass
class QueryCompilation:
    user_intent: str
    queries: list[SearchQuery]
    origin: str  # "llm" or "fallback"

    def __post_init__(self):
        if not self.queries:
            raise ValueError("compilation must produce at least one query")
        for q in self.queries:
            if not q.search_text:
                raise ValueError("compiled query has empty search text")


_ICM_SCHEMA = ResponseSchema("icm_search_args", (
    SchemaField("user_intent", "string"),
    SchemaField("field", "string"),
    SchemaField("time_filters", "list", required=False),
    SchemaField("ticket_type", "string", required=False),
))

_TSG_SCHEMA = ResponseSchema("tsg_search_args", (
    SchemaField("user_intent", "string"),
))

_CODE_SCHEMA = ResponseSchema("code_search_args", (
    SchemaField("search_text", "string"),
    SchemaField("fields", "list"),
))

_HINT_SCHEMA = ResponseSchema("search_hint", (
    SchemaField("hint", "string"),
))

# Closed-world time-phrase table: "last N days/weeks/months". Unrecognized
# phrases yield no filter (wrong omission is safer than wrong exclusion).
_NUMBER_WORDS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
}
_UNIT_DAYS = {"day": 1, "week": 7, "month": 30}
_TIME_RE = re.compile(
    r"(?:last|past)\s+(\d+|%s)\s+(day|week|month)s?" % "|".join(_NUMBER_WORDS),
    re.IGNORECASE,
)


def parse_time_phrase(text: str) -> int | None:
    """Days covered by a trailing 'last N days/weeks/months' phrase, if any."""
    m = _TIME_RE.search(text)
    if not m:
        return None
    count = m.group(1).lower()
    n = int(count) if count.isdigit() else _NUMBER_WORDS[count]
    return n * _UNIT_DAYS[m.group(2).lower()]


def parse_ticket_type(text: str) -> str:
    lowered = text.lower()
    if "customer" in lowered:
        return "CRI"
    if "live site" in lowered:
        return "LSI"
    return "ALL"


def infer_date_kind(text: str) -> str:
    """Which date field a time phrase constrains: 'resolved/mitigated' points
    at resolve_date, everything else at create_date."""
    lowered = text.lower()
    if "resolv" in lowered or "mitigat" in lowered or "closed" in lowered:
        return "resolve_date"
    return "create_date"


def fallback_parse(question: str, kind: str = "icm", top_n: int = 20) -> QueryCompilation:
    """Deterministic rule-based compilation used when the provider path fails."""
    time_filters = {}
    days = parse_time_phrase(question)
    if days is not None:
        time_filters[infer_date_kind(question)] = days
    ticket_type = parse_ticket_type(question) if kind == "icm" else "ALL"
    query = SearchQuery(
        search_text=question,
        fields=DEFAULT_FIELDS[kind],
        method="hybrid",
        time_filters=time_filters,
        ticket_type=ticket_type,
        top_n=top_n,
    )
    return QueryCompilation(user_intent=question, queries=[query], origin="fallback")


def load_fewshot(path: str | Path | None, default_resource: str) -> list[dict]:
    """Few-shot examples: list of {question, compilation} records. Tenants
    may override with their own file; defaults ship with the package."""
    if path is not None:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    ref = resources.files("pitcrew.fixtures").joinpath(default_resource)
    return json.loads(ref.read_text(encoding="utf-8"))


def _fewshot_block(examples: list[dict]) -> str:
    lines = []
    for ex in examples[:MAX_FEWSHOT_EXAMPLES]:
        lines.append(f"Q: {ex['question']}")
        lines.append(f"A: {json.dumps(ex['compilation'], sort_keys=True)}")
    return "\n".join(lines)


class QueryCompiler:
    """Turns questions (plus history/context) into executable search queries.

    Pure request-scoped computation; one instance is safe for concurrent use.
    """

    def __init__(self, provider, top_n: int = 20,
                 fewshot_icm: str | Path | None = None,
                 fewshot_code: str | Path | None = None):
        self.provider = provider
        self.top_n = top_n
        self._fewshot_icm = load_fewshot(fewshot_icm, "fewshot_icm.json")
        self._fewshot_code = load_fewshot(fewshot_code, "fewshot_code.json")

    def _ask(self, system: str, question: str, schema: ResponseSchema,
             history: list[ChatMessage] | None = None):
        messages = [ChatMessage("system", system)]
        messages.extend((history or [])[-MAX_HISTORY_MESSAGES:])
        messages.append(ChatMessage("user", question))
        return self.provider.complete(
            CompletionRequest(messages=tuple(messages), response_schema=schema))

    def compile_icm_query(self, question: str,
                          history: list[ChatMessage] | None = None) -> QueryCompilation:
        if not question:
            raise ValueError("question must be nonempty")
        system = (
            "Extract incident search arguments from the question. Reply with a "
            "record {user_intent, field, time_filters, ticket_type}. field is one "
            "of summary, title, property, mitigation. time_filters is a list of "
            "[date_kind, days] pairs. ticket_type is LSI, CRI, or ALL.\n"
            "Examples:\n" + _fewshot_block(self._fewshot_icm)
        )
        try:
            rec = self._ask(system, question, _ICM_SCHEMA, history)
            field_name = rec["field"]
            if field_name not in ICM_FIELDS:
                raise ProviderError(f"provider chose unknown field {field_name!r}")
            time_filters = {k: float(v) for k, v in rec.get("time_filters", [])}
            ticket_type = rec.get("ticket_type", "ALL")
            query = SearchQuery(
                search_text=rec["user_intent"],
                fields=(field_name,),
                method="hybrid",
                time_filters=time_filters,
                ticket_type=ticket_type,
                top_n=self.top_n,
            )
            return QueryCompilation(user_intent=rec["user_intent"],
                                    queries=[query], origin="llm")
        except (ProviderError, KeyError, TypeError, ValueError):
            return fallback_parse(question, kind="icm", top_n=self.top_n)

    def compile_tsg_query(self, question: str,
                          incident_summary: str | None = None) -> QueryCompilation:
        if not question:
            raise ValueError("question must be nonempty")
        system = ("Rephrase the question into concise search keywords. Reply "
                  "with a record {user_intent}.")

        def make(text: str) -> SearchQuery:
            return SearchQuery(search_text=text, fields=TSG_FIELDS,
                               method="hybrid", top_n=self.top_n)

        try:
            rec = self._ask(system, question, _TSG_SCHEMA)
            intent = rec["user_intent"]
            origin = "llm"
        except (ProviderError, KeyError, TypeError):
            intent = question
            origin = "fallback"
        texts = [question]
        if intent and intent != question:
            texts.append(intent)
        if incident_summary:
            try:
                texts.append(self.generate_search_hint(incident_summary))
            except ProviderError:
                pass  # hint is best-effort, compilation still succeeds
        return QueryCompilation(user_intent=intent,
                                queries=[make(t) for t in texts], origin=origin)

    def generate_search_hint(self, incident_summary: str) -> str:
        """Hypothetical-answer passage used as search text for one extra query."""
        if not incident_summary:
            raise ValueError("incident summary must be nonempty")
        system = ("Write a short hypothetical troubleshooting passage that would "
                  "answer an incident like the one summarized. Reply with a "
                  "record {hint}.")
        rec = self._ask(system, incident_summary, _HINT_SCHEMA)
        return rec["hint"]

    def compile_code_query(self, question: str) -> QueryCompilation:
        if not question:
            raise ValueError("question must be nonempty")
        system = (
            "Extract code search arguments. Reply with a record "
            "{search_text, fields}. fields is a list drawn from title, "
            "description, content, reference, or [\"all\"] for every field.\n"
            "Examples:\n" + _fewshot_block(self._fewshot_code)
        )
        try:
            rec = self._ask(system, question, _CODE_SCHEMA)
            fields = tuple(rec["fields"])
            if fields == ("all",) or fields == ("All",):
                fields = CODE_FIELDS
            if not fields or any(f not in CODE_FIELDS for f in fields):
                raise ProviderError(f"provider chose invalid fields {fields!r}")
            query = SearchQuery(search_text=rec["search_text"], fields=fields,
                                method="hybrid", top_n=self.top_n)
            return QueryCompilation(user_intent=rec["search_text"],
                                    queries=[query], origin="llm")
        except (ProviderError, KeyError, TypeError, ValueError):
            return fallback_parse(question, kind="code", top_n=self.top_n)
