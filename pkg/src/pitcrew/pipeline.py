"""Offline preprocessing: ingest local corpora, chunk, enrich, embed, index.

Three processors share the same stages:

- guide documents (markdown directories): fixed-window chunking
- incidents (line-delimited export file): structured summarization with a
  computed helpfulness score
- code (source directories): fixed-window chunking, neighbor-window
  rechunking into complete segments, and metadata enrichment

Every stage is a pure function of (inputs, provider, spec), so reruns with
the scripted provider are reproducible byte for byte. Tokenization is plain
whitespace splitting: provider-independent and deterministic.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path

from .indexstore import DocumentChunk, Index
from .provider import (ChatMessage, CompletionRequest, ProviderError,
                       ResponseSchema, SchemaField)

logger = logging.getLogger(__name__)

HELPFULNESS_REF_TOKENS = 400

# Fields embedded per corpus kind.
EMBED_FIELDS = {
    "tsg": ("title", "content"),
    "icm": ("title", "summary", "mitigation", "property"),
    "code": ("title", "description", "content", "reference"),
}


class PipelineError(Exception):
    pass


@dataclass
class RawRecord:
    source: str
    kind: str
    path_or_id: str
    body: str
    attributes: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ChunkingSpec:
    max_tokens: int = 1000
    overlap_tokens: int = 200
    neighbor_window: int = 5  # code only

    def __post_init__(self):
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if not 0 <= self.overlap_tokens < self.max_tokens:
            raise ValueError("overlap must be >= 0 and < max_tokens")
        if self.neighbor_window < 0:
            raise ValueError("neighbor_window must be >= 0")


@dataclass
class TokenChunk:
    parent_id: str
    ordinal: int
    start: int  # token offset in the parent stream
    end: int
    text: str


@dataclass
class IncidentSummary:
    title: str
    summary: str
    mitigation: str
    properties: dict[str, str] = field(default_factory=dict)
    helpfulness: float = 0.0


# -- ingestion -------------------------------------------------------------

def ingest(source_config: dict) -> list[RawRecord]:
    """One RawRecord per file (tsg/code directories) or per line of an
    incident export file. ``source_config`` keys: kind, source, path, and
    optionally suffixes for directory scans."""
    kind = source_config["kind"]
    source = source_config.get("source", kind)
    path = Path(source_config["path"])
    if kind in ("tsg", "code"):
        if not path.is_dir():
            raise PipelineError(f"missing directory: {path}")
        suffixes = tuple(source_config.get("suffixes", []))
        records = []
        for p in sorted(path.rglob("*")):
            if not p.is_file():
                continue
            if suffixes and p.suffix not in suffixes:
                continue
            records.append(RawRecord(
                source=source, kind=kind,
                path_or_id=str(p.relative_to(path)),
                body=p.read_text(encoding="utf-8"),
                attributes={"language": p.suffix.lstrip(".")} if kind == "code" else {},
            ))
        return records
    if kind == "icm":
        if not path.is_file():
            raise PipelineError(f"missing incident export: {path}")
        records = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                incident_id = rec["id"]
            except (json.JSONDecodeError, KeyError) as exc:
                raise PipelineError(f"malformed incident line {lineno}: {exc}")
            records.append(RawRecord(
                source=rec.get("team", source), kind="icm",
                path_or_id=str(incident_id),
                body=rec.get("body", ""),
                attributes=rec,
            ))
        return records
    raise PipelineError(f"unknown corpus kind {kind!r}")


# -- chunking --------------------------------------------------------------

def chunk_fixed(record: RawRecord, spec: ChunkingSpec) -> list[TokenChunk]:
    """Token windows of max_tokens with overlap_tokens overlap; the last
    window is truncated. Concatenating the windows minus overlaps
    reproduces the original token stream."""
    tokens = record.body.split()
    if not tokens:
        return []
    stride = spec.max_tokens - spec.overlap_tokens
    chunks = []
    start = 0
    ordinal = 0
    while start < len(tokens):
        end = min(start + spec.max_tokens, len(tokens))
        chunks.append(TokenChunk(
            parent_id=record.path_or_id, ordinal=ordinal,
            start=start, end=end, text=" ".join(tokens[start:end])))
        if end == len(tokens):
            break
        start += stride
        ordinal += 1
    return chunks


# -- code enrichment -------------------------------------------------------

_RECHUNK_SCHEMA = ResponseSchema("code_segments", (
    SchemaField("segments", "list"),
))

_ENRICH_SCHEMA = ResponseSchema("code_metadata", (
    SchemaField("title", "string"),
    SchemaField("description", "string"),
    SchemaField("references", "list"),
    SchemaField("related_ids", "list", required=False),
    SchemaField("reference_summaries", "list", required=False),
))


def rechunk_code(chunk: TokenChunk, neighbors: list[TokenChunk], provider,
                 spec: ChunkingSpec) -> list[str]:
    """Extract complete code segments from the chunk concatenated with its
    neighbor window. Segments must be verbatim substrings of the window;
    any violation falls back to the original chunk text."""
    ordered = sorted(neighbors + [chunk], key=lambda c: c.ordinal)
    window = "\n".join(c.text for c in ordered)
    request = CompletionRequest(
        messages=(
            ChatMessage("system",
                        "Extract the complete function or class definitions "
                        "centered on the marked chunk. Reply with a record "
                        "{segments} listing each segment verbatim."),
            ChatMessage("user", window),
        ),
        response_schema=_RECHUNK_SCHEMA,
    )
    try:
        rec = provider.complete(request)
        segments = [s for s in rec["segments"] if isinstance(s, str) and s]
    except ProviderError:
        return [chunk.text]
    # Mechanical verification: never trust the provider on verbatimness.
    if not segments or any(s not in window for s in segments):
        return [chunk.text]
    return segments


@dataclass
class CodeMetadata:
    title: str = ""
    description: str = ""
    references: list[str] = field(default_factory=list)
    related_ids: list[str] = field(default_factory=list)
    reference_summaries: list[str] = field(default_factory=list)


def enrich_code(segment: str, provider) -> CodeMetadata:
    """Title / description / references / one-hop related ids for one code
    segment. Provider failure degrades to empty metadata."""
    if not segment:
        raise ValueError("segment must be nonempty")
    request = CompletionRequest(
        messages=(
            ChatMessage("system",
                        "Describe this code segment. Reply with a record "
                        "{title, description, references, related_ids, "
                        "reference_summaries}."),
            ChatMessage("user", segment),
        ),
        response_schema=_ENRICH_SCHEMA,
    )
    try:
        rec = provider.complete(request)
    except ProviderError:
        return CodeMetadata()
    return CodeMetadata(
        title=rec["title"],
        description=rec["description"],
        references=[str(r) for r in rec["references"]],
        related_ids=[str(r) for r in rec.get("related_ids", [])],
        reference_summaries=[str(r) for r in rec.get("reference_summaries", [])],
    )


# -- incident summarization ------------------------------------------------

_SUMMARY_SCHEMA = ResponseSchema("incident_summary", (
    SchemaField("title", "string"),
    SchemaField("summary", "string"),
    SchemaField("mitigation", "string"),
    SchemaField("properties", "list", required=False),
))


def compute_helpfulness(summary: IncidentSummary,
                        ref_tokens: int = HELPFULNESS_REF_TOKENS) -> float:
    """Thoroughness proxy: combined summary+mitigation token count over a
    reference length, clamped to [0, 1]."""
    combined = len(summary.summary.split()) + len(summary.mitigation.split())
    return min(1.0, combined / ref_tokens)


def summarize_incident(record: RawRecord, provider) -> IncidentSummary:
    """Schema-constrained structured summary of one incident record.
    Helpfulness is computed here, never provider-asserted."""
    if record.kind != "icm":
        raise ValueError("summarize_incident expects an icm record")
    text = record.body or json.dumps(record.attributes, sort_keys=True)
    request = CompletionRequest(
        messages=(
            ChatMessage("system",
                        "Summarize this incident. Reply with a record {title, "
                        "summary, mitigation, properties} where properties is "
                        "a list of 'key: value' strings."),
            ChatMessage("user", text),
        ),
        response_schema=_SUMMARY_SCHEMA,
    )
    rec = provider.complete(request)
    properties = {}
    for entry in rec.get("properties", []):
        key, _, value = str(entry).partition(":")
        if key.strip():
            properties[key.strip()] = value.strip()
    summary = IncidentSummary(
        title=rec["title"], summary=rec["summary"],
        mitigation=rec["mitigation"], properties=properties)
    summary.helpfulness = compute_helpfulness(summary)
    return summary


# -- chunk assembly --------------------------------------------------------

def _parse_date(value) -> date | None:
    if not value:
        return None
    if isinstance(value, date):
        return value
    return datetime.strptime(str(value)[:10], "%Y-%m-%d").date()


def process_tsg(records: list[RawRecord], spec: ChunkingSpec) -> list[DocumentChunk]:
    chunks = []
    for rec in records:
        title = rec.attributes.get("title") or Path(rec.path_or_id).stem.replace("_", " ")
        url = rec.attributes.get("url", "")
        for tc in chunk_fixed(rec, spec):
            chunks.append(DocumentChunk(
                id=f"{rec.source}/{rec.path_or_id}#{tc.ordinal}",
                source=rec.source, kind="tsg",
                fields={"title": title, "content": tc.text},
                extras={"url": url} if url else {},
            ))
    return chunks


def process_icm(records: list[RawRecord], provider) -> list[DocumentChunk]:
    chunks = []
    for rec in records:
        try:
            summary = summarize_incident(rec, provider)
        except ProviderError as exc:
            logger.warning("skipping incident %s: %s", rec.path_or_id, exc)
            continue
        attrs = rec.attributes
        dates = {}
        for kind in ("create_date", "resolve_date", "modified_date"):
            d = _parse_date(attrs.get(kind))
            if d is not None:
                dates[kind] = d
        fields = {"title": summary.title, "summary": summary.summary}
        if summary.mitigation:
            fields["mitigation"] = summary.mitigation
        if summary.properties:
            fields["property"] = "; ".join(
                f"{k}: {v}" for k, v in sorted(summary.properties.items()))
        chunks.append(DocumentChunk(
            id=f"icm-{rec.path_or_id}",
            source=rec.source, kind="icm",
            fields=fields, dates=dates,
            ticket_type=attrs.get("ticket_type", "NONE"),
            helpfulness=summary.helpfulness,
        ))
    return chunks


def process_code(records: list[RawRecord], provider,
                 spec: ChunkingSpec) -> list[DocumentChunk]:
    staged = []  # (record, segment, metadata)
    for rec in records:
        token_chunks = chunk_fixed(rec, spec)
        seen_segments = set()
        for i, tc in enumerate(token_chunks):
            lo = max(0, i - spec.neighbor_window)
            hi = min(len(token_chunks), i + spec.neighbor_window + 1)
            neighbors = token_chunks[lo:i] + token_chunks[i + 1:hi]
            for segment in rechunk_code(tc, neighbors, provider, spec):
                if segment in seen_segments:
                    continue  # the same segment can emerge from several windows
                seen_segments.add(segment)
                staged.append((rec, segment, enrich_code(segment, provider)))
    chunks = []
    corpus_ids = set()
    for n, (rec, _, _) in enumerate(staged):
        corpus_ids.add(f"{rec.source}/{rec.path_or_id}#{n}")
    for n, (rec, segment, meta) in enumerate(staged):
        fields = {"content": segment}
        if meta.title:
            fields["title"] = meta.title
        if meta.description:
            fields["description"] = meta.description
        if meta.references:
            fields["reference"] = "\n".join(meta.references)
        extras = {}
        # Related ids are restricted to segments actually in the corpus.
        related = [rid for rid in meta.related_ids if rid in corpus_ids]
        if related:
            extras["related_ids"] = ",".join(related)
        if meta.reference_summaries:
            extras["reference_summaries"] = "\n".join(meta.reference_summaries)
        chunks.append(DocumentChunk(
            id=f"{rec.source}/{rec.path_or_id}#{n}",
            source=rec.source, kind="code",
            fields=fields, extras=extras,
        ))
    return chunks


# -- index building --------------------------------------------------------

def build_index(chunks: list[DocumentChunk], provider, out_path: str | Path) -> dict:
    """Embed the configured fields for every chunk, write the index file and
    its manifest. Idempotent for identical inputs under the scripted
    provider."""
    index = Index(dimension=provider.dimension, model_id=provider.model_id)
    for chunk in chunks:
        for field_name in EMBED_FIELDS[chunk.kind]:
            text = chunk.fields.get(field_name)
            if text:
                chunk.embeddings[field_name] = provider.embed(text)
    index.upsert(chunks)
    manifest_file = index.save(out_path)
    return json.loads(manifest_file.read_text(encoding="utf-8"))


def run_pipeline(source_config: dict, provider, out_path: str | Path,
                 spec: ChunkingSpec | None = None) -> dict:
    """End-to-end: ingest -> process by kind -> embed -> write index."""
    spec = spec or ChunkingSpec()
    records = ingest(source_config)
    kind = source_config["kind"]
    if kind == "tsg":
        chunks = process_tsg(records, spec)
    elif kind == "icm":
        chunks = process_icm(records, provider)
    elif kind == "code":
        chunks = process_code(records, provider, spec)
    else:
        raise PipelineError(f"unknown corpus kind {kind!r}")
    manifest = build_index(chunks, provider, out_path)
    manifest["kind"] = kind
    return manifest
