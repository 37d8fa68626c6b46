"""Embedded multi-field document index.

Supports lexical (BM25), vector (cosine), and hybrid search with
reciprocal-rank fusion across fields, plus time / ticket-type filter
predicates. Exhaustive scan only: corpora here are desk scale.

Persistence is one JSON object per line mirroring the chunk field names,
with a sidecar manifest recording embedding dimension, model id, and the
BM25/RRF constants.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field, replace
from datetime import date, datetime
from pathlib import Path

from .provider import EmbeddingVector, cosine, tokenize

CHUNK_KINDS = ("tsg", "icm", "code")
TEXT_FIELDS = ("title", "content", "summary", "description", "reference",
               "mitigation", "property")
DATE_KINDS = ("create_date", "resolve_date", "modified_date")
TICKET_TYPES = ("LSI", "CRI", "NONE")
SEARCH_METHODS = ("hybrid", "vector", "simple", "semantic")


class IndexError_(Exception):
    pass


@dataclass
class DocumentChunk:
    id: str
    source: str
    kind: str
    fields: dict[str, str] = field(default_factory=dict)
    dates: dict[str, date] = field(default_factory=dict)
    ticket_type: str = "NONE"
    helpfulness: float = 0.0
    embeddings: dict[str, EmbeddingVector] = field(default_factory=dict)
    extras: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in CHUNK_KINDS:
            raise ValueError(f"invalid chunk kind {self.kind!r}")
        if self.ticket_type not in TICKET_TYPES:
            raise ValueError(f"invalid ticket type {self.ticket_type!r}")
        if not 0.0 <= self.helpfulness <= 1.0:
            raise ValueError("helpfulness must be in [0, 1]")
        for name in self.fields:
            if name not in TEXT_FIELDS:
                raise ValueError(f"unknown text field {name!r}")
        for name in self.embeddings:
            if not self.fields.get(name):
                raise ValueError(f"embedded field {name!r} has no text")


@dataclass(frozen=True)
class SearchQuery:
    search_text: str
    fields: tuple[str, ...]
    method: str = "hybrid"
    time_filters: dict[str, float] = field(default_factory=dict)
    ticket_type: str = "ALL"
    top_n: int = 20

    def __post_init__(self):
        if not self.fields:
            raise ValueError("fields must be nonempty")
        for f in self.fields:
            if f not in TEXT_FIELDS:
                raise ValueError(f"unknown field {f!r}")
        if self.method not in SEARCH_METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.ticket_type not in ("LSI", "CRI", "ALL"):
            raise ValueError(f"invalid ticket type {self.ticket_type!r}")
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")
        for kind, days in self.time_filters.items():
            if kind not in DATE_KINDS:
                raise ValueError(f"unknown date kind {kind!r}")
            if days < 0:
                raise ValueError("time filter must be >= 0 days")


@dataclass(frozen=True)
class RankedHit:
    chunk_id: str
    fused_score: float
    per_list_ranks: dict[str, int]
    matched_field: str


def rrf_fuse(ranked_lists: dict[str, list[str]], k: float = 60.0) -> list[RankedHit]:
    """Fuse labeled ranked id lists: fused(d) = sum over lists containing d
    of 1/(k + rank). Descending score, ties broken by id ascending."""
    if k <= 0:
        raise ValueError("rrf constant k must be positive")
    ranks: dict[str, dict[str, int]] = {}
    for label, ids in ranked_lists.items():
        if len(set(ids)) != len(ids):
            raise ValueError(f"list {label!r} contains duplicate ids")
        for rank, cid in enumerate(ids, start=1):
            ranks.setdefault(cid, {})[label] = rank
    hits = []
    for cid, per_list in ranks.items():
        score = sum(1.0 / (k + r) for r in per_list.values())
        best_label = min(per_list, key=lambda lab: (per_list[lab], lab))
        hits.append(RankedHit(
            chunk_id=cid,
            fused_score=score,
            per_list_ranks=per_list,
            matched_field=best_label.split(":", 1)[0],
        ))
    hits.sort(key=lambda h: (-h.fused_score, h.chunk_id))
    return hits


class Index:
    """Multi-field index over :class:`DocumentChunk`. Many concurrent
    readers; writers hold an exclusive lock. Search takes an immutable
    snapshot of the chunk map for its duration."""

    def __init__(self, dimension: int, model_id: str, rrf_k: float = 60.0,
                 bm25_k1: float = 1.2, bm25_b: float = 0.75,
                 semantic_rerank=None):
        self.dimension = dimension
        self.model_id = model_id
        self.rrf_k = rrf_k
        self.bm25_k1 = bm25_k1
        self.bm25_b = bm25_b
        # Optional completion-based rerank hook applied for method=semantic;
        # disabled (None) by default, documented as an approximation.
        self.semantic_rerank = semantic_rerank
        self._chunks: dict[str, DocumentChunk] = {}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._chunks)

    def upsert(self, chunks: list[DocumentChunk]) -> int:
        ids = [c.id for c in chunks]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise IndexError_(f"duplicate ids within batch: {dupes}")
        for c in chunks:
            for name, vec in c.embeddings.items():
                if len(vec) != self.dimension:
                    raise IndexError_(
                        f"chunk {c.id}: embedding {name!r} has dimension "
                        f"{len(vec)}, index expects {self.dimension}")
        with self._lock:
            for c in chunks:
                self._chunks[c.id] = c
        return len(chunks)

    def get(self, chunk_id: str) -> DocumentChunk | None:
        return self._chunks.get(chunk_id)

    def chunk_ids(self) -> list[str]:
        return sorted(self._chunks)

    # -- filtering ---------------------------------------------------------

    def _survivors(self, time_filters: dict[str, float], ticket_type: str,
                   now: date, snapshot: dict[str, DocumentChunk]) -> list[DocumentChunk]:
        out = []
        for c in snapshot.values():
            if ticket_type != "ALL" and c.ticket_type != ticket_type:
                continue
            keep = True
            for kind, max_age in time_filters.items():
                d = c.dates.get(kind)
                # A chunk without the filtered date cannot satisfy the filter.
                if d is None or (now - d).days > max_age:
                    keep = False
                    break
            if keep:
                out.append(c)
        return out

    # -- ranking legs ------------------------------------------------------

    def lexical_rank(self, query_text: str, field_name: str,
                     time_filters: dict[str, float] | None = None,
                     ticket_type: str = "ALL", now: date | None = None) -> list[str]:
        """BM25 ranking over filter-surviving chunks on one field.
        Deterministic: ties broken by chunk id ascending; zero-score
        chunks are omitted."""
        if field_name not in TEXT_FIELDS:
            raise IndexError_(f"unknown field {field_name!r}")
        now = now or date.today()
        snapshot = dict(self._chunks)
        docs = self._survivors(time_filters or {}, ticket_type, now, snapshot)
        corpus = [(c.id, tokenize(c.fields.get(field_name, ""))) for c in docs]
        corpus = [(cid, toks) for cid, toks in corpus if toks]
        if not corpus:
            return []
        n = len(corpus)
        avgdl = sum(len(toks) for _, toks in corpus) / n
        qterms = tokenize(query_text)
        df = {t: sum(1 for _, toks in corpus if t in toks) for t in set(qterms)}
        scored = []
        for cid, toks in corpus:
            score = 0.0
            dl = len(toks)
            for t in qterms:
                tf = toks.count(t)
                if tf == 0:
                    continue
                idf = math.log((n - df[t] + 0.5) / (df[t] + 0.5) + 1.0)
                denom = tf + self.bm25_k1 * (1 - self.bm25_b + self.bm25_b * dl / avgdl)
                score += idf * tf * (self.bm25_k1 + 1) / denom
            if score > 0:
                scored.append((cid, score))
        scored.sort(key=lambda p: (-p[1], p[0]))
        return [cid for cid, _ in scored]

    def vector_rank(self, query_vec: EmbeddingVector, field_name: str,
                    time_filters: dict[str, float] | None = None,
                    ticket_type: str = "ALL", now: date | None = None) -> list[str]:
        """Descending cosine-similarity ranking on one embedded field."""
        if len(query_vec) != self.dimension:
            raise IndexError_(
                f"query dimension {len(query_vec)} != index {self.dimension}")
        now = now or date.today()
        snapshot = dict(self._chunks)
        docs = self._survivors(time_filters or {}, ticket_type, now, snapshot)
        scored = [(c.id, cosine(query_vec, c.embeddings[field_name]))
                  for c in docs if field_name in c.embeddings]
        scored.sort(key=lambda p: (-p[1], p[0]))
        return [cid for cid, _ in scored]

    # -- top-level search --------------------------------------------------

    def search(self, query: SearchQuery, embed=None, now: date | None = None) -> list[RankedHit]:
        """Run one structured query. ``embed`` is a callable text -> vector,
        required for any method with a vector leg."""
        now = now or date.today()
        kwargs = dict(time_filters=query.time_filters,
                      ticket_type=query.ticket_type, now=now)
        if query.method == "simple":
            fused = rrf_fuse(
                {f"{f}:lexical": self.lexical_rank(query.search_text, f, **kwargs)
                 for f in query.fields},
                k=self.rrf_k)
            return fused[:query.top_n]
        if embed is None:
            raise IndexError_(f"method {query.method!r} requires an embedder")
        qvec = embed(query.search_text)
        if query.method == "vector":
            fused = rrf_fuse(
                {f"{f}:vector": self.vector_rank(qvec, f, **kwargs)
                 for f in query.fields},
                k=self.rrf_k)
            return fused[:query.top_n]
        # hybrid / semantic: one lexical and one vector list per field
        lists: dict[str, list[str]] = {}
        for f in query.fields:
            lists[f"{f}:lexical"] = self.lexical_rank(query.search_text, f, **kwargs)
            lists[f"{f}:vector"] = self.vector_rank(qvec, f, **kwargs)
        hits = rrf_fuse(lists, k=self.rrf_k)
        if query.method == "semantic" and self.semantic_rerank is not None:
            hits = self.semantic_rerank(query, hits)
        return hits[:query.top_n]

    # -- persistence -------------------------------------------------------

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            for cid in sorted(self._chunks):
                fh.write(json.dumps(chunk_to_record(self._chunks[cid]),
                                    sort_keys=True) + "\n")
        manifest = {
            "dimension": self.dimension,
            "model_id": self.model_id,
            "rrf_k": self.rrf_k,
            "bm25_k1": self.bm25_k1,
            "bm25_b": self.bm25_b,
            "chunk_count": len(self._chunks),
        }
        mpath = manifest_path(path)
        mpath.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n",
                         encoding="utf-8")
        return mpath

    @classmethod
    def load(cls, path: str | Path) -> "Index":
        path = Path(path)
        manifest = json.loads(manifest_path(path).read_text(encoding="utf-8"))
        idx = cls(dimension=manifest["dimension"], model_id=manifest["model_id"],
                  rrf_k=manifest["rrf_k"], bm25_k1=manifest["bm25_k1"],
                  bm25_b=manifest["bm25_b"])
        chunks = []
        with path.open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    chunks.append(record_to_chunk(json.loads(line), manifest["model_id"]))
        idx.upsert(chunks)
        return idx


def manifest_path(index_path: Path) -> Path:
    return index_path.with_suffix(index_path.suffix + ".manifest.json")


def chunk_to_record(c: DocumentChunk) -> dict:
    return {
        "id": c.id,
        "source": c.source,
        "kind": c.kind,
        "fields": c.fields,
        "dates": {k: v.isoformat() for k, v in c.dates.items()},
        "ticket_type": c.ticket_type,
        "helpfulness": c.helpfulness,
        "embeddings": {k: list(v.values) for k, v in c.embeddings.items()},
        "extras": c.extras,
    }


def record_to_chunk(rec: dict, model_id: str) -> DocumentChunk:
    return DocumentChunk(
        id=rec["id"],
        source=rec["source"],
        kind=rec["kind"],
        fields=dict(rec.get("fields", {})),
        dates={k: datetime.strptime(v, "%Y-%m-%d").date()
               for k, v in rec.get("dates", {}).items()},
        ticket_type=rec.get("ticket_type", "NONE"),
        helpfulness=rec.get("helpfulness", 0.0),
        embeddings={k: EmbeddingVector(values=tuple(v), model_id=model_id)
                    for k, v in rec.get("embeddings", {}).items()},
        extras=dict(rec.get("extras", {})),
    )
