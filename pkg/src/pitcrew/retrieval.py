"""Retrieval skills: incidents, troubleshooting guides, and code.

Incident retrieval compiles a query set, gathers top-N hits per query, and
re-ranks the union with a weighted sum of information, recency, and source
scores (each min-max normalized across the union) before keeping the top K.
Guide retrieval fuses per-query hybrid rankings and trims the tail when the
leaders show a clear score margin. Code retrieval additionally attaches
one-hop related chunks recorded during preprocessing.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import date

from .indexstore import DocumentChunk, Index, rrf_fuse
from .querygen import QueryCompiler


@dataclass(frozen=True)
class RerankWeights:
    alpha: float = 1 / 3
    beta: float = 1 / 3
    gamma: float = 1 / 3

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.gamma < 0:
            raise ValueError("weights must be >= 0")
        if self.alpha + self.beta + self.gamma <= 0:
            raise ValueError("at least one weight must be positive")


@dataclass(frozen=True)
class RerankComponents:
    info_score: float
    time_score: float
    source_score: float

    def __post_init__(self):
        if not 0 <= self.info_score <= 1 or not 0 <= self.time_score <= 1:
            raise ValueError("info/time scores must be in [0, 1]")
        if self.source_score not in (0.0, 1.0, 0, 1):
            raise ValueError("source score is binary")


@dataclass(frozen=True)
class RetrievalConfig:
    top_k: int = 4
    per_query_n: int = 20
    weights: RerankWeights = field(default_factory=RerankWeights)
    time_decay_tau: float = 180.0
    margin_delta: float = 0.2

    def __post_init__(self):
        if self.top_k < 1 or self.per_query_n < 1:
            raise ValueError("top_k and per_query_n must be positive")
        if self.top_k > self.per_query_n:
            raise ValueError("top_k must not exceed per_query_n")
        if self.time_decay_tau <= 0:
            raise ValueError("time_decay_tau must be positive")
        if not 0 <= self.margin_delta <= 1:
            raise ValueError("margin_delta must be in [0, 1]")


@dataclass
class RetrievedItem:
    chunk: DocumentChunk
    score: float
    provenance: str  # which query found it
    related: list[DocumentChunk] = field(default_factory=list)


@dataclass
class RetrievedContext:
    kind: str
    items: list[RetrievedItem]
    repo_descriptions: dict[str, str] = field(default_factory=dict)


# -- re-ranking components -------------------------------------------------

def info_score(chunk: DocumentChunk) -> float:
    """Pre-computed helpfulness; already clamped to [0, 1] at preprocessing."""
    return chunk.helpfulness


def time_score(age_days: float, tau: float) -> float:
    """Exponential recency decay, 1.0 at age zero."""
    if age_days < 0:
        raise ValueError("age must be >= 0")
    if tau <= 0:
        raise ValueError("tau must be positive")
    return math.exp(-age_days / tau)


def source_score(chunk: DocumentChunk, context_ids: list[str]) -> float:
    """1 iff any context identifier (team, monitor id, ...) appears in the
    chunk's source or property text."""
    haystack = (chunk.source + " " + chunk.fields.get("property", "")).lower()
    return 1.0 if any(cid.lower() in haystack for cid in context_ids if cid) else 0.0


def rerank_score(components: RerankComponents, weights: RerankWeights) -> float:
    return (weights.alpha * components.info_score
            + weights.beta * components.time_score
            + weights.gamma * components.source_score)


def chunk_age_days(chunk: DocumentChunk, now: date) -> float | None:
    """Age from the most recent recorded date; None when the chunk is undated."""
    if not chunk.dates:
        return None
    newest = max(chunk.dates.values())
    return max(0.0, float((now - newest).days))


def _minmax(values: dict[str, float]) -> dict[str, float]:
    # Constant components normalize to 1 so they do not skew the weighting.
    lo, hi = min(values.values()), max(values.values())
    if hi == lo:
        return {k: 1.0 for k in values}
    return {k: (v - lo) / (hi - lo) for k, v in values.items()}


def filter_by_margin(items: list[RetrievedItem], delta: float) -> list[RetrievedItem]:
    """Keep the leading prefix when a score gap exceeds delta times the top
    score; keep everything otherwise. Always returns a nonempty prefix of a
    nonempty input."""
    if not 0 <= delta <= 1:
        raise ValueError("delta must be in [0, 1]")
    if len(items) <= 1:
        return list(items)
    threshold = delta * items[0].score
    for m in range(1, len(items)):
        if items[m - 1].score - items[m].score > threshold:
            return list(items[:m])
    return list(items)


class Retriever:
    """Read-only retrieval over loaded indexes; deterministic for a fixed
    clock. Per-query searches within one run execute concurrently and are
    merged in label order, so concurrency never changes the output."""

    def __init__(self, compiler: QueryCompiler, config: RetrievalConfig | None = None,
                 icm_index: Index | None = None, tsg_index: Index | None = None,
                 code_index: Index | None = None,
                 repo_descriptions: dict[str, str] | None = None,
                 context_ids: list[str] | None = None):
        self.compiler = compiler
        self.config = config or RetrievalConfig()
        self.icm_index = icm_index
        self.tsg_index = tsg_index
        self.code_index = code_index
        self.repo_descriptions = repo_descriptions or {}
        self.context_ids = context_ids or []

    def _embed(self, text: str):
        return self.compiler.provider.embed(text)

    def _run_queries(self, index: Index, queries, now: date):
        """Execute the compiled queries concurrently, results keyed by
        query position for deterministic merging."""
        sized = [replace(q, top_n=self.config.per_query_n) for q in queries]
        with ThreadPoolExecutor(max_workers=max(1, len(sized))) as pool:
            results = list(pool.map(
                lambda q: index.search(q, embed=self._embed, now=now), sized))
        return {f"q{i}": hits for i, hits in enumerate(results)}

    def retrieve_icm(self, question: str, history=None,
                     now: date | None = None) -> RetrievedContext:
        now = now or date.today()
        cfg = self.config
        index = self.icm_index
        if index is None or len(index) == 0:
            return RetrievedContext(kind="icm", items=[])
        compilation = self.compiler.compile_icm_query(question, history)
        per_query = self._run_queries(index, compilation.queries, now)
        # Union of hits across queries, remembering the first query that
        # found each chunk.
        union: dict[str, str] = {}
        for label in sorted(per_query):
            for hit in per_query[label]:
                union.setdefault(hit.chunk_id, label)
        if not union:
            return RetrievedContext(kind="icm", items=[])
        chunks = {cid: index.get(cid) for cid in union}
        raw_is = {cid: info_score(c) for cid, c in chunks.items()}
        raw_ts = {}
        for cid, c in chunks.items():
            age = chunk_age_days(c, now)
            raw_ts[cid] = 0.0 if age is None else time_score(age, cfg.time_decay_tau)
        raw_ss = {cid: source_score(c, self.context_ids) for cid, c in chunks.items()}
        norm_is, norm_ts, norm_ss = _minmax(raw_is), _minmax(raw_ts), _minmax(raw_ss)
        scored = []
        for cid in union:
            comp = RerankComponents(norm_is[cid], norm_ts[cid], norm_ss[cid])
            scored.append((cid, rerank_score(comp, cfg.weights)))
        scored.sort(key=lambda p: (-p[1], p[0]))
        items = [RetrievedItem(chunk=chunks[cid], score=score, provenance=union[cid])
                 for cid, score in scored[:cfg.top_k]]
        return RetrievedContext(kind="icm", items=items)

    def retrieve_tsg(self, question: str, incident_summary: str | None = None,
                     now: date | None = None) -> RetrievedContext:
        now = now or date.today()
        cfg = self.config
        index = self.tsg_index
        if index is None or len(index) == 0:
            return RetrievedContext(kind="tsg", items=[])
        compilation = self.compiler.compile_tsg_query(question, incident_summary)
        per_query = self._run_queries(index, compilation.queries, now)
        fused = rrf_fuse({label: [h.chunk_id for h in hits]
                          for label, hits in per_query.items()},
                         k=index.rrf_k)
        provenance = {}
        for label in sorted(per_query):
            for hit in per_query[label]:
                provenance.setdefault(hit.chunk_id, label)
        items = [RetrievedItem(chunk=index.get(h.chunk_id), score=h.fused_score,
                               provenance=provenance[h.chunk_id])
                 for h in fused]
        if cfg.margin_delta < 1.0:  # delta=1 is the disabled sentinel
            items = filter_by_margin(items, cfg.margin_delta)
        items = items[:cfg.top_k]
        descriptions = {}
        for item in items:
            src = item.chunk.source
            if src not in descriptions:
                descriptions[src] = self.repo_descriptions.get(src, "")
        return RetrievedContext(kind="tsg", items=items,
                                repo_descriptions=descriptions)

    def retrieve_code(self, question: str, now: date | None = None) -> RetrievedContext:
        now = now or date.today()
        cfg = self.config
        index = self.code_index
        if index is None or len(index) == 0:
            return RetrievedContext(kind="code", items=[])
        compilation = self.compiler.compile_code_query(question)
        per_query = self._run_queries(index, compilation.queries, now)
        fused = rrf_fuse({label: [h.chunk_id for h in hits]
                          for label, hits in per_query.items()},
                         k=index.rrf_k)
        provenance = {}
        for label in sorted(per_query):
            for hit in per_query[label]:
                provenance.setdefault(hit.chunk_id, label)
        items = []
        for h in fused[:cfg.top_k]:
            chunk = index.get(h.chunk_id)
            related = []
            for rid in chunk.extras.get("related_ids", "").split(","):
                rid = rid.strip()
                rel = index.get(rid) if rid else None
                if rel is not None:
                    related.append(rel)
            items.append(RetrievedItem(chunk=chunk, score=h.fused_score,
                                       provenance=provenance[h.chunk_id],
                                       related=related))
        return RetrievedContext(kind="code", items=items)
