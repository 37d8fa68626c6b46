import math
import random
from datetime import timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DIM, TODAY, make_chunk, make_provider
from pitcrew.indexstore import Index
from pitcrew.querygen import QueryCompiler
from pitcrew.retrieval import (RerankComponents, RerankWeights, RetrievalConfig,
                               RetrievedItem, Retriever, chunk_age_days,
                               filter_by_margin, info_score, rerank_score,
                               source_score, time_score)


def test_info_score_passthrough(provider):
    assert info_score(make_chunk(provider, "d", helpfulness=0.8)) == 0.8
    assert info_score(make_chunk(provider, "e")) == 0.0


def test_time_score_analytic_points():
    assert time_score(0, 180) == 1.0
    assert math.isclose(time_score(180, 180), math.exp(-1))
    assert time_score(10, 180) > time_score(20, 180)


def test_time_score_negative_age_rejected():
    with pytest.raises(ValueError):
        time_score(-1, 180)


def test_source_score_matches(provider):
    chunk = make_chunk(provider, "d", source="sqldb")
    assert source_score(chunk, ["sqldb"]) == 1.0
    assert source_score(chunk, []) == 0.0
    in_property = make_chunk(
        provider, "e",
        fields={"title": "t", "content": "c",
                "property": "monitor: mon-42; server: s9"})
    assert source_score(in_property, ["mon-42"]) == 1.0


def test_rerank_score_projection_and_hand_sum():
    assert rerank_score(RerankComponents(0.7, 0.0, 0.0),
                        RerankWeights(1, 0, 0)) == 0.7
    # 0.3*0.8 + 0.5*0.5 + 0.2*1 = 0.69
    assert math.isclose(
        rerank_score(RerankComponents(0.8, 0.5, 1.0), RerankWeights(0.3, 0.5, 0.2)),
        0.69)


@given(st.floats(0, 1), st.floats(0, 1), st.sampled_from([0.0, 1.0]),
       st.floats(0.01, 10), st.floats(0.01, 10), st.floats(0.01, 10),
       st.floats(0.1, 100))
@settings(max_examples=100, deadline=None)
def test_rerank_scaling_invariance(i, t, s, a, b, g, c):
    comp = RerankComponents(i, t, s)
    base = rerank_score(comp, RerankWeights(a, b, g))
    scaled = rerank_score(comp, RerankWeights(a * c, b * c, g * c))
    assert math.isclose(scaled, base * c, rel_tol=1e-9, abs_tol=1e-12)


def test_weights_validation():
    with pytest.raises(ValueError):
        RerankWeights(0, 0, 0)
    with pytest.raises(ValueError):
        RerankWeights(-1, 1, 1)


# -- margin filtering ------------------------------------------------------

def items_from_scores(scores):
    return [RetrievedItem(chunk=None, score=s, provenance="q0") for s in scores]


def test_margin_no_dominant_gap_keeps_all():
    kept = filter_by_margin(items_from_scores([10, 9.5, 9.4]), delta=0.2)
    assert [i.score for i in kept] == [10, 9.5, 9.4]


def test_margin_dominant_gap_keeps_leader():
    kept = filter_by_margin(items_from_scores([10, 4, 3.9]), delta=0.2)
    assert [i.score for i in kept] == [10]


def test_margin_single_item_kept():
    assert len(filter_by_margin(items_from_scores([5.0]), delta=0.2)) == 1


@given(st.lists(st.floats(0, 100), min_size=1, max_size=12),
       st.floats(0, 1), st.floats(0, 1))
@settings(max_examples=120, deadline=None)
def test_margin_monotone_in_delta_and_prefix(scores, d1, d2):
    ordered = sorted(scores, reverse=True)
    items = items_from_scores(ordered)
    lo, hi = min(d1, d2), max(d1, d2)
    kept_lo = filter_by_margin(items, lo)
    kept_hi = filter_by_margin(items, hi)
    assert len(kept_hi) >= len(kept_lo) >= 1
    assert [i.score for i in kept_lo] == ordered[:len(kept_lo)]


# -- retrieval over indexes ------------------------------------------------

def icm_corpus(provider, n=6, seed=1):
    rng = random.Random(seed)
    chunks = []
    for i in range(n):
        chunks.append(make_chunk(
            provider, f"icm-{i}", kind="icm",
            source=rng.choice(["sqldb", "fabric"]),
            fields={"title": f"incident {i}",
                    "summary": f"failure mode {i} with shared terms outage"},
            embed=("title", "summary"),
            dates={"create_date": TODAY - timedelta(days=rng.randint(0, 400))},
            helpfulness=round(rng.random(), 3),
            ticket_type=rng.choice(["LSI", "CRI"]),
        ))
    return chunks


def make_retriever(provider, chunks, kind="icm", config=None, **kwargs):
    index = Index(dimension=DIM, model_id=provider.model_id)
    index.upsert(chunks)
    compiler = QueryCompiler(provider)
    return Retriever(compiler, config=config or RetrievalConfig(),
                     **{f"{kind}_index": index}, **kwargs)


def brute_force_icm(chunks, weights, tau, context_ids, now, k):
    raw_is = {c.id: c.helpfulness for c in chunks}
    raw_ts = {}
    for c in chunks:
        age = chunk_age_days(c, now)
        raw_ts[c.id] = 0.0 if age is None else math.exp(-age / tau)
    raw_ss = {c.id: source_score(c, context_ids) for c in chunks}

    def minmax(vals):
        lo, hi = min(vals.values()), max(vals.values())
        if hi == lo:
            return {k_: 1.0 for k_ in vals}
        return {k_: (v - lo) / (hi - lo) for k_, v in vals.items()}

    nis, nts, nss = minmax(raw_is), minmax(raw_ts), minmax(raw_ss)
    scored = sorted(
        ((cid, weights.alpha * nis[cid] + weights.beta * nts[cid]
          + weights.gamma * nss[cid]) for cid in raw_is),
        key=lambda p: (-p[1], p[0]))
    return [cid for cid, _ in scored[:k]]


def test_retrieve_icm_matches_bruteforce_oracle():
    provider = make_provider(default=None)  # force fallback compilation
    chunks = icm_corpus(provider, n=6)
    config = RetrievalConfig(top_k=3, per_query_n=20)
    retriever = make_retriever(provider, chunks, config=config,
                               context_ids=["sqldb"])
    ctx = retriever.retrieve_icm("shared terms outage incident failure",
                                 now=TODAY)
    # Fallback query hits every chunk (all contain the shared terms), so the
    # union equals the corpus and the oracle is score-all-sort-top-K.
    expected = brute_force_icm(chunks, config.weights, config.time_decay_tau,
                               ["sqldb"], TODAY, 3)
    assert [item.chunk.id for item in ctx.items] == expected
    assert all(ctx.items[i].score >= ctx.items[i + 1].score
               for i in range(len(ctx.items) - 1))


def test_retrieve_icm_deduplicates_across_queries():
    rules = [{"pattern": "rephrase", "response": {"user_intent": "other"}}]
    provider = make_provider(rules=rules, default=None)
    chunks = icm_corpus(provider, n=4)
    retriever = make_retriever(provider, chunks)
    ctx = retriever.retrieve_icm("shared terms outage", now=TODAY)
    ids = [item.chunk.id for item in ctx.items]
    assert len(ids) == len(set(ids))


def test_retrieve_icm_empty_index_is_empty_context():
    provider = make_provider(default=None)
    retriever = make_retriever(provider, [], kind="icm")
    ctx = retriever.retrieve_icm("anything", now=TODAY)
    assert ctx.items == []


def test_retrieve_tsg_attaches_repo_descriptions():
    provider = make_provider(default=None)
    chunks = [
        make_chunk(provider, "t1", source="repoA",
                   fields={"title": "restart guide",
                           "content": "restart the server safely"}),
        make_chunk(provider, "t2", source="repoB",
                   fields={"title": "deploy", "content": "deploy pipeline"}),
    ]
    retriever = make_retriever(
        provider, chunks, kind="tsg",
        config=RetrievalConfig(margin_delta=1.0),
        repo_descriptions={"repoA": "Guides for service A",
                           "repoB": "Guides for service B"})
    ctx = retriever.retrieve_tsg("restart the server", now=TODAY)
    assert ctx.items[0].chunk.id == "t1"
    for item in ctx.items:
        assert item.chunk.source in ctx.repo_descriptions
    assert ctx.repo_descriptions[ctx.items[0].chunk.source] == "Guides for service A"


def test_retrieve_tsg_margin_disabled_keeps_up_to_k():
    provider = make_provider(default=None)
    chunks = [make_chunk(provider, f"t{i}", source="r",
                         fields={"title": f"doc {i}",
                                 "content": f"restart topic {i}"})
              for i in range(3)]
    retriever = make_retriever(provider, chunks, kind="tsg",
                               config=RetrievalConfig(top_k=2, margin_delta=1.0))
    ctx = retriever.retrieve_tsg("restart topic", now=TODAY)
    assert len(ctx.items) == 2


def test_retrieve_code_attaches_related_chunks():
    rules = [{"pattern": "extract code search arguments",
              "response": {"search_text": "SOSScheduler run",
                           "fields": ["title", "content"]}}]
    provider = make_provider(rules=rules, default=None)
    related = make_chunk(provider, "c2", kind="code", source="code",
                         fields={"title": "Queue", "content": "class Queue: pass"},
                         embed=("title", "content"))
    main = make_chunk(provider, "c1", kind="code", source="code",
                      fields={"title": "SOSScheduler.run",
                              "content": "def run(self): SOSScheduler queue"},
                      embed=("title", "content"),
                      extras={"related_ids": "c2"})
    retriever = make_retriever(provider, [main, related], kind="code",
                               config=RetrievalConfig(top_k=1))
    ctx = retriever.retrieve_code("SOSScheduler run", now=TODAY)
    assert ctx.items[0].chunk.id == "c1"
    assert [r.id for r in ctx.items[0].related] == ["c2"]


def test_config_validation():
    with pytest.raises(ValueError):
        RetrievalConfig(top_k=10, per_query_n=5)
    with pytest.raises(ValueError):
        RetrievalConfig(margin_delta=1.5)
    with pytest.raises(ValueError):
        RetrievalConfig(time_decay_tau=0)
