import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_chunk, make_provider
from pitcrew.evalkit import (ONLINE_CATEGORIES, OnlineScores, PlannerCase,
                             TsgCase, categorize_log, categorize_online,
                             eval_answer_similarity, eval_incident_similarity,
                             eval_planner, eval_tsg, load_cases, set_precision,
                             set_recall, summarize_reports, synth_tsg_cases,
                             write_report)

sets = st.sets(st.sampled_from("abcdefgh"), max_size=6)


# -- set metrics -------------------------------------------------------------

def test_precision_recall_hand_checked():
    golden, selected = {"a", "b", "c"}, {"b", "c", "d", "e"}
    assert set_precision(golden, selected) == 2 / 4
    assert set_recall(golden, selected) == 2 / 3


def test_empty_selected_edge_cases():
    assert set_precision({"a"}, set()) == 0.0
    assert set_precision(set(), set()) == 1.0
    with pytest.raises(ValueError):
        set_recall(set(), {"a"})


@given(sets, sets)
@settings(max_examples=100, deadline=None)
def test_metrics_match_definitions(golden, selected):
    if selected:
        assert set_precision(golden, selected) == \
            len(golden & selected) / len(selected)
    if golden:
        assert set_recall(golden, selected) == \
            len(golden & selected) / len(golden)
        assert (set_recall(golden, selected) == 1.0) == (golden <= selected)


# -- planner evaluator -------------------------------------------------------

def test_eval_planner_averages():
    cases = [PlannerCase("q1", {"s1", "s2"}), PlannerCase("q2", {"s3"})]
    answers = {"q1": ["s1", "s2", "s4"], "q2": ["s1"]}
    report = eval_planner(cases, lambda q: answers[q])
    # q1: p=2/3 r=1 cov=True; q2: p=0 r=0 cov=False
    assert report["precision"] == pytest.approx((2 / 3 + 0) / 2)
    assert report["recall"] == pytest.approx(0.5)
    assert report["coverage"] == pytest.approx(0.5)


def test_eval_planner_repeated_runs_counted():
    report = eval_planner([PlannerCase("q", {"s"})], lambda q: {"s"}, runs=3)
    assert len(report["rows"]) == 3
    assert report["coverage"] == 1.0


def test_planner_case_requires_golden_skills():
    with pytest.raises(ValueError):
        PlannerCase("q", set())


# -- tsg evaluator -----------------------------------------------------------

def test_eval_tsg_precision_from_referenced_set():
    cases = [TsgCase("q1", golden_docs={"d1", "d2"},
                     retrieved={"d1", "d3"}, referenced={"d1"})]
    report = eval_tsg(cases)
    assert report["precision"] == 1.0
    assert report["recall"] == 0.5
    assert report["coverage"] == 0.5


def test_eval_tsg_empty_referenced_excluded_from_precision():
    cases = [
        TsgCase("q1", golden_docs={"d1"}, retrieved={"d1"}, referenced=set()),
        TsgCase("q2", golden_docs={"d2"}, retrieved={"d2"}, referenced={"d2"}),
    ]
    report = eval_tsg(cases)
    assert report["rows"][0]["precision"] is None
    assert report["precision"] == 1.0  # averaged over defined rows only
    assert report["rows"][0]["recall"] == 0.0


def test_eval_tsg_retrieve_fn_overrides_recorded_sets():
    cases = [TsgCase("q", golden_docs={"d1"}, retrieved=set())]
    report = eval_tsg(cases, retrieve_fn=lambda q: ["d1", "d9"])
    assert report["coverage"] == 1.0


def test_eval_tsg_case_order_is_irrelevant():
    cases = [TsgCase(f"q{i}", golden_docs={f"d{i}"}, retrieved={f"d{i % 2}"})
             for i in range(4)]
    fwd = eval_tsg(cases)
    rev = eval_tsg(list(reversed(cases)))
    assert fwd["coverage"] == rev["coverage"]


def test_synth_cases_golden_is_source_chunk():
    provider = make_provider(rules=[
        {"pattern": "write one question",
         "response": {"question": "how do I restart?"}}])
    chunks = [make_chunk(provider, f"d{i}") for i in range(5)]
    cases = synth_tsg_cases(chunks, provider, n=3, seed=7)
    assert len(cases) == 3
    for case in cases:
        assert len(case.golden_docs) == 1
        assert case.question == "how do I restart?"


def test_synth_cases_provider_failure_skips():
    provider = make_provider(default=None)
    chunks = [make_chunk(make_provider(), "d0")]
    assert synth_tsg_cases(chunks, provider, n=1) == []


# -- judge evaluators ----------------------------------------------------------

def test_incident_similarity_counts_labels():
    provider = make_provider(rules=[
        {"pattern": "close match", "response": {"label": "High"}}],
        default={"label": "Low"})
    cases = [("input summary", ["close match candidate", "unrelated thing"])]
    report = eval_incident_similarity(cases, provider)
    assert report["pairs"] == 2
    assert report["counts"] == {"Low": 1, "Medium": 0, "High": 1}


def test_incident_similarity_bad_label_skipped():
    provider = make_provider(default={"label": "Enormous"})
    report = eval_incident_similarity([("a", ["b"])], provider)
    assert report["pairs"] == 0


def test_answer_similarity_threshold():
    provider = make_provider(default={"rating": 4})
    report = eval_answer_similarity([("new", "gold")] * 3, provider,
                                    threshold=4.0)
    assert report["mean"] == 4.0 and report["passed"]
    strict = eval_answer_similarity([("new", "gold")], provider, threshold=4.5)
    assert not strict["passed"]


def test_answer_similarity_out_of_range_rating_skipped():
    provider = make_provider(default={"rating": 9})
    report = eval_answer_similarity([("a", "b")], provider)
    assert report["pairs"] == 0 and report["mean"] == 0.0


def test_answer_similarity_empty_pairs_rejected():
    with pytest.raises(ValueError):
        eval_answer_similarity([], make_provider())


# -- online categorization -----------------------------------------------------

def expected_category(ans, doc, ground):
    # Independent restatement of the rule table.
    if doc >= 2 and ground == 0:
        return "Grounding Issue"
    if doc == 1:
        return "Relevant-General" if ans == 3 else "Document Issue"
    if ans == 3 and ground == 1:
        return "Relevant-Grounded"
    return "Partially Relevant-Grounded"


@pytest.mark.parametrize("ans", [1, 2, 3])
@pytest.mark.parametrize("doc", [1, 2, 3])
@pytest.mark.parametrize("ground", [0, 1])
def test_categorize_online_exhaustive(ans, doc, ground):
    got = categorize_online(OnlineScores(ans, doc, ground))
    assert got == expected_category(ans, doc, ground)
    assert got in ONLINE_CATEGORIES


def test_categorize_log_totals():
    rows = [OnlineScores(3, 3, 1), OnlineScores(3, 3, 0), OnlineScores(1, 1, 0)]
    report = categorize_log(rows)
    assert report["total"] == 3
    assert report["counts"]["Relevant-Grounded"] == 1
    assert report["counts"]["Grounding Issue"] == 1
    assert report["counts"]["Document Issue"] == 1


def test_online_scores_validated():
    with pytest.raises(ValueError):
        OnlineScores(0, 1, 0)
    with pytest.raises(ValueError):
        OnlineScores(1, 4, 0)
    with pytest.raises(ValueError):
        OnlineScores(1, 1, 2)


# -- runner ----------------------------------------------------------------

def test_load_cases_roundtrip(tmp_path):
    path = tmp_path / "cases.jsonl"
    path.write_text(
        json.dumps({"question": "q", "golden_skills": ["a"]}) + "\n")
    cases = load_cases(path, "planner")
    assert cases[0].golden_skills == {"a"}
    tsg_path = tmp_path / "tsg.jsonl"
    tsg_path.write_text(json.dumps(
        {"question": "q", "golden_docs": ["d"], "referenced": []}) + "\n")
    assert load_cases(tsg_path, "tsg")[0].referenced == set()
    with pytest.raises(ValueError):
        load_cases(path, "bogus")


def test_write_report_and_summary(tmp_path):
    report = eval_planner([PlannerCase("q", {"s"})], lambda q: {"s"})
    path = write_report(report, tmp_path)
    assert json.loads(path.read_text())["coverage"] == 1.0
    table = summarize_reports([report, categorize_log([OnlineScores(3, 3, 1)])])
    assert "planner" in table and "coverage" in table
    assert "Relevant-Grounded" in table
