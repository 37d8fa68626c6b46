"""Evaluation framework: a runner with pluggable evaluators.

Each evaluator decomposes into four stages (data generation, execution,
evaluation, report) that can be invoked independently; a generator's output
can be serialized and replayed into execution. Metrics are pure set
arithmetic, so shuffling case order changes nothing.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

from .provider import (ChatMessage, CompletionRequest, ProviderError,
                       ResponseSchema, SchemaField)

logger = logging.getLogger(__name__)

ONLINE_CATEGORIES = ("Relevant-Grounded", "Relevant-General",
                     "Partially Relevant-Grounded", "Document Issue",
                     "Grounding Issue")

SIMILARITY_LABELS = ("Low", "Medium", "High")


@dataclass
class PlannerCase:
    question: str
    golden_skills: set[str]

    def __post_init__(self):
        if not self.golden_skills:
            raise ValueError("golden skill set must be nonempty")


@dataclass
class TsgCase:
    question: str
    golden_docs: set[str]
    retrieved: set[str] = field(default_factory=set)
    referenced: set[str] | None = None  # from a full answer run, optional

    def __post_init__(self):
        if not self.golden_docs:
            raise ValueError("golden document set must be nonempty")


@dataclass(frozen=True)
class OnlineScores:
    answer_relevance: int  # 1..3
    doc_relevance: int     # 1..3
    groundedness: int      # 0..1

    def __post_init__(self):
        if self.answer_relevance not in (1, 2, 3):
            raise ValueError("answer_relevance must be 1..3")
        if self.doc_relevance not in (1, 2, 3):
            raise ValueError("doc_relevance must be 1..3")
        if self.groundedness not in (0, 1):
            raise ValueError("groundedness must be 0 or 1")


# -- set metrics -----------------------------------------------------------

def set_precision(golden: set, selected: set) -> float | None:
    """|G ∩ S| / |S|; None (undefined) when S is empty and G is not,
    1.0 when both are empty."""
    if not selected:
        return 1.0 if not golden else 0.0
    return len(golden & selected) / len(selected)


def set_recall(golden: set, selected: set) -> float:
    if not golden:
        raise ValueError("golden set must be nonempty")
    return len(golden & selected) / len(golden)


def eval_planner(cases: list[PlannerCase], select_fn, runs: int = 1) -> dict:
    """Run the skill selector ``runs`` times per case; precision/recall by
    set comparison against the golden skills, coverage as the Boolean
    golden ⊆ selected, averaged over cases and runs."""
    rows = []
    for case in cases:
        for run in range(runs):
            selected = set(select_fn(case.question))
            precision = set_precision(case.golden_skills, selected)
            recall = set_recall(case.golden_skills, selected)
            coverage = case.golden_skills <= selected
            rows.append({"question": case.question, "run": run,
                         "selected": sorted(selected),
                         "precision": precision, "recall": recall,
                         "coverage": coverage})
    precisions = [r["precision"] for r in rows if r["precision"] is not None]
    return {
        "evaluator": "planner",
        "cases": len(cases),
        "runs": runs,
        "precision": sum(precisions) / len(precisions) if precisions else 0.0,
        "recall": sum(r["recall"] for r in rows) / len(rows) if rows else 0.0,
        "coverage": sum(r["coverage"] for r in rows) / len(rows) if rows else 0.0,
        "rows": rows,
    }


def eval_tsg(cases: list[TsgCase], retrieve_fn=None) -> dict:
    """Precision and recall compare golden docs against the referenced set;
    coverage compares golden against the retrieved set. Cases with an empty
    referenced set report precision as null and are excluded from the
    precision average."""
    rows = []
    for case in cases:
        retrieved = set(case.retrieved)
        if retrieve_fn is not None:
            retrieved = set(retrieve_fn(case.question))
        referenced = case.referenced
        precision = recall = None
        if referenced is not None:
            precision = (len(case.golden_docs & referenced) / len(referenced)
                         if referenced else None)
            recall = len(case.golden_docs & referenced) / len(case.golden_docs)
        coverage = len(case.golden_docs & retrieved) / len(case.golden_docs)
        rows.append({"question": case.question,
                     "retrieved": sorted(retrieved),
                     "precision": precision, "recall": recall,
                     "coverage": coverage})
    precisions = [r["precision"] for r in rows if r["precision"] is not None]
    recalls = [r["recall"] for r in rows if r["recall"] is not None]
    return {
        "evaluator": "tsg",
        "cases": len(cases),
        "precision": sum(precisions) / len(precisions) if precisions else None,
        "recall": sum(recalls) / len(recalls) if recalls else None,
        "coverage": sum(r["coverage"] for r in rows) / len(rows) if rows else 0.0,
        "rows": rows,
    }


# -- synthetic case generation --------------------------------------------

_QUESTION_SCHEMA = ResponseSchema("synthetic_question", (
    SchemaField("question", "string"),
))


def synth_tsg_cases(chunks, provider, n: int, seed: int = 0) -> list[TsgCase]:
    """Sample chunks and ask the provider for one question each; the golden
    set is the originating chunk. Provider failure skips the chunk."""
    rng = random.Random(seed)
    pool = list(chunks)
    sample = pool if len(pool) <= n else rng.sample(pool, n)
    cases = []
    for chunk in sample:
        request = CompletionRequest(
            messages=(
                ChatMessage("system",
                            "Write one question this documentation chunk "
                            "answers. Reply with a record {question}."),
                ChatMessage("user", chunk.fields.get("content", "")
                            or chunk.fields.get("summary", "")),
            ),
            response_schema=_QUESTION_SCHEMA)
        try:
            rec = provider.complete(request)
        except ProviderError as exc:
            logger.info("skipping chunk %s: %s", chunk.id, exc)
            continue
        cases.append(TsgCase(question=rec["question"], golden_docs={chunk.id}))
    return cases


# -- LLM-judge evaluators --------------------------------------------------

_SIMILARITY_SCHEMA = ResponseSchema("pair_similarity", (
    SchemaField("label", "string"),
))

_RATING_SCHEMA = ResponseSchema("pair_rating", (
    SchemaField("rating", "int"),
))


def eval_incident_similarity(cases, provider, rubric: str | None = None) -> dict:
    """For each (input summary, retrieved summaries) case, a rubric-prompted
    judge labels every pair Low/Medium/High; the report counts labels."""
    rubric = rubric or (
        "Compare the two incident summaries (title, mitigation, root cause). "
        "Reply with a record {label} where label is Low, Medium, or High.")
    counts = {label: 0 for label in SIMILARITY_LABELS}
    pairs = 0
    for input_summary, retrieved_summaries in cases:
        for candidate in retrieved_summaries:
            request = CompletionRequest(
                messages=(ChatMessage("system", rubric),
                          ChatMessage("user",
                                      f"A:\n{input_summary}\n\nB:\n{candidate}")),
                response_schema=_SIMILARITY_SCHEMA)
            label = None
            for _ in range(2):  # one retry on an unusable label
                try:
                    candidate_label = provider.complete(request)["label"]
                except ProviderError:
                    break
                if candidate_label in SIMILARITY_LABELS:
                    label = candidate_label
                    break
            if label is None:
                logger.info("skipping unlabeled pair")
                continue
            counts[label] += 1
            pairs += 1
    return {"evaluator": "incident_similarity", "pairs": pairs, "counts": counts}


def eval_answer_similarity(pairs, provider, threshold: float = 4.0,
                           rubric: str | None = None) -> dict:
    """Judge each (new answer, golden answer) pair on a 1-5 integer scale;
    report the mean and a pass/fail against the threshold."""
    if not pairs:
        raise ValueError("pair list must be nonempty")
    rubric = rubric or (
        "Rate how similar the candidate answer is to the reference answer on "
        "a 1-5 integer scale. Reply with a record {rating}.")
    ratings = []
    for new_answer, golden_answer in pairs:
        request = CompletionRequest(
            messages=(ChatMessage("system", rubric),
                      ChatMessage("user",
                                  f"Reference:\n{golden_answer}\n\n"
                                  f"Candidate:\n{new_answer}")),
            response_schema=_RATING_SCHEMA)
        rating = None
        for _ in range(2):
            try:
                value = provider.complete(request)["rating"]
            except ProviderError:
                break
            if isinstance(value, int) and 1 <= value <= 5:
                rating = value
                break
        if rating is None:
            logger.info("skipping unrated pair")
            continue
        ratings.append(rating)
    mean = sum(ratings) / len(ratings) if ratings else 0.0
    return {"evaluator": "answer_similarity", "pairs": len(ratings),
            "mean": mean, "threshold": threshold, "passed": mean >= threshold}


# -- online categorization -------------------------------------------------

def categorize_online(scores: OnlineScores) -> str:
    """Deterministic total mapping from (answer relevance, document
    relevance, groundedness) to an answer category, evaluated in order."""
    if scores.doc_relevance >= 2 and scores.groundedness == 0:
        return "Grounding Issue"
    if scores.doc_relevance == 1 and scores.answer_relevance == 3:
        return "Relevant-General"
    if scores.doc_relevance == 1:
        return "Document Issue"
    if scores.answer_relevance == 3 and scores.groundedness == 1:
        return "Relevant-Grounded"
    return "Partially Relevant-Grounded"


def categorize_log(score_rows: list[OnlineScores]) -> dict:
    counts = {c: 0 for c in ONLINE_CATEGORIES}
    for scores in score_rows:
        counts[categorize_online(scores)] += 1
    return {"evaluator": "online_categories", "total": len(score_rows),
            "counts": counts}


# -- runner ----------------------------------------------------------------

def load_cases(path: str | Path, kind: str):
    """Line-delimited case records per evaluator type."""
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        if kind == "planner":
            rows.append(PlannerCase(question=rec["question"],
                                    golden_skills=set(rec["golden_skills"])))
        elif kind == "tsg":
            rows.append(TsgCase(
                question=rec["question"],
                golden_docs=set(rec["golden_docs"]),
                retrieved=set(rec.get("retrieved", [])),
                referenced=set(rec["referenced"]) if "referenced" in rec else None))
        else:
            raise ValueError(f"unknown case kind {kind!r}")
    return rows


def write_report(report: dict, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{report['evaluator']}.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True, default=str) + "\n",
                    encoding="utf-8")
    return path


def summarize_reports(reports: list[dict]) -> str:
    lines = [f"{'evaluator':<22} {'metric':<12} {'value':>8}", "-" * 44]
    for rep in reports:
        for key in ("precision", "recall", "coverage", "mean"):
            if key in rep and isinstance(rep[key], (int, float)):
                lines.append(f"{rep['evaluator']:<22} {key:<12} {rep[key]:>8.3f}")
        if "counts" in rep:
            for label, count in rep["counts"].items():
                lines.append(f"{rep['evaluator']:<22} {label:<12} {count:>8}")
    return "\n".join(lines)
