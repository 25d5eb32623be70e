"""Draft / falsify / adjudicate control flow plus budget-matched baselines.

run_fva drafts an answer from premise-aligned retrieval, spends the second
(and last) retrieval call on a batch of adversarial queries, scores each
anti-context passage for contradiction against the draft, and revises the
answer when the max contradiction probability crosses the threshold. The two
baselines (prompted reflect-then-revise, and evaluate-then-correct) run under
the identical retrieval budget so differences are attributable to control
flow, not capacity.

Model-call failures mark the trace failed instead of aborting the run, which
keeps N fixed for paired statistics downstream.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from falsirag.corpus import BenchmarkItem, Passage
from falsirag.gateway.core import Gateway
from falsirag.retrieval.engine import (
    CorpusIndex,
    RetrievalBudget,
    RetrievalCallRecord,
    ScoredPassage,
    hybrid_retrieve,
    hybrid_retrieve_batch,
)

METHODS = ("fva", "selfrag", "crag")

TRACE_SCHEMA_VERSION = 1

STATUS_ROBUST = "Robust"
STATUS_FALSIFIED = "Falsified"


@dataclass(frozen=True)
class Verdict:
    """Adjudication outcome: max contradiction vs. threshold."""

    per_passage: tuple[tuple[str, float], ...]
    s: float
    tau: float
    status: str

    @classmethod
    def from_scores(cls, per_passage: list[tuple[str, float]], tau: float) -> "Verdict":
        s = max((p for _, p in per_passage), default=0.0)
        status = STATUS_FALSIFIED if s >= tau else STATUS_ROBUST
        return cls(per_passage=tuple(per_passage), s=s, tau=tau, status=status)

    def to_record(self) -> dict:
        return {
            "per_passage": [[doc_id, p] for doc_id, p in self.per_passage],
            "s": self.s,
            "tau": self.tau,
            "status": self.status,
        }


@dataclass
class PipelineConfig:
    tau: float = 0.5
    m: int = 1
    top_k: int = 3
    max_calls: int = 2

    def fresh_budget(self) -> RetrievalBudget:
        return RetrievalBudget(max_calls_per_query=self.max_calls, top_k=self.top_k)


@dataclass
class PipelineTrace:
    """Full per-question record of one pipeline execution."""

    question_id: int
    method: str
    d_pos: RetrievalCallRecord | None = None
    draft: str = ""
    kill_queries: tuple[str, ...] = ()
    d_neg: RetrievalCallRecord | None = None
    verdict: Verdict | None = None
    final: str = ""
    budget: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    failed: bool = False
    error: str | None = None

    def to_record(self, include_timing: bool = False) -> dict:
        record = {
            "schema_version": TRACE_SCHEMA_VERSION,
            "question_id": self.question_id,
            "method": self.method,
            "d_pos": self.d_pos.to_record() if self.d_pos else None,
            "draft": self.draft,
            "kill_queries": list(self.kill_queries),
            "d_neg": self.d_neg.to_record() if self.d_neg else None,
            "verdict": self.verdict.to_record() if self.verdict else None,
            "final": self.final,
            "budget": self.budget,
            "failed": self.failed,
            "error": self.error,
        }
        if include_timing:
            record["timing"] = self.timing
        return record


def trace_from_record(record: dict) -> PipelineTrace:
    """Rehydrate the evaluation-relevant parts of a serialized trace.

    Retrieval records come back without Passage objects (doc ids and scores
    only), which is all scoring needs.
    """

    def call_record(payload: dict | None) -> RetrievalCallRecord | None:
        if payload is None:
            return None
        returned = tuple(
            ScoredPassage(
                passage=Passage(doc_id=e["doc_id"], text="(elided)", token_count=0),
                bm25=e["bm25"],
                dense=e["dense"],
                fused=e["fused"],
            )
            for e in payload["returned"]
        )
        return RetrievalCallRecord(
            query_text=payload["query_text"], returned=returned, phase=payload["phase"]
        )

    verdict = None
    if record.get("verdict"):
        v = record["verdict"]
        verdict = Verdict(
            per_passage=tuple((doc_id, p) for doc_id, p in v["per_passage"]),
            s=v["s"],
            tau=v["tau"],
            status=v["status"],
        )
    return PipelineTrace(
        question_id=record["question_id"],
        method=record["method"],
        d_pos=call_record(record.get("d_pos")),
        draft=record.get("draft", ""),
        kill_queries=tuple(record.get("kill_queries", ())),
        d_neg=call_record(record.get("d_neg")),
        verdict=verdict,
        final=record.get("final", ""),
        budget=record.get("budget", {}),
        timing=record.get("timing", {}),
        failed=record.get("failed", False),
        error=record.get("error"),
    )


def phase1_draft(
    question: str,
    index: CorpusIndex,
    budget: RetrievalBudget,
    gateway: Gateway,
    replay_table: dict | None = None,
) -> tuple[RetrievalCallRecord, str]:
    """Premise-aligned retrieval (one call) followed by draft generation."""
    d_pos = hybrid_retrieve(
        question, index, budget, gateway.embed, phase="draft", replay_table=replay_table
    )
    draft = gateway.generate(question, d_pos.passages(), mode="draft")
    return d_pos, draft


def phase2_falsify(
    question: str,
    draft: str,
    index: CorpusIndex,
    budget: RetrievalBudget,
    gateway: Gateway,
    m: int,
    replay_table: dict | None = None,
) -> tuple[list[str], RetrievalCallRecord]:
    """Adversarial queries and their merged anti-context (one call total)."""
    if not draft:
        raise ValueError("phase2 requires a non-empty draft")
    kill = gateway.kill_queries(question, draft, m)
    d_neg = hybrid_retrieve_batch(
        kill, index, budget, gateway.embed, phase="falsify", replay_table=replay_table
    )
    return kill, d_neg


def phase3_adjudicate(
    draft: str,
    d_neg: RetrievalCallRecord | None,
    gateway: Gateway,
    tau: float,
) -> Verdict:
    """Score each distinct anti-context passage against the draft.

    Empty anti-context yields s=0 and a Robust verdict. The boundary is
    inclusive: s equal to tau falsifies.
    """
    per_passage: list[tuple[str, float]] = []
    if d_neg is not None:
        for passage in d_neg.passages():
            score = gateway.nli_contradiction(premise=passage.text, hypothesis=draft)
            per_passage.append((passage.doc_id, score.p_contradiction))
    return Verdict.from_scores(per_passage, tau)


def run_fva(
    item: BenchmarkItem,
    index: CorpusIndex,
    gateway: Gateway,
    config: PipelineConfig,
    replay_table: dict | None = None,
) -> PipelineTrace:
    trace = PipelineTrace(question_id=item.question_id, method="fva")
    budget = config.fresh_budget()
    try:
        t0 = time.perf_counter()
        d_pos, draft = phase1_draft(item.question, index, budget, gateway, replay_table)
        trace.d_pos, trace.draft = d_pos, draft
        t1 = time.perf_counter()
        kill, d_neg = phase2_falsify(
            item.question, draft, index, budget, gateway, config.m, replay_table
        )
        trace.kill_queries, trace.d_neg = tuple(kill), d_neg
        t2 = time.perf_counter()
        verdict = phase3_adjudicate(draft, d_neg, gateway, config.tau)
        trace.verdict = verdict
        if verdict.status == STATUS_FALSIFIED:
            trace.final = gateway.generate(
                item.question,
                d_pos.passages(),
                mode="revise",
                anti_context=d_neg.passages(),
            )
        else:
            trace.final = draft
        t3 = time.perf_counter()
        trace.timing = {"draft": t1 - t0, "falsify": t2 - t1, "adjudicate": t3 - t2}
    except Exception as exc:
        trace.failed = True
        trace.error = f"{type(exc).__name__}: {exc}"
    trace.budget = budget.snapshot()
    return trace


def _merge_passages(first: list[Passage], second: list[Passage]) -> list[Passage]:
    """Union by doc_id, first-record order preserved."""
    seen = {p.doc_id for p in first}
    merged = list(first)
    for p in second:
        if p.doc_id not in seen:
            seen.add(p.doc_id)
            merged.append(p)
    return merged


def parse_selfrag_grade(text: str) -> tuple[bool, str | None]:
    """Closed-vocabulary parse of a reflection grade.

    Returns (supported, refinement query). Unparseable output counts as
    unsupported, the conservative reading.
    """
    supported = "[IsSupported]" in text and "[NotSupported]" not in text
    query = None
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("[Query]"):
            candidate = line[len("[Query]"):].strip()
            if candidate:
                query = candidate
            break
    return supported, query


def parse_crag_grade(text: str) -> tuple[bool, str | None]:
    """Closed-vocabulary parse of an evidence-sufficiency grade."""
    sufficient = "[Sufficient]" in text and "[Insufficient]" not in text
    query = None
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("[Query]"):
            candidate = line[len("[Query]"):].strip()
            if candidate:
                query = candidate
            break
    return sufficient, query


def run_selfrag_prompted(
    item: BenchmarkItem,
    index: CorpusIndex,
    gateway: Gateway,
    config: PipelineConfig,
    replay_table: dict | None = None,
) -> PipelineTrace:
    """Prompted retrieve-reflect-revise under the same budget.

    Reflection that keeps grading the answer unsupported eventually trips
    the budget; that is recorded as a failed trace rather than looping.
    """
    trace = PipelineTrace(question_id=item.question_id, method="selfrag")
    budget = config.fresh_budget()
    try:
        t0 = time.perf_counter()
        d_pos = hybrid_retrieve(
            item.question, index, budget, gateway.embed, phase="draft", replay_table=replay_table
        )
        trace.d_pos = d_pos
        context = d_pos.passages()
        answer = gateway.generate(item.question, context, mode="draft")
        trace.draft = answer
        while True:
            grade_text = gateway.selfrag_reflect(item.question, context, answer)
            supported, refine_query = parse_selfrag_grade(grade_text)
            if supported:
                break
            query = refine_query or f"additional context: {item.question}"
            d_more = hybrid_retrieve(
                query, index, budget, gateway.embed, phase="falsify", replay_table=replay_table
            )
            trace.d_neg = d_more
            context = _merge_passages(context, d_more.passages())
            answer = gateway.generate(item.question, context, mode="draft")
        trace.final = answer
        trace.timing = {"total": time.perf_counter() - t0}
    except Exception as exc:
        trace.failed = True
        trace.error = f"{type(exc).__name__}: {exc}"
    trace.budget = budget.snapshot()
    return trace


def run_crag(
    item: BenchmarkItem,
    index: CorpusIndex,
    gateway: Gateway,
    config: PipelineConfig,
    replay_table: dict | None = None,
) -> PipelineTrace:
    """Evaluate-then-correct: one optional corrective retrieval, then answer."""
    trace = PipelineTrace(question_id=item.question_id, method="crag")
    budget = config.fresh_budget()
    try:
        t0 = time.perf_counter()
        d_pos = hybrid_retrieve(
            item.question, index, budget, gateway.embed, phase="draft", replay_table=replay_table
        )
        trace.d_pos = d_pos
        context = d_pos.passages()
        grade_text = gateway.crag_evaluate(item.question, context)
        sufficient, corrective_query = parse_crag_grade(grade_text)
        if not sufficient:
            query = corrective_query or f"verified facts: {item.question}"
            d_fix = hybrid_retrieve(
                query, index, budget, gateway.embed, phase="falsify", replay_table=replay_table
            )
            trace.d_neg = d_fix
            context = _merge_passages(context, d_fix.passages())
        answer = gateway.generate(item.question, context, mode="draft")
        trace.draft = answer
        trace.final = answer
        trace.timing = {"total": time.perf_counter() - t0}
    except Exception as exc:
        trace.failed = True
        trace.error = f"{type(exc).__name__}: {exc}"
    trace.budget = budget.snapshot()
    return trace


_RUNNERS = {"fva": run_fva, "selfrag": run_selfrag_prompted, "crag": run_crag}


def run_method(
    method: str,
    item: BenchmarkItem,
    index: CorpusIndex,
    gateway: Gateway,
    config: PipelineConfig,
    replay_table: dict | None = None,
) -> PipelineTrace:
    try:
        runner = _RUNNERS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}") from None
    return runner(item, index, gateway, config, replay_table)
