"""Deterministic in-process stand-ins for every model role.

StubModels is the hermetic desk suite: no randomness, no network, fully
reproducible. Individual behaviors can be overridden with maps or callables
for targeted tests. RandomizedStubModels drives fuzzing (budget-safety and
control-flow property tests) with platform-stable hashing instead of
process-salted hash().
"""

from __future__ import annotations

import hashlib
import math
import random
from typing import Callable, Sequence

from falsirag.text import tokenize

NEGATION_MARKERS = frozenset(
    {
        "no",
        "not",
        "never",
        "false",
        "cannot",
        "myth",
        "debunked",
        "refuted",
        "contrary",
        "incorrect",
        "wrong",
    }
)

_MIN_CONTENT_LEN = 4
_OVERLAP_FALSIFIED = 3
_STUB_EMBED_DIM = 8


def _content_tokens(text: str) -> set[str]:
    return {t for t in tokenize(text) if len(t) >= _MIN_CONTENT_LEN}


def _stable_u64(*parts: str) -> int:
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def hash_embedding(text: str, dim: int = _STUB_EMBED_DIM) -> list[float]:
    """Token-bucket embedding: deterministic, unit-normalized, dim fixed."""
    vec = [0.0] * dim
    for token in tokenize(text):
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        bucket = digest[0] % dim
        sign = 1.0 if digest[1] % 2 == 0 else -1.0
        vec[bucket] += sign
    norm = math.sqrt(sum(x * x for x in vec))
    if norm == 0.0:
        vec[0] = 1.0
        norm = 1.0
    return [x / norm for x in vec]


class StubModels:
    """Hermetic default behaviors for generator, falsifier, NLI, embed, judge."""

    def __init__(
        self,
        draft_map: dict[str, str] | None = None,
        revise_map: dict[str, str] | None = None,
        kill_map: dict[str, list[str]] | None = None,
        nli_table: dict[tuple[str, str], float] | None = None,
        reflect_fn: Callable[[str, Sequence[str], str], str] | None = None,
        evaluate_fn: Callable[[str, Sequence[str]], str] | None = None,
        judge_fn: Callable[..., bool] | None = None,
        embed_dim: int = _STUB_EMBED_DIM,
    ):
        self.draft_map = draft_map or {}
        self.revise_map = revise_map or {}
        self.kill_map = kill_map or {}
        self.nli_table = nli_table or {}
        self.reflect_fn = reflect_fn
        self.evaluate_fn = evaluate_fn
        self.judge_fn = judge_fn
        self.embed_dim = embed_dim

    def draft(self, question: str, context: Sequence[str]) -> str:
        if question in self.draft_map:
            return self.draft_map[question]
        body = question.strip().rstrip("?").strip()
        answer = f"It is said that {body}."
        if context:
            answer += f" {context[0]}"
        return answer

    def revise(self, question: str, context: Sequence[str], anti_context: Sequence[str]) -> str:
        if question in self.revise_map:
            return self.revise_map[question]
        if anti_context:
            return (
                "The draft answer was contradicted by retrieved evidence. "
                f"Correction: {anti_context[0]}"
            )
        return "The draft answer stands; no counter-evidence was retrieved."

    def kill(self, question: str, draft: str, m: int) -> list[str]:
        # Default falsifier emits nothing; the gateway pads with its
        # deterministic negation templates.
        return list(self.kill_map.get(question, ()))

    def reflect(self, question: str, context: Sequence[str], answer: str) -> str:
        if self.reflect_fn is not None:
            return self.reflect_fn(question, context, answer)
        overlap = _content_tokens(answer) & _content_tokens(" ".join(context))
        if len(overlap) >= 4:
            return "[IsRelevant] [IsSupported]"
        return "[IsRelevant] [NotSupported]"

    def evaluate(self, question: str, context: Sequence[str]) -> str:
        if self.evaluate_fn is not None:
            return self.evaluate_fn(question, context)
        overlap = _content_tokens(question) & _content_tokens(" ".join(context))
        if len(overlap) >= 2:
            return "[Sufficient]"
        return "[Insufficient]"

    def nli(self, premise: str, hypothesis: str) -> tuple[float, float, float]:
        """Keyword-overlap contradiction heuristic.

        High contradiction when the premise carries negation markers and
        shares enough content tokens with the hypothesis to be about the
        same claim.
        """
        key = (premise, hypothesis)
        if key in self.nli_table:
            c = self.nli_table[key]
        else:
            premise_tokens = set(tokenize(premise))
            overlap = _content_tokens(premise) & _content_tokens(hypothesis)
            if premise_tokens & NEGATION_MARKERS and len(overlap) >= _OVERLAP_FALSIFIED:
                c = 0.9
            else:
                c = 0.05
        rest = 1.0 - c
        return (rest / 2.0, rest / 2.0, c)

    def embed(self, text: str) -> list[float]:
        return hash_embedding(text, self.embed_dim)

    def judge(
        self,
        question: str,
        answer: str,
        best_answer: str,
        correct_answers: Sequence[str],
        incorrect_answers: Sequence[str],
    ) -> bool:
        if self.judge_fn is not None:
            return self.judge_fn(question, answer, best_answer, correct_answers, incorrect_answers)
        norm = answer.strip().lower()
        if norm == best_answer.strip().lower():
            return True
        for ref in correct_answers:
            if norm == ref.strip().lower():
                return True
        for ref in incorrect_answers:
            if norm == ref.strip().lower():
                return False
        return best_answer.strip().lower() in norm


class RandomizedStubModels(StubModels):
    """Per-call seeded randomness for fuzzing; stable across platforms."""

    def __init__(self, seed: int, embed_dim: int = _STUB_EMBED_DIM):
        super().__init__(embed_dim=embed_dim)
        self.seed = seed

    def _rng(self, *parts: str) -> random.Random:
        return random.Random(_stable_u64(str(self.seed), *parts))

    def draft(self, question: str, context: Sequence[str]) -> str:
        rng = self._rng("draft", question, *context)
        words = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "theta"]
        return " ".join(rng.choice(words) for _ in range(rng.randint(3, 10))) + "."

    def revise(self, question: str, context: Sequence[str], anti_context: Sequence[str]) -> str:
        rng = self._rng("revise", question, *anti_context)
        return f"revised answer {rng.randint(0, 10 ** 6)}"

    def kill(self, question: str, draft: str, m: int) -> list[str]:
        rng = self._rng("kill", question, draft)
        count = rng.randint(0, m + 1)
        queries = []
        for i in range(count):
            if rng.random() < 0.2:
                queries.append(question)  # exercises the echo filter
            else:
                queries.append(f"disprove {i} {rng.randint(0, 999)} {draft[:20]}")
        return queries

    def reflect(self, question: str, context: Sequence[str], answer: str) -> str:
        rng = self._rng("reflect", question, answer, *context)
        roll = rng.random()
        if roll < 0.4:
            return "[IsRelevant] [IsSupported]"
        if roll < 0.9:
            return "[IsRelevant] [NotSupported]\n[Query] " + f"retry {rng.randint(0, 999)}"
        return "garbled output with no tags"

    def evaluate(self, question: str, context: Sequence[str]) -> str:
        rng = self._rng("evaluate", question, *context)
        roll = rng.random()
        if roll < 0.45:
            return "[Sufficient]"
        if roll < 0.9:
            return "[Insufficient]\n[Query] " + f"more about {question[:20]}"
        return "no grade here"

    def nli(self, premise: str, hypothesis: str) -> tuple[float, float, float]:
        rng = self._rng("nli", premise, hypothesis)
        c = rng.random()
        rest = 1.0 - c
        split = rng.random()
        return (rest * split, rest * (1.0 - split), c)

    def judge(self, question, answer, best_answer, correct_answers, incorrect_answers) -> bool:
        return self._rng("judge", question, answer).random() < 0.5
