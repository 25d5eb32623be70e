from __future__ import annotations

import math
import random

import pytest

from falsirag.corpus import BenchmarkItem, CacheManifest, FrozenCorpus, Passage
from falsirag.gateway.core import Gateway, StubBackend
from falsirag.gateway.stubs import StubModels
from falsirag.text import tokenize

DUMMY_SHA = "0" * 64


def make_passage(doc_id: str, text: str, embedding=None) -> Passage:
    return Passage(
        doc_id=doc_id,
        text=text,
        embedding=None if embedding is None else tuple(embedding),
        token_count=len(tokenize(text)),
    )


def make_corpus(passages, label="test") -> FrozenCorpus:
    manifest = CacheManifest(file_name=f"{label}.jsonl", size_bytes=0, sha256_hex=DUMMY_SHA)
    return FrozenCorpus(label=label, passages=tuple(passages), manifest=manifest)


def make_item(question_id=0, question="Is it true that owls deliver mail?", **kw) -> BenchmarkItem:
    defaults = dict(
        best_answer="No, owls do not deliver mail.",
        correct_answers=("No, owls do not deliver mail.",),
        incorrect_answers=("Yes, owls deliver mail.",),
        category="Fiction",
    )
    defaults.update(kw)
    return BenchmarkItem(question_id=question_id, question=question, **defaults)


def unit_vector(values) -> tuple[float, ...]:
    norm = math.sqrt(sum(v * v for v in values))
    return tuple(v / norm for v in values)


def random_unit_vector(rng: random.Random, dim: int) -> tuple[float, ...]:
    while True:
        values = [rng.gauss(0.0, 1.0) for _ in range(dim)]
        if any(abs(v) > 1e-9 for v in values):
            return unit_vector(values)


@pytest.fixture
def stub_gateway() -> Gateway:
    return Gateway(StubBackend(StubModels()))


@pytest.fixture
def toy_corpus() -> FrozenCorpus:
    texts = [
        ("d1", "the quick brown fox jumps over the lazy dog"),
        ("d2", "a fox and a hound share the quiet forest"),
        ("d3", "brown bears fish the river in autumn"),
        ("d4", "the lazy dog sleeps beside the river"),
        ("d5", "quick silver foxes outrun slow hounds"),
        ("d6", "autumn rain falls on the quiet forest floor"),
        ("d7", "dogs and foxes rarely share a den"),
        ("d8", "the river bends around the brown canyon"),
        ("d9", "a quick nap restores the lazy hound"),
        ("d10", "forest foxes fish the shallow river at dawn"),
    ]
    return make_corpus([make_passage(doc_id, text) for doc_id, text in texts])
