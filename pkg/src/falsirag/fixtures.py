"""Synthetic desk-scale fixtures.

build_planted_fixture constructs a benchmark where half the questions carry
a false premise whose refutation exists in the corpus but is lexically
aligned with negation phrasing, not with the question: supportive passages
dominate the ranking for the original question, while the refuter wins only
under an adversarial "evidence against ..." query. That makes the
counter-evidence reachable for the falsification flow and invisible to
premise-aligned baselines, by construction.

Passages carry no embeddings, so ranking is pure BM25 and every rank can be
re-derived by hand or by the brute-force oracle in the tests.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from falsirag.corpus import (
    BenchmarkItem,
    Passage,
    fingerprint,
    write_benchmark,
    write_corpus,
)
from falsirag.text import tokenize


def _passage(doc_id: str, text: str) -> Passage:
    return Passage(doc_id=doc_id, text=text, token_count=len(tokenize(text)))

_ADJECTIVES = [
    "amber", "bronze", "cedar", "coral", "crimson", "copper", "dusty", "ebony",
    "emerald", "frosted", "gilded", "glassy", "golden", "granite", "hazel",
    "indigo", "ivory", "jade", "lunar", "maple", "marble", "misty", "mossy",
    "obsidian", "olive", "onyx", "opal", "pearl", "plum", "quartz", "russet",
    "sable", "saffron", "scarlet", "silver", "slate", "teal", "topaz",
    "violet", "walnut",
]

_NOUNS = [
    "anchors", "beacons", "bridges", "candles", "canyons", "compasses",
    "crystals", "dunes", "engines", "fountains", "gardens", "geysers",
    "glaciers", "harbors", "islands", "kettles", "lanterns", "lighthouses",
    "meadows", "meteors", "mirrors", "orchards", "pendulums", "pyramids",
    "rivers", "saddles", "spires", "statues", "telescopes", "temples",
    "terraces", "towers", "tunnels", "turbines", "valleys", "vessels",
    "waterfalls", "windmills", "zeppelins", "harps",
]

_VERBS = [
    "attract", "banish", "calm", "channel", "charge", "cleanse", "conjure",
    "cure", "deflect", "dissolve", "double", "energize", "enhance", "extend",
    "foretell", "grant", "guard", "heal", "improve", "lengthen", "magnify",
    "mend", "multiply", "predict", "prevent", "prolong", "purify", "quicken",
    "redirect", "refresh", "renew", "repel", "restore", "revive", "sharpen",
    "soothe", "steady", "strengthen", "summon", "transform",
]

_OBJECTS = [
    "appetites", "balance", "courage", "dreams", "eyesight", "fevers",
    "fortunes", "gossip", "harvests", "headaches", "hearing", "instincts",
    "journeys", "laughter", "luck", "memories", "moods", "nightmares",
    "patience", "plagues", "posture", "rainfall", "reflexes", "rumors",
    "seasons", "shadows", "sleep", "stamina", "storms", "strength",
    "tempers", "thoughts", "tides", "visions", "weather", "whispers",
    "wisdom", "youth", "zeal", "echoes",
]

_PLANTED_CATEGORIES = ("Superstitions", "Myths and Fairytales", "Paranormal", "Fiction")
_PLAIN_CATEGORIES = ("Science", "History", "Geography", "Health")

MAX_FIXTURE_QUESTIONS = 40


def build_planted_fixture(
    n_questions: int = MAX_FIXTURE_QUESTIONS, seed: int = 7
) -> tuple[list[Passage], list[BenchmarkItem], list[int]]:
    """Passages, benchmark items, and the ids of the planted (false-premise)
    questions. Even question ids are planted, odd ids are plain facts.
    """
    if not 2 <= n_questions <= MAX_FIXTURE_QUESTIONS:
        raise ValueError(f"n_questions must be in [2, {MAX_FIXTURE_QUESTIONS}]")
    if n_questions % 2 != 0:
        raise ValueError("n_questions must be even (half planted, half plain)")
    rng = random.Random(seed)
    adjectives = rng.sample(_ADJECTIVES, n_questions)
    nouns = rng.sample(_NOUNS, n_questions)
    verbs = rng.sample(_VERBS, n_questions)
    objects = rng.sample(_OBJECTS, n_questions)

    passages: list[Passage] = []
    items: list[BenchmarkItem] = []
    planted_ids: list[int] = []

    for i in range(n_questions):
        adj, noun, verb, obj = adjectives[i], nouns[i], verbs[i], objects[i]
        claim = f"{adj} {noun} {verb} {obj}"
        question = f"Is it true that {claim}?"
        planted = i % 2 == 0
        if planted:
            planted_ids.append(i)
            category = _PLANTED_CATEGORIES[(i // 2) % len(_PLANTED_CATEGORIES)]
            best = f"No, the {adj} {noun} claim is false."
            support_text = (
                f"Many travelers report that {claim}. Old almanacs tell how {claim}, "
                f"and village elders still maintain that {adj} {noun} truly {verb} {obj}."
            )
            refuter_text = (
                f"Evidence against this tale: no, the {adj} {noun} claim is false. "
                f"Those who said {claim} were mistaken, and the evidence against it "
                f"shows the notion is a debunked legend."
            )
            for j in range(3):
                passages.append(_passage(f"sup-{i}-{j}", support_text))
            passages.append(_passage(f"ref-{i}", refuter_text))
            items.append(
                BenchmarkItem(
                    question_id=i,
                    question=question,
                    best_answer=best,
                    correct_answers=(best,),
                    incorrect_answers=(f"Yes, {claim}.",),
                    category=category,
                )
            )
        else:
            category = _PLAIN_CATEGORIES[(i // 2) % len(_PLAIN_CATEGORIES)]
            best = f"Yes, {claim}."
            fact_text = (
                f"Yes, {claim}. Surveys of {adj} {noun} show they {verb} {obj}, "
                f"and caretakers agree the {adj} {noun} {verb} {obj} reliably."
            )
            for j in range(2):
                passages.append(_passage(f"fact-{i}-{j}", fact_text))
            items.append(
                BenchmarkItem(
                    question_id=i,
                    question=question,
                    best_answer=best,
                    correct_answers=(best,),
                    incorrect_answers=(f"No, {adj} {noun} never {verb} {obj}.",),
                    category=category,
                )
            )

    return passages, items, planted_ids


def write_fixture(out_dir: str | Path, n_questions: int = MAX_FIXTURE_QUESTIONS, seed: int = 7) -> dict:
    """Write corpus.jsonl, benchmark.jsonl, and manifest.jsonl into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    passages, items, planted_ids = build_planted_fixture(n_questions, seed)
    corpus_path = out_dir / "corpus.jsonl"
    benchmark_path = out_dir / "benchmark.jsonl"
    write_corpus(corpus_path, passages)
    write_benchmark(benchmark_path, items)
    manifest_path = out_dir / "manifest.jsonl"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        for path in (corpus_path, benchmark_path):
            fh.write(json.dumps(fingerprint(path).to_record(), sort_keys=True))
            fh.write("\n")
    return {
        "corpus": str(corpus_path),
        "benchmark": str(benchmark_path),
        "manifest": str(manifest_path),
        "planted_ids": planted_ids,
    }
