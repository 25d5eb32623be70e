from __future__ import annotations

import json
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from falsirag.corpus import Passage
from falsirag.gateway.stubs import hash_embedding
from falsirag.retrieval.engine import (
    BudgetExhausted,
    CorpusIndex,
    DimensionMismatch,
    EmptyCorpusError,
    RetrievalBudget,
    bm25_score,
    dense_score,
    hybrid_retrieve,
    hybrid_retrieve_batch,
    load_replay_table,
)
from conftest import make_corpus, make_passage, random_unit_vector, unit_vector
from oracle_utils import oracle_bm25, oracle_retrieve, oracle_retrieve_batch


def stub_embedder(query: str):
    return hash_embedding(query, 8)


def random_corpus(rng: random.Random, max_passages=100, with_embeddings=True):
    n = rng.randint(2, max_passages)
    vocab = [f"w{i}" for i in range(rng.randint(5, 30))]
    passages = []
    for i in range(n):
        words = [rng.choice(vocab) for _ in range(rng.randint(1, 40))]
        embedding = None
        if with_embeddings and rng.random() < 0.7:
            embedding = random_unit_vector(rng, 8)
        passages.append(make_passage(f"doc-{i:03d}", " ".join(words), embedding))
    return make_corpus(passages), vocab


def random_query(rng: random.Random, vocab) -> str:
    terms = [rng.choice(vocab + ["zzz", "unseen"]) for _ in range(rng.randint(1, 6))]
    return " ".join(terms)


class TestBudget:
    def test_defaults(self):
        budget = RetrievalBudget()
        assert budget.max_calls_per_query == 2
        assert budget.top_k == 3
        assert budget.calls_used == 0

    def test_consume_until_exhausted(self):
        budget = RetrievalBudget(max_calls_per_query=2, top_k=3)
        budget.consume()
        budget.consume()
        with pytest.raises(BudgetExhausted):
            budget.consume()
        assert budget.calls_used == 2

    def test_invalid_top_k(self):
        with pytest.raises(ValueError):
            RetrievalBudget(top_k=0)

    def test_calls_used_bounds(self):
        with pytest.raises(ValueError):
            RetrievalBudget(max_calls_per_query=1, calls_used=2)


class TestBm25Score:
    def test_no_matching_terms_scores_zero(self, toy_corpus):
        index = CorpusIndex(toy_corpus)
        assert bm25_score(["zebra", "quasar"], toy_corpus.get("d1"), index) == 0.0

    def test_empty_query_scores_zero(self, toy_corpus):
        index = CorpusIndex(toy_corpus)
        assert bm25_score([], toy_corpus.get("d1"), index) == 0.0

    def test_matches_hand_computed_okapi_on_three_docs(self):
        # Three docs sharing "fox"; df(fox)=2, df(dog)=1, lengths 3/4/3.
        corpus = make_corpus(
            [
                make_passage("a", "fox fox den"),
                make_passage("b", "dog sleeps by fire"),
                make_passage("c", "fox dog friends"),
            ]
        )
        index = CorpusIndex(corpus)
        n, avgdl = 3, (3 + 4 + 3) / 3
        idf_fox = math.log(1.0 + (n - 2 + 0.5) / (2 + 0.5))

        def k(length):
            return 1.2 * (1.0 - 0.75 + 0.75 * length / avgdl)

        expected_a = idf_fox * (2.0 * 2.2) / (2.0 + k(3))
        expected_c = idf_fox * (1.0 * 2.2) / (1.0 + k(3))
        assert bm25_score(["fox"], corpus.get("a"), index) == pytest.approx(expected_a, abs=1e-12)
        assert bm25_score(["fox"], corpus.get("c"), index) == pytest.approx(expected_c, abs=1e-12)
        assert bm25_score(["fox"], corpus.get("b"), index) == 0.0

    def test_monotone_in_term_frequency_for_fixed_length(self):
        corpus = make_corpus(
            [
                make_passage("one", "fox pad pad pad"),
                make_passage("two", "fox fox pad pad"),
                make_passage("three", "fox fox fox pad"),
            ]
        )
        index = CorpusIndex(corpus)
        scores = [bm25_score(["fox"], corpus.get(d), index) for d in ("one", "two", "three")]
        assert scores[0] < scores[1] < scores[2]

    def test_matches_oracle_on_toy_corpus(self, toy_corpus):
        index = CorpusIndex(toy_corpus)
        for passage in toy_corpus:
            got = bm25_score(["fox", "river", "quick"], passage, index)
            want = oracle_bm25("fox river quick", passage, list(toy_corpus.passages))
            assert got == pytest.approx(want, abs=1e-12)

    def test_nonnegative_idf_variant(self):
        # A term present in every document still has positive idf here.
        corpus = make_corpus([make_passage(f"d{i}", "common word") for i in range(5)])
        index = CorpusIndex(corpus)
        assert index.idf("common") > 0.0


class TestDenseScore:
    def test_identical_unit_vectors(self):
        v = unit_vector([1.0, 2.0, 3.0])
        p = make_passage("a", "text", embedding=v)
        assert dense_score(v, p) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_vectors(self):
        p = make_passage("a", "text", embedding=(1.0, 0.0))
        assert dense_score((0.0, 1.0), p) == pytest.approx(0.0, abs=1e-12)

    def test_random_pairs_match_dot_product(self):
        rng = random.Random(11)
        for _ in range(20):
            q = random_unit_vector(rng, 8)
            v = random_unit_vector(rng, 8)
            p = make_passage("a", "text", embedding=v)
            want = float(np.dot(np.asarray(q), np.asarray(v)))
            assert dense_score(q, p) == pytest.approx(want, abs=1e-9)

    def test_dimension_mismatch(self):
        p = make_passage("a", "text", embedding=(1.0, 0.0))
        with pytest.raises(DimensionMismatch):
            dense_score((1.0, 0.0, 0.0), p)

    def test_missing_embedding_returns_none(self):
        assert dense_score((1.0,), make_passage("a", "text")) is None


class TestHybridRetrieve:
    def test_returns_exactly_k(self, toy_corpus):
        index = CorpusIndex(toy_corpus)
        budget = RetrievalBudget()
        record = hybrid_retrieve("quick fox river", index, budget, stub_embedder, "draft")
        assert len(record.returned) == 3
        assert budget.calls_used == 1
        assert record.phase == "draft"

    def test_fewer_passages_than_k(self):
        corpus = make_corpus([make_passage("a", "only fox"), make_passage("b", "only dog")])
        budget = RetrievalBudget(top_k=3)
        record = hybrid_retrieve("fox", CorpusIndex(corpus), budget, None, "draft")
        assert len(record.returned) == 2

    def test_third_call_exhausts_budget(self, toy_corpus):
        index = CorpusIndex(toy_corpus)
        budget = RetrievalBudget(max_calls_per_query=2)
        hybrid_retrieve("fox", index, budget, None, "draft")
        hybrid_retrieve("dog", index, budget, None, "falsify")
        with pytest.raises(BudgetExhausted):
            hybrid_retrieve("river", index, budget, None, "falsify")
        assert budget.calls_used == 2

    def test_empty_corpus(self):
        corpus = make_corpus([])
        with pytest.raises(EmptyCorpusError):
            hybrid_retrieve("q", CorpusIndex(corpus), RetrievalBudget(), None, "draft")

    def test_ordering_fused_desc_doc_id_asc(self):
        # Identical texts tie on every score; doc_id breaks the tie.
        corpus = make_corpus(
            [
                make_passage("z-last", "fox fox"),
                make_passage("a-first", "fox fox"),
                make_passage("m-mid", "fox fox"),
                make_passage("other", "unrelated words here"),
            ]
        )
        record = hybrid_retrieve("fox", CorpusIndex(corpus), RetrievalBudget(), None, "draft")
        assert record.doc_ids() == ["a-first", "m-mid", "z-last"]

    def test_matches_oracle_on_toy_corpus(self, toy_corpus):
        index = CorpusIndex(toy_corpus)
        record = hybrid_retrieve(
            "quick fox river", index, RetrievalBudget(top_k=3), stub_embedder, "draft"
        )
        want = oracle_retrieve("quick fox river", list(toy_corpus.passages), 3, stub_embedder)
        got = [(sp.passage.doc_id, sp.bm25, sp.dense, sp.fused) for sp in record.returned]
        assert got == want

    def test_deterministic_serialization(self, toy_corpus):
        index = CorpusIndex(toy_corpus)

        def run():
            record = hybrid_retrieve(
                "quick fox", index, RetrievalBudget(), stub_embedder, "draft"
            )
            return json.dumps(record.to_record(), sort_keys=True)

        assert run() == run()


class TestOracleEquivalence:
    def test_randomized_corpora_match_brute_force_exactly(self):
        rng = random.Random(20260810)
        for trial in range(50):
            corpus, vocab = random_corpus(rng, max_passages=100)
            index = CorpusIndex(corpus)
            passages = list(corpus.passages)
            for _ in range(rng.randint(1, 20)):
                query = random_query(rng, vocab)
                k = rng.randint(1, 5)
                record = hybrid_retrieve(
                    query, index, RetrievalBudget(max_calls_per_query=10 ** 9, top_k=k),
                    stub_embedder, "draft",
                )
                got = [(sp.passage.doc_id, sp.bm25, sp.dense, sp.fused) for sp in record.returned]
                want = oracle_retrieve(query, passages, k, stub_embedder)
                assert got == want, f"trial {trial} query {query!r}"

    def test_batch_merge_matches_oracle(self):
        rng = random.Random(99)
        for trial in range(20):
            corpus, vocab = random_corpus(rng, max_passages=40)
            index = CorpusIndex(corpus)
            queries = [random_query(rng, vocab) for _ in range(rng.randint(1, 4))]
            record = hybrid_retrieve_batch(
                queries, index, RetrievalBudget(top_k=3), stub_embedder
            )
            got = [(sp.passage.doc_id, sp.bm25, sp.dense, sp.fused) for sp in record.returned]
            want = oracle_retrieve_batch(queries, list(corpus.passages), 3, stub_embedder)
            assert got == want, f"trial {trial} queries {queries!r}"


class TestBatchRetrieve:
    def test_batch_consumes_one_call(self, toy_corpus):
        index = CorpusIndex(toy_corpus)
        budget = RetrievalBudget()
        record = hybrid_retrieve_batch(
            ["fox den", "river dawn", "lazy hound"], index, budget, None
        )
        assert budget.calls_used == 1
        assert record.phase == "falsify"
        assert len(record.returned) == 3

    def test_single_query_batch_equals_plain_retrieve(self, toy_corpus):
        index = CorpusIndex(toy_corpus)
        plain = hybrid_retrieve("fox river", index, RetrievalBudget(), stub_embedder, "falsify")
        batch = hybrid_retrieve_batch(["fox river"], index, RetrievalBudget(), stub_embedder)
        assert [sp.to_record() for sp in plain.returned] == [
            sp.to_record() for sp in batch.returned
        ]

    def test_empty_batch_rejected(self, toy_corpus):
        with pytest.raises(ValueError):
            hybrid_retrieve_batch([], CorpusIndex(toy_corpus), RetrievalBudget(), None)


class TestReplayTable:
    def test_replay_short_circuits_scoring(self, toy_corpus, tmp_path):
        index = CorpusIndex(toy_corpus)
        live = hybrid_retrieve("Quick  Fox", index, RetrievalBudget(), None, "draft")
        table_path = tmp_path / "replay.jsonl"
        table_path.write_text(
            json.dumps(
                {"query": "quick fox", "returned": [sp.to_record() for sp in live.returned]}
            )
            + "\n",
            encoding="utf-8",
        )
        table = load_replay_table(table_path)
        budget = RetrievalBudget()
        replayed = hybrid_retrieve("  quick   FOX ", index, budget, None, "draft", table)
        assert [sp.to_record() for sp in replayed.returned] == [
            sp.to_record() for sp in live.returned
        ]
        assert budget.calls_used == 1

    def test_miss_falls_through_to_scoring(self, toy_corpus):
        index = CorpusIndex(toy_corpus)
        record = hybrid_retrieve("fox", index, RetrievalBudget(), None, "draft", {})
        assert record.returned


class TestProperties:
    @given(st.integers(min_value=1, max_value=8), st.integers(min_value=1, max_value=6))
    @settings(max_examples=25, deadline=None)
    def test_returned_never_exceeds_top_k(self, top_k, n_queries):
        rng = random.Random(top_k * 100 + n_queries)
        corpus, vocab = random_corpus(rng, max_passages=20)
        index = CorpusIndex(corpus)
        budget = RetrievalBudget(max_calls_per_query=n_queries, top_k=top_k)
        for _ in range(n_queries):
            record = hybrid_retrieve(random_query(rng, vocab), index, budget, None, "draft")
            assert len(record.returned) <= top_k
        assert budget.calls_used == n_queries

    @given(st.integers(min_value=0, max_value=2 ** 31))
    @settings(max_examples=25, deadline=None)
    def test_total_order_no_fused_inversions(self, seed):
        rnd = random.Random(seed)
        corpus, vocab = random_corpus(rnd, max_passages=30)
        index = CorpusIndex(corpus)
        record = hybrid_retrieve(
            random_query(rnd, vocab), index, RetrievalBudget(top_k=10), stub_embedder, "draft"
        )
        rows = [(sp.fused, sp.passage.doc_id) for sp in record.returned]
        for (f1, d1), (f2, d2) in zip(rows, rows[1:]):
            assert f1 > f2 or (f1 == f2 and d1 < d2)
