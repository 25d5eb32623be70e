"""Bit-level parity between the compiled BM25 kernel and the pure fallback."""

from __future__ import annotations

import random

import numpy as np
import pytest

from falsirag.retrieval import _bm25_py
from falsirag.retrieval.engine import CorpusIndex
from falsirag.text import tokenize
from conftest import make_corpus, make_passage

try:
    from falsirag.retrieval import _bm25_cy
except ImportError:
    _bm25_cy = None

needs_extension = pytest.mark.skipif(_bm25_cy is None, reason="compiled kernel not built")


def run_kernel(kernel, index: CorpusIndex, query: str) -> np.ndarray:
    out = np.zeros(len(index.doc_ids), dtype=np.float64)
    term_ids = [index.vocab[t] for t in tokenize(query) if t in index.vocab]
    if term_ids:
        kernel.bm25_accumulate(
            np.asarray(term_ids, dtype=np.int64),
            index._starts,
            index._docs,
            index._tfs,
            index._idf,
            index._k_norm,
            1.2 + 1.0,
            out,
        )
    return out


@needs_extension
def test_kernels_bit_identical_on_random_corpora():
    rng = random.Random(7)
    vocab = [f"t{i}" for i in range(40)]
    for _ in range(30):
        passages = [
            make_passage(
                f"d{i}", " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 60)))
            )
            for i in range(rng.randint(2, 80))
        ]
        index = CorpusIndex(make_corpus(passages))
        query = " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 8)))
        py = run_kernel(_bm25_py, index, query)
        cy = run_kernel(_bm25_cy, index, query)
        assert np.array_equal(py, cy), "kernels diverged bit-for-bit"


@needs_extension
def test_repeated_query_terms_accumulate_identically():
    passages = [make_passage("a", "fox fox den"), make_passage("b", "fox dog")]
    index = CorpusIndex(make_corpus(passages))
    py = run_kernel(_bm25_py, index, "fox fox dog")
    cy = run_kernel(_bm25_cy, index, "fox fox dog")
    assert np.array_equal(py, cy)
    single = run_kernel(_bm25_py, index, "fox dog")
    assert py[0] > single[0]
