#!/usr/bin/env python3
"""Benchmark the compiled BM25 kernel against the pure-Python fallback.

Builds a synthetic corpus, runs the same query batch through both kernels
over identical postings arrays, checks bit-level equality, and prints a
timing table. Usage:

    python benchmarks/bench_bm25.py [--docs 20000] [--queries 200]
"""

from __future__ import annotations

import argparse
import random
import time

import numpy as np

from falsirag.corpus import CacheManifest, FrozenCorpus, Passage
from falsirag.retrieval import _bm25_py
from falsirag.retrieval.engine import BM25_K1, CorpusIndex
from falsirag.text import tokenize

try:
    from falsirag.retrieval import _bm25_cy
except ImportError:
    _bm25_cy = None


def build_corpus(n_docs: int, rng: random.Random) -> FrozenCorpus:
    vocab = [f"term{i}" for i in range(2000)]
    passages = []
    for i in range(n_docs):
        words = rng.choices(vocab, k=rng.randint(20, 120))
        text = " ".join(words)
        passages.append(
            Passage(doc_id=f"d{i:06d}", text=text, token_count=len(words))
        )
    manifest = CacheManifest(file_name="bench.jsonl", size_bytes=0, sha256_hex="0" * 64)
    return FrozenCorpus(label="bench", passages=tuple(passages), manifest=manifest)


def bench_kernel(kernel, index: CorpusIndex, queries: list[list[int]]) -> tuple[float, np.ndarray]:
    start = time.perf_counter()
    checksum = np.zeros(len(index.doc_ids), dtype=np.float64)
    for term_ids in queries:
        out = np.zeros(len(index.doc_ids), dtype=np.float64)
        kernel.bm25_accumulate(
            np.asarray(term_ids, dtype=np.int64),
            index._starts,
            index._docs,
            index._tfs,
            index._idf,
            index._k_norm,
            BM25_K1 + 1.0,
            out,
        )
        checksum += out
    return time.perf_counter() - start, checksum


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--docs", type=int, default=20000)
    parser.add_argument("--queries", type=int, default=200)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    print(f"building corpus: {args.docs} docs ...")
    corpus = build_corpus(args.docs, rng)
    t0 = time.perf_counter()
    index = CorpusIndex(corpus)
    print(f"index build: {time.perf_counter() - t0:.2f}s, vocab {len(index.vocab)}")

    queries = []
    vocab_terms = list(index.vocab)
    for _ in range(args.queries):
        terms = rng.choices(vocab_terms, k=rng.randint(2, 8))
        queries.append([index.vocab[t] for t in terms])

    py_time, py_sum = bench_kernel(_bm25_py, index, queries)
    rows = [("python", py_time)]
    if _bm25_cy is not None:
        cy_time, cy_sum = bench_kernel(_bm25_cy, index, queries)
        rows.append(("cython", cy_time))
        identical = np.array_equal(py_sum, cy_sum)
        print(f"outputs bit-identical: {identical}")
        if not identical:
            raise SystemExit("kernel outputs diverged")
    else:
        print("compiled kernel not available; benchmarking fallback only")

    print(f"\n{'kernel':<10} {'total s':>10} {'ms/query':>10} {'speedup':>9}")
    base = rows[0][1]
    for name, total in rows:
        print(
            f"{name:<10} {total:>10.3f} {1000.0 * total / len(queries):>10.2f} "
            f"{base / total:>8.1f}x"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
