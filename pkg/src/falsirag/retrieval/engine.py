"""Hybrid BM25 + dense retrieval over a frozen corpus with budget caps.

Scoring is exhaustive: every passage is scored for every call (no ANN
index), which keeps ranking provably identical to a brute-force oracle.
BM25 uses Okapi term saturation with the nonnegative idf variant
idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)), k1=1.2, b=0.75. Hybrid fusion
min-max normalizes both score columns over the call's candidate pool and
averages them; passages without embeddings keep their normalized BM25 score.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from falsirag.corpus import FrozenCorpus, Passage
from falsirag.retrieval.kernels import bm25_accumulate
from falsirag.text import normalize_query, tokenize

BM25_K1 = 1.2
BM25_B = 0.75

Embedder = Callable[[str], Sequence[float]]


class BudgetExhausted(RuntimeError):
    """A retrieval call was attempted past max_calls_per_query."""


class EmptyCorpusError(ValueError):
    """Retrieval against a corpus with no passages."""


class DimensionMismatch(ValueError):
    """Query and passage embedding dimensions differ."""


@dataclass
class RetrievalBudget:
    """Per-query accounting of retrieval calls and top-k width."""

    max_calls_per_query: int = 2
    top_k: int = 3
    calls_used: int = 0

    def __post_init__(self) -> None:
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if not 0 <= self.calls_used <= self.max_calls_per_query:
            raise ValueError(
                f"calls_used={self.calls_used} outside [0, {self.max_calls_per_query}]"
            )

    def consume(self) -> None:
        if self.calls_used >= self.max_calls_per_query:
            raise BudgetExhausted(
                f"retrieval budget exhausted: {self.calls_used} of "
                f"{self.max_calls_per_query} calls already used"
            )
        self.calls_used += 1

    def snapshot(self) -> dict:
        return {
            "max_calls_per_query": self.max_calls_per_query,
            "top_k": self.top_k,
            "calls_used": self.calls_used,
        }


@dataclass(frozen=True)
class ScoredPassage:
    passage: Passage
    bm25: float
    dense: float | None
    fused: float

    def to_record(self) -> dict:
        return {
            "doc_id": self.passage.doc_id,
            "bm25": self.bm25,
            "dense": self.dense,
            "fused": self.fused,
        }


@dataclass(frozen=True)
class RetrievalCallRecord:
    """One budget-consuming retrieval call and its ranked results."""

    query_text: str
    returned: tuple[ScoredPassage, ...]
    phase: str  # "draft" | "falsify"

    def __post_init__(self) -> None:
        if self.phase not in ("draft", "falsify"):
            raise ValueError(f"phase must be draft or falsify, got {self.phase!r}")

    def doc_ids(self) -> list[str]:
        return [sp.passage.doc_id for sp in self.returned]

    def passages(self) -> list[Passage]:
        return [sp.passage for sp in self.returned]

    def to_record(self) -> dict:
        return {
            "query_text": self.query_text,
            "phase": self.phase,
            "returned": [sp.to_record() for sp in self.returned],
        }


class CorpusIndex:
    """Postings, document-frequency stats, and embeddings for one corpus.

    Built once per corpus and never mutated; safe to share across threads.
    """

    def __init__(self, corpus: FrozenCorpus):
        self.corpus = corpus
        n = len(corpus)
        self.doc_ids: list[str] = [p.doc_id for p in corpus]
        self._doc_index: dict[str, int] = {doc_id: i for i, doc_id in enumerate(self.doc_ids)}
        lengths = [p.token_count for p in corpus]
        # Plain Python sum so an independent per-passage oracle reproduces
        # avgdl (and therefore every score) bit-for-bit.
        self.avgdl: float = sum(lengths) / n if n else 0.0

        vocab: dict[str, int] = {}
        postings: list[list[tuple[int, int]]] = []
        for doc_idx, passage in enumerate(corpus):
            counts: dict[str, int] = {}
            for token in tokenize(passage.text):
                counts[token] = counts.get(token, 0) + 1
            for token, tf in counts.items():
                tid = vocab.get(token)
                if tid is None:
                    tid = len(vocab)
                    vocab[token] = tid
                    postings.append([])
                postings[tid].append((doc_idx, tf))

        self.vocab = vocab
        starts = [0]
        docs: list[int] = []
        tfs: list[float] = []
        idf: list[float] = []
        for tid in range(len(vocab)):
            plist = postings[tid]
            df = len(plist)
            idf.append(math.log(1.0 + (n - df + 0.5) / (df + 0.5)))
            for doc_idx, tf in plist:
                docs.append(doc_idx)
                tfs.append(float(tf))
            starts.append(len(docs))
        self._starts = np.asarray(starts, dtype=np.int64)
        self._docs = np.asarray(docs, dtype=np.int32)
        self._tfs = np.asarray(tfs, dtype=np.float64)
        self._idf = np.asarray(idf, dtype=np.float64)

        if self.avgdl > 0.0:
            k_norm = [BM25_K1 * (1.0 - BM25_B + BM25_B * length / self.avgdl) for length in lengths]
        else:
            k_norm = [BM25_K1 for _ in lengths]
        self._k_norm = np.asarray(k_norm, dtype=np.float64)

        emb_rows: list[int] = []
        emb_vectors: list[np.ndarray] = []
        for doc_idx, passage in enumerate(corpus):
            if passage.embedding is not None:
                emb_rows.append(doc_idx)
                emb_vectors.append(np.asarray(passage.embedding, dtype=np.float64))
        self._emb_rows = emb_rows
        self._emb_matrix = np.vstack(emb_vectors) if emb_vectors else None
        self.embedding_dim = corpus.embedding_dim

    def __len__(self) -> int:
        return len(self.doc_ids)

    def idf(self, term: str) -> float:
        tid = self.vocab.get(term)
        if tid is None:
            n = len(self.doc_ids)
            return math.log(1.0 + (n + 0.5) / 0.5)
        return float(self._idf[tid])

    def k_norm(self, doc_idx: int) -> float:
        return float(self._k_norm[doc_idx])

    def bm25_all(self, query_terms: Sequence[str]) -> np.ndarray:
        """BM25 scores for every document, zeros where no term matches."""
        out = np.zeros(len(self.doc_ids), dtype=np.float64)
        term_ids = [self.vocab[t] for t in query_terms if t in self.vocab]
        if term_ids:
            bm25_accumulate(
                np.asarray(term_ids, dtype=np.int64),
                self._starts,
                self._docs,
                self._tfs,
                self._idf,
                self._k_norm,
                BM25_K1 + 1.0,
                out,
            )
        return out

    def dense_all(self, query_vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Cosine per embedded document plus a presence mask.

        Row-wise np.dot (not a matrix product) so a per-passage oracle gets
        bit-identical values.
        """
        n = len(self.doc_ids)
        values = np.zeros(n, dtype=np.float64)
        mask = np.zeros(n, dtype=bool)
        if self._emb_matrix is None:
            return values, mask
        if query_vec.shape[0] != self._emb_matrix.shape[1]:
            raise DimensionMismatch(
                f"query dimension {query_vec.shape[0]} != corpus dimension "
                f"{self._emb_matrix.shape[1]}"
            )
        for row, doc_idx in enumerate(self._emb_rows):
            values[doc_idx] = np.dot(self._emb_matrix[row], query_vec)
            mask[doc_idx] = True
        return values, mask


def bm25_score(query_terms: Sequence[str], passage: Passage, corpus_stats: CorpusIndex) -> float:
    """Okapi BM25 of one passage, computed directly from the stats table.

    Independent of the accumulation kernel; used for spot checks and as the
    single-passage operation.
    """
    doc_idx = corpus_stats._doc_index.get(passage.doc_id)
    if doc_idx is None:
        raise ValueError(f"passage {passage.doc_id!r} is not part of the indexed corpus")
    counts: dict[str, int] = {}
    for token in tokenize(passage.text):
        counts[token] = counts.get(token, 0) + 1
    k = corpus_stats.k_norm(doc_idx)
    score = 0.0
    for term in query_terms:
        tf = float(counts.get(term, 0))
        if tf == 0.0:
            continue
        score += corpus_stats.idf(term) * (tf * (BM25_K1 + 1.0)) / (tf + k)
    return score


def dense_score(query_vec: Sequence[float], passage: Passage) -> float | None:
    """Cosine similarity between a unit query vector and a passage embedding."""
    if passage.embedding is None:
        return None
    q = np.asarray(query_vec, dtype=np.float64)
    p = np.asarray(passage.embedding, dtype=np.float64)
    if q.shape != p.shape:
        raise DimensionMismatch(f"query dim {q.shape[0]} != passage dim {p.shape[0]}")
    return float(np.dot(q, p))


def _minmax(values: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Min-max normalize over the (masked) pool; constant columns go to 0."""
    out = np.zeros_like(values)
    pool = values if mask is None else values[mask]
    if pool.size == 0:
        return out
    lo = float(pool.min())
    hi = float(pool.max())
    if hi == lo:
        return out
    if mask is None:
        return (values - lo) / (hi - lo)
    out[mask] = (values[mask] - lo) / (hi - lo)
    return out


def _score_call(
    query: str,
    index: CorpusIndex,
    embedder: Embedder | None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Score the full corpus for one query: bm25, dense, mask, fused."""
    bm25 = index.bm25_all(tokenize(query))
    n = len(index)
    if index._emb_matrix is not None and embedder is not None:
        qvec = np.asarray(embedder(query), dtype=np.float64)
        dense, mask = index.dense_all(qvec)
    else:
        dense = np.zeros(n, dtype=np.float64)
        mask = np.zeros(n, dtype=bool)
    norm_b = _minmax(bm25)
    norm_d = _minmax(dense, mask)
    fused = np.where(mask, 0.5 * norm_b + 0.5 * norm_d, norm_b)
    return bm25, dense, mask, fused


def _rank(index: CorpusIndex, fused: np.ndarray, top_k: int) -> list[int]:
    """Total order: fused descending, doc_id ascending; returns top-k indices."""
    order = sorted(range(len(index)), key=lambda i: (-fused[i], index.doc_ids[i]))
    return order[:top_k]


def _build_record(
    index: CorpusIndex,
    chosen: list[int],
    bm25: np.ndarray,
    dense: np.ndarray,
    mask: np.ndarray,
    fused: np.ndarray,
    query_text: str,
    phase: str,
) -> RetrievalCallRecord:
    returned = tuple(
        ScoredPassage(
            passage=index.corpus.passages[i],
            bm25=float(bm25[i]),
            dense=float(dense[i]) if mask[i] else None,
            fused=float(fused[i]),
        )
        for i in chosen
    )
    return RetrievalCallRecord(query_text=query_text, returned=returned, phase=phase)


def load_replay_table(path: str | Path) -> dict[str, list[dict]]:
    """Load an exact-replay table: normalized query -> recorded result list."""
    table: dict[str, list[dict]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            table[normalize_query(record["query"])] = record["returned"]
    return table


def _replay_record(
    index: CorpusIndex,
    entries: list[dict],
    top_k: int,
    query_text: str,
    phase: str,
) -> RetrievalCallRecord:
    returned = tuple(
        ScoredPassage(
            passage=index.corpus.get(e["doc_id"]),
            bm25=float(e["bm25"]),
            dense=(None if e.get("dense") is None else float(e["dense"])),
            fused=float(e["fused"]),
        )
        for e in entries[:top_k]
    )
    return RetrievalCallRecord(query_text=query_text, returned=returned, phase=phase)


def hybrid_retrieve(
    query: str,
    index: CorpusIndex,
    budget: RetrievalBudget,
    embedder: Embedder | None,
    phase: str,
    replay_table: dict[str, list[dict]] | None = None,
) -> RetrievalCallRecord:
    """Top-k passages by fused score; consumes exactly one budget call.

    Raises BudgetExhausted before doing any work if the budget is spent, and
    EmptyCorpusError for a passage-less corpus. A failed call (embedding
    error and the like) does not consume budget.
    """
    if budget.calls_used >= budget.max_calls_per_query:
        raise BudgetExhausted(
            f"retrieval budget exhausted: {budget.calls_used} of "
            f"{budget.max_calls_per_query} calls already used"
        )
    if len(index) == 0:
        raise EmptyCorpusError("cannot retrieve from an empty corpus")
    if replay_table is not None:
        entries = replay_table.get(normalize_query(query))
        if entries is not None:
            record = _replay_record(index, entries, budget.top_k, query, phase)
            budget.consume()
            return record
    bm25, dense, mask, fused = _score_call(query, index, embedder)
    chosen = _rank(index, fused, budget.top_k)
    record = _build_record(index, chosen, bm25, dense, mask, fused, query, phase)
    budget.consume()
    return record


BATCH_QUERY_SEPARATOR = " || "


def hybrid_retrieve_batch(
    queries: Sequence[str],
    index: CorpusIndex,
    budget: RetrievalBudget,
    embedder: Embedder | None,
    phase: str = "falsify",
    replay_table: dict[str, list[dict]] | None = None,
) -> RetrievalCallRecord:
    """Score each query over the corpus, merge per-document by max fused
    score, and return the union's top-k. The whole batch consumes one call.
    """
    if not queries:
        raise ValueError("batch retrieval requires at least one query")
    if budget.calls_used >= budget.max_calls_per_query:
        raise BudgetExhausted(
            f"retrieval budget exhausted: {budget.calls_used} of "
            f"{budget.max_calls_per_query} calls already used"
        )
    if len(index) == 0:
        raise EmptyCorpusError("cannot retrieve from an empty corpus")
    joined = BATCH_QUERY_SEPARATOR.join(queries)
    if replay_table is not None:
        entries = replay_table.get(normalize_query(joined))
        if entries is not None:
            record = _replay_record(index, entries, budget.top_k, joined, phase)
            budget.consume()
            return record

    best_bm25: np.ndarray | None = None
    best_dense: np.ndarray | None = None
    best_mask: np.ndarray | None = None
    best_fused: np.ndarray | None = None
    for query in queries:
        bm25, dense, mask, fused = _score_call(query, index, embedder)
        if best_fused is None:
            best_bm25, best_dense, best_mask, best_fused = bm25, dense, mask, fused
        else:
            better = fused > best_fused
            best_fused = np.where(better, fused, best_fused)
            best_bm25 = np.where(better, bm25, best_bm25)
            best_dense = np.where(better, dense, best_dense)
            best_mask = np.where(better, mask, best_mask)
    assert best_fused is not None
    chosen = _rank(index, best_fused, budget.top_k)
    record = _build_record(
        index, chosen, best_bm25, best_dense, best_mask, best_fused, joined, phase
    )
    budget.consume()
    return record
