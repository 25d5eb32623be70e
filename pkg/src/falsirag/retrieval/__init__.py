from falsirag.retrieval.engine import (
    BM25_B,
    BM25_K1,
    BudgetExhausted,
    CorpusIndex,
    DimensionMismatch,
    EmptyCorpusError,
    RetrievalBudget,
    RetrievalCallRecord,
    ScoredPassage,
    bm25_score,
    dense_score,
    hybrid_retrieve,
    hybrid_retrieve_batch,
    load_replay_table,
)
from falsirag.retrieval.kernels import KERNEL_BACKEND

__all__ = [
    "BM25_B",
    "BM25_K1",
    "BudgetExhausted",
    "CorpusIndex",
    "DimensionMismatch",
    "EmptyCorpusError",
    "KERNEL_BACKEND",
    "RetrievalBudget",
    "RetrievalCallRecord",
    "ScoredPassage",
    "bm25_score",
    "dense_score",
    "hybrid_retrieve",
    "hybrid_retrieve_batch",
    "load_replay_table",
]
