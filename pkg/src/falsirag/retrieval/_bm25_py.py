"""Pure-Python BM25 accumulation kernel.

Slow twin of the Cython kernel in _bm25_cy.pyx. Both iterate query terms in
order and postings in stored order, so their float64 outputs are
bit-identical (the extension is compiled with FP contraction disabled).
"""

from __future__ import annotations


def bm25_accumulate(term_ids, starts, docs, tfs, idf, k_norm, k1p1, out):
    """Add BM25 contributions for each query term into ``out`` (len n_docs).

    term_ids may repeat; repeated terms contribute once per occurrence.
    """
    k_list = k_norm.tolist()
    out_list = out.tolist()
    starts_list = starts.tolist()
    for t in term_ids.tolist():
        w = float(idf[t])
        lo = starts_list[t]
        hi = starts_list[t + 1]
        for d, tf in zip(docs[lo:hi].tolist(), tfs[lo:hi].tolist()):
            out_list[d] += w * (tf * k1p1) / (tf + k_list[d])
    out[:] = out_list
