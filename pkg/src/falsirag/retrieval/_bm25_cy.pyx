# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled BM25 accumulation kernel (hot loop of exhaustive scoring).

Must stay arithmetically identical to _bm25_py.bm25_accumulate: same
iteration order, same expression shape. Built with -ffp-contract=off so the
C arithmetic is bit-for-bit the Python fallback's.
"""


def bm25_accumulate(const long long[::1] term_ids,
                    const long long[::1] starts,
                    const int[::1] docs,
                    const double[::1] tfs,
                    const double[::1] idf,
                    const double[::1] k_norm,
                    double k1p1,
                    double[::1] out):
    cdef Py_ssize_t i, j, lo, hi
    cdef long long t
    cdef int d
    cdef double w, tf
    for i in range(term_ids.shape[0]):
        t = term_ids[i]
        w = idf[t]
        lo = starts[t]
        hi = starts[t + 1]
        for j in range(lo, hi):
            d = docs[j]
            tf = tfs[j]
            out[d] += w * (tf * k1p1) / (tf + k_norm[d])
