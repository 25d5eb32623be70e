"""Kernel selection: compiled extension when available, pure Python otherwise.

Set FALSIRAG_PURE_PYTHON=1 to force the fallback (used by the benchmark and
the parity tests).
"""

from __future__ import annotations

import os

if os.environ.get("FALSIRAG_PURE_PYTHON") == "1":
    from falsirag.retrieval._bm25_py import bm25_accumulate

    KERNEL_BACKEND = "python"
else:
    try:
        from falsirag.retrieval._bm25_cy import bm25_accumulate  # type: ignore[no-redef]

        KERNEL_BACKEND = "cython"
    except ImportError:
        from falsirag.retrieval._bm25_py import bm25_accumulate  # type: ignore[no-redef]

        KERNEL_BACKEND = "python"

__all__ = ["bm25_accumulate", "KERNEL_BACKEND"]
