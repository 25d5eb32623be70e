import os

from setuptools import Extension, setup

# The compiled BM25 kernel is an optional speedup; the package falls back to
# the pure-Python twin in falsirag.retrieval._bm25_py when the extension is
# missing. -ffp-contract=off keeps the C arithmetic bit-identical to the
# Python fallback (no FMA contraction).
ext_modules = []
if os.environ.get("FALSIRAG_SKIP_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "falsirag.retrieval._bm25_cy",
                    ["src/falsirag/retrieval/_bm25_cy.pyx"],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                    optional=True,
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
