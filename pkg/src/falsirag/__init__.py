"""Falsification-first retrieval pipeline over frozen corpora.

The package drafts an answer from premise-aligned retrieval, hunts for
counter-evidence with adversarial queries, adjudicates contradictions with an
NLI scorer, and revises the draft when it is falsified. Everything runs
against hash-pinned local corpora so benchmark runs are reproducible with
zero live network calls.
"""

__version__ = "0.1.0"
