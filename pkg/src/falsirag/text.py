"""Shared text helpers: tokenization and query normalization."""

from __future__ import annotations

import re

# Alphanumeric runs (unicode letters and digits, underscore excluded).
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumerics. No stemming, no stopwords."""
    return _TOKEN_RE.findall(text.lower())


def normalize_query(query: str) -> str:
    """Trim, collapse internal whitespace, lowercase."""
    return " ".join(query.split()).lower()


def head_clause(text: str) -> str:
    """First clause of a string: everything before the first .!?; terminator."""
    for i, ch in enumerate(text):
        if ch in ".!?;":
            return text[:i].strip()
    return text.strip()


def first_sentence_end(text: str) -> int:
    """Index one past the first sentence terminator, or len(text) if none."""
    for i, ch in enumerate(text):
        if ch in ".!?":
            return i + 1
    return len(text)
