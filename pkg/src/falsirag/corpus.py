"""Frozen corpora, benchmark sets, and file fingerprinting.

Corpora and benchmark questions live in UTF-8 line-delimited JSON files.
Loaded objects are immutable; integrity is pinned by SHA256 manifests
computed over the raw file bytes (no newline normalization).
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from falsirag.text import tokenize

_SHA256_RE = re.compile(r"^[0-9a-f]{64}$")
_CHUNK_SIZE = 65536

EMBEDDING_NORM_TOL = 1e-6


class CorpusError(ValueError):
    """Raised for malformed or inconsistent corpus files."""


class BenchmarkError(ValueError):
    """Raised for malformed benchmark files."""


@dataclass(frozen=True)
class CacheManifest:
    """Immutable identity of a corpus file: name, byte size, SHA256."""

    file_name: str
    size_bytes: int
    sha256_hex: str

    def __post_init__(self) -> None:
        if self.size_bytes < 0:
            raise ValueError(f"size_bytes must be nonnegative, got {self.size_bytes}")
        if not _SHA256_RE.match(self.sha256_hex):
            raise ValueError(f"sha256_hex is not 64 lowercase hex chars: {self.sha256_hex!r}")

    def to_record(self) -> dict:
        return {
            "file_name": self.file_name,
            "size_bytes": self.size_bytes,
            "sha256_hex": self.sha256_hex,
        }

    @classmethod
    def from_record(cls, record: dict) -> "CacheManifest":
        try:
            return cls(
                file_name=record["file_name"],
                size_bytes=int(record["size_bytes"]),
                sha256_hex=record["sha256_hex"],
            )
        except KeyError as exc:
            raise ValueError(f"manifest record missing field {exc.args[0]!r}") from exc


@dataclass(frozen=True)
class Passage:
    """One frozen-corpus text unit, optionally carrying a unit embedding."""

    doc_id: str
    text: str
    title: str | None = None
    source_url: str | None = None
    embedding: tuple[float, ...] | None = None
    token_count: int = 0

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if not self.text:
            raise ValueError(f"passage {self.doc_id!r}: text must be non-empty")
        if self.token_count < 0:
            raise ValueError(f"passage {self.doc_id!r}: token_count must be nonnegative")
        if self.embedding is not None:
            norm = math.sqrt(sum(x * x for x in self.embedding))
            if abs(norm - 1.0) > EMBEDDING_NORM_TOL:
                raise ValueError(
                    f"passage {self.doc_id!r}: embedding L2 norm {norm!r} is not within "
                    f"{EMBEDDING_NORM_TOL} of 1.0"
                )


@dataclass(frozen=True)
class FrozenCorpus:
    """Read-only passage collection plus the manifest of its source file."""

    label: str
    passages: tuple[Passage, ...]
    manifest: CacheManifest
    _by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        dims = {len(p.embedding) for p in self.passages if p.embedding is not None}
        if len(dims) > 1:
            raise ValueError(f"corpus {self.label!r}: mixed embedding dimensions {sorted(dims)}")
        by_id: dict[str, Passage] = {}
        for p in self.passages:
            if p.doc_id in by_id:
                raise ValueError(f"corpus {self.label!r}: duplicate doc_id {p.doc_id!r}")
            by_id[p.doc_id] = p
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.passages)

    def __iter__(self) -> Iterator[Passage]:
        return iter(self.passages)

    def get(self, doc_id: str) -> Passage:
        try:
            return self._by_id[doc_id]
        except KeyError:
            raise KeyError(f"corpus {self.label!r} has no passage {doc_id!r}") from None

    @property
    def embedding_dim(self) -> int | None:
        for p in self.passages:
            if p.embedding is not None:
                return len(p.embedding)
        return None


@dataclass(frozen=True)
class BenchmarkItem:
    """One benchmark question with gold reference answers."""

    question_id: int
    question: str
    best_answer: str
    correct_answers: tuple[str, ...]
    incorrect_answers: tuple[str, ...]
    category: str

    def __post_init__(self) -> None:
        if not self.question:
            raise ValueError(f"item {self.question_id}: question must be non-empty")
        if not self.correct_answers:
            raise ValueError(f"item {self.question_id}: correct_answers must be non-empty")


@dataclass(frozen=True)
class CacheCheck:
    """Outcome of verifying a file against an expected manifest."""

    ok: bool
    mismatched_fields: tuple[str, ...]
    actual: CacheManifest


def fingerprint(path: str | Path) -> CacheManifest:
    """SHA256 and byte size of a file, streamed over the raw bytes."""
    path = Path(path)
    digest = hashlib.sha256()
    size = 0
    with open(path, "rb") as fh:
        while True:
            chunk = fh.read(_CHUNK_SIZE)
            if not chunk:
                break
            size += len(chunk)
            digest.update(chunk)
    return CacheManifest(file_name=path.name, size_bytes=size, sha256_hex=digest.hexdigest())


def verify_cache(path: str | Path, expected: CacheManifest) -> CacheCheck:
    """Recompute a file's fingerprint and compare size and digest.

    The file_name field is informational and not compared.
    """
    actual = fingerprint(path)
    mismatched = []
    if actual.size_bytes != expected.size_bytes:
        mismatched.append("size_bytes")
    if actual.sha256_hex != expected.sha256_hex:
        mismatched.append("sha256_hex")
    return CacheCheck(ok=not mismatched, mismatched_fields=tuple(mismatched), actual=actual)


def _iter_records(path: Path, error_cls: type[ValueError]) -> Iterator[tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise error_cls(f"{path.name}: malformed record on line {line_no}: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise error_cls(f"{path.name}: record on line {line_no} is not an object")
            yield line_no, record


def _passage_from_record(record: dict, line_no: int, file_name: str) -> Passage:
    for key in ("doc_id", "text"):
        if key not in record:
            raise CorpusError(f"{file_name}: line {line_no} missing required key {key!r}")
    embedding = record.get("embedding")
    if embedding is not None:
        embedding = tuple(float(x) for x in embedding)
    text = record["text"]
    if not isinstance(text, str) or not text:
        raise CorpusError(f"{file_name}: line {line_no} has empty or non-string text")
    token_count = record.get("token_count")
    if token_count is None:
        token_count = len(tokenize(text))
    try:
        return Passage(
            doc_id=str(record["doc_id"]),
            text=text,
            title=record.get("title"),
            source_url=record.get("url"),
            embedding=embedding,
            token_count=int(token_count),
        )
    except ValueError as exc:
        raise CorpusError(f"{file_name}: line {line_no}: {exc}") from exc


def load_corpus(path: str | Path, label: str) -> FrozenCorpus:
    """Load a line-delimited corpus file into an immutable FrozenCorpus.

    Validates doc_id uniqueness (reporting both offending lines), embedding
    dimension consistency, and per-passage invariants. The manifest is
    computed over the raw file bytes.
    """
    path = Path(path)
    manifest = fingerprint(path)
    passages: list[Passage] = []
    seen: dict[str, int] = {}
    dim: int | None = None
    dim_line = 0
    for line_no, record in _iter_records(path, CorpusError):
        passage = _passage_from_record(record, line_no, path.name)
        if passage.doc_id in seen:
            raise CorpusError(
                f"{path.name}: duplicate doc_id {passage.doc_id!r} on lines "
                f"{seen[passage.doc_id]} and {line_no}"
            )
        seen[passage.doc_id] = line_no
        if passage.embedding is not None:
            if dim is None:
                dim, dim_line = len(passage.embedding), line_no
            elif len(passage.embedding) != dim:
                raise CorpusError(
                    f"{path.name}: line {line_no} has embedding dimension "
                    f"{len(passage.embedding)}, but line {dim_line} set dimension {dim}"
                )
        passages.append(passage)
    return FrozenCorpus(label=label, passages=tuple(passages), manifest=manifest)


def passage_to_record(passage: Passage) -> dict:
    record: dict = {"doc_id": passage.doc_id, "text": passage.text}
    if passage.title is not None:
        record["title"] = passage.title
    if passage.source_url is not None:
        record["url"] = passage.source_url
    if passage.embedding is not None:
        record["embedding"] = list(passage.embedding)
    record["token_count"] = passage.token_count
    return record


def write_corpus(path: str | Path, passages: list[Passage] | tuple[Passage, ...]) -> None:
    """Serialize passages one JSON record per line (round-trips load_corpus)."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in passages:
            fh.write(json.dumps(passage_to_record(p), sort_keys=True, ensure_ascii=False))
            fh.write("\n")


_BENCHMARK_FIELDS = (
    "question_id",
    "question",
    "best_answer",
    "correct_answers",
    "incorrect_answers",
    "category",
)


def load_benchmark(path: str | Path) -> list[BenchmarkItem]:
    """Load benchmark items in file order. Any N >= 1 is accepted."""
    path = Path(path)
    items: list[BenchmarkItem] = []
    for line_no, record in _iter_records(path, BenchmarkError):
        for key in _BENCHMARK_FIELDS:
            if key not in record:
                raise BenchmarkError(f"{path.name}: line {line_no} missing field {key!r}")
        try:
            items.append(
                BenchmarkItem(
                    question_id=int(record["question_id"]),
                    question=record["question"],
                    best_answer=record["best_answer"],
                    correct_answers=tuple(record["correct_answers"]),
                    incorrect_answers=tuple(record["incorrect_answers"]),
                    category=record["category"],
                )
            )
        except ValueError as exc:
            raise BenchmarkError(f"{path.name}: line {line_no}: {exc}") from exc
    if not items:
        raise BenchmarkError(f"{path.name}: benchmark file has no records")
    return items


def write_benchmark(path: str | Path, items: list[BenchmarkItem]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            record = {
                "question_id": item.question_id,
                "question": item.question,
                "best_answer": item.best_answer,
                "correct_answers": list(item.correct_answers),
                "incorrect_answers": list(item.incorrect_answers),
                "category": item.category,
            }
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False))
            fh.write("\n")
