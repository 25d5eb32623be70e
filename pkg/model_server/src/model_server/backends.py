"""NLI and embedding backends.

TransformersNli / TransformersEmbedder load real models once and run them in
eval mode under a lock, so responses are deterministic per request. The
lexical pair is a dependency-free deterministic stand-in used where model
weights are unavailable: identical sentences score entailment on top, and a
negation-marked premise overlapping the hypothesis scores contradiction on
top, which is enough to exercise the wire contract honestly.
"""

from __future__ import annotations

import hashlib
import math
import re
import threading

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_NEGATION_MARKERS = frozenset(
    {
        "no",
        "not",
        "never",
        "false",
        "cannot",
        "myth",
        "debunked",
        "refuted",
        "contrary",
        "incorrect",
        "wrong",
    }
)


def _tokens(text: str) -> set[str]:
    return {t for t in _TOKEN_RE.findall(text.lower()) if len(t) >= 3}


class LexicalNli:
    """Overlap-and-negation heuristic over content tokens."""

    def __init__(self, model_id: str):
        self.model_id = model_id

    def score(self, premise: str, hypothesis: str) -> dict[str, float]:
        p_tokens = _tokens(premise)
        h_tokens = _tokens(hypothesis)
        union = p_tokens | h_tokens
        jaccard = len(p_tokens & h_tokens) / len(union) if union else 1.0
        neg_p = bool(p_tokens & _NEGATION_MARKERS)
        neg_h = bool(h_tokens & _NEGATION_MARKERS)
        if jaccard >= 0.9 and neg_p == neg_h:
            e, n, c = 0.80, 0.15, 0.05
        elif neg_p != neg_h and jaccard > 0.0:
            e, n, c = 0.10, 0.15, 0.75
        elif jaccard >= 0.4:
            e, n, c = 0.55, 0.35, 0.10
        else:
            e, n, c = 0.15, 0.70, 0.15
        return {"entailment": e, "neutral": n, "contradiction": c}


class LexicalEmbedder:
    """Hash-bucket bag-of-tokens embedding, unit-normalized."""

    dim = 64

    def __init__(self, model_id: str):
        self.model_id = model_id

    def embed(self, text: str) -> list[float]:
        vec = [0.0] * self.dim
        for token in _TOKEN_RE.findall(text.lower()):
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            bucket = int.from_bytes(digest[:2], "big") % self.dim
            sign = 1.0 if digest[2] % 2 == 0 else -1.0
            vec[bucket] += sign
        norm = math.sqrt(sum(x * x for x in vec))
        if norm == 0.0:
            vec[0] = 1.0
            norm = 1.0
        return [x / norm for x in vec]


class TransformersNli:
    """Cross-encoder NLI scorer; weights loaded once, inference serialized."""

    def __init__(self, model_id: str, max_length: int = 512):
        import torch
        from transformers import AutoModelForSequenceClassification, AutoTokenizer

        self.model_id = model_id
        self._torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModelForSequenceClassification.from_pretrained(model_id)
        self.model.eval()
        self.max_length = max_length
        self._lock = threading.Lock()
        self._label_index = self._map_labels(self.model.config.id2label)

    @staticmethod
    def _map_labels(id2label: dict) -> dict[str, int]:
        mapping: dict[str, int] = {}
        for idx, label in id2label.items():
            name = str(label).lower()
            if "entail" in name:
                mapping["entailment"] = int(idx)
            elif "contra" in name:
                mapping["contradiction"] = int(idx)
            elif "neutral" in name:
                mapping["neutral"] = int(idx)
        if set(mapping) != {"entailment", "neutral", "contradiction"}:
            raise ValueError(f"cannot map NLI labels from {id2label!r}")
        return mapping

    def score(self, premise: str, hypothesis: str) -> dict[str, float]:
        torch = self._torch
        with self._lock, torch.no_grad():
            encoded = self.tokenizer(
                premise,
                hypothesis,
                truncation=True,
                max_length=self.max_length,
                return_tensors="pt",
            )
            logits = self.model(**encoded).logits[0]
            probs = torch.softmax(logits, dim=-1).tolist()
        return {name: float(probs[idx]) for name, idx in self._label_index.items()}


class TransformersEmbedder:
    """Sentence-embedding model; outputs unit-normalized vectors."""

    def __init__(self, model_id: str):
        from sentence_transformers import SentenceTransformer

        self.model_id = model_id
        self.model = SentenceTransformer(model_id)
        self.model.eval()
        self._lock = threading.Lock()
        self.dim = int(self.model.get_sentence_embedding_dimension())

    def embed(self, text: str) -> list[float]:
        with self._lock:
            vector = self.model.encode(
                [text], normalize_embeddings=True, convert_to_numpy=True
            )[0]
        return [float(x) for x in vector]


def build_backends(config) -> tuple[object, object]:
    if config.backend == "lexical":
        return LexicalNli(config.nli_model_id), LexicalEmbedder(config.embed_model_id)
    return (
        TransformersNli(config.nli_model_id),
        TransformersEmbedder(config.embed_model_id),
    )
