"""Uniform interface to every model role with live, record, replay, and stub
backends.

All model traffic flows through one seam: a backend's ``complete`` method
takes a canonical ModelCall plus an out-of-band structured payload (used only
by stubs) and returns a wire-shaped response dict. Replay keys are SHA256
digests of the canonical call serialization, so identical requests map to
identical store entries across platforms and process restarts. In replay and
stub modes no network transport object is ever constructed, which makes
frozen runs hermetic by construction.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import threading
import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Protocol, Sequence

from falsirag.corpus import BenchmarkItem, Passage
from falsirag.text import first_sentence_end, head_clause, normalize_query

ROLES = ("generator", "falsifier", "nli", "embed", "judge")

API_KEY_ENV = "FALSIRAG_API_KEY"

DEFAULT_MAX_TOKENS = 512
DEFAULT_NLI_PREMISE_LIMIT = 6000
LIVE_RETRIES = 2
LIVE_TIMEOUT_S = 60.0

_JUDGE_TOKEN_RE = re.compile(r"\b(INCORRECT|CORRECT)\b")

# Padding prefixes for adversarial queries when the falsifier backend yields
# fewer than m usable queries.
_KILL_PAD_PREFIXES = (
    "evidence against: ",
    "counter-evidence: ",
    "refutation of: ",
    "contradicting claims about: ",
)


class GatewayError(RuntimeError):
    """Base class for gateway failures."""


class BackendUnavailable(GatewayError):
    """Live backend could not be reached or refused the request."""


class ReplayMiss(GatewayError):
    """Frozen-mode request whose key is absent from the replay store."""

    def __init__(self, role: str, model_id: str, digest: str):
        super().__init__(
            f"replay miss: role={role} model_id={model_id} request_digest={digest}"
        )
        self.role = role
        self.model_id = model_id
        self.digest = digest


class StoreConflict(GatewayError):
    """Recording would overwrite an existing key with different bytes."""


@dataclass(frozen=True)
class ModelCall:
    """Canonical description of one model request."""

    role: str
    model_id: str
    input: dict
    params: dict

    def canonical(self) -> str:
        payload = {
            "role": self.role,
            "model_id": self.model_id,
            "input": self.input,
            "params": self.params,
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    def key(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class NliScore:
    """Three-way NLI distribution for (premise, hypothesis)."""

    p_entailment: float
    p_neutral: float
    p_contradiction: float

    def __post_init__(self) -> None:
        for name, p in (
            ("p_entailment", self.p_entailment),
            ("p_neutral", self.p_neutral),
            ("p_contradiction", self.p_contradiction),
        ):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} outside [0, 1]")
        total = self.p_entailment + self.p_neutral + self.p_contradiction
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"NLI probabilities sum to {total}, not 1 within 1e-6")


class Backend(Protocol):
    name: str

    def complete(self, call: ModelCall, aux: dict) -> dict: ...


class TemplateSet:
    """Versioned prompt templates; digests feed the run manifest."""

    TEMPLATE_NAMES = (
        "generator_draft",
        "generator_revise",
        "falsifier",
        "selfrag_reflect",
        "crag_evaluate",
        "judge",
    )

    def __init__(self, texts: dict[str, str]):
        missing = [n for n in self.TEMPLATE_NAMES if n not in texts]
        if missing:
            raise ValueError(f"missing templates: {missing}")
        self._texts = dict(texts)
        self.digests = {
            name: hashlib.sha256(text.encode("utf-8")).hexdigest()
            for name, text in sorted(self._texts.items())
        }

    @classmethod
    def load_default(cls) -> "TemplateSet":
        texts = {}
        root = resources.files("falsirag.gateway").joinpath("templates")
        for name in cls.TEMPLATE_NAMES:
            texts[name] = root.joinpath(f"{name}.txt").read_text(encoding="utf-8")
        return cls(texts)

    @classmethod
    def load_dir(cls, path: str | Path) -> "TemplateSet":
        path = Path(path)
        texts = {}
        for name in cls.TEMPLATE_NAMES:
            texts[name] = (path / f"{name}.txt").read_text(encoding="utf-8")
        return cls(texts)

    def render(self, name: str, **variables: str) -> str:
        return self._texts[name].format(**variables)


class StubBackend:
    """Serves every role from a deterministic in-process model suite."""

    name = "stub"

    def __init__(self, models):
        self.models = models

    def complete(self, call: ModelCall, aux: dict) -> dict:
        kind = aux["kind"]
        m = self.models
        if kind == "draft":
            return {"text": m.draft(aux["question"], aux["context"])}
        if kind == "revise":
            return {"text": m.revise(aux["question"], aux["context"], aux["anti_context"])}
        if kind == "kill":
            return {"text": "\n".join(m.kill(aux["question"], aux["draft"], aux["m"]))}
        if kind == "reflect":
            return {"text": m.reflect(aux["question"], aux["context"], aux["answer"])}
        if kind == "evaluate":
            return {"text": m.evaluate(aux["question"], aux["context"])}
        if kind == "judge":
            verdict = m.judge(
                aux["question"],
                aux["answer"],
                aux["best_answer"],
                aux["correct_answers"],
                aux["incorrect_answers"],
            )
            return {"text": "CORRECT" if verdict else "INCORRECT"}
        if kind == "nli":
            e, n, c = m.nli(aux["premise"], aux["hypothesis"])
            return {"entailment": e, "neutral": n, "contradiction": c}
        if kind == "embed":
            return {"vector": list(m.embed(aux["text"]))}
        raise GatewayError(f"stub backend got unknown call kind {kind!r}")


def load_replay_store(path: str | Path) -> dict[str, dict]:
    """Load a replay store file; validates digests and duplicate consistency."""
    store: dict[str, dict] = {}
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            record = json.loads(line)
            key = record["key_digest"]
            call = ModelCall(
                role=record["role"],
                model_id=record["model_id"],
                input=record["request"]["input"],
                params=record["request"]["params"],
            )
            if call.key() != key:
                raise GatewayError(
                    f"{path.name}: line {line_no} key_digest does not match its request"
                )
            if key in store and store[key] != record["response"]:
                raise GatewayError(
                    f"{path.name}: line {line_no} conflicts with an earlier record for {key}"
                )
            store[key] = record["response"]
    return store


class ReplayBackend:
    """Read-only store lookups; a miss is a hard error, never a live call."""

    name = "replay"

    def __init__(self, store: dict[str, dict]):
        self._store = store

    def complete(self, call: ModelCall, aux: dict) -> dict:
        key = call.key()
        try:
            return self._store[key]
        except KeyError:
            raise ReplayMiss(call.role, call.model_id, key) from None


class RecordBackend:
    """Wraps a live backend; persists each response under its key.

    Append-only: re-recording an identical response is a no-op, recording a
    different response for an existing key raises StoreConflict.
    """

    name = "live-record"

    def __init__(self, inner: Backend, store_path: str | Path):
        self.inner = inner
        self.store_path = Path(store_path)
        self._lock = threading.Lock()
        self._mem: dict[str, dict] = {}
        if self.store_path.exists():
            self._mem = load_replay_store(self.store_path)
        else:
            self.store_path.parent.mkdir(parents=True, exist_ok=True)

    def complete(self, call: ModelCall, aux: dict) -> dict:
        key = call.key()
        with self._lock:
            if key in self._mem:
                return self._mem[key]
        response = self.inner.complete(call, aux)
        record = {
            "key_digest": key,
            "role": call.role,
            "model_id": call.model_id,
            "request": {"input": call.input, "params": call.params},
            "response": response,
        }
        with self._lock:
            existing = self._mem.get(key)
            if existing is not None:
                if existing != response:
                    raise StoreConflict(f"conflicting responses recorded for key {key}")
                return existing
            with open(self.store_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False))
                fh.write("\n")
            self._mem[key] = response
        return response


class HttpTransport:
    """Thin requests-based POST transport with a fixed retry count."""

    def __init__(self, retries: int = LIVE_RETRIES, timeout: float = LIVE_TIMEOUT_S):
        self.retries = retries
        self.timeout = timeout

    def post(self, url: str, payload: dict, headers: dict[str, str]) -> dict:
        import requests

        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                response = requests.post(url, json=payload, headers=headers, timeout=self.timeout)
                if response.status_code != 200:
                    raise BackendUnavailable(
                        f"{url} returned HTTP {response.status_code}: {response.text[:200]}"
                    )
                return response.json()
            except BackendUnavailable:
                raise
            except Exception as exc:  # connection errors, timeouts
                last_error = exc
                if attempt < self.retries:
                    time.sleep(0.2 * (attempt + 1))
        raise BackendUnavailable(f"{url} unreachable after {self.retries + 1} attempts: {last_error}")


class LiveBackend:
    """Speaks the wire contract: /generate, /nli, /embed."""

    name = "live"

    def __init__(self, base_url: str, transport, api_key: str | None = None):
        self.base_url = base_url.rstrip("/")
        self.transport = transport
        self.api_key = api_key

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def complete(self, call: ModelCall, aux: dict) -> dict:
        if call.role == "nli":
            return self.transport.post(
                f"{self.base_url}/nli",
                {"premise": call.input["premise"], "hypothesis": call.input["hypothesis"]},
                self._headers(),
            )
        if call.role == "embed":
            return self.transport.post(
                f"{self.base_url}/embed", {"text": call.input["text"]}, self._headers()
            )
        # generator, falsifier, and judge all ride the /generate route.
        return self.transport.post(
            f"{self.base_url}/generate",
            {"prompt": call.input["prompt"], "params": call.params},
            self._headers(),
        )


def render_passage_block(passages: Sequence[Passage]) -> str:
    if not passages:
        return "(none)"
    return "\n".join(f"[{i}] ({p.doc_id}) {p.text}" for i, p in enumerate(passages, start=1))


DEFAULT_MODEL_IDS = {
    "generator": "stub-generator-v1",
    "falsifier": "stub-generator-v1",
    "nli": "stub-nli-v1",
    "embed": "stub-embed-v1",
    "judge": "stub-judge-v1",
}


class Gateway:
    """Role-shaped operations over one backend.

    In benchmark mode decoding is pinned to temperature 0 for every role.
    """

    def __init__(
        self,
        backend: Backend,
        model_ids: dict[str, str] | None = None,
        templates: TemplateSet | None = None,
        max_tokens: int = DEFAULT_MAX_TOKENS,
        benchmark_mode: bool = True,
        nli_premise_limit: int = DEFAULT_NLI_PREMISE_LIMIT,
    ):
        self.backend = backend
        self.model_ids = dict(DEFAULT_MODEL_IDS)
        if model_ids:
            self.model_ids.update(model_ids)
        self.templates = templates or TemplateSet.load_default()
        self.benchmark_mode = benchmark_mode
        self.params = {"temperature": 0.0, "max_tokens": max_tokens}
        self.nli_premise_limit = nli_premise_limit

    @property
    def mode(self) -> str:
        return self.backend.name

    def _call(self, role: str, input_payload: dict, aux: dict) -> dict:
        if self.benchmark_mode and self.params["temperature"] != 0.0:
            raise GatewayError("benchmark mode requires temperature 0")
        call = ModelCall(
            role=role,
            model_id=self.model_ids[role],
            input=input_payload,
            params=dict(self.params),
        )
        return self.backend.complete(call, aux)

    def generate(
        self,
        question: str,
        context_passages: Sequence[Passage],
        mode: str = "draft",
        anti_context: Sequence[Passage] | None = None,
    ) -> str:
        """Draft or revise an answer over the given evidence.

        Revise mode requires anti_context and instructs the model to admit
        the invalidated draft, ground itself in the counter-evidence, and
        hedge when the evidence is thin.
        """
        if mode not in ("draft", "revise"):
            raise ValueError(f"mode must be draft or revise, got {mode!r}")
        if mode == "revise" and not anti_context:
            raise ValueError("revise mode requires anti_context")
        if mode == "draft":
            prompt = self.templates.render(
                "generator_draft",
                question=question,
                context=render_passage_block(context_passages),
            )
            aux = {
                "kind": "draft",
                "question": question,
                "context": tuple(p.text for p in context_passages),
            }
        else:
            prompt = self.templates.render(
                "generator_revise",
                question=question,
                context=render_passage_block(context_passages),
                anti_context=render_passage_block(anti_context or ()),
            )
            aux = {
                "kind": "revise",
                "question": question,
                "context": tuple(p.text for p in context_passages),
                "anti_context": tuple(p.text for p in anti_context or ()),
            }
        text = self._call("generator", {"prompt": prompt}, aux)["text"]
        if not text:
            raise GatewayError("generator returned an empty answer")
        return text

    def kill_queries(self, question: str, draft: str, m: int) -> list[str]:
        """m adversarial queries hunting refutations of the draft.

        Backend output is deduplicated (after whitespace/case normalization)
        and never echoes the original question; shortfalls are padded with
        deterministic negation templates over the draft's head clause.
        """
        if m < 1:
            raise ValueError(f"m must be >= 1, got {m}")
        prompt = self.templates.render("falsifier", question=question, draft=draft, m=str(m))
        aux = {"kind": "kill", "question": question, "draft": draft, "m": m}
        text = self._call("falsifier", {"prompt": prompt}, aux)["text"]
        question_norm = normalize_query(question)
        queries: list[str] = []
        seen: set[str] = set()

        def add(candidate: str) -> None:
            candidate = candidate.strip()
            if not candidate:
                return
            norm = normalize_query(candidate)
            if norm == question_norm or norm in seen:
                return
            seen.add(norm)
            queries.append(candidate)

        for line in text.splitlines():
            if len(queries) >= m:
                break
            add(line)
        head = head_clause(draft)
        pad_index = 0
        while len(queries) < m:
            if pad_index < len(_KILL_PAD_PREFIXES):
                add(_KILL_PAD_PREFIXES[pad_index] + head)
            else:
                add(f"evidence against ({pad_index - len(_KILL_PAD_PREFIXES) + 2}): {head}")
            pad_index += 1
        return queries[:m]

    def nli_contradiction(self, premise: str, hypothesis: str) -> NliScore:
        """Contradiction distribution for hypothesis given the premise passage.

        Long premises are truncated from the end (snippet openings carry the
        claim); the hypothesis is never cut below its first sentence.
        """
        if not premise or not hypothesis:
            raise ValueError("premise and hypothesis must be non-empty")
        limit = self.nli_premise_limit
        if len(premise) > limit:
            premise = premise[:limit]
        if len(hypothesis) > limit:
            hypothesis = hypothesis[: max(limit, first_sentence_end(hypothesis))]
        aux = {"kind": "nli", "premise": premise, "hypothesis": hypothesis}
        resp = self._call("nli", {"premise": premise, "hypothesis": hypothesis}, aux)
        return NliScore(
            p_entailment=float(resp["entailment"]),
            p_neutral=float(resp["neutral"]),
            p_contradiction=float(resp["contradiction"]),
        )

    def embed(self, text: str) -> tuple[float, ...]:
        """Unit embedding of the text (renormalized defensively)."""
        if not text:
            raise ValueError("cannot embed empty text")
        aux = {"kind": "embed", "text": text}
        vector = self._call("embed", {"text": text}, aux)["vector"]
        norm = math.sqrt(sum(float(x) * float(x) for x in vector))
        if norm == 0.0:
            raise GatewayError("embed backend returned a zero vector")
        return tuple(float(x) / norm for x in vector)

    def judge(self, question: str, system_answer: str, item: BenchmarkItem) -> bool:
        """Deterministic correctness verdict against the item's references."""
        if not system_answer:
            raise ValueError("cannot judge an empty answer")
        prompt = self.templates.render(
            "judge",
            question=question,
            answer=system_answer,
            correct="\n".join((item.best_answer,) + item.correct_answers),
            incorrect="\n".join(item.incorrect_answers) or "(none)",
        )
        aux = {
            "kind": "judge",
            "question": question,
            "answer": system_answer,
            "best_answer": item.best_answer,
            "correct_answers": item.correct_answers,
            "incorrect_answers": item.incorrect_answers,
        }
        text = self._call("judge", {"prompt": prompt}, aux)["text"]
        match = _JUDGE_TOKEN_RE.search(text)
        if match is None:
            return False
        return match.group(1) == "CORRECT"

    def selfrag_reflect(self, question: str, context: Sequence[Passage], answer: str) -> str:
        """Raw reflection grade text; parsing happens in the pipeline."""
        prompt = self.templates.render(
            "selfrag_reflect",
            question=question,
            context=render_passage_block(context),
            answer=answer,
        )
        aux = {
            "kind": "reflect",
            "question": question,
            "context": tuple(p.text for p in context),
            "answer": answer,
        }
        return self._call("generator", {"prompt": prompt}, aux)["text"]

    def crag_evaluate(self, question: str, context: Sequence[Passage]) -> str:
        """Raw evidence-sufficiency grade text; parsing happens in the pipeline."""
        prompt = self.templates.render(
            "crag_evaluate",
            question=question,
            context=render_passage_block(context),
        )
        aux = {
            "kind": "evaluate",
            "question": question,
            "context": tuple(p.text for p in context),
        }
        return self._call("generator", {"prompt": prompt}, aux)["text"]


def require_api_key() -> str:
    key = os.environ.get(API_KEY_ENV, "")
    if not key:
        raise BackendUnavailable(
            f"live mode requires the {API_KEY_ENV} environment variable"
        )
    return key
