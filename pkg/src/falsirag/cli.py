"""Operator commands: fingerprint, verify-cache, run, eval/compare, make-fixture.

Exit codes: 0 success, 1 verification or evaluation failure, 2 usage error.
Every command is idempotent for identical inputs and config; wall-clock
timings are written to a sidecar file so trace and report files stay
byte-identical across reruns. The global --frozen flag structurally forbids
live gateway modes.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from falsirag.corpus import (
    CacheManifest,
    fingerprint,
    load_benchmark,
    load_corpus,
    verify_cache,
)
from falsirag.evaluation import build_report, config_digest, emit_manifest, score_run
from falsirag.fixtures import write_fixture
from falsirag.gateway.core import (
    Gateway,
    HttpTransport,
    LiveBackend,
    RecordBackend,
    ReplayBackend,
    StubBackend,
    load_replay_store,
    require_api_key,
)
from falsirag.gateway.stubs import StubModels
from falsirag.pipeline import METHODS, PipelineConfig, run_method, trace_from_record
from falsirag.retrieval.engine import CorpusIndex, load_replay_table

FROZEN_MODES = ("replay", "stub")
GATEWAY_MODES = ("live-record", "replay", "stub")


class ConfigError(ValueError):
    """Invalid run configuration (usage error, exit code 2)."""


@dataclass
class RunConfig:
    """Effective configuration of a benchmark run.

    output_dir and workers are runtime concerns and stay out of the config
    digest: they do not change what is computed.
    """

    corpus_path: str = ""
    benchmark_path: str = ""
    method: str = "fva"
    gateway_mode: str = "stub"
    tau: float = 0.5
    m: int = 1
    top_k: int = 3
    max_calls: int = 2
    corpus_label: str = "A"
    store_path: str | None = None
    retrieval_replay_path: str | None = None
    server_url: str | None = None
    model_ids: dict = field(default_factory=dict)
    seed: int = 0
    limit: int | None = None
    frozen: bool = False
    output_dir: str = "out"
    workers: int = 0

    def validate(self) -> None:
        if not self.corpus_path or not self.benchmark_path:
            raise ConfigError("run requires --corpus and --benchmark")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.gateway_mode not in GATEWAY_MODES:
            raise ConfigError(
                f"gateway mode must be one of {GATEWAY_MODES}, got {self.gateway_mode!r}"
            )
        if self.frozen and self.gateway_mode not in FROZEN_MODES:
            raise ConfigError(
                f"--frozen forbids gateway mode {self.gateway_mode!r}; "
                f"allowed: {FROZEN_MODES}"
            )
        if self.gateway_mode == "replay" and not self.store_path:
            raise ConfigError("replay mode requires --store")
        if self.gateway_mode == "live-record":
            if not self.store_path:
                raise ConfigError("live-record mode requires --store")
            if not self.server_url:
                raise ConfigError("live-record mode requires --server-url")
        if self.tau < 0 or self.m < 1 or self.top_k < 1 or self.max_calls < 0:
            raise ConfigError("invalid numeric parameter")

    def semantic_dict(self) -> dict:
        return {
            "corpus_path": self.corpus_path,
            "benchmark_path": self.benchmark_path,
            "method": self.method,
            "gateway_mode": self.gateway_mode,
            "tau": self.tau,
            "m": self.m,
            "top_k": self.top_k,
            "max_calls": self.max_calls,
            "corpus_label": self.corpus_label,
            "store_path": self.store_path,
            "retrieval_replay_path": self.retrieval_replay_path,
            "server_url": self.server_url,
            "model_ids": dict(sorted(self.model_ids.items())),
            "seed": self.seed,
            "limit": self.limit,
            "frozen": self.frozen,
        }

    def run_id(self) -> str:
        return config_digest(self.semantic_dict())[:12]


def load_run_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig()
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        for key, value in payload.items():
            if not hasattr(config, key):
                raise ConfigError(f"unknown config key {key!r}")
            setattr(config, key, value)
    overrides = {
        "corpus": "corpus_path",
        "benchmark": "benchmark_path",
        "method": "method",
        "gateway": "gateway_mode",
        "tau": "tau",
        "m": "m",
        "top_k": "top_k",
        "max_calls": "max_calls",
        "label": "corpus_label",
        "store": "store_path",
        "retrieval_replay": "retrieval_replay_path",
        "server_url": "server_url",
        "seed": "seed",
        "limit": "limit",
        "out": "output_dir",
        "workers": "workers",
    }
    for arg_name, config_name in overrides.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            setattr(config, config_name, value)
    if getattr(args, "frozen", False):
        config.frozen = True
    return config


def build_gateway(config: RunConfig, transport_factory=None) -> Gateway:
    """Backend per gateway mode. In replay and stub modes no transport object
    is ever created, so frozen runs cannot reach the network by construction.
    """
    if config.gateway_mode == "stub":
        backend = StubBackend(StubModels())
    elif config.gateway_mode == "replay":
        backend = ReplayBackend(load_replay_store(config.store_path))
    else:
        api_key = require_api_key()
        transport = transport_factory() if transport_factory else HttpTransport()
        live = LiveBackend(config.server_url, transport, api_key=api_key)
        backend = RecordBackend(live, config.store_path)
    return Gateway(backend, model_ids=config.model_ids or None)


def _write_jsonl(path: Path, records: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False))
            fh.write("\n")


def cmd_fingerprint(args: argparse.Namespace) -> int:
    for path in args.paths:
        try:
            manifest = fingerprint(path)
        except OSError as exc:
            print(f"error: cannot read {path}: {exc}", file=sys.stderr)
            return 1
        if args.json:
            print(json.dumps(manifest.to_record(), sort_keys=True))
        else:
            print(f"{manifest.sha256_hex}  {manifest.size_bytes}  {manifest.file_name}")
    return 0


def cmd_verify_cache(args: argparse.Namespace) -> int:
    manifest_path = Path(args.manifest)
    try:
        entries = []
        with open(manifest_path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    entries.append(CacheManifest.from_record(json.loads(line)))
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot parse manifest {manifest_path}: {exc}", file=sys.stderr)
        return 2
    if not entries:
        print(f"error: manifest {manifest_path} is empty", file=sys.stderr)
        return 2

    explicit = {Path(p).name: Path(p) for p in args.paths}
    failures = 0
    for expected in entries:
        path = explicit.get(expected.file_name, manifest_path.parent / expected.file_name)
        if not path.exists():
            print(f"MISSING  {expected.file_name}: file not found at {path}")
            failures += 1
            continue
        check = verify_cache(path, expected)
        if check.ok:
            print(f"OK       {expected.file_name}")
        else:
            detail = ", ".join(
                f"{field_name} expected "
                f"{getattr(expected, field_name)} got {getattr(check.actual, field_name)}"
                for field_name in check.mismatched_fields
            )
            print(f"MISMATCH {expected.file_name}: {detail}")
            failures += 1
    return 1 if failures else 0


def run_benchmark(config: RunConfig, transport_factory=None) -> dict:
    """Execute one method over the benchmark; returns output paths."""
    config.validate()
    corpus = load_corpus(config.corpus_path, label=config.corpus_label)
    items = load_benchmark(config.benchmark_path)
    if config.limit is not None:
        items = items[: config.limit]
    index = CorpusIndex(corpus)
    gateway = build_gateway(config, transport_factory)
    replay_table = (
        load_replay_table(config.retrieval_replay_path)
        if config.retrieval_replay_path
        else None
    )
    pipeline_config = PipelineConfig(
        tau=config.tau, m=config.m, top_k=config.top_k, max_calls=config.max_calls
    )

    workers = config.workers or min(8, os.cpu_count() or 1)
    workers = max(1, min(workers, len(items)))
    traces = [None] * len(items)
    if workers == 1:
        for i, item in enumerate(items):
            traces[i] = run_method(
                config.method, item, index, gateway, pipeline_config, replay_table
            )
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(
                    run_method, config.method, item, index, gateway, pipeline_config, replay_table
                ): i
                for i, item in enumerate(items)
            }
            for future in concurrent.futures.as_completed(futures):
                traces[futures[future]] = future.result()

    dataset_manifest = fingerprint(config.benchmark_path)
    manifest = emit_manifest(
        semantic_config=config.semantic_dict(),
        model_ids=gateway.model_ids,
        template_digests=gateway.templates.digests,
        dataset_fingerprint=dataset_manifest,
        dataset_items=len(items),
        cache_manifests={config.corpus_label: corpus.manifest},
        frozen=config.frozen,
    )

    run_id = config.run_id()
    out = Path(config.output_dir)
    trace_path = out / "traces" / run_id / f"{config.method}.jsonl"
    _write_jsonl(trace_path, [t.to_record(include_timing=False) for t in traces])
    manifest_path = out / "manifests" / run_id / "manifest.json"
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(
        json.dumps(manifest, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    timing_path = out / "manifests" / run_id / f"timings-{config.method}.jsonl"
    _write_jsonl(
        timing_path,
        [{"question_id": t.question_id, "timing": t.timing} for t in traces],
    )
    return {
        "traces": str(trace_path),
        "manifest": str(manifest_path),
        "timings": str(timing_path),
        "run_id": run_id,
    }


def cmd_run(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    try:
        paths = run_benchmark(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(paths["traces"])
    return 0


def _load_trace_files(paths: list[str]) -> dict[str, list]:
    by_method: dict[str, list] = {}
    for path in paths:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                trace = trace_from_record(json.loads(line))
                by_method.setdefault(trace.method, []).append(trace)
    return by_method


def run_eval(args: argparse.Namespace) -> dict:
    items = load_benchmark(args.benchmark)
    by_method = _load_trace_files(args.traces)
    if not by_method:
        raise ConfigError("no traces found in the given files")

    id_sets = {m: sorted(t.question_id for t in ts) for m, ts in by_method.items()}
    reference = next(iter(id_sets.values()))
    for method, ids in id_sets.items():
        if ids != reference:
            raise ValueError(
                f"trace sets are misaligned: method {method!r} covers different question ids"
            )
        if len(set(ids)) != len(ids):
            raise ValueError(f"method {method!r} has duplicate question ids")

    config = RunConfig(
        corpus_path=getattr(args, "corpus", None) or "",
        benchmark_path=args.benchmark,
        gateway_mode=args.gateway,
        store_path=getattr(args, "store", None),
        frozen=getattr(args, "frozen", False),
    )
    if config.frozen and config.gateway_mode not in FROZEN_MODES:
        raise ConfigError(f"--frozen forbids gateway mode {config.gateway_mode!r}")
    if config.gateway_mode == "replay" and not config.store_path:
        raise ConfigError("replay mode requires --store")
    gateway = build_gateway(config)

    results_by_method = {}
    item_index = {item.question_id: item for item in items}
    for method, traces in sorted(by_method.items()):
        missing = [t.question_id for t in traces if t.question_id not in item_index]
        if missing:
            raise ValueError(f"traces reference unknown question ids: {missing[:5]}")
        results_by_method[method] = score_run(traces, items, gateway)

    trace_digests = {Path(p).name: fingerprint(p).sha256_hex for p in args.traces}
    eval_semantics = {
        "benchmark_sha256": fingerprint(args.benchmark).sha256_hex,
        "traces_sha256": dict(sorted(trace_digests.items())),
        "gateway_mode": config.gateway_mode,
        "frozen": config.frozen,
    }
    caches = {}
    if getattr(args, "corpus", None):
        caches[getattr(args, "label", None) or "A"] = fingerprint(args.corpus)
    manifest = emit_manifest(
        semantic_config=eval_semantics,
        model_ids=gateway.model_ids,
        template_digests=gateway.templates.digests,
        dataset_fingerprint=fingerprint(args.benchmark),
        dataset_items=len(items),
        cache_manifests=caches,
        frozen=config.frozen,
    )
    report = build_report(results_by_method, items, manifest)

    eval_id = config_digest(eval_semantics)[:12]
    out = Path(args.out)
    report_dir = out / "reports" / eval_id
    report_dir.mkdir(parents=True, exist_ok=True)
    json_path = report_dir / "report.json"
    text_path = report_dir / "report.txt"
    json_path.write_text(report.to_json(), encoding="utf-8")
    text_path.write_text(report.render_text(), encoding="utf-8")
    return {"report_json": str(json_path), "report_txt": str(text_path), "eval_id": eval_id}


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        paths = run_eval(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(paths["report_json"])
    return 0


def cmd_make_fixture(args: argparse.Namespace) -> int:
    info = write_fixture(args.out, n_questions=args.n, seed=args.seed)
    print(json.dumps(info, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="falsirag")
    parser.add_argument(
        "--frozen",
        dest="frozen_global",
        action="store_true",
        help="forbid live gateway modes (replay/stub only, zero network calls)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fingerprint = sub.add_parser("fingerprint", help="print SHA256 manifests for files")
    p_fingerprint.add_argument("paths", nargs="+")
    p_fingerprint.add_argument("--json", action="store_true")
    p_fingerprint.set_defaults(handler=cmd_fingerprint)

    p_verify = sub.add_parser("verify-cache", help="verify files against a manifest")
    p_verify.add_argument("--manifest", required=True)
    p_verify.add_argument("paths", nargs="*", help="override file locations by name")
    p_verify.set_defaults(handler=cmd_verify_cache)

    p_run = sub.add_parser("run", help="run one method over a benchmark")
    p_run.add_argument("--config", help="JSON config file; flags override")
    p_run.add_argument("--corpus")
    p_run.add_argument("--benchmark")
    p_run.add_argument("--method", choices=METHODS)
    p_run.add_argument("--gateway", dest="gateway", choices=GATEWAY_MODES)
    p_run.add_argument("--tau", type=float)
    p_run.add_argument("--m", type=int)
    p_run.add_argument("--top-k", dest="top_k", type=int)
    p_run.add_argument("--max-calls", dest="max_calls", type=int)
    p_run.add_argument("--label")
    p_run.add_argument("--store", help="replay/record store path")
    p_run.add_argument("--retrieval-replay", dest="retrieval_replay")
    p_run.add_argument("--server-url", dest="server_url")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--limit", type=int)
    p_run.add_argument("--out")
    p_run.add_argument("--workers", type=int)
    p_run.add_argument("--frozen", action="store_true")
    p_run.set_defaults(handler=cmd_run)

    for name in ("eval", "compare"):
        p_eval = sub.add_parser(name, help="score traces and build a report")
        p_eval.add_argument("--traces", nargs="+", required=True)
        p_eval.add_argument("--benchmark", required=True)
        p_eval.add_argument("--out", required=True)
        p_eval.add_argument("--gateway", choices=FROZEN_MODES + ("live-record",), default="stub")
        p_eval.add_argument("--store")
        p_eval.add_argument("--corpus", help="corpus file for the cache manifest")
        p_eval.add_argument("--label")
        p_eval.add_argument("--frozen", action="store_true")
        p_eval.set_defaults(handler=cmd_eval)

    p_fixture = sub.add_parser("make-fixture", help="write the planted desk fixture")
    p_fixture.add_argument("--out", required=True)
    p_fixture.add_argument("--n", type=int, default=40)
    p_fixture.add_argument("--seed", type=int, default=7)
    p_fixture.set_defaults(handler=cmd_make_fixture)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # Subparsers parse into a fresh namespace, so the top-level --frozen has
    # to be merged in by hand.
    if getattr(args, "frozen_global", False):
        args.frozen = True
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
