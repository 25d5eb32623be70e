from __future__ import annotations

import hashlib
import json
from pathlib import Path

import pytest

from falsirag.cli import ConfigError, RunConfig, main, run_benchmark
from falsirag.corpus import fingerprint
from falsirag.fixtures import write_fixture
from falsirag.gateway.core import API_KEY_ENV
from test_gateway import FakeTransport, PanickingTransport


@pytest.fixture
def fixture_dir(tmp_path):
    out = tmp_path / "fixture"
    write_fixture(out, n_questions=8, seed=7)
    return out


def run_config(fixture_dir, out_dir, **kw) -> RunConfig:
    config = RunConfig(
        corpus_path=str(fixture_dir / "corpus.jsonl"),
        benchmark_path=str(fixture_dir / "benchmark.jsonl"),
        output_dir=str(out_dir),
        workers=1,
    )
    for key, value in kw.items():
        setattr(config, key, value)
    return config


class TestFingerprintCommand:
    def test_prints_digest(self, tmp_path, capsys):
        path = tmp_path / "f.bin"
        path.write_bytes(b"abc")
        assert main(["fingerprint", str(path)]) == 0
        out = capsys.readouterr().out
        assert "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad" in out

    def test_json_output(self, tmp_path, capsys):
        path = tmp_path / "f.bin"
        path.write_bytes(b"")
        assert main(["fingerprint", "--json", str(path)]) == 0
        record = json.loads(capsys.readouterr().out)
        assert record["size_bytes"] == 0

    def test_missing_file(self, tmp_path):
        assert main(["fingerprint", str(tmp_path / "nope")]) == 1


class TestVerifyCacheCommand:
    def write_manifest(self, tmp_path, *files):
        manifest = tmp_path / "manifest.jsonl"
        with open(manifest, "w", encoding="utf-8") as fh:
            for f in files:
                fh.write(json.dumps(fingerprint(f).to_record()) + "\n")
        return manifest

    def test_match_exits_zero(self, tmp_path, capsys):
        data = tmp_path / "cache.jsonl"
        data.write_bytes(b'{"doc_id": "a", "text": "t"}\n')
        manifest = self.write_manifest(tmp_path, data)
        assert main(["verify-cache", "--manifest", str(manifest)]) == 0
        assert "OK" in capsys.readouterr().out

    def test_corruption_exits_one_and_names_file(self, tmp_path, capsys):
        data = tmp_path / "cache.jsonl"
        data.write_bytes(b'{"doc_id": "a", "text": "t"}\n')
        manifest = self.write_manifest(tmp_path, data)
        data.write_bytes(b'{"doc_id": "a", "text": "u"}\n')
        assert main(["verify-cache", "--manifest", str(manifest)]) == 1
        out = capsys.readouterr().out
        assert "MISMATCH" in out and "cache.jsonl" in out

    def test_missing_file_distinct_error(self, tmp_path, capsys):
        data = tmp_path / "cache.jsonl"
        data.write_bytes(b"x")
        manifest = self.write_manifest(tmp_path, data)
        data.unlink()
        assert main(["verify-cache", "--manifest", str(manifest)]) == 1
        assert "MISSING" in capsys.readouterr().out

    def test_unparseable_manifest_usage_error(self, tmp_path):
        manifest = tmp_path / "manifest.jsonl"
        manifest.write_text("not json\n", encoding="utf-8")
        assert main(["verify-cache", "--manifest", str(manifest)]) == 2


class TestRunCommand:
    def test_stub_run_writes_traces_and_manifest(self, fixture_dir, tmp_path, capsys):
        out_dir = tmp_path / "out"
        code = main(
            [
                "run",
                "--corpus", str(fixture_dir / "corpus.jsonl"),
                "--benchmark", str(fixture_dir / "benchmark.jsonl"),
                "--method", "fva",
                "--gateway", "stub",
                "--out", str(out_dir),
                "--workers", "1",
            ]
        )
        assert code == 0
        trace_path = Path(capsys.readouterr().out.strip())
        lines = trace_path.read_text().strip().splitlines()
        assert len(lines) == 8
        for line in lines:
            record = json.loads(line)
            assert record["budget"]["calls_used"] <= 2
            assert "timing" not in record
        manifest_dir = trace_path.parent.parent.parent / "manifests" / trace_path.parent.name
        manifest = json.loads((manifest_dir / "manifest.json").read_text())
        assert manifest["caches"]["A"]["sha256_hex"] == fingerprint(
            fixture_dir / "corpus.jsonl"
        ).sha256_hex
        assert (manifest_dir / "timings-fva.jsonl").exists()

    def test_same_config_idempotent_bytes(self, fixture_dir, tmp_path):
        config1 = run_config(fixture_dir, tmp_path / "out1")
        config2 = run_config(fixture_dir, tmp_path / "out2")
        paths1 = run_benchmark(config1)
        paths2 = run_benchmark(config2)
        assert paths1["run_id"] == paths2["run_id"]
        assert Path(paths1["traces"]).read_bytes() == Path(paths2["traces"]).read_bytes()
        assert Path(paths1["manifest"]).read_bytes() == Path(paths2["manifest"]).read_bytes()

    def test_frozen_forbids_live_mode(self, fixture_dir, tmp_path):
        code = main(
            [
                "--frozen",
                "run",
                "--corpus", str(fixture_dir / "corpus.jsonl"),
                "--benchmark", str(fixture_dir / "benchmark.jsonl"),
                "--gateway", "live-record",
                "--store", str(tmp_path / "s.jsonl"),
                "--server-url", "http://x",
                "--out", str(tmp_path / "out"),
            ]
        )
        assert code == 2

    def test_live_mode_without_credentials_is_startup_error(
        self, fixture_dir, tmp_path, monkeypatch
    ):
        monkeypatch.delenv(API_KEY_ENV, raising=False)
        config = run_config(
            fixture_dir,
            tmp_path / "out",
            gateway_mode="live-record",
            store_path=str(tmp_path / "s.jsonl"),
            server_url="http://models.internal",
        )
        with pytest.raises(Exception, match=API_KEY_ENV):
            run_benchmark(config)

    def test_replay_mode_requires_store(self, fixture_dir, tmp_path):
        config = run_config(fixture_dir, tmp_path / "out", gateway_mode="replay")
        with pytest.raises(ConfigError):
            run_benchmark(config)

    def test_limit_slices_benchmark(self, fixture_dir, tmp_path):
        config = run_config(fixture_dir, tmp_path / "out", limit=3)
        paths = run_benchmark(config)
        assert len(Path(paths["traces"]).read_text().strip().splitlines()) == 3

    def test_workers_parallel_output_identical_to_serial(self, fixture_dir, tmp_path):
        serial = run_benchmark(run_config(fixture_dir, tmp_path / "o1", workers=1))
        parallel = run_benchmark(run_config(fixture_dir, tmp_path / "o2", workers=4))
        assert Path(serial["traces"]).read_bytes() == Path(parallel["traces"]).read_bytes()

    def test_record_then_replay_identical_traces(self, fixture_dir, tmp_path, monkeypatch):
        monkeypatch.setenv(API_KEY_ENV, "test-key")
        store = tmp_path / "store.jsonl"
        recorded = run_benchmark(
            run_config(
                fixture_dir,
                tmp_path / "rec",
                gateway_mode="live-record",
                store_path=str(store),
                server_url="http://models.internal",
            ),
            transport_factory=FakeTransport,
        )
        replayed = run_benchmark(
            run_config(
                fixture_dir,
                tmp_path / "rep",
                gateway_mode="replay",
                store_path=str(store),
                frozen=True,
            )
        )
        rec_lines = [
            json.loads(line) for line in Path(recorded["traces"]).read_text().splitlines()
        ]
        rep_lines = [
            json.loads(line) for line in Path(replayed["traces"]).read_text().splitlines()
        ]
        assert rec_lines == rep_lines

    def test_hermetic_frozen_run_with_panicking_transport(self, fixture_dir, tmp_path):
        config = run_config(fixture_dir, tmp_path / "out", frozen=True)
        paths = run_benchmark(config, transport_factory=PanickingTransport)
        assert Path(paths["traces"]).exists()

    def test_config_file_with_flag_overrides(self, fixture_dir, tmp_path, capsys):
        config_path = tmp_path / "config.json"
        config_path.write_text(
            json.dumps(
                {
                    "corpus_path": str(fixture_dir / "corpus.jsonl"),
                    "benchmark_path": str(fixture_dir / "benchmark.jsonl"),
                    "method": "selfrag",
                    "tau": 0.4,
                }
            ),
            encoding="utf-8",
        )
        code = main(
            [
                "run",
                "--config", str(config_path),
                "--method", "crag",
                "--out", str(tmp_path / "out"),
                "--workers", "1",
            ]
        )
        assert code == 0
        trace_path = Path(capsys.readouterr().out.strip())
        assert trace_path.name == "crag.jsonl"

    def test_unknown_config_key_rejected(self, fixture_dir, tmp_path):
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({"no_such_key": 1}), encoding="utf-8")
        assert main(["run", "--config", str(config_path), "--out", str(tmp_path)]) == 2


class TestEvalCommand:
    def run_two_methods(self, fixture_dir, tmp_path):
        paths = {}
        for method in ("fva", "selfrag"):
            paths[method] = run_benchmark(
                run_config(fixture_dir, tmp_path / "runs", method=method)
            )["traces"]
        return paths

    def test_eval_builds_report(self, fixture_dir, tmp_path, capsys):
        traces = self.run_two_methods(fixture_dir, tmp_path)
        code = main(
            [
                "eval",
                "--traces", traces["fva"], traces["selfrag"],
                "--benchmark", str(fixture_dir / "benchmark.jsonl"),
                "--out", str(tmp_path / "evalout"),
                "--corpus", str(fixture_dir / "corpus.jsonl"),
            ]
        )
        assert code == 0
        report_path = Path(capsys.readouterr().out.strip())
        payload = json.loads(report_path.read_text())
        assert set(payload["accuracy"]) == {"fva", "selfrag"}
        assert len(payload["mcnemar"]) == 1
        assert payload["falsification_rate"] is not None
        assert (report_path.parent / "report.txt").exists()

    def test_compare_alias(self, fixture_dir, tmp_path, capsys):
        traces = self.run_two_methods(fixture_dir, tmp_path)
        code = main(
            [
                "compare",
                "--traces", traces["fva"], traces["selfrag"],
                "--benchmark", str(fixture_dir / "benchmark.jsonl"),
                "--out", str(tmp_path / "cmp"),
            ]
        )
        assert code == 0

    def test_misaligned_traces_exit_one(self, fixture_dir, tmp_path):
        traces = self.run_two_methods(fixture_dir, tmp_path)
        clipped = tmp_path / "clipped.jsonl"
        lines = Path(traces["selfrag"]).read_text().strip().splitlines()
        clipped.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
        code = main(
            [
                "eval",
                "--traces", traces["fva"], str(clipped),
                "--benchmark", str(fixture_dir / "benchmark.jsonl"),
                "--out", str(tmp_path / "evalout"),
            ]
        )
        assert code == 1

    def test_eval_deterministic_bytes(self, fixture_dir, tmp_path):
        traces = self.run_two_methods(fixture_dir, tmp_path)
        outputs = []
        for name in ("e1", "e2"):
            args = type("Args", (), {})()
            args.traces = [traces["fva"], traces["selfrag"]]
            args.benchmark = str(fixture_dir / "benchmark.jsonl")
            args.out = str(tmp_path / name)
            args.gateway = "stub"
            args.store = None
            args.corpus = str(fixture_dir / "corpus.jsonl")
            args.label = "A"
            args.frozen = True
            from falsirag.cli import run_eval

            outputs.append(run_eval(args))
        assert (
            Path(outputs[0]["report_json"]).read_bytes()
            == Path(outputs[1]["report_json"]).read_bytes()
        )
        assert (
            Path(outputs[0]["report_txt"]).read_bytes()
            == Path(outputs[1]["report_txt"]).read_bytes()
        )


class TestMakeFixture:
    def test_writes_verifiable_fixture(self, tmp_path, capsys):
        out = tmp_path / "fx"
        assert main(["make-fixture", "--out", str(out), "--n", "8"]) == 0
        info = json.loads(capsys.readouterr().out)
        assert Path(info["corpus"]).exists()
        assert main(["verify-cache", "--manifest", info["manifest"]]) == 0
