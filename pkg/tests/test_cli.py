"""Command-line interface tests; everything runs in-process through main()."""

import json
import subprocess
import sys

import pytest

from sceneagent.backend import ScriptedBackend
from sceneagent.cli import EXIT_BACKEND, EXIT_CONFIG, EXIT_FAILED, EXIT_OK, main
from sceneagent.errors import BackendFailure

SCENE_FILE = {
    "entities": [
        {"id": "e1", "category": "ball", "bbox": [0.10, 0.10, 0.10, 0.10],
         "attributes": {"color": "red"}, "visible": True, "state": {}},
        {"id": "e2", "category": "cup", "bbox": [0.60, 0.60, 0.12, 0.12],
         "attributes": {"color": "green"}, "visible": True, "state": {}},
    ],
}


@pytest.fixture(scope="module")
def suite_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("suite")
    code = main(["gen", "--count", "5", "--out", str(out)])
    assert code == EXIT_OK
    return out


class TestGen:
    def test_gen_writes_one_file_per_archetype(self, suite_dir, capsys):
        files = sorted(p.name for p in suite_dir.glob("*.json"))
        assert files == ["compound01.json", "detection01.json", "golden01.json",
                         "memory01.json", "perception01.json"]

    def test_gen_prints_the_paths(self, tmp_path, capsys):
        assert main(["gen", "--count", "2", "--out", str(tmp_path)]) == EXIT_OK
        out = capsys.readouterr().out.strip().splitlines()
        assert len(out) == 2
        assert out[0].endswith("golden01.json")
        assert out[1].endswith("memory01.json")

    def test_gen_is_deterministic(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["gen", "--count", "3", "--out", str(a)]) == EXIT_OK
        assert main(["gen", "--count", "3", "--out", str(b)]) == EXIT_OK
        for path in a.glob("*.json"):
            assert path.read_bytes() == (b / path.name).read_bytes()

    def test_gen_seed_changes_output(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["gen", "--count", "1", "--out", str(a)])
        main(["gen", "--count", "1", "--seed", "12", "--out", str(b)])
        names = [p.name for p in a.glob("*.json")]
        assert any(
            (a / n).read_bytes() != (b / n).read_bytes() for n in names
        )


class TestRun:
    def test_passing_scenario_exits_zero(self, suite_dir, capsys):
        code = main(["run", str(suite_dir / "golden01.json")])
        out = capsys.readouterr().out
        assert code == EXIT_OK
        assert "[PASS]" in out and "[FAIL]" not in out
        assert "checks passed" in out
        assert "full" in out

    def test_ablated_run_fails_checks(self, suite_dir, capsys):
        code = main(["run", str(suite_dir / "memory01.json"),
                     "--config", "no_memory"])
        out = capsys.readouterr().out
        assert code == EXIT_FAILED
        assert "[FAIL]" in out
        assert "no_memory" in out

    def test_flag_spelling_matches_named_config(self, suite_dir, capsys):
        named = main(["run", str(suite_dir / "memory01.json"),
                      "--config", "no_memory"])
        first = capsys.readouterr().out
        flagged = main(["run", str(suite_dir / "memory01.json"), "--no-memory"])
        second = capsys.readouterr().out
        assert named == flagged == EXIT_FAILED
        # same checks fail; only the config label differs
        assert ([l for l in first.splitlines() if l.startswith("[")]
                == [l for l in second.splitlines() if l.startswith("[")])
        assert "custom" in second

    def test_missing_file_is_config_error(self, tmp_path, capsys):
        code = main(["run", str(tmp_path / "absent.json")])
        err = capsys.readouterr().err
        assert code == EXIT_CONFIG
        assert err.startswith("error: config:")

    def test_unknown_config_name_is_config_error(self, suite_dir, capsys):
        code = main(["run", str(suite_dir / "golden01.json"),
                     "--config", "hyperdrive"])
        assert code == EXIT_CONFIG
        assert "error: config:" in capsys.readouterr().err

    def test_backend_failure_exits_three(self, suite_dir, capsys, monkeypatch):
        def explode(self, bundle, params):
            raise BackendFailure("wire cut")

        monkeypatch.setattr(ScriptedBackend, "complete", explode)
        code = main(["run", str(suite_dir / "golden01.json")])
        captured = capsys.readouterr()
        assert code == EXIT_BACKEND
        assert "error:" in captured.err and "backend failure" in captured.err


class TestBench:
    def test_bench_writes_artifacts_and_tables(self, suite_dir, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["bench", str(suite_dir), "--out", str(out)])
        stdout = capsys.readouterr().out
        assert code == EXIT_OK
        for heading in ("Dimension scores", "Scores by turn bucket",
                        "Error turns", "Latency"):
            assert heading in stdout
        assert (out / "report.json").is_file()
        assert (out / "latency.json").is_file()
        traces = list((out / "traces").glob("*.jsonl"))
        assert len(traces) == 5  # one config x five scenarios
        report = json.loads((out / "report.json").read_text())
        assert report["aggregates"]["full"]["scenarios"] == 5

    def test_bench_ablation_grid(self, suite_dir, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["bench", str(suite_dir), "--ablate", "all",
                     "--noisy", "--out", str(out)])
        stdout = capsys.readouterr().out
        assert code == EXIT_OK
        assert "noisy_tools" in stdout
        traces = list((out / "traces").glob("*.jsonl"))
        assert len(traces) == 5 * 6  # five scenarios x (grid + noisy)

    def test_bench_is_deterministic(self, suite_dir, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["bench", str(suite_dir), "--out", str(a)]) == EXIT_OK
        assert main(["bench", str(suite_dir), "--out", str(b)]) == EXIT_OK
        capsys.readouterr()
        assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
        for trace in (a / "traces").glob("*.jsonl"):
            assert trace.read_bytes() == (b / "traces" / trace.name).read_bytes()

    def test_bench_empty_dir_is_config_error(self, tmp_path, capsys):
        code = main(["bench", str(tmp_path / "nothing")])
        assert code == EXIT_CONFIG
        assert "error: config:" in capsys.readouterr().err

    def test_bench_reports_aborted_runs(self, suite_dir, tmp_path, capsys, monkeypatch):
        def explode(self, bundle, params):
            raise BackendFailure("wire cut")

        monkeypatch.setattr(ScriptedBackend, "complete", explode)
        code = main(["bench", str(suite_dir), "--out", str(tmp_path / "out")])
        captured = capsys.readouterr()
        assert code == EXIT_FAILED
        assert "aborted" in captured.err


class TestReplay:
    def test_replay_echoes_canonical_lines(self, suite_dir, tmp_path, capsys):
        out = tmp_path / "out"
        main(["bench", str(suite_dir), "--out", str(out)])
        capsys.readouterr()
        trace = next((out / "traces").glob("*.jsonl"))
        code = main(["replay", str(trace)])
        stdout = capsys.readouterr().out
        assert code == EXIT_OK
        assert stdout == trace.read_text()

    def test_replay_rejects_bad_lines(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"seq": 1}\nnot json\n')
        code = main(["replay", str(bad)])
        captured = capsys.readouterr()
        assert code == EXIT_CONFIG
        assert "line 2" in captured.err

    def test_replay_missing_file(self, tmp_path, capsys):
        code = main(["replay", str(tmp_path / "gone.jsonl")])
        assert code == EXIT_CONFIG


class TestChat:
    def chat(self, tmp_path, monkeypatch, lines, payload=SCENE_FILE, extra=()):
        scene_path = tmp_path / "scene.json"
        scene_path.write_text(json.dumps(payload))
        feed = iter(lines)
        monkeypatch.setattr("builtins.input", lambda prompt="": next(feed))
        return main(["chat", str(scene_path), *extra])

    def test_chat_answers_and_exits(self, tmp_path, capsys, monkeypatch):
        code = self.chat(tmp_path, monkeypatch,
                         ["point to the red ball", "count the cups", "exit"])
        out = capsys.readouterr().out
        assert code == EXIT_OK
        assert "2 entities" in out
        assert "[point] point e1" in out
        assert "count the cups: 1" in out

    def test_chat_handles_eof_and_blank_lines(self, tmp_path, capsys, monkeypatch):
        scene_path = tmp_path / "scene.json"
        scene_path.write_text(json.dumps(SCENE_FILE))

        def feeder(prompt=""):
            raise EOFError

        monkeypatch.setattr("builtins.input", feeder)
        assert main(["chat", str(scene_path)]) == EXIT_OK

    def test_chat_uses_embedded_script(self, tmp_path, capsys, monkeypatch):
        payload = {
            "scene": SCENE_FILE,
            "script": [{"pattern": "*", "reply": "ACT SAY scripted hello"}],
        }
        code = self.chat(tmp_path, monkeypatch, ["describe the red ball", "exit"],
                         payload=payload)
        out = capsys.readouterr().out
        assert code == EXIT_OK
        assert "scripted hello" in out

    def test_chat_oracle_flag_overrides_script(self, tmp_path, capsys, monkeypatch):
        payload = {
            "scene": SCENE_FILE,
            "script": [{"pattern": "*", "reply": "ACT SAY scripted hello"}],
        }
        code = self.chat(tmp_path, monkeypatch, ["count the cups", "exit"],
                         payload=payload, extra=["--oracle"])
        out = capsys.readouterr().out
        assert code == EXIT_OK
        assert "scripted hello" not in out
        assert "count the cups: 1" in out

    def test_chat_rejects_junk_file(self, tmp_path, capsys, monkeypatch):
        code = self.chat(tmp_path, monkeypatch, ["exit"], payload={"foo": 1})
        assert code == EXIT_CONFIG


def test_console_script_help_runs():
    proc = subprocess.run([sys.executable, "-m", "sceneagent", "--help"],
                          capture_output=True, text=True, timeout=30)
    assert proc.returncode == 0
    assert "bench" in proc.stdout and "serve" in proc.stdout
