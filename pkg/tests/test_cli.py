import csv
import io
import json
import subprocess
import sys

import pytest

from flipgen.cli import COMMANDS, main
from flipgen.game import FlipItSpec, save_spec

SMALL_RUNS = {
    "simulate": ["--model", "qr:lambda=1", "--episodes", "3"],
    "train": ["--episodes", "200"],
    "fit": ["--family", "qr", "--budget", "6", "--population", "3"],
    "evaluate": ["--model", "qlk:k=2,lambda=1"],
    "sweep": ["--model", "qr:lambda=1", "--trait", "lambda"],
    "generate": ["--model", "qr:lambda=0", "--model", "qr:lambda=4", "--population", "4", "--generations", "1", "--seeds", "2"],
    "synth": ["--episodes", "40", "--participants", "4"],
}


def run(tmp_path, name, *argv, out="out"):
    code = main([name, "--out", str(tmp_path / out), *argv])
    return code, tmp_path / out


def artifacts(path):
    return {str(p.relative_to(path)): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


class TestCommands:
    def test_every_command_is_covered(self):
        assert set(SMALL_RUNS) == set(COMMANDS)

    @pytest.mark.parametrize("name", sorted(SMALL_RUNS))
    def test_rerun_is_byte_identical(self, tmp_path, name):
        code_a, a = run(tmp_path, name, *SMALL_RUNS[name], "--seed", "7", out="a")
        code_b, b = run(tmp_path, name, *SMALL_RUNS[name], "--seed", "7", out="b")
        assert code_a == code_b == 0
        assert artifacts(a) == artifacts(b)
        manifest = json.loads((a / "manifest.json").read_text())
        assert manifest["seed"] == 7 and manifest["command"] == name
        assert set(manifest["artifacts"]) == set(artifacts(a)) - {"manifest.json"}

    def test_sweep_lambda_rows(self, tmp_path):
        code, out = run(tmp_path, "sweep", "--model", "qr:lambda=1", "--trait", "lambda")
        rows = list(csv.DictReader(io.StringIO((out / "sweep.csv").read_text())))
        assert code == 0 and len(rows) == 8

    def test_evaluate_reports_both_metrics(self, tmp_path):
        code, out = run(tmp_path, "evaluate", "--model", "qr:lambda=0")
        rep = json.loads((out / "report.json").read_text())
        assert code == 0
        assert rep["br_utility"] <= rep["utility_vs_uniform"]

    def test_config_file_and_flag_precedence(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"episodes": 2, "seed": 5, "model": "qr:lambda=3"}))
        code, out = run(tmp_path, "simulate", "--config", str(cfg), "--episodes", "4")
        manifest = json.loads((out / "manifest.json").read_text())
        assert code == 0
        assert manifest["options"]["episodes"] == 4
        assert manifest["options"]["model"] == "qr:lambda=3"
        assert manifest["seed"] == 5

    def test_seed_environment_variable(self, tmp_path, monkeypatch):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"seed": 5}))
        monkeypatch.setenv("FLIPGEN_SEED", "11")
        _, out = run(tmp_path, "simulate", "--config", str(cfg), out="env")
        assert json.loads((out / "manifest.json").read_text())["seed"] == 11
        _, out = run(tmp_path, "simulate", "--config", str(cfg), "--seed", "3", out="flag")
        assert json.loads((out / "manifest.json").read_text())["seed"] == 3
        monkeypatch.delenv("FLIPGEN_SEED")
        _, out = run(tmp_path, "simulate", out="default")
        assert json.loads((out / "manifest.json").read_text())["seed"] == 42

    def test_custom_game_and_fit_file_model(self, tmp_path):
        game = tmp_path / "g.json"
        save_spec(FlipItSpec.original([2.0, 1.0], [1.0, 0.5], 3, name="tiny"), game)
        assert run(tmp_path, "synth", "--game", str(game), "--episodes", "30", out="data")[0] == 0
        code, fit = run(tmp_path, "fit", "--data", str(tmp_path / "data" / "dataset"), "--budget", "4", out="fit")
        assert code == 0
        code, ev = run(tmp_path, "evaluate", "--game", str(game), "--model", f"@{fit / 'fit.json'}", out="ev")
        assert code == 0 and (ev / "report.csv").exists()


class TestFailures:
    def _error(self, capsys):
        line = capsys.readouterr().err.strip().splitlines()[-1]
        return json.loads(line)

    def test_unknown_command(self, capsys):
        assert main(["frobnicate"]) == 2
        assert self._error(capsys)["error"] == "UsageError"

    def test_bad_model(self, tmp_path, capsys):
        assert run(tmp_path, "evaluate", "--model", "sarsa:x=1")[0] == 3
        assert "sarsa" in self._error(capsys)["message"]

    def test_missing_game(self, tmp_path, capsys):
        assert run(tmp_path, "evaluate", "--game", str(tmp_path / "none.json"))[0] == 3
        self._error(capsys)

    def test_invalid_game(self, tmp_path, capsys):
        game = tmp_path / "bad.json"
        game.write_text(json.dumps(FlipItSpec.graph([[0, 1], [1, 0]], [3, 1], 0.5, 2).to_dict()))
        assert run(tmp_path, "evaluate", "--game", str(game))[0] == 3
        assert "home-base-reward-zero" in self._error(capsys)["message"]

    def test_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{not json")
        assert run(tmp_path, "sweep", "--config", str(cfg))[0] == 3
        self._error(capsys)

    def test_bad_dataset(self, tmp_path, capsys):
        (tmp_path / "d").mkdir()
        (tmp_path / "d" / "profiles.csv").write_text("participant_id,mach,narc,psych\nx,1,2,3\n")
        (tmp_path / "d" / "episodes.jsonl").write_text('{"participant_id": "x"}\n')
        assert run(tmp_path, "fit", "--data", str(tmp_path / "d"))[0] == 3
        err = self._error(capsys)
        assert err["error"] == "DatasetError"

    def test_trait_mismatch_is_a_config_error(self, tmp_path, capsys):
        assert run(tmp_path, "sweep", "--model", "qr:lambda=1", "--trait", "gamma")[0] == 3
        self._error(capsys)

    def test_console_script(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "flipgen.cli", "evaluate", "--out", str(tmp_path / "o"), "--model", "lk:k=1"],
            capture_output=True,
            text=True,
            check=False,
        )
        assert proc.returncode == 0, proc.stderr
        proc = subprocess.run([sys.executable, "-m", "flipgen.cli"], capture_output=True, text=True, check=False)
        assert proc.returncode == 2
        assert json.loads(proc.stderr.strip().splitlines()[-1])["error"] == "UsageError"
