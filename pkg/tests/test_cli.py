import json
import math
import shutil
import subprocess

import pytest

from certsynth.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, main

TOY = """
[scenario]
name = "toy"
builder = "matrices"
formula = "{formula}"

[system]
state_names = ["x1", "x2"]
input_names = ["u"]
schedule = [[0, 2.0]]
min_dwell = 0.5

[[system.mode]]
A = [[-1.0, 0.5], [0.0, -2.0]]
B = [[1.0], [0.0]]
Sigma = [[{sigma}], [0.0]]

[certificate]
r0 = 1.0
shape = "x1"

[synthesis]
dt = 0.1
weights = [1.0]
centers = 2

[simulation]
dt = 0.1
paths = 20
seed = 3
"""

REACH = "G[1,2] x1 >= 0.5 & G[0,2] x1 <= 6"


def write_toy(path, formula=REACH, sigma=0.05):
    path.write_text(TOY.format(formula=formula, sigma=sigma))
    return str(path)


@pytest.fixture
def toy(tmp_path):
    return write_toy(tmp_path / "toy.scenario")


def run(*argv):
    return main([str(a) for a in argv])


def snapshot(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "meta.json"}


class TestExitCodes:
    def test_missing_scenario(self, tmp_path):
        assert run("certify", tmp_path / "nope.scenario", "--out", tmp_path) == EXIT_CONFIG

    def test_zero_paths(self, toy, tmp_path):
        assert run("verify", toy, "--paths", 0, "--out", tmp_path) == EXIT_CONFIG

    def test_bad_override(self, toy, tmp_path):
        assert run("certify", toy, "--set", "certificate.method=bogus", "--out", tmp_path) == EXIT_CONFIG

    def test_bad_flag(self, toy):
        assert run("certify", toy, "--frobnicate") == EXIT_CONFIG

    def test_unknown_disturbance_channel(self, toy, tmp_path):
        code = run("simulate", toy, "--controller", "zero", "--disturb", 0, 1, "nope", 1, "--out", tmp_path)
        assert code == EXIT_CONFIG

    def test_infeasible(self, tmp_path):
        sc = write_toy(tmp_path / "bad.scenario", formula="G[0,2] x1 <= -1 & G[0,2] x1 >= 1")
        assert run("synth", sc, "--out", tmp_path) == EXIT_INFEASIBLE
        rep = json.loads((tmp_path / "toy" / "synth.json").read_text())
        assert rep["status"] == "infeasible"

    def test_require_rate(self, toy, tmp_path):
        assert run("verify", toy, "--controller", "zero", "--require-rate", 0.5, "--out", tmp_path) == EXIT_INFEASIBLE


class TestPipeline:
    def test_full_run_and_idempotence(self, toy, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for root in (a, b):
            assert run("certify", toy, "--out", root) == EXIT_OK
            cert = root / "toy" / "certificate.json"
            assert run("synth", toy, "--cert", cert, "--out", root) == EXIT_OK
            assert run("feedback", toy, "--cert", cert, "--out", root) == EXIT_OK
            assert run("verify", toy, "--cert", cert, "--inputs", root / "toy" / "inputs.csv",
                       "--out", root) == EXIT_OK
            assert run("verify", toy, "--cert", cert, "--controller", "feedback",
                       "--library", root / "toy" / "library.npz", "--out", root) == EXIT_OK
            assert run("simulate", toy, "--cert", cert, "--path", 2, "--out", root) == EXIT_OK
        assert snapshot(a / "toy") == snapshot(b / "toy")
        names = set(snapshot(a / "toy"))
        assert {"certificate.json", "certify_report.json", "inputs.csv", "nominal.csv", "synth.json",
                "library.npz", "feedback.json", "verify_feedforward.json", "verify_feedback.json",
                "trace_feedforward_2.csv"} <= names
        meta = json.loads((a / "toy" / "meta.json").read_text())
        assert set(meta) == {"certify", "synth", "feedback", "verify", "simulate"}
        syn = json.loads((a / "toy" / "synth.json").read_text())
        assert syn["robustness"] >= -1e-6 and syn["robustness_original"] > 0

    def test_env_output_root(self, toy, tmp_path, monkeypatch):
        monkeypatch.setenv("CERTSYNTH_OUT", str(tmp_path / "env"))
        assert run("certify", toy) == EXIT_OK
        assert (tmp_path / "env" / "toy" / "certificate.json").is_file()

    def test_deterministic_offset(self, tmp_path):
        sc = write_toy(tmp_path / "det.scenario", sigma=0.0)
        assert run("certify", sc, "--out", tmp_path) == EXIT_OK
        rep = json.loads((tmp_path / "toy" / "certify_report.json").read_text())
        assert rep["gamma_hat"] == 0.0 and rep["radii"][0] == 1.0
        for row in rep["offsets"]:
            assert row["delta_hat"] == pytest.approx(math.sqrt(rep["radii"][0]) / row["z"])


@pytest.mark.skipif(shutil.which("certsynth") is None, reason="console script not installed")
def test_console_script(toy, tmp_path):
    proc = subprocess.run(["certsynth", "certify", toy, "--out", str(tmp_path)], capture_output=True,
                          text=True, check=False)
    assert proc.returncode == EXIT_OK, proc.stderr
    assert "gamma_hat" in proc.stdout
