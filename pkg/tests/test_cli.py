import json
import subprocess
import sys

import numpy as np
import pytest

from soapfilm import __version__
from soapfilm.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def fixtures(tmp_path_factory):
    d = tmp_path_factory.mktemp("fx")
    assert main(["synth", "--kind", "T", "--output", str(d / "t.obj"), "--graph-out", str(d / "t.json"),
                 "--max-edge", "0.1"]) == 0
    assert main(["synth", "--kind", "Y", "--output", str(d / "y.obj"), "--max-edge", "0.1"]) == 0
    assert main(["synth", "--kind", "arc", "--output", str(d / "arc.csv")]) == 0
    assert main(["synth", "--kind", "arc", "--lift", "0", "--output", str(d / "great.csv")]) == 0
    assert main(["synth", "--kind", "P", "--output", str(d / "p.csv"), "--gap", "0.02", "--radius", "0.6",
                 "--rotate"]) == 0
    return d


class TestExamples:
    def test_validate_cone(self, capsys, fixtures):
        code, out, _ = run(capsys, "validate-cone", "--graph", fixtures / "t.json")
        assert code == 0 and json.loads(out)["result"]["is_valid"] is True

    def test_density_on_y(self, capsys, fixtures):
        code, out, _ = run(capsys, "density", "--input", fixtures / "y.obj", "--rmin", "0.05", "--rmax", "0.9")
        rep = json.loads(out)
        assert code == 0 and rep["result"]["violations"] == []
        assert rep["result"]["theta_estimate"] == pytest.approx(1.5 * np.pi, abs=1e-9)

    def test_harmonic_lifted_arc(self, capsys, fixtures):
        code, out, _ = run(capsys, "harmonic", "--arc", fixtures / "arc.csv")
        assert code == 0 and json.loads(out)["result"]["verdict"] == "improvable"

    def test_harmonic_great_circle(self, capsys, fixtures):
        code, out, _ = run(capsys, "harmonic", "--arc", fixtures / "great.csv")
        assert code == 0 and json.loads(out)["result"]["verdict"] == "stationary-consistent"

    def test_harmonic_modes(self, capsys):
        code, out, _ = run(capsys, "harmonic", "--modes", "0.01", "--T", "1.5707963267948966", "--K", "8")
        res = json.loads(out)["result"]
        assert code == 0 and res["energies"]["cone"] == pytest.approx(5 * np.pi / 8 * 1e-4)

    def test_steiner(self, capsys):
        code, out, _ = run(capsys, "steiner", "--points", 0, 0, 0, 1, 0, 0, 0.5, np.sqrt(3) / 2, 0,
                           "--retract", 0.5, 0.3, 2.0, "--audit", 2000)
        res = json.loads(out)["result"]
        assert code == 0
        assert res["network"]["total_length"] == pytest.approx(np.sqrt(3), abs=1e-9)
        assert res["lipschitz_audit"]["max_ratio"] <= 2 + 1e-9

    def test_classify(self, capsys, fixtures):
        code, out, _ = run(capsys, "classify", "--input", fixtures / "t.obj", "--at", 0, 0, 0)
        assert code == 0 and json.loads(out)["result"]["labels"][0]["label"] == "T"

    def test_ff_project(self, capsys, fixtures, tmp_path):
        code, out, _ = run(capsys, "ff-project", "--input", fixtures / "p.csv", "--gap", 0.02,
                           "--corner", -1, -1, -1, "--k", 0, "--j", 2, "--image", tmp_path / "img.csv")
        audit = json.loads(out)["result"]["audit"]
        assert code == 0 and audit["identity_outside"] and audit["on_skeleton"]
        assert (tmp_path / "img.csv").exists()

    def test_invalid_cone_exits_one(self, capsys, tmp_path):
        g = {"arcs": [{"a": [0, 0, 1], "b": [0, 0, -1], "normal": [0, 1, 0]},
                      {"a": [0, 0, 1], "b": [0, 0, -1], "normal": [-0.98480775, 0.17364818, 0]},
                      {"a": [0, 0, 1], "b": [0, 0, -1], "normal": [0.64278761, 0.76604444, 0]}]}
        (tmp_path / "bad.json").write_text(json.dumps(g))
        code, out, _ = run(capsys, "validate-cone", "--graph", tmp_path / "bad.json", "--eta0", 0.1, "--l0", 0.1)
        assert code == 1 and json.loads(out)["result"]["is_valid"] is False


class TestErrors:
    def test_missing_input(self, capsys):
        code, _, err = run(capsys, "density", "--input", "/nonexistent.obj", "--radii", 0.1)
        assert code == 2 and "no such file" in err

    def test_csv_needs_gap(self, capsys, fixtures):
        code, _, err = run(capsys, "fit", "--input", fixtures / "p.csv", "--radius", 0.2)
        assert code == 2 and "--gap" in err

    def test_bad_parameter(self, capsys, fixtures):
        code, _, _ = run(capsys, "fit", "--input", fixtures / "t.obj", "--radius", -1)
        assert code == 2

    def test_unknown_command(self, capsys):
        code, _, _ = run(capsys, "frobnicate")
        assert code == 2

    def test_harmonic_needs_one_source(self, capsys):
        code, _, _ = run(capsys, "harmonic")
        assert code == 2

    def test_precondition_is_input_error(self, capsys):
        code, _, err = run(capsys, "harmonic", "--modes", "0.9", "--T", "2.0")
        assert code == 2 and "tau" in err

    def test_bad_config(self, capsys, tmp_path):
        (tmp_path / "c.json").write_text('{"nonsense": 1}')
        code, _, err = run(capsys, "--config", tmp_path / "c.json", "steiner", "--points", 0, 0, 0)
        assert code == 2 and "nonsense" in err
        (tmp_path / "d.json").write_text("[1, 2")
        code, _, _ = run(capsys, "--config", tmp_path / "d.json", "steiner", "--points", 0, 0, 0)
        assert code == 2


class TestReports:
    def test_byte_stable(self, capsys, fixtures, tmp_path):
        args = ["--seed", 3, "fit", "--input", fixtures / "t.obj", "--radius", 0.5, "--n-starts", 4]
        run(capsys, "--out", tmp_path / "a.json", *args)
        run(capsys, "--out", tmp_path / "b.json", *args)
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_config_and_seed_embedded(self, capsys, tmp_path):
        (tmp_path / "c.json").write_text('{"audit": 100, "seed": 5}')
        code, out, _ = run(capsys, "--config", tmp_path / "c.json", "steiner", "--points", 0, 0, 0, 1, 0, 0)
        rep = json.loads(out)
        assert code == 0 and rep["seed"] == 5 and rep["config"]["audit"] == 100

    def test_flag_overrides_config(self, capsys, tmp_path):
        (tmp_path / "c.json").write_text('{"seed": 5}')
        _, out, _ = run(capsys, "--config", tmp_path / "c.json", "--seed", 9, "steiner", "--points", 0, 0, 0)
        assert json.loads(out)["seed"] == 9

    def test_seed_from_environment(self, capsys, monkeypatch):
        monkeypatch.setenv("SOAPFILM_SEED", "42")
        _, out, _ = run(capsys, "steiner", "--points", 0, 0, 0)
        assert json.loads(out)["seed"] == 42

    def test_module_entry_point(self):
        p = subprocess.run([sys.executable, "-m", "soapfilm", "--version"], capture_output=True, text=True)
        assert p.returncode == 0 and p.stdout.strip() == __version__
