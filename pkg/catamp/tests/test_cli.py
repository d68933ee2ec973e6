"""End-to-end tests of the cat-amp command line"""
import hashlib
import math

import orjson
import pytest

from catamp.main import main


def _scenario(tmp_path, payload, name="scenario.json"):
    path = tmp_path / name
    path.write_bytes(orjson.dumps(payload))
    return path


def _stdout_json(capsys):
    return orjson.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_schema(capsys):
    assert main(["schema"]) == 0
    schema = orjson.loads(capsys.readouterr().out)
    assert schema["additionalProperties"] is False
    assert "mode" in schema["required"]


def test_theory_gain_run(tmp_path, capsys):
    path = _scenario(tmp_path, {"mode": "theory-gain", "alpha": 1.5, "parity": "even", "k": 2})
    out = tmp_path / "out"
    assert main(["run", str(path), "--out", str(out)]) == 0
    summary = _stdout_json(capsys)
    assert abs(summary["F_max"] - 0.947) <= 0.002
    assert abs(summary["G"] - 1.377) <= 0.01

    manifest = orjson.loads((out / "manifest.json").read_bytes())
    assert manifest["config_sha256"] == hashlib.sha256(path.read_bytes()).hexdigest()
    assert manifest["defaults_version"] == "reference-defaults/1"
    assert "theory_gain.json" in manifest["outputs"]
    assert manifest["config"]["mode"] == "theory-gain"
    assert b"catamp_scenarios_total" in (out / "metrics.prom").read_bytes()


def test_theory_curve_is_deterministic(tmp_path, capsys):
    path = _scenario(tmp_path, {
        "mode": "theory-curve", "alpha": 1.5, "k": 1,
        "alpha_prime_grid": {"start": 1.5, "stop": 2.2, "step": 0.05},
    })
    assert main(["run", str(path), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", str(path), "--out", str(tmp_path / "b")]) == 0
    first = (tmp_path / "a" / "theory_curve.csv").read_bytes()
    assert first == (tmp_path / "b" / "theory_curve.csv").read_bytes()
    assert first.startswith(b"alpha_prime,fidelity\r\n")
    assert len(first.splitlines()) == 1 + 15
    assert _stdout_json(capsys)["F_max"] > 0.99


def test_wigner_mode(tmp_path, capsys):
    path = _scenario(tmp_path, {"mode": "wigner", "alpha": 1.5, "parity": "odd", "wigner": {"points": 5}})
    assert main(["run", str(path), "--out", str(tmp_path / "w")]) == 0
    summary = _stdout_json(capsys)
    assert summary["W0"] == pytest.approx(-2 / math.pi, abs=1e-6)
    assert (tmp_path / "w" / "wigner.csv").exists()


def test_malformed_config_writes_nothing(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"mode": "theory-gain",', encoding="utf-8")
    out = tmp_path / "never"
    assert main(["run", str(path), "--out", str(out)]) == 2
    assert not out.exists()


def test_schema_violation_exit_code(tmp_path):
    path = _scenario(tmp_path, {"mode": "simulate", "k": 5})
    assert main(["run", str(path), "--out", str(tmp_path / "x")]) == 2


def test_missing_file_is_io_error(tmp_path):
    assert main(["run", str(tmp_path / "absent.json"), "--out", str(tmp_path / "x")]) == 4


def test_numerical_failure_exit_code(tmp_path):
    path = _scenario(tmp_path, {"mode": "theory-gain", "alpha": 0.0})
    assert main(["run", str(path), "--out", str(tmp_path / "x")]) == 3


def test_reproduce_fig3a(tmp_path):
    out = tmp_path / "fig3a"
    assert main(["reproduce", "fig3a", "--out", str(out)]) == 0
    lines = (out / "fig3a_amplitudes.csv").read_text().splitlines()
    assert lines[0] == "n,input_1p5,shifted_twice,target_2p1"
    manifest = orjson.loads((out / "manifest.json").read_bytes())
    assert manifest["figure"] == "fig3a"
    assert manifest["summary"]["overlap"] > 0.9


def test_reproduce_fig1(tmp_path):
    out = tmp_path / "fig1"
    assert main(["reproduce", "fig1", "--out", str(out)]) == 0
    maxima = orjson.loads((out / "fig1_maxima.json").read_bytes())
    assert len(maxima) == 8
    even = {m["alpha"]: m["fidelity"] for m in maxima if m["parity"] == "even"}
    assert even[1.0] == pytest.approx(0.854, abs=2e-3)


def test_unknown_figure_is_rejected():
    with pytest.raises(SystemExit) as excinfo:
        main(["reproduce", "fig9"])
    assert excinfo.value.code == 2


@pytest.mark.slow
def test_stirap_scan_mode(tmp_path, capsys):
    path = _scenario(tmp_path, {"mode": "stirap-scan", "stirap": {"tau_values": ["3.58k", "-3.58k"]}})
    assert main(["run", str(path), "--out", str(tmp_path / "s")]) == 0
    summary = _stdout_json(capsys)
    assert summary["min_efficiency"] > 0.95
    assert summary["max_asymmetry"] <= 0.02
