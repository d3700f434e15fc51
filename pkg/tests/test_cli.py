import json

import pytest

from precert_bell.cli import main


def _run(tmp_path, *argv, capsys=None):
    code = main([*argv, "--out", str(tmp_path), "--no-plot"])
    return code


def test_herald_example(tmp_path, capsys):
    assert _run(tmp_path, "herald", "--g", "1.5708", "--alpha", "0.6", "--beta", "0.8") == 0
    doc = json.loads((tmp_path / "herald.json").read_text())
    rows = {r["outcome"]: r for r in doc["rows"]}
    assert rows["PiPlus"]["probability"] == pytest.approx(0.5)
    assert rows["PiPlus"]["fidelity"] == pytest.approx(1.0, abs=1e-9)
    assert doc["passed"]


def test_herald_usage_errors(tmp_path):
    assert _run(tmp_path, "herald", "--g", "2.0", "--alpha", "0.6", "--beta", "0.8") == 2
    assert _run(tmp_path, "herald", "--alpha", "0.6", "--beta", "0.8") == 2
    assert _run(tmp_path, "herald", "--g", "1", "--alpha", "0.6", "--beta", "0.9") == 2
    with pytest.raises(SystemExit) as exc:
        main(["herald", "--g", "abc"])
    assert exc.value.code == 2


def test_entangle(tmp_path):
    assert _run(tmp_path, "entangle", "--theta", "0.2") == 0
    doc = json.loads((tmp_path / "entangle.json").read_text())
    assert all(r["probability"] == pytest.approx(0.25) for r in doc["rows"])


def test_rate_preset(tmp_path, capsys):
    assert _run(tmp_path, "rate", "--preset", "paper") == 0
    doc = json.loads((tmp_path / "rate.json").read_text())
    assert doc["envelope"]["computed_heralded_rate"] == pytest.approx([7.2e-4, 1.8e-2])
    assert doc["envelope"]["stated_events_per_s"] == [0.002, 0.01]
    assert "stated estimate 0.002-0.01" in capsys.readouterr().err
    assert (tmp_path / "rate.csv").read_text().startswith(
        "mu_C,heralded_rate,coincidence_rate,split_photon_rate\n")


def test_spacetime_preset(tmp_path):
    assert _run(tmp_path, "spacetime", "--preset", "paper") == 0
    doc = json.loads((tmp_path / "spacetime.json").read_text())
    assert doc["d_min_m"] == pytest.approx(30.279, abs=2e-3)
    assert set(doc["report"]["constraints"]) == {"C1", "C2", "C3", "C4"}


def test_config_file_and_unknown_keys(tmp_path):
    good = tmp_path / "cfg.json"
    good.write_text(json.dumps({"schema_version": "1", "spacetime": {
        "separation_m": 0.0, "source_offset_m": 0.0, "flag_jitter_s": 1e-10,
        "qrng_latency_s": 1e-8, "tes_resolution_s": 1e-7, "electronics_margin_s": 1e-9}}))
    assert _run(tmp_path, "spacetime", "--config", str(good)) == 0
    doc = json.loads((tmp_path / "spacetime.json").read_text())
    assert not doc["report"]["overall"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": "1", "spacetime": {"separation": 5}}))
    assert _run(tmp_path, "spacetime", "--config", str(bad)) == 2
    assert _run(tmp_path, "spacetime", "--config", str(tmp_path / "missing.json")) == 2


def test_threshold_csv_header(tmp_path):
    assert _run(tmp_path, "threshold", "--p", "1", "--restarts", "4") == 0
    head = (tmp_path / "threshold.csv").read_text().splitlines()[0]
    assert head == "p,eta_star,theta_opt,angle_a0,angle_a1,angle_b0,angle_b1"


def test_threshold_nonconvergence_exit_code(tmp_path, monkeypatch):
    from precert_bell import cli
    from precert_bell.bell import ConvergenceError

    def boom(*a, **k):
        raise ConvergenceError("forced")
    monkeypatch.setattr(cli, "optimize_threshold", boom)
    assert _run(tmp_path, "threshold", "--p", "0.01") == 3


def test_invariant_exit_code(tmp_path, monkeypatch):
    from precert_bell import cli
    from precert_bell.montecarlo import InvariantViolation

    def boom(*a, **k):
        raise InvariantViolation("forced")
    monkeypatch.setattr(cli, "run", boom)
    assert _run(tmp_path, "montecarlo", "--n", "100") == 4


def test_montecarlo_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["montecarlo", "--seed", "42", "--n", "2e5", "--out", str(d)]) == 0
    for name in ("montecarlo.json", "montecarlo.csv", "montecarlo.png"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_nine_significant_digits(tmp_path):
    assert _run(tmp_path, "rate", "--mu-c", "0.123456789123", "--R", "1") == 0
    doc = json.loads((tmp_path / "rate.json").read_text())
    assert doc["params"]["mu_C"] == 0.123456789
