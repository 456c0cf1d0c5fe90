import json
from pathlib import Path

import numpy as np
import pytest

from snls import experiments
from snls.cli import main
from snls.config import parse_config
from snls.experiments import (
    EXIT_ABORT,
    EXIT_FAIL,
    EXIT_PASS,
    ReportMismatch,
    compare_presets,
    estimate_k,
    run_experiment,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def small_decay(out, **ens):
    return parse_config({
        "preset": "decay",
        "grid": {"d": 1, "n": 8},
        "params": {"sigma": 1, "alpha": 1.0, "s": 2},
        "noise": {"a": 4, "b": 1, "c": 0.5, "d_exp": 1},
        "lyapunov": {"p": 0.5},
        "initial": {"amplitude": 0.5},
        "scheme": {"T": 0.3, "record_every": 0.05},
        "analysis": {"window": [0.1, 0.3]},
        "moser": {"budget": 300},
        "ensemble": {"N_paths": 20, "master_seed": 4, **ens},
        "output": {"dir": str(out)},
    })


def exit_report(crossed, n, wilson, first=None, physical="same"):
    return {"preset": "x", "physical": physical,
            "exit": {"crossed": crossed, "n_paths": n, "fraction": crossed / n,
                     "wilson": list(wilson), "first_crossing_time": first}}


# -- presets -----------------------------------------------------------------


def test_conservation_preset(tmp_path):
    cfg = parse_config(json.loads((CONFIGS / "conservation.json").read_text()))
    res = run_experiment(cfg.with_overrides(out=tmp_path))
    assert res.exit_code == EXIT_PASS
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["mass_drift"] <= 1e-10 and rep["energy_drift"] <= 1e-5
    assert rep["verdict"] == "pass" and rep["exit_code"] == 0


def test_decay_aborts_before_simulation(tmp_path, monkeypatch):
    def forbidden(*a, **k):
        raise AssertionError("simulation started despite failed certification")

    monkeypatch.setattr(experiments, "simulate_ensemble", forbidden)
    cfg = parse_config({"preset": "decay", "grid": {"d": 1, "n": 16},
                        "params": {"sigma": 1, "s": 2},
                        "noise": {"a": 2, "b": 1, "c": 0, "d_exp": 1},
                        "lyapunov": {"p": 0.5}, "output": {"dir": str(tmp_path)}})
    K = estimate_k(cfg)["K_hat"]
    assert K > 1  # margin (0.5 * 4 - 2 K) / 2 is then negative
    res = run_experiment(cfg)
    assert res.exit_code == EXIT_ABORT
    assert "H5'' refuted" in res.report["diagnostic"]
    assert res.manifest["hypotheses"]["H5''"]["margin"] == pytest.approx(1 - K, abs=1e-9)
    assert not (tmp_path / "ensemble.csv").exists()
    assert json.loads((tmp_path / "report.json").read_text())["verdict"] == "aborted"


def test_blowup_baseline_preset(tmp_path):
    cfg = parse_config(json.loads((CONFIGS / "blowup_baseline.json").read_text()))
    res = run_experiment(cfg.with_overrides(out=tmp_path))
    assert res.exit_code == EXIT_PASS
    assert res.report["exit"]["fraction"] == 1.0
    assert 0 < res.report["exit"]["first_crossing_time"] < 2.0
    assert res.manifest["derived"]["u0_energy"] < 0


def test_small_decay_run_writes_outputs(tmp_path):
    res = run_experiment(small_decay(tmp_path))
    files = {p.name for p in tmp_path.iterdir()}
    assert {"manifest.json", "report.json", "ensemble.csv", "paths"} <= files
    assert len(list((tmp_path / "paths").glob("path_*.csv"))) == 20
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert set(man) == {"manifest_version", "code_version", "config", "derived", "hypotheses",
                        "timestamp"}
    assert man["derived"]["K_hat"] > 0 and man["hypotheses"]["H5''"]["verdict"] == "certified"
    assert res.exit_code in (EXIT_PASS, EXIT_FAIL)
    assert res.report["exit_code"] == res.exit_code


def test_per_path_files_off_above_32(tmp_path):
    run_experiment(small_decay(tmp_path, N_paths=33))
    assert not (tmp_path / "paths").exists()


def test_rerun_from_manifest_is_bit_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_experiment(small_decay(a))
    cfg = parse_config((a / "manifest.json").read_text()).with_overrides(out=b)
    run_experiment(cfg)
    names = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert names == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    for name in names:
        if name.name == "manifest.json":
            ma, mb = (json.loads((d / name).read_text()) for d in (a, b))
            for m in (ma, mb):
                m.pop("timestamp")
                m["config"]["output"].pop("dir")
            assert ma == mb
        else:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_worker_count_does_not_change_results(tmp_path):
    run_experiment(small_decay(tmp_path / "w1", N_paths=40, workers=1))
    run_experiment(small_decay(tmp_path / "w2", N_paths=40, workers=2))
    assert (tmp_path / "w1/ensemble.csv").read_bytes() == (tmp_path / "w2/ensemble.csv").read_bytes()


# -- contrast ----------------------------------------------------------------


def test_compare_observed():
    out = compare_presets(exit_report(0, 256, (0.0, 0.0148)), exit_report(1, 1, (0.2, 1.0), 1.1))
    assert out["verdict"] == "noise-regularization observed"
    assert out["deterministic"]["crossing_time"] == 1.1


def test_compare_not_observed_reports_ci():
    from snls.analysis import wilson_interval

    lo, hi = wilson_interval(40, 256)
    out = compare_presets(exit_report(40, 256, (lo, hi)), exit_report(1, 1, (0.2, 1.0), 1.1))
    assert out["verdict"] == "noise-regularization not observed"
    assert out["stochastic"]["wilson"] == [lo, hi] and hi > 0.05


def test_compare_vacuous():
    out = compare_presets(exit_report(0, 256, (0.0, 0.0148)), exit_report(0, 1, (0.0, 0.79)))
    assert out["verdict"] == "no baseline blow-up; contrast vacuous"


def test_compare_rejects_mismatched_physics():
    with pytest.raises(ReportMismatch):
        compare_presets(exit_report(0, 256, (0, 0.01)), exit_report(1, 1, (0, 1), 1.0, "other"))
    with pytest.raises(ReportMismatch):
        compare_presets({"preset": "decay", "physical": "same"}, exit_report(1, 1, (0, 1), 1.0))


# -- command line ------------------------------------------------------------


def test_cli_check_hypothesis(tmp_path, capsys):
    assert main(["check-hypothesis", str(CONFIGS / "hypothesis_check.json"),
                 "--out", str(tmp_path)]) == EXIT_PASS
    payload = json.loads((tmp_path / "hypotheses.json").read_text())
    assert set(payload["reports"]) == {"H5", "H5'", "H5''"}
    doc = json.loads((CONFIGS / "hypothesis_check.json").read_text())
    doc["noise"]["a"] = 0.5
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert main(["check-hypothesis", str(bad)]) == EXIT_FAIL


def test_cli_estimate_k(tmp_path):
    assert main(["estimate-k", str(CONFIGS / "hypothesis_check.json"), "--seed", "3",
                 "--out", str(tmp_path)]) == EXIT_PASS
    out = json.loads((tmp_path / "moser.json").read_text())
    assert out["seed"] == 3 and out["K_hat"] > 0


def test_cli_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"preset": "decay", "params": {"sigma": 1.5}}))
    assert main(["run", str(bad)]) == EXIT_ABORT
    assert "sigma must be a positive integer" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.json")]) == EXIT_ABORT


def test_cli_run_abort_and_overrides(tmp_path):
    doc = {"preset": "decay", "grid": {"d": 1, "n": 16}, "params": {"sigma": 1, "s": 2},
           "noise": {"a": 2, "b": 1, "c": 0, "d_exp": 1}, "lyapunov": {"p": 0.5}}
    path = tmp_path / "decay.json"
    path.write_text(json.dumps(doc))
    out = tmp_path / "run"
    assert main(["run", str(path), "--out", str(out), "--seed", "5", "--paths", "7"]) == EXIT_ABORT
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["ensemble"]["master_seed"] == 5
    assert man["config"]["ensemble"]["N_paths"] == 7


def test_cli_compare(tmp_path):
    a, b, c = (tmp_path / n for n in ("a.json", "b.json", "c.json"))
    a.write_text(json.dumps(exit_report(0, 256, (0.0, 0.0148))))
    b.write_text(json.dumps(exit_report(1, 1, (0.2, 1.0), 1.1)))
    c.write_text(json.dumps(exit_report(1, 1, (0.2, 1.0), 1.1, "other")))
    assert main(["compare", str(a), str(b), "--out", str(tmp_path)]) == EXIT_PASS
    assert json.loads((tmp_path / "contrast.json").read_text())["verdict"] \
        == "noise-regularization observed"
    assert main(["compare", str(b), str(a)]) == EXIT_FAIL
    assert main(["compare", str(a), str(c)]) == EXIT_ABORT


def test_ensemble_csv_matches_trajectories(tmp_path):
    res = run_experiment(small_decay(tmp_path))
    rows = np.genfromtxt(tmp_path / "ensemble.csv", delimiter=",", names=True)
    hs = np.array([tr.hs_norm[-1] for tr in res.trajectories])
    assert rows["t"][-1] == pytest.approx(0.3)
    assert rows[rows.dtype.names[1]][-1] == pytest.approx(np.mean(hs ** 0.5), rel=1e-12)
