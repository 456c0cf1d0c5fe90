"""Preset pipelines: estimate K, certify, simulate an ensemble, analyse, write files."""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    EnsembleEstimate,
    exit_probability,
    fit_decay_rate,
    supermartingale_decay_test,
)
from .config import REQUIRED_HYPOTHESIS, ExperimentConfig
from .dynamics import energy, estimate_moser_constant
from .hypotheses import HYPOTHESES, HypothesisReport, check_hypothesis
from .integrator import PathRng, SchemeConfig, Trajectory, recommended_dt, simulate_batch
from .spectral import sobolev_norm, sup_norm

EXIT_PASS, EXIT_FAIL, EXIT_ABORT = 0, 1, 2
CHUNK = 16  # paths per task; fixed so results do not depend on the worker count
MASS_TOL, ENERGY_TOL = 1e-10, 1e-5
WILSON_CEILING = 0.05


@dataclass
class RunResult:
    exit_code: int
    report: dict
    manifest: dict
    ensemble: EnsembleEstimate | None = None
    trajectories: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class _Plan:
    """Everything derived from the config before simulation."""

    K: float
    dt_rule: float
    scheme: SchemeConfig
    u0_norm: float


def _plan(cfg: ExperimentConfig, K: float) -> _Plan:
    sc = cfg.resolved["scheme"]
    u0 = cfg.initial_state()
    rule = recommended_dt(u0, cfg.params, cfg.noise, K)
    dt = min(sc["dt_max"], sc["dt_factor"] * rule) if sc["dt"] == "auto" else sc["dt"]
    T = sc["T"]
    n_steps = max(1, math.ceil(T / dt - 1e-9))
    dt = T / n_steps
    stride = sc["record_stride"]
    if stride == "auto":
        stride = max(1, int(round(sc["record_every"] / dt)))
    norm0 = sobolev_norm(u0, cfg.params.s)
    M = sc["M"]
    if isinstance(M, str):
        M = float(M[:-1]) * norm0
    if not M > norm0:
        raise ValueError(f"threshold M = {M} must exceed ||u0||_s = {norm0}")
    scheme = SchemeConfig(sc["name"], dt, T, M, stride, record_energy=cfg.params.is_real)
    return _Plan(K, rule, scheme, norm0)


def _chunk_task(args) -> list[Trajectory]:
    u0, scheme, params, spec, lspec, seed, indices = args
    rngs = [PathRng(seed, i) for i in indices]
    return simulate_batch(u0, scheme, params, spec, rngs, lspec)


def simulate_ensemble(cfg: ExperimentConfig, scheme: SchemeConfig) -> list[Trajectory]:
    """All N_paths trajectories, ordered by path index."""
    ens = cfg.resolved["ensemble"]
    n, seed, workers = ens["N_paths"], ens["master_seed"], ens["workers"]
    u0, lspec = cfg.initial_state(), cfg.lyapunov
    tasks = [(u0, scheme, cfg.params, cfg.noise, lspec, seed, list(range(lo, min(lo + CHUNK, n))))
             for lo in range(0, n, CHUNK)]
    if workers == 1 or len(tasks) == 1:
        chunks = [_chunk_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_chunk_task, tasks))
    return [tr for chunk in chunks for tr in chunk]


def _exit_block(ens: EnsembleEstimate, T: float) -> dict:
    frac, (lo, hi) = exit_probability(ens, T)
    crossed = [b for b in ens.blowup_times if b is not None]
    return {"crossed": len(crossed), "n_paths": ens.n_paths, "fraction": frac,
            "wilson": [float(lo), float(hi)], "first_crossing_time": min(crossed) if crossed else None}


def _physical(cfg: ExperimentConfig) -> dict:
    r = cfg.resolved
    return {"grid": r["grid"], "params": r["params"], "initial": r["initial"]}


def _certify(cfg: ExperimentConfig, K: float) -> dict[str, HypothesisReport]:
    spec, p = cfg.noise, cfg.p
    wanted = HYPOTHESES if cfg.preset == "hypothesis-check" else (cfg.hypothesis,)
    return {h: check_hypothesis(h, spec, cfg.params, K, None if h == "H5" else p,
                                dim=cfg.grid.dim)
            for h in wanted}


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> RunResult:
    out_dir = Path(cfg.resolved["output"]["dir"])
    params, spec = cfg.params, cfg.noise
    mo = cfg.resolved["moser"]
    K = estimate_moser_constant(params, cfg.grid, mo["budget"], mo["seed"])

    manifest = {
        "manifest_version": 1,
        "code_version": __version__,
        "config": cfg.resolved,
        "derived": {"K_hat": K},
        "hypotheses": {},
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    report: dict = {"preset": cfg.preset, "physical": _physical(cfg)}

    if spec is not None and cfg.hypothesis is not None:
        certs = _certify(cfg, K)
        manifest["hypotheses"] = {h: r.to_dict() for h, r in certs.items()}
        report["hypotheses"] = manifest["hypotheses"]
        if cfg.preset == "hypothesis-check":
            ok = certs[cfg.hypothesis].certified
            report["verdict"] = "pass" if ok else "fail"
            return _finish(cfg, out_dir, write, EXIT_PASS if ok else EXIT_FAIL, report, manifest)
        needed = certs[REQUIRED_HYPOTHESIS[cfg.preset]]
        if not needed.certified:
            report["verdict"] = "aborted"
            report["diagnostic"] = (f"{needed.hypothesis} {needed.verdict}, margin "
                                    f"{needed.margin:.6g} <= 0; no paths were simulated")
            return _finish(cfg, out_dir, write, EXIT_ABORT, report, manifest)

    try:
        plan = _plan(cfg, K)
    except ValueError as exc:
        report["verdict"] = "aborted"
        report["diagnostic"] = str(exc)
        return _finish(cfg, out_dir, write, EXIT_ABORT, report, manifest)
    u0 = cfg.initial_state()
    manifest["derived"].update({
        "dt_rule": plan.dt_rule, "dt": plan.scheme.dt, "n_steps": plan.scheme.n_steps,
        "record_stride": plan.scheme.record_stride, "M": plan.scheme.blowup_threshold,
        "u0_hs_norm": plan.u0_norm, "u0_sup_norm": sup_norm(u0),
        "u0_energy": energy(u0, params) if params.is_real else None,
    })

    trajs = simulate_ensemble(cfg, plan.scheme)
    ens = EnsembleEstimate.from_trajectories(trajs, cfg.p, plan.scheme.T)
    report["exit"] = _exit_block(ens, plan.scheme.T)
    report["hard_overflows"] = int(sum(tr.hard_overflow for tr in trajs))
    passed = _ANALYSES[cfg.preset](cfg, plan, ens, trajs, report, manifest)
    report["verdict"] = "pass" if passed else "fail"
    result = _finish(cfg, out_dir, write, EXIT_PASS if passed else EXIT_FAIL, report, manifest,
                     ens, trajs)
    return result


def _finish(cfg, out_dir, write, code, report, manifest, ens=None, trajs=()) -> RunResult:
    report["exit_code"] = code
    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_jsonable))
        (out_dir / "report.json").write_text(json.dumps(report, indent=2, default=_jsonable))
        if ens is not None:
            ens.to_csv(out_dir / "ensemble.csv")
            per_path = cfg.resolved["output"]["per_path"]
            if per_path is True or (per_path == "auto" and len(trajs) <= 32):
                paths = out_dir / "paths"
                paths.mkdir(exist_ok=True)
                for tr in trajs:
                    tr.write(paths)
    return RunResult(code, report, manifest, ens, list(trajs))


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


def _clean(x: float) -> float | None:
    return float(x) if np.isfinite(x) else None


# --------------------------------------------------------------------------
# preset-specific acceptance


def _analyse_no_blowup(cfg, plan, ens, trajs, report, manifest) -> bool:
    return report["exit"]["wilson"][1] < WILSON_CEILING


def _analyse_baseline(cfg, plan, ens, trajs, report, manifest) -> bool:
    return report["exit"]["fraction"] == 1.0


def _analyse_decay(cfg, plan, ens, trajs, report, manifest) -> bool:
    p = cfg.p
    B = manifest["hypotheses"]["H5''"]["margin"]
    target = p * B
    lam = cfg.resolved["analysis"]["lambda"]
    lam = target / 2 if lam is None else lam
    rate, stderr = fit_decay_rate(ens, tuple(cfg.resolved["analysis"]["window"]))
    sm = supermartingale_decay_test(ens, lam, p)
    rate_ok = rate >= target - 3 * stderr
    report["decay"] = {"p": p, "B_tilde": B, "p_B_tilde": target,
                       "lambda_hat": _clean(rate), "lambda_hat_is_infinite": bool(np.isinf(rate)),
                       "stderr": stderr, "window": cfg.resolved["analysis"]["window"],
                       "rate_ok": bool(rate_ok)}
    report["supermartingale"] = sm.to_dict()
    return bool(rate_ok and sm.passed)


def _analyse_stationary(cfg, plan, ens, trajs, report, manifest) -> bool:
    from .analysis import ensemble_time_average

    T = plan.scheme.T
    if any(tr.blowup_time is not None for tr in trajs):
        report["stationary"] = {"error": "a path crossed the threshold; time averages undefined"}
        return False
    p = cfg.p
    half_mean, (hl, hh) = ensemble_time_average(trajs, p, T / 2)
    full_mean, (fl, fh) = ensemble_time_average(trajs, p, T)
    change = abs(full_mean - half_mean)
    width = hh - hl
    report["stationary"] = {"p": p, "T_half": T / 2, "T": T,
                            "mean_half": half_mean, "ci_half": [hl, hh],
                            "mean_full": full_mean, "ci_full": [fl, fh],
                            "change": change, "ci_width_half": width,
                            # near 0.5 when paths settle at zero: the average then falls like 1/T
                            "ratio_full_to_half": full_mean / half_mean if half_mean else None}
    return bool(change < width)


def _analyse_conservation(cfg, plan, ens, trajs, report, manifest) -> bool:
    if not cfg.params.is_real:
        report["conservation"] = {"error": "energy is defined only for real alpha"}
        return False
    mass_drift = energy_drift = 0.0
    for tr in trajs:
        m0, e0 = tr.mass[0], tr.energy[0]
        mass_drift = max(mass_drift, float(np.max(np.abs(tr.mass - m0)) / m0) if m0 else 0.0)
        scale = abs(e0) if e0 != 0 else 1.0
        energy_drift = max(energy_drift, float(np.max(np.abs(tr.energy - e0)) / scale))
    report["mass_drift"] = mass_drift
    report["energy_drift"] = energy_drift
    return mass_drift <= MASS_TOL and energy_drift <= ENERGY_TOL


_ANALYSES = {
    "no-blowup": _analyse_no_blowup,
    "blowup-baseline": _analyse_baseline,
    "decay": _analyse_decay,
    "stationary": _analyse_stationary,
    "conservation": _analyse_conservation,
}


# --------------------------------------------------------------------------
# contrast between a noisy run and its deterministic baseline


class ReportMismatch(ValueError):
    pass


def compare_presets(no_blowup_report: dict, blowup_report: dict) -> dict:
    """Contrast stochastic and deterministic exit statistics for the same data."""
    a, b = no_blowup_report, blowup_report
    for rep in (a, b):
        if "exit" not in rep:
            raise ReportMismatch(f"report of preset {rep.get('preset')!r} has no exit statistics")
    if a.get("physical") != b.get("physical"):
        raise ReportMismatch("reports differ in grid, equation parameters or initial data")
    det, sto = b["exit"], a["exit"]
    det_crossed = det["crossed"] > 0
    sto_upper = sto["wilson"][1]
    if not det_crossed:
        verdict = "no baseline blow-up; contrast vacuous"
    elif sto_upper < WILSON_CEILING:
        verdict = "noise-regularization observed"
    else:
        verdict = "noise-regularization not observed"
    return {
        "verdict": verdict,
        "deterministic": {"exit_fraction": det["fraction"], "wilson": det["wilson"],
                          "crossing_time": det["first_crossing_time"]},
        "stochastic": {"exit_fraction": sto["fraction"], "wilson": sto["wilson"],
                       "crossed": sto["crossed"], "n_paths": sto["n_paths"]},
    }


def estimate_k(cfg: ExperimentConfig) -> dict:
    mo = cfg.resolved["moser"]
    K = estimate_moser_constant(cfg.params, cfg.grid, mo["budget"], mo["seed"])
    return {"K_hat": K, "budget": mo["budget"], "seed": mo["seed"],
            "sigma": cfg.params.sigma, "s": cfg.params.s, "grid": cfg.resolved["grid"]}


def check_hypotheses(cfg: ExperimentConfig) -> tuple[int, dict]:
    """Certify every hypothesis for the config's noise; exit code from the configured one."""
    if cfg.noise is None:
        return EXIT_ABORT, {"error": "config has no noise block"}
    K = estimate_k(cfg)["K_hat"]
    reports = {h: check_hypothesis(h, cfg.noise, cfg.params, K, None if h == "H5" else cfg.p,
                                   dim=cfg.grid.dim)
               for h in HYPOTHESES}
    wanted = cfg.hypothesis or "H5''"
    code = EXIT_PASS if reports[wanted].certified else EXIT_FAIL
    return code, {"K_hat": K, "target": wanted,
                  "reports": {h: r.to_dict() for h, r in reports.items()}}
