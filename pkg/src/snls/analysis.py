"""Lyapunov drift bounds and Monte-Carlo statistics over path ensembles."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import EquationParams, NoiseSpec
from .integrator import Trajectory
from .lyapunov import LyapunovSpec, lyapunov_value  # noqa: F401  (re-export)
from .spectral import SpectralField, sobolev_norm, sup_norm

Z95 = 1.959963984540054


def generator_drift(u: SpectralField, lspec: LyapunovSpec, params: EquationParams,
                    spec: NoiseSpec, K: float) -> float:
    """Upper bound on the Ito drift of l(||u||_s) outside the ball of radius 2R.

    The uncontrolled term Im(u, alpha F(u))_s is replaced by its bound
    |alpha| K ||u||_inf^{2 sigma} ||u||_s^2, so this is not the exact drift.
    """
    rho = sobolev_norm(u, params.s)
    if not rho > 2 * lspec.R:
        raise ValueError(f"||u||_s = {rho} must exceed 2R = {2 * lspec.R}")
    m = sup_norm(u)
    f = complex(spec.h(m))
    growth = abs(params.alpha) * K * m ** (2 * params.sigma)
    if lspec.variant == "log":
        return growth + 0.5 * abs(f) ** 2 - f.real**2
    p = lspec.p
    return p * rho**p * (growth + 0.5 * abs(f) ** 2 - (2 - p) / 2 * f.real**2)


def wilson_interval(k: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("need at least one trial")
    phat = k / n
    denom = 1 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * np.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass
class EnsembleEstimate:
    """Per-time statistics of ||u(t)||_s^p and of blow-up exits over N paths.

    Paths stopped at the threshold keep their last recorded norm (the stopped
    process), so every time point averages over all N paths.
    """

    times: np.ndarray
    mean_p_moment: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    exit_fraction: np.ndarray
    exit_ci_low: np.ndarray
    exit_ci_high: np.ndarray
    n_paths: int
    p: float
    blowup_times: list = field(default_factory=list)
    horizon: float | None = None

    def __post_init__(self):
        if self.horizon is None and len(self.times):
            self.horizon = float(self.times[-1])

    @classmethod
    def from_trajectories(cls, trajs: Sequence[Trajectory], p: float,
                          horizon: float | None = None) -> "EnsembleEstimate":
        if len(trajs) == 0:
            raise ValueError("empty ensemble")
        # stopped paths record their crossing step off the stride grid, so
        # statistics live on the union of recorded times
        times = np.unique(np.concatenate([np.asarray(tr.times, dtype=float) for tr in trajs]))
        moments = np.empty((len(trajs), len(times)))
        for i, tr in enumerate(trajs):
            t_i = np.asarray(tr.times, dtype=float)
            if len(t_i) == 0 or t_i[0] != times[0]:
                raise ValueError("every trajectory must start at the common initial time")
            idx = np.searchsorted(t_i, times, side="right") - 1
            moments[i] = np.asarray(tr.hs_norm, dtype=float)[idx] ** p
        return cls.from_moments(times, moments, p, [tr.blowup_time for tr in trajs], horizon)

    @classmethod
    def from_moments(cls, times, moments, p: float, blowup_times=None,
                     horizon: float | None = None) -> "EnsembleEstimate":
        moments = np.atleast_2d(np.asarray(moments, dtype=float))
        n = moments.shape[0]
        if n == 0:
            raise ValueError("empty ensemble")
        times = np.asarray(times, dtype=float)
        mean = moments.mean(axis=0)
        half = Z95 * moments.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(mean)
        half = np.where(np.isfinite(half), half, np.inf)
        blowup_times = list(blowup_times) if blowup_times is not None else [None] * n
        bt = np.array([np.inf if b is None else b for b in blowup_times])
        exits = (bt[:, None] <= times[None, :]).sum(axis=0)
        wil = np.array([wilson_interval(int(k), n) for k in exits])
        return cls(times, mean, mean - half, mean + half, exits / n,
                   wil[:, 0], wil[:, 1], n, float(p), blowup_times, horizon)

    def to_csv(self, path) -> None:
        cols = [self.times, self.mean_p_moment, self.ci_low, self.ci_high,
                self.exit_fraction, self.exit_ci_low, self.exit_ci_high]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mean_p_moment", "ci_low", "ci_high", "exit_fraction",
                        "exit_ci_low", "exit_ci_high"])
            for row in zip(*cols):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def read_csv(cls, path, p: float, n_paths: int) -> "EnsembleEstimate":
        data = np.genfromtxt(path, delimiter=",", names=True)
        data = np.atleast_1d(data)
        return cls(data["t"], data["mean_p_moment"], data["ci_low"], data["ci_high"],
                   data["exit_fraction"], data["exit_ci_low"], data["exit_ci_high"],
                   n_paths, p)


@dataclass
class TestReport:
    test: str
    verdict: str
    lam: float
    p: float
    first_violation_t: float | None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=float)


def supermartingale_decay_test(ens: EnsembleEstimate, lam: float, p: float) -> TestReport:
    """Check that t -> exp(lam t) E||u(t)||_s^p does not increase beyond CI slack.

    The slack at t2 is the CI width of the compensated estimate,
    exp(lam t2) (ci_high - ci_low).
    """
    if ens.n_paths == 0 or len(ens.times) == 0:
        raise ValueError("empty ensemble")
    t = ens.times
    comp = np.exp(lam * t) * ens.mean_p_moment
    width = np.exp(lam * t) * (ens.ci_high - ens.ci_low)
    with np.errstate(invalid="ignore"):
        excess = comp[1:] - comp[:-1] - width[1:]
    excess = np.where(np.isnan(excess), np.inf, excess)
    bad = np.flatnonzero(excess > 0)
    first = float(t[bad[0] + 1]) if bad.size else None
    details = {"pairs": int(len(t) - 1), "violations": int(bad.size),
               "max_excess": float(excess.max()) if excess.size else 0.0}
    return TestReport("supermartingale_decay", "fail" if bad.size else "pass",
                      float(lam), float(p), first, details)


def fit_decay_rate(ens: EnsembleEstimate, window: tuple[float, float]) -> tuple[float, float]:
    """Least-squares decay rate of log E||u||^p on ``window``; (inf, 0) if it vanishes."""
    lo, hi = window
    sel = (ens.times >= lo) & (ens.times <= hi)
    if sel.sum() < 2:
        raise ValueError(f"window {window} holds fewer than two recorded times")
    m = ens.mean_p_moment[sel]
    if np.any(m <= 0):
        return np.inf, 0.0
    x, y = ens.times[sel], np.log(m)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean())) / sxx
    # stderr from the residuals themselves, so exact exponentials give 0
    resid = y - y.mean() - slope * xc
    dof = len(x) - 2
    stderr = float(np.sqrt(resid @ resid / dof / sxx)) if dof > 0 else 0.0
    return -slope, stderr


def exit_probability(ens: EnsembleEstimate, t: float) -> tuple[float, tuple[float, float]]:
    """Fraction of paths stopped at the threshold by time t, with Wilson 95% CI."""
    if t > ens.horizon + 1e-12:
        raise ValueError(f"t={t} beyond the horizon {ens.horizon}")
    if ens.blowup_times:
        k = sum(1 for b in ens.blowup_times if b is not None and b <= t)
    else:
        i = int(np.searchsorted(ens.times, t, side="right")) - 1
        k = int(round(ens.exit_fraction[max(i, 0)] * ens.n_paths))
    return k / ens.n_paths, wilson_interval(k, ens.n_paths)


def time_average_moment(traj: Trajectory, p: float) -> float:
    """(1/T) int_0^T ||u(t)||_s^p dt by the trapezoid rule."""
    if traj.blowup_time is not None:
        raise ValueError("time average is undefined for a path stopped at the threshold")
    t = np.asarray(traj.times)
    span = t[-1] - t[0]
    if span <= 0:
        raise ValueError("trajectory covers no time")
    return float(np.trapezoid(np.asarray(traj.hs_norm) ** p, t) / span)


def ensemble_time_average(trajs: Sequence[Trajectory], p: float, T: float | None = None):
    """Mean of per-path time averages on [0, T] with its normal 95% CI."""
    vals = []
    for tr in trajs:
        if T is not None:
            keep = tr.times <= T + 1e-12
            tr = Trajectory(tr.times[keep], tr.hs_norm[keep], tr.sup_norm[keep], tr.mass[keep],
                            None, None, tr.blowup_time, tr.terminal)
        vals.append(time_average_moment(tr, p))
    vals = np.array(vals)
    half = Z95 * vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0
    mean = float(vals.mean())
    return mean, (mean - half, mean + half)
