"""Time stepping for the Galerkin system and sample-path simulation.

The stochastic scheme is exponential Euler-Maruyama driven by ONE real
Brownian motion: every Fourier mode of a path receives the same increment dW.
Paths are advanced in batches (leading array axis) for speed; each path's
increments come from its own stream, so a path's result does not depend on
which other paths share its batch.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import (
    EquationParams,
    NoiseSpec,
    energy_array,
    mass_array,
    noise_factor_array,
    nonlinearity_array,
)
from .lyapunov import LyapunovSpec
from .spectral import (
    Grid,
    SpectralField,
    hs_norm_array,
    pad_to_physical,
    padded_to_spectral,
    propagator,
    sup_norm,
    sup_norm_array,
)

SCHEMES = ("exponential-euler-maruyama", "exponential-geometric-em", "stochastic-split",
           "strang-split-deterministic")


class HardBlowup(FloatingPointError):
    """Raised by single steps whose output is not finite."""


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str
    dt: float
    T: float
    blowup_threshold: float
    record_stride: int = 1
    record_energy: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not self.dt > 0 or not self.T > 0:
            raise ValueError("dt and T must be positive")
        if self.dt > self.T:
            raise ValueError("dt must not exceed T")
        if not self.blowup_threshold > 0:
            raise ValueError("blow-up threshold must be positive")
        if self.record_stride < 1:
            raise ValueError("record_stride must be a positive integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def stochastic(self) -> bool:
        return self.scheme != "strang-split-deterministic"


@dataclass
class PathRng:
    """Independent normal stream for one path of an ensemble."""

    master_seed: int
    path_index: int
    _gen: np.random.Generator | None = field(default=None, init=False, repr=False)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.path_index,))
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def increments(self, n_steps: int, dt: float) -> np.ndarray:
        """The next ``n_steps`` Brownian increments, each N(0, dt)."""
        return self.generator.standard_normal(n_steps) * np.sqrt(dt)


@dataclass
class Trajectory:
    times: np.ndarray
    hs_norm: np.ndarray
    sup_norm: np.ndarray
    mass: np.ndarray
    energy: np.ndarray | None
    lyapunov: np.ndarray | None
    blowup_time: float | None
    terminal: SpectralField
    hard_overflow: bool = False
    path_index: int = 0
    threshold: float = np.inf

    def to_csv(self, path) -> None:
        cols = [self.times, self.hs_norm, self.sup_norm, self.mass, self.energy, self.lyapunov]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "hs_norm", "linf_norm", "mass", "energy", "lyapunov"])
            for i in range(len(self.times)):
                w.writerow(["" if c is None else repr(float(c[i])) for c in cols])

    def sidecar(self) -> dict:
        return {"path_index": self.path_index, "blowup_time": self.blowup_time,
                "hard_overflow": self.hard_overflow}

    def write(self, directory, stem: str | None = None) -> None:
        directory = Path(directory)
        stem = stem or f"path_{self.path_index:05d}"
        self.to_csv(directory / f"{stem}.csv")
        (directory / f"{stem}.json").write_text(json.dumps(self.sidecar()))


# --------------------------------------------------------------------------
# array-level steps


def em_step_array(c: np.ndarray, grid: Grid, dt: float, dW: np.ndarray,
                  params: EquationParams, spec: NoiseSpec | None,
                  prop: np.ndarray | None = None) -> np.ndarray:
    """u+ = S(dt) [u - i alpha P F(u) dt + f(u) u dW] for a batch of states."""
    if prop is None:
        prop = propagator(grid, dt)
    inner = c - 1j * params.alpha * dt * nonlinearity_array(c, grid, params.sigma)
    if spec is not None:
        kick = noise_factor_array(c, grid, spec) * np.asarray(dW)
        inner = inner + kick.reshape(kick.shape + (1,) * grid.dim) * c
    return prop * inner


def geometric_step_array(c: np.ndarray, grid: Grid, dt: float, dW: np.ndarray,
                         params: EquationParams, spec: NoiseSpec | None,
                         prop: np.ndarray | None = None) -> np.ndarray:
    """u+ = S(dt) [exp(f dW - f^2 dt / 2) u - i alpha P F(u) dt].

    The noise factor solves du = f u dW exactly for f frozen over the step, so
    large f sqrt(dt) cannot overshoot the way the Euler-Maruyama kick does.
    """
    if prop is None:
        prop = propagator(grid, dt)
    inner = c - 1j * params.alpha * dt * nonlinearity_array(c, grid, params.sigma)
    if spec is not None:
        f = noise_factor_array(c, grid, spec)
        growth = np.exp(f * np.asarray(dW) - 0.5 * f * f * dt)
        inner = inner + (growth - 1).reshape(growth.shape + (1,) * grid.dim) * c
    return prop * inner


def split_step_array(c: np.ndarray, grid: Grid, dt: float, dW: np.ndarray,
                     params: EquationParams, spec: NoiseSpec | None,
                     prop: np.ndarray | None = None) -> np.ndarray:
    """Lie splitting: noise factor (f frozen), exact nonlinear phase, exact linear flow."""
    if not params.is_real:
        raise ValueError("stochastic-split requires real alpha")
    if prop is None:
        prop = propagator(grid, dt)
    factor = params.pad_factor
    vals = pad_to_physical(c, grid, factor)
    if spec is not None:
        # collocation points are every factor-th point of the refined grid
        coarse = vals[(...,) + (slice(None, None, factor),) * grid.dim]
        m = np.sqrt((coarse.real**2 + coarse.imag**2).max(axis=grid.axes))
        growth = noise_growth(m, np.asarray(dW, dtype=float), dt, spec)
        vals *= growth.reshape(growth.shape + (1,) * grid.dim)
    _rotate(vals, params.alpha.real * dt, params.sigma)
    return prop * padded_to_spectral(vals, grid, factor)


REFINE_LEVEL = 0.2  # refine the noise substep while |f|^2 dt exceeds this
MAX_DEPTH = 24


def noise_growth(m: np.ndarray, dW: np.ndarray, dt: float, spec: NoiseSpec) -> np.ndarray:
    """Scalar factor G with du = f(||u||_inf) u dW solved over one step.

    The noise substep only rescales u, so ``||u||_inf`` follows ``m |G|`` and
    the whole substep is the scalar SDE dG = h(m |G|) G dW.  Where
    ``|f|^2 dt <= REFINE_LEVEL`` one frozen-coefficient exponential step is
    taken.  Otherwise the increment is bisected by Brownian-bridge sampling and
    f is re-evaluated on each half, so a large kick cannot feed back into an
    oversized coefficient.  Bridge normals come from a stream seeded by the
    bit pattern of the coarse increment: a deterministic function of the path.
    """
    m = np.asarray(m, dtype=float)
    dW = np.broadcast_to(dW, m.shape)
    f = spec.h(m)
    growth = np.exp(f * dW - 0.5 * f * f * dt)
    for i in np.flatnonzero(np.abs(f) ** 2 * dt > REFINE_LEVEL):
        growth[i] = _refined_growth(float(m[i]), float(dW[i]), dt, spec)
    return growth


def _refined_growth(m0: float, w: float, tau: float, spec: NoiseSpec) -> complex:
    entropy = int(np.float64(w).view(np.uint64))
    G = 1.0 + 0j
    # depth-first walk of the bisection tree; node ids follow heap numbering
    stack = [(1, w, tau, 0)]
    while stack:
        node, w, tau, depth = stack.pop()
        f = complex(spec.h(m0 * abs(G)))
        if abs(f) ** 2 * tau <= REFINE_LEVEL or depth >= MAX_DEPTH:
            G *= np.exp(f * w - 0.5 * f * f * tau)
            if not np.isfinite(G):
                return G
            continue
        z = np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=(node,))) \
            .standard_normal()
        left = 0.5 * w + np.sqrt(0.25 * tau) * z
        stack.append((2 * node + 1, w - left, 0.5 * tau, depth + 1))
        stack.append((2 * node, left, 0.5 * tau, depth + 1))
    return G


def _rotate(vals: np.ndarray, coef: float, sigma: int) -> None:
    """In place: v <- exp(-i coef |v|^{2 sigma}) v."""
    theta = vals.real**2 + vals.imag**2
    theta **= sigma
    theta *= coef
    rot = np.empty_like(vals)
    rot.real = np.cos(theta)
    rot.imag = -np.sin(theta)
    vals *= rot


def _phase(c: np.ndarray, grid: Grid, dt: float, params: EquationParams) -> np.ndarray:
    vals = pad_to_physical(c, grid, params.pad_factor)
    _rotate(vals, params.alpha.real * dt, params.sigma)
    return padded_to_spectral(vals, grid, params.pad_factor)


def _phase_half(c: np.ndarray, grid: Grid, dt: float, params: EquationParams) -> np.ndarray:
    return _phase(c, grid, 0.5 * dt, params)


def strang_step_array(c: np.ndarray, grid: Grid, dt: float, params: EquationParams,
                      prop: np.ndarray | None = None) -> np.ndarray:
    """Half nonlinear phase, full linear step, half nonlinear phase."""
    if not params.is_real:
        raise ValueError("Strang splitting requires real alpha")
    if prop is None:
        prop = propagator(grid, dt)
    c = _phase_half(c, grid, dt, params)
    c = prop * c
    return _phase_half(c, grid, dt, params)


_STOCHASTIC_STEPS = {
    "exponential-euler-maruyama": em_step_array,
    "exponential-geometric-em": geometric_step_array,
    "stochastic-split": split_step_array,
}


def step_exponential_em(u: SpectralField, dt: float, dW: float, params: EquationParams,
                        spec: NoiseSpec | None) -> SpectralField:
    out = em_step_array(u.coeffs, u.grid, dt, dW, params, spec)
    if not np.all(np.isfinite(out)):
        raise HardBlowup("non-finite coefficients after exponential EM step")
    return SpectralField(u.grid, out)


def step_strang_split(u: SpectralField, dt: float, params: EquationParams) -> SpectralField:
    out = strang_step_array(u.coeffs, u.grid, dt, params)
    if not np.all(np.isfinite(out)):
        raise HardBlowup("non-finite coefficients after Strang step")
    return SpectralField(u.grid, out)


def recommended_dt(u0: SpectralField, params: EquationParams, spec: NoiseSpec | None,
                   K: float) -> float:
    """Rule of thumb 0.1 / (|alpha| K m0^{2 sigma} + |f(u0)|^2)."""
    m0 = sup_norm(u0)
    rate = abs(params.alpha) * K * m0 ** (2 * params.sigma)
    if spec is not None:
        rate += abs(complex(spec.h(m0))) ** 2
    return np.inf if rate == 0 else 0.1 / rate


# --------------------------------------------------------------------------
# path simulation


class _Recorder:
    def __init__(self, n_paths, capacity, with_energy, with_lyap):
        self.buf = {k: np.full((n_paths, capacity), np.nan)
                    for k in ("t", "hs", "sup", "mass", "energy", "lyap")}
        self.with_energy = with_energy
        self.with_lyap = with_lyap
        self.count = np.zeros(n_paths, dtype=int)

    def record(self, rows, t, c, grid, params, lspec):
        if len(rows) == 0:
            return
        hs = hs_norm_array(c, grid, params.s)
        slots = self.count[rows]
        b = self.buf
        b["t"][rows, slots] = t
        b["hs"][rows, slots] = hs
        b["sup"][rows, slots] = sup_norm_array(c, grid)
        b["mass"][rows, slots] = mass_array(c, grid)
        if self.with_energy:
            b["energy"][rows, slots] = energy_array(c, grid, params)
        if self.with_lyap:
            b["lyap"][rows, slots] = lspec.profile(hs)
        self.count[rows] += 1

    def series(self, i):
        n = self.count[i]
        b = self.buf
        return (b["t"][i, :n].copy(), b["hs"][i, :n].copy(), b["sup"][i, :n].copy(),
                b["mass"][i, :n].copy(),
                b["energy"][i, :n].copy() if self.with_energy else None,
                b["lyap"][i, :n].copy() if self.with_lyap else None)


def simulate_batch(u0, scheme: SchemeConfig, params: EquationParams,
                   spec: NoiseSpec | None, rngs: Sequence[PathRng] | None = None,
                   lspec: LyapunovSpec | None = None,
                   increments: np.ndarray | None = None) -> list[Trajectory]:
    """Advance several independent paths together.

    ``u0`` is a SpectralField (shared initial state) or a sequence of them.
    Brownian increments are taken from ``increments`` (shape (paths, steps))
    when given, else drawn from each path's ``PathRng``; deterministic
    schemes and ``spec=None`` use no randomness.
    """
    if isinstance(u0, SpectralField):
        grid = u0.grid
        n_paths = len(rngs) if rngs is not None else (
            len(increments) if increments is not None else 1)
        c = np.broadcast_to(u0.coeffs, (n_paths,) + grid.shape).copy()
    else:
        grid = u0[0].grid
        n_paths = len(u0)
        c = np.stack([v.coeffs for v in u0])
    if any(getattr(v, "grid", grid) != grid for v in ([] if isinstance(u0, SpectralField) else u0)):
        raise ValueError("initial states live on different grids")

    n_steps, dt = scheme.n_steps, scheme.dt
    noisy = scheme.stochastic and spec is not None
    if noisy:
        if increments is None:
            if rngs is None:
                raise ValueError("stochastic scheme needs rngs or increments")
            increments = np.stack([r.increments(n_steps, dt) for r in rngs])
        increments = np.asarray(increments, dtype=float)
        if increments.shape != (n_paths, n_steps):
            raise ValueError(f"increments shape {increments.shape} != {(n_paths, n_steps)}")

    with_energy = scheme.record_energy and params.is_real
    rec = _Recorder(n_paths, n_steps // scheme.record_stride + 2, with_energy, lspec is not None)
    prop = propagator(grid, dt)
    M = scheme.blowup_threshold
    blowup = np.full(n_paths, np.nan)
    overflow = np.zeros(n_paths, dtype=bool)
    active = np.arange(n_paths)

    rec.record(active, 0.0, c, grid, params, lspec)
    start = hs_norm_array(c, grid, params.s)
    crossed0 = start >= M
    blowup[crossed0] = 0.0
    active = active[~crossed0]

    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(n_steps):
            if active.size == 0:
                break
            t = (j + 1) * dt
            full = active.size == n_paths
            cur = c if full else c[active]
            if scheme.stochastic:
                dW = increments[active, j] if noisy else np.zeros(active.size)
                step = _STOCHASTIC_STEPS[scheme.scheme]
                new = step(cur, grid, dt, dW, params, spec if noisy else None, prop)
            else:
                new = strang_step_array(cur, grid, dt, params, prop)
            if full:
                c = new
            else:
                c[active] = new

            finite = np.isfinite(new).reshape(active.size, -1).all(axis=1)
            hs = np.where(finite, hs_norm_array(np.where(
                finite.reshape((-1,) + (1,) * grid.dim), new, 0), grid, params.s), np.inf)
            stop = ~finite | (hs >= M)
            on_stride = (j + 1) % scheme.record_stride == 0
            rows = active if on_stride else active[stop]
            if rows.size:
                sel = np.isin(active, rows)
                fin_rows = sel & finite
                rec.record(active[fin_rows], t, new[fin_rows], grid, params, lspec)
                bad = active[sel & ~finite]
                if bad.size:
                    slots = rec.count[bad]
                    rec.buf["t"][bad, slots] = t
                    for key in ("hs", "sup", "mass", "energy", "lyap"):
                        rec.buf[key][bad, slots] = np.inf
                    rec.count[bad] += 1
            if stop.any():
                blowup[active[stop]] = t
                overflow[active[~finite]] = True
                active = active[~stop]

    out = []
    for i in range(n_paths):
        t_, hs_, sup_, mass_, en_, ly_ = rec.series(i)
        out.append(Trajectory(
            times=t_, hs_norm=hs_, sup_norm=sup_, mass=mass_, energy=en_, lyapunov=ly_,
            blowup_time=None if np.isnan(blowup[i]) else float(blowup[i]),
            terminal=SpectralField(grid, np.where(np.isfinite(c[i]), c[i], np.nan)),
            hard_overflow=bool(overflow[i]),
            path_index=rngs[i].path_index if rngs is not None else i,
            threshold=M,
        ))
    return out


def simulate_path(u0: SpectralField, scheme: SchemeConfig, params: EquationParams,
                  spec: NoiseSpec | None, rng: PathRng | None = None,
                  lspec: LyapunovSpec | None = None,
                  increments: np.ndarray | None = None) -> Trajectory:
    rngs = None if rng is None else [rng]
    incs = None if increments is None else np.asarray(increments, dtype=float)[None, :]
    return simulate_batch(u0, scheme, params, spec, rngs, lspec, incs)[0]


def detect_blowup(traj: Trajectory, threshold: float | None = None) -> float | None:
    """First recorded time with ||u||_s >= M (the trajectory's own threshold by default)."""
    threshold = traj.threshold if threshold is None else threshold
    hit = np.flatnonzero(np.asarray(traj.hs_norm) >= threshold)
    return float(traj.times[hit[0]]) if hit.size else None
