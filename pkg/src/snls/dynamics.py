"""Nonlinear drift, noise coefficient and conserved functionals."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .spectral import (
    TWO_PI,
    Grid,
    SpectralField,
    hs_norm_array,
    pad_to_physical,
    padded_to_spectral,
    sobolev_norm,
    sup_norm,
    sup_norm_array,
)


@dataclass(frozen=True)
class EquationParams:
    """sigma: power of |u|^{2 sigma} u; alpha: nonlinear coupling; s: Sobolev index."""

    sigma: int
    alpha: complex
    s: float

    def __post_init__(self):
        if isinstance(self.sigma, bool) or int(self.sigma) != self.sigma or self.sigma < 1:
            raise ValueError("sigma must be a positive integer")
        object.__setattr__(self, "sigma", int(self.sigma))
        object.__setattr__(self, "alpha", complex(self.alpha))

    def validate_for(self, grid: Grid):
        if not self.s > grid.dim / 2:
            raise ValueError(f"s must exceed d/2 (s={self.s}, d={grid.dim})")

    @property
    def pad_factor(self) -> int:
        return self.sigma + 1

    @property
    def is_real(self) -> bool:
        return self.alpha.imag == 0.0


@dataclass(frozen=True)
class NoiseSpec:
    """Shifted-power multiplier h(x) = a(1+x)^b + i c(1+x)^d_exp, x = ||u||_inf."""

    a: float
    b: float
    c: float
    d_exp: float
    family: str = "shifted-power"

    def __post_init__(self):
        if self.family != "shifted-power":
            raise ValueError(f"unknown noise family {self.family!r}")
        if self.a == 0:
            raise ValueError("a must be nonzero")
        if not self.b >= 1 or not self.d_exp >= 1:
            raise ValueError("exponents b and d_exp must be at least 1")

    def h(self, x):
        x = np.asarray(x, dtype=float)
        return self.a * (1 + x) ** self.b + 1j * self.c * (1 + x) ** self.d_exp

    def as_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "d": self.d_exp}


# --------------------------------------------------------------------------
# array-level kernels


def nonlinearity_array(coeffs: np.ndarray, grid: Grid, sigma: int) -> np.ndarray:
    """P_n(|u|^{2 sigma} u), alias-free via (sigma+1)-fold padding."""
    vals = pad_to_physical(coeffs, grid, sigma + 1)
    mod2 = vals.real**2 + vals.imag**2
    return padded_to_spectral(mod2**sigma * vals, grid, sigma + 1)


def noise_factor_array(coeffs: np.ndarray, grid: Grid, spec: NoiseSpec) -> np.ndarray:
    return spec.h(sup_norm_array(coeffs, grid))


def lp_integral_array(coeffs: np.ndarray, grid: Grid, power: int, factor: int) -> np.ndarray:
    """int |u|^power dx by the trapezoid rule on the refined grid.

    Exact for even ``power`` whenever ``factor * N > power * n``.
    """
    vals = pad_to_physical(coeffs, grid, factor)
    mod = np.abs(vals) ** power
    m = factor * grid.modes_per_dim
    return mod.sum(axis=grid.axes) * (TWO_PI / m) ** grid.dim


def mass_array(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    return (np.abs(coeffs) ** 2).sum(axis=grid.axes)


def energy_array(coeffs: np.ndarray, grid: Grid, params: EquationParams) -> np.ndarray:
    if not params.is_real:
        raise ValueError("energy is only defined for real alpha")
    kinetic = 0.5 * (grid.k_squared * np.abs(coeffs) ** 2).sum(axis=grid.axes)
    q = 2 * params.sigma + 2
    potential = lp_integral_array(coeffs, grid, q, params.pad_factor)
    return kinetic - params.alpha.real / q * potential


# --------------------------------------------------------------------------
# field-level API


def nonlinearity(u: SpectralField, params: EquationParams) -> SpectralField:
    return SpectralField(u.grid, nonlinearity_array(u.coeffs, u.grid, params.sigma))


def noise_factor(u: SpectralField, spec: NoiseSpec) -> complex:
    """The scalar f(u) = h(||u||_inf)."""
    return complex(spec.h(sup_norm(u)))


def noise_coefficient(u: SpectralField, spec: NoiseSpec) -> SpectralField:
    """phi(u) = f(u) u."""
    return SpectralField(u.grid, noise_factor(u, spec) * u.coeffs)


def mass(u: SpectralField) -> float:
    return float(mass_array(u.coeffs, u.grid))


def energy(u: SpectralField, params: EquationParams) -> float:
    return float(energy_array(u.coeffs, u.grid, params))


def lipschitz_bound_check(u: SpectralField, v: SpectralField, params: EquationParams,
                          C: float) -> bool:
    """Whether ||F(u)-F(v)||_s <= C (||u||_s^{2sig} + ||v||_s^{2sig}) ||u-v||_s."""
    u._check(v)
    s, sig = params.s, params.sigma
    lhs = sobolev_norm(nonlinearity(u, params) - nonlinearity(v, params), s)
    rhs = C * (sobolev_norm(u, s) ** (2 * sig) + sobolev_norm(v, s) ** (2 * sig)) \
        * sobolev_norm(u - v, s)
    return bool(lhs <= rhs)


def moser_ratio(u: SpectralField, params: EquationParams) -> float:
    """||F(u)||_s / (||u||_inf^{2 sigma} ||u||_s); nan for the zero field."""
    m = sup_norm(u)
    hs = sobolev_norm(u, params.s)
    if m == 0.0 or hs == 0.0:
        return float("nan")
    return sobolev_norm(nonlinearity(u, params), params.s) / (m ** (2 * params.sigma) * hs)


def sample_test_field(grid: Grid, rng: np.random.Generator) -> SpectralField:
    """Draw from a mix of smooth, rough and sparse spectra with random amplitude."""
    kind = rng.integers(3)
    amplitude = 10.0 ** rng.uniform(-1, 1)
    if kind == 0:
        return SpectralField.random(grid, rng, decay=rng.uniform(1.0, 4.0), amplitude=amplitude)
    if kind == 1:
        return SpectralField.random(grid, rng, decay=rng.uniform(0.0, 1.0), amplitude=amplitude)
    n_modes = int(rng.integers(1, min(8, grid.n_retained) + 1))
    return SpectralField.random(grid, rng, n_modes=n_modes, amplitude=amplitude)


SAFETY_FACTOR = 1.5


def estimate_moser_constant(params: EquationParams, grid: Grid, budget: int, seed: int,
                            sampler: Callable[[Grid, np.random.Generator], SpectralField] | None = None,
                            safety: float = SAFETY_FACTOR) -> float:
    """Empirical constant K in ||F(u)||_s <= K ||u||_inf^{2 sigma} ||u||_s.

    The running maximum of the ratio over ``budget`` sampled fields, times a
    safety factor. This is a lower bound on the true constant before the
    safety factor is applied. The i-th sample does not depend on ``budget``,
    so larger budgets extend smaller ones.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    sampler = sampler or sample_test_field
    rng = np.random.default_rng(seed)
    best = -np.inf
    for _ in range(budget):
        r = moser_ratio(sampler(grid, rng), params)
        if np.isfinite(r):
            best = max(best, r)
    if not np.isfinite(best):
        raise ValueError("degenerate sample: every sampled field was zero")
    return safety * best


def moser_ratios(params: EquationParams, grid: Grid, count: int, seed: int) -> np.ndarray:
    """Ratios over an independent sample, for holdout checks."""
    rng = np.random.default_rng(seed)
    return np.array([moser_ratio(sample_test_field(grid, rng), params) for _ in range(count)])


def hs_norm(u: SpectralField, s: float) -> float:
    return float(hs_norm_array(u.coeffs, u.grid, s))
