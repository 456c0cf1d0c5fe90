"""Radial Lyapunov profiles l(rho), flat below R and log/power above 2R."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .spectral import SpectralField, sobolev_norm


@dataclass(frozen=True)
class LyapunovSpec:
    variant: str
    R: float
    a_floor: float
    p: float | None = None
    bridge: str = field(default="quintic-hermite")

    def __post_init__(self):
        if self.variant not in ("log", "power"):
            raise ValueError(f"variant must be 'log' or 'power', got {self.variant!r}")
        if not self.R > 0 or not self.a_floor > 0:
            raise ValueError("R and a_floor must be positive")
        if self.variant == "log":
            if not self.R > 0.5:
                raise ValueError("log variant needs R > 1/2")
            if not self.a_floor < np.log(2 * self.R):
                raise ValueError("log variant needs a_floor < log(2R)")
        else:
            if self.p is None or not 0 < self.p < 1:
                raise ValueError("power variant needs p in (0, 1)")
            if not self.a_floor < (2 * self.R) ** self.p:
                raise ValueError("power variant needs a_floor < (2R)^p")
        if not self.is_monotone():
            raise ValueError(
                "bridge on [R, 2R] is not monotone for these endpoint data; lower a_floor")

    def _outer(self, rho, order=0):
        rho = np.asarray(rho, dtype=float)
        if self.variant == "log":
            return [np.log(rho), 1 / rho, -1 / rho**2][order]
        p = self.p
        return [rho**p, p * rho ** (p - 1), -p * (1 - p) * rho ** (p - 2)][order]

    @cached_property
    def _bridge_coeffs(self) -> np.ndarray:
        # quintic in t = (rho - R) / R on [0, 1]; rows: value, slope, curvature at t=0 and t=1
        R = self.R
        rows, rhs = [], []
        for t, target in ((0.0, (self.a_floor, 0.0, 0.0)),
                          (1.0, tuple(self._outer(2 * R, j) * R**j for j in range(3)))):
            for j in range(3):
                row = [0.0] * 6
                for k in range(j, 6):
                    row[k] = np.prod(range(k - j + 1, k + 1)) * t ** (k - j)
                rows.append(row)
                rhs.append(target[j])
        return np.linalg.solve(np.array(rows), np.array(rhs))

    def _bridge(self, rho, order=0):
        t = (np.asarray(rho, dtype=float) - self.R) / self.R
        poly = np.polynomial.Polynomial(self._bridge_coeffs).deriv(order)
        return poly(t) / self.R**order

    def profile(self, rho, order: int = 0):
        """l(rho) and its first two derivatives (``order`` 0, 1, 2)."""
        rho = np.asarray(rho, dtype=float)
        flat = np.full_like(rho, self.a_floor if order == 0 else 0.0)
        inner = (rho >= self.R) & (rho <= 2 * self.R)
        outer = rho > 2 * self.R
        safe = np.where(outer, rho, 2 * self.R)
        out = np.where(inner, self._bridge(rho, order), flat)
        return np.where(outer, self._outer(safe, order), out)

    def is_monotone(self, samples: int = 20001) -> bool:
        rho = np.linspace(self.R, 2 * self.R, samples)
        return bool(np.all(self.profile(rho, 1) >= -1e-12))


def lyapunov_value(u: SpectralField, lspec: LyapunovSpec, s: float) -> float:
    return float(lspec.profile(sobolev_norm(u, s)))
