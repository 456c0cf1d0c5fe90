"""Fourier representation of periodic fields on the torus (R / 2piZ)^d.

Coefficients follow the unitary convention

    u(x) = (2pi)^{-d/2} sum_k u_hat(k) exp(i k.x),
    u_hat(k) = (2pi)^{-d/2} int u(x) exp(-i k.x) dx,

so the basis fields ``e_k`` are orthonormal in L^2 and ``||e_k||_s = <k>^s``.
Coefficients are stored densely on the N^d FFT cube (numpy ordering); only
modes with ``|k|_2 <= n`` are ever nonzero.

All array-level helpers (``to_physical``, ``to_spectral`` ...) act on the last
``d`` axes, so a stack of fields with shape ``(B, N, ..., N)`` is processed as
a batch.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

TWO_PI = 2.0 * np.pi


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Collocation grid with a Euclidean-ball Galerkin truncation."""

    dim: int
    radius: int
    modes_per_dim: int

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.radius < 1:
            raise ValueError("radius must be a positive integer")
        if self.modes_per_dim % 2:
            raise ValueError(f"N must be even, got {self.modes_per_dim}")
        if self.modes_per_dim < 2 * self.radius + 2:
            raise ValueError(
                f"N={self.modes_per_dim} < 2n+2={2 * self.radius + 2}: "
                "retained modes would wrap around"
            )

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.modes_per_dim,) * self.dim

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        k1 = np.fft.fftfreq(self.modes_per_dim, d=1.0 / self.modes_per_dim)
        return tuple(np.meshgrid(*([k1] * self.dim), indexing="ij"))

    @cached_property
    def k_squared(self) -> np.ndarray:
        return sum(k * k for k in self.wavenumbers)

    @cached_property
    def mask(self) -> np.ndarray:
        return self.k_squared <= self.radius**2

    def retained_modes(self) -> np.ndarray:
        """Integer wavenumbers of the retained ball, shape (count, dim)."""
        ks = np.stack([k[self.mask] for k in self.wavenumbers], axis=-1)
        return ks.astype(int)

    @property
    def n_retained(self) -> int:
        return int(self.mask.sum())

    def bessel_weight(self, s: float) -> np.ndarray:
        """<k>^s = (1 + |k|^2)^{s/2} on the cube."""
        return _bessel_weight(self, float(s))

    @cached_property
    def points(self) -> tuple[np.ndarray, ...]:
        x1 = TWO_PI * np.arange(self.modes_per_dim) / self.modes_per_dim
        return tuple(np.meshgrid(*([x1] * self.dim), indexing="ij"))

    def mode_index(self, k) -> tuple[int, ...]:
        """Position of wavenumber ``k`` in the FFT cube."""
        k = np.atleast_1d(np.asarray(k, dtype=int))
        if k.shape != (self.dim,):
            raise ValueError(f"wavenumber must have {self.dim} components")
        if int(k @ k) > self.radius**2:
            raise ValueError(f"k={tuple(k)} lies outside the retained ball")
        return tuple(int(v) % self.modes_per_dim for v in k)

    def padded(self, factor: int) -> "_Padding":
        return _padding(self, int(factor))


@lru_cache(maxsize=64)
def _bessel_weight(grid: Grid, s: float) -> np.ndarray:
    return (1.0 + grid.k_squared) ** (s / 2.0)


@dataclass(frozen=True)
class _Padding:
    """Scatter/gather indices between the N-cube and a (factor*N)-cube."""

    size: int
    src: np.ndarray
    dst: np.ndarray


@lru_cache(maxsize=64)
def _padding(grid: Grid, factor: int) -> _Padding:
    big = factor * grid.modes_per_dim
    src = np.flatnonzero(grid.mask)
    ks = grid.retained_modes() % big
    dst = np.ravel_multi_index(tuple(ks.T), (big,) * grid.dim)
    return _Padding(big, src, dst)


def make_grid(d: int, n: int, N: int) -> Grid:
    return Grid(dim=d, radius=n, modes_per_dim=N)


# --------------------------------------------------------------------------
# array-level transforms (batched over leading axes)


def to_physical(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """Values at the N^d collocation points."""
    vals = np.fft.ifftn(coeffs, axes=grid.axes, norm="forward")
    return vals * TWO_PI ** (-grid.dim / 2)


def to_spectral(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Inverse of ``to_physical`` followed by the retained-ball mask."""
    coeffs = np.fft.fftn(values, axes=grid.axes, norm="forward")
    coeffs *= TWO_PI ** (grid.dim / 2)
    coeffs[..., ~grid.mask] = 0.0
    return coeffs


def pad_to_physical(coeffs: np.ndarray, grid: Grid, factor: int) -> np.ndarray:
    """Values on the refined (factor*N)^d grid of a band-limited field."""
    pad = grid.padded(factor)
    lead = coeffs.shape[: coeffs.ndim - grid.dim]
    big = np.zeros(lead + (pad.size**grid.dim,), dtype=complex)
    big[..., pad.dst] = coeffs.reshape(lead + (-1,))[..., pad.src]
    big = big.reshape(lead + (pad.size,) * grid.dim)
    vals = np.fft.ifftn(big, axes=grid.axes, norm="forward")
    return vals * TWO_PI ** (-grid.dim / 2)


def padded_to_spectral(values: np.ndarray, grid: Grid, factor: int) -> np.ndarray:
    """Project values on the refined grid back onto the retained ball."""
    pad = grid.padded(factor)
    lead = values.shape[: values.ndim - grid.dim]
    big = np.fft.fftn(values, axes=grid.axes, norm="forward")
    big = big.reshape(lead + (-1,)) * TWO_PI ** (grid.dim / 2)
    out = np.zeros(lead + (grid.modes_per_dim**grid.dim,), dtype=complex)
    out[..., pad.src] = big[..., pad.dst]
    return out.reshape(lead + grid.shape)


def hs_norm_array(coeffs: np.ndarray, grid: Grid, s: float) -> np.ndarray:
    w = grid.bessel_weight(s) ** 2
    sq = np.abs(coeffs) ** 2 * w
    return np.sqrt(sq.sum(axis=grid.axes))


def sup_norm_array(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    return np.abs(to_physical(coeffs, grid)).max(axis=grid.axes)


def propagator(grid: Grid, t: float) -> np.ndarray:
    """Mode multipliers exp(+i |k|^2 t) of the linear flow du = -i Lap u dt."""
    return np.exp(1j * grid.k_squared * t)


# --------------------------------------------------------------------------
# field-level API


@dataclass(frozen=True, eq=False)
class SpectralField:
    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != self.grid.shape:
            raise ValueError(f"coefficient shape {c.shape} != grid {self.grid.shape}")
        c = np.where(self.grid.mask, c, 0.0)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: Grid) -> "SpectralField":
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    @classmethod
    def basis(cls, grid: Grid, k) -> "SpectralField":
        """The normalized Fourier mode e_k = (2pi)^{-d/2} exp(i k.x)."""
        c = np.zeros(grid.shape, dtype=complex)
        c[grid.mode_index(k)] = 1.0
        return cls(grid, c)

    @classmethod
    def from_values(cls, grid: Grid, values) -> "SpectralField":
        values = np.broadcast_to(np.asarray(values, dtype=complex), grid.shape)
        return cls(grid, to_spectral(values, grid))

    @classmethod
    def from_function(cls, grid: Grid, func) -> "SpectralField":
        return cls.from_values(grid, func(*grid.points))

    @classmethod
    def random(cls, grid: Grid, rng: np.random.Generator, decay: float = 0.0,
               n_modes: int | None = None, amplitude: float = 1.0) -> "SpectralField":
        """Complex Gaussian coefficients weighted by <k>^{-decay}.

        With ``n_modes`` set, only that many randomly chosen retained modes are
        populated.
        """
        c = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        c *= grid.bessel_weight(-decay)
        if n_modes is not None:
            keep = rng.choice(np.flatnonzero(grid.mask), size=n_modes, replace=False)
            sparse = np.zeros(c.size, dtype=complex)
            sparse[keep] = c.ravel()[keep]
            c = sparse.reshape(grid.shape)
        c = np.where(grid.mask, c, 0.0)
        norm = np.sqrt((np.abs(c) ** 2).sum())
        if norm > 0:
            c *= amplitude / norm
        return cls(grid, c)

    def values(self) -> np.ndarray:
        return to_physical(self.coeffs, self.grid)

    def coefficient(self, k) -> complex:
        return complex(self.coeffs[self.grid.mode_index(k)])

    def _check(self, other: "SpectralField"):
        if other.grid != self.grid:
            raise GridMismatchError(f"{self.grid} vs {other.grid}")

    def __add__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return SpectralField(self.grid, self.coeffs * complex(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)


def sobolev_inner(u: SpectralField, v: SpectralField, s: float) -> complex:
    """(u, v)_s = sum_k <k>^{2s} u_hat(k) conj(v_hat(k))."""
    u._check(v)
    w = u.grid.bessel_weight(s) ** 2
    return complex(np.sum(w * u.coeffs * np.conj(v.coeffs)))


def sobolev_norm(u: SpectralField, s: float) -> float:
    return float(hs_norm_array(u.coeffs, u.grid, s))


def sup_norm(u: SpectralField) -> float:
    """Discrete sup norm on the collocation points.

    This lower-bounds the true L^infinity norm of the trigonometric polynomial.
    """
    return float(sup_norm_array(u.coeffs, u.grid))


def project(u: SpectralField, m: int) -> SpectralField:
    """Orthogonal projection onto span{e_k : |k|_2 <= m}."""
    if m > u.grid.radius:
        raise ValueError(f"projection radius {m} exceeds grid radius {u.grid.radius}")
    if m < 0:
        raise ValueError("projection radius must be non-negative")
    return SpectralField(u.grid, np.where(u.grid.k_squared <= m * m, u.coeffs, 0.0))


def linear_propagate(u: SpectralField, t: float) -> SpectralField:
    """Exact linear Schrodinger flow over time ``t``.

    Mode k is rotated by exp(+i |k|^2 t), the phase implied by
    du = -i Lap u dt. Moduli of all coefficients are untouched.
    """
    return SpectralField(u.grid, u.coeffs * propagator(u.grid, t))
