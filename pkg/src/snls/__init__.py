"""Fourier-Galerkin simulation of the stochastic NLS with superlinear multiplicative noise."""

__version__ = "0.1.0"
