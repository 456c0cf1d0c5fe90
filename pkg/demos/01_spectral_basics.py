"""
Fields on the torus and the deterministic flow
==============================================

A tour of the spectral layer: Galerkin grids, Sobolev norms, the free
Schrodinger group and a Strang-split run of the defocusing cubic equation.
"""

import numpy as np

from snls.dynamics import EquationParams, energy, mass, nonlinearity
from snls.integrator import step_strang_split
from snls.spectral import SpectralField, linear_propagate, make_grid, sobolev_norm, sup_norm

# A grid keeps the Fourier modes with |k| <= n and collocates on N points per
# axis; N >= 2n + 2 leaves room for the padded products used by F(u).
grid = make_grid(d=1, n=32, N=66)
print("retained modes:", grid.n_retained)

# Basis functions are normalized exponentials, so ||e_k||_s = <k>^s exactly.
for k in (0, 3, 10):
    e = SpectralField.basis(grid, (k,))
    print(f"||e_{k}||_2 = {sobolev_norm(e, 2.0):.6f}   <k>^2 = {1 + k * k:.6f}")

# The linear propagator only rotates phases.
u = SpectralField.from_function(grid, lambda x: 1 + 0.5 * np.cos(x) + 0.2j * np.sin(3 * x))
later = linear_propagate(u, 7.3)
print("H^1 norm before / after free flow:", sobolev_norm(u, 1.0), sobolev_norm(later, 1.0))

# F(u) = |u|^{2 sigma} u is evaluated on a padded grid, then projected back.
params = EquationParams(sigma=1, alpha=-1.0, s=1.0)
Fu = nonlinearity(u, params)
print("sup |u| =", round(sup_norm(u), 4), " ||F(u)||_1 =", round(sobolev_norm(Fu, 1.0), 4))

# %%
# Mass and energy along a Strang-split run
# ----------------------------------------
# Each sub-flow conserves mass exactly, and the splitting is second order in
# the energy.

m0, e0 = mass(u), energy(u, params)
v = u
for step in range(1, 1001):
    v = step_strang_split(v, 1e-3, params)
    if step % 250 == 0:
        print(f"t={step * 1e-3:.2f}  mass drift {abs(mass(v) - m0) / m0:.1e}  "
              f"energy drift {abs(energy(v, params) - e0) / abs(e0):.1e}")
