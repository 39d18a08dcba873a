#!/usr/bin/env python3
"""Accelerated left block: rho_N(0) approaches the block chain's own
stationary density as the speed factor grows."""

import numpy as np

from bdsep.core import ModelSpec, random_speeded_spec
from bdsep.density import block_stationary_density
from bdsep.exact import observable_density, solve_exact
from bdsep.kinetic import estimate_density

b = random_speeded_spec(np.random.default_rng(0), 2)
rho0 = block_stationary_density(b)[0]
print(f"isolated block chain: rho(0) = {rho0:.6f}")

C = None
for ell in (1, 4, 16, 64, 256):
    spec = ModelSpec(b.with_ell(ell), 8)
    err = abs(observable_density(solve_exact(spec))[0] - rho0)
    C = err if C is None else C
    print(f"ell={ell:4d}  |rho_8(0) - rho(0)| = {err:.3e}   C/sqrt(ell) = {C / np.sqrt(ell):.3e}")

spec = ModelSpec(b.with_ell(64), 8)
est = estimate_density(spec, seed=5)
print(f"kinetic estimate at ell=64: {est[0]:.5f} +/- {est.err(0):.5f}")
