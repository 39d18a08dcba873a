#!/usr/bin/env python3
"""Degree-preserving left boundary: block densities, finite-N profiles and
the 1/N approach of rho_N(0) to the block value."""

import numpy as np

from bdsep.core import random_degree_preserving
from bdsep.density import (interpolation_defect, solve_finite_one_point, solve_left_density)
from bdsep.fitting import fit_power_law
from bdsep.rates import classify_ergodicity

spec = random_degree_preserving(np.random.default_rng(7), 2)
print("left block chain:", classify_ergodicity(spec).tag)

rho = solve_left_density(spec)
print("block densities  ", {int(k): round(float(v), 6) for k, v in zip(rho.sites, rho.values)})

pts = []
for N in (50, 100, 200, 400, 800):
    prof = solve_finite_one_point(spec, N)
    err = abs(prof[0] - rho[0])
    pts.append((N, err))
    print(f"N={N:4d}  rho_N(0)={prof[0]:.8f}  |rho_N(0)-rho(0)|={err:.3e}  "
          f"line defect={interpolation_defect(prof, spec.beta, N):.1e}")

fit = fit_power_law(pts)
print(f"error ~ N^{fit.slope:.3f}  (R2 = {fit.r2:.6f})")
