#!/usr/bin/env python3
"""Two-point functions of the degree-preserving model: sparse solve, the
absorbed-walk representation, and the decay of bulk correlations with N."""

import numpy as np

from bdsep.core import ModelSpec, random_degree_preserving
from bdsep.correlations import (assemble_system_model1, max_bulk_correlation, mc_dual_walk,
                                solve_correlations)
from bdsep.density import solve_finite_one_point
from bdsep.exact import observable_correlation, solve_exact

spec = random_degree_preserving(np.random.default_rng(11), 1)

# small lattice: solve against brute force
N = 8
rho = solve_finite_one_point(spec, N)
system = assemble_system_model1(spec, N, rho)
field = solve_correlations(system)
ex = observable_correlation(solve_exact(ModelSpec(spec, N)))
err = max(abs(field.phi(s, j, k) - ex.phi(s, j, k)) for s, j, k in system.states)
print(f"N={N}: {system.n} pair states, max |solve - exact| = {err:.2e}")

for start in [(1, 2, 5), (1, -1, 4), (-1, 0, 6)]:
    est, se = mc_dual_walk(system, start, 100000, seed=1)
    print(f"  phi{start}: solve {field.phi(*start):+.6f}   walks {est:+.6f} +/- {se:.6f}")

for N in (50, 100, 200):
    f = solve_correlations(assemble_system_model1(spec, N, solve_finite_one_point(spec, N)))
    print(f"N={N:4d}: max_(j>N/4) |phi(1,j,k)| = {max_bulk_correlation(f, N):.3e}")
