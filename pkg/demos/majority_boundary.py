#!/usr/bin/env python3
"""Exploratory run of a majority-rule left boundary.  No claim is attached
to the output; it prints coarse time averages of the left densities."""

import numpy as np

from bdsep.kinetic import majority_scenario

for beta in (0.3, 0.5, 0.7):
    run = majority_scenario(2, 50, seed=1, horizon=20000, sample_dt=10, beta=beta)
    blocks = run.window_density.reshape(10, -1).mean(axis=1)
    print(f"beta={beta}: site-1 occupation {run.occupation_fraction:.3f}; "
          f"window density by tenth: {np.round(blocks, 3).tolist()}")
