"""Least-squares power-law fits on log-log scale."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r2: float
    n_points: int

    def predict(self, x):
        return np.exp(self.intercept) * np.asarray(x, float) ** self.slope


def fit_power_law(points) -> FitResult:
    """Fit ``log y = intercept + slope * log x`` by ordinary least squares.

    ``points`` is a sequence of ``(x, y)`` pairs with positive entries; at
    least three are required.
    """
    pts = np.asarray(list(points), float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise ValueError("need at least three (x, y) points")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ValueError("power-law fit needs positive finite values")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (intercept + slope * lx)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(slope), float(intercept), r2, len(pts))
