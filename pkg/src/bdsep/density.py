"""Stationary one-point functions of the degree-preserving model.

Because the left dynamics maps degree-one polynomials to degree-one
polynomials, the stationary densities solve closed affine systems: one of
size ``p + 1`` for the isolated left block and one of size ``N + p`` for the
whole lattice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import DegreePreservingSpec

RESIDUAL_TOL = 1e-12


class SingularSystem(ValueError):
    pass


@dataclass
class DensityProfile:
    """Densities with their sites (or macroscopic points) and a role tag.

    ``role`` is one of ``left_block``, ``finite_N`` or ``macroscopic``.
    """

    sites: np.ndarray
    values: np.ndarray
    role: str
    residual: float = 0.0

    def __getitem__(self, k):
        idx = np.flatnonzero(self.sites == k)
        if not len(idx):
            raise KeyError(k)
        return float(self.values[idx[0]])

    def as_dict(self) -> dict:
        return {int(k) if float(k).is_integer() else float(k): float(v)
                for k, v in zip(self.sites, self.values)}


@dataclass
class BoundaryOperators:
    """Copy, anti-copy and block-stirring operators on functions of the block.

    ``A_lin`` is the linear part of the anti-copy map and ``A_const`` its
    constant part: ``(A rho)(j) = A_const[j] + (A_lin @ rho)[j]``.
    """

    C: np.ndarray
    A_lin: np.ndarray
    A_const: np.ndarray
    T: np.ndarray

    def apply_A(self, rho):
        return self.A_const + self.A_lin @ rho


def boundary_operators(spec: DegreePreservingSpec) -> BoundaryOperators:
    spec = spec.as_float()
    n = spec.p + 1
    C = spec.c - np.diag(spec.c.sum(axis=1))
    A_lin = -spec.a - np.diag(spec.a.sum(axis=1))
    A_const = spec.a.sum(axis=1)
    T = np.zeros((n, n))
    for j in range(n - 1):
        T[j, j + 1] += 1
        T[j + 1, j] += 1
    T -= np.diag(T.sum(axis=1))
    return BoundaryOperators(C, A_lin, A_const, T)


def _left_system(spec: DegreePreservingSpec):
    """Matrix ``M`` and right-hand side ``b`` with ``M rho = b``."""
    ops = boundary_operators(spec)
    spec = spec.as_float()
    M = -np.diag(spec.r) + ops.C + ops.A_lin + ops.T
    b = -(spec.r * spec.alpha) - ops.A_const
    return M, b


def left_residual(spec: DegreePreservingSpec, rho) -> np.ndarray:
    """Left-hand side of the block balance equations evaluated at ``rho``."""
    M, b = _left_system(spec)
    return M @ np.asarray(rho, float) - b


def solve_left_density(spec: DegreePreservingSpec) -> DensityProfile:
    if not spec.ergodic_left:
        raise SingularSystem("no reservoir and no anti-copy rates: block density "
                             "is not determined (see classify_ergodicity)")
    M, b = _left_system(spec)
    rho = np.linalg.solve(M, b)
    res = float(np.max(np.abs(M @ rho - b)))
    if res > RESIDUAL_TOL * max(1.0, np.abs(M).max()):
        raise SingularSystem(f"left density residual {res:.3e}")
    return DensityProfile(np.arange(-spec.p, 1), rho, "left_block", res)


def finite_system(spec: DegreePreservingSpec, N: int):
    """Sparse matrix and rhs of the ``N + p`` one-point equations.

    Unknown ``i`` is the density at site ``-p + i``.  The block rows carry the
    reservoir, copy and anti-copy terms; site 0 also exchanges with site 1;
    the bulk is the discrete Laplacian with ``rho(N) = beta``.
    """
    M0, b0 = _left_system(spec)
    p = spec.p
    n = N + p
    beta = float(spec.beta)
    M = sp.lil_matrix((n, n))
    b = np.zeros(n)
    M[: p + 1, : p + 1] = M0
    b[: p + 1] = b0
    M[p, p] += -1.0
    M[p, p + 1] += 1.0
    for i in range(p + 1, n):
        M[i, i - 1] += 1.0
        M[i, i] += -2.0
        if i + 1 < n:
            M[i, i + 1] += 1.0
        else:
            b[i] -= beta
    return M.tocsc(), b


def solve_finite_one_point(spec: DegreePreservingSpec, N: int) -> DensityProfile:
    if not spec.ergodic_left:
        raise SingularSystem("condition on reservoir / anti-copy rates fails")
    M, b = finite_system(spec, N)
    rho = spla.spsolve(M, b)
    res = float(np.max(np.abs(M @ rho - b)))
    if res > RESIDUAL_TOL * 10:
        raise SingularSystem(f"finite-N residual {res:.3e}")
    return DensityProfile(np.arange(-spec.p, N), rho, "finite_N", res)


def interpolation_defect(profile: DensityProfile, beta: float, N: int) -> float:
    """Max deviation of ``rho_N`` on ``{0..N-1}`` from the straight line
    between ``rho_N(0)`` and ``beta``."""
    k = np.arange(N)
    rho0 = profile[0]
    line = k / N * beta + (N - k) / N * rho0
    vals = np.array([profile[int(i)] for i in k])
    return float(np.max(np.abs(vals - line)))


def macroscopic_profile(rho0: float, beta: float, x=None) -> DensityProfile:
    """Linear profile with ``u(0) = rho0`` and ``u(1) = beta``."""
    if not (0 <= rho0 <= 1 and 0 <= beta <= 1):
        raise ValueError("boundary densities must lie in [0, 1]")
    x = np.linspace(0, 1, 101) if x is None else np.asarray(x, float)
    return DensityProfile(x, rho0 + (beta - rho0) * x, "macroscopic")


def extended_residual(spec: DegreePreservingSpec, rho) -> np.ndarray:
    """Residual of the block equations rewritten on ``{-1, 1} x block``.

    The extension is ``hat(1, k) = rho(k)`` and ``hat(-1, k) = 1 - rho(k)``; in
    that form the anti-copy term is a jump between the two sheets.  Returns
    the residuals of the sheet ``+1`` and sheet ``-1`` equations stacked.
    """
    spec = spec.as_float()
    ops = boundary_operators(spec)
    rho = np.asarray(rho, float)
    hat = {1: rho, -1: 1 - rho}
    alpha = {1: spec.alpha, -1: 1 - spec.alpha}
    out = []
    for s in (1, -1):
        h = hat[s]
        res = spec.r * (alpha[s] - h) + ops.C @ h + ops.T @ h
        res = res + spec.a @ hat[-s] - spec.a.sum(axis=1) * h
        out.append(res)
    return np.concatenate(out)


def block_stationary_density(spec) -> DensityProfile:
    """Site densities of the isolated left-block chain of a speeded spec.

    The chain is irreducible, so its stationary law is the unique solution
    of ``pi Q = 0`` with unit mass; the speed factor does not enter.
    """
    Q = np.asarray(spec.generator, float)
    n = Q.shape[0]
    A = np.vstack([Q.T, np.ones(n)])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    res = float(np.max(np.abs(Q.T @ pi)))
    if res > RESIDUAL_TOL * max(1.0, np.abs(Q).max()):
        raise SingularSystem(f"block stationary residual {res:.3e}")
    bits = (np.arange(n)[:, None] >> np.arange(spec.p + 1)) & 1
    return DensityProfile(np.arange(-spec.p, 1), pi @ bits, "left_block", res)


def solve_flip_one_point(rho1: float, beta: float, N: int) -> DensityProfile:
    """Densities of the flip model on ``{1..N-1}`` given ``rho_N(1)``.

    Away from site 1 the one-point equations close: the discrete Laplacian
    vanishes on ``2..N-1`` with ``rho(1) = rho1`` and ``rho(N) = beta``.  Site
    1 itself depends on the window law, so its value is an input.
    """
    if N < 3:
        raise ValueError("flip model needs N >= 3")
    n = N - 2
    M = sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], format="csc")
    b = np.zeros(n)
    b[0] -= rho1
    b[-1] -= beta
    rho = np.atleast_1d(spla.spsolve(M, b)) if n > 1 else np.array([(rho1 + beta) / 2])
    res = float(np.max(np.abs(M @ rho - b)))
    if res > RESIDUAL_TOL * 10:
        raise SingularSystem(f"flip bulk residual {res:.3e}")
    return DensityProfile(np.arange(1, N), np.concatenate([[rho1], rho]), "finite_N", res)
