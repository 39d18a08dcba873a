"""Brute-force generators and stationary states on small lattices.

States are bit-encoded configurations: bit ``i`` is site ``spec.lo + i``.
Everything else in the package is checked against this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._graph import closed_classes
from .core import ModelSpec
from .density import DensityProfile
from .rates import compose_spec

MAX_SITES = 22
DIRECT_LIMIT = 2 ** 14
PRACTICAL_SITES = 12
RESIDUAL_TOL = 1e-10


class StateSpaceTooLarge(ValueError):
    pass


class Reducible(ValueError):
    def __init__(self, classes):
        self.classes = classes
        super().__init__(f"chain has {len(classes)} closed classes")


@dataclass
class GeneratorMatrix:
    Q: sp.csr_matrix
    spec: ModelSpec

    @property
    def n_states(self) -> int:
        return self.Q.shape[0]

    @property
    def n_sites(self) -> int:
        return self.spec.n_sites

    def row_sum_defect(self) -> float:
        return float(np.max(np.abs(np.asarray(self.Q.sum(axis=1)).ravel())))


@dataclass
class StationaryState:
    weights: np.ndarray
    residual: float
    spec: ModelSpec

    @property
    def n_sites(self) -> int:
        return self.spec.n_sites


def _bonds(spec: ModelSpec) -> range:
    # model 3: the block chain is given whole, so stirring starts at bond (0, 1)
    first = spec.p if spec.kind == 3 else 0
    return range(first, spec.n_sites - 1)


def transitions(spec: ModelSpec):
    """Yield ``(source, target, rate)`` arrays covering every event class."""
    n = spec.n_sites
    if n > MAX_SITES:
        raise StateSpaceTooLarge(f"{n} sites exceed the enumeration cap of {MAX_SITES}")
    s = np.arange(2 ** n, dtype=np.int64)
    one = np.ones(len(s))

    for i in _bonds(spec):
        differ = ((s >> i) & 1) != ((s >> (i + 1)) & 1)
        yield s[differ], s[differ] ^ (3 << i), one[differ]

    last = n - 1
    occ = (s >> last) & 1
    beta = spec.beta
    yield s, s ^ (1 << last), np.where(occ == 1, 1.0 - beta, beta)

    b = spec.boundary
    if spec.kind == 1:
        table = np.asarray(compose_spec(b.as_float()), dtype=float)
        block = s & (2 ** (spec.p + 1) - 1)
        for j in range(spec.p + 1):
            yield s, s ^ (1 << j), table[j][block]
    elif spec.kind == 2:
        window = s & (2 ** spec.p - 1)
        yield s, s ^ 1, b.rates_by_bits()[window]
    else:
        mask = 2 ** (spec.p + 1) - 1
        block = s & mask
        Q = b.generator
        for u, t in zip(*np.nonzero(Q)):
            if u == t:
                continue
            src = s[block == u]
            yield src, (src & ~mask) | t, np.full(len(src), b.ell * Q[u, t])


def build_generator(spec: ModelSpec) -> GeneratorMatrix:
    rows, cols, vals = [], [], []
    for src, dst, rate in transitions(spec):
        keep = rate != 0
        rows.append(src[keep])
        cols.append(dst[keep])
        vals.append(rate[keep])
    S = 2 ** spec.n_sites
    Q = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(S, S))
    Q.sum_duplicates()
    Q = (Q - sp.diags(np.asarray(Q.sum(axis=1)).ravel())).tocsr()
    return GeneratorMatrix(Q, spec)


def _solve_on(Q: sp.csr_matrix) -> np.ndarray:
    """Unnormalised null vector of ``Q^T`` with the first weight pinned to one.

    Dropping one balance equation keeps the system sparse (a normalisation
    row of ones would wreck the fill-reducing ordering).
    """
    n = Q.shape[0]
    if n == 1:
        return np.ones(1)
    QT = Q.T.tocsc()
    A = QT[1:, 1:].tocsc()
    rhs = -np.asarray(QT[1:, 0].todense()).ravel()
    if n <= DIRECT_LIMIT:
        rest = spla.spsolve(A, rhs)
    else:
        # success is judged by the residual check in stationary_distribution
        ilu = spla.spilu(A, drop_tol=1e-4, fill_factor=10)
        prec = spla.LinearOperator(A.shape, ilu.solve)
        rest, _ = spla.gmres(A, rhs, M=prec, rtol=1e-12, restart=50, maxiter=20)
    return np.concatenate([[1.0], rest])


def stationary_distribution(G: GeneratorMatrix | sp.spmatrix, spec: ModelSpec | None = None
                            ) -> StationaryState:
    """Unique stationary law; raises :class:`Reducible` on several closed classes."""
    if isinstance(G, GeneratorMatrix):
        Q, spec = G.Q, G.spec
    else:
        Q = sp.csr_matrix(G)
    classes = closed_classes(Q)
    if len(classes) != 1:
        raise Reducible([c.tolist() for c in classes])
    support = classes[0]
    mu = np.zeros(Q.shape[0])
    sub = Q[support][:, support]
    mu[support] = _solve_on(sub.tocsr())
    mu = np.where(np.abs(mu) < 1e-16, 0.0, mu)
    if np.any(mu < -1e-12):
        raise RuntimeError("stationary solve produced negative weights")
    mu = np.clip(mu, 0.0, None)
    mu /= mu.sum()
    residual = float(np.abs(Q.T @ mu).sum())
    if residual > RESIDUAL_TOL:
        raise RuntimeError(f"stationary residual {residual:.3e}")
    return StationaryState(mu, residual, spec)


def solve_exact(spec: ModelSpec) -> StationaryState:
    return stationary_distribution(build_generator(spec))


def _occupations(n: int) -> np.ndarray:
    s = np.arange(2 ** n, dtype=np.int64)
    return ((s[:, None] >> np.arange(n)) & 1).astype(float)


def observable_density(mu: StationaryState) -> DensityProfile:
    n = mu.n_sites
    w = mu.weights
    vals = np.array([w[(np.arange(len(w)) >> i) & 1 == 1].sum() for i in range(n)])
    lo = mu.spec.lo if mu.spec is not None else 0
    return DensityProfile(np.arange(lo, lo + n), vals, "finite_N")


@dataclass
class ExactCorrelation:
    """Stationary covariance matrix over all sites (variances on the diagonal)."""

    sites: np.ndarray
    matrix: np.ndarray
    rho: np.ndarray
    N: int

    def cov(self, j: int, k: int) -> float:
        lo = self.sites[0]
        return float(self.matrix[j - lo, k - lo])

    def phi(self, sigma: int, j: int, k: int) -> float:
        """Covariance with the first variable complemented when ``sigma = -1``."""
        return sigma * self.cov(j, k)


def observable_correlation(mu: StationaryState) -> ExactCorrelation:
    n = mu.n_sites
    eta = _occupations(n)
    w = mu.weights
    m1 = eta.T @ w
    m2 = (eta * w[:, None]).T @ eta
    cov = m2 - np.outer(m1, m1)
    lo = mu.spec.lo if mu.spec is not None else 0
    return ExactCorrelation(np.arange(lo, lo + n), cov, m1, mu.spec.N if mu.spec else n)
