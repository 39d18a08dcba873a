"""Two-point correlations as Dirichlet problems for an absorbed random walk.

The stationary covariances solve ``L phi + F = 0`` on a discrete simplex of
ordered site pairs, with Dirichlet data on absorbing cemetery points.  The
same generator drives a continuous-time walk, so ``phi`` also equals the
expected accumulated source plus the expected boundary value at absorption;
:func:`mc_dual_walk` samples that representation.

Model 1 indices are ``(sigma, j, k)`` with ``-p <= j < k <= N-1``; the sheet
``sigma = -1`` holds the covariance of the hole variable at ``j`` with the
particle variable at ``k``.  Model 2 indices are ``(1, j, k)`` with
``2 <= j < k <= N-1``.
"""

from __future__ import annotations

import warnings

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import DegreePreservingSpec, FlipBoundarySpec
from .density import DensityProfile

SOLVE_TOL = 1e-10
DIRECT_LIMIT = 200_000

# cemetery kinds
SITE, DIAG, RIGHT, LEFT = "site", "diag", "right", "left"


@dataclass
class CorrelationSystem:
    """Interior states, jump rates (interior and cemetery columns), source
    ``F`` and boundary data ``b``.

    Column ``t < n`` of ``rates`` is interior state ``t``; column ``n + m`` is
    cemetery ``boundary[m]``.
    """

    model: int
    N: int
    p: int
    states: np.ndarray
    rates: sp.csr_matrix
    F: np.ndarray
    boundary: list
    b: np.ndarray
    index: dict = field(repr=False, default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def out_rates(self) -> np.ndarray:
        return np.asarray(self.rates.sum(axis=1)).ravel()

    def with_data(self, F=None, b=None) -> CorrelationSystem:
        return CorrelationSystem(self.model, self.N, self.p, self.states, self.rates,
                                 self.F if F is None else np.asarray(F, float),
                                 self.boundary, self.b if b is None else np.asarray(b, float),
                                 self.index)

    def interior_matrix(self):
        n = self.n
        R = self.rates
        Rint = R[:, :n]
        return (Rint - sp.diags(self.out_rates)).tocsc(), R[:, n:]

    def lookup(self, label):
        """Index of ``label``: an int for interior states, ``("cemetery", m)``
        otherwise."""
        label = tuple(label)
        if label in self.index:
            return self.index[label]
        if self.model == 2 and len(label) == 3 and label[1] == 1:
            label = (label[0], label[2])
        for m, lab in enumerate(self.boundary):
            if lab[1:] == label or lab == label:
                return ("cemetery", m)
        raise KeyError(label)


@dataclass
class CorrelationField:
    """Solved correlations on interior indices with their boundary data."""

    system: CorrelationSystem
    values: np.ndarray
    residual: float
    stderr: np.ndarray | None = None

    def phi(self, sigma, j, k) -> float:
        if j > k:
            j, k = k, j
        idx = self.system.lookup((sigma, j, k))
        if isinstance(idx, tuple):
            return float(self.system.b[idx[1]])
        return float(self.values[idx])

    def sheet(self, sigma=1) -> dict:
        return {(int(j), int(k)): float(v)
                for (s, j, k), v in zip(self.system.states, self.values) if s == sigma}

    def antisymmetry_defect(self) -> float:
        plus, minus = self.sheet(1), self.sheet(-1)
        if not minus:
            return 0.0
        return max(abs(plus[key] + minus[key]) for key in plus)


class _Builder:
    def __init__(self):
        self.states = []
        self.index = {}
        self.boundary = []
        self.bindex = {}
        self.bvals = []
        self.rows, self.cols, self.vals = [], [], []

    def add_state(self, label):
        self.index[label] = len(self.states)
        self.states.append(label)

    def cemetery(self, label, value):
        if label not in self.bindex:
            self.bindex[label] = len(self.boundary)
            self.boundary.append(label)
            self.bvals.append(value)
        return self.bindex[label]

    def jump(self, i, target, rate, bvalue=None):
        if rate == 0:
            return
        if target in self.index:
            col = self.index[target]
        else:
            col = -1 - self.cemetery(target, bvalue)
        self.rows.append(i)
        self.cols.append(col)
        self.vals.append(rate)

    def finish(self, model, N, p, F):
        n = len(self.states)
        cols = np.array(self.cols, dtype=np.int64)
        cols = np.where(cols < 0, n + (-1 - cols), cols)
        R = sp.csr_matrix((self.vals, (self.rows, cols)), shape=(n, n + len(self.boundary)))
        R.sum_duplicates()
        return CorrelationSystem(model, N, p, np.array(self.states, dtype=np.int64).reshape(-1, 3),
                                 R, np.asarray(F, float), self.boundary,
                                 np.array(self.bvals, float), self.index)


def _rho_lookup(rho, p):
    values = rho.values if isinstance(rho, DensityProfile) else np.asarray(rho, float)
    return lambda k: float(values[k + p])


def assemble_system_model1(spec: DegreePreservingSpec, N: int, rho) -> CorrelationSystem:
    """Correlation system of the degree-preserving model.

    ``rho`` is the finite-N density on ``{-p..N-1}`` (a profile or an array).
    """
    spec = spec.as_float()
    p = spec.p
    if sum(spec.r) == 0:
        warnings.warn("no reservoir rates: the pair walk is only killed at the right end; "
                      "results in this regime are experimental")
    dens = _rho_lookup(rho, p)
    r = {k - p: spec.r[k] for k in range(p + 1)}
    c = spec.c
    a = spec.a
    bld = _Builder()
    for s in (1, -1):
        for j in range(-p, N):
            for k in range(j + 1, N):
                bld.add_state((s, j, k))

    def pair(s, x, y):
        return (s, min(x, y), max(x, y))

    def diag_value(s, m):
        return s * dens(m) * (1 - dens(m))

    F = np.zeros(len(bld.states))
    for i, (s, j, k) in enumerate(bld.states):
        # nearest-neighbour exclusion pair walk on {-p..N-1}
        if j > -p:
            bld.jump(i, (s, j - 1, k), 1.0)
        if k < N - 1:
            bld.jump(i, (s, j, k + 1), 1.0)
        if k - j > 1:
            bld.jump(i, (s, j + 1, k), 1.0)
            bld.jump(i, (s, j, k - 1), 1.0)
        else:
            F[i] = -s * (dens(j + 1) - dens(j)) ** 2
        # reservoir killing
        if j <= 0 and r[j] > 0:
            bld.jump(i, (SITE, s, k), r[j], 0.0)
        if k <= 0 and r[k] > 0:
            bld.jump(i, (SITE, s, j), r[k], 0.0)
        if k == N - 1:
            bld.jump(i, (RIGHT, s, j, N), 1.0, 0.0)
        # copy and anti-copy moves of either coordinate
        for moving, other in ((j, k), (k, j)):
            if moving > 0:
                continue
            jj = moving + p
            for m in range(-p, 1):
                mm = m + p
                if m == moving:
                    continue
                for rate, sig in ((c[jj, mm], s), (a[jj, mm], -s)):
                    if rate == 0:
                        continue
                    if m == other:
                        bld.jump(i, (DIAG, sig, m, m), rate, diag_value(sig, m))
                    else:
                        bld.jump(i, pair(sig, m, other), rate)
    return bld.finish(1, N, p, F)


def phi1_closed_form(rho1: float, beta: float, N: int, j, k):
    """Source-driven part of the model-2 covariance (vanishing boundary data)."""
    j = np.asarray(j, float)
    k = np.asarray(k, float)
    return -(beta - rho1) ** 2 / (N - 1) ** 2 * (j - 1) * (N - k) / (N - 2)


def assemble_system_model2(N: int, rho1: float, beta: float, left_data=None) -> CorrelationSystem:
    """Correlation system of the flip model away from site 1.

    ``left_data`` maps ``k`` (``3 <= k <= N-1``) to the covariance of sites 1
    and ``k``; ``None`` means the zero ansatz.  It may be a dict or an array
    indexed by site.
    """
    if N < 4:
        raise ValueError("model-2 correlation system needs N >= 4")

    def left(k):
        if left_data is None:
            return 0.0
        return float(left_data[k])

    bld = _Builder()
    for j in range(2, N):
        for k in range(j + 1, N):
            bld.add_state((1, j, k))
    grad2 = ((beta - rho1) / (N - 1)) ** 2
    F = np.zeros(len(bld.states))

    def target(j, k):
        if j == 1:
            return (LEFT, 1, k), left(k)
        if k == N:
            return (RIGHT, 1, j, N), 0.0
        return (1, j, k), None

    for i, (_, j, k) in enumerate(bld.states):
        moves = [(j - 1, k), (j, k + 1)]
        if k - j > 1:
            moves += [(j + 1, k), (j, k - 1)]
        else:
            F[i] = -grad2
        for x, y in moves:
            lab, val = target(x, y)
            bld.jump(i, lab, 1.0, val)
    return bld.finish(2, N, 0, F)


def left_data_from_exact(exact_corr) -> dict:
    """Boundary column ``phi(1, k)`` from an exact model-2 covariance."""
    N = exact_corr.N
    return {k: exact_corr.cov(1, k) for k in range(3, N)}


def solve_correlations(system: CorrelationSystem, tol: float = SOLVE_TOL) -> CorrelationField:
    M, Rb = system.interior_matrix()
    rhs = -system.F - Rb @ system.b
    if system.n <= DIRECT_LIMIT:
        phi = spla.spsolve(M, rhs)
    else:
        ilu = spla.spilu(M, drop_tol=1e-5)
        prec = spla.LinearOperator(M.shape, ilu.solve)
        phi, info = spla.gmres(M, rhs, M=prec, rtol=tol * 1e-2, restart=200, maxiter=2000)
        if info != 0:
            raise RuntimeError(f"gmres did not converge (info={info})")
    residual = float(np.max(np.abs(M @ phi - rhs))) if system.n else 0.0
    if residual > tol:
        raise RuntimeError(f"correlation solve residual {residual:.3e} exceeds {tol:g}")
    return CorrelationField(system, np.asarray(phi), residual)


def split_solution(system: CorrelationSystem):
    """Source part (zero boundary data) and boundary part (zero source)."""
    phi1 = solve_correlations(system.with_data(b=np.zeros_like(system.b)))
    phi2 = solve_correlations(system.with_data(F=np.zeros_like(system.F)))
    return phi1, phi2


# --- Monte Carlo over the absorbed walk ----------------------------------------

class _JumpSampler:
    """Vectorised sampling of the embedded jump chain from CSR rows."""

    def __init__(self, system: CorrelationSystem):
        R = system.rates.tocsr()
        self.indptr = R.indptr
        self.indices = R.indices
        self.cum = np.concatenate([[0.0], np.cumsum(R.data)])
        self.out = system.out_rates
        self.n = system.n

    def step(self, states, u):
        lo = self.indptr[states]
        hi = self.indptr[states + 1] - 1
        x = self.cum[lo] + u * self.out[states]
        pos = np.searchsorted(self.cum, x, side="right") - 1
        pos = np.clip(pos, lo, hi)
        return self.indices[pos]


def _start_index(system, start):
    idx = system.lookup(start)
    if isinstance(idx, tuple):
        return None, float(system.b[idx[1]])
    return idx, None


def mc_dual_walk(system: CorrelationSystem, start, n_samples: int, seed=None,
                 max_steps: int = 10_000_000):
    """Estimate ``phi(start)`` from ``n_samples`` absorbed walks.

    Each walk accumulates ``F`` times its holding times and adds the boundary
    value where it is absorbed.  Returns ``(estimate, stderr)``.
    """
    i0, bval = _start_index(system, start)
    if i0 is None:
        return bval, 0.0
    rng = np.random.default_rng(seed)
    jumps = _JumpSampler(system)
    n = system.n
    total = np.zeros(n_samples)
    cur = np.full(n_samples, i0, dtype=np.int64)
    alive = np.arange(n_samples)
    steps = 0
    F = system.F
    while alive.size:
        st = cur[alive]
        out = jumps.out[st]
        hold = rng.exponential(1.0, alive.size) / out
        total[alive] += F[st] * hold
        nxt = jumps.step(st, rng.random(alive.size))
        dead = nxt >= n
        total[alive[dead]] += system.b[nxt[dead] - n]
        cur[alive] = nxt
        alive = alive[~dead]
        steps += 1
        if steps > max_steps:
            raise RuntimeError("absorbed walk did not terminate")
    if n_samples < 2:
        return float(total.mean()), float("nan")
    return float(total.mean()), float(total.std(ddof=1) / np.sqrt(n_samples))


def _hitting_sets(system: CorrelationSystem):
    """Interior states in the left target set (second coordinate 0, first
    coordinate inside the block) and the cemeteries counted as escape."""
    target = np.array([k == 0 and j < 0 for _, j, k in system.states])
    escape = np.array([lab[0] in (SITE, RIGHT) for lab in system.boundary], dtype=bool)
    return target, escape


def hitting_probability_exact(system: CorrelationSystem) -> np.ndarray:
    """``P[hit target set before escape]`` for every interior start, by a
    linear solve with the target set made absorbing."""
    target, _ = _hitting_sets(system)
    n = system.n
    M, Rb = system.interior_matrix()
    M = M.tolil()
    rhs = np.zeros(n)
    for i in np.flatnonzero(target):
        M.rows[i] = [i]
        M.data[i] = [1.0]
        rhs[i] = 1.0
    # diagonal cemeteries sit behind the target set; they contribute zero
    return spla.spsolve(M.tocsc(), rhs)


def hitting_experiment(spec: DegreePreservingSpec, N: int, delta: float, n_samples: int,
                       seed=None, rho=None, max_starts: int = 12, system=None):
    """Probability that the correlation walk started at ``(1, j, k)`` with
    ``j > delta N`` reaches the left target set before being killed.

    Returns a list of rows ``{"j", "k", "estimate", "stderr", "exact"}``.
    """
    from .density import solve_finite_one_point

    if sum(spec.r) <= 0:
        raise ValueError("hitting experiment needs a positive reservoir rate")
    if system is None:
        if rho is None:
            rho = solve_finite_one_point(spec, N)
        system = assemble_system_model1(spec, N, rho)
    exact = hitting_probability_exact(system)
    target, escape = _hitting_sets(system)
    starts = [i for i, (s, j, k) in enumerate(system.states) if s == 1 and j > delta * N]
    if len(starts) > max_starts:
        # keep the starts closest to the left edge of the allowed region
        starts = sorted(starts, key=lambda i: (system.states[i][1], system.states[i][2]))
        near = starts[: max_starts // 2]
        rest = starts[max_starts // 2:]
        pick = np.linspace(0, len(rest) - 1, max_starts - len(near)).round().astype(int)
        starts = near + [rest[t] for t in pick]
    rng = np.random.default_rng(seed)
    jumps = _JumpSampler(system)
    n = system.n
    rows = []
    for i0 in starts:
        cur = np.full(n_samples, i0, dtype=np.int64)
        hit = np.zeros(n_samples, dtype=bool)
        alive = np.arange(n_samples)
        while alive.size:
            nxt = jumps.step(cur[alive], rng.random(alive.size))
            absorbed = nxt >= n
            in_target = np.zeros(alive.size, dtype=bool)
            in_target[~absorbed] = target[nxt[~absorbed]]
            hit[alive[in_target]] = True
            cur[alive] = nxt
            alive = alive[~(absorbed | in_target)]
        est = hit.mean()
        err = np.sqrt(max(est * (1 - est), 1.0 / n_samples) / n_samples)
        _, j, k = system.states[i0]
        rows.append({"j": int(j), "k": int(k), "estimate": float(est),
                     "stderr": float(err), "exact": float(exact[i0])})
    return rows


def max_bulk_correlation(field: CorrelationField, N: int, delta: float = 0.25) -> float:
    """``max |phi(1, j, k)|`` over interior pairs with ``j > delta N``."""
    vals = [abs(v) for (s, j, k), v in zip(field.system.states, field.values)
            if s == 1 and j > delta * N]
    return max(vals)
