"""Backward revealment process for the flip model and perfect sampling of ``eta_1(0)``.

The dual set starts as ``{1}`` at backward time 0.  Going back in time,
arrows move its members, ``+``/``-`` daggers at site 1 and right daggers at
``N - 1`` remove the site they hit, and branching daggers at site 1 add the
window ``{1..p}``.  Marks are drawn lazily: only the Poisson processes that
can touch the current set are sampled, which is exact by the memoryless
property.  With ``full_marks=True`` every mark on the lattice is drawn
instead, which is what the forward-replay oracle needs.

Sites are physical (``1..N-1``); mark parameters use 0-based positions as in
:mod:`bdsep.kinetic` (arrow ``b`` is the bond between sites ``b+1`` and
``b+2``).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .core import Configuration, FlipBoundarySpec, ModelSpec
from .kinetic import ARROW, BRANCH, LMINUS, LPLUS, RMINUS, RPLUS, MarkLog, _int_seed, _replay, _seed
from .fitting import fit_power_law

EVENT_CAP = 10 ** 7
UNKNOWN = 2


class CapExceeded(RuntimeError):
    pass


class IncompleteReveal(AssertionError):
    pass


# --- kernels --------------------------------------------------------------------------

@njit(cache=True)
def _push(times, kinds, params, nm, t, k, prm):
    if nm == times.shape[0]:
        n2 = 2 * nm
        t2 = np.empty(n2)
        k2 = np.empty(n2, np.int8)
        p2 = np.empty(n2, np.int64)
        t2[:nm] = times
        k2[:nm] = kinds
        p2[:nm] = params
        times, kinds, params = t2, k2, p2
    times[nm] = t
    kinds[nm] = k
    params[nm] = prm
    return times, kinds, params


@njit(cache=True)
def _reveal(N, p, AB, a_frac, lam_cum, lam_tot, beta, full, cap, keep_marks):
    L = N - 1
    in_a = np.zeros(L + 2, np.bool_)
    members = np.empty(L + 1, np.int64)
    where = np.full(L + 2, -1, np.int64)
    members[0] = 1
    where[1] = 0
    in_a[1] = True
    size = 1
    times = np.empty(64)
    kinds = np.empty(64, np.int8)
    params = np.empty(64, np.int64)
    nm = 0
    s = 0.0
    created = 0
    maxsite = 1
    events = 0
    n_lam = lam_cum.shape[0]
    while size > 0:
        events += 1
        if events > cap:
            return 1, s, created, maxsite, nm, times, kinds, params
        if full:
            total = (L - 1) + AB + lam_tot + 1.0
        else:
            total = 2.0 * size + (1.0 if in_a[L] else 0.0)
            if in_a[1]:
                total += AB + lam_tot
        s += np.random.exponential(1.0 / total)
        x = np.random.random() * total
        kind = -1
        prm = 0
        if full:
            if x < L - 1:
                b = int(x)
                if b > L - 2:
                    b = L - 2
                kind = 0
                prm = b
            else:
                x -= L - 1
                if x < AB:
                    kind = 1 if np.random.random() < a_frac else 2
                elif x < AB + lam_tot:
                    kind = 3
                else:
                    kind = 4 if np.random.random() < beta else 5
        else:
            if x < 2.0 * size:
                m = int(x / 2.0)
                if m >= size:
                    m = size - 1
                i = members[m]
                j = i - 1 if x - 2.0 * m < 1.0 else i + 1
                if j < 1 or j > L:
                    continue
                if in_a[j] and np.random.random() < 0.5:
                    continue
                kind = 0
                prm = min(i, j) - 1
            else:
                x -= 2.0 * size
                if in_a[1] and x < AB:
                    kind = 1 if np.random.random() < a_frac else 2
                elif in_a[1] and x < AB + lam_tot:
                    kind = 3
                else:
                    kind = 4 if np.random.random() < beta else 5
        if kind == 3:
            y = np.random.random() * lam_cum[n_lam - 1]
            idx = 0
            while idx < n_lam - 1 and lam_cum[idx] <= y:
                idx += 1
            prm = idx
        # apply the mark to the dual set
        if kind == 0:
            i = prm + 1
            j = i + 1
            if in_a[i] != in_a[j]:
                src = i if in_a[i] else j
                dst = j if in_a[i] else i
                k = where[src]
                members[k] = dst
                where[dst] = k
                where[src] = -1
                in_a[src] = False
                in_a[dst] = True
                if dst > maxsite:
                    maxsite = dst
        elif kind == 1 or kind == 2 or kind == 4 or kind == 5:
            site = 1 if kind <= 2 else L
            if in_a[site]:
                k = where[site]
                last = members[size - 1]
                members[k] = last
                where[last] = k
                where[site] = -1
                in_a[site] = False
                size -= 1
        else:
            if in_a[1]:
                top = p if p < L else L
                for site in range(2, top + 1):
                    if not in_a[site]:
                        in_a[site] = True
                        members[size] = site
                        where[site] = size
                        size += 1
                        created += 1
                        if site > maxsite:
                            maxsite = site
        if keep_marks:
            times, kinds, params = _push(times, kinds, params, nm, -s, kind, prm)
            nm += 1
    return 0, s, created, maxsite, nm, times, kinds, params


@njit(cache=True)
def _zeta(L, p, kinds, params):
    """Three-valued forward reconstruction over marks in forward order.

    A branching dagger ``(a, xi)`` sets site 1 to ``1 - a`` when the rest of
    the window is known and equals ``xi``; leaves it alone when a known
    window bit contradicts ``xi`` or site 1 already holds ``1 - a``; and
    otherwise marks site 1 unknown.  Known values are therefore always
    correct.
    """
    z = np.full(L, UNKNOWN, np.int8)
    for m in range(kinds.shape[0]):
        k = kinds[m]
        if k == 0:
            b = params[m]
            tmp = z[b]
            z[b] = z[b + 1]
            z[b + 1] = tmp
        elif k == 1:
            z[0] = 1
        elif k == 2:
            z[0] = 0
        elif k == 4:
            z[L - 1] = 1
        elif k == 5:
            z[L - 1] = 0
        else:
            idx = params[m]
            a = (idx >> (p - 1)) & 1
            mismatch = False
            unknown = False
            for i in range(1, p):
                bit = (idx >> (p - 1 - i)) & 1
                if z[i] == UNKNOWN:
                    unknown = True
                elif z[i] != bit:
                    mismatch = True
            if mismatch:
                continue
            if not unknown:
                z[0] = 1 - a
            elif z[0] != 1 - a:
                z[0] = UNKNOWN
    return z


# --- data types -------------------------------------------------------------------------

@dataclass
class DualState:
    sites: frozenset
    time: float
    created: int
    max_site: int


@dataclass
class RevealmentRecord:
    """Marks that touched the dual set (or all marks) on ``[-T, 0]``."""

    N: int
    p: int
    marks: MarkLog
    T: float
    created: int
    max_site: int
    full: bool = False
    value: int | None = None

    @property
    def n_marks(self) -> int:
        return len(self.marks)


def _lam_cum(spec: FlipBoundarySpec) -> np.ndarray:
    return np.cumsum(spec.marginal.ravel())


def _kernel_args(spec: FlipBoundarySpec, N: int):
    if spec.p > N - 1:
        raise ValueError("window larger than the lattice")
    AB = spec.A + spec.B
    a_frac = spec.A / AB if AB > 0 else 0.0
    return N, spec.p, AB, a_frac, _lam_cum(spec), spec.lam_total, spec.beta


def _boundary(spec) -> FlipBoundarySpec:
    if isinstance(spec, ModelSpec):
        spec = spec.boundary
    if not isinstance(spec, FlipBoundarySpec):
        raise TypeError("the revealment process is defined for the flip model")
    return spec


def _one(args, full, cap, keep):
    status, T, created, maxsite, nm, times, kinds, params = _reveal(*args, full, cap, keep)
    if status:
        raise CapExceeded(f"revealment exceeded {cap} events")
    return T, created, maxsite, times[:nm][::-1].copy(), kinds[:nm][::-1].copy(), params[:nm][::-1].copy()


def run_revealment(spec, N: int, seed=None, full_marks: bool = False,
                   cap: int | None = None):
    """Run the dual from ``{1}`` until it empties.

    Returns ``(DualState, RevealmentRecord)``; the record's marks are in
    forward time order on ``[-T, 0]`` and its value is filled in by
    :func:`reconstruct_value`.
    """
    spec = _boundary(spec)
    if cap is None:
        cap = EVENT_CAP if not spec.weak_dependence else 10 ** 9
    _seed(_int_seed(seed))
    T, created, maxsite, t, k, prm = _one(_kernel_args(spec, N), full_marks, cap, True)
    rec = RevealmentRecord(N, spec.p, MarkLog(t, k, prm, -T, 0.0), T, int(created),
                           int(maxsite), full_marks)
    rec.value = reconstruct_value(rec)
    return DualState(frozenset(), T, int(created), int(maxsite)), rec


def reconstruct_value(record: RevealmentRecord) -> int:
    """``eta_1(0)`` recovered from the record's marks alone."""
    z = _zeta(record.N - 1, record.p, record.marks.kinds.astype(np.int64), record.marks.params)
    if z[0] == UNKNOWN:
        raise IncompleteReveal("site 1 is still unknown at time 0")
    return int(z[0])


def forward_replay(spec, record: RevealmentRecord, eta0) -> int:
    """``eta_1(0)`` obtained by running the graphical construction forward
    over ``[-T, 0]`` from ``eta0``; needs a full-marks record."""
    if not record.full:
        raise ValueError("forward replay needs a record with full marks")
    spec = _boundary(spec)
    bits = np.array(eta0.bits if isinstance(eta0, Configuration) else eta0, dtype=np.int64)
    acc = np.zeros(len(bits))
    m = record.marks
    _replay(bits, m.times, m.kinds.astype(np.int64), m.params, m.t_start, 0.0, spec.p, acc)
    return int(bits[0])


# --- estimators ---------------------------------------------------------------------------

@dataclass
class AlphaEstimate:
    mean: float
    stderr: float
    n_samples: int
    n_capped: int = 0


def perfect_sample_alpha(spec, N: int, n_samples: int, seed=None, cap: int | None = None
                         ) -> AlphaEstimate:
    """Mean of ``n_samples`` independent perfect samples of ``eta_1`` under
    the stationary law on ``{1..N-1}``."""
    spec = _boundary(spec)
    cap = cap or (EVENT_CAP if not spec.weak_dependence else 10 ** 9)
    args = _kernel_args(spec, N)
    _seed(_int_seed(seed))
    vals = []
    capped = 0
    for _ in range(n_samples):
        try:
            _, _, _, _, k, prm = _one(args, False, cap, True)
        except CapExceeded:
            capped += 1
            continue
        z = _zeta(N - 1, spec.p, k.astype(np.int64), prm)
        if z[0] == UNKNOWN:
            raise IncompleteReveal("site 1 is still unknown at time 0")
        vals.append(int(z[0]))
    v = np.asarray(vals, float)
    m = float(v.mean())
    return AlphaEstimate(m, float(np.sqrt(max(m * (1 - m), 1e-300) / len(v))), len(v), capped)


def created_bound(spec: FlipBoundarySpec) -> float:
    """Upper bound on the mean number of sites added before extinction."""
    spec = _boundary(spec)
    lam = spec.lam_total
    den = spec.A + spec.B - (spec.p - 1) * lam
    if den <= 0:
        return float("inf")
    return (spec.p - 1) * lam / den


@dataclass
class DualStatistics:
    created_mean: float
    created_stderr: float
    bound: float
    t_grid: np.ndarray
    survival: np.ndarray
    ells: np.ndarray
    range_tail: np.ndarray
    range_stderr: np.ndarray
    range_slope: float | None
    T: np.ndarray = field(repr=False)
    created: np.ndarray = field(repr=False)
    max_site: np.ndarray = field(repr=False)

    def as_dict(self) -> dict:
        return {
            "created_mean": self.created_mean, "created_stderr": self.created_stderr,
            "bound": self.bound, "t_grid": self.t_grid.tolist(),
            "survival": self.survival.tolist(), "ells": self.ells.tolist(),
            "range_tail": self.range_tail.tolist(), "range_stderr": self.range_stderr.tolist(),
            "range_slope": self.range_slope,
        }


def dual_statistics(spec, N: int, n_samples: int, seed=None, ells=(8, 16, 32, 64),
                    t_grid=None, cap: int | None = None) -> DualStatistics:
    spec = _boundary(spec)
    cap = cap or (EVENT_CAP if not spec.weak_dependence else 10 ** 9)
    args = _kernel_args(spec, N)
    _seed(_int_seed(seed))
    T = np.empty(n_samples)
    C = np.empty(n_samples)
    M = np.empty(n_samples)
    for i in range(n_samples):
        status, t, c, m, *_ = _reveal(*args, False, cap, False)
        if status:
            raise CapExceeded(f"revealment exceeded {cap} events")
        T[i], C[i], M[i] = t, c, m
    if t_grid is None:
        t_grid = np.geomspace(0.1, max(T.max(), 1.0), 25)
    t_grid = np.asarray(t_grid, float)
    surv = np.array([(T > t).mean() for t in t_grid])
    ells = np.asarray(ells)
    tail = np.array([(M >= l).mean() for l in ells])
    tail_se = np.sqrt(tail * (1 - tail) / n_samples)
    slope = None
    if np.all(tail > 0) and len(ells) >= 3:
        slope = fit_power_law(list(zip(ells, tail))).slope
    return DualStatistics(float(C.mean()), float(C.std(ddof=1) / np.sqrt(n_samples)),
                          created_bound(spec), t_grid, surv, ells.astype(float), tail,
                          tail_se, slope, T, C, M)


# --- coupling of two lattice sizes --------------------------------------------------------

@dataclass
class CouplingResult:
    N: int
    M: int
    reach: float
    reach_stderr: float
    reach_M: float
    mismatch: float
    inclusion_violations: int
    n_samples: int
    rho_N: float | None = None
    rho_M: float | None = None

    @property
    def exact_gap(self):
        if self.rho_N is None:
            return None
        return abs(self.rho_N - self.rho_M)

    def bound_holds(self, k: float = 3.0):
        return self.exact_gap <= self.reach + k * self.reach_stderr


def _coupled_sample(spec: FlipBoundarySpec, N: int, M: int, rng):
    """Shared marks on ``{1..M-1}`` plus independent right daggers at ``N-1``.

    Returns ``(value_N, value_M, reach_N, reach_M)``.
    """
    AB = spec.A + spec.B
    lam = spec.marginal.ravel()
    lam_tot = lam.sum()
    n_arrows = M - 2
    total = n_arrows + AB + lam_tot + 2.0
    sets = {"N": {1}, "M": {1}}
    last = {"N": N - 1, "M": M - 1}
    reach = {"N": False, "M": False}
    marks = {"N": [], "M": []}
    s = 0.0
    while sets["N"] or sets["M"]:
        s += rng.exponential(1.0 / total)
        x = rng.random() * total
        if x < n_arrows:
            b = min(int(x), n_arrows - 1)
            for key in ("N", "M"):
                if b + 2 > last[key]:
                    continue
                marks[key].append((-s, ARROW, b))
                A = sets[key]
                i, j = b + 1, b + 2
                if (i in A) != (j in A):
                    A ^= {i, j}
        elif x - n_arrows < AB:
            kind = LPLUS if rng.random() < spec.A / AB else LMINUS
            for key in ("N", "M"):
                marks[key].append((-s, kind, 0))
                sets[key].discard(1)
        elif x - n_arrows < AB + lam_tot:
            idx = int(rng.choice(len(lam), p=lam / lam_tot))
            for key in ("N", "M"):
                marks[key].append((-s, BRANCH, idx))
                if 1 in sets[key]:
                    sets[key] |= set(range(1, min(spec.p, last[key]) + 1))
        else:
            key = "N" if x - n_arrows < AB + lam_tot + 1.0 else "M"
            kind = RPLUS if rng.random() < spec.beta else RMINUS
            marks[key].append((-s, kind, 0))
            sets[key].discard(last[key])
        for key in ("N", "M"):
            if last[key] in sets[key]:
                reach[key] = True
    vals = {}
    for key, n in (("N", N), ("M", M)):
        rec = marks[key][::-1]
        kinds = np.array([r[1] for r in rec], np.int64)
        params = np.array([r[2] for r in rec], np.int64)
        z = _zeta(n - 1, spec.p, kinds, params)
        if z[0] == UNKNOWN:
            raise IncompleteReveal("site 1 is still unknown at time 0")
        vals[key] = int(z[0])
    return vals["N"], vals["M"], reach["N"], reach["M"]


def coupling_experiment(spec, N: int, M: int, n_samples: int, seed=None,
                        exact: bool = True) -> CouplingResult:
    """Couple the duals on two lattice sizes through shared marks.

    Reports the frequency with which the smaller system's dual reaches its
    last site, the frequency of disagreement of the reconstructed values
    (each disagreement must come with a reach), and optionally the exact
    densities at site 1 for comparison.
    """
    spec = _boundary(spec)
    if M < N:
        raise ValueError("need M >= N")
    rng = np.random.default_rng(seed)
    reach_n = reach_m = mism = viol = 0
    if M > N:
        for _ in range(n_samples):
            vn, vm, rn, rm = _coupled_sample(spec, N, M, rng)
            reach_n += rn
            reach_m += rm
            mism += vn != vm
            viol += (vn != vm) and not rn
    P = reach_n / n_samples
    res = CouplingResult(N, M, P, float(np.sqrt(P * (1 - P) / n_samples)),
                         reach_m / n_samples, mism / n_samples, viol, n_samples)
    if exact:
        from .exact import observable_density, solve_exact
        res.rho_N = observable_density(solve_exact(ModelSpec(spec, N)))[1]
        res.rho_M = observable_density(solve_exact(ModelSpec(spec, M)))[1]
    return res


# --- binary record format ----------------------------------------------------------------

RECORD_MAGIC = b"BDRV"
MARK_DTYPE = np.dtype([("time", "<f8"), ("kind", "u1"), ("param", "<i4")])


def write_records(path, records) -> None:
    """Little-endian layout: magic ``BDRV``, uint32 version (1), uint32 count;
    then per record uint32 N, uint32 p, uint8 full, int8 value (-1 if
    unset), float64 T, uint32 n_marks, and ``n_marks`` packed marks of
    (float64 time, uint8 kind, int32 param)."""
    with open(path, "wb") as fh:
        fh.write(RECORD_MAGIC)
        fh.write(struct.pack("<II", 1, len(records)))
        for r in records:
            v = -1 if r.value is None else r.value
            fh.write(struct.pack("<IIBbdI", r.N, r.p, int(r.full), v, r.T, len(r.marks)))
            arr = np.empty(len(r.marks), MARK_DTYPE)
            arr["time"], arr["kind"], arr["param"] = r.marks.times, r.marks.kinds, r.marks.params
            fh.write(arr.tobytes())


def read_records(path) -> list[RevealmentRecord]:
    data = Path(path).read_bytes()
    if data[:4] != RECORD_MAGIC:
        raise ValueError("not a revealment record file")
    version, count = struct.unpack_from("<II", data, 4)
    if version != 1:
        raise ValueError(f"unsupported record version {version}")
    off = 12
    head = struct.Struct("<IIBbdI")
    out = []
    for _ in range(count):
        N, p, full, v, T, n = head.unpack_from(data, off)
        off += head.size
        arr = np.frombuffer(data, MARK_DTYPE, n, off)
        off += n * MARK_DTYPE.itemsize
        marks = MarkLog(arr["time"].astype(float), arr["kind"].astype(np.int8),
                        arr["param"].astype(np.int64), -T, 0.0)
        out.append(RevealmentRecord(N, p, marks, T, 0, 0, bool(full), None if v < 0 else v))
    return out
