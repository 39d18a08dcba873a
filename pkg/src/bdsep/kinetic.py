"""Forward simulation of the three boundary-driven models.

Every model is reduced to the same event structure: unit-rate stirring on a
run of bonds, a unit-rate right reservoir at the last site and a Markov chain
on a small left block (sites at positions ``0..bsz-1``) whose transition
rates depend on the block state only.  The kernel samples the total rate,
then the event class, then the site, and only recomputes the block state
when a block site changes.

The flip model can also be driven by an explicit :class:`MarkLog`, replaying
Poisson arrows and daggers exactly.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .core import Configuration, FlipBoundarySpec, ModelSpec
from .density import DensityProfile
from .rates import compose_spec

# mark kinds
ARROW, LPLUS, LMINUS, BRANCH, RPLUS, RMINUS = range(6)
MARK_NAMES = ("arrow", "left+", "left-", "branch", "right+", "right-")


# --- kernels ----------------------------------------------------------------------

@njit(cache=True)
def _seed(s):
    np.random.seed(s)


@njit(cache=True)
def _block_state(bits, bsz):
    u = 0
    for i in range(bsz):
        u |= np.int64(bits[i]) << i
    return u


@njit(cache=True)
def _set_site(bits, i, v, t, acc, last):
    acc[i] += bits[i] * (t - last[i])
    last[i] = t
    bits[i] = v


@njit(cache=True, nogil=True)
def _evolve(bits, horizon, bond_lo, beta, bsz, bq_cum, bq_out, acc,
            trace_t, trace_s, trace_cap):
    """Advance ``bits`` by ``horizon`` time units.

    ``acc`` receives the time integral of every occupation variable.  When
    ``trace_cap > 0`` each effective transition is logged as (time, encoded
    configuration).  Returns ``(n_events, n_traced)``.
    """
    n = bits.shape[0]
    nb = n - 1 - bond_lo
    last = np.zeros(n)
    u = _block_state(bits, bsz)
    nbs = 1 << bsz
    t = 0.0
    events = 0
    ntr = 0
    code = np.int64(0)
    if trace_cap > 0:
        for i in range(n):
            code |= np.int64(bits[i]) << i
    while True:
        total = nb + 1.0 + bq_out[u]
        t += np.random.exponential(1.0 / total)
        if t >= horizon:
            break
        events += 1
        x = np.random.random() * total
        changed = False
        if x < nb:
            i = bond_lo + int(x)
            if i > n - 2:
                i = n - 2
            if bits[i] != bits[i + 1]:
                a = bits[i]
                _set_site(bits, i, bits[i + 1], t, acc, last)
                _set_site(bits, i + 1, a, t, acc, last)
                changed = True
                if trace_cap > 0:
                    code ^= np.int64(3) << i
                if i < bsz:
                    u = _block_state(bits, bsz)
        elif x < nb + 1.0:
            v = 1 if np.random.random() < beta else 0
            if bits[n - 1] != v:
                _set_site(bits, n - 1, v, t, acc, last)
                changed = True
                if trace_cap > 0:
                    code ^= np.int64(1) << (n - 1)
                if n - 1 < bsz:
                    u = _block_state(bits, bsz)
        else:
            y = x - nb - 1.0
            lo = 0
            hi = nbs - 1
            while lo < hi:
                mid = (lo + hi) // 2
                if bq_cum[u, mid] > y:
                    hi = mid
                else:
                    lo = mid + 1
            target = lo
            diff = u ^ target
            for i in range(bsz):
                if (diff >> i) & 1:
                    _set_site(bits, i, (target >> i) & 1, t, acc, last)
            if trace_cap > 0:
                code ^= np.int64(diff)
            u = target
            changed = diff != 0
        if changed and trace_cap > 0 and ntr < trace_cap:
            trace_t[ntr] = t
            trace_s[ntr] = code
            ntr += 1
    for i in range(n):
        acc[i] += bits[i] * (horizon - last[i])
    return events, ntr


@njit(cache=True, nogil=True)
def _replay(bits, times, kinds, params, t_start, t_end, p, acc):
    """Apply marks (times within ``[t_start, t_end]``) to a flip-model
    configuration, integrating occupations into ``acc``."""
    n = bits.shape[0]
    last = np.full(n, t_start)
    for m in range(times.shape[0]):
        t = times[m]
        kind = kinds[m]
        if kind == 0:
            i = params[m]
            if bits[i] != bits[i + 1]:
                a = bits[i]
                _set_site(bits, i, bits[i + 1], t, acc, last)
                _set_site(bits, i + 1, a, t, acc, last)
        elif kind == 1:
            _set_site(bits, 0, 1, t, acc, last)
        elif kind == 2:
            _set_site(bits, 0, 0, t, acc, last)
        elif kind == 3:
            w = 0
            for i in range(p):
                w = (w << 1) | bits[i]
            if w == params[m]:
                _set_site(bits, 0, 1 - bits[0], t, acc, last)
        elif kind == 4:
            _set_site(bits, n - 1, 1, t, acc, last)
        else:
            _set_site(bits, n - 1, 0, t, acc, last)
    for i in range(n):
        acc[i] += bits[i] * (t_end - last[i])


# --- event structure of each model ------------------------------------------------

@dataclass
class EventClock:
    """Rates of the three event classes for a model.

    ``block_rates[u, t]`` is the rate of the block moving from state ``u`` to
    ``t`` (bit ``i`` = position ``i``); stirring runs over bonds
    ``bond_lo..n_sites-2``.
    """

    n_sites: int
    bond_lo: int
    beta: float
    block_rates: np.ndarray

    @property
    def block_size(self) -> int:
        return int(round(np.log2(self.block_rates.shape[0])))

    @property
    def block_out(self) -> np.ndarray:
        return self.block_rates.sum(axis=1)

    def total_rate(self, block_state: int) -> float:
        return (self.n_sites - 1 - self.bond_lo) + 1.0 + float(self.block_out[block_state])

    def kernel_args(self):
        return (self.bond_lo, float(self.beta), self.block_size,
                np.cumsum(self.block_rates, axis=1), self.block_out.copy())


def _flip_block(rates_by_state: np.ndarray, bsz: int) -> np.ndarray:
    Q = np.zeros((2 ** bsz, 2 ** bsz))
    u = np.arange(2 ** bsz)
    Q[u, u ^ 1] = rates_by_state
    return Q


def event_clock(spec: ModelSpec) -> EventClock:
    b = spec.boundary
    if spec.kind == 1:
        bsz = spec.p + 1
        table = np.asarray(compose_spec(b.as_float()), float)
        Q = np.zeros((2 ** bsz, 2 ** bsz))
        u = np.arange(2 ** bsz)
        for j in range(bsz):
            Q[u, u ^ (1 << j)] += table[j]
        return EventClock(spec.n_sites, 0, spec.beta, Q)
    if spec.kind == 2:
        return EventClock(spec.n_sites, 0, spec.beta, _flip_block(b.rates_by_bits(), spec.p))
    Q = b.ell * b.generator.copy()
    np.fill_diagonal(Q, 0.0)
    return EventClock(spec.n_sites, spec.p, spec.beta, Q)


# --- mark logs (flip model) ---------------------------------------------------------

@dataclass
class MarkLog:
    """Time-ordered Poisson marks of the graphical construction.

    ``params`` holds the bond's left position for arrows and the
    lexicographic window index ``a * P + xi`` for branching daggers.
    """

    times: np.ndarray
    kinds: np.ndarray
    params: np.ndarray
    t_start: float
    t_end: float

    def __len__(self):
        return len(self.times)


def mark_rates(spec: FlipBoundarySpec, N: int):
    """Rates of every Poisson process as ``(kinds, params, rates)`` arrays."""
    kinds = [ARROW] * (N - 2) + [LPLUS, LMINUS]
    params = list(range(N - 2)) + [0, 0]
    rates = [1.0] * (N - 2) + [spec.A, spec.B]
    lam = spec.marginal.ravel()
    for idx in range(2 * spec.P):
        kinds.append(BRANCH)
        params.append(idx)
        rates.append(float(lam[idx]))
    kinds += [RPLUS, RMINUS]
    params += [0, 0]
    rates += [spec.beta, 1.0 - spec.beta]
    return np.array(kinds, np.int8), np.array(params, np.int64), np.array(rates)


def generate_marks(spec: FlipBoundarySpec, N: int, t_start: float, t_end: float, rng) -> MarkLog:
    kinds, params, rates = mark_rates(spec, N)
    total = rates.sum()
    n = rng.poisson(total * (t_end - t_start))
    times = np.sort(rng.uniform(t_start, t_end, n))
    which = rng.choice(len(rates), size=n, p=rates / total)
    return MarkLog(times, kinds[which], params[which], t_start, t_end)


def replay_marks(spec: ModelSpec, eta0: Configuration, marks: MarkLog):
    """Configuration at ``marks.t_end`` obtained by applying the marks to
    ``eta0`` (taken at ``marks.t_start``); also returns occupation integrals."""
    if spec.kind != 2:
        raise ValueError("mark replay is defined for the flip model only")
    bits = np.array(eta0.bits, dtype=np.int64)
    acc = np.zeros(len(bits))
    _replay(bits, marks.times, marks.kinds.astype(np.int64), marks.params,
            marks.t_start, marks.t_end, spec.p, acc)
    return Configuration(bits.astype(np.uint8), eta0.lo), acc


# --- public simulation API --------------------------------------------------------------

@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    final: Configuration
    n_events: int


def _check_config(spec: ModelSpec, eta0) -> Configuration:
    if not isinstance(eta0, Configuration):
        eta0 = Configuration(eta0, spec.lo)
    if len(eta0) != spec.n_sites or eta0.lo != spec.lo:
        raise ValueError("initial configuration does not match the lattice")
    return eta0


def simulate(spec: ModelSpec, eta0, horizon: float, seed=None, trace: int = 0,
             marks: MarkLog | None = None):
    """Run the chain for ``horizon`` time units from ``eta0``.

    Returns the final configuration, or a :class:`Trajectory` when
    ``trace > 0`` (at most ``trace`` effective transitions are kept).  With
    ``marks`` given (flip model only) the supplied mark log is replayed and
    ``horizon`` is ignored.
    """
    eta0 = _check_config(spec, eta0)
    if marks is not None:
        return replay_marks(spec, eta0, marks)[0]
    clock = event_clock(spec)
    bits = np.array(eta0.bits, dtype=np.int64)
    _seed(_int_seed(seed))
    acc = np.zeros(len(bits))
    tt = np.zeros(max(trace, 1))
    ts = np.zeros(max(trace, 1), dtype=np.int64)
    events, ntr = _evolve(bits, float(horizon), *clock.kernel_args(), acc, tt, ts, trace)
    final = Configuration(bits.astype(np.uint8), spec.lo)
    if trace:
        return Trajectory(tt[:ntr].copy(), ts[:ntr].copy(), final, int(events))
    return final


def seed_sequence(seed) -> np.random.SeedSequence:
    """Accept ``None``, an int or an existing :class:`numpy.random.SeedSequence`."""
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def _int_seed(seed) -> int:
    return int(seed_sequence(seed).generate_state(1, dtype=np.uint32)[0])


@dataclass
class StationaryEstimate:
    sites: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    burn_in: float
    batches: int
    batch_len: float
    seed: object
    batch_means: np.ndarray | None = None
    final: Configuration | None = None

    def profile(self) -> DensityProfile:
        return DensityProfile(self.sites, self.mean, "finite_N")

    def __getitem__(self, k):
        return float(self.mean[list(self.sites).index(k)])

    def err(self, k):
        return float(self.stderr[list(self.sites).index(k)])


def estimate_density(spec: ModelSpec, N: int | None = None, burn_in: float | None = None,
                     batches: int = 50, batch_len: float | None = None, seed=None,
                     mode: str = "event", eta0=None) -> StationaryEstimate:
    """Time-averaged stationary densities with batch-means standard errors.

    ``mode="graphical"`` (flip model only) drives the chain with freshly
    generated Poisson marks instead of the event-driven kernel.
    """
    if N is not None and N != spec.N:
        spec = spec.with_N(N)
    N = spec.N
    if spec.kind == 1 and not spec.boundary.ergodic_left:
        warnings.warn("left block has no reservoir or anti-copy rates; the time "
                      "average may not represent a unique stationary state")
    burn_in = 10.0 * N * N if burn_in is None else float(burn_in)
    batch_len = float(N * N) if batch_len is None else float(batch_len)
    ss = seed_sequence(seed)
    if eta0 is None:
        eta0 = np.random.default_rng(ss.spawn(1)[0]).integers(0, 2, spec.n_sites)
    cfg = _check_config(spec, eta0)
    bits = np.array(cfg.bits, dtype=np.int64)
    means = np.zeros((batches, len(bits)))
    if mode == "event":
        clock = event_clock(spec)
        args = clock.kernel_args()
        _seed(_int_seed(ss))
        dummy_t, dummy_s = np.zeros(1), np.zeros(1, dtype=np.int64)
        acc = np.zeros(len(bits))
        _evolve(bits, burn_in, *args, acc, dummy_t, dummy_s, 0)
        for b in range(batches):
            acc[:] = 0.0
            _evolve(bits, batch_len, *args, acc, dummy_t, dummy_s, 0)
            means[b] = acc / batch_len
    elif mode == "graphical":
        if spec.kind != 2:
            raise ValueError("graphical mode is defined for the flip model only")
        rng = np.random.default_rng(ss)
        acc = np.zeros(len(bits))

        def run(length):
            marks = generate_marks(spec.boundary, N, 0.0, length, rng)
            acc[:] = 0.0
            _replay(bits, marks.times, marks.kinds.astype(np.int64), marks.params,
                    0.0, length, spec.p, acc)

        run(burn_in)
        for b in range(batches):
            run(batch_len)
            means[b] = acc / batch_len
    else:
        raise ValueError(f"unknown mode {mode!r}")
    mean = means.mean(axis=0)
    stderr = means.std(axis=0, ddof=1) / np.sqrt(batches)
    return StationaryEstimate(np.array(spec.sites), mean, stderr, burn_in, batches,
                              batch_len, seed, means, Configuration(bits.astype(np.uint8), spec.lo))


def profile_error(rho_hat, u_bar, G=None, N: int | None = None):
    """Weighted and L1 discrepancy between bulk densities and a macroscopic profile.

    ``rho_hat`` is a profile (or estimate) over sites including ``1..N-1``;
    ``u_bar`` is a macroscopic profile or a callable on ``[0, 1]``.  Returns
    ``(signed, l1)`` with ``signed = (1/N) sum_k G(k/N) [rho(k) - u(k/N)]``
    and ``l1 = (1/N) sum_k |rho(k) - u(k/N)|``.
    """
    if isinstance(rho_hat, StationaryEstimate):
        rho_hat = rho_hat.profile()
    sites = np.asarray(rho_hat.sites)
    vals = np.asarray(rho_hat.values, float)
    N = int(sites.max()) + 1 if N is None else N
    k = np.arange(1, N)
    rho = np.array([vals[np.flatnonzero(sites == i)[0]] for i in k])
    x = k / N
    if callable(u_bar):
        u = np.asarray(u_bar(x), float)
    else:
        u = np.interp(x, np.asarray(u_bar.sites, float), np.asarray(u_bar.values, float))
    g = np.ones_like(x) if G is None else np.asarray(G(x), float) * np.ones_like(x)
    diff = rho - u
    return float((g * diff).sum() / N), float(np.abs(diff).sum() / N)


# --- majority boundary ---------------------------------------------------------------

def majority_table(p: int) -> np.ndarray:
    """Flip rates (lexicographic over ``eta_1..eta_2p``) of the rule setting
    site 1 to ``1{sum_{j=2}^{2p} eta_j >= p}`` at rate one."""
    w = 2 * p
    rates = np.zeros(2 ** w)
    for idx in range(2 ** w):
        window = [(idx >> (w - 1 - i)) & 1 for i in range(w)]
        target = int(sum(window[1:]) >= p)
        rates[idx] = float(window[0] != target)
    return rates


@dataclass
class MajorityRun:
    times: np.ndarray
    site1: np.ndarray
    window_density: np.ndarray
    occupation_fraction: float


def majority_scenario(p: int, N: int, seed=None, horizon: float = 1000.0,
                      sample_dt: float = 1.0, beta: float = 0.5, eta0=None) -> MajorityRun:
    """Simulate the majority-rule left boundary and record left-density series.

    Exploratory: nothing is asserted about the long-run behaviour.
    """
    if 2 * p > N - 1:
        raise ValueError("majority window does not fit in the lattice")
    spec = ModelSpec(FlipBoundarySpec(majority_table(p), beta), N)
    clock = event_clock(spec)
    args = clock.kernel_args()
    ss = seed_sequence(seed)
    if eta0 is None:
        eta0 = np.random.default_rng(ss.spawn(1)[0]).integers(0, 2, spec.n_sites)
    bits = np.array(_check_config(spec, eta0).bits, dtype=np.int64)
    _seed(_int_seed(ss))
    n_samples = int(horizon / sample_dt)
    times = np.arange(1, n_samples + 1) * sample_dt
    site1 = np.zeros(n_samples)
    window = np.zeros(n_samples)
    acc = np.zeros(len(bits))
    occ1 = 0.0
    dummy_t, dummy_s = np.zeros(1), np.zeros(1, dtype=np.int64)
    for i in range(n_samples):
        acc[:] = 0.0
        _evolve(bits, sample_dt, *args, acc, dummy_t, dummy_s, 0)
        occ1 += acc[0]
        site1[i] = bits[0]
        window[i] = bits[: 2 * p].mean()
    return MajorityRun(times, site1, window, occ1 / (n_samples * sample_dt))


# --- bit-packed snapshots ----------------------------------------------------------------

SNAPSHOT_MAGIC = b"BDSS"


def write_snapshots(path, times, configs, n_sites: int) -> None:
    """Little-endian layout: magic ``BDSS``, uint32 version (1), uint32
    n_sites, uint32 n_snapshots, then per snapshot a float64 time followed by
    ``ceil(n_sites / 8)`` bytes of occupations packed LSB-first."""
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<III", 1, n_sites, len(times)))
        for t, cfg in zip(times, configs):
            bits = np.asarray(cfg.bits if isinstance(cfg, Configuration) else cfg, np.uint8)
            fh.write(struct.pack("<d", float(t)))
            fh.write(np.packbits(bits, bitorder="little").tobytes())


def read_snapshots(path):
    data = Path(path).read_bytes()
    if data[:4] != SNAPSHOT_MAGIC:
        raise ValueError("not a snapshot file")
    version, n_sites, count = struct.unpack_from("<III", data, 4)
    if version != 1:
        raise ValueError(f"unsupported snapshot version {version}")
    nbytes = (n_sites + 7) // 8
    off = 16
    times, configs = [], []
    for _ in range(count):
        (t,) = struct.unpack_from("<d", data, off)
        raw = np.frombuffer(data, np.uint8, nbytes, off + 8)
        configs.append(np.unpackbits(raw, bitorder="little")[:n_sites])
        times.append(t)
        off += 8 + nbytes
    return np.array(times), configs
