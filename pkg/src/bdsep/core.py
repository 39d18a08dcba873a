"""Lattice geometry, configurations and model specifications.

Sites are addressed by their physical (signed) coordinate everywhere in the
public API.  Model 1 and model 3 live on ``{-p, ..., N-1}``; model 2 lives on
``{1, ..., N-1}`` and uses a window of ``p`` sites starting at site 1.

Exact engines encode a configuration as an unsigned integer where bit ``i``
holds the occupation of site ``lo + i`` (``lo`` the leftmost site).  The same
little-endian convention is used for left-block states: for a block
``{-p, ..., 0}`` bit ``i`` is site ``-p + i``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ModelError(ValueError):
    """Raised for malformed model specifications."""


@dataclass(frozen=True)
class LatticeGeometry:
    N: int
    p: int

    def __post_init__(self):
        if self.N < 3:
            raise ModelError(f"N must be >= 3, got {self.N}")
        if self.p < 1:
            raise ModelError(f"p must be >= 1, got {self.p}")

    @property
    def bulk(self) -> range:
        return range(1, self.N)

    @property
    def block(self) -> range:
        return range(-self.p, 1)

    @property
    def sites(self) -> range:
        return range(-self.p, self.N)

    @property
    def n_sites(self) -> int:
        return self.N + self.p


class Configuration:
    """Occupation variables over a contiguous range of sites.

    Immutable: every move returns a new configuration.
    """

    __slots__ = ("lo", "_bits")

    def __init__(self, bits, lo: int = 0):
        arr = np.array(bits, dtype=np.uint8)
        if arr.ndim != 1:
            raise ModelError("configuration must be one-dimensional")
        if np.any(arr > 1):
            raise ModelError("occupation variables must be 0 or 1")
        arr.setflags(write=False)
        self.lo = int(lo)
        self._bits = arr

    @classmethod
    def from_int(cls, code: int, n: int, lo: int = 0) -> Configuration:
        return cls([(code >> i) & 1 for i in range(n)], lo)

    @property
    def hi(self) -> int:
        return self.lo + len(self._bits) - 1

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    def to_int(self) -> int:
        return int(sum(int(b) << i for i, b in enumerate(self._bits)))

    def _pos(self, k: int) -> int:
        if not self.lo <= k <= self.hi:
            raise IndexError(f"site {k} outside [{self.lo}, {self.hi}]")
        return k - self.lo

    def __getitem__(self, k: int) -> int:
        return int(self._bits[self._pos(k)])

    def __len__(self):
        return len(self._bits)

    def __eq__(self, other):
        return (isinstance(other, Configuration) and self.lo == other.lo
                and np.array_equal(self._bits, other._bits))

    def __hash__(self):
        return hash((self.lo, self._bits.tobytes()))

    def __repr__(self):
        s = "".join(str(int(b)) for b in self._bits)
        return f"Configuration({s!r}, lo={self.lo})"

    def _replace(self, arr) -> Configuration:
        return Configuration(arr, self.lo)

    def particle_number(self) -> int:
        return int(self._bits.sum())


def apply_exchange(config: Configuration, k: int) -> Configuration:
    """Swap the occupations of sites ``k`` and ``k + 1``."""
    i, j = config._pos(k), config._pos(k + 1)
    arr = config.bits.copy()
    arr[i], arr[j] = arr[j], arr[i]
    return config._replace(arr)


def apply_flip(config: Configuration, k: int) -> Configuration:
    i = config._pos(k)
    arr = config.bits.copy()
    arr[i] = 1 - arr[i]
    return config._replace(arr)


def apply_set(config: Configuration, k: int, a: int) -> Configuration:
    if a not in (0, 1):
        raise ModelError(f"occupation must be 0 or 1, got {a}")
    i = config._pos(k)
    arr = config.bits.copy()
    arr[i] = a
    return config._replace(arr)


# --- boundary specifications -------------------------------------------------

def _check_beta(beta):
    if not 0.0 < beta < 1.0:
        raise ModelError(f"right density beta must lie in (0, 1), got {beta}")


@dataclass(frozen=True, eq=False)
class DegreePreservingSpec:
    """Left block ``{-p..0}`` with reservoir, copy and anti-copy mechanisms.

    Arrays are positional: entry ``i`` refers to site ``-p + i``.  Entries may
    be floats or ``fractions.Fraction`` (object arrays) for exact arithmetic.
    """

    r: np.ndarray
    alpha: np.ndarray
    c: np.ndarray
    a: np.ndarray
    beta: float = 0.5

    def __post_init__(self):
        r = _as_array(self.r)
        alpha = _as_array(self.alpha)
        c = _as_array(self.c)
        a = _as_array(self.a)
        n = len(r)
        if n < 2:
            raise ModelError("left block needs at least two sites (p >= 1)")
        if alpha.shape != (n,) or c.shape != (n, n) or a.shape != (n, n):
            raise ModelError("inconsistent shapes in degree-preserving spec")
        if any(x < 0 for x in r) or any(x < 0 for x in c.ravel()) or any(x < 0 for x in a.ravel()):
            raise ModelError("rates must be non-negative")
        if any(x < 0 or x > 1 for x in alpha):
            raise ModelError("reservoir densities must lie in [0, 1]")
        if any(c[i, i] != 0 or a[i, i] != 0 for i in range(n)):
            raise ModelError("copy and anti-copy rates must vanish on the diagonal")
        _check_beta(float(self.beta))
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "a", a)

    @property
    def p(self) -> int:
        return len(self.r) - 1

    @property
    def ergodic_left(self) -> bool:
        return bool(sum(self.r) + sum(self.a.ravel()) > 0)

    def as_float(self) -> DegreePreservingSpec:
        return DegreePreservingSpec(
            np.asarray(self.r, float), np.asarray(self.alpha, float),
            np.asarray(self.c, float), np.asarray(self.a, float), float(self.beta))

    def to_dict(self) -> dict:
        return {"model": "degree_preserving", "p": self.p, "beta": float(self.beta),
                "r": _tolist(self.r), "alpha": _tolist(self.alpha),
                "c": _tolist(self.c), "a": _tolist(self.a)}


def _as_array(x):
    arr = np.asarray(x)
    if arr.dtype == object:
        return arr
    return arr.astype(float)


def _tolist(arr):
    return np.asarray(arr, dtype=float).tolist()


def lex_to_bits(p: int) -> np.ndarray:
    """Permutation taking a bit-encoded window state to its lexicographic index.

    Bit ``i`` of the encoded state is site ``1 + i``; lexicographic order has
    site 1 as the most significant digit.
    """
    s = np.arange(2 ** p)
    out = np.zeros_like(s)
    for i in range(p):
        out |= ((s >> i) & 1) << (p - 1 - i)
    return out


@dataclass(frozen=True, eq=False)
class FlipBoundarySpec:
    """Flip rate of site 1 as a function of the window ``(eta_1, ..., eta_p)``.

    ``rates`` has length ``2**p`` in lexicographic order of the window
    (``eta_1`` most significant).
    """

    rates: np.ndarray
    beta: float = 0.5
    p: int = field(init=False)

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=float)
        p = int(round(np.log2(len(rates)))) if len(rates) else -1
        if p < 1 or 2 ** p != len(rates):
            raise ModelError("flip rate table must have length 2**p with p >= 1")
        if not np.all(np.isfinite(rates)) or np.any(rates < 0):
            raise ModelError("flip rates must be finite and non-negative")
        _check_beta(float(self.beta))
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "p", p)

    @property
    def P(self) -> int:
        return 2 ** (self.p - 1)

    def rate(self, a: int, xi: int) -> float:
        """Rate at window ``(a, xi)``; ``xi`` is the lexicographic index of
        ``(eta_2..eta_p)``."""
        return float(self.rates[a * self.P + xi])

    @property
    def A(self) -> float:
        return float(self.rates[: self.P].min())

    @property
    def B(self) -> float:
        return float(self.rates[self.P:].min())

    @property
    def marginal(self) -> np.ndarray:
        """``lambda(a, xi)`` as a ``(2, P)`` array."""
        lam = self.rates.reshape(2, self.P).copy()
        lam[0] -= self.A
        lam[1] -= self.B
        return lam

    @property
    def lam_total(self) -> float:
        return float(self.marginal.sum())

    @property
    def weak_dependence(self) -> bool:
        return (self.p - 1) * self.lam_total < self.A + self.B

    def rates_by_bits(self) -> np.ndarray:
        """Rate table indexed by bit-encoded window (bit i = site 1+i)."""
        return self.rates[lex_to_bits(self.p)]

    def to_dict(self) -> dict:
        return {"model": "flip", "p": self.p, "beta": float(self.beta),
                "rates": self.rates.tolist()}


@dataclass(frozen=True, eq=False)
class SpeededBoundarySpec:
    """Arbitrary irreducible chain on the left block, accelerated by ``ell``.

    ``generator`` is a ``2**(p+1)`` square rate matrix over bit-encoded block
    states (bit i = site -p+i).  The diagonal is recomputed from the rows.
    """

    generator: np.ndarray
    ell: float = 1.0
    beta: float = 0.5
    p: int = field(init=False)

    def __post_init__(self):
        Q = np.array(self.generator, dtype=float)
        n = Q.shape[0]
        p = int(round(np.log2(n))) - 1 if n else -1
        if Q.ndim != 2 or Q.shape != (n, n) or p < 1 or 2 ** (p + 1) != n:
            raise ModelError("generator must be square of size 2**(p+1), p >= 1")
        np.fill_diagonal(Q, 0.0)
        if not np.all(np.isfinite(Q)) or np.any(Q < 0):
            raise ModelError("off-diagonal rates must be finite and non-negative")
        np.fill_diagonal(Q, -Q.sum(axis=1))
        if self.ell < 1:
            raise ModelError("speed factor ell must be >= 1")
        _check_beta(float(self.beta))
        from scipy.sparse.csgraph import connected_components
        ncomp, _ = connected_components(Q != 0, directed=True, connection="strong")
        if ncomp != 1:
            raise ModelError("left-block chain is not irreducible")
        object.__setattr__(self, "generator", Q)
        object.__setattr__(self, "p", p)

    def with_ell(self, ell: float) -> SpeededBoundarySpec:
        return SpeededBoundarySpec(self.generator, ell, self.beta)

    def to_dict(self) -> dict:
        return {"model": "speeded", "p": self.p, "beta": float(self.beta),
                "ell": float(self.ell), "generator": self.generator.tolist()}


BoundarySpec = DegreePreservingSpec | FlipBoundarySpec | SpeededBoundarySpec


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A boundary specification together with the lattice size ``N``."""

    boundary: BoundarySpec
    N: int

    def __post_init__(self):
        if self.N < 3:
            raise ModelError(f"N must be >= 3, got {self.N}")
        if isinstance(self.boundary, FlipBoundarySpec) and self.boundary.p > self.N - 1:
            raise ModelError("flip window longer than the lattice")

    @property
    def kind(self) -> int:
        if isinstance(self.boundary, DegreePreservingSpec):
            return 1
        if isinstance(self.boundary, FlipBoundarySpec):
            return 2
        return 3

    @property
    def p(self) -> int:
        return self.boundary.p

    @property
    def beta(self) -> float:
        return float(self.boundary.beta)

    @property
    def lo(self) -> int:
        return 1 if self.kind == 2 else -self.p

    @property
    def n_sites(self) -> int:
        return self.N - 1 if self.kind == 2 else self.N + self.p

    @property
    def sites(self) -> range:
        return range(self.lo, self.N)

    def with_N(self, N: int) -> ModelSpec:
        return ModelSpec(self.boundary, N)

    def to_dict(self) -> dict:
        d = self.boundary.to_dict()
        d["N"] = self.N
        return d

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


# --- JSON loading --------------------------------------------------------------

def boundary_from_dict(d: dict) -> BoundarySpec:
    kind = d.get("model")
    beta = d.get("beta", 0.5)
    if kind == "degree_preserving":
        n = len(d["r"])
        c = d.get("c", np.zeros((n, n)))
        a = d.get("a", np.zeros((n, n)))
        return DegreePreservingSpec(d["r"], d["alpha"], c, a, beta)
    if kind == "flip":
        return FlipBoundarySpec(d["rates"], beta)
    if kind == "speeded":
        return SpeededBoundarySpec(d["generator"], d.get("ell", 1.0), beta)
    raise ModelError(f"unknown model kind {kind!r}")


def spec_from_dict(d: dict, N: int | None = None) -> ModelSpec:
    N = N if N is not None else d.get("N")
    if N is None:
        raise ModelError("lattice size N missing")
    return ModelSpec(boundary_from_dict(d), int(N))


def load_spec(path, N: int | None = None, ell: float | None = None) -> ModelSpec:
    d = json.loads(Path(path).read_text())
    if ell is not None:
        d["ell"] = ell
    return spec_from_dict(d, N)


# --- random specs (used by tests, demos and experiments) ------------------------

def random_degree_preserving(rng, p: int, beta=None, density=0.7, with_a=True,
                             with_r=True) -> DegreePreservingSpec:
    n = p + 1
    mask = rng.random((n, n)) < density
    c = rng.uniform(0, 1, (n, n)) * mask
    a = rng.uniform(0, 1, (n, n)) * (rng.random((n, n)) < density) if with_a else np.zeros((n, n))
    np.fill_diagonal(c, 0)
    np.fill_diagonal(a, 0)
    r = rng.uniform(0, 1.5, n) * (rng.random(n) < 0.7) if with_r else np.zeros(n)
    if with_r and r.sum() == 0:
        r[rng.integers(n)] = rng.uniform(0.5, 1.5)
    alpha = rng.uniform(0, 1, n)
    beta = rng.uniform(0.1, 0.9) if beta is None else beta
    return DegreePreservingSpec(r, alpha, c, a, beta)


def random_flip_spec(rng, p: int, A=None, B=None, lam_total=None, beta=None) -> FlipBoundarySpec:
    """Random flip table; with ``lam_total`` the marginal rates sum to it
    (for ``p = 1`` the marginal rates always vanish)."""
    P = 2 ** (p - 1)
    A = rng.uniform(0.3, 1.0) if A is None else A
    B = rng.uniform(0.3, 1.0) if B is None else B
    lam = rng.uniform(0, 1, (2, P))
    lam[0, rng.integers(P)] = 0.0
    lam[1, rng.integers(P)] = 0.0
    if lam_total is not None and lam.sum() > 0:
        lam *= lam_total / lam.sum()
    rates = lam.copy()
    rates[0] += A
    rates[1] += B
    beta = rng.uniform(0.1, 0.9) if beta is None else beta
    return FlipBoundarySpec(rates.ravel(), beta)


def random_speeded_spec(rng, p: int, ell=1.0, beta=None, density=0.5) -> SpeededBoundarySpec:
    n = 2 ** (p + 1)
    while True:
        Q = rng.uniform(0, 1, (n, n)) * (rng.random((n, n)) < density)
        np.fill_diagonal(Q, 0)
        try:
            return SpeededBoundarySpec(Q, ell, rng.uniform(0.1, 0.9) if beta is None else beta)
        except ModelError:
            continue
