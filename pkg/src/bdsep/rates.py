"""Subset-coefficient analysis of Glauber rates on the left block.

A Glauber rate table is an array ``table[i, s]``: the flip rate of site
``-p + i`` when the block is in the bit-encoded state ``s``.  Subsets of the
block are encoded the same way (bit ``i`` set means site ``-p + i`` is in the
subset), so ``R[i, A]`` is the coefficient of the monomial ``prod_{k in A} eta_k``
in the expansion of ``c_{-p+i}``.

All routines accept float arrays or object arrays of ``fractions.Fraction``;
in the latter case every identity holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._graph import closed_classes
from .core import DegreePreservingSpec

FLOAT_TOL = 1e-12


class NegativityError(ValueError):
    """Degree-preserving rates that cannot be written with non-negative
    reservoir, copy and anti-copy parameters."""


class DegreeViolation(ValueError):
    def __init__(self, violations):
        self.violations = violations
        super().__init__(f"rates do not preserve degrees: {violations}")


def _n_sites(table) -> int:
    n = table.shape[0]
    if table.shape[1] != 2 ** n:
        raise ValueError(f"rate table of shape {table.shape} is not (p+1, 2**(p+1))")
    return n


def _is_exact(arr) -> bool:
    return np.asarray(arr).dtype == object


def block_bits(n: int) -> np.ndarray:
    """``(2**n, n)`` matrix of occupation variables of every block state."""
    s = np.arange(2 ** n)
    return ((s[:, None] >> np.arange(n)) & 1).astype(np.int64)


def subset_label(A: int, p: int) -> tuple[int, ...]:
    """Physical sites in the subset encoded by ``A``."""
    return tuple(-p + i for i in range(p + 1) if A >> i & 1)


def subset_coefficients(table) -> np.ndarray:
    """Moebius inversion ``R[k, A] = sum_{B <= A} (-1)^{|A - B|} c_k(1_B)``."""
    R = np.array(table, dtype=object if _is_exact(table) else float)
    n = _n_sites(R)
    for i in range(n):
        bit = 1 << i
        idx = np.flatnonzero(np.arange(2 ** n) & bit)
        R[:, idx] = R[:, idx] - R[:, idx ^ bit]
    return R


def reconstruct_table(R) -> np.ndarray:
    """Inverse of :func:`subset_coefficients`: ``c_k(eta) = sum_A R[k, A] Psi_A``."""
    c = np.array(R, dtype=object if _is_exact(R) else float)
    n = _n_sites(c)
    for i in range(n):
        bit = 1 << i
        idx = np.flatnonzero(np.arange(2 ** n) & bit)
        c[:, idx] = c[:, idx] + c[:, idx ^ bit]
    return c


def _tol(R) -> float:
    if _is_exact(R):
        return 0
    scale = max(1.0, float(np.max(np.abs(R)))) if R.size else 1.0
    return FLOAT_TOL * scale


def check_degree_preserving(R) -> list[tuple[int, tuple[int, ...]]]:
    """Offending ``(site, subset)`` pairs; empty iff the rates can be written as
    ``R_0 + R_j eta_j + sum_k R_k eta_k (1 - 2 eta_j)``."""
    n = _n_sites(np.asarray(R))
    p = n - 1
    tol = _tol(np.asarray(R))
    bad = []
    for j in range(n):
        jbit = 1 << j
        for A in range(2 ** n):
            others = A & ~jbit
            size = bin(others).count("1")
            if size >= 2:
                if abs(R[j, A]) > tol:
                    bad.append((-p + j, subset_label(A, p)))
            elif size == 1 and A & jbit:
                if abs(R[j, A] + 2 * R[j, others]) > tol:
                    bad.append((-p + j, subset_label(A, p)))
    return bad


def _clamp(x, tol):
    if x < 0 and -x <= tol:
        return 0 * x
    return x


def decompose_rates(R) -> DegreePreservingSpec:
    """Reservoir / copy / anti-copy parameters reproducing a degree-preserving
    Glauber table.  The returned spec carries the default right density."""
    R = np.asarray(R)
    bad = check_degree_preserving(R)
    if bad:
        raise DegreeViolation(bad)
    n = R.shape[0]
    exact = _is_exact(R)
    tol = _tol(R)
    zero = 0 if exact else 0.0
    dtype = object if exact else float
    r = np.full(n, zero, dtype=dtype)
    alpha = np.full(n, zero, dtype=dtype)
    c = np.full((n, n), zero, dtype=dtype)
    a = np.full((n, n), zero, dtype=dtype)
    for j in range(n):
        R0, Rjj = R[j, 0], R[j, 1 << j]
        pos = neg = zero
        for k in range(n):
            if k == j:
                continue
            Rk = R[j, 1 << k]
            if Rk >= 0:
                c[j, k] = Rk
                pos = pos + Rk
            else:
                a[j, k] = -Rk
                neg = neg + Rk
        pj = _clamp(R0 + Rjj - pos, tol)
        qj = _clamp(R0 + neg, tol)
        if pj < 0 or qj < 0:
            raise NegativityError(
                f"site {j - n + 1}: p_j = {pj}, q_j = {qj}; some rate is negative")
        r[j] = pj + qj
        if r[j] != 0:
            alpha[j] = qj / r[j]
    return DegreePreservingSpec(r, alpha, c, a)


def compose_spec(spec: DegreePreservingSpec) -> np.ndarray:
    """Glauber table ``c_j(eta)`` of the reservoir + copy + anti-copy dynamics."""
    n = spec.p + 1
    exact = any(_is_exact(x) for x in (spec.r, spec.alpha, spec.c, spec.a))
    eta = block_bits(n).astype(object if exact else float)
    hole = 1 - eta
    table = np.empty((n, 2 ** n), dtype=object if exact else float)
    for j in range(n):
        col = spec.r[j] * (spec.alpha[j] * hole[:, j] + (1 - spec.alpha[j]) * eta[:, j])
        disagree = eta[:, [j]] * hole + hole[:, [j]] * eta
        agree = eta[:, [j]] * eta + hole[:, [j]] * hole
        col = col + disagree @ spec.c[j] + agree @ spec.a[j]
        table[j] = col
    return table


def stirring_moves(n: int):
    """Yield ``(state, target)`` index arrays for nearest-neighbour exchanges
    inside a block of ``n`` sites."""
    s = np.arange(2 ** n)
    for i in range(n - 1):
        mask = (1 << i) | (1 << (i + 1))
        differ = ((s >> i) & 1) != ((s >> (i + 1)) & 1)
        yield s[differ], s[differ] ^ mask


def left_block_generator(spec: DegreePreservingSpec, stirring: bool = True) -> np.ndarray:
    """Dense generator of the isolated left chain on ``{0,1}^{block}``."""
    n = spec.p + 1
    table = np.asarray(compose_spec(spec.as_float()), dtype=float)
    Q = np.zeros((2 ** n, 2 ** n))
    s = np.arange(2 ** n)
    for j in range(n):
        Q[s, s ^ (1 << j)] += table[j]
    if stirring:
        for src, dst in stirring_moves(n):
            Q[src, dst] += 1.0
    np.fill_diagonal(Q, 0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


@dataclass
class ErgodicityClass:
    tag: str
    closed_classes: list[list[int]] = field(default_factory=list)
    tag_from_rates: str = ""

    @property
    def consistent(self) -> bool:
        return self.tag == self.tag_from_rates


def _rate_sum_tag(spec: DegreePreservingSpec) -> str:
    if sum(spec.r) + sum(spec.a.ravel()) > 0:
        return "unique_stationary"
    if sum(spec.c.ravel()) > 0:
        return "two_absorbing"
    return "other"


def classify_ergodicity(spec: DegreePreservingSpec) -> ErgodicityClass:
    """Classify the left chain by its closed communicating classes.

    The tag comes from the graph; the rate-sum criterion is reported next to
    it in ``tag_from_rates``.
    """
    n = spec.p + 1
    Q = left_block_generator(spec)
    classes = [c.tolist() for c in closed_classes(Q)]
    full = 2 ** n - 1
    if len(classes) == 1:
        tag = "unique_stationary"
    elif len(classes) == 2 and sorted(map(tuple, classes)) == [(0,), (full,)]:
        tag = "two_absorbing"
    else:
        tag = "other"
    return ErgodicityClass(tag, classes, _rate_sum_tag(spec))


# --- audits -------------------------------------------------------------------

def _frac(rng, den=12):
    from fractions import Fraction
    return Fraction(int(rng.integers(1, den + 1)), int(rng.integers(1, den + 1)))


def random_admissible_spec(rng, p: int, regime: str | None = None) -> DegreePreservingSpec:
    """Random exact spec in canonical form.

    Canonical means at most one of ``c[j, k]``, ``a[j, k]`` is nonzero for
    each pair and ``alpha[j] = 0`` whenever ``r[j] = 0``; these are exactly
    the specs that the decomposition returns.  ``regime`` is ``"ergodic"``,
    ``"copy_only"`` (no reservoir, no anti-copy) or ``"none"`` (no left
    rates at all); by default one is drawn at random.
    """
    from fractions import Fraction
    n = p + 1
    if regime is None:
        regime = rng.choice(["ergodic"] * 8 + ["copy_only", "none"])
    zero = Fraction(0)
    r = np.full(n, zero, dtype=object)
    alpha = np.full(n, zero, dtype=object)
    c = np.full((n, n), zero, dtype=object)
    a = np.full((n, n), zero, dtype=object)
    if regime == "none":
        return DegreePreservingSpec(r, alpha, c, a)
    for j in range(n):
        for k in range(n):
            if j == k:
                continue
            u = rng.random()
            if u < 0.4:
                c[j, k] = _frac(rng)
            elif u < 0.7 and regime == "ergodic":
                a[j, k] = _frac(rng)
    if regime == "copy_only" and not any(x > 0 for x in c.ravel()):
        c[0, 1] = _frac(rng)
    if regime == "ergodic":
        for j in range(n):
            if rng.random() < 0.6:
                r[j] = _frac(rng)
                alpha[j] = Fraction(int(rng.integers(0, 7)), 6)
        if not any(x > 0 for x in r) and not any(x > 0 for x in a.ravel()):
            r[0] = _frac(rng)
            alpha[0] = Fraction(1, 2)
    return DegreePreservingSpec(r, alpha, c, a)


def specs_equal(s1: DegreePreservingSpec, s2: DegreePreservingSpec) -> bool:
    return all(np.array_equal(np.asarray(x, dtype=object), np.asarray(y, dtype=object))
               for x, y in ((s1.r, s2.r), (s1.alpha, s2.alpha), (s1.c, s2.c), (s1.a, s2.a)))


def roundtrip_audit(rng, p: int):
    """One random canonical spec: ``(exact_roundtrip, classification_consistent, tag)``.

    The round trip goes spec -> table -> subset coefficients -> spec and
    back to the table, all in rational arithmetic.
    """
    spec = random_admissible_spec(rng, p)
    table = compose_spec(spec)
    back = decompose_rates(subset_coefficients(table))
    ok = specs_equal(spec, back) and np.array_equal(compose_spec(back), table)
    cls = classify_ergodicity(spec)
    return bool(ok), cls.consistent, cls.tag


def two_absorbing_check(p: int, trials: int = 5, seed: int = 0) -> bool:
    """Copy-only specs have exactly the all-zeros and all-ones states as
    closed classes."""
    rng = np.random.default_rng(seed)
    full = 2 ** (p + 1) - 1
    for _ in range(trials):
        cls = classify_ergodicity(random_admissible_spec(rng, p, "copy_only"))
        if cls.tag != "two_absorbing" or sorted(cls.closed_classes) != [[0], [full]]:
            return False
    return True
