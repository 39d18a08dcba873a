from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bdsep.core import DegreePreservingSpec
from bdsep.rates import (DegreeViolation, NegativityError, check_degree_preserving,
                         classify_ergodicity, compose_spec, decompose_rates, random_admissible_spec,
                         reconstruct_table, roundtrip_audit, specs_equal, subset_coefficients,
                         two_absorbing_check)


def _spec(r, alpha, c, a, beta=0.5):
    return DegreePreservingSpec(np.array(r, object), np.array(alpha, object),
                                np.array(c, object), np.array(a, object), beta)


def test_subset_coefficients_small_block():
    # p = 1, only a copy from site 0 onto site -1 at rate 1:
    # c_{-1}(eta) = eta_0 (1 - 2 eta_{-1}) + eta_{-1}  (disagreement indicator)
    s = _spec([F(0), F(0)], [F(0), F(0)], [[F(0), F(1)], [F(0), F(0)]], [[F(0), F(0)], [F(0), F(0)]])
    R = subset_coefficients(compose_spec(s))
    # columns: {}, {-1}, {0}, {-1, 0}
    assert list(R[0]) == [0, 1, 1, -2]
    assert list(R[1]) == [0, 0, 0, 0]


def test_constant_rate_is_a_reservoir():
    table = np.array([[F(3, 2)] * 4, [F(3, 2)] * 4], dtype=object)
    spec = decompose_rates(subset_coefficients(table))
    assert list(spec.r) == [3, 3]
    assert list(spec.alpha) == [F(1, 2), F(1, 2)]
    assert not spec.c.any() and not spec.a.any()


def test_reconstruct_inverts_moebius(rng):
    T = rng.uniform(0, 1, (3, 8))
    assert np.allclose(reconstruct_table(subset_coefficients(T)), T)


def test_degree_violation_reports_sites():
    # site -2 rate depends on eta_{-1} eta_0 jointly
    table = np.zeros((3, 8))
    table[0, 0b110] = 1.0
    table[0, 0b111] = 1.0
    R = subset_coefficients(table)
    bad = check_degree_preserving(R)
    assert bad and all(site == -2 for site, _ in bad)
    with pytest.raises(DegreeViolation):
        decompose_rates(R)


def test_negative_rate_detected():
    # c_{-1} = eta_0 (1 - 2 eta_{-1}) is degree preserving but needs a
    # negative reservoir rate (it is -1 on the all-ones block)
    table = np.array([[F(0), F(0), F(1), F(-1)], [F(0)] * 4], dtype=object)
    with pytest.raises(NegativityError):
        decompose_rates(subset_coefficients(table))


def test_zero_reservoir_gives_zero_alpha():
    s = _spec([F(0), F(1)], [F(0), F(1, 4)], [[F(0), F(1)], [F(0), F(0)]], [[F(0)] * 2] * 2)
    back = decompose_rates(subset_coefficients(compose_spec(s)))
    assert back.r[0] == 0 and back.alpha[0] == 0


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3))
def test_roundtrip_property(seed, p):
    rng = np.random.default_rng(seed)
    exact_ok, consistent, tag = roundtrip_audit(rng, p)
    assert exact_ok and consistent


@given(st.integers(0, 2 ** 32 - 1))
def test_decomposition_canonical(seed):
    rng = np.random.default_rng(seed)
    s = random_admissible_spec(rng, 2)
    back = decompose_rates(subset_coefficients(compose_spec(s)))
    assert np.array_equal(compose_spec(back), compose_spec(s))
    # copy and anti-copy on the same ordered pair never coexist
    assert all(back.c[i, j] == 0 or back.a[i, j] == 0 for i in range(3) for j in range(3))
    assert specs_equal(back, decompose_rates(subset_coefficients(compose_spec(back))))


def test_classification_regimes(rng):
    for regime, tag in (("ergodic", "unique_stationary"), ("copy_only", "two_absorbing")):
        cls = classify_ergodicity(random_admissible_spec(rng, 2, regime))
        assert cls.tag == tag and cls.consistent
    cls = classify_ergodicity(random_admissible_spec(rng, 2, "copy_only"))
    assert sorted(map(tuple, cls.closed_classes)) == [(0,), (7,)]


def test_two_absorbing_check():
    assert two_absorbing_check(2)


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3))
def test_decomposition_is_nonnegative(seed, p):
    rng = np.random.default_rng(seed)
    s = random_admissible_spec(rng, p)
    back = decompose_rates(subset_coefficients(compose_spec(s)))
    assert all(x >= 0 for x in back.r) and all(0 <= x <= 1 for x in back.alpha)
    assert all(x >= 0 for x in back.c.ravel()) and all(x >= 0 for x in back.a.ravel())


def test_pure_reservoir_table():
    # r_0 = 1, alpha_0 = beta: creation at rate beta, removal at rate 1 - beta
    beta = F(3, 10)
    s = _spec([F(0), F(1)], [F(0), beta], [[F(0)] * 2] * 2, [[F(0)] * 2] * 2)
    table = compose_spec(s)
    eta0 = (np.arange(4) >> 1) & 1
    assert list(table[1]) == [beta if e == 0 else 1 - beta for e in eta0]
    assert list(table[0]) == [0, 0, 0, 0]
