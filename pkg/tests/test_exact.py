import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from bdsep.core import (DegreePreservingSpec, ModelSpec,
                        random_degree_preserving, random_flip_spec, random_speeded_spec)
from bdsep.exact import (Reducible, StateSpaceTooLarge, build_generator, observable_correlation,
                         observable_density, solve_exact, stationary_distribution)


def test_two_state_chain():
    a, b = 0.3, 1.7
    Q = np.array([[-a, a], [b, -b]])
    mu = stationary_distribution(sp.csr_matrix(Q))
    assert np.allclose(mu.weights, [b / (a + b), a / (a + b)], atol=1e-14)


def test_reducible_reported():
    Q = sp.csr_matrix(np.zeros((3, 3)))
    with pytest.raises(Reducible):
        stationary_distribution(Q)


def test_state_space_cap():
    spec = ModelSpec(random_degree_preserving(np.random.default_rng(0), 2), 21)
    with pytest.raises(StateSpaceTooLarge):
        build_generator(spec)


def test_small_generator_by_hand():
    # p = 1, N = 3: sites -1, 0, 1, 2; single reservoir at site -1 only
    spec = ModelSpec(DegreePreservingSpec([2.0, 0.0], [0.25, 0.0], np.zeros((2, 2)),
                                          np.zeros((2, 2)), 0.6), 3)
    Q = build_generator(spec).Q.toarray()
    # from the empty state: creation at -1 at rate r*alpha = 0.5, right reservoir
    # creation at site 2 at rate beta = 0.6, nothing else
    row = Q[0]
    assert row[0b0001] == pytest.approx(0.5)
    assert row[0b1000] == pytest.approx(0.6)
    assert np.count_nonzero(row) == 3
    # particle at site 0, hole at 1: stirring on bond (0, 1) and on (-1, 0)
    s = 0b0010
    assert Q[s, 0b0100] == pytest.approx(1.0)
    assert Q[s, 0b0001] == pytest.approx(1.0)


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1, 2, 3]))
def test_generator_rows_and_residual(seed, kind):
    rng = np.random.default_rng(seed)
    if kind == 1:
        b = random_degree_preserving(rng, 1)
    elif kind == 2:
        b = random_flip_spec(rng, 2)
    else:
        b = random_speeded_spec(rng, 1)
    spec = ModelSpec(b, 5)
    G = build_generator(spec)
    Q = G.Q
    off = Q - sp.diags(Q.diagonal())
    assert off.min() >= 0
    assert np.abs(np.asarray(Q.sum(axis=1))).max() <= 1e-12
    mu = solve_exact(spec)
    assert mu.residual <= 1e-10
    assert abs(mu.weights.sum() - 1) <= 1e-12 and mu.weights.min() >= -1e-14
    d = observable_density(mu).values
    assert d.min() >= -1e-12 and d.max() <= 1 + 1e-12


def test_equilibrium_product_measure():
    n = 2
    b = DegreePreservingSpec(np.ones(n), np.full(n, 0.3), np.zeros((n, n)), np.zeros((n, n)), 0.3)
    mu = solve_exact(ModelSpec(b, 5))
    assert np.allclose(observable_density(mu).values, 0.3, atol=1e-12)
    cor = observable_correlation(mu)
    off = cor.matrix - np.diag(np.diag(cor.matrix))
    assert np.abs(off).max() <= 1e-12


def test_speed_factor_scales_left_rates():
    b = random_speeded_spec(np.random.default_rng(4), 1)
    Q1 = build_generator(ModelSpec(b, 4)).Q.toarray()
    Q2 = build_generator(ModelSpec(b.with_ell(2.0), 4)).Q.toarray()
    D = Q2 - Q1
    np.fill_diagonal(D, 0)
    L = Q1.copy()
    np.fill_diagonal(L, 0)
    # only the pure left-block moves (bits 0 and 1 only) differ, and they double
    mask = D != 0
    assert np.allclose(D[mask], L[mask])


def test_flip_model_antisymmetry(rng):
    spec = ModelSpec(random_flip_spec(rng, 2), 6)
    cor = observable_correlation(solve_exact(spec))
    assert cor.phi(-1, 2, 4) == -cor.phi(1, 2, 4)
    assert list(cor.sites) == [1, 2, 3, 4, 5]


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 3), st.integers(3, 7))
def test_model1_exact_profile_is_linear(seed, p, N):
    from bdsep.density import interpolation_defect
    spec = ModelSpec(random_degree_preserving(np.random.default_rng(seed), p), N)
    prof = observable_density(solve_exact(spec))
    assert interpolation_defect(prof, spec.beta, N) <= 1e-10
