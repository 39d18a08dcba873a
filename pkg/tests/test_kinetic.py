import numpy as np
import pytest
from hypothesis import given, strategies as st

from bdsep.core import (Configuration, DegreePreservingSpec, FlipBoundarySpec, ModelSpec,
                        random_degree_preserving, random_flip_spec, random_speeded_spec)
from bdsep.density import macroscopic_profile
from bdsep.exact import observable_density, solve_exact
from bdsep.kinetic import (ARROW, BRANCH, LPLUS, MarkLog, RPLUS, estimate_density, event_clock,
                           generate_marks, majority_scenario, majority_table, profile_error,
                           read_snapshots, replay_marks, simulate, write_snapshots)


def _flip(p=2, seed=0):
    return ModelSpec(random_flip_spec(np.random.default_rng(seed), p), 6)


def test_zero_left_rates():
    # without left events the particle number only changes at the right reservoir
    n = 2
    b = DegreePreservingSpec(np.zeros(n), np.zeros(n), np.zeros((n, n)), np.zeros((n, n)), 0.5)
    spec = ModelSpec(b, 4)
    assert event_clock(spec).block_out.max() == 0.0
    eta = Configuration([1, 1, 0, 0, 1], -1)
    assert simulate(spec, eta, 0.0, seed=1) == eta
    tr = simulate(spec, eta, 20.0, seed=1, trace=10 ** 4)
    codes = np.concatenate([[eta.to_int()], tr.states]).astype(np.int64)
    counts = np.array([bin(int(c)).count("1") for c in codes])
    changed = np.flatnonzero(np.diff(counts) != 0)
    last = 1 << (spec.n_sites - 1)
    assert len(changed) > 0
    assert all((codes[i] ^ codes[i + 1]) == last for i in changed)


def test_seed_determinism():
    spec = _flip()
    eta = Configuration([0, 1, 0, 1, 1], 1)
    a = simulate(spec, eta, 50.0, seed=11, trace=1000)
    b = simulate(spec, eta, 50.0, seed=11, trace=1000)
    c = simulate(spec, eta, 50.0, seed=12, trace=1000)
    assert a.final == b.final and np.array_equal(a.times, b.times)
    assert not np.array_equal(a.times, c.times)
    e1 = estimate_density(spec, burn_in=20, batches=5, batch_len=10, seed=3)
    e2 = estimate_density(spec, burn_in=20, batches=5, batch_len=10, seed=3)
    assert np.array_equal(e1.mean, e2.mean)


def test_trace_states_are_consistent():
    spec = _flip()
    eta = Configuration([0, 0, 0, 0, 0], 1)
    tr = simulate(spec, eta, 30.0, seed=5, trace=10 ** 5)
    assert tr.n_events >= len(tr.times)
    assert np.all(np.diff(tr.times) > 0)
    assert Configuration.from_int(int(tr.states[-1]), 5, 1) == tr.final


@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1, 3]))
def test_stirring_preserves_particles_in_the_bulk(seed, kind):
    # every traced transition touches one site, a bond or (model 3) the block
    rng = np.random.default_rng(seed)
    b = random_degree_preserving(rng, 1) if kind == 1 else random_speeded_spec(rng, 1)
    spec = ModelSpec(b, 5)
    eta = Configuration(rng.integers(0, 2, spec.n_sites), spec.lo)
    tr = simulate(spec, eta, 5.0, seed=seed, trace=10 ** 4)
    codes = np.concatenate([[eta.to_int()], tr.states])
    flips = [bin(int(x)).count("1") for x in codes[1:] ^ codes[:-1]]
    assert all(1 <= f <= (2 if kind == 1 else spec.p + 1) for f in flips)


def test_mark_replay_by_hand():
    spec = ModelSpec(FlipBoundarySpec([0.0, 0.0, 1.0, 1.0], 0.5), 5)
    eta = Configuration([0, 1, 0, 0], 1)
    marks = MarkLog(np.array([0.1, 0.2, 0.3, 0.4]),
                    np.array([ARROW, LPLUS, BRANCH, RPLUS], np.int8),
                    np.array([1, 0, 3, 0], np.int64), 0.0, 1.0)
    # arrow at position 1 swaps sites 2 and 3; left+ sets site 1; window (1, 0)
    # has index 2 so the branch mark at index 3 does nothing; right+ sets site 4
    final, acc = replay_marks(spec, eta, marks)
    assert final == Configuration([1, 0, 1, 1], 1)
    assert acc[0] == pytest.approx(0.8)
    assert acc[3] == pytest.approx(0.6)


def test_generated_marks_are_sorted(rng):
    f = random_flip_spec(rng, 3)
    m = generate_marks(f, 8, -5.0, 0.0, rng)
    assert np.all(np.diff(m.times) >= 0)
    assert m.times.min() >= -5.0 and m.times.max() <= 0.0
    expected = (8 - 2) + f.rates.sum() - f.lam_total * 0 + 1.0
    assert abs(len(m) / 5.0 - expected) < 6 * np.sqrt(expected / 5.0)


def test_simulate_with_marks_matches_replay(rng):
    spec = ModelSpec(random_flip_spec(rng, 2), 6)
    eta = Configuration(rng.integers(0, 2, 5), 1)
    m = generate_marks(spec.boundary, 6, 0.0, 10.0, rng)
    assert simulate(spec, eta, 10.0, marks=m) == replay_marks(spec, eta, m)[0]


@pytest.mark.parametrize("kind", [1, 2, 3])
def test_estimate_matches_exact(kind):
    rng = np.random.default_rng(100 + kind)
    b = {1: lambda: random_degree_preserving(rng, 1), 2: lambda: random_flip_spec(rng, 2),
         3: lambda: random_speeded_spec(rng, 1)}[kind]()
    spec = ModelSpec(b, 5)
    ex = observable_density(solve_exact(spec)).values
    est = estimate_density(spec, burn_in=200, batches=40, batch_len=250, seed=kind)
    z = np.abs(est.mean - ex) / est.stderr
    assert z.max() <= 4.0


def test_graphical_mode_requires_flip(rng):
    spec = ModelSpec(random_degree_preserving(rng, 1), 5)
    with pytest.raises(ValueError):
        estimate_density(spec, batches=2, batch_len=1, burn_in=1, mode="graphical")


def test_profile_error_identity():
    prof = macroscopic_profile(0.2, 0.6, np.arange(0, 11) / 10)
    sites = type(prof)(np.arange(0, 11), prof.values, "finite_N")
    signed, l1 = profile_error(sites, lambda x: 0.2 + 0.4 * x, N=10)
    assert abs(signed) < 1e-15 and l1 < 1e-15
    signed, _ = profile_error(sites, lambda x: 0 * x, G=lambda x: 0 * x, N=10)
    assert signed == 0.0


def test_snapshot_roundtrip(tmp_path, rng):
    configs = [rng.integers(0, 2, 13).astype(np.uint8) for _ in range(4)]
    times = [0.0, 1.5, 2.25, 10.0]
    write_snapshots(tmp_path / "s.bin", times, configs, 13)
    raw = (tmp_path / "s.bin").read_bytes()
    assert raw[:4] == b"BDSS" and len(raw) == 16 + 4 * (8 + 2)
    t, c = read_snapshots(tmp_path / "s.bin")
    assert np.array_equal(t, times)
    assert all(np.array_equal(a, b) for a, b in zip(c, configs))


def test_majority_table_and_run():
    t = majority_table(1)
    # window (eta_1, eta_2): target is eta_2 >= 1
    assert list(t) == [0.0, 1.0, 1.0, 0.0]
    run = majority_scenario(1, 8, seed=0, horizon=50)
    assert len(run.times) == 50 and 0 <= run.occupation_fraction <= 1


def _holding_check(spec, horizon, seed):
    from bdsep.exact import build_generator
    Q = build_generator(spec).Q.tocsr()
    eta = Configuration(np.zeros(spec.n_sites, np.uint8), spec.lo)
    tr = simulate(spec, eta, horizon, seed=seed, trace=10 ** 6)
    assert len(tr.times) >= 10 ** 5
    states = np.concatenate([[0], tr.states])
    stay = np.diff(np.concatenate([[0.0], tr.times, [horizon]]))
    occupancy = np.bincount(states, weights=stay, minlength=Q.shape[0])
    counts = {}
    for a, b in zip(states[:-1], states[1:]):
        counts[(a, b)] = counts.get((a, b), 0) + 1
    worst = 0.0
    for s in np.flatnonzero(occupancy > 0):
        row = Q.getrow(s)
        for t, q in zip(row.indices, row.data):
            if t == s:
                continue
            expected = q * occupancy[s]
            if expected < 20:
                continue
            worst = max(worst, abs(counts.get((s, t), 0) - expected) / np.sqrt(expected))
    return worst


@pytest.mark.parametrize("kind", [1, 2, 3])
def test_transition_frequencies_match_generator(kind):
    rng = np.random.default_rng(200 + kind)
    b = {1: lambda: random_degree_preserving(rng, 1), 2: lambda: random_flip_spec(rng, 2),
         3: lambda: random_speeded_spec(rng, 1)}[kind]()
    spec = ModelSpec(b, 4 if kind != 2 else 5)
    assert _holding_check(spec, 10 ** 5, seed=kind) <= 4.0


def test_equilibrium_density_is_beta():
    n = 2
    b = DegreePreservingSpec(np.ones(n), np.full(n, 0.4), np.zeros((n, n)), np.zeros((n, n)), 0.4)
    est = estimate_density(ModelSpec(b, 6), burn_in=100, batches=40, batch_len=200, seed=0)
    assert np.all(np.abs(est.mean - 0.4) <= 3.5 * est.stderr)


def test_fast_block_matches_exact():
    b = random_speeded_spec(np.random.default_rng(0), 2, ell=64.0)
    spec = ModelSpec(b, 8)
    ex = observable_density(solve_exact(spec))[0]
    est = estimate_density(spec, burn_in=500, batches=40, batch_len=200, seed=1)
    assert abs(est[0] - ex) <= 3.5 * est.err(0)


def test_majority_occupation_is_mixed():
    run = majority_scenario(2, 12, seed=3, horizon=2000)
    assert 0 < run.occupation_fraction < 1
