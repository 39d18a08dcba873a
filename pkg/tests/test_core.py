import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bdsep.core import (Configuration, DegreePreservingSpec, FlipBoundarySpec, LatticeGeometry,
                        ModelError, ModelSpec, SpeededBoundarySpec, apply_exchange, apply_flip,
                        apply_set, boundary_from_dict, lex_to_bits, load_spec, random_degree_preserving,
                        random_flip_spec, random_speeded_spec)


def test_geometry_ranges():
    g = LatticeGeometry(5, 2)
    assert list(g.block) == [-2, -1, 0]
    assert list(g.bulk) == [1, 2, 3, 4]
    assert g.n_sites == 7
    with pytest.raises(ModelError):
        LatticeGeometry(2, 1)
    with pytest.raises(ModelError):
        LatticeGeometry(5, 0)


def test_configuration_is_immutable():
    c = Configuration([1, 0, 1], lo=-1)
    assert c[-1] == 1 and c[0] == 0 and c[1] == 1
    with pytest.raises(ValueError):
        c.bits[0] = 0
    with pytest.raises(IndexError):
        c[2]
    with pytest.raises(ModelError):
        Configuration([0, 2])


def test_moves():
    c = Configuration([1, 0, 0], lo=0)
    assert apply_exchange(c, 0) == Configuration([0, 1, 0])
    assert apply_flip(c, 2) == Configuration([1, 0, 1])
    assert apply_set(c, 0, 1) == c
    assert c == Configuration([1, 0, 0])
    with pytest.raises(ModelError):
        apply_set(c, 0, 3)


@given(st.lists(st.integers(0, 1), min_size=2, max_size=20), st.integers(-5, 5), st.data())
def test_exchange_preserves_particle_number(bits, lo, data):
    c = Configuration(bits, lo)
    k = data.draw(st.integers(lo, lo + len(bits) - 2))
    d = apply_exchange(c, k)
    assert d.particle_number() == c.particle_number()
    assert apply_exchange(d, k) == c


@given(st.integers(0, 2 ** 12 - 1))
def test_int_roundtrip(code):
    assert Configuration.from_int(code, 12, -3).to_int() == code


def test_lex_permutation():
    # bit 0 is site 1, lexicographic order has site 1 most significant
    perm = lex_to_bits(3)
    assert perm[0b001] == 0b100
    assert perm[0b110] == 0b011
    assert sorted(perm) == list(range(8))


def test_flip_spec_minima_and_marginal():
    f = FlipBoundarySpec([0.7, 0.6, 0.9, 0.6, 0.4, 0.5, 0.4, 0.45], 0.3)
    assert f.p == 3 and f.P == 4
    assert f.A == pytest.approx(0.6) and f.B == pytest.approx(0.4)
    assert f.lam_total == pytest.approx(0.1 + 0.3 + 0.1 + 0.05)
    assert f.marginal.min() == 0.0
    assert f.rate(1, 1) == pytest.approx(0.5)


@pytest.mark.parametrize("bad", [
    lambda: FlipBoundarySpec([0.1, 0.2, 0.3]),
    lambda: FlipBoundarySpec([0.1, -0.2]),
    lambda: FlipBoundarySpec([0.1, float("nan")]),
    lambda: FlipBoundarySpec([0.1, 0.2], beta=1.0),
    lambda: DegreePreservingSpec([1, -1], [0.5, 0.5], np.zeros((2, 2)), np.zeros((2, 2))),
    lambda: DegreePreservingSpec([1, 1], [0.5, 1.5], np.zeros((2, 2)), np.zeros((2, 2))),
    lambda: DegreePreservingSpec([1, 1], [0.5, 0.5], np.eye(2), np.zeros((2, 2))),
    lambda: SpeededBoundarySpec(np.zeros((4, 4))),
    lambda: SpeededBoundarySpec(np.ones((4, 4)), ell=0.5),
    lambda: ModelSpec(FlipBoundarySpec(np.ones(16)), 4),
])
def test_invalid_specs(bad):
    with pytest.raises(ModelError):
        bad()


def test_speeded_diagonal_recomputed():
    Q = np.ones((4, 4)) * 2.0
    s = SpeededBoundarySpec(Q, ell=3.0)
    assert np.allclose(s.generator.sum(axis=1), 0)
    assert s.with_ell(5.0).ell == 5.0


def test_model_spec_geometry():
    f = ModelSpec(FlipBoundarySpec([1, 1, 1, 1]), 6)
    assert f.kind == 2 and f.lo == 1 and f.n_sites == 5
    d = ModelSpec(random_degree_preserving(np.random.default_rng(0), 2), 6)
    assert d.kind == 1 and d.lo == -2 and d.n_sites == 8
    s = ModelSpec(random_speeded_spec(np.random.default_rng(0), 1), 6)
    assert s.kind == 3 and list(s.sites) == list(range(-1, 6))


def test_json_roundtrip(tmp_path, rng):
    for b in (random_degree_preserving(rng, 2), random_flip_spec(rng, 3), random_speeded_spec(rng, 1)):
        path = tmp_path / "s.json"
        d = b.to_dict()
        d["N"] = 7
        path.write_text(json.dumps(d))
        spec = load_spec(path)
        assert spec.N == 7
        assert spec.digest() == ModelSpec(b, 7).digest()
    with pytest.raises(ModelError):
        boundary_from_dict({"model": "other"})


@given(st.lists(st.integers(0, 1), min_size=1, max_size=16), st.data())
def test_flip_and_set_identities(bits, data):
    c = Configuration(bits)
    k = data.draw(st.integers(0, len(bits) - 1))
    f = apply_flip(c, k)
    assert abs(f.particle_number() - c.particle_number()) == 1
    assert apply_flip(f, k) == c
    a = data.draw(st.integers(0, 1))
    s = apply_set(c, k, a)
    assert apply_set(s, k, a) == s
    assert apply_set(apply_set(c, k, 0), k, 1) == apply_set(c, k, 1)
