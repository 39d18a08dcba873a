import numpy as np
import pytest
from hypothesis import given, strategies as st

from bdsep.fitting import fit_power_law


def test_inverse_law():
    fit = fit_power_law([(x, 1.0 / x) for x in (1, 2, 4, 8)])
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)
    assert fit.predict(16) == pytest.approx(1 / 16)


def test_inverse_sqrt():
    fit = fit_power_law([(x, x ** -0.5) for x in (3, 9, 27)])
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)


@pytest.mark.parametrize("pts", [[(1, 1), (2, 2)], [(1, 1), (2, 0), (3, 1)],
                                 [(1, 1), (2, np.nan), (3, 1)], [(-1, 1), (2, 1), (3, 1)]])
def test_rejects_bad_points(pts):
    with pytest.raises(ValueError):
        fit_power_law(pts)


@given(st.floats(-3, 3), st.floats(0.1, 10))
def test_recovers_exponent(a, c):
    xs = np.array([1.0, 2.0, 5.0, 11.0])
    fit = fit_power_law(zip(xs, c * xs ** a))
    assert fit.slope == pytest.approx(a, abs=1e-9)
    assert np.exp(fit.intercept) == pytest.approx(c, rel=1e-9)
