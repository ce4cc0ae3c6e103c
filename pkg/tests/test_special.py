import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from weightedsums.special import betainc_cf, std_normal_cdf


@pytest.mark.parametrize("a, b, x, expected", [
    (1.0, 3.0, 0.2, 1 - 0.8**3),
    (0.5, 0.5, 0.3, 2 / math.pi * math.asin(math.sqrt(0.3))),
    (2.5, 2.5, 0.7, 0.8130330380911264),
    (7.5, 7.5, 0.55, 0.6487190559224328),
    (50.0, 50.0, 0.48, 0.3448872378754365),
])
def test_betainc_frozen_values(a, b, x, expected):
    assert betainc_cf(a, b, x) == pytest.approx(expected, abs=1e-12)


def test_betainc_endpoints():
    assert betainc_cf(3.0, 2.0, 0.0) == 0.0
    assert betainc_cf(3.0, 2.0, 1.0) == 1.0


def test_betainc_vectorizes():
    x = np.linspace(0, 1, 11)
    out = betainc_cf(2.0, 2.0, x)
    assert out.shape == (11,)
    # I_x(2, 2) = 3x^2 - 2x^3
    np.testing.assert_allclose(out, 3 * x**2 - 2 * x**3, atol=1e-13)


@given(st.floats(0.5, 200), st.floats(0.5, 200), st.floats(0, 1))
def test_betainc_matches_scipy(a, b, x):
    from scipy.special import betainc
    assert betainc_cf(a, b, x) == pytest.approx(float(betainc(a, b, x)), abs=1e-11)


@given(st.floats(0.5, 60), st.floats(0.5, 60), st.floats(0, 1))
def test_betainc_reflection(a, b, x):
    assert betainc_cf(a, b, x) == pytest.approx(1 - betainc_cf(b, a, 1 - x), abs=1e-11)


@given(st.floats(0.5, 40), st.floats(0.01, 0.98))
def test_betainc_monotone_in_x(a, x):
    assert betainc_cf(a, a, x) <= betainc_cf(a, a, x + 0.01) + 1e-14


def test_normal_cdf():
    assert std_normal_cdf(0.0) == 0.5
    assert std_normal_cdf(1.959963984540054) == pytest.approx(0.975, abs=1e-15)
    assert std_normal_cdf(-40.0) == 0.0 or std_normal_cdf(-40.0) < 1e-300
