import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from weightedsums.exceptions import InvalidArgumentError
from weightedsums.sphere import (SphereTestFunction, WeightedSumProjector,
                                 first_order_poincare_check, sample_directions,
                                 second_order_poincare_check, theta1_cdf, theta1_moment,
                                 theta1_moment_exact, theta1_ppf)


# --- coordinate law --------------------------------------------------------------

@given(st.floats(-1, 1))
def test_theta1_cdf_n3_is_uniform(t):
    assert theta1_cdf(3, t) == pytest.approx((1 + t) / 2, abs=1e-13)


@given(st.floats(-1, 1))
def test_theta1_cdf_n2_is_arcsine(t):
    assert theta1_cdf(2, t) == pytest.approx(0.5 + math.asin(t) / math.pi, abs=1e-12)


def test_theta1_cdf_n5_polynomial():
    # density 3/4 (1 - s^2)
    t = -0.3
    assert theta1_cdf(5, t) == pytest.approx(0.5 + 0.75 * (t - t**3 / 3), abs=1e-14)


@given(st.integers(2, 200), st.floats(0, 1))
def test_theta1_cdf_symmetry(n, t):
    assert theta1_cdf(n, t) + theta1_cdf(n, -t) == pytest.approx(1.0, abs=1e-12)


def test_theta1_cdf_clamps_outside_interval():
    assert theta1_cdf(7, -3.0) == 0.0
    assert theta1_cdf(7, 3.0) == 1.0


def test_theta1_ppf_inverts_cdf():
    p = np.array([0.0, 0.01, 0.3, 0.5, 0.9, 1.0])
    t = theta1_ppf(12, p)
    np.testing.assert_allclose(theta1_cdf(12, t), p, atol=1e-12)
    with pytest.raises(InvalidArgumentError):
        theta1_ppf(12, [1.5])


def test_theta1_moments_exact():
    assert theta1_moment_exact(16, 2) == Fraction(1, 16)
    assert theta1_moment_exact(16, 4) == Fraction(3, 16 * 18)
    assert theta1_moment_exact(5, 3) == 0
    assert theta1_moment(10, 6) == pytest.approx(15 / (10 * 12 * 14))


def test_theta1_moments_match_sampling():
    d = sample_directions(6, 200000, 3).directions[:, 0]
    assert np.mean(d**4) == pytest.approx(theta1_moment(6, 4), rel=0.02)


# --- direction sampling ----------------------------------------------------------

def test_directions_are_unit_vectors():
    d = sample_directions(9, 500, 1)
    assert len(d) == 500 and d.n == 9
    np.testing.assert_allclose(np.linalg.norm(d.directions, axis=1), 1.0, atol=1e-14)


def test_directions_prefix_stable():
    a = sample_directions(5, 300, 11).directions
    b = sample_directions(5, 1000, 11).directions
    np.testing.assert_array_equal(a, b[:300])


def test_directions_depend_on_seed():
    a = sample_directions(5, 10, 1).directions
    b = sample_directions(5, 10, 2).directions
    assert not np.allclose(a, b)


def test_antithetic_pairs():
    d = sample_directions(4, 20, 7, antithetic=True).directions
    np.testing.assert_array_equal(d[1::2], -d[0::2])
    with pytest.raises(InvalidArgumentError):
        sample_directions(4, 21, 7, antithetic=True)


def test_directions_roughly_uniform():
    d = sample_directions(3, 100000, 5).directions
    assert np.abs(d.mean(axis=0)).max() < 0.01
    np.testing.assert_allclose(d.T @ d / len(d), np.eye(3) / 3, atol=0.01)


@pytest.mark.parametrize("bad", [(1, 10, 0), (3, 0, 0), (3, 10, -1), (3, 10, 1.5)])
def test_direction_argument_errors(bad):
    with pytest.raises(InvalidArgumentError):
        sample_directions(*bad)


# --- Poincare-type checks ------------------------------------------------------------

def test_second_order_check_offdiag_value():
    c = second_order_poincare_check(SphereTestFunction("offdiag_product", (0, 1)), 16,
                                    200000, 1)
    assert abs(c.lhs - 1 / 288) <= 3 * c.stderr
    assert c.rhs == pytest.approx(10 / 225)
    assert c.passed


def test_second_order_check_diag_centered():
    n = 8
    c = second_order_poincare_check(SphereTestFunction("diag_centered", (2, 2)), n, 100000, 2)
    # Var(theta_i^2) = 3/(n(n+2)) - 1/n^2
    assert abs(c.lhs - (3 / (n * (n + 2)) - 1 / n**2)) <= 4 * c.stderr
    assert c.passed


def test_first_order_check():
    c = first_order_poincare_check(SphereTestFunction("offdiag_product", (0, 1)), 10, 50000, 3)
    assert c.passed and c.lhs < c.rhs


@pytest.mark.parametrize("kind, idx", [("offdiag_product", (1, 1)), ("diag_centered", (0, 1)),
                                       ("cubic", (0, 1))])
def test_test_function_rejects_non_centered(kind, idx):
    with pytest.raises(InvalidArgumentError):
        SphereTestFunction(kind, idx)


def test_poincare_argument_checks():
    fn = SphereTestFunction("offdiag_product", (0, 1))
    with pytest.raises(InvalidArgumentError):
        second_order_poincare_check(fn, 8, 999, 0)
    with pytest.raises(InvalidArgumentError):
        second_order_poincare_check(fn, 2, 5000, 0)
    with pytest.raises(InvalidArgumentError):
        second_order_poincare_check(SphereTestFunction("offdiag_product", (0, 9)), 8, 5000, 0)


# --- projector -----------------------------------------------------------------------

def test_projector_transform():
    X = np.random.default_rng(0).standard_normal((50, 6))
    proj = WeightedSumProjector(n_directions=8, random_state=4).fit(X)
    S = proj.transform(X)
    assert S.shape == (50, 8)
    np.testing.assert_allclose(S, X @ sample_directions(6, 8, 4).directions.T)
    assert clone(proj).get_params() == proj.get_params()
    with pytest.raises(InvalidArgumentError):
        proj.transform(X[:, :5])
