import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy import stats

from weightedsums.distances import (AverageCdf, average_cdf, fourth_moment_identity,
                                    kolmogorov_discrete, kolmogorov_empirical, merge_atoms,
                                    rho_f_phi, weighted_sum_law)
from weightedsums.exceptions import InvalidArgumentError
from weightedsums.special import std_normal_cdf
from weightedsums.sphere import sample_directions, theta1_cdf
from weightedsums.zoo import DiscreteLaw, DistributionModel, enumerate_support, sample_batch

RAD = DistributionModel("rademacher")


# --- Kolmogorov distances --------------------------------------------------------------

@given(hnp.arrays(np.float64, st.integers(1, 60), elements=st.floats(-6, 6)))
def test_empirical_matches_scipy(x):
    x = np.sort(x)
    ours = kolmogorov_empirical(x).rho
    ref = stats.kstest(x, "norm").statistic
    assert ours == pytest.approx(ref, abs=1e-12)
    assert 0.0 <= ours <= 1.0


def test_empirical_requires_sorted():
    with pytest.raises(InvalidArgumentError):
        kolmogorov_empirical(np.array([1.0, 0.0]))
    with pytest.raises(InvalidArgumentError):
        kolmogorov_empirical(np.array([]))


def test_discrete_single_atom():
    law = DiscreteLaw(np.array([0.0]), np.array([1.0]))
    res = kolmogorov_discrete(law)
    assert res.rho == pytest.approx(0.5)
    assert res.arg_x == 0.0


def test_discrete_symmetric_two_atoms():
    law = DiscreteLaw(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))
    # sup is at 1-: |1/2 - Phi(1)|
    assert kolmogorov_discrete(law).rho == pytest.approx(std_normal_cdf(1.0) - 0.5)


def test_discrete_left_side_is_used():
    law = DiscreteLaw(np.array([5.0]), np.array([1.0]))
    res = kolmogorov_discrete(law)
    assert res.side == "left" and res.rho == pytest.approx(std_normal_cdf(5.0))


# --- laws of weighted sums ---------------------------------------------------------------

def test_weighted_sum_single_coordinate():
    law = weighted_sum_law(enumerate_support(RAD, 4), np.eye(4)[0])
    np.testing.assert_array_equal(law.atoms, [-1.0, 1.0])
    np.testing.assert_allclose(law.probs, [0.5, 0.5])


def test_weighted_sum_flat_direction_is_binomial():
    n = 6
    law = weighted_sum_law(enumerate_support(RAD, n), np.full(n, 1 / math.sqrt(n)))
    k = np.arange(n + 1)
    np.testing.assert_allclose(law.atoms, (2 * k - n) / math.sqrt(n), atol=1e-12)
    np.testing.assert_allclose(law.probs, stats.binom.pmf(k, n, 0.5), atol=1e-14)


@given(st.integers(0, 10**6))
def test_weighted_sum_law_moments(seed):
    n = 5
    th = sample_directions(n, 1, seed).directions[0]
    law = weighted_sum_law(enumerate_support(RAD, n), th)
    assert law.probs @ law.atoms == pytest.approx(0.0, abs=1e-12)
    assert law.probs @ law.atoms**2 == pytest.approx(1.0, abs=1e-12)
    assert law.probs @ law.atoms**4 == pytest.approx(3 - 2 * np.sum(th**4), abs=1e-12)


def test_merge_atoms_tolerance():
    law = merge_atoms(np.array([0.0, 1e-14, 1.0]), np.array([0.25, 0.25, 0.5]))
    assert law.atoms.size == 2
    np.testing.assert_allclose(law.probs, [0.5, 0.5])


def test_weighted_sum_law_rejects_non_unit():
    with pytest.raises(InvalidArgumentError):
        weighted_sum_law(enumerate_support(RAD, 3), np.ones(3))


# --- average law F ------------------------------------------------------------------------

def test_average_cdf_constant_radius():
    n = 9
    x = np.linspace(-3.5, 3.5, 31)
    F = AverageCdf(np.full(100, math.sqrt(n)), n)
    assert F.exact
    np.testing.assert_allclose(F(x), theta1_cdf(n, x / math.sqrt(n)), atol=1e-15)
    np.testing.assert_array_equal(F.stderr(x), 0.0)


def test_average_cdf_gaussian_is_phi():
    n = 6
    X = sample_batch(DistributionModel("gaussian_std"), n, 50000, 3).data
    r = np.linalg.norm(X, axis=1)
    x = np.linspace(-3, 3, 25)
    F = AverageCdf(r, n)
    z = np.abs(F(x) - std_normal_cdf(x)) / np.maximum(F.stderr(x), 1e-12)
    assert z.max() < 4.5


def test_average_cdf_zero_radius_atom():
    F = AverageCdf(np.array([0.0, 0.0]), 4)
    assert F(-1e-9) == 0.0 and F(0.0) == 1.0


def test_average_cdf_weights_and_function():
    F = AverageCdf(np.array([1.0, 2.0]), 5, weights=np.array([1.0, 3.0]))
    x = 0.7
    expected = 0.25 * theta1_cdf(5, 0.7) + 0.75 * theta1_cdf(5, 0.35)
    assert F(x) == pytest.approx(expected)
    assert average_cdf(np.array([2.0, 2.0]), 5, 0.7) == pytest.approx(theta1_cdf(5, 0.35))


def test_average_cdf_tabulate_monotone():
    F = AverageCdf(np.array([1.0, 3.0, 4.0]), 7)
    grid = np.linspace(-4, 4, 2001)
    G = F.tabulate(grid)
    x = np.linspace(-4.5, 4.5, 577)
    np.testing.assert_allclose(G(x), F(np.clip(x, -4, 4)), atol=1e-5)
    assert np.all(np.diff(G(x)) >= 0)


def test_average_cdf_input_errors():
    with pytest.raises(InvalidArgumentError):
        AverageCdf(np.array([-1.0]), 4)
    with pytest.raises(InvalidArgumentError):
        AverageCdf(np.array([]), 4)


# --- identities and rho(F, Phi) ---------------------------------------------------------

@pytest.mark.parametrize("n", [3, 8, 20])
def test_fourth_moment_identity_constant_radius(n):
    res = fourth_moment_identity(np.full(10, math.sqrt(n)), n)
    assert res.lhs == pytest.approx(res.rhs, abs=1e-12)
    assert res.passed and res.stderr == 0.0


def test_fourth_moment_identity_exact_weights():
    r = np.array([1.0, 2.0])
    w = np.array([0.8, 0.2])
    res = fourth_moment_identity(r, 4, weights=w)
    # identity holds only for E|X|^2 = n; here E|X|^2 = 1.6 so it must fail
    assert not res.passed
    radii = np.sqrt(np.array([2.0, 6.0]))  # E|X|^2 = 4 with equal weights
    assert fourth_moment_identity(radii, 4, weights=np.array([0.5, 0.5])).passed


def test_rho_f_phi_sphere_scaling():
    a = rho_f_phi(np.full(4, 4.0), 16)
    b = rho_f_phi(np.full(4, math.sqrt(32)), 32)
    assert a.rho / b.rho == pytest.approx(2.0, rel=0.1)
    assert a.shape == pytest.approx(1 / 16)


def test_rho_f_phi_gaussian_small():
    X = sample_batch(DistributionModel("gaussian_std"), 8, 50000, 1).data
    assert rho_f_phi(np.linalg.norm(X, axis=1), 8).rho < 0.01
