import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from sklearn.base import clone

from weightedsums.exceptions import InvalidArgumentError, ResourceLimitError
from weightedsums.functionals import (CorrelationFunctionals, FunctionalEstimates,
                                      SecondOrderCorrelation, check_bounds,
                                      estimate_functionals, exchangeable_identity,
                                      lambda_exact_discrete, lambda_power, m2, m4,
                                      psi1_beta, sigma4sq, v_functional)
from weightedsums.zoo import (DistributionModel, FiniteSupportLaw, enumerate_support,
                              exact_metadata, sample_batch)


def three_point_law(n, p):
    """i.i.d. coordinates on {-a, 0, a} with P(+-a) = p and E X^2 = 1."""
    a = math.sqrt(1 / (2 * p))
    vals = np.array([-a, 0.0, a])
    pr = np.array([p, 1 - 2 * p, p])
    pts = np.array(list(itertools.product(vals, repeat=n)))
    probs = np.prod(np.array(list(itertools.product(pr, repeat=n))), axis=1)
    return FiniteSupportLaw(pts, probs)


# --- exact oracle --------------------------------------------------------------------

@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_lambda_exact_rademacher(n):
    law = enumerate_support(DistributionModel("rademacher"), n)
    assert lambda_exact_discrete(law) == pytest.approx(2.0, abs=1e-9)


@pytest.mark.parametrize("p, expected", [(1 / 8, 3.0), (1 / 4, 2.0), (1 / 20, 9.0)])
def test_lambda_exact_three_point(p, expected):
    # i.i.d. symmetric coordinates: max(2, E X^4 - 1) with E X^4 = 1/(2p)
    assert lambda_exact_discrete(three_point_law(3, p)) == pytest.approx(expected, abs=1e-9)


def test_lambda_exact_returns_top_matrix():
    law = three_point_law(3, 1 / 20)
    lam, A = lambda_exact_discrete(law, return_matrix=True)
    assert np.linalg.norm(A) == pytest.approx(1.0)
    q = np.einsum("ij,ij->i", law.points @ A, law.points)
    var = law.probs @ (q - law.probs @ q) ** 2
    assert var == pytest.approx(lam)
    # the top direction is diagonal for this law
    assert np.abs(A - np.diag(np.diag(A))).max() < 1e-8


def test_lambda_exact_budget():
    big = FiniteSupportLaw(np.zeros((2**20 + 1, 1)), np.full(2**20 + 1, 1 / (2**20 + 1)))
    with pytest.raises(ResourceLimitError):
        lambda_exact_discrete(big)


# eight atoms in dimension 1 to 4, arbitrary positive weights
finite_laws = st.integers(1, 4).flatmap(lambda n: st.tuples(
    hnp.arrays(np.float64, (8, n), elements=st.floats(-3, 3, allow_nan=False)),
    hnp.arrays(np.float64, 8, elements=st.floats(0.01, 1.0))))


@given(finite_laws)
def test_lambda_exact_dominates_sigma4(law):
    pts, w = law
    w = w / w.sum()
    lam = lambda_exact_discrete((pts, w))
    q = np.einsum("ij,ij->i", pts, pts)
    s4 = w @ (q - w @ q) ** 2 / pts.shape[1]
    assert lam >= s4 - 1e-9 * max(1.0, s4)


@given(finite_laws, st.integers(0, 2**32))
def test_power_iteration_never_exceeds_oracle(law, seed):
    pts, w = law
    lam = lambda_exact_discrete((pts, w))
    if pts.shape[0] < pts.shape[1] + 2:
        return
    est = lambda_power(pts, seed=seed, sample_weight=w, max_iters=200)
    assert est.value <= lam * (1 + 1e-9) + 1e-12


# --- power iteration -------------------------------------------------------------------

def test_power_matches_oracle_on_finite_law():
    law = three_point_law(4, 1 / 20)
    est = lambda_power(law.points, sample_weight=law.probs, seed=3)
    assert est.value == pytest.approx(9.0, rel=1e-5)
    assert est.stderr == 0.0


def test_power_matches_dense_solve_on_sample():
    X = sample_batch(DistributionModel("laplace_iid"), 5, 20000, 2).data
    dense = lambda_exact_discrete((X, np.full(len(X), 1 / len(X))))
    est = lambda_power(X, sample_weight=np.ones(len(X)), seed=1, tol=1e-10, max_iters=2000)
    assert est.value == pytest.approx(dense, rel=1e-4)


def test_power_records_history():
    X = sample_batch(DistributionModel("uniform_cube"), 4, 5000, 2).data
    est = lambda_power(X, seed=5)
    assert est.iterations == len(est.rayleigh_history) or est.restarted
    assert est.stderr > 0
    assert np.linalg.norm(est.top_matrix) == pytest.approx(1.0)


def test_power_is_deterministic():
    X = sample_batch(DistributionModel("gaussian_std"), 4, 4000, 2).data
    assert lambda_power(X, seed=9).value == lambda_power(X, seed=9).value


def test_power_argument_errors():
    with pytest.raises(InvalidArgumentError):
        lambda_power(np.zeros((4, 4)))
    with pytest.raises(InvalidArgumentError):
        lambda_power(np.ones((100, 3)), max_iters=0)


# --- other functionals ------------------------------------------------------------------

def test_sigma4sq_exact_and_sampled():
    law = enumerate_support(DistributionModel("rademacher"), 5)
    assert sigma4sq(law.points, law.probs).value == pytest.approx(0.0, abs=1e-12)
    X = sample_batch(DistributionModel("gaussian_std"), 6, 100000, 1).data
    est = sigma4sq(X)
    assert abs(est.value - 2.0) <= 4 * est.stderr


def test_v_functional_iid():
    law = three_point_law(3, 1 / 8)
    assert v_functional(law.points, law.probs).value == pytest.approx(3.0)


def test_m2_isotropic():
    law = enumerate_support(DistributionModel("rademacher"), 4)
    assert m2(law.points, law.probs).value == pytest.approx(1.0)


def test_m4_rademacher_flat_direction():
    n = 8
    law = enumerate_support(DistributionModel("rademacher"), n)
    b = m4(law.points, sample_weight=law.probs, lambda_hat=2.0, m2_hat=1.0)
    # E S^4 = 3 - 2 sum theta_i^4, largest at flat directions
    assert 2.7 <= b.lower**4 <= 3 - 2 / n + 1e-9
    assert b.upper == pytest.approx(3.0 ** 0.25)


def test_psi1_beta_rademacher_coordinate():
    assert psi1_beta(np.array([-1.0, 1.0])) == pytest.approx(1 / math.log(2), rel=1e-6)


def test_psi1_beta_weighted_scaling():
    s = np.array([0.0, 2.0, 5.0])
    w = np.array([0.5, 0.3, 0.2])
    assert psi1_beta(3 * s, w) == pytest.approx(3 * psi1_beta(s, w), rel=1e-5)


def test_exchangeable_identity_gaussian():
    X = sample_batch(DistributionModel("gaussian_std"), 8, 50000, 4).data
    lhs, rhs, se = exchangeable_identity(X)
    assert abs(lhs - rhs) <= 3 * se


# --- bundles and checks -------------------------------------------------------------------

def test_estimates_round_trip():
    law = enumerate_support(DistributionModel("rademacher"), 4)
    est = estimate_functionals(law.points, sample_weight=law.probs, compute_beta=False)
    back = FunctionalEstimates.from_dict(json.loads(est.to_json()))
    assert back == est
    assert est.exact and est.lambda_hat == pytest.approx(2.0)


def test_check_bounds_names_and_gating():
    model = DistributionModel("rademacher")
    law = enumerate_support(model, 6)
    est = estimate_functionals(law.points, sample_weight=law.probs, compute_beta=False)
    rep = check_bounds(est, exact_metadata(model, 6), 6, model=model)
    names = [c.name for c in rep.checks]
    assert names == ["m4_moment_bound", "sigma4_below_lambda", "lambda_isotropic_floor",
                     "iid_fourth_moment", "v_below_lambda", "lambda_below_moment_plus_v",
                     "exchangeable_upper", "spectral_gap_bound"]
    assert rep.passed
    # Rademacher has no Poincare constant
    assert not rep["spectral_gap_bound"].applicable
    assert rep["iid_fourth_moment"].margin == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(KeyError):
        rep["nope"]


def test_check_bounds_non_isotropic_floor_inapplicable():
    X = 0.5 * sample_batch(DistributionModel("gaussian_std"), 4, 5000, 1).data
    est = estimate_functionals(X, compute_beta=False)
    rep = check_bounds(est, None, 4, isotropic=False)
    assert not rep["lambda_isotropic_floor"].applicable


# --- estimator API ------------------------------------------------------------------------

def test_second_order_correlation_estimator():
    X = sample_batch(DistributionModel("laplace_iid"), 4, 20000, 6).data
    est = SecondOrderCorrelation(random_state=2).fit(X)
    assert est.n_features_in_ == 4
    assert est.lambda_ == pytest.approx(5.0, rel=0.15)
    assert est.score(X) == pytest.approx(est.lambda_, rel=1e-3)
    params = clone(est).get_params()
    assert params["random_state"] == 2 and params["exact"] is False


def test_second_order_correlation_exact_mode():
    law = enumerate_support(DistributionModel("rademacher"), 5)
    est = SecondOrderCorrelation(exact=True).fit(law.points, sample_weight=law.probs)
    assert est.lambda_ == pytest.approx(2.0)


def test_correlation_functionals_estimator():
    X = sample_batch(DistributionModel("uniform_cube"), 4, 20000, 3).data
    est = CorrelationFunctionals(n_starts=16, ascent_steps=20).fit(X)
    assert est.m4_lower_ <= est.m4_upper_ * (1 + 1e-6)
    rep = est.check_bounds(exact_metadata(DistributionModel("uniform_cube"), 4),
                           DistributionModel("uniform_cube"))
    assert rep.passed
