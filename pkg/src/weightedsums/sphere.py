"""Uniform directions on the unit sphere and exact facts about their law."""
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from ._rng import STREAM_CHECK, STREAM_DIRECTIONS, blocked_rows, check_seed
from ._validation import check_int
from .exceptions import InvalidArgumentError
from .special import betainc_cf

DIRECTION_BLOCK = 256


@dataclass(frozen=True)
class DirectionSet:
    """An ordered set of unit vectors, one per row of ``directions``."""

    directions: np.ndarray
    seed: int
    antithetic: bool

    @property
    def n(self):
        return self.directions.shape[1]

    def __len__(self):
        return self.directions.shape[0]

    def __iter__(self):
        return iter(self.directions)


def _unit_rows(G):
    return G / np.linalg.norm(G, axis=1, keepdims=True)


def sample_directions(n, count, seed, antithetic=False):
    """Draw ``count`` directions uniformly on S^{n-1} by normalizing Gaussians.

    With ``antithetic=True`` rows come in consecutive pairs ``(theta, -theta)``,
    so ``count`` must be even. Row ``k`` depends only on ``(n, seed, k, antithetic)``.
    """
    n = check_int(n, "n", 2)
    count = check_int(count, "count", 1)
    seed = check_seed(seed)
    if antithetic:
        if count % 2:
            raise InvalidArgumentError("antithetic direction sets need an even count")
        base = blocked_rows(seed, STREAM_DIRECTIONS, count // 2, DIRECTION_BLOCK,
                            lambda rng, b: _unit_rows(rng.standard_normal((b, n))))
        dirs = np.empty((count, n))
        dirs[0::2] = base
        dirs[1::2] = -base
    else:
        dirs = blocked_rows(seed, STREAM_DIRECTIONS, count, DIRECTION_BLOCK,
                            lambda rng, b: _unit_rows(rng.standard_normal((b, n))))
    return DirectionSet(dirs, seed, bool(antithetic))


def theta1_cdf(n, t):
    """Distribution function of one coordinate of a uniform point on S^{n-1}.

    The coordinate has density proportional to ``(1 - t^2)^((n-3)/2)``, so
    ``(1 + theta_1)/2`` is Beta((n-1)/2, (n-1)/2).
    """
    n = check_int(n, "n", 2)
    a = 0.5 * (n - 1)
    u = 0.5 * (1.0 + np.clip(np.asarray(t, dtype=np.float64), -1.0, 1.0))
    out = betainc_cf(a, a, u)
    return out[()] if np.ndim(out) == 0 else out


def theta1_ppf(n, p):
    """Numerical inverse of :func:`theta1_cdf` on ``[0, 1]``."""
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))
    if np.any((p < 0) | (p > 1)):
        raise InvalidArgumentError("probabilities must lie in [0, 1]")
    out = np.empty_like(p)
    for i, pi in enumerate(p):
        if pi == 0.0:
            out[i] = -1.0
        elif pi == 1.0:
            out[i] = 1.0
        else:
            out[i] = brentq(lambda t: theta1_cdf(n, t) - pi, -1.0, 1.0,
                            xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return out


def theta1_moment_exact(n, p):
    """E theta_1^p as an exact rational: ``prod_{k<p/2} (2k+1)/(n+2k)`` for even p."""
    n = check_int(n, "n", 2)
    p = check_int(p, "p", 0)
    if p % 2:
        return Fraction(0)
    out = Fraction(1)
    for k in range(p // 2):
        out *= Fraction(2 * k + 1, n + 2 * k)
    return out


def theta1_moment(n, p):
    return float(theta1_moment_exact(n, p))


# --- second-order spherical Poincare check ---------------------------------

@dataclass(frozen=True)
class SphereTestFunction:
    """Quadratic test function on the sphere, orthogonal to all affine functions.

    ``offdiag_product`` is ``theta_i theta_j`` with ``i != j``; ``diag_centered`` is
    ``theta_i^2 - 1/n`` (``j`` is ignored and must equal ``i``).
    """

    kind: str
    indices: tuple = (0, 1)

    def __post_init__(self):
        i, j = self.indices
        if self.kind == "offdiag_product":
            if i == j:
                raise InvalidArgumentError(
                    "theta_i^2 is not orthogonal to constants; use diag_centered")
        elif self.kind == "diag_centered":
            if i != j:
                raise InvalidArgumentError("diag_centered takes a repeated index (i, i)")
        else:
            raise InvalidArgumentError(
                f"unknown test function kind {self.kind!r}; only quadratic forms "
                "orthogonal to affine functions are supported")
        if i < 0 or j < 0:
            raise InvalidArgumentError("indices must be nonnegative")

    def __call__(self, theta, n):
        i, j = self.indices
        theta = np.atleast_2d(theta)
        if self.kind == "offdiag_product":
            return theta[:, i] * theta[:, j]
        return theta[:, i] ** 2 - 1.0 / n

    def hessian(self, n):
        i, j = self.indices
        H = np.zeros((n, n))
        if self.kind == "offdiag_product":
            H[i, j] = H[j, i] = 1.0
        else:
            H[i, i] = 2.0
        return H

    def gradient_sq(self, theta):
        """Squared Euclidean norm of the ambient gradient at each row of ``theta``."""
        i, j = self.indices
        theta = np.atleast_2d(theta)
        if self.kind == "offdiag_product":
            return theta[:, i] ** 2 + theta[:, j] ** 2
        return 4.0 * theta[:, i] ** 2


@dataclass(frozen=True)
class CheckReport:
    lhs: float
    rhs: float
    margin: float
    stderr: float
    passed: bool


def _mc_directions(n, mc_size, seed):
    return blocked_rows(seed, STREAM_CHECK, mc_size, 4096,
                        lambda rng, b: _unit_rows(rng.standard_normal((b, n))))


def _check_mc_args(fn, n, mc_size, seed, min_n):
    if not isinstance(fn, SphereTestFunction):
        raise InvalidArgumentError("fn must be a SphereTestFunction")
    n = check_int(n, "n", min_n)
    if max(fn.indices) >= n:
        raise InvalidArgumentError("test function indices exceed the dimension")
    mc_size = check_int(mc_size, "mc_size")
    if mc_size < 1000:
        raise InvalidArgumentError("mc_size must be at least 1000")
    return n, mc_size, check_seed(seed)


def second_order_poincare_check(fn, n, mc_size, seed):
    """Compare a Monte Carlo estimate of E u^2 with ``5/(n-1)^2 min_a ||Hess u - aI||_HS^2``.

    The Hessian of either test kind is constant, so the right side is exact and
    the optimal ``a`` is ``trace(H)/n``. Passes when ``lhs <= rhs + 3 stderr``.
    """
    n, mc_size, seed = _check_mc_args(fn, n, mc_size, seed, 3)
    vals = fn(_mc_directions(n, mc_size, seed), n) ** 2
    lhs = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(mc_size))
    H = fn.hessian(n)
    a = np.trace(H) / n
    rhs = 5.0 / (n - 1) ** 2 * float(np.sum((H - a * np.eye(n)) ** 2))
    return CheckReport(lhs, rhs, rhs - lhs, se, lhs <= rhs + 3 * se)


def first_order_poincare_check(fn, n, mc_size, seed):
    """Compare E u^2 with ``E |grad u|^2 / (n-1)``, both by Monte Carlo on shared draws.

    The ambient gradient is used; it dominates the spherical one.
    """
    n, mc_size, seed = _check_mc_args(fn, n, mc_size, seed, 2)
    theta = _mc_directions(n, mc_size, seed)
    diff = fn.gradient_sq(theta) / (n - 1) - fn(theta, n) ** 2
    rhs = float(np.mean(fn.gradient_sq(theta)) / (n - 1))
    lhs = float(np.mean(fn(theta, n) ** 2))
    se = float(diff.std(ddof=1) / np.sqrt(mc_size))
    return CheckReport(lhs, rhs, rhs - lhs, se, lhs <= rhs + 3 * se)


# --- estimator API ----------------------------------------------------------------

class WeightedSumProjector(TransformerMixin, BaseEstimator):
    """Map rows ``x`` to the weighted sums ``<x, theta_j>`` for random directions.

    Parameters
    ----------
    n_directions : int, default=300
    antithetic : bool, default=False
        Pair every direction with its negative.
    random_state : int, default=0
    """

    def __init__(self, n_directions=300, antithetic=False, random_state=0):
        self.n_directions = n_directions
        self.antithetic = antithetic
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        self.directions_ = sample_directions(self.n_features_in_, self.n_directions,
                                             self.random_state, self.antithetic).directions
        return self

    def transform(self, X):
        check_is_fitted(self, "directions_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise InvalidArgumentError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.directions_.T
