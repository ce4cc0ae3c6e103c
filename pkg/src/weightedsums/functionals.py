"""Estimators for the second-order correlation constant and related functionals.

All estimators accept an ``(m, n)`` array of draws. Passing ``sample_weight``
turns the array into the atoms of a finite law, in which case every
expectation is exact and reported standard errors are zero.
"""
import json
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._rng import STREAM_LAMBDA_START, STREAM_M4_START, block_generator, check_seed
from ._validation import check_int, check_samples, check_weights
from .exceptions import (DegenerateInputError, InvalidArgumentError, NumericFailureError,
                         ResourceLimitError)
from .sphere import sample_directions
from .zoo import FiniteSupportLaw, SampleBatch

EXACT_ATOM_BUDGET = 2**20


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float


def _as_array(X):
    return X.data if isinstance(X, SampleBatch) else X


def _cov(Z, w):
    """Covariance of the rows of ``Z``: unbiased for samples, exact for weights."""
    if w is None:
        Zc = Z - Z.mean(axis=0)
        return Zc.T @ Zc / (Z.shape[0] - 1)
    Zc = Z - w @ Z
    return (Zc * w[:, None]).T @ Zc


def _group_jackknife(stat, X, groups):
    """Delete-a-group jackknife standard error of ``stat`` over contiguous groups."""
    idx = np.array_split(np.arange(X.shape[0]), groups)
    vals = np.empty(groups)
    for g in range(groups):
        keep = np.ones(X.shape[0], dtype=bool)
        keep[idx[g]] = False
        vals[g] = stat(X[keep])
    return float(math.sqrt((groups - 1) / groups * np.sum((vals - vals.mean()) ** 2)))


# --- sigma_4^2 ----------------------------------------------------------------

def sigma4sq(X, sample_weight=None):
    """``Var(|X|^2) / n`` with a delta-method standard error."""
    X = check_samples(_as_array(X), min_rows=2)
    m, n = X.shape
    w = check_weights(sample_weight, m)
    q = np.einsum("ij,ij->i", X, X)
    if w is not None:
        qc = q - w @ q
        return Estimate(float(w @ qc**2) / n, 0.0)
    qc = q - q.mean()
    s2 = float(qc @ qc) / (m - 1)
    qc2 = qc * qc
    mu4 = float(np.mean(qc2 * qc2))
    se = math.sqrt(max(mu4 - s2**2, 0.0) / m) / n
    return Estimate(s2 / n, se)


def squared_coordinate_moments(X, sample_weight=None):
    """Pooled-free moments used by the exchangeable identity for ``sigma_4^2``.

    Returns ``(Var(X_1^2), cov(X_1^2, X_2^2))`` estimated from the first two columns.
    """
    X = check_samples(_as_array(X), min_rows=2, min_cols=2)
    w = check_weights(sample_weight, X.shape[0])
    C = _cov(X[:, :2] ** 2, w)
    return float(C[0, 0]), float(C[0, 1])


def exchangeable_identity(X, groups=8):
    """Difference between ``sigma_4^2`` and ``Var(X_1^2) + (n-1) cov(X_1^2, X_2^2)``.

    Returns ``(lhs, rhs, stderr)`` where the standard error is a group jackknife
    of the difference.
    """
    X = check_samples(_as_array(X), min_rows=2 * groups, min_cols=2)
    n = X.shape[1]

    def parts(Y):
        var1, cov12 = squared_coordinate_moments(Y)
        return sigma4sq(Y).value, var1 + (n - 1) * cov12

    lhs, rhs = parts(X)
    se = _group_jackknife(lambda Y: np.subtract(*parts(Y)), X, groups)
    return lhs, rhs, se


# --- Lambda ---------------------------------------------------------------------

@dataclass
class LambdaEstimate:
    value: float
    stderr: float
    rayleigh_history: List[float]
    iterations: int
    converged: bool
    top_matrix: np.ndarray
    restarted: bool = False


def _random_symmetric(n, seed, stream_block):
    rng = block_generator(seed, STREAM_LAMBDA_START, stream_block)
    G = rng.standard_normal((n, n))
    A = 0.5 * (G + G.T)
    return A / np.linalg.norm(A)


class _SquareCovarianceOperator:
    """``A -> Cov(<AX,X>, XX^T)`` applied without forming the n^2 x n^2 matrix."""

    def __init__(self, X, w):
        self.X = X
        self.w = w
        self.m = X.shape[0]

    def __call__(self, A):
        X, w = self.X, self.w
        q = np.einsum("ij,ij->i", X @ A, X)
        if w is None:
            qc = q - q.mean()
            rayleigh = float(qc @ qc) / (self.m - 1)
            CA = X.T @ (X * (qc / (self.m - 1))[:, None])
        else:
            qc = q - w @ q
            rayleigh = float(w @ (qc * qc))
            CA = X.T @ (X * (w * qc)[:, None])
        return 0.5 * (CA + CA.T), rayleigh


def _power_iterate(op, A, max_iters, tol):
    history = []
    converged = False
    prev = None
    step = np.inf
    for it in range(1, max_iters + 1):
        CA, r = op(A)
        if not (np.all(np.isfinite(CA)) and math.isfinite(r)):
            raise NumericFailureError("non-finite value in power iteration")
        history.append(r)
        norm = np.linalg.norm(CA)
        if norm == 0.0:
            return 0.0, history, it, True, A, 0.0
        A_next = CA / norm
        step = float(np.linalg.norm(A_next - A))
        A = A_next
        if prev is not None and abs(r - prev) <= tol * max(abs(r), 1e-300):
            converged = True
            break
        prev = r
    return history[-1], history, it, converged, A, step


def lambda_power(X, max_iters=500, tol=1e-6, seed=0, sample_weight=None, groups=8,
                 jackknife_iters=25):
    """Power iteration for the top eigenvalue of the covariance of ``XX^T``.

    Only symmetric matrices are iterated; the supremum over general coefficient
    arrays is attained there. The Rayleigh quotient at each step is the sample
    variance of ``<A x_k, x_k>`` for the current unit-HS-norm iterate ``A``.
    Jackknife replicates are warm-started from the final iterate and run for at
    most ``jackknife_iters`` steps.
    """
    X = check_samples(_as_array(X), min_rows=2)
    m, n = X.shape
    if m < n + 2:
        raise InvalidArgumentError(f"need m >= n + 2 rows, got m={m}, n={n}")
    max_iters = check_int(max_iters, "max_iters", 1)
    seed = check_seed(seed)
    w = check_weights(sample_weight, m)

    op = _SquareCovarianceOperator(X, w)
    value, hist, its, conv, A, step = _power_iterate(
        op, _random_symmetric(n, seed, 0), max_iters, tol)
    restarted = False
    # a stalled quotient with a moving iterate means a (near-)multiple top eigenspace
    if conv and step > 1e-3:
        v2, h2, i2, c2, A2, _ = _power_iterate(
            op, _random_symmetric(n, seed, 1), max_iters, tol)
        restarted = True
        its += i2
        if v2 > value:
            value, hist, conv, A = v2, h2, c2, A2

    stderr = 0.0
    if w is None and m >= groups * (n + 2):
        def stat(Y):
            sub = _SquareCovarianceOperator(Y, None)
            return _power_iterate(sub, A, jackknife_iters, tol)[0]
        stderr = _group_jackknife(stat, X, groups)
    return LambdaEstimate(float(value), stderr, hist, its, conv, A, restarted)


def symmetric_basis_features(X):
    """Coordinates of ``xx^T`` in an HS-orthonormal basis of symmetric matrices."""
    n = X.shape[1]
    iu, ju = np.triu_indices(n, k=1)
    return np.hstack([X**2, math.sqrt(2.0) * X[:, iu] * X[:, ju]])


def features_to_matrix(v, n):
    iu, ju = np.triu_indices(n, k=1)
    A = np.diag(v[:n]).astype(np.float64)
    A[iu, ju] = A[ju, iu] = v[n:] / math.sqrt(2.0)
    return A


def lambda_exact_discrete(law, return_matrix=False, chunk=65536):
    """Exact Λ of a finite law from a dense eigensolve on symmetric matrices.

    ``law`` is a :class:`FiniteSupportLaw` (or a ``(points, probs)`` pair).
    """
    if isinstance(law, FiniteSupportLaw):
        points, probs = law.points, law.probs
    else:
        points, probs = (np.asarray(a, dtype=np.float64) for a in law)
    if points.shape[0] > EXACT_ATOM_BUDGET:
        raise ResourceLimitError(
            f"{points.shape[0]} atoms exceed the exact budget of {EXACT_ATOM_BUDGET}")
    probs = probs / probs.sum()
    n = points.shape[1]
    d = n * (n + 1) // 2
    mean = np.zeros(d)
    second = np.zeros((d, d))
    for s in range(0, points.shape[0], chunk):
        Z = symmetric_basis_features(points[s:s + chunk])
        p = probs[s:s + chunk]
        mean += p @ Z
        second += (Z * p[:, None]).T @ Z
    C = second - np.outer(mean, mean)
    evals, evecs = np.linalg.eigh(0.5 * (C + C.T))
    top = float(max(evals[-1], 0.0))
    if return_matrix:
        return top, features_to_matrix(evecs[:, -1], n)
    return top


# --- V, M_2, M_4, beta -----------------------------------------------------------

def v_functional(X, sample_weight=None, groups=8):
    """Top eigenvalue of the covariance matrix of the squared coordinates."""
    X = check_samples(_as_array(X), min_rows=2)
    m, n = X.shape
    if m < n + 2:
        raise InvalidArgumentError(f"need m >= n + 2 rows, got m={m}, n={n}")
    w = check_weights(sample_weight, m)

    def stat(Y, wy=None):
        return float(max(np.linalg.eigvalsh(_cov(Y**2, wy))[-1], 0.0))

    value = stat(X, w)
    se = 0.0 if w is not None or m < groups * (n + 2) else _group_jackknife(stat, X, groups)
    return Estimate(value, se)


def m2(X, sample_weight=None, groups=8):
    """``sup_theta (E S_theta^2)^{1/2}``: root of the top second-moment eigenvalue."""
    X = check_samples(_as_array(X), min_rows=2)
    m, n = X.shape
    w = check_weights(sample_weight, m)

    def stat(Y, wy=None):
        S = Y.T @ Y / Y.shape[0] if wy is None else (Y * wy[:, None]).T @ Y
        return math.sqrt(max(np.linalg.eigvalsh(S)[-1], 0.0))

    value = stat(X, w)
    se = 0.0 if w is not None or m < groups * (n + 2) else _group_jackknife(stat, X, groups)
    return Estimate(value, se)


@dataclass(frozen=True)
class M4Bounds:
    lower: float
    upper: float
    lower_fourth_stderr: float
    argmax: np.ndarray


def _fourth_moment(X, w, thetas):
    S = X @ thetas.T
    S2 = S * S
    S4 = S2 * S2
    return (S4.mean(axis=0) if w is None else w @ S4), S


def m4(X, dirs=None, ascent_steps=50, lambda_hat=None, m2_hat=None, sample_weight=None,
       seed=0, n_starts=64, ascent_rows=50000):
    """Lower and upper bounds for ``M_4 = sup_theta (E S_theta^4)^{1/4}``.

    The lower bound maximizes the sample fourth moment by projected ascent from
    each start direction, taking normalized tangent steps of length
    ``0.1/sqrt(n)`` that are halved whenever they fail to improve. Ascent runs on
    at most ``ascent_rows`` rows; the reported value uses every row. The upper
    bound is ``(m2^4 + lambda_hat)^{1/4}`` when both are given.
    """
    X = check_samples(_as_array(X), min_rows=2)
    m, n = X.shape
    w = check_weights(sample_weight, m)
    if dirs is None:
        dirs = sample_directions(n, n_starts, check_seed(seed) ^ STREAM_M4_START)
    thetas = np.array(dirs.directions if hasattr(dirs, "directions") else dirs, dtype=float)
    if thetas.ndim != 2 or thetas.shape[1] != n:
        raise InvalidArgumentError("start directions must be unit vectors in R^n")
    ascent_steps = check_int(ascent_steps, "ascent_steps", 0)

    if w is None and m > ascent_rows:
        Xa, wa = X[:ascent_rows], None
    else:
        Xa, wa = X, w
    obj, S = _fourth_moment(Xa, wa, thetas)
    eta = np.full(thetas.shape[0], 0.1 / math.sqrt(n))
    for _ in range(ascent_steps):
        S3 = S * S * S
        grad = 4.0 * ((S3.T @ Xa) / Xa.shape[0] if wa is None else (S3 * wa[:, None]).T @ Xa)
        grad -= np.sum(grad * thetas, axis=1, keepdims=True) * thetas
        gnorm = np.linalg.norm(grad, axis=1, keepdims=True)
        gnorm[gnorm == 0] = 1.0
        trial = thetas + eta[:, None] * grad / gnorm
        trial /= np.linalg.norm(trial, axis=1, keepdims=True)
        tobj, tS = _fourth_moment(Xa, wa, trial)
        better = tobj > obj
        thetas[better] = trial[better]
        obj[better] = tobj[better]
        S[:, better] = tS[:, better]
        eta[~better] *= 0.5

    full, Sfull = _fourth_moment(X, w, thetas)
    best = int(np.argmax(full))
    if w is None:
        sb2 = Sfull[:, best] * Sfull[:, best]
        se4 = float(np.std(sb2 * sb2, ddof=1) / math.sqrt(m))
    else:
        se4 = 0.0
    lower = float(full[best]) ** 0.25
    upper = math.nan
    if lambda_hat is not None and m2_hat is not None:
        upper = (m2_hat**4 + lambda_hat) ** 0.25
    return M4Bounds(lower, upper, se4, thetas[best].copy())


def psi1_beta(samples, sample_weight=None, rtol=1e-6):
    """Smallest ``beta > 0`` with ``mean(exp(|s| / beta)) <= 2``, by bisection."""
    s = np.abs(np.asarray(samples, dtype=np.float64).ravel())
    if s.size == 0:
        raise InvalidArgumentError("psi1_beta needs at least one sample")
    smax = float(s.max())
    if smax == 0.0:
        raise DegenerateInputError("all samples are zero")
    if sample_weight is None:
        logw = np.full(s.size, -math.log(s.size))
    else:
        logw = np.log(check_weights(sample_weight, s.size))

    def excess(beta):
        return logsumexp(s / beta + logw) - math.log(2.0)

    lo, hi = smax / 50.0, 50.0 * smax
    while excess(lo) <= 0:  # a few outliers among near-zero samples
        lo /= 50.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    return hi


# --- bundle ---------------------------------------------------------------------

@dataclass
class FunctionalEstimates:
    lambda_hat: float
    lambda_stderr: float
    sigma4sq_hat: float
    sigma4sq_stderr: float
    m2_hat: float
    m2_stderr: float
    m4_lower: float
    m4_upper: float
    m4_fourth_stderr: float
    v_hat: float
    v_stderr: float
    bar_beta4_hat: float
    max_e_x4_hat: float
    n: int
    m: int
    seed: int
    beta_hat: Optional[float] = None
    exact: bool = False

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, obj):
        return cls(**obj)


def estimate_functionals(X, seed=0, sample_weight=None, max_iters=500, tol=1e-6,
                         n_starts=64, ascent_steps=50, compute_beta=True):
    """Estimate every functional from one batch (or one finite law)."""
    arr = check_samples(_as_array(X), min_rows=2)
    m, n = arr.shape
    w = check_weights(sample_weight, m)
    lam = lambda_power(arr, max_iters=max_iters, tol=tol, seed=seed, sample_weight=w)
    s4 = sigma4sq(arr, w)
    mm2 = m2(arr, w)
    v = v_functional(arr, w)
    mm4 = m4(arr, ascent_steps=ascent_steps, lambda_hat=lam.value, m2_hat=mm2.value,
             sample_weight=w, seed=seed, n_starts=n_starts)
    e4 = arr * arr
    e4 = e4 * e4
    e4 = e4.mean(axis=0) if w is None else w @ e4
    beta = None
    if compute_beta:
        beta = psi1_beta(arr @ mm4.argmax, sample_weight=w)
    return FunctionalEstimates(
        lambda_hat=lam.value, lambda_stderr=lam.stderr,
        sigma4sq_hat=s4.value, sigma4sq_stderr=s4.stderr,
        m2_hat=mm2.value, m2_stderr=mm2.stderr,
        m4_lower=mm4.lower, m4_upper=mm4.upper, m4_fourth_stderr=mm4.lower_fourth_stderr,
        v_hat=v.value, v_stderr=v.stderr,
        bar_beta4_hat=float(e4.mean()), max_e_x4_hat=float(e4.max()),
        n=n, m=m, seed=int(seed), beta_hat=beta, exact=w is not None)


# --- inequality checks -------------------------------------------------------------

@dataclass(frozen=True)
class BoundCheck:
    name: str
    lhs: float
    rhs: float
    slack: float
    applicable: bool = True

    @property
    def margin(self):
        return self.rhs + self.slack - self.lhs

    @property
    def passed(self):
        return (not self.applicable) or self.margin >= 0

    def to_dict(self):
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "slack": self.slack,
                "margin": self.margin, "applicable": self.applicable, "passed": self.passed}


@dataclass
class BoundReport:
    checks: List[BoundCheck] = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def check_bounds(est, meta, n, model=None, isotropic=True, k=3.0):
    """Evaluate each applicable inequality with ``k`` standard errors of slack.

    Gating: independence, coordinate-wise symmetry and exchangeability come from
    ``model``; the spectral-gap bound needs ``meta.lambda1``.
    """
    se_l = est.lambda_stderr
    e4 = meta.e_x4 if meta is not None and meta.e_x4 is not None else est.max_e_x4_hat
    checks = [
        BoundCheck("m4_moment_bound", est.m4_lower**4, est.m2_hat**4 + est.lambda_hat,
                   k * math.hypot(se_l, est.m4_fourth_stderr)),
        BoundCheck("sigma4_below_lambda", est.sigma4sq_hat, est.lambda_hat,
                   k * math.hypot(se_l, est.sigma4sq_stderr)),
        # written as -Lambda <= -(n-1)/n so that every check reads lhs <= rhs
        BoundCheck("lambda_isotropic_floor", -est.lambda_hat, -(n - 1) / n, k * se_l,
                   applicable=isotropic),
    ]
    iid = getattr(model, "iid", False)
    csym = getattr(model, "coordinatewise_symmetric", False)
    exch = getattr(model, "exchangeable", False)
    checks.append(BoundCheck("iid_fourth_moment", est.lambda_hat, 2 * e4, k * se_l, applicable=iid))
    checks.append(BoundCheck("v_below_lambda", est.v_hat, est.lambda_hat,
                             k * math.hypot(se_l, est.v_stderr), applicable=csym))
    checks.append(BoundCheck("lambda_below_moment_plus_v", est.lambda_hat, 2 * e4 + est.v_hat,
                             k * math.hypot(se_l, est.v_stderr), applicable=csym))
    checks.append(BoundCheck("exchangeable_upper", est.lambda_hat,
                             2 * e4 + est.sigma4sq_hat,
                             k * math.hypot(se_l, est.sigma4sq_stderr),
                             applicable=csym and exch))
    lambda1 = None if meta is None else meta.lambda1
    if lambda1:
        rhs = 4.0 / lambda1 if isotropic else 4.0 / lambda1**2
        checks.append(BoundCheck("spectral_gap_bound", est.lambda_hat, rhs, k * se_l))
    else:
        checks.append(BoundCheck("spectral_gap_bound", est.lambda_hat, math.inf, 0.0,
                                 applicable=False))
    return BoundReport(checks)


# --- estimator API --------------------------------------------------------------------

class SecondOrderCorrelation(BaseEstimator):
    """Estimate Λ, the best constant in ``Var(sum a_ij X_i X_j) <= Λ sum a_ij^2``.

    Parameters
    ----------
    max_iter : int, default=500
        Maximum power iterations.
    tol : float, default=1e-6
        Relative change of the Rayleigh quotient that stops the iteration.
    groups : int, default=8
        Number of sub-batches for the jackknife standard error.
    exact : bool, default=False
        Use the dense eigensolver instead of power iteration. Only sensible for
        small ``n`` or for finite laws passed through ``sample_weight``.
    random_state : int, default=0
        Seed of the starting matrix.

    Attributes
    ----------
    lambda_ : float
    lambda_stderr_ : float
    top_matrix_ : ndarray of shape (n_features, n_features)
        Unit-HS-norm symmetric matrix attaining the estimate.
    rayleigh_history_ : list of float
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, max_iter=500, tol=1e-6, groups=8, exact=False, random_state=0):
        self.max_iter = max_iter
        self.tol = tol
        self.groups = groups
        self.exact = exact
        self.random_state = random_state

    def fit(self, X, y=None, sample_weight=None):
        X = check_samples(_as_array(X), min_rows=2)
        if self.exact:
            w = check_weights(sample_weight, X.shape[0])
            if w is None:
                w = np.full(X.shape[0], 1.0 / X.shape[0])
            self.lambda_, self.top_matrix_ = lambda_exact_discrete((X, w), return_matrix=True)
            self.lambda_stderr_ = 0.0
            self.rayleigh_history_ = [self.lambda_]
            self.n_iter_ = 1
            self.converged_ = True
        else:
            est = lambda_power(X, self.max_iter, self.tol, self.random_state,
                               sample_weight, self.groups)
            self.lambda_ = est.value
            self.lambda_stderr_ = est.stderr
            self.top_matrix_ = est.top_matrix
            self.rayleigh_history_ = est.rayleigh_history
            self.n_iter_ = est.iterations
            self.converged_ = est.converged
        self.n_features_in_ = X.shape[1]
        return self

    def score(self, X, y=None):
        """Sample variance of ``<A x, x>`` at the fitted top matrix ``A``."""
        check_is_fitted(self, "top_matrix_")
        X = check_samples(_as_array(X), min_rows=2)
        q = np.einsum("ij,ij->i", X @ self.top_matrix_, X)
        return float(np.var(q, ddof=1))


class CorrelationFunctionals(BaseEstimator):
    """Fit every functional of a batch at once; results land in ``estimates_``."""

    def __init__(self, max_iter=500, tol=1e-6, n_starts=64, ascent_steps=50,
                 compute_beta=True, random_state=0):
        self.max_iter = max_iter
        self.tol = tol
        self.n_starts = n_starts
        self.ascent_steps = ascent_steps
        self.compute_beta = compute_beta
        self.random_state = random_state

    def fit(self, X, y=None, sample_weight=None):
        est = estimate_functionals(
            X, seed=self.random_state, sample_weight=sample_weight, max_iters=self.max_iter,
            tol=self.tol, n_starts=self.n_starts, ascent_steps=self.ascent_steps,
            compute_beta=self.compute_beta)
        self.estimates_ = est
        self.lambda_ = est.lambda_hat
        self.sigma4sq_ = est.sigma4sq_hat
        self.m2_ = est.m2_hat
        self.m4_lower_ = est.m4_lower
        self.m4_upper_ = est.m4_upper
        self.v_ = est.v_hat
        self.beta_ = est.beta_hat
        self.n_features_in_ = est.n
        return self

    def check_bounds(self, meta=None, model=None):
        check_is_fitted(self, "estimates_")
        return check_bounds(self.estimates_, meta, self.n_features_in_, model)
