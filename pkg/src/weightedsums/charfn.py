"""Characteristic functions of weighted sums and their spread over the sphere."""
import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._rng import check_seed
from ._validation import check_int, check_samples, check_unit_vector, check_weights
from .exceptions import InvalidArgumentError
from .sphere import sample_directions
from .zoo import SampleBatch, characteristic_function, exact_metadata, sample_batch

CSV_COLUMNS = ("t", "variance_hat", "stderr", "first_abs_moment", "bound_first",
               "bound_second_shape", "inside_t_range")


def _as_array(X):
    return X.data if isinstance(X, SampleBatch) else X


def _projected_cf(S, t, w=None):
    """Mean of ``exp(i t S)`` over rows of ``S`` (shape ``(m, k)``), for each ``t``.

    Returns shape ``(k, len(t))``.
    """
    out = np.empty((S.shape[1], t.size), dtype=np.complex128)
    for j, tj in enumerate(t):
        ang = tj * S
        if w is None:
            out[:, j] = np.cos(ang).mean(axis=0) + 1j * np.sin(ang).mean(axis=0)
        else:
            out[:, j] = w @ np.cos(ang) + 1j * (w @ np.sin(ang))
    return out


def _spread_estimate(values, spread, m):
    """Direction-averaged unbiased squared deviation; see :func:`_shared_cf`."""
    N = values.shape[0]
    dev = values - values.mean(axis=0)
    dev2 = dev.real**2 + dev.imag**2
    noise = (spread[None, :] - m * dev2) / (m * (m - 1.0))
    return dev2, noise, (N / (N - 1.0)) * (dev2 - noise).mean(axis=0)


def _shared_cf(X, Theta, t, groups=10):
    """cf values of every direction on one batch, the noise term, and a batch stderr.

    The deviation ``fhat_theta - mean over directions`` is a sample mean of
    ``D_k = exp(i t <x_k, theta>) - (direction average for sample k)``, so
    ``|dev|^2 - var(D)/m`` is unbiased for the squared deviation of the exact
    values. The direction average of ``sum_k |D_k|^2`` equals
    ``m - sum_k |direction average for sample k|^2`` and is used for every row.

    Every direction sees the same batch, so part of the error is common to all
    of them and invisible in their spread; a delete-a-group jackknife over
    ``groups`` contiguous sample blocks measures it.
    """
    m = X.shape[0]
    N = Theta.shape[0]
    G = groups if m >= 2 * groups + 2 else 0
    bounds = np.linspace(0, m, G + 1).astype(int) if G else None
    sums = np.empty((N, t.size), dtype=np.complex128)
    gsums = np.zeros((G, N, t.size), dtype=np.complex128)
    rowsum = np.zeros((m, t.size), dtype=np.complex128)
    step = max(1, int(2**24 // max(m, 1)))
    for s in range(0, N, step):
        S = X @ Theta[s:s + step].T
        for j, tj in enumerate(t):
            ang = tj * S
            z = np.cos(ang) + 1j * np.sin(ang)
            sums[s:s + step, j] = z.sum(axis=0)
            rowsum[:, j] += z.sum(axis=1)
            for g in range(G):
                gsums[g, s:s + step, j] = z[bounds[g]:bounds[g + 1]].sum(axis=0)
    zbar = rowsum / N
    zb2 = zbar.real**2 + zbar.imag**2
    values = sums / m
    dev2, noise, est = _spread_estimate(values, m - zb2.sum(axis=0), m)
    jack_se = np.zeros(t.size)
    if G:
        reps = np.empty((G, t.size))
        for g in range(G):
            keep = m - (bounds[g + 1] - bounds[g])
            zb2_g = zb2[bounds[g]:bounds[g + 1]].sum(axis=0)
            spread_g = keep - (zb2.sum(axis=0) - zb2_g)
            reps[g] = _spread_estimate((sums - gsums[g]) / keep, spread_g, keep)[2]
        jack_se = np.sqrt((G - 1.0) / G * np.sum((reps - reps.mean(axis=0)) ** 2, axis=0))
    return values, noise, jack_se


def empirical_cf(X, theta, t, sample_weight=None):
    """``(1/m) sum_k exp(i t <x_k, theta>)``; scalar ``t`` gives a complex scalar."""
    X = check_samples(_as_array(X))
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (X.shape[1],):
        raise InvalidArgumentError(
            f"theta has shape {theta.shape}, expected ({X.shape[1]},)")
    w = check_weights(sample_weight, X.shape[0])
    tt = np.atleast_1d(np.asarray(t, dtype=np.float64))
    vals = _projected_cf((X @ theta)[:, None], tt, w)[0]
    return complex(vals[0]) if np.ndim(t) == 0 else vals


def default_t_grid(n, T0=None, points=64, start=0.05):
    """Geometric grid from ``start`` to ``n^(1/6)``, continued with the same ratio to ``T0``."""
    stop = n ** (1.0 / 6.0)
    grid = np.geomspace(start, stop, points)
    if T0 is not None and T0 > stop:
        ratio = grid[1] / grid[0]
        extra = stop * ratio ** np.arange(1, int(math.ceil(math.log(T0 / stop) / math.log(ratio))))
        grid = np.concatenate([grid, extra[extra < T0], [T0]])
    return grid


def lemma61_T0(n):
    return 5.0 * math.sqrt(math.log(n))


@dataclass
class CfProfile:
    t_grid: np.ndarray
    variance_hat: np.ndarray
    stderr: np.ndarray
    first_abs_moment: np.ndarray
    bound_first: np.ndarray
    bound_second_shape: np.ndarray
    inside_t_range: np.ndarray
    n: int
    n_theta: int
    m: int
    seed: int
    lambda_hat: float
    mode: str
    values: Optional[np.ndarray] = field(default=None, repr=False)

    def row(self, t):
        """Index of grid point ``t`` (exact match within 1e-12)."""
        hits = np.flatnonzero(np.abs(self.t_grid - t) <= 1e-12 * max(1.0, abs(t)))
        if hits.size == 0:
            raise KeyError(t)
        return int(hits[0])

    def to_csv(self, path=None):
        """CSV text with columns :data:`CSV_COLUMNS`; also written to ``path`` if given."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for i in range(self.t_grid.size):
            writer.writerow([repr(float(self.t_grid[i])), repr(float(self.variance_hat[i])),
                             repr(float(self.stderr[i])),
                             repr(float(self.first_abs_moment[i])),
                             repr(float(self.bound_first[i])),
                             repr(float(self.bound_second_shape[i])),
                             int(bool(self.inside_t_range[i]))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _pair_units(d, antithetic):
    """Collapse antithetic pairs so that standard errors count independent draws."""
    if antithetic:
        return 0.5 * (d[0::2] + d[1::2])
    return d


def profile_from_values(values, t_grid, n, m, seed, lambda_hat, mode, antithetic,
                        weights_are_exact=False, noise=None, batch_se=None):
    """Summarize per-direction cf values (rows: directions) into a :class:`CfProfile`.

    ``noise`` is a per-direction Monte Carlo term to subtract; without it,
    independent batches per direction are assumed. ``batch_se`` (error common
    to all directions) is added in quadrature to the across-direction stderr.
    """
    N = values.shape[0]
    fbar = values.mean(axis=0)
    dev = values - fbar
    dev2 = dev.real**2 + dev.imag**2
    d = dev2 * (N / (N - 1.0))
    if noise is not None:
        d = d - noise * (N / (N - 1.0))
    elif not weights_are_exact and m > 1:
        # E|fhat - f|^2 = (1 - |f|^2)/m and E(1 - |fhat|^2) = (1 - |f|^2)(1 - 1/m)
        d = d - (1.0 - np.abs(values) ** 2) / (m - 1.0)
    units = _pair_units(d, antithetic)
    var_hat = units.mean(axis=0)
    se = units.std(axis=0, ddof=1) / math.sqrt(units.shape[0])
    if batch_se is not None:
        se = np.hypot(se, batch_se)
    n_root = n ** (1.0 / 6.0)
    return CfProfile(
        t_grid=t_grid, variance_hat=var_hat, stderr=se,
        first_abs_moment=np.sqrt(dev2).mean(axis=0),
        bound_first=t_grid**2 / (n - 1.0),
        bound_second_shape=lambda_hat * t_grid**4 / n**2,
        inside_t_range=t_grid <= n_root * (1 + 1e-12),
        n=n, n_theta=N, m=m, seed=seed, lambda_hat=float(lambda_hat), mode=mode,
        values=values)


def cf_profile(model, n, t_grid, n_theta, m, seed, antithetic=True, lambda_hat=None,
               mode="shared", threads=1):
    """Spread ``E_theta |f_theta(t) - f(t)|^2`` of the weighted-sum cf over directions.

    ``m = 0`` (or ``mode="exact"``) uses the closed-form cf of the model. Otherwise
    every direction is evaluated on one shared batch (``mode="shared"``) or on its
    own batch (``mode="independent"``), and the Monte Carlo noise floor is
    subtracted per direction.
    """
    n = check_int(n, "n", 2)
    n_theta = check_int(n_theta, "n_theta", 2)
    if n_theta < 30:
        raise InvalidArgumentError("n_theta must be at least 30")
    seed = check_seed(seed)
    t = np.asarray(t_grid, dtype=np.float64).ravel()
    if t.size == 0 or np.any(t <= 0) or not np.all(np.isfinite(t)):
        raise InvalidArgumentError("t_grid must be a nonempty set of positive reals")
    if np.any(np.diff(t) <= 0):
        raise InvalidArgumentError("t_grid must be strictly increasing")
    if lambda_hat is None:
        lambda_hat = exact_metadata(model, n).lam
    dirs = sample_directions(n, n_theta, seed, antithetic=antithetic)
    Theta = dirs.directions
    if m == 0 or mode == "exact":
        values = characteristic_function(model, Theta, t).astype(np.complex128)
        return profile_from_values(values, t, n, 0, seed, lambda_hat, "exact", antithetic,
                                   weights_are_exact=True)
    m = check_int(m, "m", 2)
    if mode == "shared":
        X = sample_batch(model, n, m, seed).data
        values, noise, jack = _shared_cf(X, Theta, t)
        return profile_from_values(values, t, n, m, seed, lambda_hat, mode, antithetic,
                                   noise=noise, batch_se=jack)
    elif mode == "independent":
        from concurrent.futures import ThreadPoolExecutor

        def one(i):
            Xi = sample_batch(model, n, m, (seed + 1 + i) % 2**64).data
            return _projected_cf((Xi @ Theta[i])[:, None], t)[0]
        with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
            values = np.array(list(ex.map(one, range(n_theta))))
    else:
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    return profile_from_values(values, t, n, m, seed, lambda_hat, mode, antithetic)


def profile_from_batch(X, t_grid, n_theta, seed, antithetic=True, lambda_hat=2.0,
                       sample_weight=None):
    """Profile computed on a given batch or finite law (rows of ``X``)."""
    X = check_samples(_as_array(X), min_rows=2)
    m, n = X.shape
    w = check_weights(sample_weight, m)
    t = np.asarray(t_grid, dtype=np.float64).ravel()
    dirs = sample_directions(n, n_theta, seed, antithetic=antithetic)
    if w is None:
        values, noise, jack = _shared_cf(X, dirs.directions, t)
        return profile_from_values(values, t, n, m, seed, lambda_hat, "shared", antithetic,
                                   noise=noise, batch_se=jack)
    values = _projected_cf(X @ dirs.directions.T, t, w)
    return profile_from_values(values, t, n, 0, seed, lambda_hat, "exact", antithetic,
                               weights_are_exact=True)


# --- Hessian deviation ----------------------------------------------------------

@dataclass(frozen=True)
class HessianCheck:
    hs_norm_sq: float
    op_norm: float
    a_theta: complex
    t: float
    theta: np.ndarray
    hs_bound: float
    op_bound: float
    hs_stderr: float
    op_stderr: float
    slack_k: float

    @property
    def hs_passed(self):
        return self.hs_norm_sq <= self.hs_bound + self.slack_k * self.hs_stderr + 1e-12

    @property
    def op_passed(self):
        return self.op_norm <= self.op_bound + self.slack_k * self.op_stderr + 1e-12

    @property
    def passed(self):
        return self.hs_passed and self.op_passed


def _hessian_norms(X, w, theta, t):
    S = X @ theta
    e = np.exp(1j * t * S)
    we = e / X.shape[0] if w is None else w * e
    H = -t * t * (X.T @ (X * we[:, None]))
    a = -t * t * we.sum()
    D = H - a * np.eye(X.shape[1])
    hs = float(np.sum(D.real**2 + D.imag**2))
    op = float(np.linalg.norm(D, 2))
    return hs, op, complex(a)


def hessian_deviation(X, theta, t, lambda_hat, sample_weight=None, groups=8, k=5.0):
    """Hessian of ``theta -> f_theta(t)`` minus ``-t^2 f_theta(t) I``, in HS and operator norm.

    Bounds: ``hs_norm_sq <= lambda_hat t^4`` and ``op_norm <= 2 t^2``, each with
    ``k`` jackknife standard errors of slack for sampled batches.
    """
    X = check_samples(_as_array(X), min_rows=2)
    m, n = X.shape
    if m < n + 2:
        raise InvalidArgumentError(f"need m >= n + 2 rows, got m={m}, n={n}")
    theta = check_unit_vector(theta, n, atol=1e-10)
    w = check_weights(sample_weight, m)
    t = float(t)
    hs, op, a = _hessian_norms(X, w, theta, t)
    hs_se = op_se = 0.0
    if w is None and m >= groups * (n + 2):
        idx = np.array_split(np.arange(m), groups)
        reps = np.empty((groups, 2))
        for g in range(groups):
            keep = np.ones(m, dtype=bool)
            keep[idx[g]] = False
            reps[g, :2] = _hessian_norms(X[keep], None, theta, t)[:2]
        spread = np.sqrt((groups - 1) / groups * np.sum((reps - reps.mean(0)) ** 2, axis=0))
        hs_se, op_se = float(spread[0]), float(spread[1])
    return HessianCheck(hs, op, a, t, theta, float(lambda_hat) * t**4, 2.0 * t * t,
                        hs_se, op_se, float(k))


# --- Berry-Esseen-type bound ---------------------------------------------------------

def lemma61_terms(profile, m4, sigma4sq, n, T0=None, T=None):
    """Terms of the smoothing bound for ``E_theta rho(F_theta, F)``, up to a constant.

    ``T0`` and ``T`` default to ``5 sqrt(log n)`` and ``5 n``. The integrand
    ``E|f_theta - f| / t`` is integrated by trapezoids over the profile grid, and
    on ``(0, t_min]`` the mean absolute deviation is taken linear in ``t``.
    """
    n = check_int(n, "n", 2)
    T0 = lemma61_T0(n) if T0 is None else float(T0)
    T = 5.0 * n if T is None else float(T)
    if not (T0 > 0 and T >= T0):
        raise InvalidArgumentError("need T >= T0 > 0")
    t = np.asarray(profile.t_grid, dtype=np.float64)
    g = np.asarray(profile.first_abs_moment, dtype=np.float64)
    if t.size == 0 or t[0] <= 0 or t[-1] < T0 * (1 - 1e-12):
        raise InvalidArgumentError(f"profile grid must cover (0, {T0:.6g}]")
    inside = t < T0
    tt = np.concatenate([t[inside], [T0]])
    gg = np.concatenate([g[inside], [np.interp(T0, t, g)]])
    h = gg / tt
    integral = float(gg[0]) + float(np.sum(0.5 * (h[1:] + h[:-1]) * np.diff(tt)))
    moment = (m4**4 + sigma4sq) / n * (1.0 + math.log(T / T0))
    return {"integral": integral, "moment": moment, "inv_T": 1.0 / T,
            "gauss_tail": math.exp(-T0 * T0 / 16.0)}


def lemma61_bound(profile, m4, sigma4sq, n, T0=None, T=None):
    return float(sum(lemma61_terms(profile, m4, sigma4sq, n, T0, T).values()))


# --- estimator API ----------------------------------------------------------------------

class CharacteristicFunctionProfile(BaseEstimator):
    """Direction spread of the empirical cf of ``<X, theta>`` on a ``t`` grid.

    Parameters
    ----------
    t_grid : array-like or None
        Positive, increasing grid; ``None`` uses :func:`default_t_grid` with the
        smoothing-bound endpoint ``5 sqrt(log n)``.
    n_directions : int, default=300
    antithetic : bool, default=True
    lambda_hat : float, default=2.0
        Λ used for the second-order bound shape.
    random_state : int, default=0
    """

    def __init__(self, t_grid=None, n_directions=300, antithetic=True, lambda_hat=2.0,
                 random_state=0):
        self.t_grid = t_grid
        self.n_directions = n_directions
        self.antithetic = antithetic
        self.lambda_hat = lambda_hat
        self.random_state = random_state

    def fit(self, X, y=None, sample_weight=None):
        X = check_samples(_as_array(X), min_rows=2)
        n = X.shape[1]
        grid = self.t_grid
        if grid is None:
            grid = default_t_grid(n, lemma61_T0(n))
        self.profile_ = profile_from_batch(X, grid, self.n_directions, self.random_state,
                                           self.antithetic, self.lambda_hat, sample_weight)
        self.n_features_in_ = n
        return self

    def transform(self, X):
        """Cf values of ``<X, theta>`` for the fitted directions, shape ``(n_dir, n_t)``."""
        check_is_fitted(self, "profile_")
        X = check_samples(_as_array(X))
        dirs = sample_directions(self.n_features_in_, self.n_directions, self.random_state,
                                 antithetic=self.antithetic)
        return _projected_cf(X @ dirs.directions.T, self.profile_.t_grid)
