"""One-dimensional laws and Kolmogorov distances."""
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from ._validation import check_int, check_unit_vector
from .exceptions import InvalidArgumentError, ResourceLimitError
from .special import std_normal_cdf
from .sphere import theta1_cdf, theta1_moment
from .zoo import DiscreteLaw, FiniteSupportLaw

__all__ = ["std_normal_cdf", "KolmogorovResult", "kolmogorov_empirical",
           "kolmogorov_discrete", "weighted_sum_law", "average_cdf", "AverageCdf",
           "fourth_moment_identity", "rho_f_phi"]


@dataclass(frozen=True)
class KolmogorovResult:
    rho: float
    arg_x: float
    # "right": sup approached as F_law(x) at x; "left": as F_law(x-)
    side: str


def _sup_from_sides(x, right, left, target):
    upper = np.abs(right - target)
    lower = np.abs(left - target)
    iu, il = int(np.argmax(upper)), int(np.argmax(lower))
    if upper[iu] >= lower[il]:
        return KolmogorovResult(float(upper[iu]), float(x[iu]), "right")
    return KolmogorovResult(float(lower[il]), float(x[il]), "left")


def kolmogorov_empirical(values, cdf=std_normal_cdf):
    """Exact ``sup_x |F_m(x) - cdf(x)|`` for a sorted sample and a continuous cdf."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InvalidArgumentError("sample must be a nonempty 1-D array")
    if np.any(np.diff(x) < 0):
        raise InvalidArgumentError("sample must be sorted ascending")
    m = x.size
    F = cdf(x)
    i = np.arange(1, m + 1)
    return _sup_from_sides(x, i / m, (i - 1) / m, F)


def kolmogorov_discrete(law, cdf=std_normal_cdf):
    """Exact Kolmogorov distance between a discrete law and a continuous cdf."""
    right, left = law.cdf_at_atoms()
    return _sup_from_sides(law.atoms, right, left, cdf(law.atoms))


def merge_atoms(values, probs, merge_tol=1e-12):
    """Sort values and merge those closer than ``merge_tol`` times their scale."""
    order = np.argsort(values, kind="stable")
    v = values[order]
    p = probs[order]
    scale = max(1.0, float(np.max(np.abs(v))))
    new_group = np.concatenate(([True], np.diff(v) > merge_tol * scale))
    gid = np.cumsum(new_group) - 1
    psum = np.bincount(gid, weights=p)
    vmean = np.bincount(gid, weights=p * v) / np.where(psum > 0, psum, 1.0)
    # zero-probability groups keep their first value
    firsts = v[new_group]
    vmean = np.where(psum > 0, vmean, firsts)
    psum = psum / psum.sum()
    return DiscreteLaw(vmean, psum)


def weighted_sum_law(support, theta, merge_tol=1e-12, budget=2**24):
    """Exact law of ``<X, theta>`` for a finite-support ``X``."""
    if not isinstance(support, FiniteSupportLaw):
        raise InvalidArgumentError("support must be a FiniteSupportLaw")
    if support.points.shape[0] > budget:
        raise ResourceLimitError(
            f"{support.points.shape[0]} atoms exceed the budget of {budget}")
    theta = check_unit_vector(theta, support.n)
    return merge_atoms(support.points @ theta, support.probs, merge_tol)


class AverageCdf:
    """F(x) = P{|X| theta_1 <= x}: the mixture of theta_1 laws over radius samples.

    Radii equal to zero put an atom at the origin. With ``weights`` the radii
    are atoms of an exact radius law. Samples with more than ``max_radii``
    distinct values are replaced by that many mid-quantiles of equal weight.
    """

    def __init__(self, radius_samples, n, weights=None, max_radii=2048):
        r = np.asarray(radius_samples, dtype=np.float64).ravel()
        if r.size == 0:
            raise InvalidArgumentError("need at least one radius sample")
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise InvalidArgumentError("radius samples must be finite and nonnegative")
        self.n = check_int(n, "n", 2)
        # compress repeated radii (constant-radius laws collapse to one atom)
        uniq, inverse = np.unique(r, return_inverse=True)
        w = np.full(r.size, 1.0 / r.size) if weights is None else np.asarray(weights, float)
        if weights is None and uniq.size > max_radii:
            uniq = np.quantile(r, (np.arange(max_radii) + 0.5) / max_radii)
            self.weights = np.full(max_radii, 1.0 / max_radii)
        else:
            self.weights = np.bincount(inverse, weights=w) / w.sum()
        self.radii = uniq
        self.m = r.size
        self.exact = weights is not None or uniq.size == 1

    def _components(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        pos = self.radii > 0
        out = np.empty((x.size, self.radii.size))
        out[:, pos] = theta1_cdf(self.n, x[:, None] / self.radii[None, pos])
        out[:, ~pos] = (x[:, None] >= 0).astype(float)
        return out

    def __call__(self, x, chunk=4096):
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        out = np.empty(x.size)
        for s in range(0, x.size, chunk):
            out[s:s + chunk] = self._components(x[s:s + chunk]) @ self.weights
        return out[0] if scalar else out

    def stderr(self, x, chunk=4096):
        """Monte Carlo standard error of F(x); zero for exact radius laws."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        if self.exact:
            return np.zeros(x.size)
        out = np.empty(x.size)
        for s in range(0, x.size, chunk):
            C = self._components(x[s:s + chunk])
            mean = C @ self.weights
            out[s:s + chunk] = np.sqrt(np.maximum(C * C @ self.weights - mean * mean, 0.0)
                                       / max(self.m - 1, 1))
        return out

    def tabulate(self, grid):
        """Piecewise-linear interpolant through F evaluated on a sorted grid."""
        grid = np.asarray(grid, dtype=np.float64)
        vals = np.maximum.accumulate(self(grid))

        def interp(x):
            return np.interp(x, grid, vals, left=0.0, right=1.0)
        return interp


def average_cdf(radius_samples, n, x):
    """Monte Carlo mixture ``(1/m) sum_k theta1_cdf(n, x / r_k)``."""
    return AverageCdf(radius_samples, n)(x)


@dataclass(frozen=True)
class IdentityCheck:
    lhs: float
    rhs: float
    stderr: float
    passed: bool


def fourth_moment_identity(radius_samples, n, sigma4sq=None, k=3.0, weights=None):
    """Fourth moment of the average law against ``3 (sigma_4^2 - 2) / (n + 2)``.

    ``lhs = E|X|^4 * E theta_1^4 - 3`` from the radius samples; ``rhs`` uses
    ``sigma4sq`` (computed from the same radii when omitted). The standard error
    is a delta-method error of ``lhs - rhs`` in the radius sample; with
    ``weights`` the radii are an exact law and the error is zero.
    """
    n = check_int(n, "n", 2)
    r = np.asarray(radius_samples, dtype=np.float64).ravel()
    q = r * r
    c4 = theta1_moment(n, 4)
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != q.shape or np.any(w < 0) or w.sum() <= 0:
            raise InvalidArgumentError("weights must be nonnegative, one per radius")
        w = w / w.sum()
        lhs = float(w @ (q * q)) * c4 - 3.0
        if sigma4sq is None:
            sigma4sq = float(w @ (q - w @ q) ** 2) / n
        rhs = 3.0 * (sigma4sq - 2.0) / (n + 2)
        return IdentityCheck(lhs, rhs, 0.0, abs(lhs - rhs) <= 1e-12)
    if r.size < 2:
        raise InvalidArgumentError("need at least two radius samples")
    m = q.size
    lhs = float(np.mean(q * q)) * c4 - 3.0
    if sigma4sq is None:
        sigma4sq = float(np.var(q, ddof=1)) / n
    rhs = 3.0 * (sigma4sq - 2.0) / (n + 2)
    # lhs - rhs = c4 * (mean(q^2) - n^2 - n sigma4sq); sigma4sq ~ var(q)/n, so the
    # difference is c4 * (qbar^2 - n^2) to first order
    qbar = float(q.mean())
    se = c4 * 2.0 * abs(qbar) * float(np.std(q, ddof=1)) / math.sqrt(m)
    return IdentityCheck(lhs, rhs, se, abs(lhs - rhs) <= max(k * se, 1e-12))


def phi_grid(radius_samples=None, grid_size=4096):
    """Grid for sup-norm comparisons with Phi: Phi-quantiles plus radius breakpoints."""
    grid_size = check_int(grid_size, "grid_size", 100)
    u = (np.arange(grid_size) + 0.5) / grid_size
    pts = [ndtri(u), np.linspace(-0.5, 0.5, 257)]
    if radius_samples is not None:
        r = np.unique(np.asarray(radius_samples, dtype=np.float64))
        if r.size > 512:
            r = np.quantile(r, np.linspace(0, 1, 512))
        pts.append(r)
        pts.append(-r)
    return np.unique(np.concatenate(pts))


@dataclass(frozen=True)
class RhoFPhi:
    rho: float
    arg_x: float
    shape: float  # (1 + sigma4sq) / n, for constant fitting


def rho_f_phi(radius_samples, n, grid_size=4096, sigma4sq=None, weights=None):
    """``sup_x |F(x) - Phi(x)|`` over a refined grid for the average law F."""
    F = AverageCdf(radius_samples, n, weights=weights)
    grid = phi_grid(radius_samples, grid_size)
    diff = np.abs(F(grid) - std_normal_cdf(grid))
    i = int(np.argmax(diff))
    if sigma4sq is None:
        q = np.asarray(radius_samples, dtype=np.float64) ** 2
        if weights is not None:
            w = np.asarray(weights, dtype=np.float64) / np.sum(weights)
            sigma4sq = float(w @ (q - w @ q) ** 2) / n
        else:
            sigma4sq = float(np.var(q, ddof=1)) / n if q.size > 1 else 0.0
    return RhoFPhi(float(diff[i]), float(grid[i]), (1.0 + sigma4sq) / n)
