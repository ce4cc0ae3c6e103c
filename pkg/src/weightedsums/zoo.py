"""Catalogue of isotropic, symmetric test laws on R^n.

Model descriptors serialize as ``{"family": <name>, "params": {<key>: <float>}}``;
only ``scale_mixture`` takes parameters (``r1``, ``r2``, ``w``).
"""
import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln, jv

from ._rng import ROW_BLOCK, STREAM_BATCH, blocked_rows, check_seed
from ._validation import check_int
from .exceptions import InvalidArgumentError, ResourceLimitError, UnsupportedError

FAMILIES = ("gaussian_std", "rademacher", "uniform_cube", "laplace_iid",
            "sphere_surface", "ball_uniform", "scale_mixture")

IID_FAMILIES = ("gaussian_std", "rademacher", "uniform_cube", "laplace_iid")
ROTATION_INVARIANT = ("gaussian_std", "sphere_surface", "ball_uniform", "scale_mixture")
LOG_CONCAVE = ("gaussian_std", "uniform_cube", "laplace_iid", "ball_uniform")

# E R^4 = 4 with w r1^2 + (1-w) r2^2 = 1
SCALE_MIXTURE_DEFAULTS = {"r1": math.sqrt(7.0), "r2": math.sqrt(0.5), "w": 1.0 / 13.0}

_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class DistributionModel:
    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgumentError(
                f"unknown family {self.family!r}; expected one of {', '.join(FAMILIES)}")
        params = {k: float(v) for k, v in self.params.items()}
        if self.family == "scale_mixture":
            merged = dict(SCALE_MIXTURE_DEFAULTS)
            unknown = set(params) - set(merged)
            if unknown:
                raise InvalidArgumentError(f"unknown scale_mixture params {sorted(unknown)}")
            if params and set(params) != set(merged):
                raise InvalidArgumentError("scale_mixture needs all of r1, r2, w or none")
            merged.update(params)
            r1, r2, w = merged["r1"], merged["r2"], merged["w"]
            if r1 <= 0 or r2 <= 0 or not 0 < w < 1:
                raise InvalidArgumentError("scale_mixture needs r1, r2 > 0 and 0 < w < 1")
            if abs(w * r1**2 + (1 - w) * r2**2 - 1.0) > 1e-9:
                raise InvalidArgumentError("scale_mixture must satisfy w r1^2 + (1-w) r2^2 = 1")
            params = merged
        elif params:
            raise InvalidArgumentError(f"{self.family} takes no parameters")
        object.__setattr__(self, "params", params)

    # metadata flags
    @property
    def iid(self):
        return self.family in IID_FAMILIES

    @property
    def finite_support(self):
        return self.family == "rademacher"

    @property
    def log_concave(self):
        return self.family in LOG_CONCAVE

    symmetric = True
    isotropic = True
    coordinatewise_symmetric = True
    exchangeable = True

    def radius_fourth_moment(self):
        """E R^4 of the mixing radius (scale_mixture only)."""
        p = self.params
        return p["w"] * p["r1"] ** 4 + (1 - p["w"]) * p["r2"] ** 4

    def to_dict(self):
        return {"family": self.family, "params": dict(sorted(self.params.items()))}

    @classmethod
    def from_dict(cls, obj):
        if not isinstance(obj, dict) or "family" not in obj:
            raise InvalidArgumentError("model descriptor must be an object with a 'family' key")
        unknown = set(obj) - {"family", "params"}
        if unknown:
            raise InvalidArgumentError(f"unknown model descriptor keys {sorted(unknown)}")
        return cls(obj["family"], dict(obj.get("params") or {}))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class SampleBatch:
    data: np.ndarray
    model: DistributionModel
    seed: int

    @property
    def m(self):
        return self.data.shape[0]

    @property
    def n(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class ExactMoments:
    """Closed-form facts about a model at dimension ``n``; ``None`` means unknown."""

    e_x4: Optional[float] = None
    cov_squares: Optional[float] = None
    sigma4sq: Optional[float] = None
    lam: Optional[float] = None
    lambda1: Optional[float] = None
    bar_beta4: Optional[float] = None

    @property
    def var_squares(self):
        return None if self.e_x4 is None else self.e_x4 - 1.0

    def v_functional(self, n):
        """Top eigenvalue of ``(var - c) I + c 11^T`` for exchangeable laws."""
        if self.e_x4 is None or self.cov_squares is None:
            return None
        c = self.cov_squares
        return max(self.var_squares - c + n * c, self.var_squares - c)

    def to_dict(self):
        return {"e_x4": self.e_x4, "cov_squares": self.cov_squares, "sigma4sq": self.sigma4sq,
                "lambda": self.lam, "lambda1": self.lambda1, "bar_beta4": self.bar_beta4}


@dataclass(frozen=True)
class FiniteSupportLaw:
    """A law on R^n with finitely many atoms ``points`` (rows) and ``probs``."""

    points: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        if self.points.ndim != 2 or self.probs.shape != (self.points.shape[0],):
            raise InvalidArgumentError("points must be (k, n) and probs (k,)")
        if abs(self.probs.sum() - 1.0) > 1e-12 or np.any(self.probs < 0):
            raise InvalidArgumentError("probs must be nonnegative and sum to 1")

    @property
    def n(self):
        return self.points.shape[1]


@dataclass(frozen=True)
class DiscreteLaw:
    """A law on the line with strictly increasing ``atoms``."""

    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        if self.atoms.ndim != 1 or self.atoms.shape != self.probs.shape:
            raise InvalidArgumentError("atoms and probs must be matching 1-D arrays")
        if self.atoms.size == 0:
            raise InvalidArgumentError("a law needs at least one atom")
        if np.any(np.diff(self.atoms) <= 0):
            raise InvalidArgumentError("atoms must be strictly increasing")
        if abs(self.probs.sum() - 1.0) > 1e-12 or np.any(self.probs < 0):
            raise InvalidArgumentError("probs must be nonnegative and sum to 1")

    def cdf_at_atoms(self):
        """Return ``(F(a), F(a-))`` at every atom."""
        right = np.cumsum(self.probs)
        left = np.concatenate(([0.0], right[:-1]))
        return np.minimum(right, 1.0), left

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["atom", "prob"])
            for a, p in zip(self.atoms, self.probs):
                writer.writerow([repr(float(a)), repr(float(p))])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(np.array([float(r["atom"]) for r in rows]),
                   np.array([float(r["prob"]) for r in rows]))


# --- sampling ---------------------------------------------------------------

def _draw_block(model, n):
    fam = model.family

    def draw(rng, b):
        if fam == "gaussian_std":
            return rng.standard_normal((b, n))
        if fam == "rademacher":
            return 2.0 * rng.integers(0, 2, size=(b, n)).astype(np.float64) - 1.0
        if fam == "uniform_cube":
            return rng.uniform(-_SQRT3, _SQRT3, size=(b, n))
        if fam == "laplace_iid":
            return rng.laplace(0.0, 1.0 / math.sqrt(2.0), size=(b, n))
        G = rng.standard_normal((b, n))
        if fam == "scale_mixture":
            p = model.params
            pick = rng.random(b) < p["w"]
            return G * np.where(pick, p["r1"], p["r2"])[:, None]
        U = G / np.linalg.norm(G, axis=1, keepdims=True)
        if fam == "sphere_surface":
            return U * math.sqrt(n)
        # ball_uniform: radius fraction has density n r^{n-1}, i.e. Beta(n, 1)
        r = math.sqrt(n + 2.0) * rng.random(b) ** (1.0 / n)
        return U * r[:, None]

    return draw


def sample_batch(model, n, m, seed):
    """Draw ``m`` i.i.d. rows; row ``k`` depends only on ``(model, n, seed, k)``."""
    n = check_int(n, "n", 2)
    m = check_int(m, "m", 1)
    seed = check_seed(seed)
    data = blocked_rows(seed, STREAM_BATCH, m, ROW_BLOCK, _draw_block(model, n))
    data.setflags(write=False)
    return SampleBatch(data, model, seed)


# --- closed forms -------------------------------------------------------------

def _rotation_invariant_moments(kappa, sigma4sq, n):
    """Moments of ``R * uniform direction`` given ``kappa = E X_1^2 X_2^2``.

    Fourth moments are ``kappa (d_ij d_kl + d_ik d_jl + d_il d_jk)``, so for a unit
    HS-norm symmetric A, ``Var<AX,X> = 2 kappa + (kappa - 1) tr(A)^2`` with
    ``tr(A)^2 <= n``.
    """
    lam = 2 * kappa + max(kappa - 1.0, 0.0) * n
    return dict(e_x4=3 * kappa, cov_squares=kappa - 1.0, sigma4sq=sigma4sq, lam=lam,
                bar_beta4=3 * kappa)


def exact_metadata(model, n):
    n = check_int(n, "n", 2)
    fam = model.family
    if fam in IID_FAMILIES:
        e4, lambda1 = {
            "gaussian_std": (3.0, 1.0),
            "rademacher": (1.0, None),
            "uniform_cube": (1.8, math.pi**2 / 12.0),
            "laplace_iid": (6.0, 0.5),
        }[fam]
        # independent symmetric coordinates: Var<AX,X> = 2 sum_{i!=j} a_ij^2
        # + sum_i a_ii^2 Var(X_i^2)
        return ExactMoments(e_x4=e4, cov_squares=0.0, sigma4sq=e4 - 1.0,
                            lam=max(2.0, e4 - 1.0), lambda1=lambda1, bar_beta4=e4)
    if fam == "sphere_surface":
        return ExactMoments(**_rotation_invariant_moments(n / (n + 2.0), 0.0, n),
                            lambda1=(n - 1.0) / n)
    if fam == "ball_uniform":
        return ExactMoments(**_rotation_invariant_moments(
            (n + 2.0) / (n + 4.0), 4.0 / (n + 4.0), n))
    mu4 = model.radius_fourth_moment()
    return ExactMoments(**_rotation_invariant_moments(mu4, n * (mu4 - 1.0) + 2 * mu4, n))


def enumerate_support(model, n, budget=2**20):
    """Complete atom list of a finite-support model."""
    n = check_int(n, "n", 1)
    if not model.finite_support:
        raise UnsupportedError(f"{model.family} does not have finite support")
    if 2**n > budget:
        raise ResourceLimitError(f"2^{n} atoms exceed the budget of {budget}")
    points = np.array(list(itertools.product((-1.0, 1.0), repeat=n)))
    return FiniteSupportLaw(points, np.full(2**n, 2.0**-n))


def _bessel_cf(nu, s):
    """``Gamma(nu+1) (2/s)^nu J_nu(s) = 0F1(; nu+1; -s^2/4)``, with value 1 at ``s = 0``.

    The power series is summed while ``s^2/4 <= 10 (nu+1)``, where its terms stay
    below ``e^10``; beyond that the Bessel form is evaluated in log space.
    """
    s = np.abs(np.asarray(s, dtype=np.float64))
    out = np.empty_like(s)
    b = nu + 1.0
    z = -0.25 * s * s
    series = -z <= 10.0 * b
    zs = z[series]
    term = np.ones_like(zs)
    total = np.ones_like(zs)
    for k in range(400):
        term = term * zs / ((b + k) * (k + 1))
        total += term
        if np.all(np.abs(term) <= 1e-17 * np.maximum(np.abs(total), 1e-300)):
            break
    out[series] = total
    big = s[~series]
    if big.size:
        J = jv(nu, big)
        with np.errstate(divide="ignore"):
            logmag = gammaln(b) + nu * np.log(2.0 / big) + np.log(np.abs(J))
        out[~series] = np.sign(J) * np.exp(logmag)
    return out


def characteristic_function(model, thetas, t):
    """Exact ``E exp(i t <X, theta>)`` for each row of ``thetas`` and each ``t``.

    Returns an array of shape ``(len(thetas), len(t))``; all zoo laws are
    symmetric so the values are real.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    n = thetas.shape[1]
    fam = model.family
    s = thetas[:, :, None] * t[None, None, :]
    if fam == "rademacher":
        return np.prod(np.cos(s), axis=1)
    if fam == "uniform_cube":
        return np.prod(np.sinc(_SQRT3 * s / np.pi), axis=1)
    if fam == "laplace_iid":
        return np.prod(1.0 / (1.0 + 0.5 * s**2), axis=1)
    norms = np.linalg.norm(thetas, axis=1)[:, None] * t[None, :]
    if fam == "gaussian_std":
        return np.exp(-0.5 * norms**2)
    if fam == "scale_mixture":
        p = model.params
        return (p["w"] * np.exp(-0.5 * (p["r1"] * norms) ** 2)
                + (1 - p["w"]) * np.exp(-0.5 * (p["r2"] * norms) ** 2))
    if fam == "sphere_surface":
        return _bessel_cf(n / 2.0 - 1.0, math.sqrt(n) * norms)
    return _bessel_cf(n / 2.0, math.sqrt(n + 2.0) * norms)
