"""End-to-end experiments: average Kolmogorov distances, rate sweeps, invariant suites."""
import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional

import numpy as np

from . import __version__
from ._rng import check_seed
from ._validation import check_int
from .charfn import (cf_profile, default_t_grid, hessian_deviation, lemma61_T0, lemma61_bound,
                     profile_from_batch)
from .distances import (AverageCdf, fourth_moment_identity, kolmogorov_discrete,
                        kolmogorov_empirical, rho_f_phi, weighted_sum_law)
from .exceptions import InvalidArgumentError, ResourceLimitError, UnsupportedError
from .functionals import check_bounds, estimate_functionals, exchangeable_identity
from .sphere import SphereTestFunction, sample_directions, second_order_poincare_check
from .zoo import (FAMILIES, DistributionModel, SampleBatch, enumerate_support, exact_metadata,
                  sample_batch)

MODES = ("exact", "empirical")
TARGETS = ("phi", "avg_F", "both")
FIT_FORMS = ("power", "power_times_log")
CF_SOURCES = ("closed_form", "batch")
# grid resolution for tabulating the average law before evaluating it at atoms
F_TABLE_POINTS = 4096


# --- configuration --------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines an experiment's output.

    ``m = 0`` selects the exact path. ``cf_source`` picks where the smoothing-bound
    profile comes from: the model's closed-form cf or the sampled batch.
    ``threads`` only affects scheduling, so it is not part of the serialized form.
    """

    model: DistributionModel
    n_grid: tuple
    seed: int
    n_theta: int = 300
    m: int = 0
    mode: str = "exact"
    target: str = "both"
    t_lo: Optional[float] = None
    t_hi: Optional[float] = None
    t_count: Optional[int] = None
    antithetic: bool = True
    cf_source: str = "closed_form"
    output: Optional[str] = None
    threads: int = field(default=1, compare=False)

    def __post_init__(self):
        if not isinstance(self.model, DistributionModel):
            raise InvalidArgumentError("model must be a DistributionModel")
        grid = (self.n_grid,) if isinstance(self.n_grid, int) else tuple(self.n_grid)
        if not grid:
            raise InvalidArgumentError("n_grid must not be empty")
        grid = tuple(check_int(v, "n", 2) for v in grid)
        object.__setattr__(self, "n_grid", grid)
        object.__setattr__(self, "seed", check_seed(self.seed))
        check_int(self.n_theta, "n_theta", 2)
        if self.antithetic and self.n_theta % 2:
            raise InvalidArgumentError("antithetic pairing needs an even n_theta")
        check_int(self.m, "m", 0)
        check_int(self.threads, "threads", 1)
        if self.mode not in MODES:
            raise InvalidArgumentError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.cf_source not in CF_SOURCES:
            raise InvalidArgumentError(
                f"cf_source must be one of {CF_SOURCES}, got {self.cf_source!r}")
        if self.target not in TARGETS:
            raise InvalidArgumentError(f"target must be one of {TARGETS}, got {self.target!r}")
        if self.mode == "exact":
            if not self.model.finite_support:
                raise UnsupportedError(
                    f"exact mode needs a finite-support model, {self.model.family} is continuous")
            if self.m != 0:
                raise InvalidArgumentError("exact mode takes m = 0")
        elif self.m < 2:
            raise InvalidArgumentError("empirical mode needs m >= 2")
        t_parts = (self.t_lo, self.t_hi, self.t_count)
        if any(v is not None for v in t_parts):
            if any(v is None for v in t_parts):
                raise InvalidArgumentError("t grid needs all of t_lo, t_hi, t_count")
            if not 0 < self.t_lo < self.t_hi or check_int(self.t_count, "t_count", 2) < 2:
                raise InvalidArgumentError("t grid needs 0 < t_lo < t_hi and t_count >= 2")

    def t_grid(self, n):
        if self.t_lo is None:
            return default_t_grid(n, lemma61_T0(n))
        return np.geomspace(self.t_lo, self.t_hi, self.t_count)

    def to_dict(self):
        return {"model": self.model.to_dict(), "n_grid": list(self.n_grid), "seed": self.seed,
                "n_theta": self.n_theta, "m": self.m, "mode": self.mode,
                "target": self.target, "t_lo": self.t_lo, "t_hi": self.t_hi,
                "t_count": self.t_count, "antithetic": self.antithetic,
                "cf_source": self.cf_source, "output": self.output}

    @classmethod
    def from_dict(cls, obj, threads=1):
        if not isinstance(obj, dict):
            raise InvalidArgumentError("config must be a JSON object")
        allowed = {f.name for f in fields(cls)} - {"threads"}
        unknown = sorted(set(obj) - allowed)
        if unknown:
            raise InvalidArgumentError(f"unknown config key(s): {', '.join(unknown)}")
        for key in ("model", "n_grid", "seed"):
            if key not in obj:
                raise InvalidArgumentError(f"config is missing required key {key!r}")
        kw = dict(obj)
        kw["model"] = DistributionModel.from_dict(kw["model"])
        return cls(threads=threads, **kw)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text, threads=1):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidArgumentError(
                f"config is not valid JSON: line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from exc
        return cls.from_dict(obj, threads=threads)


# --- average Kolmogorov distance -----------------------------------------------------

@dataclass
class KolmogorovSummary:
    n: int
    rho_phi: np.ndarray
    rho_F: Optional[np.ndarray]
    mean_phi: float
    stderr_phi: float
    mean_F: float
    stderr_F: float
    F_stderr: float

    def to_dict(self):
        return {"n": self.n, "mean_rho_phi": self.mean_phi, "stderr_phi": self.stderr_phi,
                "mean_rho_F": self.mean_F, "stderr_F": self.stderr_F,
                "F_stderr": self.F_stderr,
                "rho_phi": [float(v) for v in self.rho_phi],
                "rho_F": None if self.rho_F is None else [float(v) for v in self.rho_F]}


def _mean_se(values, antithetic):
    v = np.asarray(values, dtype=np.float64)
    units = 0.5 * (v[0::2] + v[1::2]) if antithetic else v
    se = float(np.std(units, ddof=1) / math.sqrt(units.size)) if units.size > 1 else 0.0
    return float(v.mean()), se


def _average_law(radii, n, weights=None):
    """Average law F, tabulated on a fine grid, and its largest Monte Carlo error."""
    F = AverageCdf(radii, n, weights=weights)
    rmax = float(np.max(radii))
    if rmax == 0:
        return F, 0.0
    grid = np.linspace(-rmax, rmax, F_TABLE_POINTS)
    F_se = float(np.max(F.stderr(grid[:: max(1, F_TABLE_POINTS // 512)])))
    return F.tabulate(grid), F_se


def avg_kolmogorov(config, n=None):
    """Per-direction ``rho(F_theta, Phi)`` and ``rho(F_theta, F)`` with direction-level errors."""
    n = config.n_grid[0] if n is None else check_int(n, "n", 2)
    dirs = sample_directions(n, config.n_theta, config.seed, antithetic=config.antithetic)
    want_F = config.target in ("avg_F", "both")
    if config.mode == "exact":
        support = enumerate_support(config.model, n)
        radii = np.sqrt(np.einsum("ij,ij->i", support.points, support.points))
        F, F_se = _average_law(radii, n, weights=support.probs) if want_F else (None, 0.0)

        def one(i):
            law = weighted_sum_law(support, dirs.directions[i])
            rp = kolmogorov_discrete(law).rho
            rf = kolmogorov_discrete(law, F).rho if want_F else math.nan
            return rp, rf
        # a symmetric law gives S_{-theta} the same law as S_theta
        mirrored = config.antithetic and config.model.symmetric
        idx = range(0, config.n_theta, 2) if mirrored else range(config.n_theta)
    else:
        X = sample_batch(config.model, n, config.m, config.seed).data
        radii = np.sqrt(np.einsum("ij,ij->i", X, X))
        F, F_se = _average_law(radii, n) if want_F else (None, 0.0)

        def one(i):
            S = np.sort(X @ dirs.directions[i])
            rp = kolmogorov_empirical(S).rho
            rf = kolmogorov_empirical(S, F).rho if want_F else math.nan
            return rp, rf
        mirrored = False
        idx = range(config.n_theta)
    with ThreadPoolExecutor(max_workers=config.threads) as ex:
        results = list(ex.map(one, idx))
    out = np.empty((config.n_theta, 2))
    if mirrored:
        out[0::2] = results
        out[1::2] = results
    else:
        out[:] = results
    mean_phi, se_phi = _mean_se(out[:, 0], config.antithetic)
    if want_F:
        mean_F, se_F = _mean_se(out[:, 1], config.antithetic)
        se_F = math.hypot(se_F, F_se)
    else:
        mean_F = se_F = math.nan
    return KolmogorovSummary(n, out[:, 0].copy(), out[:, 1].copy() if want_F else None,
                             mean_phi, se_phi, mean_F, se_F, F_se)


# --- rate tables -------------------------------------------------------------------

RATE_COLUMNS = ("n", "mean_rho_phi", "stderr_phi", "mean_rho_F", "stderr_F", "lambda_hat",
                "sigma4sq_hat", "lemma61_value", "rho_F_phi")


@dataclass(frozen=True)
class RateRow:
    n: int
    mean_rho_phi: float
    stderr_phi: float
    mean_rho_F: float
    stderr_F: float
    lambda_hat: float
    sigma4sq_hat: float
    lemma61_value: float
    rho_F_phi: float


@dataclass(frozen=True)
class ExponentFit:
    alpha: float
    C: float
    r_squared: float
    form: str
    column: str = "mean_rho_phi"
    excluded_n: tuple = ()

    def to_dict(self):
        d = asdict(self)
        d["excluded_n"] = list(self.excluded_n)
        return d


@dataclass
class RateTable:
    rows: List[RateRow]
    fit: Optional[ExponentFit] = None
    config: Optional[ExperimentConfig] = None
    version: str = __version__

    def __post_init__(self):
        ns = [r.n for r in self.rows]
        if ns != sorted(ns) or len(set(ns)) != len(ns):
            raise InvalidArgumentError("rate table rows must have strictly increasing n")

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows], dtype=np.float64)

    def triangle_margins(self, k=3.0):
        """``mean rho(F,F) + rho(F,Phi) + k stderr - mean rho(F,Phi)`` per row."""
        return (self.column("mean_rho_F") + self.column("rho_F_phi")
                + k * np.hypot(self.column("stderr_phi"), self.column("stderr_F"))
                - self.column("mean_rho_phi"))

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(RATE_COLUMNS)
        for r in self.rows:
            writer.writerow([r.n] + [repr(float(getattr(r, c))) for c in RATE_COLUMNS[1:]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != RATE_COLUMNS:
                raise InvalidArgumentError(
                    f"{path}: line 1: expected header {','.join(RATE_COLUMNS)}")
            rows = []
            for lineno, rec in enumerate(reader, start=2):
                if not rec:
                    continue
                if len(rec) != len(RATE_COLUMNS):
                    raise InvalidArgumentError(
                        f"{path}: line {lineno}: expected {len(RATE_COLUMNS)} fields")
                try:
                    rows.append(RateRow(int(rec[0]), *(float(v) for v in rec[1:])))
                except ValueError as exc:
                    raise InvalidArgumentError(f"{path}: line {lineno}: {exc}") from exc
        return cls(rows)

    def to_dict(self):
        return {"version": self.version,
                "config": None if self.config is None else self.config.to_dict(),
                "columns": list(RATE_COLUMNS),
                "rows": [asdict(r) for r in self.rows],
                "fit": None if self.fit is None else self.fit.to_dict()}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, obj):
        rows = [RateRow(**r) for r in obj["rows"]]
        fit = obj.get("fit")
        if fit is not None:
            fit = ExponentFit(**{**fit, "excluded_n": tuple(fit["excluded_n"])})
        config = obj.get("config")
        if config is not None:
            config = ExperimentConfig.from_dict(config)
        return cls(rows, fit, config, obj.get("version", __version__))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _row_functionals(config, n):
    if config.mode == "exact":
        support = enumerate_support(config.model, n)
        return estimate_functionals(support.points, seed=config.seed,
                                    sample_weight=support.probs, compute_beta=False)
    X = sample_batch(config.model, n, config.m, config.seed)
    return estimate_functionals(X, seed=config.seed, compute_beta=False)


def rate_sweep(config):
    """One table row per ``n``: mean distances, functionals and the smoothing-bound shape."""
    if len(config.n_grid) < 3:
        raise InvalidArgumentError("a rate sweep needs at least 3 values of n")
    if any(b <= a for a, b in zip(config.n_grid, config.n_grid[1:])):
        raise InvalidArgumentError("n_grid must be strictly ascending")
    rows = []
    for n in config.n_grid:
        avg = avg_kolmogorov(config, n)
        est = _row_functionals(config, n)
        T0 = lemma61_T0(n)
        grid = config.t_grid(n)
        if grid[-1] < T0:
            grid = np.concatenate([grid, [T0]])
        use_batch = config.mode == "empirical" and config.cf_source == "batch"
        prof = cf_profile(config.model, n, grid, config.n_theta,
                          config.m if use_batch else 0, config.seed,
                          antithetic=config.antithetic, lambda_hat=est.lambda_hat)
        bound = lemma61_bound(prof, est.m4_lower, est.sigma4sq_hat, n, T0=T0)
        if config.mode == "exact":
            support = enumerate_support(config.model, n)
            radii = np.sqrt(np.einsum("ij,ij->i", support.points, support.points))
            rfp = rho_f_phi(radii, n, weights=support.probs).rho
        else:
            X = sample_batch(config.model, n, config.m, config.seed).data
            rfp = rho_f_phi(np.sqrt(np.einsum("ij,ij->i", X, X)), n).rho
        rows.append(RateRow(n, avg.mean_phi, avg.stderr_phi, avg.mean_F, avg.stderr_F,
                            est.lambda_hat, est.sigma4sq_hat, bound, rfp))
    return RateTable(rows, config=config)


def fit_exponent(table, form="power", column="mean_rho_phi", exclude_small=True):
    """Least-squares exponent of ``mean ~ C n^alpha`` (or ``C n^alpha log n``).

    When ``exclude_small`` is set and the fit has ``r_squared < 0.9``, the smallest
    ``n`` is dropped once (provided three rows remain) and reported in ``excluded_n``.
    """
    if form not in FIT_FORMS:
        raise InvalidArgumentError(f"form must be one of {FIT_FORMS}, got {form!r}")
    rows = table.rows if isinstance(table, RateTable) else table
    if len(rows) < 3:
        raise InvalidArgumentError("fitting needs at least 3 rows")
    n = np.array([r.n for r in rows], dtype=np.float64)
    y = np.array([getattr(r, column) for r in rows], dtype=np.float64)
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise InvalidArgumentError(f"{column} must be positive to fit a power law")
    if form == "power_times_log" and np.any(n <= 1):
        raise InvalidArgumentError("power_times_log needs n > 1")

    def solve(nn, yy):
        x = np.log(nn)
        z = np.log(yy) if form == "power" else np.log(yy / np.log(nn))
        alpha, icpt = np.polyfit(x, z, 1)
        resid = z - (alpha * x + icpt)
        ss_tot = float(np.sum((z - z.mean()) ** 2))
        r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
        return float(alpha), float(math.exp(icpt)), min(max(r2, 0.0), 1.0)

    alpha, C, r2 = solve(n, y)
    excluded = ()
    if exclude_small and r2 < 0.9 and n.size >= 4:
        alpha, C, r2 = solve(n[1:], y[1:])
        excluded = (int(n[0]),)
    return ExponentFit(alpha, C, r2, form, column, excluded)


def fit_dominance_constant(table, column="mean_rho_F"):
    """Smallest ``C`` with ``C * lemma61_value >= column`` on every row."""
    ratio = table.column(column) / table.column("lemma61_value")
    if np.any(~np.isfinite(ratio)):
        raise InvalidArgumentError("dominance fit needs finite, positive bound values")
    return float(np.max(ratio))


# --- invariant suite ------------------------------------------------------------------

@dataclass(frozen=True)
class SuiteEntry:
    model: str
    n: int
    check: str
    lhs: float
    rhs: float
    margin: float
    applicable: bool
    passed: bool
    seed: int

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        if not self.applicable:
            status = "SKIP"
        return (f"{status} {self.model:<14} n={self.n:<3} {self.check:<28} "
                f"lhs={self.lhs:.6g} rhs={self.rhs:.6g} margin={self.margin:.3g}")


@dataclass
class SuiteReport:
    entries: List[SuiteEntry] = field(default_factory=list)

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    def failures(self):
        return [e for e in self.entries if not e.passed]

    def __getitem__(self, key):
        model, n, check = key
        for e in self.entries:
            if (e.model, e.n, e.check) == (model, n, check):
                return e
        raise KeyError(key)

    def to_dict(self):
        return {"passed": self.passed, "entries": [asdict(e) for e in self.entries]}


def isotropy_check(X, sample_weight=None, k=5.0):
    """Largest standardized deviation of the mean from 0 and covariance from I.

    Returns ``(z_max, passed)``; with weights the law is exact and the tolerance
    is ``1e-9``.
    """
    X = np.asarray(X, dtype=np.float64)
    m, n = X.shape
    if sample_weight is not None:
        w = np.asarray(sample_weight, float) / np.sum(sample_weight)
        mu = w @ X
        C = (X * w[:, None]).T @ X
        dev = max(float(np.max(np.abs(mu))), float(np.max(np.abs(C - np.eye(n)))))
        return dev, dev <= 1e-9
    mu = X.mean(axis=0)
    z_mean = np.abs(mu) / (X.std(axis=0, ddof=1) / math.sqrt(m))
    P = np.einsum("ki,kj->kij", X, X) if m * n * n <= 2**26 else None
    if P is None:
        sub = X[: max(2, 2**26 // (n * n))]
        P = np.einsum("ki,kj->kij", sub, sub)
    C = P.mean(axis=0)
    se = P.std(axis=0, ddof=1) / math.sqrt(P.shape[0])
    z_cov = np.abs(C - np.eye(n)) / np.where(se > 0, se, np.inf)
    exact_dev = np.abs(C - np.eye(n))[se == 0]
    z = max(float(z_mean.max()), float(z_cov.max()))
    ok = z <= k and (exact_dev.size == 0 or float(exact_dev.max()) <= 1e-9)
    return z, ok


def batch_checks(X, n, model=None, seed=0, sample_weight=None, label=None, k=3.0,
                 n_dirs_hessian=5, lambda_iters=500):
    """Every batch-level check: isotropy, functional inequalities, identities, cf bounds."""
    label = label or (model.family if model is not None else "batch")
    arr = X.data if isinstance(X, SampleBatch) else np.asarray(X, dtype=np.float64)
    out = []

    def add(check, lhs, rhs, margin, applicable=True):
        passed = (not applicable) or bool(margin >= 0)
        out.append(SuiteEntry(label, n, check, float(lhs), float(rhs), float(margin),
                              bool(applicable), passed, int(seed)))

    z, iso_ok = isotropy_check(arr, sample_weight)
    add("isotropy", z, 5.0 if sample_weight is None else 1e-9,
        (5.0 if sample_weight is None else 1e-9) - z)
    est = estimate_functionals(arr, seed=seed, sample_weight=sample_weight, compute_beta=False,
                               max_iters=lambda_iters)
    meta = exact_metadata(model, n) if model is not None else None
    report = check_bounds(est, meta, n, model=model, isotropic=iso_ok, k=k)
    for c in report.checks:
        add(c.name, c.lhs, c.rhs, c.margin, c.applicable)

    if model is not None and model.exchangeable and arr.shape[0] >= 16:
        lhs, rhs, se = exchangeable_identity(arr)
        add("exchangeable_sigma4_identity", lhs, rhs, max(k * se, 1e-12) - abs(lhs - rhs))

    radii = np.sqrt(np.einsum("ij,ij->i", arr, arr))
    ident = fourth_moment_identity(radii, n, k=k, weights=sample_weight)
    slack = 1e-12 if ident.stderr == 0 else k * ident.stderr
    add("average_law_fourth_moment", ident.lhs, ident.rhs,
        max(slack, 1e-12) - abs(ident.lhs - ident.rhs))

    ts = (0.5, 1.0, 2.0)
    prof = profile_from_batch(arr, ts, 300, seed, lambda_hat=est.lambda_hat,
                              sample_weight=sample_weight)
    for i, t in enumerate(ts):
        add(f"cf_first_order_t{t:g}", prof.variance_hat[i], prof.bound_first[i],
            prof.bound_first[i] + k * prof.stderr[i] - prof.variance_hat[i])

    if arr.shape[0] >= n + 2:
        dirs = sample_directions(n, n_dirs_hessian, seed ^ 0x4E55)
        worst_hs = worst_op = math.inf
        rec_hs = rec_op = None
        for theta in dirs:
            for t in ts:
                h = hessian_deviation(arr, theta, t, est.lambda_hat, sample_weight=sample_weight)
                mh = h.hs_bound + 5.0 * h.hs_stderr - h.hs_norm_sq
                mo = h.op_bound + 5.0 * h.op_stderr - h.op_norm
                if mh < worst_hs:
                    worst_hs, rec_hs = mh, h
                if mo < worst_op:
                    worst_op, rec_op = mo, h
        add("hessian_hs_bound", rec_hs.hs_norm_sq, rec_hs.hs_bound, worst_hs)
        add("hessian_op_bound", rec_op.op_norm, rec_op.op_bound, worst_op)
    return out


def _model_data(model, n, seed, m, exact_budget):
    if model.finite_support:
        try:
            law = enumerate_support(model, n, budget=exact_budget)
            return law.points, law.probs
        except ResourceLimitError:
            pass
    return sample_batch(model, n, m, seed).data, None


def invariant_suite(models, n_list, seed, m=20000, exact_budget=2**16, poincare_mc=100000):
    """Run every applicable check on each ``(model, n)``; failures are data, not errors."""
    seed = check_seed(seed)
    report = SuiteReport()
    models = [DistributionModel(f) if isinstance(f, str) else f for f in models]
    if not models:
        return report
    for n in n_list:
        n = check_int(n, "n", 2)
        for model in models:
            X, w = _model_data(model, n, seed, m, exact_budget)
            report.entries.extend(batch_checks(X, n, model=model, seed=seed, sample_weight=w))
        if n >= 3:
            for kind, idx in (("offdiag_product", (0, 1)), ("diag_centered", (0, 0))):
                c = second_order_poincare_check(SphereTestFunction(kind, idx), n,
                                                poincare_mc, seed)
                report.entries.append(SuiteEntry(
                    "sphere", n, f"second_order_poincare_{kind}", c.lhs, c.rhs,
                    c.rhs + 3 * c.stderr - c.lhs, True, c.passed, seed))
    return report


def all_models():
    return [DistributionModel(f) for f in FAMILIES]
