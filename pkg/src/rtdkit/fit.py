"""Base-2 exponential and Weibull run-length models, censored MLE, chi-square GOF.

Both families are parameterised by their median ``m``:

    exponential  F(x) = 1 - 2**(-x/m)
    weibull      F(x) = 1 - 2**(-(x/m)**alpha)

Censored trials (runs that hit the cutoff) enter every likelihood as survival
mass at the cutoff.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special, stats

from .rld import Rld

LN2 = math.log(2.0)
MIN_FIT_SUCCESSES = 30
MIN_GOF_SUCCESSES = 50
MIN_EXPECTED = 5.0
DEFAULT_SIGNIFICANCE = 0.05
# zero-length runs have no finite log-density under a Weibull with alpha != 1
ZERO_LENGTH_SUBSTITUTE = 0.5
ALPHA_BOUNDS = (0.02, 50.0)


class InsufficientSample(ValueError):
    pass


class FitFailed(RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(f"{message} {self.diagnostics}" if diagnostics else message)


@dataclass(frozen=True)
class Exponential:
    m: float

    family = "exponential"
    n_params = 1

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("median m must be positive")

    @property
    def alpha(self) -> float:
        return 1.0

    @property
    def horizon(self) -> float:
        return math.inf

    @property
    def rate(self) -> float:
        """Base-e rate lambda with F(x) = 1 - exp(-lambda x)."""
        return LN2 / self.m

    @property
    def mean(self) -> float:
        return self.m / LN2

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return -np.expm1(-LN2 * np.maximum(x, 0.0) / self.m)

    def sf(self, x):
        return np.exp(-LN2 * np.maximum(np.asarray(x, dtype=float), 0.0) / self.m)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, self.rate * self.sf(x), 0.0)

    def quantile(self, p):
        return exp_quantile(self.m, p)

    def truncated_mean(self, t):
        """Integral of the survival function over [0, t]."""
        t = np.asarray(t, dtype=float)
        return self.mean * -np.expm1(-LN2 * t / self.m)

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        return self.m * np.log2(1.0 / rng.random(size))

    def to_dict(self) -> dict:
        return {"family": self.family, "m": self.m, "rate_base_e": self.rate}


@dataclass(frozen=True)
class Weibull:
    m: float
    alpha: float

    family = "weibull"
    n_params = 2

    def __post_init__(self):
        if not (self.m > 0 and self.alpha > 0):
            raise ValueError("m and alpha must be positive")

    @property
    def horizon(self) -> float:
        return math.inf

    @property
    def scale(self) -> float:
        """Base-e scale beta with F(x) = 1 - exp(-(x/beta)**alpha)."""
        return self.m / LN2 ** (1.0 / self.alpha)

    @property
    def mean(self) -> float:
        return self.scale * math.gamma(1.0 + 1.0 / self.alpha)

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return -np.expm1(-LN2 * (x / self.m) ** self.alpha)

    def sf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return np.exp(-LN2 * (x / self.m) ** self.alpha)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (np.maximum(x, 0.0) / self.m) ** self.alpha
            d = self.alpha * LN2 * z / np.where(x > 0, x, 1.0) * np.exp(-LN2 * z)
        return np.where(x > 0, d, 0.0)

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        return self.m * np.log2(1.0 / (1.0 - p)) ** (1.0 / self.alpha)

    def truncated_mean(self, t):
        t = np.asarray(t, dtype=float)
        a = 1.0 / self.alpha
        z = (np.maximum(t, 0.0) / self.scale) ** self.alpha
        return self.scale * math.gamma(1.0 + a) * special.gammainc(a, z)

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        return self.m * np.log2(1.0 / rng.random(size)) ** (1.0 / self.alpha)

    def to_dict(self) -> dict:
        return {"family": self.family, "m": self.m, "alpha": self.alpha,
                "scale_base_e": self.scale}


ModelCdf = Exponential | Weibull


def model_cdf(model: ModelCdf, x: float) -> float:
    if x < 0:
        raise ValueError("x must be >= 0")
    return float(model.cdf(x))


def exp_quantile(m: float, p):
    """Run length by which ed[m] reaches probability ``p``."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr >= 1) or np.any(p_arr < 0):
        raise ValueError("p must lie in [0, 1)")
    out = m * -np.log1p(-p_arr) / LN2
    return float(out) if out.ndim == 0 else out


# chi-square ---------------------------------------------------------------


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    df: int
    p_value: float
    significance: float
    edges: tuple[float, ...]
    observed: tuple[int, ...]
    expected: tuple[float, ...]
    censored_cell: bool

    @property
    def passed(self) -> bool:
        return self.p_value >= self.significance

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "reject"

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "significance": self.significance,
            "verdict": self.verdict,
            "binning": {
                "edges": list(self.edges),
                "observed": list(self.observed),
                "expected": list(self.expected),
                "censored_cell": self.censored_cell,
            },
        }


def default_bin_count(n: int) -> int:
    return max(3, math.ceil(2 * n ** 0.4))


def chi_square_gof(rld: Rld, model: ModelCdf, n_params: int | None = None,
                   significance: float = DEFAULT_SIGNIFICANCE, bins: int | None = None,
                   left_truncate: float = 0.0) -> ChiSquareResult:
    """Pearson chi-square test of ``rld`` against ``model``.

    Cells have equal probability under the model on ``[left_truncate, cutoff]``;
    censored trials form one extra cell beyond the cutoff.  Adjacent cells are
    merged until every expected count is at least 5.  ``df = cells - 1 -
    n_params``.  With ``left_truncate > 0`` runs shorter than it are dropped
    and the model is conditioned on exceeding it.
    """
    if n_params is None:
        n_params = model.n_params
    x = rld.successes[rld.successes >= left_truncate]
    if x.size < MIN_GOF_SUCCESSES:
        raise InsufficientSample(f"chi-square needs >= {MIN_GOF_SUCCESSES} successes, got {x.size}")
    n_total = rld.n_trials - (rld.n_success - x.size)
    n_cens = rld.n_censored
    f_lo = float(model.cdf(left_truncate)) if left_truncate > 0 else 0.0
    f_c = float(model.cdf(rld.cutoff))
    mass = (f_c - f_lo) / (1.0 - f_lo)
    if not mass > 0:
        raise InsufficientSample("model puts no mass below the cutoff")
    k = bins or default_bin_count(x.size)
    k = max(1, min(k, int(n_total * mass // MIN_EXPECTED)))
    probs = f_lo + (f_c - f_lo) * np.arange(1, k) / k
    inner = np.asarray(model.quantile(probs), dtype=float)
    edges = np.concatenate([[left_truncate], inner, [rld.cutoff]])
    # cells are (edges[i], edges[i+1]]; the first also includes its left end
    idx = np.searchsorted(inner, x, side="left")
    observed = np.bincount(idx, minlength=k).astype(float)
    expected = np.full(k, n_total * mass / k)
    censored_cell = n_cens > 0 or mass < 1.0 - 1e-12
    if censored_cell:
        observed = np.append(observed, n_cens)
        expected = np.append(expected, n_total * (1.0 - mass))
        edges = np.append(edges, math.inf)
    observed, expected, edges = _merge_small(list(observed), list(expected), list(edges))
    cells = len(observed)
    df = cells - 1 - n_params
    if cells < 3 or df < 1:
        raise InsufficientSample(f"sample too small for GOF ({cells} cells after merging)")
    obs = np.array(observed)
    exp = np.array(expected)
    stat = float(np.sum((obs - exp) ** 2 / exp))
    p = float(stats.chi2.sf(stat, df))
    return ChiSquareResult(stat, df, p, significance, tuple(float(e) for e in edges),
                           tuple(int(o) for o in obs), tuple(float(e) for e in exp),
                           censored_cell)


def _merge_small(observed, expected, edges):
    """Merge each under-filled cell into its neighbour (rightmost cells go left)."""
    i = 0
    while i < len(expected) and len(expected) > 1:
        if expected[i] >= MIN_EXPECTED - 1e-9:
            i += 1
            continue
        j = i + 1 if i + 1 < len(expected) else i - 1
        lo, hi = min(i, j), max(i, j)
        observed[lo:hi + 1] = [observed[lo] + observed[hi]]
        expected[lo:hi + 1] = [expected[lo] + expected[hi]]
        del edges[hi]
        i = lo
    return observed, expected, edges


# fitting -------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    model: ModelCdf
    n_used: int
    n_censored: int
    chi2: ChiSquareResult | None
    log_likelihood: float
    median_match_m: float | None = None
    alpha_ci: tuple[float, float] | None = None
    alpha_lr_p_value: float | None = None
    alpha_below_one: bool | None = None
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool | None:
        return None if self.chi2 is None else self.chi2.passed

    def to_dict(self) -> dict:
        d = {
            "model": self.model.to_dict(),
            "n_used": self.n_used,
            "n_censored": self.n_censored,
            "log_likelihood": self.log_likelihood,
            "median_match_m": self.median_match_m,
            "chi2": None if self.chi2 is None else self.chi2.to_dict(),
        }
        if self.alpha_ci is not None:
            d["alpha_ci95"] = list(self.alpha_ci)
            d["alpha_vs_1_lr_p_value"] = self.alpha_lr_p_value
            d["alpha_significantly_below_1"] = self.alpha_below_one
        d.update(self.extra)
        return d


def _check_sample(rld: Rld, min_successes: int) -> None:
    if rld.n_success < min_successes:
        raise InsufficientSample(
            f"insufficient sample: {rld.n_success} successes, need >= {min_successes}")


def _profiled_median(x: np.ndarray, n_cens: int, cutoff: float, alpha: float) -> float:
    """Censored-MLE median for fixed shape ``alpha``."""
    scale = max(cutoff if n_cens else float(x.max()), 1e-300)
    s = np.sum((x / scale) ** alpha) + n_cens * (cutoff / scale) ** alpha
    beta = scale * (s / x.size) ** (1.0 / alpha)
    return float(beta * LN2 ** (1.0 / alpha))


def _weibull_profile(rld: Rld):
    """Profile log-likelihood of the shape, with the scale maximised out."""
    x = rld.successes
    k = x.size
    n_cens = rld.n_censored
    c = float(rld.cutoff)
    scale = c if n_cens else max(float(x.max()), 1.0)
    xs = x / scale
    cs = c / scale
    log_x = np.log(np.where(x > 0, x, ZERO_LENGTH_SUBSTITUTE) / scale)
    sum_log = float(log_x.sum())

    def loglik(alpha: float) -> float:
        s = float(np.sum(xs ** alpha)) + (n_cens * cs ** alpha if n_cens else 0.0)
        return k * math.log(alpha) - k * math.log(s / k) + (alpha - 1.0) * sum_log - k \
            - k * math.log(scale)

    return loglik


def _exp_loglik(rld: Rld, m: float) -> float:
    lam = LN2 / m
    total = float(rld.successes.sum() + rld.n_censored * rld.cutoff)
    return rld.n_success * math.log(lam) - lam * total


def fit_exponential(rld: Rld, min_successes: int = MIN_FIT_SUCCESSES,
                    significance: float = DEFAULT_SIGNIFICANCE,
                    left_truncate: float = 0.0) -> FitResult:
    """Censored maximum-likelihood ed[m]: m = ln2 * (sum of lengths + censored * cutoff) / k."""
    _check_sample(rld, min_successes)
    m = _profiled_median(rld.successes, rld.n_censored, float(rld.cutoff), 1.0)
    if not m > 0:
        # every success has length 0 and nothing was censored
        raise FitFailed("degenerate sample: all run lengths are zero", {"n": rld.n_success})
    model = Exponential(m)
    chi2 = _maybe_gof(rld, model, 1, significance, left_truncate)
    return FitResult(model, rld.n_success, rld.n_censored, chi2, _exp_loglik(rld, m),
                     median_match_m=_empirical_median(rld))


def _empirical_median(rld: Rld) -> float | None:
    from .rld import QuantileNotObserved, median

    try:
        return median(rld)
    except QuantileNotObserved:
        return None


def fit_weibull(rld: Rld, min_successes: int = MIN_FIT_SUCCESSES,
                significance: float = DEFAULT_SIGNIFICANCE, fixed_alpha: float | None = None,
                left_truncate: float = 0.0, xtol: float = 1e-9) -> FitResult:
    """Censored maximum-likelihood wd[m, alpha].

    The median is profiled out in closed form; the shape is found by a bounded
    Brent search over log(alpha).  Also reports a 95% profile-likelihood
    interval for alpha and a likelihood-ratio test of alpha = 1.
    """
    _check_sample(rld, min_successes)
    n_cens = rld.n_censored
    c = float(rld.cutoff)
    if fixed_alpha is not None:
        m = _profiled_median(rld.successes, n_cens, c, fixed_alpha)
        model = Weibull(m, fixed_alpha)
        return FitResult(model, rld.n_success, n_cens,
                         _maybe_gof(rld, model, 1, significance, left_truncate),
                         _weibull_profile(rld)(fixed_alpha))
    if np.unique(rld.successes).size < 2 and n_cens == 0:
        raise FitFailed("shape unidentifiable: all run lengths equal",
                        {"value": float(rld.successes[0])})
    loglik = _weibull_profile(rld)
    lo, hi = math.log(ALPHA_BOUNDS[0]), math.log(ALPHA_BOUNDS[1])
    res = optimize.minimize_scalar(lambda u: -loglik(math.exp(u)), bounds=(lo, hi),
                                   method="bounded", options={"xatol": xtol, "maxiter": 500})
    diag = {"success": bool(res.success), "nfev": int(res.nfev), "log_alpha": float(res.x),
            "message": str(getattr(res, "message", ""))}
    if not res.success or not np.isfinite(res.fun):
        raise FitFailed("weibull shape search did not converge", diag)
    if min(res.x - lo, hi - res.x) < 1e-4:
        raise FitFailed("weibull shape estimate at search bound", diag)
    alpha = float(math.exp(res.x))
    ll_hat = loglik(alpha)
    m = _profiled_median(rld.successes, n_cens, c, alpha)
    model = Weibull(m, alpha)
    crit = stats.chi2.ppf(0.95, 1) / 2.0
    target = lambda a: ll_hat - loglik(a) - crit
    a_lo = _ci_end(target, alpha, ALPHA_BOUNDS[0])
    a_hi = _ci_end(target, alpha, ALPHA_BOUNDS[1])
    lr = max(0.0, 2.0 * (ll_hat - loglik(1.0)))
    p_lr = float(stats.chi2.sf(lr, 1))
    return FitResult(model, rld.n_success, n_cens,
                     _maybe_gof(rld, model, 2, significance, left_truncate), ll_hat,
                     median_match_m=_empirical_median(rld), alpha_ci=(a_lo, a_hi),
                     alpha_lr_p_value=p_lr,
                     alpha_below_one=bool(alpha < 1.0 and p_lr < significance))


def _ci_end(f, inside: float, bound: float) -> float:
    """Where ``f`` turns positive between the estimate and a search bound."""
    if f(bound) <= 0:
        return bound
    return float(optimize.brentq(f, min(inside, bound), max(inside, bound), xtol=1e-10, rtol=1e-10))


def _maybe_gof(rld, model, n_params, significance, left_truncate):
    if rld.n_success < MIN_GOF_SUCCESSES:
        return None
    try:
        return chi_square_gof(rld, model, n_params=n_params, significance=significance,
                              left_truncate=left_truncate)
    except InsufficientSample:
        return None


def model_from_dict(d: dict) -> ModelCdf:
    if d["family"] == "exponential":
        return Exponential(float(d["m"]))
    if d["family"] == "weibull":
        return Weibull(float(d["m"]), float(d["alpha"]))
    raise ValueError(f"unknown family {d['family']!r}")
