"""Conclusions drawn from a run-length distribution.

Anything exposing ``cdf(t)``, ``truncated_mean(t)`` (the integral of the
survival function over ``[0, t]``) and a ``horizon`` beyond which it is
censored counts as a cdf source: :class:`~rtdkit.rld.Rld`,
:class:`~rtdkit.rld.AveragedRld`, the parametric models, and the transformed
sources defined here.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy import integrate

from .cnf import CompletenessClass
from .fit import LN2, Exponential, InsufficientSample, exp_quantile, fit_exponential, fit_weibull
from .rld import AveragedRld, Rld


class CdfSource(Protocol):
    @property
    def horizon(self) -> float: ...

    def cdf(self, t): ...

    def truncated_mean(self, t): ...


class AnalysisError(ValueError):
    pass


def _cdf(source, t) -> np.ndarray:
    return np.asarray(source.cdf(np.asarray(t, dtype=float)), dtype=float)


def _survival(source, t) -> np.ndarray:
    if hasattr(source, "sf"):
        return np.asarray(source.sf(np.asarray(t, dtype=float)), dtype=float)
    return 1.0 - _cdf(source, t)


def _jumps(source) -> np.ndarray | None:
    fn = getattr(source, "jump_points", None)
    return None if fn is None else fn()


def _sample_resolution(source) -> float:
    n = getattr(source, "n_trials", None)
    return 1.0 / n if n else 1e-12


def _numeric_truncated_mean(source, t) -> np.ndarray:
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty_like(t_arr)
    for i, ti in enumerate(t_arr):
        if ti <= 0:
            out[i] = 0.0
            continue
        val, _ = integrate.quad(lambda x: float(1.0 - _cdf(source, x)), 0.0, ti, limit=500)
        out[i] = val
    return out if np.ndim(t) else out[0]


# tail bounds ---------------------------------------------------------------


def _complement(p: float) -> Fraction:
    # 1 - p on the decimal value the caller wrote, so 0.99 gives exactly 1/100
    return 1 - Fraction(repr(float(p)))


def markov_cutoff(mean_rt: float, p: float) -> float:
    """Run time that reaches success probability ``p`` knowing only the mean."""
    if not 0 <= p < 1:
        raise ValueError("p must lie in [0, 1)")
    return float(Fraction(repr(mean_rt)) / _complement(p))


def tchebichev_cutoff(mean_rt: float, sd: float, p: float) -> float:
    """Run time that reaches ``p`` knowing the mean and standard deviation."""
    if not 0 <= p < 1:
        raise ValueError("p must lie in [0, 1)")
    if not (sd >= 0 and math.isfinite(sd)):
        raise ValueError("sd must be finite and non-negative")
    return sd / math.sqrt(_complement(p)) + mean_rt


def tail_bounds(mean_rt: float, sd: float | None, p: float) -> dict:
    """All three estimates; the exponential one assumes ed[m] with the given mean."""
    out = {"p": p, "mean": mean_rt, "markov": markov_cutoff(mean_rt, p)}
    if sd is not None:
        out["sd"] = sd
        out["tchebichev"] = tchebichev_cutoff(mean_rt, sd, p)
    out["exponential"] = exp_quantile(mean_rt * LN2, p)
    return out


# derived sources ------------------------------------------------------------


@dataclass(frozen=True)
class Mixture:
    """Weighted mixture of cdf sources (equal weights by default)."""

    components: tuple
    weights: tuple[float, ...] | None = None

    def _w(self) -> np.ndarray:
        w = np.ones(len(self.components)) if self.weights is None else np.asarray(self.weights, float)
        return w / w.sum()

    @property
    def horizon(self) -> float:
        return min(c.horizon for c in self.components)

    def cdf(self, t):
        return sum(w * _cdf(c, t) for w, c in zip(self._w(), self.components))

    def truncated_mean(self, t):
        return sum(w * np.asarray(c.truncated_mean(t)) for w, c in zip(self._w(), self.components))


@dataclass(frozen=True)
class Scaled:
    """``ceiling * base``: an essentially incomplete source with limit ``ceiling``."""

    base: object
    ceiling: float

    @property
    def horizon(self) -> float:
        return self.base.horizon

    def cdf(self, t):
        return self.ceiling * _cdf(self.base, t)

    def truncated_mean(self, t):
        t = np.asarray(t, dtype=float)
        return self.ceiling * np.asarray(self.base.truncated_mean(t)) + (1.0 - self.ceiling) * t


@dataclass(frozen=True)
class Restarted:
    """Independent restarts of ``base`` every ``t_c`` steps."""

    base: object
    t_c: float

    @property
    def horizon(self) -> float:
        return math.inf

    def _split(self, t):
        t = np.asarray(t, dtype=float)
        k = np.floor(t / self.t_c)
        r = np.maximum(t - k * self.t_c, 0.0)
        return k, r

    def cdf(self, t):
        k, r = self._split(t)
        q = 1.0 - float(_cdf(self.base, self.t_c))
        f_r = _cdf(self.base, r)
        return np.where(k == 0, f_r, 1.0 - q ** k * (1.0 - f_r))

    def truncated_mean(self, t):
        k, r = self._split(t)
        q = 1.0 - float(_cdf(self.base, self.t_c))
        cycle = float(self.base.truncated_mean(self.t_c))
        full = cycle * k if q == 1.0 else cycle * (1.0 - q ** k) / (1.0 - q)
        return full + q ** k * np.asarray(self.base.truncated_mean(r))


@dataclass(frozen=True)
class Parallel:
    """Best of ``p`` independent copies run side by side, as a function of wall steps."""

    base: object
    p: int

    @property
    def horizon(self) -> float:
        return self.base.horizon

    def cdf(self, t):
        return 1.0 - self.sf(t)

    def sf(self, t):
        return _survival(self.base, t) ** self.p

    def truncated_mean(self, t):
        return _numeric_truncated_mean(self, t)


def restart_transform(source, t_c: float) -> Restarted:
    if t_c < 1:
        raise ValueError("t_c must be >= 1")
    if t_c > source.horizon:
        raise AnalysisError(f"t_c={t_c:g} lies beyond the censoring horizon {source.horizon:g}")
    if float(_cdf(source, t_c)) <= 0:
        raise AnalysisError("restart never succeeds: source(t_c) = 0")
    return Restarted(source, float(t_c))


def parallel_transform(source, p: int) -> Parallel:
    if p < 1 or int(p) != p:
        raise ValueError("processor count must be a positive integer")
    return Parallel(source, int(p))


# cutoffs --------------------------------------------------------------------


class CutoffMethod(str, enum.Enum):
    GEOMETRIC = "geometric"
    EXPECTED_TIME = "expected_time"


@dataclass
class CutoffReport:
    method: CutoffMethod
    t_star: float | None
    m_star: float | None
    expected_time: float | None
    baseline_horizon: float
    baseline_expected_time: float
    expected_speedup: float | None
    degenerate: bool
    note: str = ""
    curve: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "t_star": self.t_star,
            "m_star": self.m_star,
            "expected_time_at_t_star": self.expected_time,
            "baseline_horizon": self.baseline_horizon,
            "baseline_expected_time": self.baseline_expected_time,
            "expected_speedup": self.expected_speedup,
            "degenerate": self.degenerate,
            "note": self.note,
        }


def _candidates(source, grid) -> np.ndarray:
    if grid is not None:
        ts = np.asarray(grid, dtype=float)
    else:
        jumps = _jumps(source)
        if jumps is None:
            raise ValueError("a search grid is required for continuous sources")
        ts = jumps
        if math.isfinite(source.horizon):
            ts = np.append(ts, source.horizon)
    ts = np.unique(ts[(ts > 0) & (ts <= source.horizon)])
    if ts.size == 0:
        raise ValueError("empty search grid")
    return ts


def _baseline(source, ts) -> tuple[float, float]:
    h = source.horizon if math.isfinite(source.horizon) else float(ts[-1])
    f = float(_cdf(source, h))
    if f <= 0:
        return h, math.inf
    return h, float(source.truncated_mean(h)) / f


def expected_time_curve(source, ts) -> np.ndarray:
    """Expected steps to first success when restarting every ``t`` steps:
    E(t) = (integral of the survival function over [0, t]) / F(t)."""
    f = _cdf(source, ts)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(f > 0, np.asarray(source.truncated_mean(ts), float) / f, np.inf)


def optimal_cutoff_expected_time(source, grid=None, flat_tol: float = 1e-9) -> CutoffReport:
    """Cutoff minimising expected total steps under restarts.

    Empirical sources are searched at their jump points plus the horizon,
    where the step cdf attains its optima; continuous ones need ``grid``.
    """
    ts = _candidates(source, grid)
    e = expected_time_curve(source, ts)
    finite = np.isfinite(e)
    if not finite.any():
        raise AnalysisError("no solutions observed at any candidate cutoff")
    h, e_base = _baseline(source, ts)
    ef = e[finite]
    spread = (ef.max() - ef.min()) / ef.min() if ef.min() > 0 else math.inf
    i = int(np.argmin(np.where(finite, e, np.inf)))
    if spread < flat_tol:
        return CutoffReport(CutoffMethod.EXPECTED_TIME, None, None, float(ef.min()), h, e_base,
                            1.0, True, "any cutoff equivalent (flat expected-time curve)",
                            (ts, e))
    return CutoffReport(CutoffMethod.EXPECTED_TIME, float(ts[i]), None, float(e[i]), h, e_base,
                        e_base / float(e[i]), False, "", (ts, e))


def tangent_medians(source, ts) -> np.ndarray:
    """Median of the exponential through (t, F(t)): ed[m](t) <= F(t) iff m >= this.

    NaN where F(t) = 0 (no exponential reaches down there), 0 where F(t) = 1
    (every ed[m] lies below).
    """
    s = _survival(source, ts)
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where((s < 1) & (s > 0), ts * LN2 / -np.log(s), np.nan)
    return np.where(s <= 0, 0.0, m)


def optimal_cutoff_geometric(source, grid=None, flat_tol: float = 1e-9) -> CutoffReport:
    """Smallest m* for which ed[m*] touches the source, and the contact point.

    Points where the cdf is 0 do not constrain m.  Points where it has
    reached 1 (for samples, usually just the largest observed run) are only
    used when nothing else was observed; m* is then 0 and restarting at the
    first such point solves every run.
    """
    ts = _candidates(source, grid)
    m = tangent_medians(source, ts)
    interior = np.isfinite(m) & (m > 0)
    if not interior.any() and not (m == 0).any():
        raise AnalysisError("no solutions observed")
    if interior.any():
        m = np.where(interior, m, np.nan)
    i = int(np.nanargmin(m))
    m_star = float(m[i])
    h, e_base = _baseline(source, ts)
    if m_star == 0.0:
        t_star = float(ts[i])
        e_star = float(expected_time_curve(source, np.array([t_star]))[0])
        return CutoffReport(CutoffMethod.GEOMETRIC, t_star, 0.0, e_star, h, e_base,
                            e_base / e_star, False, "source reaches 1 at t_star", (ts, m))
    spread = (np.nanmax(m) - m_star) / m_star
    if spread < flat_tol:
        return CutoffReport(CutoffMethod.GEOMETRIC, None, m_star, None, h, e_base, 1.0, True,
                            "no finite optimum: source is exponential, contact everywhere",
                            (ts, m))
    t_star = float(ts[i])
    e_star = float(expected_time_curve(source, np.array([t_star]))[0])
    return CutoffReport(CutoffMethod.GEOMETRIC, t_star, m_star, e_star, h, e_base,
                        e_base / e_star, False, "", (ts, m))


# comparison ---------------------------------------------------------------


class Verdict(str, enum.Enum):
    A_DOMINATES = "ADominates"
    B_DOMINATES = "BDominates"
    CROSSOVER = "Crossover"
    INDISTINGUISHABLE = "Indistinguishable"


_MIRROR = {Verdict.A_DOMINATES: Verdict.B_DOMINATES, Verdict.B_DOMINATES: Verdict.A_DOMINATES}


@dataclass
class Comparison:
    verdict: Verdict
    crossovers: list[tuple[float, float]]
    tolerance: float
    probes: np.ndarray = field(repr=False)
    max_a_minus_b: float = 0.0
    max_b_minus_a: float = 0.0

    def mirrored(self) -> Verdict:
        return _MIRROR.get(self.verdict, self.verdict)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "crossovers": [list(c) for c in self.crossovers],
            "tolerance": self.tolerance,
            "max_a_minus_b": self.max_a_minus_b,
            "max_b_minus_a": self.max_b_minus_a,
            "n_probes": int(self.probes.size),
        }


def default_probes(a, b) -> np.ndarray:
    pts = [np.array([0.0])]
    for s in (a, b):
        j = _jumps(s)
        if j is None:
            raise ValueError("a probe grid is required when comparing continuous sources")
        pts.append(j)
    horizon = min(a.horizon, b.horizon)
    if math.isfinite(horizon):
        pts.append(np.array([horizon]))
    return np.unique(np.concatenate(pts))


def compare(a, b, probes=None, tol: float | None = None) -> Comparison:
    """Dominance test on a probe grid; differences within ``tol`` count as ties.

    ``tol`` defaults to one sample mass (1/n) of the coarser empirical input.
    Crossovers are reported as probe intervals over which a - b changes sign.
    """
    if probes is None:
        probes = default_probes(a, b)
    probes = np.unique(np.asarray(probes, dtype=float))
    if probes.size == 0:
        raise ValueError("empty probe grid")
    probes = probes[probes <= min(a.horizon, b.horizon)]
    if probes.size == 0:
        raise ValueError("no probe lies within both censoring horizons")
    if tol is None:
        tol = max(_sample_resolution(a), _sample_resolution(b))
    d = _cdf(a, probes) - _cdf(b, probes)
    sign = np.where(d > tol, 1, np.where(d < -tol, -1, 0))
    nz = np.flatnonzero(sign)
    crossings = []
    for i, j in zip(nz[:-1], nz[1:]):
        if sign[i] != sign[j]:
            crossings.append((float(probes[i]), float(probes[j])))
    if nz.size == 0:
        verdict = Verdict.INDISTINGUISHABLE
    elif crossings:
        verdict = Verdict.CROSSOVER
    else:
        verdict = Verdict.A_DOMINATES if sign[nz[0]] > 0 else Verdict.B_DOMINATES
    return Comparison(verdict, crossings, float(tol), probes,
                      max(0.0, float(d.max())), max(0.0, float(-d.min())))


@dataclass(frozen=True)
class Composite:
    """Type-2 selection: restarted ``a`` for deadlines below ``switch``, ``b`` from there."""

    a: object
    b: object
    switch: float

    @property
    def horizon(self) -> float:
        return min(self.a.horizon, self.b.horizon)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t < self.switch, _cdf(self.a, t), _cdf(self.b, t))

    def truncated_mean(self, t):
        return _numeric_truncated_mean(self, t)


@dataclass
class Schedule:
    kind: str  # "switch", "a", "b", "either"
    a_cutoff: float | None
    switch_at: float | None
    plain: Comparison
    restarted: Comparison | None
    composite: object | None = field(default=None, repr=False)
    note: str = ""

    def steps(self) -> list[dict]:
        if self.kind == "switch":
            return [{"run": "a", "cutoff": self.a_cutoff, "until": self.switch_at},
                    {"run": "b", "cutoff": None, "until": None}]
        if self.kind == "either":
            return [{"run": "either", "cutoff": None, "until": None}]
        cutoff = self.a_cutoff if self.kind == "a" else None
        return [{"run": self.kind, "cutoff": cutoff, "until": None}]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "steps": self.steps(),
            "a_cutoff": self.a_cutoff,
            "switch_at": self.switch_at,
            "plain_crossovers": [list(c) for c in self.plain.crossovers],
            "plain_verdict": self.plain.verdict.value,
            "restarted_verdict": None if self.restarted is None else self.restarted.verdict.value,
            "note": self.note,
        }


def anytime_schedule(a, b, probes=None, cutoff_grid=None, tol: float | None = None) -> Schedule:
    """Combine ``a`` (restarted at its optimal cutoff) with ``b``.

    The switch point is the probe right after the last one at which restarted
    ``a`` is ahead of ``b`` by more than ``tol``.
    """
    plain = compare(a, b, probes, tol)
    if plain.verdict is Verdict.INDISTINGUISHABLE:
        return Schedule("either", None, None, plain, None, note="sources indistinguishable")
    if plain.verdict is Verdict.A_DOMINATES:
        return Schedule("a", None, None, plain, None, a, "a dominates b")
    if plain.verdict is Verdict.B_DOMINATES:
        return Schedule("b", None, None, plain, None, b, "b dominates a")
    rep = optimal_cutoff_expected_time(a, cutoff_grid)
    if rep.t_star is None:
        a2, t_c = a, None
    else:
        t_c = rep.t_star
        a2 = restart_transform(a, t_c)
    grid = plain.probes if probes is None else np.asarray(probes, dtype=float)
    grid = grid[grid <= min(a2.horizon, b.horizon)]
    restarted = compare(a2, b, grid, plain.tolerance)
    d = _cdf(a2, grid) - _cdf(b, grid)
    ahead = np.flatnonzero(d > plain.tolerance)
    if ahead.size == 0:
        return Schedule("b", t_c, None, plain, restarted, b,
                        "restarted a is never ahead of b; run b")
    last = int(ahead[-1])
    if last == grid.size - 1:
        return Schedule("a", t_c, None, plain, restarted, a2,
                        "restarted a is still ahead at the probe horizon; run a with restarts")
    s3 = float(grid[last + 1])
    return Schedule("switch", t_c, s3, plain, restarted, Composite(a2, b, s3))


# speedup, utility, completeness ---------------------------------------------


class SpeedupClass(str, enum.Enum):
    OPTIMAL = "Optimal"
    SUB_OPTIMAL = "SubOptimal"
    SUPER_OPTIMAL = "SuperOptimal"


@dataclass
class SpeedupAssessment:
    classification: SpeedupClass
    evidence: dict

    def to_dict(self) -> dict:
        return {"classification": self.classification.value, **self.evidence}


def speedup_classification(rld: Rld, significance: float = 0.05) -> SpeedupAssessment:
    """Parallel speedup from independent runs, judged against the best-fit exponential.

    A passing chi-square test means Optimal.  Otherwise the fitted Weibull
    shape decides (alpha < 1: flatter tail, SuperOptimal; alpha > 1: steeper,
    SubOptimal); if its 95% interval straddles 1, the sign of the mean cdf
    difference above the median decides.
    """
    fe = fit_exponential(rld, significance=significance)
    if fe.chi2 is None:
        raise InsufficientSample("speedup classification needs a chi-square test")
    fw = fit_weibull(rld, significance=significance)
    lo, hi = fw.alpha_ci
    upper = rld.successes[rld.successes >= np.median(rld.successes)]
    diff = float(np.mean(rld.cdf(upper) - fe.model.cdf(upper)))
    evidence = {"exp_m": fe.model.m, "chi2_p_value": fe.chi2.p_value, "alpha": fw.model.alpha,
                "alpha_ci95": [lo, hi], "upper_region_cdf_minus_exp": diff}
    if fe.chi2.passed:
        cls = SpeedupClass.OPTIMAL
    elif hi < 1.0:
        cls = SpeedupClass.SUPER_OPTIMAL
    elif lo > 1.0:
        cls = SpeedupClass.SUB_OPTIMAL
    else:
        cls = SpeedupClass.SUB_OPTIMAL if diff > 0 else SpeedupClass.SUPER_OPTIMAL
    return SpeedupAssessment(cls, evidence)


def expected_utility(source, u: Callable[[float], float], horizon: float,
                     grid_points: int = 200_001) -> float:
    """Expected utility of the solve time; unsolved mass beyond ``horizon`` scores 0."""
    if isinstance(source, Rld):
        x = source.successes[source.successes <= horizon]
        return float(sum(u(float(v)) for v in x) / source.n_trials)
    if isinstance(source, AveragedRld):
        return float(np.mean([expected_utility(r, u, horizon) for r in source.components]))
    at_zero = float(_cdf(source, 0.0)) * u(0.0)
    if hasattr(source, "pdf"):
        val, _ = integrate.quad(lambda t: u(t) * float(source.pdf(t)), 0.0, horizon,
                                limit=500, epsabs=1e-12, epsrel=1e-10)
        return float(min(max(val + at_zero, 0.0), 1.0))
    ts = np.linspace(0.0, horizon, grid_points)
    f = _cdf(source, ts)
    mids = 0.5 * (ts[1:] + ts[:-1])
    val = float(np.sum(np.array([u(t) for t in mids]) * np.diff(f)))
    return float(min(max(val + at_zero, 0.0), 1.0))


def infer_completeness(rld: Rld) -> CompletenessClass:
    """Heuristic reading of the right tail.

    No success in the upper half of the horizon while runs were still being
    censored suggests a plateau below 1.  Completeness in the strict sense can
    not be established from finite samples, so it is never inferred.
    """
    if rld.success_rate < 1.0 and rld.cdf(rld.cutoff) == rld.cdf(rld.cutoff / 2):
        return CompletenessClass.ESSENTIALLY_INCOMPLETE
    return CompletenessClass.APPROXIMATELY_COMPLETE


def plateau_source(ceiling: float, m: float) -> Scaled:
    """``ceiling * ed[m]``, the shape of an essentially incomplete algorithm."""
    return Scaled(Exponential(m), ceiling)


def mixture(sources: Sequence, weights: Sequence[float] | None = None) -> Mixture:
    return Mixture(tuple(sources), None if weights is None else tuple(weights))
