import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rtdkit.analysis import (AnalysisError, Composite, CutoffMethod, SpeedupClass, Verdict,
                             anytime_schedule, compare, expected_time_curve, expected_utility,
                             infer_completeness, markov_cutoff, mixture, optimal_cutoff_expected_time,
                             optimal_cutoff_geometric, parallel_transform, plateau_source,
                             restart_transform, speedup_classification, tail_bounds,
                             tchebichev_cutoff)
from rtdkit.cnf import CompletenessClass
from rtdkit.fit import LN2, Exponential, Weibull, exp_quantile
from rtdkit.rld import Rld, average_rlds

from . import grid_oracles as go

PLATEAU = plateau_source(0.08, 50.0)
GRID = np.arange(1, 20001, dtype=float)


def emp(x, n=None, cutoff=1e9):
    x = np.asarray(x, float)
    return Rld(x, n or x.size, cutoff)


# tail bounds

def test_tail_bound_examples():
    assert markov_cutoff(100, 0.99) == 10000
    assert markov_cutoff(100, 0) == 100
    assert markov_cutoff(50, 0.5) == 100
    assert tchebichev_cutoff(100, 100, 0.99) == 1100
    assert tchebichev_cutoff(0, 10, 0.75) == 20
    for p in (0.0, 0.3, 0.99):
        assert tchebichev_cutoff(100, 0, p) == 100
    b = tail_bounds(100, 100, 0.99)
    assert b["markov"] > b["tchebichev"] > b["exponential"]
    assert b["exponential"] == pytest.approx(460.517, abs=1e-3)


@pytest.mark.parametrize("fn,args", [(markov_cutoff, (100, 1.0)), (markov_cutoff, (100, -0.1)),
                                     (tchebichev_cutoff, (100, 1, 1.0)),
                                     (tchebichev_cutoff, (100, -1, 0.5)),
                                     (tchebichev_cutoff, (100, math.inf, 0.5))])
def test_tail_bound_contract(fn, args):
    with pytest.raises(ValueError):
        fn(*args)


@given(st.floats(0, 1e6), st.floats(0, 0.999))
def test_markov_matches_formula(mean, p):
    assert markov_cutoff(mean, p) == pytest.approx(mean / (1 - p), rel=1e-12)


# transforms

@given(st.floats(1, 1e4), st.floats(1, 1e3))
def test_restart_exponential_at_multiples(m, t_c):
    e = Exponential(m)
    g = restart_transform(e, t_c)
    k = np.arange(100) * t_c
    assert np.max(np.abs(g.cdf(k) - e.cdf(k))) <= 1e-12


@given(st.floats(1, 1e4), st.integers(1, 64))
def test_parallel_exponential(m, p):
    t = np.linspace(0, 20 * m, 100)
    g = parallel_transform(Exponential(m), p)
    assert np.max(np.abs(g.cdf(t) - Exponential(m / p).cdf(t))) <= 1e-12


def test_parallel_identity_and_plateau():
    t = np.linspace(0, 1000, 50)
    assert np.allclose(parallel_transform(PLATEAU, 1).cdf(t), PLATEAU.cdf(t), atol=1e-15)
    assert float(parallel_transform(PLATEAU, 4).cdf(1e7)) == pytest.approx(1 - 0.92 ** 4, abs=1e-12)
    assert 1 - 0.92 ** 4 == pytest.approx(0.2836, abs=1e-4)
    with pytest.raises(ValueError):
        parallel_transform(PLATEAU, 0)


def test_restart_saturated_source_truncates():
    r = emp([1, 2, 3], 3, cutoff=10)
    g = restart_transform(r, 3)
    t = np.arange(0, 30.)
    assert np.all(g.cdf(t[t >= 3]) == 1)
    assert np.array_equal(g.cdf(t[t < 3]), r.cdf(t[t < 3]))


def test_restart_plateau_matches_direct_formula_and_dominates():
    g = restart_transform(PLATEAU, 100.0)
    probes = np.linspace(0, 5000, 20)
    f = lambda x: float(go.plateau_cdf(x))
    for t in probes:
        assert float(g.cdf(t)) == pytest.approx(go.restarted_direct(f, 100.0, t), abs=1e-14)
    late = probes[probes > 200]
    assert np.all(g.cdf(late) > PLATEAU.cdf(late))


def test_restart_errors():
    with pytest.raises(AnalysisError, match="never succeeds"):
        restart_transform(emp([50.0]), 10)
    with pytest.raises(ValueError):
        restart_transform(PLATEAU, 0.5)
    with pytest.raises(AnalysisError):
        restart_transform(emp([5.0], cutoff=10), 20)


def test_restarted_truncated_mean_matches_quadrature():
    g = restart_transform(PLATEAU, 80.0)
    from scipy.integrate import quad
    for t in (10.0, 80.0, 555.0, 2000.0):
        pts = list(np.arange(80.0, t, 80.0))
        want, _ = quad(lambda x: 1 - float(g.cdf(x)), 0, t, points=pts or None, limit=500)
        assert float(g.truncated_mean(t)) == pytest.approx(want, rel=1e-9)


# cutoffs

def test_geometric_exponential_degenerate():
    rep = optimal_cutoff_geometric(Exponential(744.0), GRID)
    assert rep.method is CutoffMethod.GEOMETRIC
    assert rep.degenerate and rep.t_star is None
    assert rep.m_star == pytest.approx(744.0, abs=1e-6)


def test_expected_time_exponential_flat():
    rep = optimal_cutoff_expected_time(Exponential(744.0), GRID)
    e = rep.curve[1]
    assert (e.max() - e.min()) / e.min() < 1e-9
    assert rep.degenerate and rep.t_star is None
    assert rep.expected_time == pytest.approx(744.0 / LN2, rel=1e-9)


def test_plateau_cutoffs_match_grid_oracles():
    t = GRID
    f = go.plateau_cdf(t)
    m_grid, contact = go.geometric_grid(f, t, 5000)
    rep = optimal_cutoff_geometric(PLATEAU, t)
    assert math.ceil(rep.m_star) == m_grid == 629
    assert rep.t_star == contact[0] == 1.0
    # frozen from the tangent formula at t = 1
    assert rep.m_star == pytest.approx(628.99554204, rel=1e-9)
    e_grid = np.array([go.trapezoid_expected_time(go.plateau_cdf, x, 200) for x in t[:300]])
    rep_e = optimal_cutoff_expected_time(PLATEAU, t)
    assert rep_e.t_star == t[np.argmin(e_grid)] == 1.0
    assert rep_e.expected_time == pytest.approx(e_grid.min(), rel=1e-6)
    assert rep_e.expected_speedup > 1


def _mixture_sample(seed=20240):
    rng = np.random.default_rng(seed)
    return np.concatenate([np.ceil(Exponential(100.).sample(10000, rng)),
                           np.ceil(Exponential(10000.).sample(10000, rng))])


def test_mixture_cutoffs_match_grid_oracles():
    x = _mixture_sample()
    r = emp(x, cutoff=1e7)
    t = np.arange(1, 30001, dtype=float)
    m_grid, contact = go.geometric_grid(go.empirical_cdf_naive(x, x.size, t), t, 2000)
    geo = optimal_cutoff_geometric(r)
    assert abs(geo.m_star - m_grid) <= 1 and geo.t_star in contact
    e = go.empirical_expected_time_naive(x, x.size, 1e7, t)
    et = optimal_cutoff_expected_time(r)
    assert et.t_star == t[np.argmin(e)]
    assert et.expected_time == pytest.approx(e.min(), rel=1e-12)
    # frozen oracle values for this seed
    assert (m_grid, et.t_star) == (179, 2.0)
    assert et.expected_time == pytest.approx(257.5935483870968, rel=1e-12)
    assert et.expected_speedup > 2


def test_expected_time_baseline_is_mean_estimate():
    from rtdkit.rld import estimate_mean_runtime
    r = emp([3, 8, 8, 40], 6, cutoff=50)
    rep = optimal_cutoff_expected_time(r)
    assert rep.baseline_expected_time == pytest.approx(estimate_mean_runtime(r), rel=1e-12)


@settings(max_examples=40)
@given(st.lists(st.integers(1, 300), min_size=1, max_size=40), st.integers(0, 10))
def test_expected_time_empirical_matches_naive(xs, n_cens):
    x = np.array(xs, float)
    n = x.size + n_cens
    r = emp(x, n, cutoff=300)
    t = np.arange(1, 301, dtype=float)
    e = go.empirical_expected_time_naive(x, n, 300, t)
    rep = optimal_cutoff_expected_time(r)
    assert rep.expected_time == pytest.approx(np.min(e), rel=1e-12)
    assert np.isclose(expected_time_curve(r, t), e, rtol=1e-12).all()


@settings(max_examples=40)
@given(st.lists(st.integers(1, 300), min_size=1, max_size=40), st.integers(0, 10))
def test_geometric_invariant(xs, n_cens):
    x = np.array(xs, float)
    r = emp(x, x.size + n_cens, cutoff=300)
    rep = optimal_cutoff_geometric(r)
    t = np.arange(1, 301, dtype=float)
    f = r.cdf(t)
    if n_cens == 0 and np.unique(x).size == 1:
        # a point mass: every exponential touches it
        assert rep.m_star == 0 and rep.t_star == x[0]
        return
    ok = f < 1
    # ed[m*] touches the source at the contact point; any smaller m never does
    if rep.t_star is not None:
        tc = rep.t_star
        assert 1 - 2 ** (-tc / rep.m_star) <= float(r.cdf(tc)) + 1e-12
    smaller = 1 - 2.0 ** (-t[ok] / (rep.m_star * (1 - 1e-9)))
    assert np.all(smaller > f[ok] - 1e-15)


def test_cutoff_errors():
    zero = emp([], 10, cutoff=100)
    with pytest.raises(AnalysisError):
        optimal_cutoff_geometric(zero)
    with pytest.raises(AnalysisError):
        optimal_cutoff_expected_time(zero)
    with pytest.raises(ValueError):
        optimal_cutoff_geometric(Exponential(10.0))


# comparison

def test_compare_examples():
    t = np.linspace(1, 5000, 2000)
    assert compare(Exponential(100.), Exponential(200.), t).verdict is Verdict.A_DOMINATES
    assert compare(Exponential(200.), Exponential(100.), t).verdict is Verdict.B_DOMINATES
    c = compare(Exponential(100.), Weibull(100., 0.5), np.arange(1, 1000.))
    assert c.verdict is Verdict.CROSSOVER
    assert len(c.crossovers) == 1
    lo, hi = c.crossovers[0]
    assert lo <= 100 <= hi and hi - lo <= 2
    r = emp(_mixture_sample()[:500])
    same = Rld(r.successes.copy(), r.n_trials, r.cutoff)
    assert compare(r, same).verdict is Verdict.INDISTINGUISHABLE
    with pytest.raises(ValueError):
        compare(Exponential(1.), Exponential(2.), [])


@settings(max_examples=50)
@given(st.lists(st.integers(0, 100), min_size=1, max_size=30),
       st.lists(st.integers(0, 100), min_size=1, max_size=30))
def test_compare_antisymmetric(xa, xb):
    a = emp(xa, cutoff=100)
    b = emp(xb, cutoff=100)
    ab, ba = compare(a, b), compare(b, a)
    assert ba.verdict is ab.mirrored()
    assert ab.crossovers == ba.crossovers
    assert compare(a, a).verdict is Verdict.INDISTINGUISHABLE


# anytime

def test_anytime_reference_pair_degenerates():
    # restarting the plateau at its optimum gives roughly ed[629], which dominates ed[1800]
    probes = np.arange(0, 40001, dtype=float)
    s = anytime_schedule(PLATEAU, Exponential(1800.), probes, cutoff_grid=GRID, tol=1e-12)
    assert s.plain.verdict is Verdict.CROSSOVER
    lo, hi = s.plain.crossovers[0]
    assert (lo, hi) == (203.0, 204.0)
    assert s.kind == "a" and s.switch_at is None and s.a_cutoff == 1.0
    assert s.restarted.verdict is Verdict.A_DOMINATES
    # dense-grid oracle: restarted a stays ahead of b everywhere on the grid
    f = lambda x: float(go.plateau_cdf(x))
    grid = np.arange(1, 40001, 97, dtype=float)
    a2 = np.array([go.restarted_direct(f, 1.0, t) for t in grid])
    assert np.all(a2 > Exponential(1800.).cdf(grid))


def _switch_oracle(b, probes, t_c=1.0, tol=1e-12):
    f = lambda x: float(go.plateau_cdf(x))
    a2 = np.array([go.restarted_direct(f, t_c, t) for t in probes])
    ahead = np.flatnonzero(a2 - b.cdf(probes) > tol)
    return probes[ahead[-1] + 1]


def test_anytime_switch_matches_dense_grid_oracle():
    b = Weibull(1200.0, 2.0)
    probes = np.arange(0, 10001, dtype=float)
    s = anytime_schedule(PLATEAU, b, probes, cutoff_grid=GRID, tol=1e-12)
    assert s.kind == "switch"
    assert s.switch_at == _switch_oracle(b, probes) == 2290.0
    assert s.steps()[0] == {"run": "a", "cutoff": 1.0, "until": 2290.0}
    comp = s.composite
    assert isinstance(comp, Composite)
    a2 = restart_transform(PLATEAU, 1.0)
    below, above = probes[probes < s.switch_at], probes[probes >= s.switch_at]
    assert np.all(comp.cdf(below) >= b.cdf(below) - 1e-12)
    assert np.all(comp.cdf(above) >= a2.cdf(above) - 1e-12)
    assert np.all(comp.cdf(probes) >= np.minimum(a2.cdf(probes), b.cdf(probes)))


def test_anytime_trivial_cases():
    t = np.linspace(1, 5000, 500)
    s = anytime_schedule(Exponential(100.), Exponential(300.), t)
    assert s.kind == "a" and s.steps() == [{"run": "a", "cutoff": None, "until": None}]
    s = anytime_schedule(Exponential(100.), Exponential(100.), t)
    assert s.kind == "either"


# utility

def test_expected_utility():
    r = emp([1, 5, 9, 40], 6, cutoff=50)
    assert expected_utility(r, lambda t: 1.0, 50) == pytest.approx(4 / 6)
    assert expected_utility(r, lambda t: float(t <= 9), 50) == pytest.approx(float(r.cdf(9)))
    assert expected_utility(r, lambda t: 1.0, 7) == pytest.approx(2 / 6)
    avg = average_rlds([r, emp([2.0], 2, cutoff=50)])
    assert expected_utility(avg, lambda t: 1.0, 50) == pytest.approx(float(avg.cdf(50)))
    e = Exponential(100.0)
    assert expected_utility(e, lambda t: 1.0, 300) == pytest.approx(float(e.cdf(300)), abs=1e-9)
    assert expected_utility(e, lambda t: float(t <= 150), 300) == pytest.approx(
        float(e.cdf(150)), abs=1e-6)


def test_expected_utility_linear_decay_quadrature_oracle():
    e = Exponential(100.0)
    h = 400.0
    x = np.linspace(0, h, 2_000_001)
    g = (1 - x / h) * e.pdf(x)
    want = float(np.sum((g[1:] + g[:-1]) * 0.5 * np.diff(x)))
    assert expected_utility(e, lambda t: 1 - t / h, h) == pytest.approx(want, abs=1e-6)
    # sources without a density use a Stieltjes sum
    e50 = Exponential(50.0)
    g = (1 - x / h) * e50.pdf(x)
    want50 = float(np.sum((g[1:] + g[:-1]) * 0.5 * np.diff(x)))
    assert expected_utility(PLATEAU, lambda t: 1 - t / h, h) == pytest.approx(0.08 * want50,
                                                                               abs=1e-6)


# speedup & completeness

@pytest.mark.parametrize("model,expected,min_hits", [
    (Exponential(100.0), SpeedupClass.OPTIMAL, 90),
    (Weibull(100.0, 0.5), SpeedupClass.SUPER_OPTIMAL, 95),
    (Weibull(100.0, 2.0), SpeedupClass.SUB_OPTIMAL, 95),
])
def test_speedup_classification_monte_carlo(model, expected, min_hits):
    hits = 0
    for seed in range(100):
        x = model.sample(1000, np.random.default_rng(seed))
        res = speedup_classification(emp(x))
        hits += res.classification is expected
    assert hits >= min_hits
    assert "alpha_ci95" in res.to_dict()


def test_speedup_needs_sample():
    from rtdkit.fit import InsufficientSample
    with pytest.raises(InsufficientSample):
        speedup_classification(emp([1.0, 2.0]))


def test_infer_completeness():
    plateau = emp(np.arange(1, 81, dtype=float), 1000, cutoff=10**5)
    assert infer_completeness(plateau) is CompletenessClass.ESSENTIALLY_INCOMPLETE
    full = emp(np.arange(1, 101, dtype=float), 100, cutoff=200)
    assert infer_completeness(full) is CompletenessClass.APPROXIMATELY_COMPLETE


def test_mixture_source():
    mix = mixture([Exponential(100.), Exponential(10000.)])
    t = np.array([0.0, 100.0, 1e4])
    want = 0.5 * (Exponential(100.).cdf(t) + Exponential(10000.).cdf(t))
    assert np.allclose(mix.cdf(t), want, atol=1e-15)
    rep = optimal_cutoff_expected_time(mix, GRID)
    assert rep.t_star is not None and rep.expected_speedup > 2
