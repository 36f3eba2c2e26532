import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rtdkit.fit import (LN2, ChiSquareResult, Exponential, FitFailed, InsufficientSample, Weibull,
                        chi_square_gof, exp_quantile, fit_exponential, fit_weibull, model_cdf,
                        model_from_dict)
from rtdkit.rld import Rld


def sample_rld(model, n=1000, seed=0, cutoff=1e12):
    x = model.sample(n, np.random.default_rng(seed))
    k = x[x <= cutoff]
    return Rld(k, n, cutoff)


def test_model_cdf_examples():
    assert model_cdf(Exponential(100), 100) == pytest.approx(0.5, abs=1e-15)
    assert model_cdf(Exponential(100), 200) == pytest.approx(0.75, abs=1e-15)
    assert model_cdf(Exponential(100), 0) == 0
    for x in (0.0, 1.0, 50.0, 1e3, 1e5):
        assert model_cdf(Weibull(100, 1.0), x) == pytest.approx(model_cdf(Exponential(100), x),
                                                               abs=1e-15)


@given(st.floats(0, 1e4), st.floats(0, 1e4), st.floats(1, 1e4))
def test_memorylessness(a, b, m):
    e = Exponential(m)
    fa = float(e.cdf(a))
    if 1 - fa < 1e-6:
        return
    # the cdf form cancels; its rounding error grows like eps / (1 - F(a))
    lhs = (float(e.cdf(a + b)) - fa) / (1 - fa)
    assert lhs == pytest.approx(float(e.cdf(b)), abs=1e-14 / (1 - fa))
    assert float(e.sf(a + b)) / float(e.sf(a)) == pytest.approx(float(e.sf(b)), rel=1e-12)


@given(st.floats(1, 1e4), st.floats(0.1, 5))
def test_models_monotone(m, alpha):
    t = np.linspace(0, 20 * m, 500)
    for model in (Exponential(m), Weibull(m, alpha)):
        p = model.cdf(t)
        assert p[0] == 0 and np.all(np.diff(p) >= 0) and p.max() <= 1


def test_exp_quantile_examples():
    assert exp_quantile(100 * LN2, 0.99) == pytest.approx(460.5, abs=0.5)
    assert exp_quantile(37.0, 0.5) == pytest.approx(37.0)
    assert exp_quantile(37.0, 0) == 0


def test_truncated_mean_models():
    for model in (Exponential(80.0), Weibull(80.0, 0.7)):
        from scipy.integrate import quad
        want, _ = quad(lambda x: 1 - float(model.cdf(x)), 0, 300)
        assert float(model.truncated_mean(300.0)) == pytest.approx(want, rel=1e-9)


def test_fit_exponential_envelope_frozen_seeds():
    for seed in range(20):
        f = fit_exponential(sample_rld(Exponential(100.0), seed=seed))
        assert 90 <= f.model.m <= 110
        assert f.median_match_m is not None


def test_fit_exponential_censored_at_median():
    for seed in range(20):
        f = fit_exponential(sample_rld(Exponential(100.0), seed=seed, cutoff=100.0))
        assert abs(f.model.m / 100 - 1) <= 0.15
        assert f.n_censored > 0


def test_fit_exponential_point_mass():
    f = fit_exponential(Rld(np.full(100, 40.0), 100, 1000))
    assert f.model.m == pytest.approx(40 * LN2)
    with pytest.raises(FitFailed):
        fit_exponential(Rld(np.zeros(100), 100, 1000))


def test_fit_requires_sample():
    with pytest.raises(InsufficientSample):
        fit_exponential(Rld(np.arange(1.0, 10), 9, 100))


def test_fit_weibull_envelopes():
    for seed in range(10):
        w = fit_weibull(sample_rld(Weibull(100.0, 0.5), seed=seed))
        assert 0.4 <= w.model.alpha <= 0.6
        assert w.alpha_ci[1] < 1 and w.alpha_below_one
        e = fit_weibull(sample_rld(Exponential(100.0), seed=seed))
        assert 0.9 <= e.model.alpha <= 1.1
        assert e.alpha_ci[0] <= e.model.alpha <= e.alpha_ci[1]


def test_fit_weibull_fixed_alpha_equals_exponential():
    for cutoff in (1e12, 120.0):
        r = sample_rld(Exponential(100.0), seed=3, cutoff=cutoff)
        assert fit_weibull(r, fixed_alpha=1.0).model.m == fit_exponential(r).model.m


def test_fit_weibull_point_mass_fails():
    with pytest.raises(FitFailed):
        fit_weibull(Rld(np.full(100, 40.0), 100, 1000))


def test_chi_square_calibration_and_power():
    passes = sum(fit_exponential(sample_rld(Exponential(100.0), seed=s)).passed
                 for s in range(200))
    assert 0.90 <= passes / 200 <= 0.99
    rejects = sum(not fit_exponential(sample_rld(Weibull(100.0, 0.5), seed=s)).passed
                  for s in range(100))
    assert rejects >= 95


def test_chi_square_perfect_fit():
    model = Exponential(100.0)
    for n, bins, bound in ((1024, 32, 1e-9), (1000, None, 1.0)):
        # 1024 points split evenly into 32 cells; the default binning leaves rounding residue
        q = model.quantile((np.arange(n) + 0.5) / n)
        res = chi_square_gof(Rld(q, n, 1e12), model, bins=bins)
        assert res.statistic < bound and res.passed and res.p_value > 0.999


def test_chi_square_bookkeeping():
    r = sample_rld(Exponential(100.0), seed=9, cutoff=150.0)
    res = chi_square_gof(r, Exponential(100.0), n_params=1)
    assert isinstance(res, ChiSquareResult)
    cells = len(res.observed)
    assert res.df == cells - 1 - 1
    assert sum(res.observed) == r.n_trials
    assert sum(res.expected) == pytest.approx(r.n_trials)
    assert min(res.expected) >= 5
    d = res.to_dict()
    assert d["df"] == res.df and d["verdict"] in ("pass", "reject")


def test_chi_square_left_truncation():
    r = sample_rld(Exponential(100.0), seed=4)
    res = chi_square_gof(r, Exponential(100.0), left_truncate=20.0)
    assert res.edges[0] == 20.0
    assert sum(res.observed) == r.n_trials - int(np.sum(r.successes <= 20.0))


def test_model_dict_round_trip():
    for m in (Exponential(3.0), Weibull(3.0, 0.7)):
        assert model_from_dict(m.to_dict()) == m
