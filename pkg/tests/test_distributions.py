import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ruinopt import (
    ConstantRate,
    DomainError,
    Erlang,
    Exponential,
    Gamma,
    LogNormal,
    Weibull,
    claim_cdf,
    claim_quantile,
    claim_sample,
    cumulative_hazard,
    hazard,
    sample_interarrival,
)
from ruinopt.distributions import hazard_increment

# root of t - ln(1 + t) = ln 2, from scipy.optimize.brentq at xtol 1e-15
ERLANG_2_1_MEDIAN_GAP = 1.6783469900166605

HAZARDS = [ConstantRate(1.3), Erlang(2, 1.0), Erlang(3, 2.0), Weibull(2.0, 1.0), Weibull(0.7, 1.5)]
CLAIMS = [Exponential(1.0), Exponential(2.0), Gamma(2.0, 1.0), Gamma(0.5, 3.0), LogNormal(0.0, 0.5)]


def _survival(model, t):
    """Survival function of the standard parametrisation, written independently."""
    if isinstance(model, ConstantRate):
        return math.exp(-model.rate * t)
    if isinstance(model, Weibull):
        return math.exp(-((t / model.scale) ** model.shape))
    z = model.rate * t
    return math.exp(-z) * sum(z**n / math.factorial(n) for n in range(model.k))


# hazard


def test_hazard_examples():
    assert hazard(ConstantRate(2.0), 0.7) == 2.0
    assert hazard(Weibull(2.0, 1.0), 0.5) == pytest.approx(1.0, rel=1e-14)
    assert hazard(Erlang(2, 1.0), 1.0) == pytest.approx(0.5, rel=1e-14)


def test_cumulative_hazard_examples():
    assert cumulative_hazard(ConstantRate(2.0), 3.0) == pytest.approx(6.0, rel=1e-15)
    assert cumulative_hazard(Weibull(2.0, 1.0), 0.5) == pytest.approx(0.25, rel=1e-14)
    assert cumulative_hazard(Erlang(2, 1.0), 1.0) == pytest.approx(1.0 - math.log(2.0), rel=1e-13)


@pytest.mark.parametrize("w", [-0.1, math.inf, math.nan])
def test_hazard_rejects_bad_elapsed_time(w):
    with pytest.raises(DomainError):
        hazard(ConstantRate(1.0), w)
    with pytest.raises(DomainError):
        cumulative_hazard(Erlang(2, 1.0), w)


@pytest.mark.parametrize("model", HAZARDS, ids=repr)
def test_survival_matches_standard_parametrisation(model):
    for t in (0.0, 0.1, 0.7, 2.0, 4.5):
        assert math.exp(-cumulative_hazard(model, t)) == pytest.approx(_survival(model, t), rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("model", HAZARDS, ids=repr)
def test_hazard_is_derivative_of_cumulative_hazard(model):
    w = np.random.default_rng(0).uniform(0.05, 5.0, 100)
    h = 1e-5
    numeric = (cumulative_hazard(model, w + h) - cumulative_hazard(model, w - h)) / (2 * h)
    np.testing.assert_allclose(hazard(model, w), numeric, rtol=1e-6)


@pytest.mark.parametrize("model", HAZARDS, ids=repr)
def test_cumulative_hazard_starts_at_zero_and_increases(model):
    assert cumulative_hazard(model, 0.0) == 0.0
    w = np.linspace(0.0, 6.0, 400)
    assert np.all(np.diff(cumulative_hazard(model, w)) >= 0.0)


def test_hazard_increment_is_exact_for_constant_rate():
    w = np.linspace(0.0, 5.0, 201)
    inc = hazard_increment(ConstantRate(1.0), w, 0.025)
    assert np.all(inc == 0.025)


def test_hazard_positive_except_at_weibull_origin():
    assert hazard(Erlang(2, 1.0), 1e-3) > 0
    assert hazard(Weibull(2.0, 1.0), 0.0) == 0.0


# inter-arrival sampling


def test_sample_interarrival_examples():
    for w in (0.0, 0.4, 3.0):
        assert sample_interarrival(ConstantRate(2.5), w, math.exp(-1.0)) == pytest.approx(1 / 2.5, rel=1e-14)
    assert sample_interarrival(Weibull(2.0, 1.0), 0.0, math.exp(-1.0)) == pytest.approx(1.0, rel=1e-14)
    assert sample_interarrival(Erlang(2, 1.0), 0.0, 0.5) == pytest.approx(ERLANG_2_1_MEDIAN_GAP, rel=1e-11)


@pytest.mark.parametrize("u", [0.0, 1.0, -0.5, 1.5, math.nan])
def test_sample_interarrival_rejects_bad_uniform(u):
    with pytest.raises(DomainError):
        sample_interarrival(Erlang(2, 1.0), 0.0, u)


@settings(max_examples=200, deadline=None)
@given(
    model=st.sampled_from(HAZARDS),
    w=st.floats(0.0, 5.0),
    u=st.floats(1e-12, 1.0 - 1e-12, exclude_min=True, exclude_max=True),
)
def test_sample_interarrival_solves_hazard_equation(model, w, u):
    t = sample_interarrival(model, w, u)
    assert t >= 0.0
    gap = cumulative_hazard(model, w + t) - cumulative_hazard(model, w)
    assert gap == pytest.approx(-math.log(u), rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("model", HAZARDS, ids=repr)
@pytest.mark.parametrize("w", [0.0, 0.3, 1.7])
def test_interarrival_law_within_ks_band(model, w):
    n = 100_000
    u = np.random.default_rng(11).uniform(size=n)
    t = np.sort([sample_interarrival(model, w, x) for x in u])
    band = 1.628 / math.sqrt(n)  # 99% Kolmogorov-Smirnov quantile
    for prob in np.linspace(0.05, 0.95, 10):
        q = t[int(prob * n)]
        exact = math.exp(-(cumulative_hazard(model, w + q) - cumulative_hazard(model, w)))
        empirical = np.mean(t > q)
        assert abs(empirical - exact) <= band


# claim sizes


def test_claim_examples():
    assert claim_cdf(Exponential(1.0), math.log(2.0)) == pytest.approx(0.5, rel=1e-14)
    assert claim_quantile(Exponential(2.0), 0.5) == pytest.approx(2 * math.log(2.0), rel=1e-14)
    assert claim_cdf(Gamma(2.0, 1.0), 0.0) == 0.0


def test_claim_sample_is_quantile():
    u = np.linspace(0.01, 0.99, 50)
    for dist in CLAIMS:
        np.testing.assert_array_equal(claim_sample(dist, u), claim_quantile(dist, u))


@pytest.mark.parametrize("dist", CLAIMS, ids=repr)
def test_claim_cdf_limits_and_monotone(dist):
    y = np.linspace(0.0, 50.0, 2001)
    c = claim_cdf(dist, y)
    assert c[0] == 0.0
    assert np.all(np.diff(c) >= 0.0)
    assert claim_cdf(dist, 1e6) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("dist", CLAIMS, ids=repr)
def test_quantile_inverts_cdf(dist):
    y = np.linspace(0.05, 8.0, 200)
    np.testing.assert_allclose(claim_quantile(dist, claim_cdf(dist, y)), y, rtol=1e-9)


def test_claim_rejects_out_of_range():
    with pytest.raises(DomainError):
        claim_quantile(Exponential(1.0), 1.0)
    with pytest.raises(DomainError):
        claim_quantile(Exponential(1.0), 0.0)
    with pytest.raises(DomainError):
        claim_cdf(Exponential(1.0), -1.0)


@pytest.mark.parametrize("bad", [
    lambda: ConstantRate(0.0),
    lambda: Erlang(0, 1.0),
    lambda: Erlang(1.5, 1.0),
    lambda: Weibull(-1.0, 1.0),
    lambda: Exponential(-2.0),
    lambda: Gamma(1.0, 0.0),
    lambda: LogNormal(0.0, 0.0),
])
def test_constructors_validate(bad):
    with pytest.raises(DomainError):
        bad()
