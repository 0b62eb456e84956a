import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from directedit.core import NULL_CONDITION, Condition, InvalidArgument, NotFound, SeedSpec, SingularityError
from directedit.fields import (
    AnalyticField,
    Delta,
    IsotropicGaussian,
    Mixture,
    cfg_combine,
    delta_velocity,
    fm_loss,
    gaussian_velocity,
    guided_velocity,
    mixture_velocity,
    mixture_weights,
    sample_distribution,
)

import oracles

times = st.floats(0.02, 1.0)
GRID = np.linspace(-12, 12, 200_001)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-3, 3), t=times, c=st.floats(-2, 2), sigma=st.floats(0.2, 2.0))
def test_gaussian_velocity_matches_quadrature(x, t, c, sigma):
    ref = oracles.posterior_velocity_1d(x, t, lambda g: norm.logpdf(g, c, sigma), GRID)
    got = gaussian_velocity(np.array([x]), t, np.array([c]), sigma)[0]
    assert got == pytest.approx(ref, rel=1e-6, abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-3, 3), t=times, w=st.floats(0.1, 0.9))
def test_mixture_velocity_matches_quadrature(x, t, w):
    comps = ((w, np.array([-1.0]), 0.3), (1 - w, np.array([1.5]), 0.6))
    logd = lambda g: np.logaddexp(np.log(w) + norm.logpdf(g, -1.0, 0.3), np.log(1 - w) + norm.logpdf(g, 1.5, 0.6))
    ref = oracles.posterior_velocity_1d(x, t, logd, GRID)
    got = mixture_velocity(np.array([x]), t, Mixture(comps))[0]
    assert got == pytest.approx(ref, rel=1e-6, abs=1e-6)


def test_gaussian_velocity_monte_carlo():
    # Regression of eps - x0 on x_t over many draws at one time.
    gen = np.random.default_rng(0)
    t, c, sigma = 0.4, 0.7, 0.5
    x0 = c + sigma * gen.standard_normal(2_000_000)
    eps = gen.standard_normal(x0.size)
    xt = (1 - t) * x0 + t * eps
    sel = np.abs(xt - 0.5) < 0.01
    mc = np.mean((eps - x0)[sel])
    assert gaussian_velocity(np.array([0.5]), t, np.array([c]), sigma)[0] == pytest.approx(mc, abs=0.02)


@pytest.mark.parametrize("n", [1, 2, 7, 50])
def test_delta_transport_exact(n):
    gen = np.random.default_rng(n)
    mu, eps = gen.random((3, 4, 1)), gen.standard_normal((3, 4, 1))
    grid = np.linspace(1, 0, n + 1)
    z = oracles.euler(lambda z, t: delta_velocity(z, t, mu), eps, grid)
    np.testing.assert_allclose(z, mu, rtol=0, atol=1e-6)


def test_delta_singular_at_zero():
    with pytest.raises(SingularityError):
        delta_velocity(np.zeros(2), 0.0, np.zeros(2))
    with pytest.raises(InvalidArgument):
        delta_velocity(np.zeros(2), 1.5, np.zeros(2))


def test_gaussian_limits():
    x, c = np.array([0.3, -1.0]), np.array([1.0, 2.0])
    # sigma -> 0 approaches the delta field
    np.testing.assert_allclose(gaussian_velocity(x, 0.5, c, 1e-6), delta_velocity(x, 0.5, c), atol=1e-9)
    # at t=1 the state is pure noise and the velocity is x - c
    np.testing.assert_allclose(gaussian_velocity(x, 1.0, c, 0.7), x - c)
    with pytest.raises(InvalidArgument):
        IsotropicGaussian(c, 0.0)


@given(x=st.floats(-50, 50), t=st.floats(1e-4, 1.0))
def test_mixture_weights_sum_to_one(x, t):
    mix = Mixture(((0.2, np.array([-3.0]), 0.01), (0.5, np.array([0.0]), 0.05), (0.3, np.array([4.0]), 1.0)))
    w = mixture_weights(np.array([x]), t, mix)
    assert abs(w.sum() - 1) <= 1e-12 and np.all(w >= 0)


def test_mixture_single_component_is_gaussian():
    x, c = np.array([0.1, 0.9]), np.array([0.5, 0.5])
    np.testing.assert_array_equal(mixture_velocity(x, 0.3, Mixture(((1.0, c, 0.4),))),
                                  gaussian_velocity(x, 0.3, c, 0.4))


@pytest.mark.parametrize("comps", [
    (),
    ((0.5, np.zeros(1), 1.0),),
    ((1.2, np.zeros(1), 1.0), (-0.2, np.zeros(1), 1.0)),
    ((0.5, np.zeros(1), 1.0), (0.5, np.zeros(2), 1.0)),
    ((1.0, np.zeros(1), 0.0),),
])
def test_mixture_rejects(comps):
    with pytest.raises(InvalidArgument):
        Mixture(comps)


def test_field_registry():
    f = AnalyticField({"a": Delta(np.ones(3)), "∅": Delta(np.zeros(3))})
    x = np.full(3, 2.0)
    np.testing.assert_array_equal(f(x, 0.5, Condition("a")), (x - 1) / 0.5)
    np.testing.assert_array_equal(f(x, 0.5, NULL_CONDITION), x / 0.5)
    np.testing.assert_array_equal(f(x, 0.5, Condition("b", "a")), f(x, 0.5, Condition("a")))
    with pytest.raises(NotFound):
        f(x, 0.5, Condition("missing"))
    assert np.array_equal(f(x, 0.5, Condition("a")), f(x, 0.5, Condition("a")))


@given(st.floats(-5, 5))
def test_cfg_combine(scale):
    gen = np.random.default_rng(3)
    u, c = gen.random(5), gen.random(5)
    np.testing.assert_allclose(cfg_combine(u, c, scale), u + scale * (c - u))
    assert np.array_equal(cfg_combine(u, c, 1.0), c)
    assert np.array_equal(cfg_combine(u, c, 0.0), u)


def test_guided_skips_null_at_unit_scale():
    calls = []

    def field(x, t, cond):
        calls.append(cond.id)
        return x * (2.0 if cond.is_null else 3.0)

    x = np.ones(2)
    np.testing.assert_array_equal(guided_velocity(field, x, 0.5, Condition("a"), 1.0), 3 * x)
    assert calls == ["a"]
    np.testing.assert_allclose(guided_velocity(field, x, 0.5, Condition("a"), 2.0), 4 * x)


def test_sample_distribution():
    gen = np.random.default_rng(0)
    c = np.array([1.0, -1.0])
    assert np.array_equal(sample_distribution(Delta(c), gen), c)
    draws = np.array([sample_distribution(IsotropicGaussian(c, 0.5), gen) for _ in range(4000)])
    np.testing.assert_allclose(draws.mean(0), c, atol=0.05)
    np.testing.assert_allclose(draws.std(0), 0.5, atol=0.05)


def test_fm_loss_gaussian_is_irreducible_variance():
    # For N(c, s^2) data the minimal loss is the posterior variance of eps - x0, which is
    # positive; any constant offset adds its squared norm on top.
    c, s = np.zeros(4), 0.8
    dist = IsotropicGaussian(c, s)
    field = AnalyticField({"g": dist})
    offset = lambda x, t, cond: field(x, t, cond) + 0.3
    base = fm_loss(field, dist, Condition("g"), 2000, SeedSpec(0))
    assert base > 0
    assert fm_loss(offset, dist, Condition("g"), 2000, SeedSpec(0)) == pytest.approx(base + 4 * 0.09, rel=0.1)
    with pytest.raises(InvalidArgument):
        fm_loss(field, dist, Condition("g"), 0, SeedSpec(0))
