import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from trapclock import dynamics as dyn
from trapclock import limits as lim
from trapclock import randscape as rs
from trapclock import rng as rngmod


def cst_closed_form(u, alpha, a):
    """nu^{cst,-} for the pure Pareto law: abar u^-abar lower_gamma(abar, u)."""
    ab = lim.alpha_bar(alpha, a)
    return ab * u ** (-ab) * special.gamma(ab) * special.gammainc(ab, u)


# -- arcsine law ----------------------------------------------------------------------

def test_asl_examples():
    assert lim.asl_cdf(0.5, 1.0) == 1.0
    assert lim.asl_cdf(0.5, 0.5) == pytest.approx(0.5, abs=1e-12)
    assert lim.asl_cdf(0.5, 0.75) == pytest.approx(2 / 3, abs=1e-12)
    assert lim.asl_cdf(0.3, 0.0) == 0.0


@settings(max_examples=60, deadline=None)
@given(ab=st.floats(min_value=0.02, max_value=0.98), u=st.floats(min_value=0.0, max_value=1.0))
def test_asl_matches_incomplete_beta(ab, u):
    assert lim.asl_cdf(ab, u) == pytest.approx(special.betainc(ab, 1 - ab, u), abs=1e-10)


def test_asl_monotone():
    u = np.linspace(0, 1, 201)
    assert np.all(np.diff(lim.asl_cdf(0.375, u)) >= 0)


@pytest.mark.parametrize("bad", [(0.0, 0.5), (1.0, 0.5), (0.5, -0.1), (0.5, 1.1)])
def test_asl_rejects_out_of_range(bad):
    with pytest.raises(ValueError):
        lim.asl_cdf(*bad)


def test_asl_sampler_consistent():
    x = np.sort(lim.asl_sample(0.375, 10**4, rng=3))
    res = stats.kstest(x, lambda u: lim.asl_cdf(0.375, u))
    assert res.pvalue > 0.01


# -- Levy tails -----------------------------------------------------------------------

def test_cst_minus_degenerate():
    t = lim.LevyTail.cst_minus(rs.TailSpec.degenerate(2.0), 0.3)
    for u in (0.1, 1.0, 5.0):
        assert t(u) == pytest.approx(math.exp(-u / 2.0**0.7), rel=1e-12)


@pytest.mark.parametrize("u", [1e-3, 0.5, 1.0, 10.0, 1e3, 1e5])
def test_cst_minus_quadrature_against_closed_form(u):
    t = lim.LevyTail.cst_minus(rs.TailSpec.pareto(0.5), 0.2)
    assert t(u) == pytest.approx(cst_closed_form(u, 0.5, 0.2), rel=1e-8)


def test_int_minus_example():
    t = lim.LevyTail.int_minus(0.5, 0.2)
    gamma_quad, _ = integrate.quad(lambda x: x ** (0.375 - 1) * math.exp(-x), 0, np.inf)
    assert t(1.0) == pytest.approx(0.625 * gamma_quad / (5 / 3), rel=1e-9)
    assert lim.levy_tail("int_minus", {"alpha": 0.5, "a": 0.2}, 1.0) == t(1.0)


@pytest.mark.parametrize("kind", ["int_minus", "stable"])
@pytest.mark.parametrize("c", [0.5, 2.0, 10.0])
def test_power_tail_scaling(kind, c):
    t = lim.LevyTail.int_minus(0.5, 0.2) if kind == "int_minus" else lim.LevyTail.stable(0.375, 2.5)
    for u in (0.01, 1.0, 7.0):
        assert abs(t(c * u) * c**t.abar - t(u)) < 1e-12


def test_ext_plus_single_atom():
    g = 3.0
    t = lim.LevyTail.ext_plus([g], 0.4)
    for u in (0.2, 1.0, 4.0):
        assert t(u) == pytest.approx(math.exp(-u * g ** -0.6), rel=1e-14)


def test_ext_plus_is_probability_tail():
    prm = rs.prm_points(0.3, seed=4)
    t = lim.LevyTail.ext_plus(prm, 0.6)
    u = np.geomspace(1e-6, 1e6, 40)
    v = t(u)
    assert np.all((v >= 0) & (v <= 1)) and np.all(np.diff(v) <= 0)
    assert v[0] > 0.99 and v[-1] < 0.01


def test_levy_tail_errors():
    with pytest.raises(ValueError):
        lim.LevyTail.ext_plus([], 0.5)
    with pytest.raises(ValueError):
        lim.levy_tail("stable", {"abar": 0.5}, 0.0)
    with pytest.raises(ValueError):
        lim.levy_tail("nonsense", {}, 1.0)


@pytest.mark.parametrize("kind", ["stable", "ext_minus", "cst_minus"])
def test_small_jump_mean_matches_integral(kind):
    prm = rs.prm_points(0.5, K=500, seed=2)
    t = {"stable": lim.LevyTail.stable(0.375, 1.3),
         "ext_minus": lim.LevyTail.ext_minus(prm, 0.2, 5 / 3),
         "cst_minus": lim.LevyTail.cst_minus(rs.TailSpec.pareto(0.5), 0.2)}[kind]
    eps = 0.05
    # int_0^eps x nu(dx) = int_0^eps (nu(u) - nu(eps)) du
    ref, _ = integrate.quad(lambda u: t(u) - t(eps), 0, eps, limit=200, epsrel=1e-10)
    assert t.small_jump_mean(eps) == pytest.approx(ref, rel=1e-6)


# -- sampler / evaluator consistency -------------------------------------------------------

def _survival_check(sample, tail, grid):
    for u in grid:
        p = float(tail(u)) / tail.total_mass() if math.isfinite(tail.total_mass()) else None
        se = math.sqrt(p * (1 - p) / sample.size)
        assert abs(np.mean(sample > u) - p) < 4 * se


def test_renewal_samplers_match_evaluators():
    gen = rngmod.generator(5, rngmod.LIMIT)
    prm = rs.prm_points(0.3, K=2000, seed=7)
    for t in (lim.LevyTail.cst_minus(rs.TailSpec.pareto(0.5), 0.2), lim.LevyTail.ext_plus(prm, 0.6),
              lim.LevyTail.cst_minus(rs.TailSpec.pareto(0.5, log_power=0.2), 0.1)):
        _survival_check(t.sample_jumps(gen, 10**5), t, (0.5, 2.0, 8.0))


def test_size_biased_depth_is_pareto():
    t = lim.LevyTail.cst_minus(rs.TailSpec.pareto(0.5), 0.2)
    tau = t._size_biased(rngmod.generator(1, rngmod.LIMIT), 10**5)
    # oracle: integrate x^a against the Pareto density above u and normalise
    num, _ = integrate.quad(lambda x: x**0.2 * 0.5 * x**-1.5, 10, np.inf)
    p = num / (5 / 3)
    assert p == pytest.approx(10 ** -0.3, rel=1e-8)
    se = math.sqrt(p * (1 - p) / tau.size)
    assert abs(np.mean(tau > 10) - p) < 4 * se


def test_truncated_samplers_respect_cutoff():
    gen = rngmod.generator(3, rngmod.LIMIT)
    prm = rs.prm_points(0.5, K=500, seed=1)
    for t in (lim.LevyTail.stable(0.375), lim.LevyTail.ext_minus(prm, 0.2, 5 / 3)):
        x = t.sample_jumps(gen, 10**5, eps=0.01)
        assert np.all(x > 0.01)
        grid = (0.05, 0.5)
        for u in grid:
            p = t(u) / t(0.01)
            se = math.sqrt(p * (1 - p) / x.size)
            assert abs(np.mean(x > u) - p) < 4 * se


# -- paths ----------------------------------------------------------------------------

def test_renewal_poisson_arrivals():
    t = lim.LevyTail.cst_minus(rs.TailSpec.degenerate(1.0), 0.0)
    k = 10**5
    path = lim.simulate_renewal(t, k, rng=1)
    assert abs(path.values[-1] / k - 1) < 4 / math.sqrt(k)
    assert np.all(np.diff(path.values) >= 0)


def test_renewal_rejects_infinite_measure():
    with pytest.raises(ValueError):
        lim.simulate_renewal(lim.LevyTail.stable(0.5), 10, rng=1)


def test_compound_poisson_fixed_jump():
    x0, c, T = 0.7, 3.0, 2.0
    t = lim.LevyTail.tabulated([x0], [c])
    counts = np.array([lim.simulate_subordinator(t, T, 0.1, rng=s).values[-1:].sum() / x0 for s in range(3000)])
    mean, var = counts.mean(), counts.var()
    assert abs(mean - c * T) < 4 * math.sqrt(c * T / counts.size)
    assert abs(var - c * T) < 4 * c * T * math.sqrt(2 / counts.size) + 0.1


def test_subordinator_jump_count():
    t = lim.LevyTail.stable(0.375)
    eps, T = 1e-3, 3.0
    lam = t.truncated_mass(eps) * T
    n = np.array([lim.simulate_subordinator(t, T, eps, rng=s).sizes.size for s in range(400)])
    assert abs(n.mean() - lam) < 4 * math.sqrt(lam / n.size)


def test_subordinator_bias_bound():
    t = lim.LevyTail.stable(0.375, 2.0)
    p = lim.simulate_subordinator(t, 5.0, 1e-4, rng=2)
    assert p.bias_bound == pytest.approx(5.0 * 2.0 * 0.375 * 1e-4**0.625 / 0.625)
    assert np.all(p.sizes > 1e-4)


def test_stable_self_similarity():
    t = lim.LevyTail.stable(0.375)
    eps = 1e-5
    vals = {}
    for T in (1.0, 4.0):
        S = np.array([lim.simulate_subordinator(t, T, eps * T ** (1 / 0.375), rng=100 * int(T) + s).horizon
                      for s in range(2000)])
        vals[T] = S / T ** (1 / 0.375)
    assert stats.ks_2samp(vals[1.0], vals[4.0]).pvalue > 0.01


# -- overshoot ------------------------------------------------------------------------

def test_overshoot_examples():
    p = dyn.ClockPath(np.array([0.5, 2.0]))
    assert lim.overshoot(p, 1.0) == (2.0, 1.0)
    assert lim.overshoot(p, 0.2) == (0.5, pytest.approx(0.3))


def test_overshoot_incomplete_path():
    p = dyn.ClockPath(np.array([0.5, 2.0]))
    with pytest.raises(lim.IncompletePathError):
        lim.overshoot(p, 2.0)
    with pytest.raises(lim.IncompletePathError):
        lim.overshoot(lim.simulate_renewal(lim.LevyTail.ext_plus([1.0], 0.5), 1, rng=0), 1e9)


def test_overshoot_limit_path_agrees_with_passage():
    t = lim.LevyTail.stable(0.375)
    path = lim.simulate_subordinator(t, 50.0, 1e-3, rng=3)
    D, theta = lim.overshoot(path, 1.0)
    pts = path.range_points()
    assert D == pts[pts > 1.0][0] and theta == D - 1.0


def test_stable_overshoot_is_arcsine():
    t = lim.LevyTail.stable(0.375)
    D = lim.limit_passage(t, 1.0, 10**4, rng=8, eps=1e-5)
    x = np.sort(1.0 / D)
    d = stats.kstest(x, lambda u: special.betainc(0.375, 0.625, u)).statistic
    assert d < 0.02


# -- limit correlation --------------------------------------------------------------

def test_limit_correlation_fast_path():
    t = lim.LevyTail.stable(0.375)
    for tt, rho in ((0.3, 1.0), (5.0, 3.0)):
        e = lim.limit_correlation(t, None, tt, rho * tt, 1, rng=0)
        assert e.mean == lim.asl_cdf(0.375, 1 / (1 + rho))
    assert lim.limit_correlation(t, None, 1.0, 0.0, 10, rng=0).mean == 1.0


def test_stationary_delay_makes_correlation_flat():
    prm = rs.prm_points(0.3, K=3000, seed=12)
    t = lim.LevyTail.ext_plus(prm, 0.6)
    delay = lim.stationary_delay(prm, 0.6)
    e1 = lim.limit_correlation(t, delay, 0.5, 1.0, 40000, rng=1)
    e2 = lim.limit_correlation(t, delay, 3.0, 1.0, 40000, rng=2)
    assert abs(e1.mean - e2.mean) < 3 * math.hypot(e1.stderr, e2.stderr)
    c = lim.stationary_correlation(prm, 0.6, 1.0)
    assert abs(e1.mean - c) < 4 * e1.stderr


def test_stationary_delay_sampler():
    prm = rs.prm_points(0.5, K=1000, seed=3)
    d = lim.stationary_delay(prm, 0.2)
    x = d.sample(rngmod.generator(4, rngmod.DELAY), 10**5)
    for v in (0.1, 1.0, 5.0):
        p = d.survival(v)
        assert abs(np.mean(x > v) - p) < 4 * math.sqrt(p * (1 - p) / x.size)


# -- stationary objects ---------------------------------------------------------------

def test_stationary_correlation_examples():
    prm = rs.prm_points(0.5, K=100, seed=1)
    assert lim.stationary_correlation(prm, 0.3, 0.0) == pytest.approx(1.0, abs=1e-15)
    g = 2.5
    assert lim.stationary_correlation([g], 0.3, 1.7) == pytest.approx(math.exp(-1.7 * g ** -0.7))
    with pytest.raises(ValueError):
        lim.stationary_correlation([], 0.3, 1.0)
    val, bound = lim.stationary_correlation(prm, 0.3, 1.0, with_bound=True)
    assert 0 < val < 1 and bound > 0


def test_mean_lifetime_examples():
    t = lim.LevyTail.ext_minus([3.0], 0.4, 1.0)
    assert lim.mean_lifetime(t) == pytest.approx(3.0)
    t = lim.LevyTail.ext_plus([2.0, 1.0], 0.5)
    assert lim.mean_lifetime(t) == pytest.approx(3 / (math.sqrt(2) + 1))


def test_tail_table_csv():
    text = lim.tail_table(lim.LevyTail.stable(0.5), [1.0, 4.0])
    assert text.splitlines() == ["u,nu", "1.0,1.0", "4.0,0.5"]
