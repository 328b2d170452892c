import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from trapclock import randscape as rs
from trapclock import rng as rngmod


# -- rng ---------------------------------------------------------------------

def test_streams_are_reproducible_and_distinct():
    a = rngmod.generator(7, rngmod.DYNAMICS, 3).random(5)
    b = rngmod.generator(7, rngmod.DYNAMICS, 3).random(5)
    c = rngmod.generator(7, rngmod.DYNAMICS, 4).random(5)
    d = rngmod.generator(7, rngmod.LANDSCAPE, 3).random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_generator_passthrough_and_seed_required():
    g = np.random.default_rng(0)
    assert rngmod.generator(g) is g
    with pytest.raises(ValueError):
        rngmod.generator(None)


def test_batch_sizes():
    assert rngmod.batch_sizes(10, 4) == [4, 4, 2]
    assert rngmod.batch_sizes(8, 4) == [4, 4]
    assert rngmod.batch_sizes(0, 4) == []


# -- TailSpec ----------------------------------------------------------------

def test_pareto_inverse_transform_example():
    tail = rs.TailSpec.pareto(0.5)
    assert tail.quantile(0.25) == 16.0


def test_degenerate_landscape():
    land = rs.sample_landscape(4, rs.TailSpec.degenerate(3.0), seed=1)
    assert land.tau.tolist() == [3.0, 3.0, 3.0, 3.0]


@pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5, -0.2])
def test_invalid_alpha_rejected(alpha):
    with pytest.raises(ValueError):
        rs.TailSpec.pareto(alpha)


@given(p=st.floats(min_value=1e-12, max_value=1.0), alpha=st.floats(min_value=0.05, max_value=0.95))
def test_generalized_inverse_convention(p, alpha):
    tail = rs.TailSpec.pareto(alpha)
    assert tail.survival(tail.quantile(p)) <= p * (1 + 1e-12)


@given(p=st.floats(min_value=1e-8, max_value=1.0))
def test_log_corrected_quantile_roundtrip(p):
    tail = rs.TailSpec.pareto(0.5, log_power=0.3)
    assert tail.survival(tail.quantile(p)) == pytest.approx(p, rel=1e-8)


def test_survival_shape():
    tail = rs.TailSpec.pareto(0.4, x_min=2.0)
    assert tail.survival(2.0) == 1.0
    assert tail.survival(1.0) == 1.0
    u = np.geomspace(2, 1e8, 50)
    g = tail.survival(u)
    assert np.all(np.diff(g) <= 0)
    assert g[-1] < 1e-2


def test_moment_analytic_matches_quadrature():
    tail = rs.TailSpec.pareto(0.5)
    assert tail.moment(0.2) == pytest.approx(5 / 3, rel=1e-14)
    # quadrature of the density alpha x^(-alpha-1) directly
    q, _ = integrate.quad(lambda x: x**0.2 * 0.5 * x**-1.5, 1, np.inf)
    assert tail.expect(lambda x: x**0.2) == pytest.approx(q, rel=1e-8)


def test_sample_mean_of_tau_power():
    tail = rs.TailSpec.pareto(0.5)
    x = rs.sample_landscape(10**6, tail, seed=11).tau ** 0.2
    se = x.std() / math.sqrt(x.size)
    assert abs(x.mean() - 5 / 3) < 3 * se


@pytest.mark.parametrize("u", [2.0, 10.0, 100.0])
def test_empirical_tail_matches_survival(u):
    tail = rs.TailSpec.pareto(0.5)
    tau = rs.sample_landscape(10**6, tail, seed=5).tau
    p = float(tail.survival(u))
    se = math.sqrt(p * (1 - p) / tau.size)
    assert abs(np.mean(tau > u) - p) < 4 * se


def test_custom_table_tail():
    depth = [1.0, 10.0, 100.0]
    surv = [1.0, 0.3, 0.1]
    tail = rs.TailSpec.custom(depth, surv, alpha=0.5)
    assert tail.survival(10.0) == pytest.approx(0.3)
    assert tail.quantile(0.1) == pytest.approx(100.0)
    assert tail.survival(400.0) == pytest.approx(0.05)


# -- scales ------------------------------------------------------------------

def test_space_scale_examples():
    tail = rs.TailSpec.pareto(0.5)
    sc = rs.space_scale(tail, "intermediate", b_n=100)
    assert sc.r_n == pytest.approx(1e4, rel=1e-14)
    assert sc.check(tail)
    ext = rs.space_scale(tail, "extreme", n=10**4)
    assert ext.r_n == pytest.approx(1e8, rel=1e-14)
    cst = rs.space_scale(tail, "constant", r=1.0, a=0.3)
    assert cst.c_n == 1.0 and cst.a_n == 1.0


def test_time_scale_relation():
    tail = rs.TailSpec.pareto(0.5)
    sc = rs.space_scale(tail, "intermediate", b_n=317, a=0.2)
    assert sc.c_n == sc.r_n ** 0.8
    assert sc.a_n == pytest.approx(sc.r_n**-0.2 * 317)


def test_intermediate_requires_bn_below_n():
    tail = rs.TailSpec.pareto(0.5)
    with pytest.raises(ValueError):
        rs.space_scale(tail, "intermediate", b_n=100, n=100)
    with pytest.raises(ValueError):
        rs.space_scale(tail, "extreme", b_n=10, n=100)


def test_scale_separation():
    tail = rs.TailSpec.pareto(0.5)
    prev = 0
    for n in (10**3, 10**4, 10**5, 10**6):
        r_cst = 1.0
        r_int = rs.space_scale(tail, "intermediate", b_n=math.ceil(n**0.5), n=n).r_n
        r_ext = rs.space_scale(tail, "extreme", n=n).r_n
        assert r_cst < r_int < r_ext
        ratio = r_ext / r_int
        assert ratio > prev
        prev = ratio


# -- Gibbs -------------------------------------------------------------------

def test_gibbs_examples():
    assert rs.gibbs_measure(np.array([1.0, 1.0, 2.0]), 1.0).tolist() == [0.25, 0.25, 0.5]
    assert np.allclose(rs.gibbs_measure(np.array([1.0, 2.0, 4.0]), 0.0), 1 / 3)
    assert rs.gibbs_measure(np.array([4.0]), 0.7).tolist() == [1.0]


@given(st.lists(st.floats(min_value=1.0, max_value=1e12), min_size=1, max_size=30),
       st.floats(min_value=0.0, max_value=1.0))
def test_gibbs_is_probability(tau, e):
    w = rs.gibbs_measure(np.array(tau), e)
    assert abs(w.sum() - 1) < 1e-12 and np.all(w >= 0)


# -- PRM and LePage ----------------------------------------------------------

def test_prm_injected_example():
    prm = rs.prm_points(0.5, exponentials=np.ones(4))
    assert prm.Gamma.tolist() == [1.0, 2.0, 3.0, 4.0]
    assert np.allclose(prm.gamma, [1, 0.25, 1 / 9, 1 / 16])


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31))
def test_prm_strictly_decreasing(seed):
    prm = rs.prm_points(0.4, K=500, seed=seed)
    assert np.all(np.diff(prm.gamma) < 0) and np.all(prm.gamma > 0)


def test_prm_largest_point_is_frechet():
    """P(gamma_1 <= x) = exp(-x^-alpha), checked over 10^5 seeds."""
    alpha = 0.5
    g1 = np.array([rs.prm_points(alpha, K=1, seed=s).gamma[0] for s in range(10**5)])
    res = stats.kstest(g1, lambda x: np.exp(-x**-alpha))
    assert res.pvalue > 0.01


def test_truncation_count_meets_tolerance():
    K = rs.truncation_count(0.5, 1e-6)
    assert rs.residual_sum(0.5, K) <= 1e-6
    assert rs.residual_sum(0.5, K - 1) > 1e-6


def test_lepage_injected_example():
    n = 3
    E = np.ones(n + 1)
    g, prm = rs.lepage_landscape(n, rs.TailSpec.pareto(0.5), r_n=(n + 1) ** 2, exponentials=E)
    assert np.allclose(g, [1, 1 / 4, 1 / 9])
    assert np.allclose(prm.gamma[:n], [1, 1 / 4, 1 / 9][: prm.K])


def test_lepage_top_point_frechet():
    n, alpha = 10**4, 0.5
    tail = rs.TailSpec.pareto(alpha)
    r_n = rs.space_scale(tail, "extreme", n=n).r_n
    top = np.array([rs.lepage_landscape(n, tail, r_n, seed=s, K=n)[0][0] for s in range(5000)])
    res = stats.kstest(top, lambda x: np.exp(-x**-alpha))
    assert res.pvalue > 0.01


def test_lepage_coupling_functional_converges():
    """Sum f(gamma_nk) approaches sum f(gamma_k) as n grows, same stream."""
    a, alpha = 0.2, 0.5
    tail = rs.TailSpec.pareto(alpha)
    f = lambda y: y**a * np.exp(-y ** -(1 - a))  # noqa: E731
    gaps = []
    for seed in range(5):
        K = 10**6
        _, prm = rs.lepage_landscape(10**5, tail, 1.0, seed=seed, K=K)
        limit = f(prm.gamma).sum()
        row = []
        for n in (10**3, 10**4, 10**5):
            r_n = rs.space_scale(tail, "extreme", n=n).r_n
            g, _ = rs.lepage_landscape(n, tail, r_n, seed=seed, K=K)
            row.append(abs(f(g).sum() - limit))
        gaps.append(row)
    med = np.median(np.array(gaps), axis=0)
    assert med[0] > med[1] > med[2]


def test_poisson_dirichlet_examples():
    assert rs.poisson_dirichlet_weights(np.array([2.0, 1.0, 1.0])).tolist() == [0.5, 0.25, 0.25]
    assert rs.poisson_dirichlet_weights(np.array([3.0])).tolist() == [1.0]


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_poisson_dirichlet_normalized(seed):
    w = rs.poisson_dirichlet_weights(rs.prm_points(0.6, K=300, seed=seed))
    assert abs(w.sum() - 1) < 1e-12
    assert np.all(np.diff(w) <= 0)


def test_poisson_dirichlet_rejects_alpha_one():
    prm = rs.PRMPoints(np.array([1.0, 0.5]), 1.0)
    with pytest.raises(ValueError):
        rs.poisson_dirichlet_weights(prm)


# -- serialization -------------------------------------------------------------

def test_landscape_json_roundtrip(tmp_path):
    land = rs.sample_landscape(50, rs.TailSpec.pareto(0.5), seed=4)
    doc = json.loads(land.to_json())
    assert doc["n"] == 50 and doc["tail_kind"] == "pareto" and doc["seed"]["master"] == 4
    back = rs.Landscape.from_json(land.to_json())
    assert np.array_equal(back.tau, land.tau)
    p = tmp_path / "l.json"
    land.to_json(p)
    assert np.array_equal(rs.Landscape.from_json(p).tau, land.tau)


def test_large_landscape_uses_side_file(tmp_path):
    land = rs.sample_landscape(rs.JSON_INLINE_LIMIT + 1, rs.TailSpec.pareto(0.5), seed=4)
    p = tmp_path / "big.json"
    land.to_json(p)
    doc = json.loads(p.read_text())
    assert "values_file" in doc or "values_path" in doc or "side_file" in json.dumps(doc)
    assert np.array_equal(rs.Landscape.from_json(p).tau, land.tau)


def test_prm_json_roundtrip():
    prm = rs.prm_points(0.5, K=20, seed=2)
    back = rs.PRMPoints.from_json(prm.to_json())
    assert np.array_equal(back.gamma, prm.gamma)
