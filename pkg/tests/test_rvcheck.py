import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tailgraph import decay as dec
from tailgraph import fixtures, models, rvcheck
from tailgraph.errors import DomainError


def test_default_grid_geometric_in_T_scale():
    g = rvcheck.default_t_grid(dec.identity())
    np.testing.assert_allclose(g, np.geomspace(10, 1e5, 10))
    T = dec.power_exp(2.0)
    gt = rvcheck.default_t_grid(T)
    np.testing.assert_allclose(np.asarray(T.T(gt)), np.geomspace(10, 1e5, 10), rtol=1e-10)


def test_index_gaussian_density_over_T_prime():
    fx = fixtures.gaussian()
    T = fx.decay
    u = lambda x: fx.f(x) / T.T_prime(x)
    est = rvcheck.index_estimate(u, T, t_grid=np.linspace(5, 15, 6))
    assert est.alpha == pytest.approx(-1.5, abs=0.01)


def test_index_log_cauchy_survival():
    fx = fixtures.log_cauchy()
    est = rvcheck.index_estimate(fx.F_bar, fx.decay, t_grid=np.geomspace(1e3, 1e12, 8))
    assert est.alpha == pytest.approx(-1.0, abs=2e-3)


def test_index_pure_power_exact():
    est = rvcheck.index_estimate(lambda x: x ** -2.0, dec.identity())
    assert est.alpha == -2.0 or abs(est.alpha + 2.0) < 1e-12
    assert est.converged
    assert all(t1 < t2 for (t1, _), (t2, _) in zip(est.path, est.path[1:]))


def test_index_zero_raises():
    with pytest.raises(DomainError):
        rvcheck.index_estimate(lambda x: 0.0 * x, dec.identity())


@given(st.floats(-5.0, -0.2), st.floats(0.1, 3.0))
def test_property_exact_form_recovered(alpha, c):
    T = dec.power_exp(1.5)
    u = lambda x, y: np.asarray(T.T(x), dtype=float) ** alpha * (c + np.sum(np.atleast_1d(y)))
    est = rvcheck.index_estimate(u, T, t_grid=[1.0, 2.0, 3.0], y=np.array([1.0]))
    assert est.alpha == pytest.approx(alpha, abs=1e-10)
    al = rvcheck.angular_limit(u, T, [1.0, 2.0], [np.array([0.5]), np.array([2.0])])
    np.testing.assert_allclose([h for _, h in al.h], [(c + 0.5) / (c + 1), (c + 2) / (c + 1)], rtol=1e-10)


def test_angular_limit_pivot_is_one_and_product_exact():
    g = lambda y: 1.0 + y * y
    u = lambda x, y: x ** -3.0 * g(y)
    al = rvcheck.angular_limit(u, dec.identity(), [10.0, 100.0], [0.3, 1.0, 2.0])
    assert al.h[1][1] == 1.0
    np.testing.assert_allclose([h for _, h in al.h], [g(0.3) / g(1), 1.0, g(2.0) / g(1)], rtol=1e-14)
    for _, v in al.path:
        np.testing.assert_allclose(v, [g(0.3) / g(1), 1.0, g(2.0) / g(1)], rtol=1e-14)


def test_angular_limit_student_section():
    Q = np.array([[1.0, 0.3], [0.3, 2.0]])
    nu = 2.0
    dens = lambda x, y: (1 + (Q[0, 0] * x * x + 2 * Q[0, 1] * x * y * x + Q[1, 1] * (y * x) ** 2) / nu) ** (-(nu + 2) / 2)
    ys = [0.2, 0.5, 0.8]
    al = rvcheck.angular_limit(dens, dec.identity(), [1e3, 1e4, 1e5], ys)
    lim = models.StudentLimit(Q, nu)
    ref = [float(lim.kernel(np.array([1.0, y])) / lim.kernel(np.array([1.0, 1.0]))) for y in ys]
    np.testing.assert_allclose([h for _, h in al.h], ref, rtol=1e-8)
    assert al.converged


def test_karamata_gaussian_and_log_cauchy_trend():
    g = fixtures.gaussian()
    r = rvcheck.karamata_residual(g.f, g.F_bar, g.decay, t_grid=[2.0, 4.0, 8.0], alpha=0.5)
    res = np.abs(r.residuals())
    assert res[-1] < res[0]
    lc = fixtures.log_cauchy()
    r2 = rvcheck.karamata_residual(lc.f, lc.F_bar, lc.decay, t_grid=[1e2, 1e4, 1e6], alpha=1.0)
    assert abs(r2.residuals()[-1]) < 1e-2


def test_karamata_pareto_zero():
    a = 2.5
    r = rvcheck.karamata_residual(lambda x: a * x ** (-a - 1), lambda x: x ** -a, dec.identity(), alpha=a)
    assert np.max(np.abs(r.residuals())) < 1e-12


def test_karamata_estimates_alpha_and_quadrature_when_missing():
    a = 1.5
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        r = rvcheck.karamata_residual(lambda x: a * x ** (-a - 1), None, dec.identity(), t_grid=[10.0, 100.0])
    assert r.alpha == pytest.approx(a, rel=1e-8)
    assert np.max(np.abs(r.residuals())) < 1e-7


def test_upper_tail_integral_pareto():
    val, err = rvcheck.upper_tail_integral(lambda s: 2 * s ** -3.0, 10.0)
    assert val == pytest.approx(0.01, rel=1e-9)


def test_representation_pareto_exact():
    rep = rvcheck.representation_decompose(lambda x: x ** -2.0, dec.identity(), np.linspace(1, 50, 30),
                                           f=lambda x: 2 * x ** -3.0)
    np.testing.assert_allclose([a for _, a in rep.alpha_path], 2.0, rtol=1e-12)
    np.testing.assert_allclose([c for _, c in rep.c_path], 1.0, rtol=1e-8)
    assert rep.converged
    assert rep.h_estimates[0] == (1.0, 1.0)


def test_representation_gaussian_alpha_to_half():
    g = fixtures.gaussian()
    rep = rvcheck.representation_decompose(g.F_bar, g.decay, np.linspace(0.5, 8, 16), f=g.f)
    assert rep.alpha_path[-1][1] == pytest.approx(0.5, abs=0.01)


def test_recompose_roundtrip_example1():
    fx = fixtures.example1()
    xs = np.linspace(1, 60, 40)
    rep = rvcheck.representation_decompose(fx.F_bar, fx.decay, xs, f=fx.f)
    np.testing.assert_allclose(rvcheck.recompose(rep), fx.F_bar(xs), rtol=1e-8)
    assert not rep.extra["alpha_stable"]


def test_representation_numeric_density():
    rep = rvcheck.representation_decompose(lambda x: x ** -2.0, dec.identity(), np.linspace(2, 20, 5))
    np.testing.assert_allclose([a for _, a in rep.alpha_path], 2.0, rtol=1e-6)
    d = rep.to_dict()
    assert set(d) >= {"alpha_path", "c_path", "h_estimates", "converged", "diagnostics"}


def test_marginal_limit_student_submodel():
    Q = np.array([[1.0, 0.4, 0.2], [0.4, 1.0, 0.3], [0.2, 0.3, 1.0]])
    nu = 3.0
    lim = models.StudentLimit(Q, nu)
    rep = rvcheck.marginal_limit_check(
        lambda n, rng: models.sample_student(Q, nu, n, seed=rng), [0, 1], [5.0, 10.0], 200_000, seed=5,
        limit_sampler=lambda n, rng: lim.sample(n, seed=rng), n_limit=20_000, z_crit=4.0)
    assert rep.passed
    assert not rep.widened


def test_marginal_limit_cbi_zero_for_light_margin():
    def sampler(n, rng):
        return np.column_stack([1 / rng.uniform(size=n), rng.uniform(size=n)])
    rep = rvcheck.marginal_limit_check(sampler, [0, 1], [10.0, 100.0], 20_000, seed=1)
    last = {(r["i"], r["b"]): r["value"] for r in rep.c_bi[-1]}
    assert last[(1, 1.0)] == 0.0
    assert last[(0, 1.0)] == 1.0


def test_marginal_limit_full_set_identity():
    hr = models.HuslerReissPareto(np.array([[0, 1.0], [1.0, 0]]))
    rep = rvcheck.marginal_limit_check(lambda n, rng: hr.sample(n, seed=rng), [0, 1], [1.0, 1.0], 5000, seed=2,
                                       limit_sampler=lambda n, rng: hr.sample(n, seed=rng))
    assert rep.passed


def test_marginal_limit_widened_flag():
    rep = rvcheck.marginal_limit_check(lambda n, rng: 1 / rng.uniform(size=(n, 2)), [0], [1e4, 1e5], 500, seed=0)
    assert rep.widened
