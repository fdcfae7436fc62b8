import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from tailgraph import models
from tailgraph.errors import DomainError
from tailgraph.models import (BivariateSumModel, HuslerReissPareto, ParetoTail, StudentLimit,
                              model_from_dict, normalizing_constant, pattern_mass, total_mass)

G2 = np.array([[0.0, 1.0], [1.0, 0.0]])
G3 = np.array([[0.0, 0.5, 1.0], [0.5, 0.0, 0.5], [1.0, 0.5, 0.0]])
G3_GENERIC = np.array([[0.0, 0.8, 1.1], [0.8, 0.0, 0.6], [1.1, 0.6, 0.0]])


# -- closed-form examples ---------------------------------------------------

def test_bivariate_sum_at_one_one():
    assert BivariateSumModel().density(np.array([1.0, 1.0])) == pytest.approx(1.0 / 6.0, rel=1e-15)


def test_bivariate_sum_normalizer_by_quadrature():
    # kernel mass over the cone: [0, inf)^2 minus the unit square, split at x = 1
    f = lambda y, x: (x + y) ** -3.0
    a = integrate.dblquad(f, 1.0, np.inf, 0.0, np.inf, epsabs=0, epsrel=1e-11)[0]
    b = integrate.dblquad(f, 0.0, 1.0, 1.0, np.inf, epsabs=0, epsrel=1e-11)[0]
    assert a + b == pytest.approx(0.75, rel=1e-9)
    v, e = normalizing_constant(BivariateSumModel())
    assert v == pytest.approx(0.75, rel=1e-9)


def test_bivariate_sum_censored_example():
    m = BivariateSumModel()
    x = np.array([1.0, 1.5, 3.0, 20.0])
    expect = (2.0 / 3.0) * (x**-2.0 - (x + 1.0) ** -2.0)
    np.testing.assert_allclose(m.censored_density(x[:, None], (0,)), expect, rtol=1e-14)
    # the generic tensor-rule integral on the same kernel
    generic, _ = models.TailModel._censored(m, x[:, None], (0,))
    np.testing.assert_allclose(generic, expect, rtol=1e-10)


def test_bivariate_sum_marginal_is_censored_pareto_piece():
    # f_{Y2^C}(x) / p = (2/3) x^-2: marginal (Pareto x^-2) times Pr(Y2 >= 1) = 2/3
    m = BivariateSumModel()
    x = np.array([1.0, 2.0, 7.5])
    val = m.exceedance_probability((1,)) * np.asarray(m.marginal((1,)).density(x[:, None]))
    np.testing.assert_allclose(val, (2.0 / 3.0) * x**-2.0, rtol=1e-14)
    # and Pr(Y2 >= 1) by quadrature of the density over {y >= 1}
    q = integrate.dblquad(lambda y, x: (4 / 3) * (x + y) ** -3.0, 0.0, np.inf, 1.0, np.inf,
                          epsabs=0, epsrel=1e-11)[0]
    assert q == pytest.approx(2.0 / 3.0, rel=1e-9)


def test_hr_anchor_density_example():
    m = HuslerReissPareto(G2)
    val = m.density_anchor(np.array([1.0, 1.0]), 0)
    assert val == pytest.approx((2 * math.pi) ** -0.5 * math.exp(-1 / 8), rel=1e-14)
    lognormal = stats.lognorm(s=1.0, scale=math.exp(-0.5)).pdf(1.0)
    assert val == pytest.approx(lognormal, rel=1e-12)
    # cone density divides by the extremal coefficient 2 Phi(sqrt(Gamma) / 2)
    theta = 2 * stats.norm.cdf(0.5)
    assert m.extremal_coefficient == pytest.approx(theta, rel=1e-12)
    assert m.density(np.array([1.0, 1.0])) == pytest.approx(val / theta, rel=1e-12)


def test_hr_exponent_measure_identity_d2():
    # Lambda(||y|| >= 1) = Theta = 2 Phi(sqrt(G)/2); check by quadrature of the kernel
    m = HuslerReissPareto(G2)
    k = lambda y, x: float(m.kernel(np.array([x, y])))
    a = integrate.dblquad(k, 1.0, np.inf, 0.0, np.inf, epsabs=0, epsrel=1e-9)[0]
    b = integrate.dblquad(k, 0.0, 1.0, 1.0, np.inf, epsabs=0, epsrel=1e-9)[0]
    assert a + b == pytest.approx(m.extremal_coefficient, rel=1e-6)


def test_hr_anchor_consistency_on_overlap():
    m = HuslerReissPareto(G3_GENERIC)
    rng = np.random.default_rng(3)
    y = 1.0 + rng.exponential(2.0, size=(50, 3))
    d0, d1, d2 = (m.density_anchor(y, k) for k in range(3))
    np.testing.assert_allclose(d0, d1, rtol=1e-12)
    np.testing.assert_allclose(d0, d2, rtol=1e-12)
    np.testing.assert_allclose(m.density(y) * m.extremal_coefficient, d0, rtol=1e-12)


def test_hr_censored_matches_quadrature_d3():
    m = HuslerReissPareto(G3_GENERIC)
    for x in ([1.5, 2.0], [1.0, 1.0], [4.0, 1.2], [1.1, 9.0]):
        q = integrate.quad(lambda z: float(m.density(np.array([x[0], x[1], z]))), 0.0, 1.0,
                           epsabs=0, epsrel=1e-11)[0]
        v = m.censored_density(np.array(x), (0, 1))
        assert v == pytest.approx(q, rel=1e-4)


def test_hr_censored_matches_quadrature_two_censored():
    m = HuslerReissPareto(G3_GENERIC)
    x = 2.5
    q = integrate.dblquad(lambda z, y: float(m.density(np.array([y, x, z]))), 0.0, 1.0, 0.0, 1.0,
                          epsabs=0, epsrel=1e-10)[0]
    assert m.censored_density(np.array([x]), (1,)) == pytest.approx(q, rel=1e-4)


def test_hr_marginal_matches_integrated_kernel():
    m = HuslerReissPareto(G3_GENERIC)
    mA = m.marginal((0, 2))
    np.testing.assert_array_equal(mA.Gamma, G3_GENERIC[np.ix_([0, 2], [0, 2])])
    for x in ([1.5, 2.0], [1.0, 3.0], [0.2, 1.4]):
        q = integrate.quad(lambda z: float(m.kernel(np.array([x[0], z, x[1]]))), 0.0, np.inf,
                           epsabs=0, epsrel=1e-11, limit=200)[0]
        assert float(mA.kernel(np.array(x))) == pytest.approx(q, rel=1e-7)
    assert m.marginal((0, 1, 2)) is m


def test_student_normalizer_against_polar_quadrature():
    Q = np.array([[1.0, 0.3], [0.3, 2.0]])
    nu = 1.5
    m = StudentLimit(Q, nu)

    def f(phi):
        u = np.array([math.cos(phi), math.sin(phi)])
        return (u @ Q @ u) ** (-(nu + 2) / 2) * np.max(np.abs(u)) ** nu / nu
    kinks = [j * math.pi / 4 for j in range(1, 8)]
    ref = integrate.quad(f, 0.0, 2 * math.pi, points=kinks, epsabs=0, epsrel=1e-12, limit=200)[0]
    assert m.normalizer == pytest.approx(ref, rel=1e-8)
    assert abs(m.normalizer - ref) < 3 * m.normalizer_error + 1e-10


def test_student_identity_normalizer_mc_vs_grid():
    m = StudentLimit(np.eye(2), 1.0)
    val, err = normalizing_constant(m, n_log2=12)
    # Gauss-Legendre on one face, times four faces by symmetry, over nu = 1
    z, w = np.polynomial.legendre.leggauss(400)
    ref = 4.0 * float(np.dot(w, (1.0 + z * z) ** -1.5))
    assert abs(val - ref) <= 3 * err + 1e-9


def test_student_one_dimensional_limit():
    nu = 3.0
    m = StudentLimit([[1.0]], nu)
    x = np.array([1.0, 2.0, -5.0])
    np.testing.assert_allclose(m.density(x[:, None]), 0.5 * nu * np.abs(x) ** (-nu - 1), rtol=1e-14)


def test_student_finite_ratio_converges():
    m = models.student_tail_limit(np.eye(2), 2.0)
    x = np.array([[1.0, 2.0], [0.5, 1.0], [-1.0, 3.0], [2.0, 2.0]])
    lim = m.limit_ratio(x)
    r = m.finite_ratio(1e3, x)
    np.testing.assert_allclose(r, lim, rtol=1e-2)
    # direct evaluation of the Student density ratio
    Qinv = np.linalg.inv(m.Q)
    f = stats.multivariate_t(loc=np.zeros(2), shape=Qinv, df=2.0).pdf
    direct = f(1e3 * x) / f(1e3 * np.ones(2))
    np.testing.assert_allclose(r, direct, rtol=1e-10)
    # monotone approach along t
    gaps = [np.max(np.abs(m.finite_ratio(t, x) - lim)) for t in (1.0, 10.0, 100.0, 1000.0)]
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_student_marginal_schur_rule():
    Q = np.array([[2.0, 0.5, 0.1], [0.5, 1.0, 0.2], [0.1, 0.2, 1.5]])
    m = StudentLimit(Q, 2.5)
    mA = m.marginal((0, 2))
    cov = np.linalg.inv(Q)
    np.testing.assert_allclose(np.linalg.inv(mA.Q), cov[np.ix_([0, 2], [0, 2])], rtol=1e-12)
    # integrating x_1 out of the kernel gives kappa times the marginal kernel
    x = np.array([1.3, -0.7])
    q = integrate.quad(lambda z: float(m.kernel(np.array([x[0], z, x[1]]))), -np.inf, np.inf,
                       epsabs=0, epsrel=1e-12)[0]
    assert q == pytest.approx(m.marginal_constant((0, 2)) * float(mA.kernel(x)), rel=1e-9)


def test_pareto_tail():
    m = ParetoTail(2.0)
    assert m.density(np.array([2.0])) == pytest.approx(2.0 * 2.0**-3, rel=1e-15)
    assert normalizing_constant(ParetoTail(1.0))[0] == pytest.approx(1.0)


# -- errors ------------------------------------------------------------------

@pytest.mark.parametrize("G", [
    [[0.0, 1.0], [2.0, 0.0]],
    [[1.0, 1.0], [1.0, 0.0]],
    [[0.0, -1.0], [-1.0, 0.0]],
    [[0.0, 1.0, 5.0], [1.0, 0.0, 1.0], [5.0, 1.0, 0.0]],
    [[0.0, 1.0, 2.0]],
])
def test_invalid_variogram(G):
    with pytest.raises(DomainError):
        HuslerReissPareto(np.array(G))


def test_off_cone_density_is_domain_error():
    for m, x in ((BivariateSumModel(), [0.5, 0.2]), (HuslerReissPareto(G2), [0.9, 0.9]),
                 (StudentLimit(np.eye(2), 1.0), [0.0, -0.5])):
        with pytest.raises(DomainError):
            m.density(np.array(x))


def test_censored_density_requires_exceedance():
    with pytest.raises(DomainError):
        HuslerReissPareto(G3).censored_density(np.array([0.5, 2.0]), (0, 1))


def test_student_non_pd():
    with pytest.raises(DomainError):
        models.student_tail_limit(np.array([[1.0, 2.0], [2.0, 1.0]]), 2.0)
    with pytest.raises(DomainError):
        StudentLimit(np.eye(2), -1.0)


def test_empty_marginal():
    with pytest.raises((DomainError, ValueError)):
        HuslerReissPareto(G3).marginal(())


def test_full_censored_is_density():
    m = HuslerReissPareto(G3)
    x = np.array([1.2, 3.0, 1.7])
    assert m.censored_density(x, (0, 1, 2)) == pytest.approx(float(m.density(x)), rel=1e-15)


# -- normalization and patterns ---------------------------------------------

@pytest.mark.parametrize("model", [
    BivariateSumModel(),
    HuslerReissPareto(G2),
    HuslerReissPareto(G3),
    ParetoTail(1.0),
    StudentLimit(np.array([[1.0, 0.3], [0.3, 1.0]]), 2.0),
], ids=["sum", "hr2", "hr3", "pareto", "student2"])
def test_pattern_masses_sum_to_one(model):
    tot, err = total_mass(model, n_log2=12)
    assert abs(tot - 1.0) <= 3 * err + 1e-8


def test_exceedance_probability_matches_pattern_masses():
    m = HuslerReissPareto(G3_GENERIC)
    direct = m.exceedance_probability((0,))
    via_masses = sum(pattern_mass(m, A, n_log2=12)[0] for A in [(0,), (0, 1), (0, 2), (0, 1, 2)])
    assert via_masses == pytest.approx(direct, rel=1e-3)


# -- sampling ----------------------------------------------------------------

@pytest.mark.parametrize("model", [BivariateSumModel(), HuslerReissPareto(G3),
                                   StudentLimit(np.eye(2), 2.0), ParetoTail(1.5)],
                         ids=["sum", "hr3", "student", "pareto"])
def test_sample_radius_is_pareto(model):
    Y = model.sample(20000, seed=11)
    assert Y.shape == (20000, model.dim)
    r = np.max(np.abs(Y), axis=1)
    assert np.all(r >= 1.0)
    for lam in (2.0, 5.0):
        p = lam ** -model.alpha
        se = math.sqrt(p * (1 - p) / len(r))
        assert abs(np.mean(r >= lam) - p) < 4 * se


def test_sample_reproducible():
    m = HuslerReissPareto(G3)
    np.testing.assert_array_equal(m.sample(100, seed=4), m.sample(100, seed=4))


def test_hr_sample_conditional_exceedance():
    # Pr(Y2 >= 2 | Y1 >= 1) = Lambda(y1 >= 1, y2 >= 2) / Lambda(y1 >= 1) = Lambda(y1 >= 1, y2 >= 2)
    m = HuslerReissPareto(G2)
    lam = integrate.dblquad(lambda y, x: float(m.kernel(np.array([x, y]))), 1.0, np.inf, 2.0, np.inf,
                            epsabs=0, epsrel=1e-9)[0]
    Y = m.sample(100000, seed=2)
    sel = Y[:, 0] >= 1
    emp = np.mean(Y[sel, 1] >= 2)
    se = math.sqrt(lam * (1 - lam) / sel.sum())
    assert abs(emp - lam) < 4 * se


def test_bivariate_sum_sample_mean_inverse_sum():
    # E[1/(X+Y)] = (4/3) * int_cone (x+y)^-4 = (4/3)(1/3 - 1/24) = 7/18
    Y = BivariateSumModel().sample(100000, seed=8)
    v = 1.0 / Y.sum(axis=1)
    assert abs(v.mean() - 7.0 / 18.0) < 4 * v.std() / math.sqrt(len(v))


def test_serialization_roundtrip():
    for m in (HuslerReissPareto(G3), StudentLimit(np.eye(2), 2.0), BivariateSumModel(), ParetoTail(2.0)):
        d = json.loads(json.dumps(m.to_dict()))
        m2 = model_from_dict(d)
        assert type(m2) is type(m)
        assert m2.parameters() == m.parameters()
    with pytest.raises(ValueError):
        model_from_dict({"family": "nope"})


# -- properties --------------------------------------------------------------

points = st.lists(st.floats(0.05, 20.0), min_size=2, max_size=2)
lambdas = st.floats(1.0, 10.0)


@given(points, lambdas)
def test_property_homogeneity_bivariate_sum(x, lam):
    m = BivariateSumModel()
    x = np.array(x)
    x[0] = max(x[0], 1.0)
    assert float(m.density(lam * x)) == pytest.approx(lam**-3 * float(m.density(x)), rel=1e-12)


@given(st.lists(st.floats(-20.0, 20.0), min_size=2, max_size=2), lambdas, st.floats(0.5, 4.0))
def test_property_homogeneity_student(x, lam, nu):
    m = StudentLimit(np.array([[1.0, 0.2], [0.2, 1.5]]), nu)
    x = np.array(x)
    x[1] = 1.0 if abs(x[1]) < 1 else x[1]
    assert float(m.kernel(lam * x)) == pytest.approx(lam ** -(nu + 2) * float(m.kernel(x)), rel=1e-12)


@given(st.lists(st.floats(0.05, 30.0), min_size=3, max_size=3), lambdas)
def test_property_homogeneity_hr(x, lam):
    m = HuslerReissPareto(G3_GENERIC)
    x = np.array(x)
    x[2] = max(x[2], 1.0)
    assert float(m.density(lam * x)) == pytest.approx(lam**-4 * float(m.density(x)), rel=1e-8)


@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.integers(0, 2))
def test_property_valid_tree_variograms_accepted(a, b, k):
    # additive variograms along a path are always valid
    G = np.array([[0, a, a + b], [a, 0, b], [a + b, b, 0]], dtype=float)
    m = HuslerReissPareto(G)
    assert np.all(np.linalg.eigvalsh(m.sigma(k)) > 0)
