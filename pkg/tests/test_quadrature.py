import math

import numpy as np
import pytest

from oracles import simpson
from gelc.data import Dataset
from gelc.families import BERNOULLI, GAMMA, ObservedInterval, ParameterVector, linear_predictor, score_point
from gelc.partition import build_partition
from gelc.quadrature import (
    GAUSS_WEIGHTS,
    KRONROD_WEIGHTS,
    NODES,
    QuadratureError,
    adaptive_integrate,
    cell_density_matrix,
    integrate_density,
    integrate_pairs,
    integrate_score_weighted,
)


def gamma_f(y, theta):
    return lambda u: np.exp(GAMMA.logpdf(y, theta.alpha + theta.gamma * u, theta.phi))


def test_rule_exactness():
    for deg in range(24):
        exact = (1 - (-1) ** (deg + 1)) / (deg + 1)
        assert np.dot(KRONROD_WEIGHTS, NODES**deg) == pytest.approx(exact, abs=1e-14)
        if deg < 14:
            assert np.dot(GAUSS_WEIGHTS, NODES**deg) == pytest.approx(exact, abs=1e-14)


def test_constant_integrand():
    theta = ParameterVector(0.4, (0.7,), 0.0)
    cell = ObservedInterval(2.0, 5.5)
    f = 1 / (1 + math.exp(-(0.4 + 0.7 * 1.5)))
    assert integrate_density(BERNOULLI, 1, [1.5], theta, cell) == pytest.approx(3.5 * f, rel=1e-14)


def test_point_cell_is_density():
    theta = ParameterVector(1.0, (), 0.3, 0.5)
    cell = ObservedInterval.exact(4.0)
    ref = math.exp(GAMMA.logpdf(2.0, 1.0 + 1.2, 0.5))
    assert integrate_density(GAMMA, 2.0, [], theta, cell) == pytest.approx(ref, rel=1e-14)


def test_gamma_matches_simpson():
    rng = np.random.default_rng(2)
    for _ in range(20):
        theta = ParameterVector(10.0, (), rng.uniform(-0.1, 0.1), rng.uniform(0.02, 2))
        a = rng.uniform(0, 30)
        b = a + rng.uniform(0.1, 9)
        y = rng.gamma(1 / theta.phi, theta.phi * math.exp(10 + theta.gamma * rng.uniform(a, b)))
        got = integrate_density(GAMMA, y, [], theta, ObservedInterval(a, b))
        ref = simpson(gamma_f(y, theta), a, b, panels=100_000)
        assert got == pytest.approx(ref, rel=1e-8)


def test_score_weighted_matches_simpson():
    rng = np.random.default_rng(3)
    for _ in range(20):
        theta = ParameterVector(1.0, (0.5,), rng.uniform(-0.3, 0.3), rng.uniform(0.1, 2))
        x = rng.normal()
        a = rng.uniform(0, 10)
        b = a + rng.uniform(0.5, 6)
        y = rng.gamma(2.0, 1.5)
        sf, f = integrate_score_weighted(GAMMA, y, [x], theta, ObservedInterval(a, b))

        def comp(k):
            def g(u):
                eta = theta.alpha + theta.beta[0] * x + theta.gamma * u
                dens = np.exp(GAMMA.logpdf(y, eta, theta.phi))
                d = GAMMA.dlogf_deta(y, eta, theta.phi)
                s = [d, d * x, d * u, GAMMA.dlogf_dphi(y, eta, theta.phi)][k]
                return s * dens
            return g

        ref = np.array([simpson(comp(k), a, b, panels=50_000) for k in range(4)])
        np.testing.assert_allclose(sf, ref, rtol=1e-7, atol=1e-7 * np.max(np.abs(ref)))
        assert f == pytest.approx(simpson(gamma_f(y, ParameterVector(1.0 + 0.5 * x, (), theta.gamma, theta.phi)),
                                          a, b, 50_000), rel=1e-8)


def test_score_weighted_point_cell_at_mean():
    theta = ParameterVector(0.5, (), 0.2, 0.8)
    z = 3.0
    y = math.exp(0.5 + 0.6)
    sf, f = integrate_score_weighted(GAMMA, y, [], theta, ObservedInterval.exact(z))
    np.testing.assert_allclose(sf[:2], 0.0, atol=1e-14)
    np.testing.assert_allclose(sf / f, score_point(GAMMA, y, [], z, theta), rtol=1e-12)


def test_score_weighted_constant_integrand():
    theta = ParameterVector(-0.3, (), 0.0)
    sf, f = integrate_score_weighted(BERNOULLI, 1, [], theta, ObservedInterval(1.0, 4.0))
    p = 1 / (1 + math.exp(0.3))
    assert f == pytest.approx(3 * p, rel=1e-14)
    assert sf[0] == pytest.approx((1 - p) * p * 3, rel=1e-13)


def test_invalid_tolerance():
    with pytest.raises(ValueError):
        integrate_density(GAMMA, 1.0, [], ParameterVector(0, (), 0), ObservedInterval(0, 1), tol=0)


def test_nested_tolerances():
    rng = np.random.default_rng(4)
    y = rng.gamma(1, 20, 30)
    a = rng.uniform(0, 20, 30)
    b = a + rng.uniform(0.5, 10, 30)
    theta = np.array([2.5, 0.1, 0.7])
    coarse = integrate_pairs(GAMMA, y, np.empty((30, 0)), theta, np.arange(30), a, b, tol=1e-4)
    fine = integrate_pairs(GAMMA, y, np.empty((30, 0)), theta, np.arange(30), a, b, tol=1e-5)
    diff = np.abs(coarse.density * np.exp(coarse.shift) - fine.density * np.exp(fine.shift))
    assert np.all(diff <= coarse.error[:, 0] * np.exp(coarse.shift) + 1e-300)


def test_split_additivity():
    rng = np.random.default_rng(5)
    theta = ParameterVector(0.3, (), 0.4, 0.6)
    for _ in range(20):
        a = rng.uniform(0, 5)
        b = a + rng.uniform(0.5, 4)
        c = rng.uniform(a, b)
        y = rng.gamma(2, 2)
        whole = integrate_density(GAMMA, y, [], theta, ObservedInterval(a, b), tol=1e-12)
        parts = (integrate_density(GAMMA, y, [], theta, ObservedInterval(a, c), tol=1e-12)
                 + integrate_density(GAMMA, y, [], theta, ObservedInterval(c, b), tol=1e-12))
        assert whole == pytest.approx(parts, rel=1e-11)


def test_underflowing_density_keeps_log_scale():
    # log f near -2000 at every node: plain exponentiation would give 0
    ci = integrate_pairs(GAMMA, [1e-300], np.empty((1, 0)), np.array([0.0, 5.0, 0.01]), [0], [10.0], [12.0])
    assert np.isfinite(ci.log_integral[0])
    ref_log = np.log(simpson(lambda u: np.exp(GAMMA.logpdf(1e-300, 5.0 * u, 0.01) - ci.shift[0]), 10, 12))
    assert ci.log_integral[0] == pytest.approx(ci.shift[0] + ref_log, rel=1e-10)


def test_simpson_fallback_and_error():
    # one GK15 panel cannot resolve sin(50u), so max_level=0 forces the Simpson path
    evaluate = lambda u, owner, shift: np.sin(50 * u)[:, :, None]  # noqa: E731
    res, err = adaptive_integrate(evaluate, np.array([0.0]), np.array([1.0]), None, 1e-9, max_level=0)
    # the tolerance is relative to the integral of |f| (about 0.64), not to the net value
    assert res[0, 0] == pytest.approx((1 - math.cos(50)) / 50, abs=1e-9 * 0.64)
    spiky = lambda u, owner, shift: (1 / np.abs(u - 0.3) ** 0.999)[:, :, None]  # noqa: E731
    with pytest.raises(QuadratureError) as info:
        adaptive_integrate(spiky, np.array([0.0]), np.array([1.0]), None, 1e-14, max_level=0)
    assert info.value.error_estimate is not None


# -- cell matrix ---------------------------------------------------------------

def test_matrix_all_exact():
    z = np.array([1.0, 2.0, 2.0, 5.0])
    y = np.array([0.5, 1.5, 2.5, 4.0])
    ds = Dataset.from_arrays(y, z, z)
    part = build_partition(ds.intervals)
    theta = ParameterVector(0.1, (), 0.2, 0.9)
    C = cell_density_matrix(ds, part, GAMMA, theta)
    assert np.all(np.isfinite(C.log_values).sum(axis=1) == 1)
    for i in range(4):
        j = part.cell_of(z[i])
        assert C.values[i, j] == pytest.approx(math.exp(GAMMA.logpdf(y[i], 0.1 + 0.2 * z[i], 0.9)), rel=1e-14)


def test_matrix_gamma_zero_constant_rows():
    ds = Dataset.from_arrays([1.0, 0.0, 1.0], [0, 1, 2], [3, 4, 2.5])
    part = build_partition(ds.intervals)
    C = cell_density_matrix(ds, part, BERNOULLI, ParameterVector(0.2, (), 0.0))
    for i in range(3):
        row = C.values[i, part.kappa[i]]
        np.testing.assert_allclose(row, row[0], rtol=1e-14)


def test_matrix_matches_single_calls():
    ds = Dataset.from_arrays([1.2, 0.4, 3.3], [0, 1, 2], [3, 1, 6], X=[[0.5], [-1.0], [2.0]])
    part = build_partition(ds.intervals)
    theta = ParameterVector(0.1, (0.3,), -0.2, 0.7)
    C = cell_density_matrix(ds, part, GAMMA, theta)
    for i, j in zip(*np.nonzero(part.kappa)):
        cell = part.cells[j]
        ref = integrate_density(GAMMA, ds.y[i], ds.X[i], theta, cell)
        if cell.length > 0:
            ref /= cell.length
        assert C.values[i, j] == pytest.approx(ref, rel=1e-12)
    assert np.all(np.isneginf(C.log_values[~part.kappa]))


def test_eta_consistency_with_linear_predictor():
    theta = ParameterVector(0.3, (0.2,), 0.1, 1.0)
    eta = linear_predictor(theta, [2.0], 4.0)
    got = integrate_density(GAMMA, 1.0, [2.0], theta, ObservedInterval.exact(4.0))
    assert got == pytest.approx(math.exp(GAMMA.logpdf(1.0, eta, 1.0)))
