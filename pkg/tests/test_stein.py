import math

import numpy as np
import pytest
from scipy.integrate import quad

from artifact.gaussian_numerics import gaussian_lp_norm
from artifact.model_core import ParamError, QueueParams, jsq_rates, ssq_rates
from artifact.ssq_exact import stationary_pmf
from artifact.stein_certificate import (certificate_bound, default_t0, first_order_residual,
                                        g_coefficients, g_integral, km_affine, km_coefficients)
from artifact.wasserstein_metrics import wp_lattice_vs_gaussian


def test_g1_and_low_order_closed_forms():
    for t0 in (0.05, 0.5, 2.0):
        gc = g_coefficients(t0, 2.0)
        assert gc.g[1] == 1.0
        c = math.exp(-t0)
        # k=2 integrand is x / sqrt(1 - x^2)
        assert g_integral(t0, 2) == pytest.approx(math.exp(t0) * (1 - math.sqrt(1 - c * c)),
                                                  rel=1e-12)
        assert gc.g[2] == pytest.approx(g_integral(t0, 2) * gaussian_lp_norm(2), rel=1e-12)


def test_g_integral_vs_independent_quadrature():
    for t0 in (0.1, 0.7):
        c = math.exp(-t0)
        for k in (3, 5, 9):
            # substitute x = sin(u) to remove the endpoint behaviour
            ref, _ = quad(lambda u: math.sin(u) ** (k - 1) / math.cos(u) ** (k - 2),
                          0, math.asin(c), epsabs=0, epsrel=1e-13)
            assert g_integral(t0, k) == pytest.approx(math.exp(t0) * ref, rel=1e-10)


def test_remainder_shrinks_with_kmax():
    a = g_coefficients(0.2, 2, kmax=10, sigma=0.3).tail_bound
    b = g_coefficients(0.2, 2, kmax=20, sigma=0.3).tail_bound
    assert 0 < b < a
    assert np.array_equal(g_coefficients(0.2, 2, kmax=20).g[:11],
                          g_coefficients(0.2, 2, kmax=10).g)


def test_km_matches_rate_lists():
    p = QueueParams(2.0, (1.0,), 0.1)
    s = math.sqrt(p.gamma / p.lam)
    for x in (0, 1, 7, 30):
        for k in range(1, 5):
            direct = sum(r * (s * (t - x)) ** k for t, r in ssq_rates(p, x)) / math.factorial(k)
            assert km_coefficients(p, "ssq", k, x) * p.gamma == pytest.approx(direct, rel=1e-12)
    pj = QueueParams(2.0, (0.5, 0.7), 0.1)
    for st in ((0, 0), (3, 1), (2, 2)):
        for k in range(1, 5):
            direct = sum(r * (s * (sum(t) - sum(st))) ** k
                         for t, r in jsq_rates(pj, st)) / math.factorial(k)
            assert km_coefficients(pj, "jsq_sum", k, st) * pj.gamma == pytest.approx(direct, rel=1e-12)


def test_km_affine_form():
    p = QueueParams(2.0, (1.0,), 0.1)
    for k in (1, 2, 3):
        aff = km_affine(p, k)
        assert aff.at_zero == pytest.approx(km_coefficients(p, "ssq", k, 0))
        for x in (1, 5, 40):
            assert aff.beta0 + aff.beta1 * x == pytest.approx(km_coefficients(p, "ssq", k, x))


def test_first_order_residual():
    p = QueueParams(2.0, (1.0,), 0.1)
    x = np.arange(50)
    r = first_order_residual(p, "ssq", x)
    s = math.sqrt(p.gamma / p.lam)
    assert np.allclose(r[1:], 0, atol=1e-12)
    assert r[0] == pytest.approx(s * p.mu / p.gamma)
    p0 = QueueParams(2.0, (0.0,), 0.1)
    assert np.all(first_order_residual(p0, "ssq", x) == 0.0)


def test_certificate_dominates_exact_wp():
    for g in (0.1, 0.02):
        p = QueueParams(2.0, (1.0,), g)
        w = wp_lattice_vs_gaussian(stationary_pmf(p), 2).value
        rep = certificate_bound(p, 2)
        assert rep.valid and rep.upper >= w
        assert rep.aux["t0"] == pytest.approx(default_t0(2, g, 2.0))


def test_certificate_validation():
    with pytest.raises(ParamError):
        default_t0(4, 1.0, 2.0)
    with pytest.raises(ParamError):
        g_coefficients(0.0, 2)
    with pytest.raises(ParamError):
        km_coefficients(QueueParams(2, (1,), 1), "ssq", 0, 1)
    with pytest.raises(ParamError):
        certificate_bound(QueueParams(2, (1, 1), 0.1), 2, model="jsq_sum")
