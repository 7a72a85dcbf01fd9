import math

import numpy as np
import pytest
from scipy.optimize import linprog

from artifact.gaussian_numerics import std_normal_ccdf
from artifact.model_core import ParamError, QueueParams
from artifact.ssq_exact import LatticePmf, stationary_pmf
from artifact.wasserstein_metrics import (tail_interval, tail_sandwich, wp_discrete,
                                          wp_lattice_vs_gaussian, wp_lattice_vs_lattice,
                                          wp_points_vs_gaussian)


def lp_oracle(xa, pa, xb, pb, p):
    """Transport LP solved directly, no quantile tricks."""
    m, n = len(xa), len(xb)
    cost = (np.abs(np.subtract.outer(xa, xb)) ** p).ravel()
    rows = np.zeros((m + n, m * n))
    for i in range(m):
        rows[i, i * n:(i + 1) * n] = 1
    for j in range(n):
        rows[m + j, j::n] = 1
    res = linprog(cost, A_eq=rows, b_eq=np.concatenate((pa, pb)), bounds=(0, None),
                  method="highs")
    return res.fun ** (1 / p)


def test_point_mass_against_gaussian():
    pm = LatticePmf.point_mass(0)
    assert wp_lattice_vs_gaussian(pm, 2).value == pytest.approx(1.0, abs=1e-6)
    assert wp_lattice_vs_gaussian(pm, 1).value == pytest.approx(math.sqrt(2 / math.pi), abs=1e-6)
    assert wp_lattice_vs_gaussian(pm, 4).value == pytest.approx(3 ** 0.25, abs=1e-6)


def test_shifted_point_mass():
    # W2(delta_c, N(0,1))^2 = 1 + c^2
    r = wp_points_vs_gaussian(np.array([1.5]), np.array([0.0]), 2)
    assert r.value == pytest.approx(math.sqrt(1 + 1.5 ** 2), abs=1e-6)


def test_lattice_examples():
    assert wp_discrete([0, 1], [0.5, 0.5], [0, 1], [0.5, 0.5], 3) == 0.0
    assert wp_discrete([0], [1], [1], [1], 2) == pytest.approx(1.0)
    assert wp_discrete([0, 1], [0.5, 0.5], [0], [1], 1) == pytest.approx(0.5)
    assert wp_discrete([0, 1], [0.5, 0.5], [0], [1], 2) == pytest.approx(math.sqrt(0.5))


def test_against_lp_oracle():
    rng = np.random.default_rng(7)
    for _ in range(25):
        m, n = rng.integers(1, 7, size=2)
        xa, xb = rng.normal(size=m) * 3, rng.normal(size=n) * 3
        pa, pb = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(n))
        for p in (1, 2, 3.5):
            assert wp_discrete(xa, pa, xb, pb, p) == pytest.approx(
                lp_oracle(xa, pa, xb, pb, p), abs=1e-9)


def test_monotone_in_p():
    pmf = stationary_pmf(QueueParams(2, (1,), 0.1))
    vals = [wp_lattice_vs_gaussian(pmf, p).value for p in (1, 1.5, 2, 3, 6)]
    assert all(a <= b + 1e-9 for a, b in zip(vals, vals[1:]))


def test_triangle_bracket_and_error_report():
    pmf = stationary_pmf(QueueParams(2, (1,), 0.05))
    r = wp_lattice_vs_gaussian(pmf, 2)
    assert r.quad_error <= 1e-6 * r.value + 1e-12
    assert r.endpoint_tail < 1e-12
    shifted = LatticePmf(pmf.log_probs, pmf.offset - 0.3 / pmf.scale, pmf.scale,
                         pmf.truncation_tail)
    d = wp_lattice_vs_lattice(pmf, shifted, 2).value
    assert d == pytest.approx(0.3, abs=1e-12)
    r2 = wp_lattice_vs_gaussian(shifted, 2).value
    assert abs(r.value - r2) <= d + 1e-6


def test_bad_p():
    with pytest.raises(ParamError):
        wp_discrete([0], [1], [0], [1], 0.5)


def test_tail_sandwich():
    assert tail_sandwich(1.0, 0.0, 2, 0.0) == pytest.approx(0.3989423, abs=1e-7)
    assert tail_sandwich(1.0, 0.0, 2, 0.1) == pytest.approx(0.3989423 + 0.01, abs=1e-7)
    assert tail_sandwich(2.0, 0.5, 2, 0.25) == pytest.approx(0.2419707 + 0.0625, abs=1e-7)
    with pytest.raises(ParamError):
        tail_sandwich(0.0, 0.0, 2, 0.1)
    with pytest.raises(ParamError):
        tail_sandwich(1.0, 1.0, 2, 0.1)


def test_tail_interval_contains_scaled_queue_tail():
    lam, mu, g = 2.0, 1.0, 0.05
    pmf = stationary_pmf(QueueParams(lam, (mu,), g))
    w = wp_lattice_vs_gaussian(pmf, 4).value
    probs, x = pmf.probs, pmf.support()
    for a in (0.5, 1.0, 2.0):
        lo, hi = tail_interval(a, 0.5, 4, w)
        assert lo <= probs[x > a].sum() <= hi
        assert lo <= float(std_normal_ccdf(a)) <= hi
