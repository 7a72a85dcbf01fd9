import math

import numpy as np
import pytest
from scipy.stats import poisson

from artifact.model_core import ParamError, QueueParams
from artifact.ssq_exact import (LatticePmf, mean, mgf, moment_lp, prob_empty, stationary_pmf,
                                tail_prob)


def pmf_of(lam, mu, gamma, **kw):
    return stationary_pmf(QueueParams(lam, (mu,), gamma), **kw)


def brute_pmf(lam, mu, gamma, K=400):
    # plain recursion in linear space, fine for small lam/gamma
    w = [1.0]
    for i in range(1, K):
        w.append(w[-1] * lam / (mu + gamma * i))
    w = np.array(w)
    return w / w.sum()


def test_closed_forms():
    pmf = pmf_of(2, 1, 1)
    assert prob_empty(pmf) == pytest.approx(2 / (math.e ** 2 - 1), abs=1e-12)
    assert mean(pmf) == pytest.approx(1 / math.tanh(1), abs=1e-12)
    assert prob_empty(pmf_of(1, 0, 1)) == pytest.approx(math.exp(-1), abs=1e-14)


def test_unit_rates_against_recursion():
    ref = brute_pmf(1, 1, 1)
    assert prob_empty(pmf_of(1, 1, 1)) == pytest.approx(ref[0], rel=1e-12)


def test_normalization_and_detailed_balance():
    lam, mu, g = 2.0, 1.0, 0.05
    pmf = pmf_of(lam, mu, g)
    pi = pmf.probs
    assert abs(pi.sum() - 1) <= pmf.truncation_tail + 1e-15
    assert pmf.truncation_tail <= 1e-12
    assert np.all(pmf.log_probs <= 0)
    i = np.arange(len(pi) - 1)
    resid = np.abs(lam * pi[:-1] - (mu + g * (i + 1)) * pi[1:])
    assert np.all(resid <= 1e-12 * np.maximum(pi[:-1], pi[1:]) + 1e-300)


def test_tail_examples():
    pois = pmf_of(1, 0, 1)
    assert tail_prob(pois, 0, normalized=False).value == pytest.approx(1 - math.exp(-1), abs=1e-13)
    pmf = pmf_of(2, 1, 0.01)
    below = tail_prob(pmf, -pmf.offset * pmf.scale - 1)
    assert 1 - pmf.truncation_tail <= below.value <= 1
    ref = brute_pmf(2, 1, 0.01, K=600)
    thr = pmf.offset + 1 / pmf.scale
    assert tail_prob(pmf, 1.0).value == pytest.approx(ref[int(math.floor(thr)) + 1:].sum(),
                                                      rel=1e-10)


def test_far_tail_continuation_matches_direct_sum():
    pmf = pmf_of(2, 1, 0.5)
    ref = brute_pmf(2, 1, 0.5, K=200)
    raw = pmf.size + 5
    assert tail_prob(pmf, raw, normalized=False).value == pytest.approx(ref[raw + 1:].sum(),
                                                                        rel=1e-8)


def test_moments():
    pois = pmf_of(1, 0, 1)
    assert moment_lp(pois, 1.0, 2) == pytest.approx(1.0, abs=1e-12)
    assert moment_lp(LatticePmf.point_mass(3), 3.0, 7.5) == 0.0
    pmf = pmf_of(2, 1, 1)
    # Q + 1 is Poisson(2) conditioned on being positive
    q = -math.expm1(-2)
    sd = math.sqrt(6 / q - 4 / q ** 2)
    assert moment_lp(pmf, mean(pmf), 2) == pytest.approx(sd, rel=1e-13)
    vals = [moment_lp(pmf_of(2, 1, 0.1), 10.0, p) for p in (1, 2, 4, 8)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ParamError):
        moment_lp(pmf, 0.0, 0.5)


def test_mgf():
    pmf = pmf_of(2, 1, 0.1)
    assert mgf(pmf, 0.0, 10.0) == pytest.approx(0.0, abs=1e-14)
    b = 1 / 0.5
    pois = pmf_of(1, 0, 0.5)
    for th in (0.3, 1.0):
        assert mgf(pois, th, b) == pytest.approx(b * (math.expm1(th) - th), rel=1e-11)
    ref = brute_pmf(2, 1, 0.1, K=400)
    k = np.arange(len(ref))
    assert mgf(pmf, 0.5, 10.0) == pytest.approx(math.log(np.sum(ref * np.exp(0.5 * (k - 10)))),
                                                 rel=1e-10)


def test_poisson_dominance_and_monotonicity():
    a, b = pmf_of(3, 1.5, 0.2), pmf_of(3, 0, 0.2)
    for thr in range(0, 40, 3):
        assert tail_prob(a, thr, False).value <= tail_prob(b, thr, False).value + 1e-15
    p0 = {(lam, mu): prob_empty(pmf_of(lam, mu, 0.3))
          for lam in (1.5, 2, 3) for mu in (0.5, 1, 1.5)}
    for lam in (1.5, 2, 3):
        assert p0[lam, 0.5] <= p0[lam, 1] <= p0[lam, 1.5]
    for mu in (0.5, 1, 1.5):
        assert p0[1.5, mu] >= p0[2, mu] >= p0[3, mu]


def test_large_ratio_is_stable():
    pmf = pmf_of(200, 1, 0.01)
    assert np.all(np.isfinite(pmf.log_probs))
    assert abs(pmf.probs.sum() - 1) < 1e-10
    assert mean(pmf) == pytest.approx(poisson.mean(2e4) - 100, rel=0.01)


def test_validation_and_json():
    with pytest.raises(ParamError):
        pmf_of(2, 1, 1, tol=0.1)
    with pytest.raises(ParamError):
        stationary_pmf(QueueParams(2, (1, 1), 1))
    pmf = pmf_of(2, 1, 1)
    back = LatticePmf.from_json(pmf.to_json())
    assert np.array_equal(back.log_probs, pmf.log_probs) and back.scale == pmf.scale
