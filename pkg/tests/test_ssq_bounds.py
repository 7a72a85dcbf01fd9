import math

import pytest

from artifact.model_core import ParamError, QueueParams
from artifact.ssq_bounds import (constants_table, lp_norm_bounds, mgf_envelope, p0_bounds,
                                 tail_bounds, transform_upper_numeric, _transform_pieces,
                                 wp_bounds, wp_regime)
from artifact.ssq_exact import mgf, moment_lp, prob_empty, stationary_pmf


def P(gamma, lam=2.0, mu=1.0, C=1.5, alpha=0.0):
    return QueueParams(lam, (mu,), gamma, C=C, alpha=alpha)


def test_named_constants():
    t = constants_table(P(0.1))
    assert t.value("Cprime") == pytest.approx(2 * 2.5 * 3.5 / 2.75, rel=1e-12)
    assert t.value("Cprime") == pytest.approx(6.3636, abs=1e-4)
    assert t.value("Dprime") == pytest.approx(1 / (2 + 2 * math.e * math.sqrt(math.pi)), rel=1e-14)
    assert t.value("A") == pytest.approx(9.9995, abs=1e-4)
    # C' never drops below (lam/mu) e
    assert constants_table(P(0.1, C=10)).value("Cprime") == pytest.approx(2 * math.e)
    assert all(v > 0 for k, v in t.as_dict().items())


def test_constants_reject_bad_exponents():
    with pytest.raises(ParamError):
        constants_table(QueueParams(2, (1,), 0.1, alpha=0.45, epsilon=0.05))


def test_p0_exponent_and_bracket():
    r = p0_bounds(P(0.1))
    assert r.aux["exponent"] == pytest.approx(3.068528, abs=1e-6)
    assert r.aux["log_gap"] == pytest.approx(math.log(6.363636 / 0.0859398), abs=1e-5)
    # at alpha = 0 the overload condition needs C <= 1 for lam/mu = 2
    assert not p0_bounds(P(0.1)).preconditions["overload_ok"]
    for g in (1.0, 0.1, 0.01, 0.001):
        truth = prob_empty(stationary_pmf(P(g)))
        for C in (1.0, 1.5):
            r = p0_bounds(P(g, C=C))
            assert r.valid == (C == 1.0)
            assert r.lower <= truth <= r.upper


def test_lp_bounds_contain_truth():
    for g in (0.1, 0.01):
        pmf = stationary_pmf(P(g))
        c = (2 - 1) / g
        for p in (1.5, 2, 8, 30, 200):
            r = lp_norm_bounds(P(g), p)
            assert r.lower <= moment_lp(pmf, c, p) <= r.upper
    r = lp_norm_bounds(P(0.01), 200)
    assert r.upper == min(r.aux["branch_subexp"], r.aux["branch_subpoisson"])


def test_mgf_envelope():
    r = mgf_envelope(P(0.05), 0.0)
    assert r.lower == 0.0 and r.upper == pytest.approx(math.log(9.99954), abs=1e-5)
    pmf = stationary_pmf(P(0.05))
    c = 1 / 0.05
    for th in (0.1, 0.5, 1.0):
        r = mgf_envelope(P(0.05), th)
        assert r.lower - 1e-9 <= mgf(pmf, th, c) <= r.upper
    # mu = 0 is Poisson: the lower envelope is exact
    pois = stationary_pmf(QueueParams(2, (0.0,), 0.5))
    assert mgf(pois, 0.7, 4.0) == pytest.approx(
        4 * (math.expm1(0.7) - 0.7), rel=1e-11)


def test_wp_regimes_and_monotone_breakpoints():
    names = [wp_regime(P(0.01), p)[0] for p in (1.5, 50, 1e3, 1e6)]
    order = {"WpRegime1": 1, "WpRegime2": 2, "WpRegime3": 3}
    assert [order[n] for n in names] == sorted(order[n] for n in names)
    r = wp_bounds(P(0.01), 2)
    assert r.lower <= r.upper
    assert r.aux["upper_stein_explicit"] > 0


def test_tail_report_fields():
    r = tail_bounds(P(1e-4, alpha=0.25), 2.0)
    assert r.kind == "tail" and r.regime
    lo, hi = r.clamped()
    assert 0 <= lo <= hi <= 1


def test_transform_closed_form_vs_numeric():
    for a in (1, 3, 8):
        closed = math.exp(_transform_pieces(P(0.01), a)["log_upper_transform"])
        assert transform_upper_numeric(P(0.01), a) == pytest.approx(closed, rel=1e-5)
