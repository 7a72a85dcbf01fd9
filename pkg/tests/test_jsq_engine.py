import math

import numpy as np
import pytest

from artifact.jsq_engine import (coupling_dominance, exact_stationary_small, projected_tail,
                                 simulate_stationary)
from artifact.model_core import ParamError, QueueParams
from artifact.ssq_exact import prob_empty, stationary_pmf, tail_prob

SYM = QueueParams(2.0, (0.5, 0.5), 1.0)


@pytest.fixture(scope="module")
def sym_uniform():
    return exact_stationary_small(SYM, 40, tie_rule="uniform")


@pytest.fixture(scope="module")
def sym_lex():
    return exact_stationary_small(SYM, 40)


def test_single_server_matches_birth_death():
    p = QueueParams(2.0, (1.0,), 0.5)
    j = exact_stationary_small(p, 60)
    ref = stationary_pmf(p).probs
    m = min(len(ref), 61)
    tv = 0.5 * (np.abs(j.probs[:m] - ref[:m]).sum() + j.probs[m:].sum() + ref[m:].sum())
    assert tv <= 1e-9


def test_normalisation_residual_and_leak(sym_lex):
    assert abs(sym_lex.probs.sum() - 1) <= 1e-10
    assert sym_lex.residual <= 1e-10
    assert 0 <= sym_lex.leak < 1e-12


def test_exchange_symmetry_with_uniform_ties(sym_uniform):
    P = sym_uniform.probs
    assert np.max(np.abs(P - P.T)) <= 1e-10


def test_tie_rules_share_the_sorted_law(sym_uniform, sym_lex):
    def sorted_law(j):
        P = j.probs
        return np.triu(P + P.T) - np.diag(np.diag(P))
    assert np.max(np.abs(sorted_law(sym_uniform) - sorted_law(sym_lex))) <= 1e-10
    # lexicographic ties favour server 0, so the joint law is not symmetric
    assert np.max(np.abs(sym_lex.probs - sym_lex.probs.T)) > 1e-6


def test_empty_mass_lower_bound(sym_lex):
    assert sym_lex.probs[0, 0] >= math.exp(-2.0)


def test_truncation_honesty():
    p = QueueParams(2.0, (0.5, 0.5), 0.5)
    a, b = exact_stationary_small(p, 30), exact_stationary_small(p, 40)
    for f in (lambda s: s.sum(1) == 0, lambda s: (s == 0).sum(1), lambda s: s[:, 0]):
        pad = np.zeros_like(b.probs)
        pad[:31, :31] = a.probs
        ea = float(np.sum(pad.ravel() * f(b.states())))
        eb = b.expect(f)
        assert abs(ea - eb) < max(10 * a.leak, 1e-12)


def test_exact_rejections():
    with pytest.raises(ParamError):
        exact_stationary_small(QueueParams(2, (1, 1, 1, 1), 1), 3)
    with pytest.raises(ParamError):
        exact_stationary_small(QueueParams(2, (1, 1, 1), 1), 200)


def test_simulation_matches_birth_death():
    p = QueueParams(2.0, (1.0,), 0.5)
    r = simulate_stationary(p, 2e5, 1e3, 3, ["p_empty"])
    e = r["p_empty"]
    assert e.batches >= 30 and e.ci_halfwidth > 0
    assert abs(e.value - prob_empty(stationary_pmf(p))) <= e.ci_halfwidth


def test_simulated_perp_second_moment():
    p = QueueParams(2.0, (0.5, 0.5), 0.2)
    exact = exact_stationary_small(p, 60).expect(
        lambda s: ((s - s.mean(1, keepdims=True)) ** 2).sum(1))
    e = simulate_stationary(p, 2e5, 1e3, 5, ["perp:2"])["perp:2"]
    assert abs(e.value - exact) <= e.ci_halfwidth


def test_symmetric_means_agree():
    p = QueueParams(2.0, (0.5, 0.5), 0.2)
    r = simulate_stationary(p, 2e5, 1e3, 9, ["mean:0", "mean:1"], tie_rule="uniform")
    d = r["mean:0"].value - r["mean:1"].value
    assert abs(d) <= r["mean:0"].ci_halfwidth + r["mean:1"].ci_halfwidth


def test_determinism_and_batch_edges():
    p = QueueParams(2.0, (0.7, 0.4), 0.3)
    est = ["p_empty", "zero_mass", "qhat:3"]
    a = simulate_stationary(p, 5e3, 50, 42, est)
    b = simulate_stationary(p, 5e3, 50, 42, est)
    assert a.to_csv() == b.to_csv()
    # short horizons put event times on batch boundaries; this must terminate
    for h in (20, 40, 100):
        simulate_stationary(p, h, 1, 3, ["p_empty"], backend="python")


def test_simulation_rejections():
    p = QueueParams(2.0, (0.5, 0.5), 0.2)
    with pytest.raises(ParamError):
        simulate_stationary(p, 10, 10, 1, ["p_empty"])
    with pytest.raises(ParamError):
        simulate_stationary(p, 100, 1, 1, ["perp:65"])
    with pytest.raises(ParamError):
        simulate_stationary(p, 100, 1, 1, ["tail:1,1:0.5"])
    with pytest.raises(ParamError):
        simulate_stationary(p, 100, 1, 1, ["nonsense"])


def test_projected_tail_identities(sym_uniform):
    j = sym_uniform
    r2 = 1 / math.sqrt(2)
    assert projected_tail(j, (r2, r2), -1e9) == pytest.approx(1.0, abs=1e-12)
    up = projected_tail(j, (r2, -r2), 0.0)
    down = projected_tail(j, (-r2, r2), 0.0)
    P = j.probs
    assert up == pytest.approx(np.tril(P, -1).sum(), abs=1e-12)
    assert up == pytest.approx(down, abs=1e-10)
    # <q_tilde, 1/sqrt(n)> is sqrt(n) sqrt(gamma/lam) (q_sum - (lam - mu)/gamma)
    for a in (-0.5, 0.0, 0.7):
        ref = tail_prob(j.sum_marginal(), a / math.sqrt(2), normalized=True).value
        assert projected_tail(j, (r2, r2), a) == pytest.approx(ref, abs=1e-12)
    with pytest.raises(ParamError):
        projected_tail(j, (1.0, 1.0), 0.0)


def test_coupling_reports():
    rep = coupling_dominance(QueueParams(2.0, (0.6, 0.4), 0.3), 20_000, 1)
    assert rep.violations == 0 and rep.epochs == 20_000
    free = coupling_dominance(QueueParams(2.0, (0.0, 0.0), 0.3), 20_000, 2)
    assert free.violations == 0 and free.jsq_vs_infinite_mismatch == 0
    fast = coupling_dominance(QueueParams(2.0, (0.5, 0.5), 100.0), 20_000, 3)
    assert fast.violations == 0 and fast.max_population <= 10
    with pytest.raises(ParamError):
        coupling_dominance(SYM, 0, 1)
