"""Generator-comparison upper bound on W_p to the standard normal.

The bound is a series over the Kramers-Moyal coefficients of the scaled
queue generator, each weighted by an Ornstein-Uhlenbeck smoothing factor
g_k(t0, p). The series is truncated at ``kmax`` with a certified remainder.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln, logsumexp

from .gaussian_numerics import gaussian_lp_norm, hermite_lp_bound, log_hermite_lp_bound
from .model_core import ParamError, QueueParams
from .ssq_bounds import BoundReport


@dataclass(frozen=True)
class GCoefficients:
    t0: float
    p: float
    g: np.ndarray
    # bound on sum_{k>kmax} g_k sigma^k / k!, the coefficient envelope being
    # ||a_k||_p <= sigma^k / k! * (||lam + D||_p / gamma)
    tail_bound: float


@dataclass(frozen=True)
class KmCoefficient:
    k: int
    beta0: float
    beta1: float
    at_zero: float


def g_integral(t0: float, k: int) -> float:
    """e^{t0} int_0^{e^{-t0}} (x / sqrt(1 - x^2))^(k-1) dx."""
    c = math.exp(-t0)
    m = k - 1
    val, _ = quad(lambda x: (x / math.sqrt(1.0 - x * x)) ** m, 0.0, c,
                  epsabs=0.0, epsrel=1e-13, limit=200)
    return math.exp(t0) * val


def _remainder(t0: float, p: float, kmax: int, sigma: float) -> float:
    # g_k <= e^{t0} c r^{k-1} H_{k-1}: the integrand is increasing on [0, c]
    c = math.exp(-t0)
    r = c / math.sqrt(-math.expm1(-2 * t0))

    def log_term(k: int) -> float:
        return (t0 + math.log(c) + (k - 1) * math.log(r) + log_hermite_lp_bound(k - 1, p)
                + k * math.log(sigma) - float(gammaln(k + 1)))

    tail, k = 0.0, kmax + 1
    while k <= kmax + 10000:
        ratio = r * math.sqrt(p) * sigma * math.sqrt(k) / (k + 1)
        if ratio < 0.5:
            # term ratios are nonincreasing in k, so a geometric series dominates
            return tail + math.exp(log_term(k)) / (1 - ratio)
        tail += math.exp(log_term(k))
        k += 1
    return math.inf


def g_coefficients(t0: float, p: float, kmax: int = 25, sigma: float = 1.0) -> GCoefficients:
    if t0 <= 0:
        raise ParamError("t0 must be positive")
    if kmax < 3:
        raise ParamError("kmax must be at least 3")
    zp = gaussian_lp_norm(p)
    c = math.exp(-t0)
    g = np.empty(kmax + 1)
    g[0] = math.exp(t0) * zp * (math.pi / 2 - math.asin(c))
    g[1] = 1.0
    g[2] = math.exp(t0) * zp * (1.0 - math.sqrt(-math.expm1(-2 * t0)))
    for k in range(3, kmax + 1):
        g[k] = g_integral(t0, k) * hermite_lp_bound(k - 1, p)
    return GCoefficients(t0, p, g, _remainder(t0, p, kmax, sigma))


def default_t0(p: float, gamma: float, lam: float) -> float:
    u = p * gamma / lam
    if u >= 1:
        raise ParamError("default t0 needs p * gamma / lambda < 1; pass t0 explicitly")
    return -0.5 * math.log1p(-u)


def _features(params: QueueParams, model: str, states: np.ndarray):
    """(X, service part, total death rate) for a batch of states."""
    g = params.gamma
    if model == "ssq":
        x = np.asarray(states, dtype=float)
        serv = params.mus[0] * (x >= 1)
        return x, serv, serv + g * x
    if model == "jsq_sum":
        s = np.atleast_2d(np.asarray(states, dtype=float))
        mus = np.asarray(params.mus)
        serv = (s > 0) @ mus
        x = s.sum(axis=1)
        return x, serv, serv + g * x
    raise ParamError(f"unknown model {model!r}")


def km_coefficients(params: QueueParams, model: str, k: int, state) -> np.ndarray | float:
    """a_k(x) = (1/(k! gamma)) s^k (lam + (-1)^k D(x)), s = sqrt(gamma/lam)."""
    if k < 1:
        raise ParamError("k must be >= 1")
    scalar = np.ndim(state) == 0 or (model == "jsq_sum" and np.ndim(state) == 1)
    _, _, death = _features(params, model, state)
    s = math.sqrt(params.gamma / params.lam)
    pref = math.exp(k * math.log(s) - gammaln(k + 1)) / params.gamma
    out = pref * (params.lam + (-1) ** k * death)
    return float(np.ravel(out)[0]) if scalar else out


def km_affine(params: QueueParams, k: int) -> KmCoefficient:
    """SSQ coefficient as beta0 + beta1 x on x >= 1, plus its value at 0."""
    s = math.sqrt(params.gamma / params.lam)
    pref = math.exp(k * math.log(s) - gammaln(k + 1)) / params.gamma
    sign = (-1) ** k
    return KmCoefficient(k, pref * (params.lam + sign * params.mus[0]),
                         pref * sign * params.gamma, pref * params.lam)


def scaled_state(params: QueueParams, x) -> np.ndarray:
    return math.sqrt(params.gamma / params.lam) * (np.asarray(x, dtype=float)
                                                   - (params.lam - params.mu) / params.gamma)


def first_order_residual(params: QueueParams, model: str, states) -> np.ndarray:
    """a_1(x) + T(x); grouped so that mu = 0 cancels exactly in floating point."""
    x, serv, _ = _features(params, model, states)
    g = params.gamma
    b = params.lam / g
    s = math.sqrt(g / params.lam)
    return s * ((b - serv / g - x) + (x - (b - params.mu / g)))


def _state_law(pmf, model: str):
    """(log-probabilities, states) over the stored support."""
    if model == "ssq":
        return pmf.log_probs, np.arange(pmf.size)
    return pmf.log_probs.ravel(), pmf.states()


def _lp(log_probs: np.ndarray, f: np.ndarray, p: float) -> float:
    af = np.abs(f)
    keep = (af > 0) & np.isfinite(log_probs)
    if not keep.any():
        return 0.0
    return float(np.exp(logsumexp(log_probs[keep] + p * np.log(af[keep])) / p))


def certificate_bound(params: QueueParams, p: float, t0: float | None = None,
                      kmax: int = 25, pmf=None, model: str = "ssq") -> BoundReport:
    """W_p <= g_0 + g_1 ||a_1 + T|| + g_2 ||a_2 - 1|| + sum_{k>=3} g_k ||a_k||."""
    if pmf is None:
        if model != "ssq":
            raise ParamError("jsq certificate needs an explicit joint pmf")
        from .ssq_exact import stationary_pmf
        pmf = stationary_pmf(params)
    if t0 is None:
        t0 = default_t0(p, params.gamma, params.lam)
    s = math.sqrt(params.gamma / params.lam)
    gc = g_coefficients(t0, p, kmax, sigma=s)
    lp, states = _state_law(pmf, model)
    _, _, death = _features(params, model, states)
    lam, g = params.lam, params.gamma

    n1 = _lp(lp, first_order_residual(params, model, states), p)
    n2 = _lp(lp, (lam + death) / (2 * lam) - 1.0, p)
    terms = [gc.g[0], gc.g[1] * n1, gc.g[2] * n2]
    for k in range(3, kmax + 1):
        terms.append(gc.g[k] * _lp(lp, km_coefficients(params, model, k, states), p))

    tail = gc.tail_bound * _lp(lp, lam + death, p) / g
    total = float(sum(terms)) + tail
    aux = {f"term{k}": float(v) for k, v in enumerate(terms)}
    aux.update({"t0": t0, "tail_bound": tail, "kmax": kmax, "norm_first_order": n1,
                "norm_second_order": n2})
    u = p * g / lam
    return BoundReport("certificate", 0.0, total, "", u < 1,
                       {"p_gamma_over_lam_lt_1": u < 1}, {}, aux)
