"""Explicit bounds for the single-server queue with abandonment.

Every constant is evaluated in closed form and kept as a natural log, since
several of them (the D_5 type constants in particular) overflow a double.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from .gaussian_numerics import std_normal_ccdf
from .model_core import ParamError, QueueParams, overload_ok

E = math.e
S2PI = math.sqrt(2 * math.pi)
SPI = math.sqrt(math.pi)
E4R2 = math.exp(4 * math.sqrt(2))

REGIMES = ("ConstantDev", "NearConstant", "Moderate", "Large",
           "WpRegime1", "WpRegime2", "WpRegime3")


@dataclass
class BoundReport:
    kind: str
    lower: float
    upper: float
    regime: str = ""
    valid: bool = False
    preconditions: dict = field(default_factory=dict)
    constants_used: dict = field(default_factory=dict)
    aux: dict = field(default_factory=dict)

    def clamped(self) -> tuple[float, float]:
        """Probability-scale view; the raw formula values stay untouched."""
        return max(self.lower, 0.0), min(self.upper, 1.0)

    def contains(self, x: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= x <= self.upper + slack

    def to_record(self) -> dict[str, Any]:
        rec = {"kind": self.kind, "lower": self.lower, "upper": self.upper,
               "regime": self.regime, "valid": self.valid}
        for k, v in self.preconditions.items():
            rec[f"pre.{k}"] = v
        for k, v in self.constants_used.items():
            rec[f"const.{k}"] = v
        for k, v in self.aux.items():
            rec[f"aux.{k}"] = v
        return rec


def _exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


@dataclass(frozen=True)
class ConstantTable:
    lam: float
    mu: float
    C: float
    alpha: float
    epsilon: float
    logs: dict
    gamma0_terms: dict

    def log(self, name: str) -> float:
        return self.logs[name]

    def value(self, name: str) -> float:
        return _exp(self.logs[name])

    def as_dict(self) -> dict:
        return {k: self.value(k) for k in self.logs}

    @property
    def gamma0(self) -> float:
        return min(self.gamma0_terms.values())

    def pick(self, *names: str) -> dict:
        return {k: self.value(k) for k in names}


def c_prime(lam: float, mu: float, C: float) -> float:
    den = C * C + C - 1
    ratio = (1 + C) * (2 + C) / den if den > 0 else math.inf
    return lam / mu * max(E, ratio) if mu > 0 else math.inf


def d_prime(lam: float, mu: float) -> float:
    return math.sqrt(mu) / (2 * math.sqrt(mu) + math.sqrt(2 * math.pi * E * E * lam))


@lru_cache(maxsize=256)
def _table(lam: float, mu: float, C: float, alpha: float, eps: float) -> ConstantTable:
    L, m = lam, mu
    sl = math.sqrt(L)
    Cp = c_prime(L, m, C)
    Dp = d_prime(L, m)
    A = 1 + math.sqrt(2) * Cp
    C1 = 2 * E * math.sqrt(2 * math.pi * L) * (2 + Cp * Cp / 4)
    C2 = 2 * E * S2PI
    C3 = 2 + 2 * A
    logC4 = math.log(29 / 69 * 2) - 9 * (15 + A)
    C5 = (120 + 8 * A) * L
    C10 = math.sqrt(2) * max(
        (4 * E * S2PI + 2 * E * E) / sl,
        m / sl + E * S2PI * m / L + 8 * E * E * m / sl + E * E * m / (2 * sl),
        E * S2PI / L + 8 * E * E / L + E * E / (2 * L))
    Cp1 = math.sqrt(2) * (1 + 2 * E * SPI + 8 * math.sqrt(2) * E * E + 2 * E * E) * (m / sl) * max(Cp, 1.0)
    Cp2 = math.sqrt(2) * ((4 * E * S2PI + 2 * E * E) / sl
                          + ((E + 8 * E * E + math.sqrt(2) * E * E) * S2PI / sl) * (C1 + 2 * E * SPI * L))
    Cp3 = C10 * C2
    Cp4 = C1 + 2 * E * S2PI
    Cp5 = (6 + 2 * Cp) / sl + 2 * E * S2PI
    Cp6 = 4 * E * S2PI
    rate = L - math.log(L) - 1
    Cp7 = (math.sqrt(2) / (2 * Cp * math.exp(2 * math.sqrt(2)) * sl * math.sqrt(rate))
           * min(Dp / math.sqrt(m), 1.0)) if rate > 0 and m > 0 else 0.0
    Areg = 1 + alpha / eps
    logD1a = math.log(2 * Cp1) + Areg * math.log(2 * L / (C * C)) + float(gammaln(Areg + 1))
    logD1 = float(np.logaddexp(logD1a, math.log(Cp2 + Cp3)))
    D1 = _exp(logD1)
    D2 = Cp4 + Cp2
    D3 = Cp5 + Cp6
    logD5 = 12 * math.log(2) + math.log(L) - 4 * logC4 + 4 * C5 * L
    logD4p = logC4 - 0.5 * math.log(L) - math.log(2) - C5 * math.exp(-logD5)
    # D'_1 = D1 exp(1 + 2 e D1) / sqrt(2 pi) + 1
    logDp1 = float(np.logaddexp(logD1 + 1 + 2 * E * D1 - 0.5 * math.log(2 * math.pi), 0.0))
    xi = 0.5 - alpha - eps
    logs = {
        "Cprime": _log(Cp), "Dprime": _log(Dp), "A": _log(A),
        "C1": _log(C1), "C2": _log(C2), "C3": _log(C3), "C4": logC4, "C5": _log(C5),
        "C1_alt": _log(4 * E * SPI * (2 + Cp * math.sqrt(2))),
        "C2_alt": _log(2 * E * S2PI * (2 + Cp * math.sqrt(2))),
        "C10": _log(C10),
        "Cp1": _log(Cp1), "Cp2": _log(Cp2), "Cp3": _log(Cp3), "Cp4": _log(Cp4),
        "Cp5": _log(Cp5), "Cp6": _log(Cp6), "Cp7": _log(Cp7),
        "D1": logD1, "D2": _log(D2), "D3": _log(D3), "D4": 0.0, "D5": logD5,
        "Dp1": logDp1, "Dp4": logD4p,
        "DTail2l": math.log(2 * E) + logD1,
        "DTail2u": min(0.0, -(math.log(2 * E) + logD1)),
        "DTail3l": math.log(math.sqrt(2) * E * D2),
        "DTail3u": math.log(math.sqrt(2) * E * D2),
        "DTail4l": 2 * E * D3 * sl,
    }
    log2eD1 = math.log(2 * E) + logD1
    g0 = {
        "lam_e4r2_25": E4R2 * L / 25,
        "mu2_4e4r2lam": m * m / (4 * E4R2 * L),
        "mu": m,
        # printed with a negative exponent on 1/(2 e D1); kept verbatim
        "inv2eD1_pow": _exp(log2eD1 / xi),
        "2eD1_pow": _exp(-2 * log2eD1 / xi),
        "inv_2r2eD1": _exp(-(math.log(2 * math.sqrt(2) * E) + logD1)),
        "lam_over_A2": L / (A * A),
    }
    return ConstantTable(L, m, C, alpha, eps, logs, g0)


def constants_table(params: QueueParams) -> ConstantTable:
    if 0.5 - params.alpha - params.epsilon <= 0:
        raise ParamError("1/2 - alpha - epsilon must be positive")
    return _table(params.lam, params.mu, params.C, params.alpha, params.epsilon)


def gamma_a(params: QueueParams, a: float) -> tuple[float, dict]:
    t = constants_table(params)
    al, ep = params.alpha, params.epsilon
    D1 = t.value("D1")
    terms = {
        "gamma0": t.gamma0,
        "two_alpha": (2 * al) ** (1 / (1 - 2 * al)) * a ** (-1 / (1 - 2 * al - ep)),
        "alpha_a_eD1": (al * a / (E * D1)) ** (1 / (0.5 - al)),
        "inv_eD1a_sq": (1 / (E * D1 * a)) ** 2,
        "xi_pow": (0.5 - al - ep) ** (1 / (0.5 - al - ep)),
        "four_a6": 4 / a ** 6,
    }
    return min(terms.values()), terms


def _pool(params: QueueParams) -> tuple[float, float, float]:
    return params.lam, params.mu, params.gamma


def _kl_rate(lam: float, mu: float) -> float:
    r = lam / mu
    return r - 1 - math.log(r)


def p0_bounds(params: QueueParams) -> BoundReport:
    lam, mu, g = _pool(params)
    t = constants_table(params)
    expo = _kl_rate(lam, mu) / (g / mu)
    base = 0.5 * math.log(g / mu) - expo
    lo, hi = t.log("Dprime") + base, t.log("Cprime") + base
    ok = overload_ok(params)
    return BoundReport("p0", _exp(lo), _exp(hi), "", ok,
                       {"overload_ok": ok, "C_gt_1": params.C > 1},
                       t.pick("Cprime", "Dprime"),
                       {"exponent": expo, "log_lower": lo, "log_upper": hi,
                        "log_gap": hi - lo})


def _log_sub_poisson(p: float, g: float, lam: float) -> float:
    return math.log(p) - math.log(math.log1p(g * p / lam))


def lp_norm_bounds(params: QueueParams, p: float) -> BoundReport:
    """Two-sided bound on ||q - (lam - mu)/gamma||_p."""
    lam, mu, g = _pool(params)
    t = constants_table(params)
    b1 = t.value("C1") * math.sqrt(p / g) + t.value("C2") * p
    b2 = t.value("C3") * _exp(_log_sub_poisson(p, g, lam))
    alt = t.value("C1_alt") * math.sqrt(lam / g * p) + t.value("C2_alt") * p
    log_lo = t.log("C4") - t.value("C5") / (g * p) + _log_sub_poisson(p, g, lam)
    ok = overload_ok(params)
    return BoundReport("lp_norm", _exp(log_lo), min(b1, b2), "", ok and g <= t.gamma0,
                       {"overload_ok": ok, "gamma_le_gamma0": g <= t.gamma0},
                       t.pick("C1", "C2", "C3", "C4", "C5"),
                       {"branch_subexp": b1, "branch_subpoisson": b2,
                        "branch": "subexp" if b1 <= b2 else "subpoisson",
                        "upper_alt_C1": alt, "log_lower": log_lo})


def mgf_envelope(params: QueueParams, theta: float) -> BoundReport:
    """Log-scale bracket on E exp(theta * qhat), theta >= 0."""
    lam, mu, g = _pool(params)
    t = constants_table(params)
    base = lam / g * math.expm1(theta) - lam / g * theta
    ok = overload_ok(params)
    return BoundReport("mgf", base, base + t.log("A"), "", ok,
                       {"overload_ok": ok, "theta_nonneg": theta >= 0},
                       t.pick("A"), {"log_scale": True})


def wp_regime(params: QueueParams, p: float) -> tuple[str, dict]:
    g, al, ep = params.gamma, params.alpha, params.epsilon
    t = constants_table(params)
    r1_end = g ** (-(1 - 2 * al - 2 * ep))
    r3_start = t.value("D4") / g
    if p <= r1_end:
        reg = "WpRegime1"
    elif p < r3_start:
        reg = "WpRegime2"
    else:
        reg = "WpRegime3"
    return reg, {"regime1_end": r1_end, "regime2_start": g ** (-(1 - 2 * al)),
                 "regime3_start": r3_start, "lower_switch": _exp(t.log("D5") - math.log(g))}


def wp_bounds(params: QueueParams, p: float) -> BoundReport:
    lam, mu, g = _pool(params)
    t = constants_table(params)
    reg, bnd = wp_regime(params, p)
    sg = math.sqrt(g)
    u1 = t.value("D1") * p * sg
    u2 = t.value("D2") * math.sqrt(p)
    u3 = t.value("D3") * p * sg / math.log1p(g * p / lam)
    upper = {"WpRegime1": u1, "WpRegime2": u2, "WpRegime3": u3}[reg]
    kl = _kl_rate(lam, mu)
    stein = (t.value("Cp2") * p * sg
             + t.value("Cp1") / sg * _exp(-kl * mu / g)) if p <= lam / (2 * g) else math.inf
    # lower: quantile coupling below D5/gamma, sub-Poisson beyond
    log_sw = t.log("D5") - math.log(g)
    if math.log(p) < log_sw:
        lq = t.value("Cp7") * g * _exp(-kl / (p * g / mu))
    else:
        lq = t.value("Dp4") * p * sg / math.log1p(g * p / lam)
    tri = (_exp(t.log("C4") - 0.5 * math.log(lam) - t.value("C5") / (g * p))
           * p * sg / math.log1p(g * p / lam) - t.value("Cp6") * math.sqrt(p))
    ok = overload_ok(params)
    g_ok = g <= t.gamma0
    pre = {"overload_ok": ok, "gamma_le_gamma0": g_ok, "p_gt_1": p > 1}
    return BoundReport("wp", max(lq, tri, 0.0), upper, reg, ok and g_ok and p > 1, pre,
                       t.pick("D1", "D2", "D3", "D4", "Cp7", "Dp4"),
                       {"upper_r1": u1, "upper_r2": u2, "upper_r3": u3,
                        "upper_stein_explicit": stein, "lower_quantile": lq,
                        "lower_triangle": tri, **bnd})


def _transform_pieces(params: QueueParams, a: float) -> dict:
    lam, mu, g = _pool(params)
    t = constants_table(params)
    b = lam / g
    ap = a * math.sqrt(b)
    logA = t.log("A")
    up_pois = logA + ap - (b + ap) * math.log1p(ap / b)
    up_mdp = logA - ap * ap / (2 * b) + ap ** 3 / (2 * b * b)
    delta = 8 * math.sqrt(ap + b)
    x = (ap + delta / 2) / b
    theta = math.log1p(x)
    lo = math.log(2 / 3) - (ap + delta + b) * theta + ap + delta / 2
    lo_printed = (math.log(2 / 3) - a * a / 2 + delta * theta + delta ** 2 / (8 * b)
                  - (ap + delta / 2) ** 3 / (3 * b * b))
    return {"a_prime": ap, "delta": delta, "theta_star": theta,
            "log_upper_transform": up_pois, "log_upper_mdp": up_mdp,
            "log_lower_transform": lo, "log_lower_mdp_printed": lo_printed}


def transform_upper_numeric(params: QueueParams, a: float) -> float:
    """Markov bound with theta optimised numerically (cross-check of the closed form)."""
    lam, mu, g = _pool(params)
    b = lam / g
    ap = a * math.sqrt(b)
    logA = constants_table(params).log("A")
    res = minimize_scalar(lambda th: b * math.expm1(th) - b * th - th * ap,
                          bounds=(0.0, max(1.0, 2 * math.log1p(ap / b) + 1)), method="bounded")
    return _exp(logA + res.fun)


def tail_regimes(params: QueueParams, a: float) -> list[str]:
    g, al, ep = params.gamma, params.alpha, params.epsilon
    t = constants_table(params)
    sg = math.sqrt(g)
    hits = []
    if t.value("DTail2l") <= a <= t.value("DTail2u") * g ** (-(0.5 - al - ep)):
        hits.append("NearConstant")
    if t.value("DTail3l") * g ** (-(0.5 - al)) <= a <= t.value("DTail3u") / sg:
        hits.append("Moderate")
    if math.log(a * sg) >= t.log("DTail4l"):
        hits.append("Large")
    return hits


def tail_bounds(params: QueueParams, a: float) -> BoundReport:
    lam, mu, g = _pool(params)
    t = constants_table(params)
    sg = math.sqrt(g)
    phic = float(std_normal_ccdf(a))
    ell = math.log(1 / sg) + a * a / 2
    D1, D2, D3 = t.value("D1"), t.value("D2"), t.value("D3")

    band_a = _exp(t.log("Dp1") + math.log(sg * ell) - a * a / 2)
    shrink = 1 - D1 * sg * ell / a
    band_b = (E * D1 / S2PI * sg * ell * _exp(-a * a / 2 * shrink)) + sg * math.exp(-a * a / 2)
    p_c = a * a / (2 * E * E * D2 * D2)
    wass_c = phic + E / (2 * SPI) * a * math.exp(-a * a / 2 * (1 - math.sqrt(0.5)) ** 2) + math.exp(-p_c)
    wass_c_printed = phic + E / (2 * SPI) * a * math.exp(-a * a / 2 * (1 - math.sqrt(0.5)) ** 2) \
        + math.exp(-a * a / (2 * E * E * D2))
    p_d = math.sqrt(lam) / (2 * E * D3) * a / sg * math.log1p(a * sg)
    wass_d = phic + E / (2 * S2PI) * a * math.exp(-a * a / 8) + math.exp(-p_d)
    tr = _transform_pieces(params, a)
    up_tr = _exp(tr["log_upper_transform"])
    lo_tr = _exp(tr["log_lower_transform"])

    hits = tail_regimes(params, a)
    ga, ga_terms = gamma_a(params, a)
    ok = overload_ok(params)
    g0_ok = g <= t.gamma0
    transform_ok = ok and g <= lam / t.value("A") ** 2 and g <= mu
    if "Large" in hits:
        regime, up_w, range_ok = "Large", wass_d, True
    elif "Moderate" in hits:
        regime, up_w, range_ok = "Moderate", wass_c, True
    elif "NearConstant" in hits:
        regime, up_w, range_ok = "NearConstant", phic + band_b, True
    else:
        regime, up_w, range_ok = "ConstantDev", phic + band_a, g <= ga
    lo_w = {"ConstantDev": phic - band_a, "NearConstant": phic - band_b}.get(regime, -math.inf)
    upper = min(up_w, up_tr)
    lower = max(lo_w, lo_tr)
    pre = {"overload_ok": ok, "gamma_le_gamma0": g0_ok, "transform_ok": transform_ok,
           "range_ok": range_ok, "gamma_le_gamma_a": g <= ga,
           "regimes_matched": "|".join(hits) or "none",
           "overlap": len(hits) > 1}
    aux = {"phic": phic, "band_a": band_a, "band_b": band_b, "upper_wasserstein": up_w,
           "lower_wasserstein": lo_w, "upper_transform": up_tr, "lower_transform": lo_tr,
           "upper_wass_c": wass_c, "upper_wass_c_printed": wass_c_printed,
           "upper_wass_d": wass_d, "p_near_constant": 0.5 * a * a + math.log(1 / sg),
           "p_moderate": p_c, "p_large": p_d, "gamma_a": ga, **tr}
    return BoundReport("tail", lower, upper, regime, ok and g0_ok and range_ok and transform_ok,
                       pre, t.pick("Dp1", "D1", "D2", "D3", "A", "DTail2l", "DTail2u",
                                   "DTail3l", "DTail4l"), aux)
