"""Explicit bounds for join-the-shortest-queue with abandonment.

Constants are kept as natural logs, as in :mod:`ssq_bounds`. Pooled
quantities (A, C', C_4, ...) are the single-server constants evaluated at
mu = sum(mu_i).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .gaussian_numerics import gaussian_lp_norm, std_normal_ccdf
from .model_core import ParamError, QueueParams, overload_ok
from .ssq_bounds import (E, S2PI, SPI, E4R2, BoundReport, ConstantTable, _exp, _log,
                         constants_table)


@dataclass(frozen=True)
class JsqConstantTable:
    n: int
    lam: float
    mu: float
    C: float
    alpha: float
    epsilon: float
    logs: dict
    pooled: ConstantTable

    def log(self, name: str) -> float:
        return self.logs[name]

    def value(self, name: str) -> float:
        return _exp(self.logs[name])

    def as_dict(self) -> dict:
        return {k: self.value(k) for k in self.logs}

    def pick(self, *names: str) -> dict:
        return {k: self.value(k) for k in names}

    @property
    def iota(self) -> float:
        return min(1 / 3, 0.5 - self.alpha - self.epsilon)


def _lse(*xs: float) -> float:
    return float(np.logaddexp.reduce(np.array(xs, dtype=float)))


def jsq_constants(params: QueueParams) -> JsqConstantTable | ConstantTable:
    """Every JSQ constant in closed form; n = 1 returns the single-server table."""
    if params.n == 1:
        return constants_table(params)
    return _jsq_table(params)


def _jsq_table(params: QueueParams) -> JsqConstantTable:
    n, L, m, C = params.n, params.lam, params.mu, params.C
    al, ep = params.alpha, params.epsilon
    pooled = constants_table(params)
    logA = pooled.log("A")
    sl = math.sqrt(L)
    if n >= 2:
        zeta = L / math.sqrt(n * (n - 1))
        # log of (2 sqrt(2 pi)/e) A exp(2 lam - mu/n)
        log_k = math.log(2 * S2PI / E) + logA + 2 * L - m / n
        logE1 = math.log(18 / zeta) + _lse(math.log(L + m), log_k + math.log(n))
        inner = _lse(math.log(zeta) + _lse(math.log(L + m), log_k + math.log(n)),
                     math.log(6) + _lse(2 * math.log(L + m), math.log(2) + log_k + 2 * math.log(n)))
        logE2 = math.log(4 * n * max(1.0, 1 / zeta)) + inner
    else:
        # q_perp vanishes identically for a single server
        zeta, logE1, logE2 = math.inf, -math.inf, -math.inf
    logE = max(logE1, logE2)

    k = 1 / (0.5 - al)
    # A_{lam,mu,n} = (1/n)(1 + n mu Gamma(k + 1) (C/(2 n lam))^{-k})
    logAn = -math.log(n) + _lse(0.0, math.log(n) + _log(m) + float(gammaln(k + 1))
                                - k * math.log(C / (2 * n * L)))
    An = _exp(logAn)
    logCpp = math.log(2 * E * S2PI)
    logCp = (math.log(An + 1 / n) + 0.5 * math.log(2 * (math.exp(n) / n - 1 - 1 / n) * L)
             + math.log(2 * E * S2PI))
    Cp, Cpp = _exp(logCp), _exp(logCpp)
    A1 = math.sqrt(2) * (((E + 8 * E * E + math.sqrt(2) * E * E) * S2PI / sl)
                         * (Cpp + Cp * L / math.sqrt(2)) + (4 * E * S2PI + 2 * E * E) / sl)
    A1p = math.sqrt(2) * (1 + 2 * E * SPI + 8 * math.sqrt(2) * E * E + 2 * E * E) * m / sl
    A2 = Cpp * L / math.sqrt(2) + 4 * E * S2PI / sl
    A2p = Cp
    A2pp = n * (An + 1 / n) + 1 / math.sqrt(2 * L)
    Areg = 1 + (1 + 2 * al) / (2 * ep)
    log_poly = Areg * math.log(2 * n * L / (C * C)) + float(gammaln(Areg + 1))
    logEk = _lse(math.log(A1), _log(A1p) + log_poly, math.log(A2), _log(A2p))
    logB1 = _lse(math.log(A1), _log(A1p) + log_poly, logE - 0.5 * math.log(L))
    logB2 = _lse(math.log(A2), logE - 0.5 * math.log(L))
    B2 = _exp(logB2)
    log_c = min(-0.5 * math.log(2 * E * B2), -2 * math.log(2 * E * B2))
    kl = L - math.log(L) - 1
    logCOT = (0.5 * math.log(2) - math.log(2 * pooled.value("Cprime")) - 2 * math.sqrt(2)
              - 0.5 * math.log(L) - 0.5 * math.log(kl)) if kl > 0 else -math.inf
    logs = {
        "zeta": _log(zeta) if math.isfinite(zeta) else math.inf,
        "E1": logE1, "E2": logE2, "E": logE,
        "A_n": logAn, "Cp_n": logCp, "Cpp_n": logCpp, "Cpp_ssq": math.log(2 * E * S2PI),
        "A1": math.log(A1), "Ap1": _log(A1p), "A2": math.log(A2), "Ap2": _log(A2p),
        "App2": math.log(A2pp), "Ek": logEk, "COT": logCOT,
        "B1": logB1, "B2": logB2, "c": log_c,
        "G": math.log(2) + 0.25 * math.log(L) - 1 - 0.5 * (math.log(n) + logE),
        "ETail2u": 2 + math.log(n) + 0.5 * logE - 0.5 * math.log(L),
        "A_pooled": logA, "Cprime_pooled": pooled.log("Cprime"), "C4": pooled.log("C4"),
        "C5": pooled.log("C5"), "Cp6": pooled.log("Cp6"), "Dp4": pooled.log("Dp4"),
        "D5": pooled.log("D5"),
    }
    return JsqConstantTable(n, L, m, C, al, ep, logs, pooled)


def _table(params: QueueParams) -> JsqConstantTable:
    return _jsq_table(params)


def gamma_thresholds(params: QueueParams, phi=None, a: float | None = None) -> dict:
    """gamma_1 (W_p), gamma_2 (tails, needs phi) and gamma_a (needs phi and a)."""
    t = _table(params)
    L, m, C = params.lam, params.mu, params.C
    xi = 0.5 - params.alpha - params.epsilon
    B1 = t.value("B1")
    g1_terms = {
        "inv_e": math.exp(-1), "mu": m,
        "lam2_C2_log2": (L / C) ** 2 * math.log(L / m) ** 2 if m > 0 else math.inf,
        "e4r2_lam_25": E4R2 * L / 25,
        "mu2_100e4r2lam": m * m / (4 * 25 * E4R2 * L),
        "xi_pow": (xi / 2) ** (2 / xi),
        "B1_pow": _exp(-(16 * math.log(2) + 4 + 4 * t.log("B1"))),
    }
    out = {"gamma1_terms": g1_terms}
    s = None
    if phi is not None:
        s = float(np.sum(phi))
        if s != 0:
            base = min(s * s, 0.5 * (s ** 4 / (E * B1)) ** (1 / 3))
            g1_terms["phi_term"] = base ** (1 / min(1 / 6, xi / 2))
    g1 = min(g1_terms.values())
    out["gamma1"] = g1
    if s is not None and s != 0:
        iota = t.iota
        base = min(s * s, 0.5 * (s ** 4 / (E * B1)) ** (1 / 3))
        out["gamma2"] = min(g1, base ** (2 / iota))
        if a is not None and a > 0:
            ga = {
                "gamma2": out["gamma2"],
                "s8_B2a6": s ** 8 / (E * E * B1 * B1 * a ** 6),
                "s2_a2_iota": (s * s / (a * a)) ** (1 / iota),
                "a_64eB1_4": (a / (64 * E * B1)) ** 4,
                "s12": 4 * s ** 12 / (E * E * B1 * B1 * a ** 10),
                "s8_2_20": s ** 8 / (2 ** 20 * E ** 4 * B1 ** 4 * a ** 4),
            }
            out["gamma_a_terms"] = ga
            out["gamma_a"] = min(ga.values())
    elif s == 0:
        out["gamma2"] = g1
    return out


def ssc_bound(params: QueueParams, p: float) -> BoundReport:
    """||q_perp||_p <= max(E1 p^2, E2 p)."""
    if p < 1:
        raise ParamError("p must be >= 1")
    if params.n == 1:
        return BoundReport("ssc", 0.0, 0.0, "", True, {"single_server": True}, {},
                           {"note": "q_perp is identically zero"})
    t = _table(params)
    u1 = _exp(t.log("E1") + 2 * math.log(p))
    u2 = _exp(t.log("E2") + math.log(p))
    ok = overload_ok(params)
    return BoundReport("ssc", 0.0, max(u1, u2), "", ok, {"overload_ok": ok},
                       t.pick("E1", "E2", "E", "zeta"),
                       {"branch_p2": u1, "branch_p": u2,
                        "upper_Ep2": _exp(t.log("E") + 2 * math.log(p))})


def zero_mass_bounds(params: QueueParams) -> tuple[BoundReport, BoundReport]:
    """(sum_i P(q_i = 0) bracket, P(sum q = 0) bracket)."""
    L, m, g, n, C = params.lam, params.mu, params.gamma, params.n, params.C
    ok = overload_ok(params)
    log_up = -C * (L - m) / (2 * n * L * math.sqrt(g))
    theta_ok = m > 0 and math.sqrt(g) * C / L <= math.log(L / m)
    pre = {"overload_ok": ok, "theta_range_ok": theta_ok}
    z = BoundReport("zero_mass_sum", 0.0, _exp(log_up), "", ok and theta_ok, pre, {},
                    {"log_upper": log_up, "slope_inv_sqrt_gamma": -C * (L - m) / (2 * n * L)})
    log_lo = -L / g
    if m > 0:
        pooled = constants_table(params)
        kl = L / m - 1 - math.log(L / m)
        log_hi = pooled.log("Cprime") + 0.5 * math.log(g / m) - kl * m / g
        cons = pooled.pick("Cprime")
    else:
        log_hi, cons = math.inf, {}
    e = BoundReport("p_empty", _exp(log_lo), _exp(log_hi), "", ok and m > 0,
                    {"overload_ok": ok, "mu_positive": m > 0}, cons,
                    {"log_lower": log_lo, "log_upper": log_hi})
    return z, e


def _qsum_upper_pieces(params: QueueParams, p: float) -> tuple[float, float]:
    t = _table(params)
    L, g, n = params.lam, params.gamma, params.n
    sub_exp = t.value("Cpp_n") * math.sqrt(p / g) + t.value("Cp_n") * p
    sub_pois = n * (t.value("A_n") + 1 / n) * p / math.log1p(n * g * p / L)
    return sub_exp, sub_pois


def qsum_moment_bounds(params: QueueParams, p: float) -> BoundReport:
    """Bracket on ||q_sum - (lam - mu)/gamma||_p."""
    if p < 1:
        raise ParamError("p must be >= 1")
    t = _table(params)
    L, g = params.lam, params.gamma
    b1, b2 = _qsum_upper_pieces(params, p)
    A = t.pooled.value("A")
    log_lo = (t.log("C4") - 8 * (15 + A) * L / (g * p) + math.log(p)
              - math.log(math.log1p(p * g / L)))
    ok = overload_ok(params)
    return BoundReport("qsum_lp", _exp(log_lo), min(b1, b2), "", ok, {"overload_ok": ok},
                       t.pick("A_n", "Cp_n", "Cpp_n", "C4"),
                       {"branch_subexp": b1, "branch_subpoisson": b2,
                        "branch": "subexp" if b1 <= b2 else "subpoisson",
                        "upper_max_envelopes": max(b1, b2), "log_lower": log_lo})


def wp_jsq_regime(params: QueueParams, p: float) -> tuple[str, dict]:
    g, al, ep = params.gamma, params.alpha, params.epsilon
    r1_end = g ** (-(0.5 - al - ep))
    if p <= r1_end:
        reg = "WpRegime1"
    elif p < 1 / g:
        reg = "WpRegime2"
    else:
        reg = "WpRegime3"
    t = _table(params)
    return reg, {"regime1_end": r1_end, "regime2_start": g ** (-(0.5 - al)),
                 "regime3_start": 1 / g, "lower_switch": _exp(t.log("D5") - math.log(g))}


def wp_jsq_bounds(params: QueueParams, p: float) -> BoundReport:
    """W_p between the scaled total queue and N(0, 1)."""
    if p <= 1:
        raise ParamError("p must exceed 1")
    t = _table(params)
    L, m, g, n, C = params.lam, params.mu, params.gamma, params.n, params.C
    reg, bnd = wp_jsq_regime(params, p)
    sg = math.sqrt(g)
    Ek = t.value("Ek")
    u1 = Ek * p * sg
    u2 = Ek * math.sqrt(p)
    u3 = Ek * p * sg / math.log1p(n * g * p / L)
    upper = {"WpRegime1": u1, "WpRegime2": u2, "WpRegime3": u3}[reg]
    stein = (t.value("A1") * p * sg + t.value("Ap1") / sg
             * math.exp(-C * (L - m) / (2 * n * L * p * sg))) if p <= L / (2 * g) else math.inf
    b1, b2 = _qsum_upper_pieces(params, p)
    # triangle inequality with the moment bracket and the exact ||Z||_p
    tri_up = math.sqrt(g / L) * min(b1, b2) + gaussian_lp_norm(p)
    log_sw = t.log("D5") - math.log(g)
    if math.log(p) <= log_sw:
        lq = _exp(t.log("COT") + 0.5 * math.log(g) - L / (p * g))
    else:
        lq = _exp(t.log("Dp4")) * p * sg / math.log1p(g * p / L)
    tri_lo = (_exp(t.log("C4") - 0.5 * math.log(L) - t.value("C5") / (g * p))
              * p * sg / math.log1p(g * p / L) - t.value("Cp6") * math.sqrt(p))
    ok = overload_ok(params)
    thr = gamma_thresholds(params)
    g_ok = g <= thr["gamma1"]
    pre = {"overload_ok": ok, "gamma_le_gamma1": g_ok, "p_gt_1": p > 1}
    return BoundReport("wp_jsq", max(lq, tri_lo, 0.0), upper, reg, ok and g_ok, pre,
                       t.pick("Ek", "A1", "Ap1", "A2", "Ap2", "COT", "Dp4"),
                       {"upper_r1": u1, "upper_r2": u2, "upper_r3": u3,
                        "upper_stein_explicit": stein, "upper_triangle_derived": tri_up,
                        "lower_quantile": lq, "lower_triangle": tri_lo,
                        "gamma1": thr["gamma1"], **bnd})


def _gauss_tail(s: float, a: float) -> float:
    """P(Z s > a)."""
    if s > 0:
        return float(std_normal_ccdf(a / s))
    return float(std_normal_ccdf(-a / s))


def jsq_tail_bounds(params: QueueParams, phi, a: float | None = None,
                    delta: float | None = None) -> BoundReport:
    """Tail bracket for P(<q_tilde, phi> > a).

    Give either ``a`` directly (then delta = ln a / ln(1/gamma)) or ``delta``
    (then a = gamma^{-delta}).
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (params.n,) or abs(float(np.linalg.norm(phi)) - 1) > 1e-12:
        raise ParamError("phi must be a unit vector of length n")
    g = params.gamma
    if (a is None) == (delta is None):
        raise ParamError("give exactly one of a, delta")
    if a is None:
        a = g ** (-delta)
    elif a > 0 and g != 1:
        delta = math.log(a) / math.log(1 / g)
    else:
        delta = 0.0
    if a <= 0:
        raise ParamError("a must be positive")
    t = _table(params)
    L, m, n, al = params.lam, params.mu, params.n, params.alpha
    sg = math.sqrt(g)
    s = float(phi.sum())
    if abs(s) < 1e-12:
        s = 0.0
    B1 = t.value("B1")
    iota = t.iota
    thr = gamma_thresholds(params, phi, a)
    ok = overload_ok(params)
    g2 = thr.get("gamma2", thr["gamma1"])
    aux: dict = {"phi_dot_one": s, "delta": delta, "gamma1": thr["gamma1"], "gamma2": g2}
    open_flag = False

    if s != 0:
        gauss = _gauss_tail(s, a)
        pre_p = a * a / (2 * s * s) + math.log(1 / sg)
        pref = sg * (pre_p ** 2 + S2PI) / (S2PI * abs(s))
        band_a = E ** 3 * B1 * pref * math.exp(-a * a / (2 * s * s))
        corr = 1 - E * B1 * (a ** 4 / (2 * s ** 4) * sg + 2 * sg * math.log(1 / sg) ** 2 / a)
        band_b = E * B1 * pref * _exp(-a * a / (2 * s * s) * corr)
        c = t.value("c")
        ex = min(1 / (4 * delta) + 0.5, 2.0) if delta > 0 else 2.0
        up_c = gauss + E / (2 * S2PI) * a * math.exp(-a * a / 8) + math.exp(-c * a ** ex)
        etail1 = min(2 * s * s, (s ** 4 / (E * B1)) ** (1 / 3))
        ga = thr["gamma_a"]
        delta_c = min(0.25 - al / 2, 1 / 6)
        aux.update({"gauss": gauss, "band_a": band_a, "band_b": band_b,
                    "band_b_bracket": corr, "upper_c": up_c, "c_exponent": ex,
                    "E_tail1_u": etail1, "gamma_a": ga, "delta_c": delta_c})
        if g <= ga:
            regime, lo, up, range_ok = "ConstantDev", gauss - band_a, gauss + band_a, True
        elif 2 <= a <= etail1 * g ** (-iota / 2):
            regime, lo, up = "Moderate", gauss - band_b, gauss + band_b
            range_ok = corr > 0
        elif delta >= delta_c:
            regime, lo, up, range_ok = "LargeSubWeibull", 0.0, up_c, True
            open_flag = True
        else:
            regime, lo, up, range_ok = "ConstantDev", gauss - band_a, gauss + band_a, False
    else:
        G = t.value("G")
        etail2 = t.value("ETail2u")
        up = math.exp(-G * math.sqrt(a) / g ** 0.25)
        regime, lo, range_ok, open_flag = "Orthogonal", 0.0, a >= etail2 * sg, True
        aux.update({"G": G, "E_tail2_u": etail2})

    # positive-orthant refinement via domination by independent infinite-server queues
    if np.all(phi >= 0) and s > 0:
        a_min = E * E * n * math.sqrt(L) / sg
        b = math.sqrt(L) * a / (s * n * sg) + (L - m) / (n * g)
        x = b * g / L
        cher = -b * math.log(x) + b - L / g if x >= 1 else 0.0
        printed = -((math.sqrt(L) * a / (2 * n * sg * s) + (L - m) / (n * g))
                    * math.log(sg * a / (s * n * math.sqrt(L)) + (L - m) / (n * math.sqrt(L * g))))
        aux.update({"refinement_threshold": a_min, "log_upper_chernoff": cher,
                    "log_upper_refinement_printed": printed,
                    "refinement_applies": a >= a_min})
        if a >= a_min:
            aux["upper_refinement_printed"] = _exp(printed)
            if ok and g <= g2 and range_ok:
                up = min(up, math.exp(cher))
            else:
                # domination by the total of an infinite-server system holds for any gamma
                regime, lo, up = "PositiveRefinement", 0.0, math.exp(cher)
                g2, range_ok, open_flag, ok = math.inf, True, True, True
    pre = {"overload_ok": ok, "gamma_le_gamma2": g <= g2, "range_ok": range_ok,
           "open_in_paper": open_flag}
    return BoundReport("tail_jsq", lo, up, regime, ok and g <= g2 and range_ok, pre,
                       t.pick("B1", "B2", "c", "G", "ETail2u"), aux)
