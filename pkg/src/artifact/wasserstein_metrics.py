"""One-dimensional Wasserstein-p distances through the quantile coupling."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc, gammaln, ndtr, ndtri

from .gaussian_numerics import std_normal_ccdf, std_normal_pdf
from .model_core import ParamError
from .ssq_exact import LatticePmf

_GL_T, _GL_W = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class WpResult:
    value: float
    p: float
    quad_error: float
    endpoint_tail: float


def _breakpoints(log_probs: np.ndarray) -> np.ndarray:
    """z_k = Phi^{-1}(F_k) for every atom, computed from the smaller tail."""
    log_left = np.logaddexp.accumulate(log_probs)
    log_right = np.logaddexp.accumulate(log_probs[::-1])[::-1]
    # mass strictly to the right of atom k
    log_s = np.concatenate((log_right[1:], [-np.inf]))
    f = np.exp(log_left)
    s = np.exp(log_s)
    z = np.where(f <= 0.5, ndtri(np.clip(f, 0, 1)), -ndtri(np.clip(s, 0, 1)))
    z[-1] = np.inf
    return z


def _gauss_tail_moment(p: float, z: float) -> float:
    """int_z^inf t^p phi(t) dt for z >= 0."""
    s = 0.5 * (p + 1)
    return math.exp(0.5 * p * math.log(2.0) + gammaln(s) - 0.5 * math.log(math.pi)
                    - math.log(2.0)) * float(gammaincc(s, 0.5 * z * z))


def _panel_integral(lo, hi, xk, p, h):
    """sum over panels of int |x - z|^p phi(z) dz with panels cut to width <= h."""
    width = hi - lo
    pieces = np.maximum(np.ceil(width / h).astype(np.int64), 1)
    idx = np.repeat(np.arange(len(lo)), pieces)
    start = np.repeat(np.cumsum(pieces) - pieces, pieces)
    j = np.arange(len(idx)) - start
    step = width[idx] / pieces[idx]
    a = lo[idx] + j * step
    half = 0.5 * step
    mid = a + half
    z = mid[:, None] + half[:, None] * _GL_T[None, :]
    d = np.abs(xk[idx][:, None] - z)
    with np.errstate(divide="ignore"):
        logf = p * np.log(d) - 0.5 * z * z
    f = np.exp(logf) / math.sqrt(2 * math.pi)
    return float(np.sum((f @ _GL_W) * half))


def wp_points_vs_gaussian(x: np.ndarray, log_probs: np.ndarray, p: float,
                          rtol: float = 1e-6) -> WpResult:
    """W_p between a discrete law on sorted points x and N(0, 1)."""
    if p < 1:
        raise ParamError(f"p must be >= 1, got {p}")
    keep = np.isfinite(log_probs)
    x = np.asarray(x, dtype=float)[keep]
    lp = np.asarray(log_probs, dtype=float)[keep]
    lp = lp - np.logaddexp.reduce(lp)
    zhi = _breakpoints(lp)
    zlo = np.concatenate(([-np.inf], zhi[:-1]))
    big = float(np.max(np.abs(x))) if len(x) else 0.0
    zstar = big + math.sqrt(p) + 12.0
    lo = np.clip(zlo, -zstar, zstar)
    hi = np.clip(zhi, -zstar, zstar)
    # split at the kink z = x_k so each panel is smooth
    kink = (x > lo) & (x < hi)
    lo2 = np.concatenate((lo[~kink], lo[kink], x[kink]))
    hi2 = np.concatenate((hi[~kink], x[kink], hi[kink]))
    xk2 = np.concatenate((x[~kink], x[kink], x[kink]))
    nz = hi2 > lo2
    lo2, hi2, xk2 = lo2[nz], hi2[nz], xk2[nz]

    # endpoint slivers: |x - z| <= |z| + big, (s + t)^p <= 2^{p-1}(s^p + t^p)
    sliver = 2.0 * 2 ** (p - 1) * (_gauss_tail_moment(p, zstar)
                                   + big ** p * float(std_normal_ccdf(zstar)))
    h = 0.5
    prev = _panel_integral(lo2, hi2, xk2, p, h)
    err = math.inf
    for _ in range(8):
        h *= 0.5
        cur = _panel_integral(lo2, hi2, xk2, p, h)
        err = abs(cur - prev)
        prev = cur
        if err <= rtol * max(cur, 1e-300):
            break
    integral = max(prev, 0.0)
    value = integral ** (1.0 / p)
    # first-order propagation of the W_p^p error to W_p
    qerr = value * err / (p * integral) if integral > 0 else err ** (1.0 / p)
    return WpResult(value, p, qerr, sliver)


def wp_lattice_vs_gaussian(pmf: LatticePmf, p: float, rtol: float = 1e-6) -> WpResult:
    return wp_points_vs_gaussian(pmf.support(), pmf.log_probs, p, rtol)


def wp_discrete(xa, pa, xb, pb, p: float) -> float:
    """Exact W_p between two discrete laws via merged quantile staircases."""
    if p < 1:
        raise ParamError(f"p must be >= 1, got {p}")
    xa, pa, xb, pb = (np.asarray(v, dtype=float) for v in (xa, pa, xb, pb))
    oa, ob = np.argsort(xa, kind="stable"), np.argsort(xb, kind="stable")
    xa, pa, xb, pb = xa[oa], pa[oa], xb[ob], pb[ob]
    ca = np.cumsum(pa) / pa.sum()
    cb = np.cumsum(pb) / pb.sum()
    ca[-1] = cb[-1] = 1.0
    u = np.union1d(ca, cb)
    du = np.diff(np.concatenate(([0.0], u)))
    mid = u - 0.5 * du
    ia = np.minimum(np.searchsorted(ca, mid), len(xa) - 1)
    ib = np.minimum(np.searchsorted(cb, mid), len(xb) - 1)
    return float(np.sum(du * np.abs(xa[ia] - xb[ib]) ** p) ** (1.0 / p))


def wp_lattice_vs_lattice(a: LatticePmf, b: LatticePmf, p: float) -> WpResult:
    v = wp_discrete(a.support(), a.probs, b.support(), b.probs, p)
    return WpResult(v, p, 0.0, a.truncation_tail + b.truncation_tail)


def tail_sandwich(a: float, rho: float, p: float, wp: float) -> float:
    """Error term (1-rho) a phi(rho a) + ((1-rho) a)^{-p} wp^p.

    Bounds |P(X > a) - P(Z > a)| for any X whose W_p distance to N(0,1) is
    at most ``wp``; by symmetry it also bounds |P(X < -a) - P(Z < -a)|.
    """
    if a <= 0:
        raise ParamError("a must be positive")
    if not 0 <= rho < 1:
        raise ParamError("rho must lie in [0, 1)")
    gap = (1.0 - rho) * a
    if wp == 0:
        return float(gap * std_normal_pdf(rho * a))
    return float(gap * std_normal_pdf(rho * a) + math.exp(p * (math.log(wp) - math.log(gap))))


def tail_interval(a: float, rho: float, p: float, wp: float) -> tuple[float, float]:
    err = tail_sandwich(a, rho, p, wp)
    c = float(std_normal_ccdf(a))
    return c - err, c + err


def lower_tail_interval(a: float, rho: float, p: float, wp: float) -> tuple[float, float]:
    """Interval for P(X < -a); derived by symmetry of the coupling argument."""
    return tail_interval(a, rho, p, wp)


def rho_select(a: float, wp: float) -> float:
    return 1.0 - math.e * wp / a


def p_near_constant(a: float, gamma: float) -> float:
    return 0.5 * a * a + math.log(1.0 / math.sqrt(gamma))


def p_moderate(a: float, D2: float) -> float:
    return a * a / (2.0 * math.e ** 2 * D2 ** 2)


def p_large(a: float, gamma: float, lam: float, D3: float) -> float:
    return (math.sqrt(lam) / (2 * math.e * D3)) * (a / math.sqrt(gamma)) * math.log1p(a * math.sqrt(gamma))
