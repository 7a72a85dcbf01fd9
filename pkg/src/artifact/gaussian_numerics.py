"""Standard normal primitives used by the bounds and the transport metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx, gammaln, ndtr, ndtri

from .model_core import ParamError

SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class MillsBracket:
    lower: float
    upper: float
    at: float


def std_normal_pdf(x):
    return np.exp(-0.5 * np.square(x)) / SQRT2PI


def std_normal_ccdf(x):
    """Upper tail P(Z > x); ndtr(-x) keeps full relative accuracy for x > 0."""
    return ndtr(-np.asarray(x, dtype=float)) if np.ndim(x) else float(ndtr(-float(x)))


def std_normal_cdf(x):
    return ndtr(x) if np.ndim(x) else float(ndtr(float(x)))


def std_normal_quantile(u):
    """Inverse cdf, polished by one Newton step on the cdf."""
    arr = np.asarray(u, dtype=float)
    if np.any((arr <= 0) | (arr >= 1)):
        raise ParamError("quantile argument must lie in (0, 1)")
    z = ndtri(arr)
    # Newton on whichever tail is smaller, to keep relative precision
    upper = arr > 0.5
    resid = np.where(upper, ndtr(-z) - (1.0 - arr), ndtr(z) - arr)
    resid = np.where(upper, -resid, resid)
    z = z - resid / std_normal_pdf(z)
    return z if np.ndim(u) else float(z)


def mills_bracket(a: float) -> MillsBracket:
    """Rational bounds on sqrt(2 pi) exp(a^2/2) P(Z > a) for a >= 0."""
    if a < 0:
        raise ParamError("mills_bracket needs a >= 0")
    return MillsBracket(105.0 / (91.0 + 110.0 * a), 44.0 / (35.0 + 28.0 * a), a)


def mills_ratio(a: float) -> float:
    return SQRT2PI * 0.5 * float(erfcx(a / math.sqrt(2.0)))


def gaussian_log_abs_moment(p: float) -> float:
    """log E|Z|^p."""
    return 0.5 * p * math.log(2.0) + float(gammaln(0.5 * (p + 1))) - 0.5 * math.log(math.pi)


def gaussian_lp_norm(p: float) -> float:
    if p < 1:
        raise ParamError(f"p must be >= 1, got {p}")
    return math.exp(gaussian_log_abs_moment(p) / p)


def hermite_lp_bound(k: int, p: float) -> float:
    """Bound sqrt(p)^k sqrt(k!) on the L^p norm of h_k(Z)."""
    if k < 0 or p < 1:
        raise ParamError("need k >= 0 and p >= 1")
    return math.exp(0.5 * k * math.log(p) + 0.5 * float(gammaln(k + 1)))


def log_hermite_lp_bound(k: int, p: float) -> float:
    return 0.5 * k * math.log(p) + 0.5 * float(gammaln(k + 1))
