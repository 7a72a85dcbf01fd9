"""Exact stationary law of the M/M/1+M birth-death chain, in log space."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import poisson

from .model_core import ParamError, QueueParams


@dataclass(frozen=True)
class LatticePmf:
    """Pmf on {0..K} with the affine map x -> (x - offset) * scale."""

    log_probs: np.ndarray
    offset: float = 0.0
    scale: float = 1.0
    truncation_tail: float = 0.0
    # (lam, mu, gamma) when the pmf is a birth-death law that can be
    # continued past K in closed form; None for generic lattices
    rates: tuple | None = None

    @property
    def size(self) -> int:
        return len(self.log_probs)

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def support(self) -> np.ndarray:
        """Normalized lattice points (k - offset) * scale."""
        return (np.arange(self.size) - self.offset) * self.scale

    def to_json(self) -> str:
        return json.dumps({"offset": self.offset, "scale": self.scale,
                           "log_probs": [float(v) for v in self.log_probs],
                           "truncation_tail": self.truncation_tail})

    @classmethod
    def from_json(cls, text: str) -> "LatticePmf":
        d = json.loads(text)
        return cls(np.asarray(d["log_probs"], dtype=float), d["offset"],
                   d["scale"], d["truncation_tail"])

    @classmethod
    def point_mass(cls, at: int = 0) -> "LatticePmf":
        lp = np.full(at + 1, -np.inf)
        lp[at] = 0.0
        return cls(lp, 0.0, 1.0, 0.0)


class TailProb(NamedTuple):
    value: float
    uncertainty: float


def _log_weights(params: QueueParams, K: int) -> np.ndarray:
    # log w_i = sum_{j<=i} [log lam - log(mu + gamma j)]
    j = np.arange(1, K + 1, dtype=float)
    steps = math.log(params.lam) - np.log(params.mus[0] + params.gamma * j)
    return np.concatenate(([0.0], np.cumsum(steps)))


def truncation_level(lam: float, gamma: float, tol: float) -> int:
    """Smallest K with P(Poisson(lam/gamma) > K) <= tol."""
    b = lam / gamma
    K = max(int(poisson.isf(tol, b)), 1)
    log_tol = math.log(tol)
    while poisson.logsf(K, b) > log_tol:
        K += 1 + K // 100
    return K


def stationary_pmf(params: QueueParams, tol: float = 1e-12,
                   min_support: int = 0) -> LatticePmf:
    """Stationary pmf of the single-server queue, truncated at Poisson dominance.

    The queue is stochastically dominated by the infinite-server system, whose
    stationary law is Poisson(lam/gamma); its tail beyond K bounds the mass
    dropped by truncation.
    """
    if params.n != 1:
        raise ParamError("stationary_pmf needs n = 1")
    if not 0 < tol <= 1e-3:
        raise ParamError(f"tol must lie in (0, 1e-3], got {tol}")
    K = max(truncation_level(params.lam, params.gamma, tol), min_support)
    lw = _log_weights(params, K)
    mu = params.mus[0]
    # normaliser includes the discarded tail, continued in closed form
    log_z = float(logsumexp(lw))
    start = K + 1
    while True:
        idx = np.arange(start, start + 256, dtype=float)
        block = _log_weight_closed(params.lam, mu, params.gamma, idx)
        log_z = float(np.logaddexp(log_z, logsumexp(block)))
        if block[-1] < log_z - 50.0:
            break
        start += 256
    lp = lw - log_z
    tail = float(np.exp(poisson.logsf(K, params.lam / params.gamma)))
    return LatticePmf(lp, (params.lam - mu) / params.gamma,
                      math.sqrt(params.gamma / params.lam), tail,
                      (params.lam, mu, params.gamma))


def _log_weight_closed(lam: float, mu: float, g: float, i: np.ndarray) -> np.ndarray:
    # closed form of the recursion, valid for every i >= 0
    r = mu / g
    return i * math.log(lam / g) + gammaln(1.0 + r) - gammaln(i + 1.0 + r)


def _continued(pmf: LatticePmf, log_f, chunk: int = 512):
    """Yield (k, log pi_k + log_f(k)) blocks, continuing past the stored support.

    Past K the terms use the closed-form weights normalised by the stored
    log-normaliser; the stream stops once a block falls 50 nats below the
    running total and the integrand is decreasing.
    """
    k = np.arange(pmf.size, dtype=float)
    head = pmf.log_probs + log_f(k)
    yield head
    if pmf.rates is None:
        return
    lam, mu, g = pmf.rates
    log_z = -float(pmf.log_probs[0])
    total = float(logsumexp(head))
    start = pmf.size
    while True:
        idx = np.arange(start, start + chunk, dtype=float)
        block = _log_weight_closed(lam, mu, g, idx) - log_z + log_f(idx)
        yield block
        total = float(np.logaddexp(total, logsumexp(block)))
        if block[-1] < total - 50.0 and block[-1] <= block[-2]:
            return
        start += chunk
        if start > 1e8:
            raise RuntimeError("series continuation did not converge")


def _log_expect(pmf: LatticePmf, log_f) -> float:
    blocks = list(_continued(pmf, log_f))
    return float(logsumexp(np.concatenate(blocks)))


def log_tail(pmf: LatticePmf, threshold: float) -> float:
    """log P(q > threshold) on the raw lattice, by exact series summation.

    For birth-death pmfs the sum runs past the stored support using the
    closed-form weights, so large-deviation thresholds stay exact.
    """
    k0 = math.floor(threshold) + 1
    if k0 <= 0:
        return float(np.log1p(-pmf.truncation_tail)) if pmf.rates is None else 0.0
    if pmf.rates is None and k0 >= pmf.size:
        return -math.inf
    lam, mu, g = pmf.rates if pmf.rates is not None else (None, None, None)
    if k0 < pmf.size:
        head = float(logsumexp(pmf.log_probs[k0:]))
        if pmf.rates is None:
            return head
        start = pmf.size
    else:
        head, start = -math.inf, k0
    log_z = -float(pmf.log_probs[0])
    total = head
    while True:
        idx = np.arange(start, start + 256, dtype=float)
        block = _log_weight_closed(lam, mu, g, idx) - log_z
        total = float(np.logaddexp(total, logsumexp(block)))
        if block[-1] < total - 50.0 and block[-1] <= block[-2]:
            return total
        start += 256


def tail_prob(pmf: LatticePmf, a: float, normalized: bool = True) -> TailProb:
    """P(q > a) (raw) or P((q - offset) * scale > a) with truncation slack."""
    thr = pmf.offset + a / pmf.scale if normalized else a
    val = math.exp(log_tail(pmf, thr))
    return TailProb(min(val, 1.0), pmf.truncation_tail)


def log_tail_prob(pmf: LatticePmf, a: float, normalized: bool = True) -> float:
    thr = pmf.offset + a / pmf.scale if normalized else a
    return log_tail(pmf, thr)


def moment_lp(pmf: LatticePmf, center: float, p: float) -> float:
    """(sum_i pi_i |i - center|^p)^(1/p) on the raw lattice."""
    if p < 1:
        raise ParamError(f"p must be >= 1, got {p}")
    with np.errstate(divide="ignore"):
        log_m = _log_expect(pmf, lambda k: p * np.log(np.abs(k - center)))
    return float(np.exp(log_m / p))


def mean(pmf: LatticePmf) -> float:
    with np.errstate(divide="ignore"):
        return math.exp(_log_expect(pmf, np.log))


def mgf(pmf: LatticePmf, theta: float, center: float = 0.0) -> float:
    """log E[exp(theta (q - center))], continued past K when possible."""
    return _log_expect(pmf, lambda k: theta * (k - center))


def prob_empty(pmf: LatticePmf) -> float:
    return float(np.exp(pmf.log_probs[0]))


def total_variation(a: np.ndarray, b: np.ndarray) -> float:
    n = max(len(a), len(b))
    pa = np.zeros(n)
    pb = np.zeros(n)
    pa[:len(a)] = a
    pb[:len(b)] = b
    return 0.5 * float(np.abs(pa - pb).sum())
