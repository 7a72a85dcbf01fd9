"""Ground truth for join-the-shortest-queue: truncated exact solve, simulation, coupling."""
from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve
from scipy.special import logsumexp
from scipy.stats import t as student_t

from . import kernels
from .model_core import ParamError, QueueParams
from .ssq_exact import LatticePmf

MAX_STATES = 2_000_000
DIRECT_LIMIT = 300_000


@dataclass
class JointPmf:
    """Stationary law of the truncated chain on the box {0..cap}^n."""

    log_probs: np.ndarray
    cap: int
    residual: float
    leak: float
    params: QueueParams | None = None
    sweeps: int = 0

    @property
    def n(self) -> int:
        return self.log_probs.ndim

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def states(self) -> np.ndarray:
        """(N, n) integer states in the same order as ``log_probs.ravel()``."""
        grids = np.indices(self.log_probs.shape)
        return grids.reshape(self.n, -1).T

    def expect(self, f) -> float:
        """E f(q) with f mapping an (N, n) state array to N values."""
        return float(np.dot(self.probs.ravel(), f(self.states())))

    def marginal(self, i: int) -> np.ndarray:
        axes = tuple(k for k in range(self.n) if k != i)
        return self.probs.sum(axis=axes) if axes else self.probs.copy()

    def sum_marginal(self) -> LatticePmf:
        """Law of q_Sigma on {0..n cap} as a LatticePmf centred at (lam - mu)/gamma."""
        s = self.states().sum(axis=1)
        lp = self.log_probs.ravel()
        out = np.full(self.n * self.cap + 1, -np.inf)
        order = np.argsort(s, kind="stable")
        s, lp = s[order], lp[order]
        cuts = np.flatnonzero(np.diff(s)) + 1
        for grp_s, grp in zip(np.split(s, cuts), np.split(lp, cuts)):
            out[grp_s[0]] = logsumexp(grp)
        off, scale = 0.0, 1.0
        if self.params is not None:
            p = self.params
            off = (p.lam - p.mu) / p.gamma
            scale = math.sqrt(p.gamma / p.lam)
        return LatticePmf(out, off, scale, self.leak)

    def to_sparse_json(self, min_prob: float = 0.0) -> str:
        pr = self.probs.ravel()
        st = self.states()
        keep = pr > min_prob
        triplets = [[*map(int, s), float(v)] for s, v in zip(st[keep], pr[keep])]
        return json.dumps({"n": self.n, "cap": self.cap, "residual": self.residual,
                           "leak": self.leak, "entries": triplets})


def _transitions(params: QueueParams, cap: int, tie_rule: str = "lexicographic"):
    """(src, dst, rate) in-box transitions plus per-state dropped rate."""
    n = params.n
    shape = (cap + 1,) * n
    st = np.indices(shape).reshape(n, -1).T
    idx = np.arange(st.shape[0])
    strides = np.array([(cap + 1) ** (n - 1 - k) for k in range(n)])
    src, dst, rate = [], [], []
    if tie_rule == "lexicographic":
        star = np.argmin(st, axis=1)  # first minimum
        up_ok = st[idx, star] < cap
        src.append(idx[up_ok])
        dst.append(idx[up_ok] + strides[star[up_ok]])
        rate.append(np.full(up_ok.sum(), params.lam))
        dropped = np.where(up_ok, 0.0, params.lam)
    elif tie_rule == "uniform":
        # lam split evenly over all shortest queues
        is_min = st == st.min(axis=1, keepdims=True)
        share = params.lam / is_min.sum(axis=1)
        dropped = np.zeros(len(idx))
        for i in range(n):
            sel = is_min[:, i]
            ok = sel & (st[:, i] < cap)
            src.append(idx[ok])
            dst.append(idx[ok] + strides[i])
            rate.append(share[ok])
            dropped += np.where(sel & ~ok, share, 0.0)
    else:
        raise ParamError(f"unknown tie rule {tie_rule!r}")
    for i in range(n):
        busy = st[:, i] > 0
        src.append(idx[busy])
        dst.append(idx[busy] - strides[i])
        rate.append(params.mus[i] + params.gamma * st[busy, i])
    return np.concatenate(src), np.concatenate(dst), np.concatenate(rate), dropped, shape


def _initial_guess(params: QueueParams, shape) -> np.ndarray:
    # product of per-server birth-death laws with arrival rate lam/n
    from .ssq_exact import _log_weight_closed
    cap = shape[0] - 1
    k = np.arange(cap + 1, dtype=float)
    lp = np.zeros(shape)
    for i, m in enumerate(params.mus):
        w = _log_weight_closed(params.lam / params.n, m, params.gamma, k)
        w -= logsumexp(w)
        sh = [1] * params.n
        sh[i] = cap + 1
        lp = lp + w.reshape(sh)
    p = np.exp(lp.ravel())
    return p / p.sum()


def exact_stationary_small(params: QueueParams, cap: int, tol: float = 1e-10,
                           max_sweeps: int = 200_000,
                           tie_rule: str = "lexicographic") -> JointPmf:
    """Stationary law on the box with out-of-box transitions dropped.

    A sparse direct solve seeds Gauss-Seidel when the box is small enough;
    the sweeps then drive the max-norm balance residual below ``tol``.
    ``tie_rule="uniform"`` splits arrivals evenly among tied shortest queues,
    which makes the law exchangeable when the service rates are equal.
    """
    n = params.n
    if n > 3:
        raise ParamError(f"exact solve supports n <= 3, got {n}")
    if cap < 1:
        raise ParamError("cap must be >= 1")
    N = (cap + 1) ** n
    if N > MAX_STATES:
        raise ParamError(f"state budget exceeded: {N} > {MAX_STATES}")
    src, dst, rate, dropped, shape = _transitions(params, cap, tie_rule)
    out = np.bincount(src, weights=rate, minlength=N)
    if N <= DIRECT_LIMIT:
        Q = sparse.csr_matrix((rate, (dst, src)), shape=(N, N)) - sparse.diags(out)
        Q = Q.tolil()
        Q[0, :] = 1.0
        b = np.zeros(N)
        b[0] = 1.0
        pi = np.asarray(spsolve(Q.tocsc(), b), dtype=float)
        pi = np.clip(pi, 0.0, None)
        pi /= pi.sum()
    else:
        pi = _initial_guess(params, shape)
    order = np.argsort(dst, kind="stable")
    indptr = np.concatenate(([0], np.cumsum(np.bincount(dst, minlength=N)))).astype(np.int64)
    s_src = np.ascontiguousarray(src[order], dtype=np.int64)
    s_rate = np.ascontiguousarray(rate[order], dtype=float)
    pi = np.ascontiguousarray(pi, dtype=float)
    sweeps, resid = kernels.gauss_seidel(indptr, s_src, s_rate, out, pi, max_sweeps, tol, 5)
    if resid > tol:
        raise RuntimeError(f"Gauss-Seidel stalled at residual {resid:.3e} after {sweeps} sweeps")
    leak = float(np.dot(pi, dropped))
    with np.errstate(divide="ignore"):
        lp = np.log(pi).reshape(shape)
    return JointPmf(lp, cap, float(resid), leak, params, int(sweeps))


# --- simulation -------------------------------------------------------------

_EST_RE = re.compile(r"^(p_empty|zero_mass|mean:\d+|perp:[0-9.]+|qhat:[0-9.]+|tail:[-0-9.eE,+]+:[-0-9.eE+]+)$")


@dataclass(frozen=True)
class SimEstimate:
    value: float
    ci_halfwidth: float
    batches: int
    seed: int
    horizon: float
    burn_in: float


@dataclass
class SimulationResult:
    params: QueueParams
    seed: int
    horizon: float
    burn_in: float
    batches: int
    estimates: dict = field(default_factory=dict)
    backend: str = ""
    tie_rule: str = "lexicographic"

    def __getitem__(self, key: str) -> SimEstimate:
        return self.estimates[key]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["estimand", "value", "ci", "seed", "horizon", "burn_in"])
        for k, e in self.estimates.items():
            w.writerow([k, repr(e.value), repr(e.ci_halfwidth), e.seed, repr(e.horizon),
                        repr(e.burn_in)])
        return buf.getvalue()


def tail_estimand(phi, a: float) -> str:
    return "tail:" + ",".join(repr(float(v)) for v in phi) + ":" + repr(float(a))


def _parse(estimands, n: int):
    perp, qs, tails, keys = [], [], [], []
    for e in estimands:
        if not isinstance(e, str) or not _EST_RE.match(e):
            raise ParamError(f"unknown estimand {e!r}")
        kind, _, rest = e.partition(":")
        if kind in ("perp", "qhat"):
            p = float(rest)
            if not 0 < p <= 64:
                raise ParamError(f"moment order {p} outside (0, 64]")
            (perp if kind == "perp" else qs).append(p)
        elif kind == "mean":
            if int(rest) >= n:
                raise ParamError(f"server index {rest} out of range")
        elif kind == "tail":
            vec, _, a = rest.rpartition(":")
            phi = np.array([float(v) for v in vec.split(",")])
            _check_unit(phi, n)
            tails.append((phi, float(a)))
        keys.append(e)
    return keys, perp, qs, tails


def _check_unit(phi: np.ndarray, n: int) -> None:
    if phi.shape != (n,):
        raise ParamError(f"phi must have length {n}")
    if abs(float(np.linalg.norm(phi)) - 1.0) > 1e-12:
        raise ParamError("phi must be a unit vector (within 1e-12)")


def _rng(seed: int, stream: int) -> np.random.Generator:
    # counter-based generator; one spawned child per subsystem
    child = np.random.SeedSequence(seed).spawn(stream + 1)[stream]
    return np.random.Generator(np.random.Philox(child))


STREAM_SIM, STREAM_COUPLING = 0, 1


def simulate_stationary(params: QueueParams, horizon: float, burn_in: float, seed: int,
                        estimands, batches: int = 30, block: int = 1 << 15,
                        backend: str | None = None,
                        tie_rule: str = "lexicographic") -> SimulationResult:
    """Event-driven simulation with batch-means confidence intervals.

    Estimands: ``p_empty`` (P(sum q = 0)), ``zero_mass`` (sum_i P(q_i = 0)),
    ``mean:i``, ``perp:p`` (E ||q_perp||^p), ``qhat:p`` (E |q_sum - (lam-mu)/gamma|^p)
    and ``tail:phi_1,..,phi_n:a`` (P(<q_tilde, phi> > a)).
    """
    if not horizon > burn_in > 0:
        raise ParamError("need horizon > burn_in > 0")
    if batches < 30:
        raise ParamError("batch means need at least 30 batches")
    if tie_rule not in ("lexicographic", "uniform"):
        raise ParamError(f"unknown tie rule {tie_rule!r}")
    n = params.n
    keys, perp, qs, tails = _parse(estimands, n)
    kern = kernels if backend is None else kernels.get(backend)
    nfeat = 2 + n + len(perp) + len(qs) + len(tails)
    acc = np.zeros((batches, nfeat))
    batch_len = (horizon - burn_in) / batches
    lam, mu, g = params.lam, params.mu, params.gamma
    center = (lam - mu) / (n * g)
    q = np.full(n, max(int(round(center)), 0), dtype=np.int64)
    mus = np.asarray(params.mus, dtype=float)
    phi = np.array([t[0] for t in tails], dtype=float).reshape(len(tails), n)
    thr = np.array([t[1] for t in tails], dtype=float)
    pp, ps = np.asarray(perp, dtype=float), np.asarray(qs, dtype=float)
    scale = n * math.sqrt(g) / math.sqrt(lam)
    rng = _rng(seed, STREAM_SIM)
    t, done = 0.0, False
    while not done:
        u = 1.0 - rng.random(2 * block)  # (0, 1]
        t, _, done = kern.simulate_jsq(lam, mus, g, q, t, horizon, u, burn_in, batch_len,
                                       acc, pp, ps, phi, thr, (lam - mu) / g, scale, center,
                                       int(tie_rule == "uniform"))
    means = acc / batch_len
    tq = float(student_t.ppf(0.975, batches - 1))

    def est(col: np.ndarray) -> SimEstimate:
        sd = float(np.std(col, ddof=1))
        return SimEstimate(float(np.mean(col)), tq * sd / math.sqrt(batches), batches,
                           seed, horizon, burn_in)

    res = SimulationResult(params, seed, horizon, burn_in, batches,
                           backend=backend or kernels.BACKEND, tie_rule=tie_rule)
    ip, iq, it = 2 + n, 2 + n + len(perp), 2 + n + len(perp) + len(qs)
    jp = jq = jt = 0
    for k in keys:
        kind, _, rest = k.partition(":")
        if kind == "p_empty":
            col = means[:, 0]
        elif kind == "zero_mass":
            col = means[:, 1]
        elif kind == "mean":
            col = means[:, 2 + int(rest)]
        elif kind == "perp":
            col, jp = means[:, ip + jp], jp + 1
        elif kind == "qhat":
            col, jq = means[:, iq + jq], jq + 1
        else:
            col, jt = means[:, it + jt], jt + 1
        res.estimates[k] = est(col)
    return res


def projected_tail(source, phi, a: float, params: QueueParams | None = None) -> float:
    """P(<q_tilde, phi> > a), q_tilde = (n sqrt(gamma)/sqrt(lam)) (q - (lam - mu)/(n gamma) 1).

    ``source`` is a JointPmf (exact sum) or a SimulationResult (a fresh run
    with the same seed, horizon and burn-in estimates the frequency).
    """
    phi = np.asarray(phi, dtype=float)
    if isinstance(source, JointPmf):
        params = params or source.params
        if params is None:
            raise ParamError("params required")
        _check_unit(phi, params.n)
        n, lam, g = params.n, params.lam, params.gamma
        scale = n * math.sqrt(g) / math.sqrt(lam)
        center = (lam - params.mu) / (n * g)
        # elementwise products, not matmul: FMA in BLAS leaves ulp noise on ties
        proj = ((scale * (source.states() - center)) * phi).sum(axis=1)
        pr = source.probs.ravel()
        return float(min(pr[proj > a].sum(), 1.0))
    if isinstance(source, SimulationResult):
        _check_unit(phi, source.params.n)
        key = tail_estimand(phi, a)
        if key not in source.estimates:
            extra = simulate_stationary(source.params, source.horizon, source.burn_in,
                                        source.seed, [key], source.batches,
                                        tie_rule=source.tie_rule)
            source.estimates[key] = extra[key]
        return source.estimates[key].value
    raise ParamError("source must be a JointPmf or SimulationResult")


# --- pathwise coupling --------------------------------------------------------

class CouplingViolation(AssertionError):
    def __init__(self, report: "CouplingReport"):
        super().__init__(f"label-set inclusion broken at epoch {report.first_violation} "
                         f"({report.violations} violating epochs)")
        self.report = report


@dataclass(frozen=True)
class CouplingReport:
    epochs: int
    violations: int
    first_violation: int
    jsq_vs_infinite_mismatch: int
    max_population: int
    final_sizes: tuple
    seed: int


def coupling_dominance(params: QueueParams, horizon: int, seed: int,
                       backend: str | None = None, strict: bool = True) -> CouplingReport:
    """Pooled single server, JSQ and the service-free system on one event stream.

    ``horizon`` counts event epochs. Each epoch draws the event type (arrival,
    patience expiry of a uniformly chosen live customer, or a service event
    split by mu_i/mu); inclusion of the three label sets is checked after
    every epoch and once more exhaustively at the end.
    """
    horizon = int(horizon)
    if horizon <= 0:
        raise ParamError("horizon must be positive")
    kern = kernels if backend is None else kernels.get(backend)
    u = _rng(seed, STREAM_COUPLING).random(2 * horizon)
    stats = np.zeros(8, dtype=np.int64)
    kern.coupling_run(params.lam, np.asarray(params.mus, dtype=float), params.gamma, u, stats)
    s = [int(v) for v in stats]
    rep = CouplingReport(s[0], s[1], s[2], s[3], s[4], (s[5], s[6], s[7]), seed)
    if strict and rep.violations:
        raise CouplingViolation(rep)
    return rep
