"""Sweeps over parameter grids, bound-vs-truth tables and phase-diagram data."""
from __future__ import annotations

import csv
import io
import json
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Any, Iterable

import numpy as np
from scipy.special import log_ndtr

from . import jsq_bounds, ssq_bounds, ssq_exact
from .jsq_engine import exact_stationary_small, projected_tail, simulate_stationary, tail_estimand
from .model_core import ParamError, QueueParams
from .ssq_bounds import _exp
from .stein_certificate import certificate_bound
from .wasserstein_metrics import wp_lattice_vs_gaussian

SSQ_KINDS = ("p0", "lp_norm", "mgf", "wp", "tail", "certificate")
JSQ_KINDS = ("ssc", "zero_mass_sum", "p_empty", "qsum_lp", "wp_jsq", "tail_jsq",
             "certificate")
# which grid each report kind ranges over
KIND_AXIS = {"p0": None, "zero_mass_sum": None, "p_empty": None,
             "lp_norm": "p", "wp": "p", "certificate": "p", "ssc": "p", "qsum_lp": "p",
             "wp_jsq": "p", "mgf": "theta", "tail": "a", "tail_jsq": "a"}

COLUMNS = ("index", "model", "kind", "gamma", "p", "theta", "a", "delta", "D", "phi",
           "truth", "truth_ci", "lower", "upper", "regime", "valid", "contains", "aux")
PHASE_COLUMNS = ("delta", "D", "gamma", "a", "log_prob", "normalization",
                 "empirical_exponent", "bound_exponent_upper", "bound_exponent_lower")

EXACT_MAX_N = 3


@dataclass
class SweepConfig:
    model: str
    params: dict
    gamma_grid: list
    outputs: list
    p_grid: list | None = None
    theta_grid: list | None = None
    a_grid: list | None = None
    delta_grid: list | None = None
    D_grid: list | None = None
    phi: list | None = None
    estimator: dict = field(default_factory=lambda: {"kind": "exact"})
    seed: int = 0
    format: str = "csv"
    cap: int = 60
    workers: int = 1

    def __post_init__(self):
        if self.model not in ("ssq", "jsq"):
            raise ParamError(f"model must be ssq or jsq, got {self.model!r}")
        kinds = SSQ_KINDS if self.model == "ssq" else JSQ_KINDS
        if not self.outputs:
            raise ParamError("outputs must be non-empty")
        bad = [k for k in self.outputs if k not in kinds]
        if bad:
            raise ParamError(f"unknown {self.model} report kinds {bad}")
        for name in ("gamma_grid", "p_grid", "theta_grid", "a_grid", "delta_grid", "D_grid"):
            grid = getattr(self, name)
            if grid is not None and len(grid) == 0:
                raise ParamError(f"{name} must be non-empty")
        if self.gamma_grid is None:
            raise ParamError("gamma_grid is required")
        if self.a_grid is not None and self.delta_grid is not None:
            raise ParamError("give a_grid or delta_grid, not both")
        axes = {KIND_AXIS[k] for k in self.outputs}
        if "p" in axes and self.p_grid is None:
            raise ParamError("p_grid required by the requested outputs")
        if "theta" in axes and self.theta_grid is None:
            raise ParamError("theta_grid required by the requested outputs")
        if "a" in axes and self.a_grid is None and self.delta_grid is None:
            raise ParamError("a_grid or delta_grid required by the requested outputs")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ParamError("seed must be an unsigned 64-bit integer")
        if self.format not in ("csv", "json"):
            raise ParamError("format must be csv or json")
        est = self.estimator.get("kind", "exact")
        if est not in ("exact", "simulate"):
            raise ParamError(f"estimator must be exact or simulate, got {est!r}")
        tmpl = self.template()
        if self.model == "ssq" and tmpl.n != 1:
            raise ParamError("ssq sweeps need a single service rate")
        if est == "exact" and tmpl.n > EXACT_MAX_N:
            raise ParamError(f"exact estimator supports n <= {EXACT_MAX_N}, got n = {tmpl.n}")
        if est == "simulate":
            if self.model != "jsq":
                raise ParamError("simulate estimator is only offered for jsq")
            for key in ("horizon", "burn_in"):
                if key not in self.estimator:
                    raise ParamError(f"simulate estimator needs {key}")
        if "tail_jsq" in self.outputs and self.phi is None:
            self.phi = [list(np.ones(tmpl.n) / math.sqrt(tmpl.n))]

    def template(self) -> QueueParams:
        d = dict(self.params)
        d.setdefault("gamma", self.gamma_grid[0] if self.gamma_grid else 1.0)
        return QueueParams.from_dict(d)

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ParamError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path) -> "SweepConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _deviations(cfg: SweepConfig, gamma: float) -> list[tuple[float, float | None, float | None]]:
    """(a, delta, D) triples; with a delta grid, a = D * gamma^{-delta}."""
    if cfg.a_grid is not None:
        return [(float(a), None, None) for a in cfg.a_grid]
    Ds = cfg.D_grid or [1.0]
    return [(float(D) * gamma ** (-float(dl)), float(dl), float(D))
            for dl, D in product(cfg.delta_grid, Ds)]


def _points(cfg: SweepConfig) -> list[dict]:
    pts = []
    for g in cfg.gamma_grid:
        for kind in cfg.outputs:
            axis = KIND_AXIS[kind]
            if axis is None:
                pts.append({"gamma": float(g), "kind": kind})
            elif axis == "p":
                pts += [{"gamma": float(g), "kind": kind, "p": float(p)} for p in cfg.p_grid]
            elif axis == "theta":
                pts += [{"gamma": float(g), "kind": kind, "theta": float(t)}
                        for t in cfg.theta_grid]
            else:
                phis = cfg.phi if kind == "tail_jsq" else [None]
                for phi in phis:
                    for a, dl, D in _deviations(cfg, float(g)):
                        pts.append({"gamma": float(g), "kind": kind, "a": a, "delta": dl,
                                    "D": D, "phi": phi})
    for i, pt in enumerate(pts):
        pt["index"] = i
    return pts


class _Truth:
    """Caches the per-gamma ground truth object (pmf, joint pmf, simulations)."""

    def __init__(self, cfg: SweepConfig):
        self.cfg = cfg
        self.est = cfg.estimator.get("kind", "exact")
        self._cache: dict = {}
        self._lock = threading.Lock()

    def _cached(self, key, build):
        with self._lock:
            if key not in self._cache:
                self._cache[key] = build()
            return self._cache[key]

    def params(self, gamma: float) -> QueueParams:
        return self.cfg.template().with_gamma(gamma)

    def ssq_pmf(self, gamma: float):
        p = self.params(gamma)
        if p.n != 1:
            p = QueueParams(p.lam, (p.mu,), gamma, p.C, p.alpha, p.epsilon)
        return self._cached(("ssq", gamma), lambda: ssq_exact.stationary_pmf(p))

    def joint(self, gamma: float):
        return self._cached(("jsq", gamma), lambda: exact_stationary_small(
            self.params(gamma), int(self.cfg.cap)))

    def simulate(self, gamma: float, estimands: list[str]) -> tuple[float, float]:
        e = self.cfg.estimator
        seeds = e.get("seeds") or [int(self.cfg.seed)]
        vals, cis = [], []
        for s in seeds:
            r = simulate_stationary(self.params(gamma), float(e["horizon"]),
                                    float(e["burn_in"]), int(s), estimands,
                                    batches=int(e.get("batches", 30)),
                                    tie_rule=e.get("tie_rule", "lexicographic"))
            vals.append([r[k].value for k in estimands])
            cis.append([r[k].ci_halfwidth for k in estimands])
        v = np.mean(vals, axis=0)
        c = np.sqrt(np.sum(np.square(cis), axis=0)) / len(seeds)
        return v, c


def _ssq_row(pt: dict, truth: _Truth) -> tuple[float, float, Any]:
    g, kind = pt["gamma"], pt["kind"]
    params = truth.params(g)
    pmf = truth.ssq_pmf(g)
    c = (params.lam - params.mu) / g
    if kind == "p0":
        return ssq_exact.prob_empty(pmf), pmf.truncation_tail, ssq_bounds.p0_bounds(params)
    if kind == "lp_norm":
        p = pt["p"]
        return ssq_exact.moment_lp(pmf, c, p), 0.0, ssq_bounds.lp_norm_bounds(params, p)
    if kind == "mgf":
        th = pt["theta"]
        return ssq_exact.mgf(pmf, th, c), 0.0, ssq_bounds.mgf_envelope(params, th)
    if kind == "wp":
        w = wp_lattice_vs_gaussian(pmf, pt["p"])
        return w.value, w.quad_error, ssq_bounds.wp_bounds(params, pt["p"])
    if kind == "tail":
        t = ssq_exact.tail_prob(pmf, pt["a"])
        return t.value, t.uncertainty, ssq_bounds.tail_bounds(params, pt["a"])
    if kind == "certificate":
        w = wp_lattice_vs_gaussian(pmf, pt["p"])
        return w.value, w.quad_error, certificate_bound(params, pt["p"], pmf=pmf)
    raise ParamError(kind)


def _jsq_bound(params: QueueParams, pt: dict):
    kind = pt["kind"]
    if kind == "ssc":
        return jsq_bounds.ssc_bound(params, pt["p"])
    if kind in ("zero_mass_sum", "p_empty"):
        z, e = jsq_bounds.zero_mass_bounds(params)
        return z if kind == "zero_mass_sum" else e
    if kind == "qsum_lp":
        return jsq_bounds.qsum_moment_bounds(params, pt["p"])
    if kind == "wp_jsq":
        return jsq_bounds.wp_jsq_bounds(params, pt["p"])
    if kind == "tail_jsq":
        return jsq_bounds.jsq_tail_bounds(params, pt["phi"], pt["a"])
    raise ParamError(kind)


def _sim_estimand(pt: dict, n: int) -> str | None:
    kind = pt["kind"]
    if kind == "ssc":
        return f"perp:{pt['p']:g}"
    if kind == "qsum_lp":
        return f"qhat:{pt['p']:g}"
    if kind == "zero_mass_sum":
        return "zero_mass"
    if kind == "p_empty":
        return "p_empty"
    if kind == "tail_jsq":
        return tail_estimand(pt["phi"], pt["a"])
    return None


def _jsq_row(pt: dict, truth: _Truth) -> tuple[float, float, Any]:
    g, kind = pt["gamma"], pt["kind"]
    params = truth.params(g)
    if kind == "certificate":
        if truth.est != "exact":
            raise ParamError("the jsq certificate needs the exact estimator")
        if params.n == 1:
            pmf = truth.ssq_pmf(g)
            w = wp_lattice_vs_gaussian(pmf, pt["p"])
            return w.value, w.quad_error, certificate_bound(params, pt["p"], pmf=pmf)
        j = truth.joint(g)
        w = wp_lattice_vs_gaussian(j.sum_marginal(), pt["p"])
        return w.value, w.quad_error, certificate_bound(params, pt["p"], pmf=j, model="jsq_sum")
    bound = _jsq_bound(params, pt)
    if truth.est == "simulate":
        est = _sim_estimand(pt, params.n)
        if est is None:
            return math.nan, math.nan, bound
        v, c = truth.simulate(g, [est])
        v, c = float(v[0]), float(c[0])
        if kind in ("ssc", "qsum_lp"):
            p = pt["p"]
            # delta method for the p-th root
            return v ** (1 / p), (c / (p * v ** (1 - 1 / p)) if v > 0 else math.nan), bound
        return v, c, bound
    if params.n == 1:
        # the one-server JSQ chain is the birth-death chain; use its exact solver
        pmf = truth.ssq_pmf(g)
        c0 = (params.lam - params.mu) / g
        if kind == "ssc":
            return 0.0, 0.0, bound
        if kind == "zero_mass_sum" or kind == "p_empty":
            return ssq_exact.prob_empty(pmf), pmf.truncation_tail, bound
        if kind == "qsum_lp":
            return ssq_exact.moment_lp(pmf, c0, pt["p"]), 0.0, bound
        if kind == "wp_jsq":
            w = wp_lattice_vs_gaussian(pmf, pt["p"])
            return w.value, w.quad_error, bound
        if float(pt["phi"][0]) > 0:
            t = ssq_exact.tail_prob(pmf, pt["a"])
            return t.value, t.uncertainty, bound
        # P(q_tilde < -a) = P(q <= ceil(thr) - 1)
        thr = pmf.offset - pt["a"] / pmf.scale
        below = -math.expm1(ssq_exact.log_tail(pmf, math.ceil(thr) - 1))
        return below, pmf.truncation_tail, bound
    j = truth.joint(g)
    c0 = (params.lam - params.mu) / g
    if kind == "ssc":
        p = pt["p"]
        v = j.expect(lambda s: np.linalg.norm(s - s.mean(axis=1, keepdims=True), axis=1) ** p)
        return v ** (1 / p), j.leak, bound
    if kind == "zero_mass_sum":
        return float(sum(j.marginal(i)[0] for i in range(params.n))), j.leak, bound
    if kind == "p_empty":
        return float(j.probs.flat[0]), j.leak, bound
    if kind == "qsum_lp":
        p = pt["p"]
        return j.expect(lambda s: np.abs(s.sum(axis=1) - c0) ** p) ** (1 / p), j.leak, bound
    if kind == "wp_jsq":
        w = wp_lattice_vs_gaussian(j.sum_marginal(), pt["p"])
        return w.value, w.quad_error, bound
    return projected_tail(j, pt["phi"], pt["a"]), j.leak, bound


def _fmt_phi(phi) -> str:
    return "" if phi is None else ";".join(repr(float(x)) for x in phi)


def _evaluate(pt: dict, cfg: SweepConfig, truth: _Truth) -> dict:
    try:
        if cfg.model == "ssq":
            val, ci, rep = _ssq_row(pt, truth)
        else:
            val, ci, rep = _jsq_row(pt, truth)
    except Exception as exc:
        where = {k: pt.get(k) for k in ("index", "kind", "gamma", "p", "theta", "a")}
        raise RuntimeError(f"grid point {where} failed: {exc}") from exc
    slack = ci if (math.isfinite(ci) and cfg.estimator.get("kind") == "simulate") else 0.0
    contains = bool(math.isfinite(val) and rep.contains(val, slack))
    return {
        "index": pt["index"], "model": cfg.model, "kind": pt["kind"], "gamma": pt["gamma"],
        "p": pt.get("p"), "theta": pt.get("theta"), "a": pt.get("a"),
        "delta": pt.get("delta"), "D": pt.get("D"), "phi": _fmt_phi(pt.get("phi")),
        "truth": float(val), "truth_ci": float(ci), "lower": float(rep.lower),
        "upper": float(rep.upper), "regime": rep.regime, "valid": bool(rep.valid),
        "contains": contains, "aux": _jsonable(rep.aux),
    }


def _jsonable(d: dict) -> dict:
    out = {}
    for k in sorted(d):
        v = d[k]
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        if isinstance(v, float) and not math.isfinite(v):
            v = repr(v)
        out[k] = v
    return out


def run_sweep(config: SweepConfig | dict) -> list[dict]:
    """One row per (grid point x report kind), sorted by grid index."""
    cfg = config if isinstance(config, SweepConfig) else SweepConfig.from_dict(config)
    truth = _Truth(cfg)
    pts = _points(cfg)
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            rows = list(pool.map(lambda pt: _evaluate(pt, cfg, truth), pts))
    else:
        rows = [_evaluate(pt, cfg, truth) for pt in pts]
    rows.sort(key=lambda r: r["index"])
    return rows


def _normalization(delta: float, a: float, params: QueueParams) -> tuple[str, float]:
    if delta == 0:
        return "gaussian_ratio", math.nan
    if delta <= 0.5:
        return "a2_over_2", a * a / 2
    ap = a * math.sqrt(params.lam / params.gamma)
    return "poisson", ap * math.log1p(a * math.sqrt(params.gamma / params.lam))


def phase_diagram(config: SweepConfig | dict) -> list[dict]:
    """Normalised tail exponents on a (delta, D, gamma) grid, with a = D gamma^{-delta}.

    For delta = 0 the exponent columns hold the raw ratio P(q_tilde > a)/Phi^c(a)
    (and the bound columns the same ratio for the lower/upper bound).
    """
    cfg = config if isinstance(config, SweepConfig) else SweepConfig.from_dict(config)
    if cfg.model != "ssq" or cfg.estimator.get("kind", "exact") != "exact":
        raise ParamError("phase diagram needs model=ssq with the exact estimator")
    if cfg.delta_grid is None:
        raise ParamError("phase diagram needs delta_grid")
    truth = _Truth(cfg)
    rows = []
    for dl, D in product(cfg.delta_grid, cfg.D_grid or [1.0]):
        for g in cfg.gamma_grid:
            dl, D, g = float(dl), float(D), float(g)
            params = truth.params(g)
            a = D * g ** (-dl)
            lp = ssq_exact.log_tail_prob(truth.ssq_pmf(g), a)
            rep = ssq_bounds.tail_bounds(params, a)
            name, norm = _normalization(dl, a, params)
            lo, hi = max(rep.lower, 0.0), min(rep.upper, 1.0)
            if name == "gaussian_ratio":
                ref = float(log_ndtr(-a))
                emp = _exp(lp - ref)
                b_up = _exp(math.log(hi) - ref) if hi > 0 else 0.0
                b_lo = _exp(math.log(lo) - ref) if lo > 0 else 0.0
            else:
                emp = -lp / norm
                b_up = -math.log(lo) / norm if lo > 0 else math.inf
                b_lo = -math.log(hi) / norm if hi > 0 else math.inf
            rows.append({"delta": dl, "D": D, "gamma": g, "a": a, "log_prob": lp,
                         "normalization": name, "empirical_exponent": emp,
                         "bound_exponent_upper": b_up, "bound_exponent_lower": b_lo})
    return rows


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, dict):
        return json.dumps(v, sort_keys=True, allow_nan=True)
    return str(v)


def emit(rows: Iterable[dict], fmt: str = "csv", path: str | Path | None = None,
         columns: tuple[str, ...] | None = None) -> str:
    """Render rows as CSV (stable header, shortest round-trip floats) or JSON records."""
    rows = list(rows)
    if columns is None:
        columns = tuple(rows[0]) if rows else COLUMNS
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns])
        text = buf.getvalue()
    elif fmt == "json":
        recs = [{c: _json_value(r.get(c)) for c in columns} for r in rows]
        text = json.dumps(recs, indent=1) + "\n"
    else:
        raise ParamError(f"format must be csv or json, got {fmt!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v
