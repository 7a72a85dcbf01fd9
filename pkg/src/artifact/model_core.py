"""Queue parameters, regime diagnostics and transition-rate enumeration.

Two models live here: the single-server queue with abandonment (M/M/1+M)
and join-the-shortest-queue (JSQ) over ``n`` heterogeneous servers. Both are
CTMCs with unbounded state; rates are enumerated per state.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, NamedTuple, Sequence


class ParamError(ValueError):
    """Raised when parameters violate a hard invariant."""


@dataclass(frozen=True)
class QueueParams:
    lam: float
    mus: tuple[float, ...]
    gamma: float
    C: float = 1.5
    alpha: float = 0.0
    epsilon: float | None = None

    def __post_init__(self):
        mus = self.mus
        if isinstance(mus, (int, float)):
            mus = (float(mus),)
        mus = tuple(float(m) for m in mus)
        object.__setattr__(self, "mus", mus)
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", 0.1 * (0.5 - self.alpha))
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ParamError(f"lambda must be positive, got {self.lam}")
        if len(mus) < 1:
            raise ParamError("mus must be non-empty")
        # mu = 0 is tolerated: it is the M/M/inf degeneration
        if any(m < 0 or not math.isfinite(m) for m in mus):
            raise ParamError(f"service rates must be >= 0, got {mus}")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ParamError(f"gamma must be positive, got {self.gamma}")
        if not self.C > 0:
            raise ParamError(f"C must be positive, got {self.C}")
        if not 0 <= self.alpha < 0.5:
            raise ParamError(f"alpha must lie in [0, 1/2), got {self.alpha}")
        if not 0 < self.epsilon < 0.5 - self.alpha:
            raise ParamError(
                f"epsilon must lie in (0, 1/2 - alpha), got {self.epsilon}")

    @property
    def n(self) -> int:
        return len(self.mus)

    @property
    def mu(self) -> float:
        return float(sum(self.mus))

    def with_gamma(self, gamma: float) -> "QueueParams":
        return replace(self, gamma=gamma)

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "mus": list(self.mus), "gamma": self.gamma,
                "C": self.C, "alpha": self.alpha, "epsilon": self.epsilon}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "QueueParams":
        unknown = set(d) - {"lambda", "mus", "gamma", "C", "alpha", "epsilon"}
        if unknown:
            raise ParamError(f"unknown parameter keys: {sorted(unknown)}")
        try:
            lam, mus, gamma = d["lambda"], d["mus"], d["gamma"]
        except KeyError as exc:
            raise ParamError(f"missing parameter {exc}") from None
        if isinstance(mus, (int, float)):
            mus = (mus,)
        return cls(lam=float(lam), mus=tuple(mus), gamma=float(gamma),
                   C=float(d.get("C", 1.5)), alpha=float(d.get("alpha", 0.0)),
                   epsilon=d.get("epsilon"))

    @classmethod
    def from_json(cls, text: str) -> "QueueParams":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class RegimeCheck:
    overload_ok: bool
    gamma0: float
    gamma_ok: bool
    details: dict = field(default_factory=dict)


class RateEntry(NamedTuple):
    target: Any
    rate: float


def overload_ok(params: QueueParams) -> bool:
    mu = params.mu
    if mu == 0:
        return True
    return params.lam / mu - 1 >= params.C * (params.gamma / mu) ** params.alpha


def validate_regime(params: QueueParams) -> RegimeCheck:
    """Diagnose the heavily overloaded regime; never raises."""
    from .ssq_bounds import constants_table  # local import, avoids a cycle

    table = constants_table(params)
    terms = table.gamma0_terms
    g0 = min(terms.values())
    mu = params.mu
    details = {f"gamma0.{k}": v for k, v in terms.items()}
    details["overload_lhs"] = params.lam / mu - 1 if mu > 0 else math.inf
    details["overload_rhs"] = (params.C * (params.gamma / mu) ** params.alpha
                               if mu > 0 else 0.0)
    details["C_gt_1"] = params.C > 1
    return RegimeCheck(overload_ok=overload_ok(params), gamma0=g0,
                       gamma_ok=params.gamma <= g0, details=details)


def ssq_rates(params: QueueParams, state: int) -> list[RateEntry]:
    if params.n != 1:
        raise ParamError("ssq_rates needs a single server")
    if state < 0:
        raise ParamError("state must be nonnegative")
    out = [RateEntry(state + 1, params.lam)]
    if state >= 1:
        out.append(RateEntry(state - 1, params.mus[0] + params.gamma * state))
    return out


def jsq_target(state: Sequence[int]) -> int:
    """Lexicographically smallest index among the shortest queues."""
    best = 0
    for i in range(1, len(state)):
        if state[i] < state[best]:
            best = i
    return best


def jsq_rates(params: QueueParams, state: Sequence[int]) -> list[RateEntry]:
    state = tuple(int(x) for x in state)
    if len(state) != params.n:
        raise ParamError(f"state has length {len(state)}, expected {params.n}")
    if any(x < 0 for x in state):
        raise ParamError("state coordinates must be nonnegative")
    star = jsq_target(state)
    up = list(state)
    up[star] += 1
    out = [RateEntry(tuple(up), params.lam)]
    for i, x in enumerate(state):
        if x == 0:
            continue
        down = list(state)
        down[i] -= 1
        out.append(RateEntry(tuple(down), params.mus[i] + params.gamma * x))
    if params.n == 1:
        out = [RateEntry(t[0], r) for t, r in out]
    return out


def total_outflow(params: QueueParams, state: Sequence[int]) -> float:
    return params.lam + sum(m * (x > 0) + params.gamma * x
                            for m, x in zip(params.mus, state))
