"""Discrete counterparts of the flow: a proximal ADMM family and two
primal-dual step forms.

One explicit Euler step of the flow with step 1 reproduces `admm_step`
exactly (the subproblem solves are shared code paths), which is the
equivalence the tests pin down to 1e-12.

`cp_step` is the dual-extrapolated primal-dual update (uses 2 y^k - y^{k-1}
in the x-step); `cp_step_explicit` is the same iteration written with the
splitting variable z kept explicit.  Both require h = 0 and gamma = 1 and
coincide once started from matching states (z^0 = A x^0, y^{-1} = y^0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, IntegrationError
from .flow import SystemState, _x_new_closed, _x_new_metric, _z_new_closed, _z_new_metric
from .metric import MetricSchedule, TauSchedule, x_update_metric
from .problems import ProblemSpec, SaddleResidual, kkt_residual
from .proxlib import conjugate_prox

__all__ = [
    "DiscreteParams",
    "DiscreteRun",
    "admm_step",
    "cp_step",
    "cp_step_explicit",
    "run",
]

DIVERGENCE_LIMIT = 1e12


@dataclass
class DiscreteParams:
    """Iteration parameters.

    tau may be a float, a sequence indexed by k, or a TauSchedule evaluated
    at t = k.  Omitting m1 selects the step-derived metric
    M1^k = I / tau_k - c A* A (single-prox x-update); m2 defaults to zero.
    """

    c: float = 1.0
    gamma: float = 1.0
    tau: object = 0.25
    m1: MetricSchedule | None = None
    m2: MetricSchedule | None = None
    inner_tol: float = 1e-10
    max_iters: int = 1000
    stop_tol: float = 1e-8

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("penalty c must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0,1]")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")

    def tau_at(self, k) -> float:
        if isinstance(self.tau, TauSchedule):
            return self.tau.value(float(k))
        if isinstance(self.tau, (int, float)):
            return float(self.tau)
        return float(self.tau[min(k, len(self.tau) - 1)])


def admm_step(p: ProblemSpec, d: DiscreteParams, k: int,
              s: SystemState) -> SystemState:
    """One proximal ADMM iteration (x-update, relaxed z-update, dual ascent).

    x^{k+1} minimizes f plus the linearized h plus the augmented coupling
    term in the metric M1^k; z^{k+1} sees the relaxed point
    gamma x^{k+1} + (1-gamma) x^k; y^{k+1} = y^k + c (A x^{k+1} - z^{k+1}).
    """
    c, gamma = d.c, d.gamma
    x, z, y = s.x, s.z, s.y
    if d.m1 is None:
        x_new = _x_new_closed(p, d.tau_at(k), c, x, z, y)
    else:
        m1_k = d.m1.at(float(k))
        q = x_update_metric(d.m1, c, p.A, float(k))
        x_new = _x_new_metric(p, q, m1_k, c, x, z, y, d.inner_tol)
    ax_bar = p.A._raw_apply(x + gamma * (x_new - x))
    if d.m2 is None or d.m2.is_zero():
        z_new = _z_new_closed(p, c, ax_bar, y)
    else:
        z_new = _z_new_metric(p, d.m2.at(float(k)), c, ax_bar, y, z, d.inner_tol)
    y_new = y + c * (p.A._raw_apply(x_new) - z_new)
    return SystemState(x_new, z_new, y_new, float(k + 1))


def _require_cp(p: ProblemSpec, d: DiscreteParams):
    if not p.h.is_zero:
        raise ConfigError("primal-dual steps require h = 0")
    if d.gamma != 1.0:
        raise ConfigError("primal-dual steps require gamma = 1")


def cp_step(p: ProblemSpec, d: DiscreteParams, k: int, x, y, y_prev):
    """Dual-extrapolated primal-dual step; returns (x^{k+1}, y^{k+1}).

    x^{k+1} = prox_{tau f}(x^k - tau A*(2 y^k - y^{k-1}))
    y^{k+1} = prox_{c g*}(y^k + c A x^{k+1})
    """
    _require_cp(p, d)
    tau_k = d.tau_at(k)
    x_new = p.f.prox(tau_k, x - tau_k * p.A._raw_adjoint(2.0 * y - y_prev))
    y_new = conjugate_prox(p.g, d.c, y + d.c * p.A._raw_apply(x_new))
    return x_new, y_new


def cp_step_explicit(p: ProblemSpec, d: DiscreteParams, k: int,
                     s: SystemState) -> SystemState:
    """The same primal-dual iteration with the splitting variable explicit.

    x^{k+1} = prox_{tau f}(x^k - tau A*(y^k + c (A x^k - z^k)))
    y^{k+1} = prox_{c g*}(y^k + c A x^{k+1})
    z^{k+1} = A x^{k+1} - (y^{k+1} - y^k) / c

    Substituting c (A x^k - z^k) = y^k - y^{k-1} (which the z-update makes
    an identity from k = 1 on, and the start z^0 = A x^0, y^{-1} = y^0 makes
    true at k = 0) recovers `cp_step`.
    """
    _require_cp(p, d)
    c = d.c
    tau_k = d.tau_at(k)
    x, z, y = s.x, s.z, s.y
    x_new = p.f.prox(tau_k, x - tau_k * p.A._raw_adjoint(y + c * (p.A._raw_apply(x) - z)))
    y_new = conjugate_prox(p.g, c, y + c * p.A._raw_apply(x_new))
    z_new = p.A._raw_apply(x_new) - (y_new - y) / c
    return SystemState(x_new, z_new, y_new, float(k + 1))


@dataclass
class DiscreteRun:
    """Iterate history (index k = state position) and the stop reason."""

    states: list
    residuals: list
    stop_reason: str  # "tolerance" | "budget" | "divergence"

    @property
    def final(self) -> SystemState:
        return self.states[-1]

    @property
    def iterations(self) -> int:
        return len(self.states) - 1


def run(p: ProblemSpec, d: DiscreteParams, s0: SystemState | None = None,
        algorithm: str = "admm") -> DiscreteRun:
    """Iterate until the KKT residual max-component drops to stop_tol,
    the budget runs out, or an iterate norm exceeds the divergence limit.

    algorithm "admm" uses `admm_step`; "cp" uses `cp_step` and tracks the
    splitting variable via z^{k+1} = A x^{k+1} - (y^{k+1} - y^k)/c so the
    same residuals are reported.
    """
    if s0 is None:
        x0, z0, y0 = p.default_start()
        s0 = SystemState(x0, z0, y0, 0.0)
    s = SystemState(np.asarray(s0.x, dtype=float).copy(),
                    np.asarray(s0.z, dtype=float).copy(),
                    np.asarray(s0.y, dtype=float).copy(), 0.0)
    if algorithm not in ("admm", "cp"):
        raise ConfigError(f"unknown discrete algorithm {algorithm!r}")
    if algorithm == "cp":
        _require_cp(p, d)

    states = [s]
    residuals = [kkt_residual(p, s.x, s.z, s.y)]
    if residuals[0].max() <= d.stop_tol:
        return DiscreteRun(states, residuals, "tolerance")

    y_prev = s.y
    for k in range(d.max_iters):
        if algorithm == "admm":
            s_next = admm_step(p, d, k, states[-1])
        else:
            cur = states[-1]
            x_new, y_new = cp_step(p, d, k, cur.x, cur.y, y_prev)
            z_new = p.A._raw_apply(x_new) - (y_new - cur.y) / d.c
            y_prev = cur.y
            s_next = SystemState(x_new, z_new, y_new, float(k + 1))
        states.append(s_next)
        norm = max(np.linalg.norm(s_next.x), np.linalg.norm(s_next.z),
                   np.linalg.norm(s_next.y))
        if not np.isfinite(norm) or norm > DIVERGENCE_LIMIT:
            residuals.append(SaddleResidual(np.inf, np.inf, np.inf))
            return DiscreteRun(states, residuals, "divergence")
        residuals.append(kkt_residual(p, s_next.x, s_next.z, s_next.y))
        if residuals[-1].max() <= d.stop_tol:
            return DiscreteRun(states, residuals, "tolerance")
    return DiscreteRun(states, residuals, "budget")
