"""Runtime invariant suite behind the `check` CLI subcommand.

Each check exercises one contract of the library on the configured problem
and parameters: operator adjoint consistency, prox regularity, the
definiteness and step-size certificates, stationarity of the dynamics at a
known saddle point, the subproblem solution map's Lipschitz bound, the
unit-step equivalence with the discrete iteration, the ergodic identity,
Lyapunov descent, and the frozen catalog solutions.  Checks that need a
known solution are skipped (reported, not failed) when the problem lacks
one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagnostics import _flow_schedules, trace_flow
from .discrete import DiscreteParams, run as discrete_run
from .errors import MissingSolutionError
from .flow import Euler, FlowParams, SystemState, integrate, rhs
from .linops import psd_floor
from .metric import certify, x_update_metric
from .problems import ProblemSpec, kkt_residual
from .proxlib import metric_prox

__all__ = ["CheckResult", "run_checks", "render_report"]


@dataclass
class CheckResult:
    name: str
    status: str  # "ok" | "FAIL" | "skip"
    detail: str

    @property
    def ok(self) -> bool:
        return self.status != "FAIL"


def _result(name, passed, detail) -> CheckResult:
    return CheckResult(name, "ok" if passed else "FAIL", detail)


def _check_adjoint(p: ProblemSpec, rng) -> CheckResult:
    worst = 0.0
    for _ in range(200):
        x = rng.standard_normal(p.n)
        y = rng.standard_normal(p.m)
        lhs = float(p.A.apply(x) @ y)
        rhs_ = float(x @ p.A.adjoint_apply(y))
        worst = max(worst, abs(lhs - rhs_) / max(1.0, abs(lhs)))
    return _result("adjoint-consistency", worst <= 1e-10,
                   f"max relative defect {worst:.2e} over 200 pairs")


def _check_firm_nonexpansive(p: ProblemSpec, rng) -> CheckResult:
    worst = -np.inf
    for fn, dim in ((p.f, p.n), (p.g, p.m)):
        for tau in (0.1, 1.0, 10.0):
            for _ in range(100):
                u = 5.0 * rng.standard_normal(dim)
                v = 5.0 * rng.standard_normal(dim)
                pu, pv = fn.prox(tau, u), fn.prox(tau, v)
                d = pu - pv
                worst = max(worst, float(d @ d) - float(d @ (u - v)))
    return _result("prox-firm-nonexpansive", worst <= 1e-10,
                   f"max violation {worst:.2e} over 600 pairs")


def _check_resolvent_identity(p: ProblemSpec, rng) -> CheckResult:
    """prox_{tau f}(u) = prox_{s f}((s/tau) u + (1 - s/tau) prox_{tau f}(u))."""
    worst = 0.0
    for fn, dim in ((p.f, p.n), (p.g, p.m)):
        tau, s = 1.0, 0.5
        for _ in range(200):
            u = 5.0 * rng.standard_normal(dim)
            v = fn.prox(tau, u)
            w = fn.prox(s, (s / tau) * u + (1.0 - s / tau) * v)
            worst = max(worst, float(np.linalg.norm(w - v)))
    return _result("prox-resolvent-identity", worst <= 1e-10,
                   f"max defect {worst:.2e} over 400 pairs")


def _check_conditions(p: ProblemSpec, params: FlowParams) -> CheckResult:
    m1, m2 = _flow_schedules(p, params)
    report = certify(m1, m2, params.c, params.gamma, p.A,
                     lipschitz_h=p.h.lipschitz_grad, horizon=params.horizon)
    passed = report.cweak and report.rate_condition
    return _result(
        "certified-conditions", passed,
        f"cweak={report.cweak} cstrong={report.cstrong.holds} "
        f"descent={report.thm4_psd} rate={report.rate_condition} "
        f"step_ok={report.step_size_ok}")


def _check_saddle_stationarity(p: ProblemSpec, params: FlowParams) -> CheckResult:
    try:
        x_star, y_star = p.require_saddle()
    except MissingSolutionError:
        return CheckResult("saddle-stationarity", "skip", "no known saddle")
    s = SystemState(x_star.copy(), p.A.apply(x_star), y_star.copy(), 0.0)
    u, v, w = rhs(p, params, 0.0, s)
    norm = max(np.linalg.norm(u), np.linalg.norm(v), np.linalg.norm(w))
    return _result("saddle-stationarity", norm <= 1e-8,
                   f"|rhs| = {norm:.2e} at the known saddle")


def _check_third_line(p: ProblemSpec, params: FlowParams, rng) -> CheckResult:
    worst = 0.0
    for _ in range(20):
        s = SystemState(rng.standard_normal(p.n), rng.standard_normal(p.m),
                        rng.standard_normal(p.m), 0.0)
        u, v, w = rhs(p, params, 0.0, s)
        recon = params.c * (p.A.apply(u + s.x) - (v + s.z))
        worst = max(worst, float(np.linalg.norm(recon - w)))
    return _result("dual-line-consistency", worst <= 1e-12,
                   f"max defect {worst:.2e} over 20 random states")


def _check_lipschitz(p: ProblemSpec, params: FlowParams, rng) -> CheckResult:
    m1, _ = _flow_schedules(p, params)
    metric = x_update_metric(m1, params.c, p.A, 0.0)
    alpha = psd_floor(metric, strict=False)
    if alpha <= 0:
        return _result("subproblem-lipschitz", False,
                       "x-subproblem metric has no positive floor")
    bound = params.c / alpha
    worst = 0.0
    for _ in range(300):
        a = 3.0 * rng.standard_normal(p.n)
        b = 3.0 * rng.standard_normal(p.n)
        sa = metric_prox(p.f, metric, -params.c * a, a, tol=1e-12)
        sb = metric_prox(p.f, metric, -params.c * b, b, tol=1e-12)
        gap = float(np.linalg.norm(a - b))
        if gap > 1e-12:
            worst = max(worst, float(np.linalg.norm(sa - sb)) / gap)
    return _result("subproblem-lipschitz", worst <= bound + 1e-8,
                   f"max ratio {worst:.6f} vs bound c/alpha = {bound:.6f}")


def _check_euler_equivalence(p: ProblemSpec, params: FlowParams,
                             s0: SystemState) -> CheckResult:
    steps = 25
    flow_params = FlowParams(c=params.c, gamma=params.gamma, tau=params.tau,
                             m1=params.m1, m2=params.m2,
                             inner_tol=params.inner_tol, horizon=float(steps),
                             integrator=Euler(h=1.0))
    traj = integrate(p, flow_params, s0)
    d = DiscreteParams(c=params.c, gamma=params.gamma,
                       tau=params.tau if params.tau is not None else 0.25,
                       m1=params.m1, m2=params.m2,
                       inner_tol=params.inner_tol, max_iters=steps,
                       stop_tol=0.0)
    out = discrete_run(p, d, s0)
    worst = 0.0
    for s_flow, s_disc in zip(traj.states, out.states):
        scale = max(1.0, float(np.linalg.norm(s_disc.x)))
        worst = max(worst,
                    float(np.linalg.norm(s_flow.x - s_disc.x)) / scale,
                    float(np.linalg.norm(s_flow.z - s_disc.z)) / scale,
                    float(np.linalg.norm(s_flow.y - s_disc.y)) / scale)
    return _result("unit-step-equivalence", worst <= 1e-12,
                   f"max relative gap {worst:.2e} over {steps} steps")


def _check_ergodic_identity(p: ProblemSpec, params: FlowParams,
                            s0: SystemState, traj) -> CheckResult:
    worst = 0.0
    y0 = s0.y
    for s, xt, zt in zip(traj.states, traj.ergodic_x, traj.ergodic_z):
        if xt is None or s.t <= 0:
            continue
        lhs = float(np.linalg.norm(p.A.apply(xt) - zt))
        rhs_ = float(np.linalg.norm(s.y - y0)) / (params.c * s.t)
        worst = max(worst, abs(lhs - rhs_))
    return _result("ergodic-identity", worst <= 1e-8,
                   f"max defect {worst:.2e} along the trajectory")


def _check_lyapunov(p: ProblemSpec, params: FlowParams, traj) -> CheckResult:
    if p.known_primal is None or p.known_dual is None:
        return CheckResult("lyapunov-descent", "skip", "no known saddle")
    trace = trace_flow(p, params, traj)
    prev = None
    worst = -np.inf
    for rec in trace:
        if rec.lyapunov is None:
            continue
        if prev is not None:
            worst = max(worst, rec.lyapunov - prev - 1e-6 * (1.0 + prev))
        prev = rec.lyapunov
    return _result("lyapunov-descent", worst <= 0.0,
                   f"max slack-adjusted increase {worst:.2e}")


def _check_frozen_solution(p: ProblemSpec) -> CheckResult:
    if p.known_primal is None or p.known_dual is None:
        return CheckResult("frozen-solution-kkt", "skip", "no known solution")
    r = kkt_residual(p, p.known_primal, p.A.apply(p.known_primal), p.known_dual)
    return _result("frozen-solution-kkt", r.max() <= 1e-9,
                   f"KKT residual {r.max():.2e}")


def run_checks(p: ProblemSpec, params: FlowParams, s0: SystemState,
               seed: int = 0) -> list:
    """Run the invariant suite; returns CheckResult rows in a fixed order."""
    rng = np.random.default_rng(seed)
    results = [
        _check_adjoint(p, rng),
        _check_firm_nonexpansive(p, rng),
        _check_resolvent_identity(p, rng),
        _check_conditions(p, params),
        _check_saddle_stationarity(p, params),
        _check_third_line(p, params, rng),
        _check_frozen_solution(p),
    ]
    if params.mode == "closed-form":
        results.append(_check_lipschitz(p, params, rng))
    short = FlowParams(c=params.c, gamma=params.gamma, tau=params.tau,
                       m1=params.m1, m2=params.m2, inner_tol=params.inner_tol,
                       horizon=min(5.0, params.horizon),
                       integrator=params.integrator)
    traj = integrate(p, short, s0)
    results.append(_check_ergodic_identity(p, short, s0, traj))
    results.append(_check_lyapunov(p, short, traj))
    results.append(_check_euler_equivalence(p, params, s0))
    return results


def render_report(results) -> str:
    lines = []
    for r in results:
        lines.append(f"{r.status:<4} {r.name}: {r.detail}")
    bad = sum(1 for r in results if not r.ok)
    lines.append(f"{len(results) - bad} of {len(results)} checks passed"
                 + (f", {bad} failed" if bad else ""))
    return "\n".join(lines)
