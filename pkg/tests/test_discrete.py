"""Tests for the discrete iterations and their match with the dynamics.

The headline property: one unit Euler step of the continuous system is one
proximal ADMM iteration, state for state, in both subproblem modes.  The
two forms of the primal-dual iteration must agree to near machine
precision because they are algebraic rearrangements of each other.
"""

import numpy as np
import pytest

from pdflow.discrete import (DiscreteParams, admm_step, cp_step,
                             cp_step_explicit, run)
from pdflow.errors import ConfigError
from pdflow.flow import Euler, FlowParams, SystemState, integrate
from pdflow.linops import SelfAdjointPSD
from pdflow.metric import MetricSchedule, TauSchedule
from pdflow.problems import catalog


def _start():
    return SystemState(np.array([-10.0, 10.0]), np.array([-20.0, 0.0]),
                       np.array([-10.0, 10.0]), 0.0)


class TestAdmmStep:
    def test_hand_derived_iteration(self, example1):
        """tau = 0.25, gamma = 0.5, c = 1 from the documented start.

        The x update shrinks (-10, 5) by 1.25 to (-8, 4); the relaxed point
        is (-9, 7) so soft thresholding A(.) + y at 1 gives z = (-25, 7);
        the dual ascent adds A x - z = (13, -11) to y."""
        d = DiscreteParams(c=1.0, gamma=0.5, tau=0.25)
        s1 = admm_step(example1, d, 0, _start())
        np.testing.assert_allclose(s1.x, [-8.0, 4.0], atol=1e-12)
        np.testing.assert_allclose(s1.z, [-25.0, 7.0], atol=1e-12)
        np.testing.assert_allclose(s1.y, [3.0, -1.0], atol=1e-12)
        assert s1.t == 1.0

    def test_fixed_point_at_saddle(self, example1):
        d = DiscreteParams(c=1.0, gamma=1.0, tau=0.25)
        s0 = SystemState(np.zeros(2), np.zeros(2), np.zeros(2), 0.0)
        s1 = admm_step(example1, d, 0, s0)
        assert max(np.abs(s1.x).max(), np.abs(s1.z).max(),
                   np.abs(s1.y).max()) <= 1e-12


class TestEulerEquivalence:
    def test_closed_form_mode(self, example1):
        """100 unit Euler steps reproduce 100 ADMM iterations exactly."""
        params = FlowParams(c=1.0, gamma=0.5, tau=TauSchedule.constant(0.25),
                            horizon=100.0, integrator=Euler(h=1.0))
        traj = integrate(example1, params, _start())
        d = DiscreteParams(c=1.0, gamma=0.5, tau=0.25, max_iters=100,
                           stop_tol=0.0)
        it = run(example1, d, _start())
        assert len(traj.states) == len(it.states) == 101
        for s_flow, s_disc in zip(traj.states, it.states):
            scale = max(1.0, float(np.linalg.norm(s_disc.x)))
            assert float(np.linalg.norm(s_flow.x - s_disc.x)) <= 1e-12 * scale
            assert float(np.linalg.norm(s_flow.z - s_disc.z)) <= 1e-12 * scale
            assert float(np.linalg.norm(s_flow.y - s_disc.y)) <= 1e-12 * scale

    def test_general_metric_mode(self, example1):
        """Same equivalence with explicit dense metrics on both updates."""
        m1 = MetricSchedule.constant(SelfAdjointPSD.from_dense(
            np.array([[1.2, 0.3], [0.3, 0.9]])))
        m2 = MetricSchedule.constant(SelfAdjointPSD.identity(2, 0.5))
        params = FlowParams(c=1.0, gamma=1.0, m1=m1, m2=m2,
                            inner_tol=1e-12, horizon=50.0,
                            integrator=Euler(h=1.0))
        traj = integrate(example1, params, _start())
        d = DiscreteParams(c=1.0, gamma=1.0, m1=m1, m2=m2,
                           inner_tol=1e-12, max_iters=50, stop_tol=0.0)
        it = run(example1, d, _start())
        for s_flow, s_disc in zip(traj.states, it.states):
            scale = max(1.0, float(np.linalg.norm(s_disc.x)))
            assert float(np.linalg.norm(s_flow.x - s_disc.x)) <= 1e-12 * scale
            assert float(np.linalg.norm(s_flow.z - s_disc.z)) <= 1e-12 * scale
            assert float(np.linalg.norm(s_flow.y - s_disc.y)) <= 1e-12 * scale


class TestPrimalDualForms:
    def test_two_forms_identical(self, example1):
        """The compact two-variable form and the explicit three-variable
        form are rearrangements; iterate both for 100 steps and compare."""
        d = DiscreteParams(c=1.0, gamma=1.0, tau=0.25)
        x0, z0, y0 = example1.default_start()
        x, y, y_prev = x0.copy(), y0.copy(), y0.copy()
        s = SystemState(x0.copy(), z0.copy(), y0.copy(), 0.0)
        worst = 0.0
        for k in range(100):
            x_new, y_new = cp_step(example1, d, k, x, y, y_prev)
            y_prev, x, y = y, x_new, y_new
            s = cp_step_explicit(example1, d, k, s)
            worst = max(worst,
                        float(np.abs(s.x - x).max()),
                        float(np.abs(s.y - y).max()))
        assert worst <= 1e-14

    def test_requires_zero_smooth_part(self):
        p = catalog("box-qp")
        d = DiscreteParams(c=1.0, gamma=1.0, tau=0.1)
        s0 = SystemState(np.zeros(6), np.zeros(6), np.zeros(6), 0.0)
        with pytest.raises(ConfigError):
            cp_step_explicit(p, d, 0, s0)
        with pytest.raises(ConfigError):
            run(p, d, algorithm="cp")

    def test_requires_full_relaxation(self, example1):
        d = DiscreteParams(c=1.0, gamma=0.5, tau=0.25)
        with pytest.raises(ConfigError):
            cp_step(example1, d, 0, np.zeros(2), np.zeros(2), np.zeros(2))

    def test_converges_on_example1(self, example1):
        d = DiscreteParams(c=1.0, gamma=1.0, tau=0.25, max_iters=500,
                           stop_tol=1e-6)
        out = run(example1, d, _start(), algorithm="cp")
        assert out.stop_reason == "tolerance"
        assert out.iterations <= 500
        assert out.residuals[-1].max() <= 1e-6
        assert float(np.linalg.norm(out.final.x)) <= 1e-4


class TestRun:
    def test_unknown_algorithm(self, example1):
        with pytest.raises(ConfigError):
            run(example1, DiscreteParams(), algorithm="ista")

    def test_immediate_tolerance_stop(self, example1):
        s0 = SystemState(np.zeros(2), np.zeros(2), np.zeros(2), 0.0)
        out = run(example1, DiscreteParams(stop_tol=1e-8), s0)
        assert out.stop_reason == "tolerance"
        assert out.iterations == 0
        assert len(out.states) == len(out.residuals) == 1

    def test_budget_stop(self, example1):
        d = DiscreteParams(tau=0.25, max_iters=3, stop_tol=0.0)
        out = run(example1, d, _start())
        assert out.stop_reason == "budget"
        assert out.iterations == 3

    def test_divergence_detected(self):
        """The box QP diverges under a unit-step iteration with a step
        chosen above the discrete stability threshold."""
        p = catalog("box-qp")
        d = DiscreteParams(c=1.0, gamma=1.0, tau=0.2, max_iters=500,
                           stop_tol=1e-12)
        out = run(p, d)
        assert out.stop_reason == "divergence"
        assert np.isinf(out.residuals[-1].max())

    def test_admm_reaches_lasso_solution(self):
        p = catalog("lasso-small")
        d = DiscreteParams(c=1.0, gamma=1.0, tau=0.2, max_iters=2000,
                           stop_tol=1e-10)
        out = run(p, d)
        assert out.stop_reason == "tolerance"
        np.testing.assert_allclose(out.final.x, p.known_primal, atol=1e-8)
        np.testing.assert_allclose(out.final.y, p.known_dual, atol=1e-8)

    def test_admm_reaches_boxqp_solution(self):
        p = catalog("box-qp")
        d = DiscreteParams(c=1.0, gamma=1.0, tau=0.12, max_iters=5000,
                           stop_tol=1e-10)
        out = run(p, d)
        assert out.stop_reason == "tolerance"
        np.testing.assert_allclose(out.final.x, p.known_primal, atol=1e-8)

    def test_residual_history_aligned(self, example1):
        d = DiscreteParams(tau=0.25, max_iters=50, stop_tol=0.0)
        out = run(example1, d, _start())
        assert len(out.residuals) == len(out.states)
        assert out.residuals[-1].max() < out.residuals[0].max()


class TestDiscreteParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            DiscreteParams(c=0.0)
        with pytest.raises(ValueError):
            DiscreteParams(gamma=-0.1)
        with pytest.raises(ValueError):
            DiscreteParams(max_iters=-1)

    def test_tau_sequence_forms(self):
        assert DiscreteParams(tau=0.3).tau_at(7) == 0.3
        seq = DiscreteParams(tau=[0.3, 0.2, 0.1])
        assert seq.tau_at(0) == 0.3
        assert seq.tau_at(2) == 0.1
        assert seq.tau_at(9) == 0.1, "sequence must clamp at its last entry"
        sched = DiscreteParams(tau=TauSchedule.saturating(0.1, 0.4))
        assert sched.tau_at(0) == pytest.approx(0.1)
        assert sched.tau_at(50) == pytest.approx(0.4)
