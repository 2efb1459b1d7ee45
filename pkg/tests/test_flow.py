"""Tests for the continuous-time dynamics and integrators.

The right-hand side is checked against values worked out by hand for the
2-d catalog problem, the integrators against each other at different step
sizes, and the ergodic averaging against its closed form for a linear
trajectory.
"""

import numpy as np
import pytest

from pdflow.errors import CertificationError
from pdflow.flow import (Adaptive, ErgodicAccumulator, Euler, FlowParams,
                         RK4, SystemState, ergodic, integrate, rhs)
from pdflow.linops import SelfAdjointPSD
from pdflow.metric import MetricSchedule, TauSchedule


def _closed_params(tau=0.25, gamma=0.5, c=1.0, horizon=100.0,
                   integrator=None):
    return FlowParams(c=c, gamma=gamma, tau=TauSchedule.constant(tau),
                      horizon=horizon,
                      integrator=RK4(h=0.01) if integrator is None else integrator)


def _start():
    return SystemState(np.array([-10.0, 10.0]), np.array([-20.0, 0.0]),
                       np.array([-10.0, 10.0]), 0.0)


class TestRhs:
    def test_hand_derived_value(self, example1):
        """tau = 0.25, gamma = 0.5, c = 1 at the documented start.

        By hand: A x = (-20, 0) = z so the penalty term drops, A'y = (0, 20),
        x - tau A'y = (-10, 5), and the x prox divides by 1 + tau, giving
        u = (-8, 4) - x = (2, -6).  Then x + gamma u = (-9, 7),
        A(.) + y/c = (-26, 8), soft threshold at 1 gives (-25, 7), so
        v = (-5, 7) and w = c A(u + x) - c(v + z) = (13, -11)."""
        u, v, w = rhs(example1, _closed_params(), 0.0, _start())
        np.testing.assert_allclose(u, [2.0, -6.0], atol=1e-12)
        np.testing.assert_allclose(v, [-5.0, 7.0], atol=1e-12)
        np.testing.assert_allclose(w, [13.0, -11.0], atol=1e-12)

    def test_gamma_one_matches_direct_formula(self, example1):
        """At gamma = 1 the x update reads the raw multiplier estimate
        y + c(Ax - z); evaluate that formula directly and compare."""
        params = _closed_params(tau=0.3, gamma=1.0)
        s = SystemState(np.array([1.5, -2.0]), np.array([0.5, 1.0]),
                        np.array([-1.0, 2.0]), 0.0)
        u, v, w = rhs(example1, params, 0.0, s)
        a = example1.A
        resid = s.y + params.c * (a.apply(s.x) - s.z)
        arg = s.x - 0.3 * a.adjoint_apply(resid)
        u_direct = arg / (1.0 + 0.3) - s.x
        np.testing.assert_allclose(u, u_direct, atol=1e-13)

    def test_zero_at_saddle(self, example1):
        s = SystemState(np.zeros(2), np.zeros(2), np.zeros(2), 0.0)
        u, v, w = rhs(example1, _closed_params(), 0.0, s)
        assert max(np.abs(u).max(), np.abs(v).max(), np.abs(w).max()) <= 1e-10

    def test_third_line_consistency(self, example1):
        """w must equal c A(u + x) - c(v + z) exactly as evaluated."""
        rng = np.random.default_rng(131)
        params = _closed_params(tau=0.4, gamma=0.7)
        for _ in range(20):
            s = SystemState(rng.uniform(-5, 5, 2), rng.uniform(-5, 5, 2),
                            rng.uniform(-5, 5, 2), 0.0)
            u, v, w = rhs(example1, params, 0.0, s)
            rebuilt = params.c * (example1.A.apply(u + s.x) - (v + s.z))
            np.testing.assert_allclose(w, rebuilt, rtol=0, atol=1e-14)

    def test_general_metric_matches_closed_form(self, example1):
        """Passing M1(t) = I/tau - c A*A through the general-metric solver
        must reproduce the closed-form right-hand side."""
        tau = TauSchedule.constant(0.25)
        closed = _closed_params()
        general = FlowParams(c=1.0, gamma=0.5,
                             m1=MetricSchedule.tau_family(tau, 1.0, example1.A),
                             inner_tol=1e-13, horizon=100.0)
        rng = np.random.default_rng(137)
        for _ in range(10):
            s = SystemState(rng.uniform(-3, 3, 2), rng.uniform(-3, 3, 2),
                            rng.uniform(-3, 3, 2), 0.0)
            uc, vc, wc = rhs(example1, closed, 0.0, s)
            ug, vg, wg = rhs(example1, general, 0.0, s)
            np.testing.assert_allclose(ug, uc, atol=1e-9)
            np.testing.assert_allclose(vg, vc, atol=1e-9)
            np.testing.assert_allclose(wg, wc, atol=1e-9)

    def test_oversized_step_rejected(self, example1):
        params = _closed_params(tau=0.6)
        with pytest.raises(CertificationError):
            rhs(example1, params, 0.0, _start())


class TestFlowParams:
    def test_gamma_range(self):
        with pytest.raises(ValueError, match="gamma must lie"):
            FlowParams(gamma=1.5, tau=TauSchedule.constant(0.2))

    def test_mode_exclusivity(self):
        with pytest.raises(ValueError):
            FlowParams()
        with pytest.raises(ValueError):
            FlowParams(tau=TauSchedule.constant(0.2),
                       m1=MetricSchedule.zero(2))

    def test_positive_c_and_horizon(self):
        with pytest.raises(ValueError):
            FlowParams(c=0.0, tau=TauSchedule.constant(0.2))
        with pytest.raises(ValueError):
            FlowParams(tau=TauSchedule.constant(0.2), horizon=0.0)

    def test_mode_names(self):
        assert _closed_params().mode == "closed-form"
        m = FlowParams(m1=MetricSchedule.zero(2))
        assert m.mode == "general-metric"


class TestErgodicAverage:
    def test_constant_trajectory(self):
        s0 = SystemState(np.array([2.0, -1.0]), np.array([1.0, 1.0]),
                         np.zeros(2), 0.0)
        acc = ErgodicAccumulator.start(s0)
        acc.int_x = s0.x * 5.0
        acc.int_z = s0.z * 5.0
        s = SystemState(s0.x, s0.z, s0.y, 5.0)
        x_tilde, z_tilde = ergodic(acc, s)
        np.testing.assert_allclose(x_tilde, s0.x, atol=1e-14)
        np.testing.assert_allclose(z_tilde, s0.z, atol=1e-14)

    def test_linear_trajectory_closed_form(self):
        """For x(s) = s d the average of (xdot + x) over [0, t] is
        d + t d / 2; feed the exact integrals and check the formula."""
        d = np.array([3.0, -2.0])
        t = 4.0
        acc = ErgodicAccumulator(np.zeros(2), np.zeros(2),
                                 0.5 * t ** 2 * d, np.zeros(2), 0.0)
        s = SystemState(t * d, np.zeros(2), np.zeros(2), t)
        x_tilde, _ = ergodic(acc, s)
        np.testing.assert_allclose(x_tilde, d + 0.5 * t * d, atol=1e-14)

    def test_requires_positive_time(self):
        s0 = _start()
        acc = ErgodicAccumulator.start(s0)
        with pytest.raises(ValueError):
            ergodic(acc, s0)


class TestIntegrate:
    def test_saddle_is_stationary(self, example1):
        s0 = SystemState(np.zeros(2), np.zeros(2), np.zeros(2), 0.0)
        traj = integrate(example1, _closed_params(horizon=5.0), s0)
        final = traj.final
        assert np.abs(final.x).max() <= 1e-10
        assert np.abs(final.y).max() <= 1e-10

    def test_default_start_is_problem_start(self, example1):
        traj = integrate(example1, _closed_params(horizon=0.5,
                                                  integrator=RK4(h=0.05)))
        first = traj.states[0]
        np.testing.assert_array_equal(first.x, [-10.0, 10.0])
        np.testing.assert_array_equal(first.z, [-20.0, 0.0])

    def test_converges_to_saddle(self, example1):
        """The long-horizon run must land within the documented radii of
        the origin saddle."""
        traj = integrate(example1, _closed_params(horizon=100.0), _start())
        final = traj.final
        assert float(np.linalg.norm(final.x)) <= 1e-3
        assert float(np.linalg.norm(final.y)) <= 1e-2
        assert traj.stop_reason == "horizon"

    def test_rk4_step_size_refinement(self, example1):
        """Halving the step several times must not move the endpoint by
        more than the fourth-order error estimate allows."""
        params_a = _closed_params(horizon=10.0, integrator=RK4(h=0.02))
        params_b = _closed_params(horizon=10.0, integrator=RK4(h=0.004))
        fa = integrate(example1, params_a, _start()).final
        fb = integrate(example1, params_b, _start()).final
        assert float(np.linalg.norm(fa.x - fb.x)) <= 1e-7
        assert float(np.linalg.norm(fa.y - fb.y)) <= 1e-7

    def test_euler_first_order_convergence(self, example1):
        """Euler endpoint error must shrink roughly linearly in h."""
        ref = integrate(example1, _closed_params(
            horizon=5.0, integrator=RK4(h=0.002)), _start()).final
        errs = []
        for h in (0.04, 0.02, 0.01):
            fin = integrate(example1, _closed_params(
                horizon=5.0, integrator=Euler(h=h)), _start()).final
            errs.append(float(np.linalg.norm(fin.x - ref.x)
                              + np.linalg.norm(fin.y - ref.y)))
        assert errs[0] > errs[1] > errs[2]
        ratio = errs[0] / errs[2]
        assert 2.0 <= ratio <= 8.0, f"expected first-order decay, got {ratio}"

    def test_adaptive_matches_fixed_step(self, example1):
        params_ref = _closed_params(horizon=20.0, integrator=RK4(h=0.005))
        params_ad = _closed_params(horizon=20.0,
                                   integrator=Adaptive(rel_tol=1e-8,
                                                       abs_tol=1e-10))
        ref = integrate(example1, params_ref, _start()).final
        ada = integrate(example1, params_ad, _start())
        assert ada.stop_reason == "horizon"
        assert ada.final.t == pytest.approx(20.0, abs=1e-9)
        assert float(np.linalg.norm(ada.final.x - ref.x)) <= 1e-6
        assert float(np.linalg.norm(ada.final.y - ref.y)) <= 1e-5

    def test_rhs_eval_count_rk4(self, example1):
        traj = integrate(example1, _closed_params(
            horizon=1.0, integrator=RK4(h=0.01)), _start())
        assert traj.rhs_evals == 400

    def test_record_every_subsamples(self, example1):
        full = integrate(example1, _closed_params(
            horizon=1.0, integrator=RK4(h=0.01)), _start())
        thin = integrate(example1, _closed_params(
            horizon=1.0, integrator=RK4(h=0.01)), _start(), record_every=10)
        assert len(full.states) == 101
        assert len(thin.states) == 11
        np.testing.assert_array_equal(thin.final.x, full.final.x)
        np.testing.assert_array_equal(thin.final.y, full.final.y)
        assert thin.states[1].t == pytest.approx(0.1)

    def test_initial_record_has_no_average(self, example1):
        traj = integrate(example1, _closed_params(
            horizon=0.1, integrator=RK4(h=0.05)), _start())
        assert traj.ergodic_x[0] is None
        assert traj.ergodic_z[0] is None
        assert traj.ergodic_x[-1] is not None

    def test_wrong_dimensions_rejected(self, example1):
        s0 = SystemState(np.zeros(3), np.zeros(2), np.zeros(2), 0.0)
        with pytest.raises(ValueError):
            integrate(example1, _closed_params(horizon=1.0), s0)

    def test_certificate_gate_runs_before_stepping(self, example1):
        params = _closed_params(tau=0.8, horizon=1.0)
        with pytest.raises(CertificationError):
            integrate(example1, params, _start())

    def test_general_metric_trajectory_matches_closed_form(self, example1):
        """Full integration agreement between the two modes on a short
        horizon, step-family metric on one side."""
        tau = TauSchedule.constant(0.25)
        closed = _closed_params(horizon=5.0, integrator=RK4(h=0.02))
        general = FlowParams(c=1.0, gamma=0.5,
                             m1=MetricSchedule.tau_family(tau, 1.0, example1.A),
                             inner_tol=1e-12, horizon=5.0,
                             integrator=RK4(h=0.02))
        fc = integrate(example1, closed, _start()).final
        fg = integrate(example1, general, _start()).final
        assert float(np.linalg.norm(fc.x - fg.x)) <= 1e-7
        assert float(np.linalg.norm(fc.y - fg.y)) <= 1e-7

    def test_general_metric_requires_positive_floor(self):
        """With a rank-deficient A and no metric, c A*A + M1 is singular and
        the certificate gate must refuse to integrate."""
        from pdflow import proxlib
        from pdflow.linops import LinearMap
        from pdflow.problems import ProblemSpec

        p = ProblemSpec(name="degenerate", f=proxlib.zero(2),
                        h=proxlib.zero_smooth(2), g=proxlib.zero(1),
                        A=LinearMap.from_dense([[1.0, 0.0]]))
        bad = FlowParams(c=1.0, gamma=1.0, m1=MetricSchedule.zero(2),
                         horizon=1.0)
        s0 = SystemState(np.zeros(2), np.zeros(1), np.zeros(1), 0.0)
        with pytest.raises(CertificationError):
            integrate(p, bad, s0)

    def test_constant_metric_mode_runs(self, example1):
        """A plain constant metric (not from the step family) integrates
        and still drives the state toward the saddle."""
        m1 = MetricSchedule.constant(SelfAdjointPSD.identity(2, 2.0))
        params = FlowParams(c=1.0, gamma=1.0, m1=m1, horizon=30.0,
                            integrator=RK4(h=0.02), inner_tol=1e-11)
        traj = integrate(example1, params, _start())
        assert float(np.linalg.norm(traj.final.x)) <= 1e-2
