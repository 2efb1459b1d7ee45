"""Tests for the invariant check suite."""

import numpy as np
import pytest

from pdflow import proxlib
from pdflow.checks import CheckResult, render_report, run_checks
from pdflow.flow import FlowParams, RK4, SystemState
from pdflow.linops import LinearMap
from pdflow.metric import MetricSchedule, TauSchedule
from pdflow.problems import ProblemSpec, catalog


def _params(tau=0.25, gamma=0.5):
    return FlowParams(c=1.0, gamma=gamma, tau=TauSchedule.constant(tau),
                      horizon=100.0, integrator=RK4(h=0.01))


def _start(p):
    x0, z0, y0 = p.default_start()
    return SystemState(x0, z0, y0, 0.0)


class TestRunChecks:
    def test_example1_all_pass(self, example1):
        results = run_checks(example1, _params(), _start(example1))
        assert len(results) == 11
        assert all(r.ok for r in results), render_report(results)
        assert all(r.status == "ok" for r in results)

    def test_expected_check_names(self, example1):
        results = run_checks(example1, _params(), _start(example1))
        names = [r.name for r in results]
        assert names == [
            "adjoint-consistency", "prox-firm-nonexpansive",
            "prox-resolvent-identity", "certified-conditions",
            "saddle-stationarity", "dual-line-consistency",
            "frozen-solution-kkt", "subproblem-lipschitz",
            "ergodic-identity", "lyapunov-descent",
            "unit-step-equivalence"]

    @pytest.mark.parametrize("name,tau", [("lasso-small", 0.2),
                                          ("box-qp", 0.12)])
    def test_other_catalog_problems_pass(self, name, tau):
        p = catalog(name)
        results = run_checks(p, _params(tau=tau, gamma=1.0), _start(p))
        assert all(r.ok for r in results), render_report(results)

    def test_general_metric_mode_skips_lipschitz(self, example1):
        m1 = MetricSchedule.tau_family(TauSchedule.constant(0.25), 1.0,
                                       example1.A)
        params = FlowParams(c=1.0, gamma=0.5, m1=m1, horizon=100.0,
                            integrator=RK4(h=0.01))
        results = run_checks(example1, params, _start(example1))
        names = [r.name for r in results]
        assert "subproblem-lipschitz" not in names
        assert all(r.ok for r in results), render_report(results)

    def test_unsolved_problem_skips_solution_checks(self):
        p = ProblemSpec(name="anon", f=proxlib.sq_norm(2),
                        h=proxlib.zero_smooth(2), g=proxlib.l1_norm(2),
                        A=LinearMap.from_dense([[1.0, -1.0], [1.0, 1.0]]))
        s0 = SystemState(np.ones(2), p.A.apply(np.ones(2)), np.zeros(2), 0.0)
        results = run_checks(p, _params(), s0)
        by_name = {r.name: r for r in results}
        assert by_name["saddle-stationarity"].status == "skip"
        assert by_name["frozen-solution-kkt"].status == "skip"
        assert by_name["lyapunov-descent"].status == "skip"
        assert all(r.ok for r in results)

    @pytest.mark.filterwarnings("ignore::pdflow.linops.PowerIterationWarning")
    def test_broken_adjoint_is_caught(self):
        """A map whose adjoint is wrong must fail the adjoint consistency
        check; other algebraic checks keep running."""
        mat = np.array([[1.0, -1.0], [1.0, 1.0]])
        bad_a = LinearMap(2, 2,
                          apply=lambda x: mat @ x,
                          adjoint=lambda y: mat @ y,  # not the transpose
                          representation="custom")
        p = ProblemSpec(name="broken", f=proxlib.sq_norm(2),
                        h=proxlib.zero_smooth(2), g=proxlib.l1_norm(2),
                        A=bad_a)
        s0 = SystemState(np.ones(2), bad_a.apply(np.ones(2)), np.zeros(2),
                         0.0)
        results = run_checks(p, _params(), s0)
        by_name = {r.name: r for r in results}
        assert by_name["adjoint-consistency"].status == "FAIL"

    def test_seed_changes_draws_not_verdicts(self, example1):
        r0 = run_checks(example1, _params(), _start(example1), seed=0)
        r1 = run_checks(example1, _params(), _start(example1), seed=12345)
        assert [r.status for r in r0] == [r.status for r in r1]


class TestRenderReport:
    def test_all_pass_summary_line(self):
        rows = [CheckResult("a", "ok", "fine"),
                CheckResult("b", "skip", "nothing to do")]
        text = render_report(rows)
        assert "2 of 2 checks passed" in text
        assert "failed" not in text

    def test_failure_is_visible(self):
        rows = [CheckResult("a", "ok", "fine"),
                CheckResult("b", "FAIL", "worst 0.5")]
        text = render_report(rows)
        assert "1 of 2 checks passed, 1 failed" in text
        assert "FAIL b: worst 0.5" in text
