import numpy as np
import pytest

from scengame.game import GameSpec
from scengame.inner import (
    InfeasibleSubproblem,
    InnerMaxIterations,
    KKTPoint,
    ScenarioSubproblem,
    kkt_residual,
    solve_subgame,
)

THETA = np.zeros(1)


def single_player_spec(objective, gradient, constraint=None, jacobian=None, ell=0):
    return GameSpec(
        num_players=1,
        decision_dim=1,
        param_dim=1,
        constraint_dim=ell,
        objective=objective,
        objective_gradient=gradient,
        objective_bound=100.0,
        constraint=constraint,
        constraint_jacobian=jacobian,
    )


@pytest.fixture
def coupled_pair_spec():
    """Two scalar players, f_i = w_i^2 / 2, shared row 1 - w1 - w2 <= 0."""
    return GameSpec(
        num_players=2,
        decision_dim=1,
        param_dim=1,
        constraint_dim=1,
        objective=lambda w, th, i: 0.5 * w[i] ** 2,
        objective_gradient=lambda w, th, i: np.array([w[i]]),
        objective_bound=100.0,
        constraint=lambda w, th, i: np.array([1.0 - w[0] - w[1]]),
        constraint_jacobian=lambda w, th, i: np.array([[-1.0, -1.0]]),
    )


class TestHandSolvedSubgames:
    def test_unconstrained_quadratic(self):
        # stationarity w + 1*(w - 0) = 0 at rho=1, x_ref=0 -> w = 0
        spec = single_player_spec(
            lambda w, th, i: 0.5 * w[0] ** 2, lambda w, th, i: np.array([w[0]])
        )
        p = ScenarioSubproblem(spec, THETA, np.zeros(1), np.zeros(1), rho=1.0)
        pt = solve_subgame(p)
        assert abs(pt.w[0]) <= 1e-8

    def test_active_bound_multiplier(self):
        # minimize (rho/2)(w-1)^2 s.t. w <= 0 with rho=2 -> w=0, v=2
        spec = single_player_spec(
            lambda w, th, i: 0.0,
            lambda w, th, i: np.zeros(1),
            constraint=lambda w, th, i: np.array([w[0]]),
            jacobian=lambda w, th, i: np.array([[1.0]]),
            ell=1,
        )
        p = ScenarioSubproblem(spec, THETA, np.ones(1), np.zeros(1), rho=2.0)
        pt = solve_subgame(p)
        assert abs(pt.w[0]) <= 1e-8
        assert abs(pt.v[0] - 2.0) <= 1e-6

    def test_shared_constraint_symmetric_point(self, coupled_pair_spec):
        # Symmetric point w = (1/2, 1/2).  Per-player stationarity with the
        # augmented term: w_i + rho*(w_i - 0) - v_i = 0 -> v_i = 1.
        p = ScenarioSubproblem(
            coupled_pair_spec, THETA, np.zeros(2), np.zeros(2), rho=1.0
        )
        pt = solve_subgame(p)
        assert np.allclose(pt.w, [0.5, 0.5], atol=1e-7)
        assert np.allclose(pt.v, [1.0, 1.0], atol=1e-6)


class TestResiduals:
    def test_solution_residuals_small(self, coupled_pair_spec):
        p = ScenarioSubproblem(
            coupled_pair_spec, THETA, np.zeros(2), np.zeros(2), rho=1.0
        )
        pt = solve_subgame(p)
        res = kkt_residual(p, pt)
        assert res.stationarity <= 1e-8
        assert res.feasibility <= 1e-9
        assert res.complementarity <= 1e-8

    def test_zero_multiplier_strictly_feasible(self, coupled_pair_spec):
        p = ScenarioSubproblem(
            coupled_pair_spec, THETA, np.zeros(2), np.zeros(2), rho=1.0
        )
        pt = KKTPoint(np.array([2.0, 2.0]), np.zeros(2), 0.0, 0.0, 0.0, 0)
        res = kkt_residual(p, pt)
        assert res.complementarity == 0.0
        assert res.feasibility == 0.0

    def test_infeasible_point_reports_violation(self, coupled_pair_spec):
        p = ScenarioSubproblem(
            coupled_pair_spec, THETA, np.zeros(2), np.zeros(2), rho=1.0
        )
        pt = KKTPoint(np.array([0.35, 0.35]), np.zeros(2), 0.0, 0.0, 0.0, 0)
        res = kkt_residual(p, pt)
        assert abs(res.feasibility - 0.3) < 1e-12


class TestSolverBehaviour:
    def test_multipliers_nonnegative(self, coupled_pair_spec):
        p = ScenarioSubproblem(
            coupled_pair_spec, THETA, np.zeros(2), np.zeros(2), rho=1.0
        )
        pt = solve_subgame(p)
        assert np.all(pt.v >= 0.0)

    def test_warm_start_same_answer(self, coupled_pair_spec):
        p = ScenarioSubproblem(
            coupled_pair_spec, THETA, np.array([0.2, -0.1]), np.zeros(2), rho=1.5
        )
        cold = solve_subgame(p)
        warm = solve_subgame(p, warm_start=cold)
        assert np.max(np.abs(cold.w - warm.w)) <= 1e-7
        assert warm.iterations <= cold.iterations

    def test_unique_solution_from_random_starts(self, coupled_pair_spec):
        p = ScenarioSubproblem(
            coupled_pair_spec, THETA, np.zeros(2), np.zeros(2), rho=1.0
        )
        rng = np.random.default_rng(5)
        sols = []
        for _ in range(4):
            start = KKTPoint(rng.standard_normal(2), np.full(2, 0.5), 0, 0, 0, 0)
            sols.append(solve_subgame(p, warm_start=start).w)
        for s in sols[1:]:
            assert np.max(np.abs(s - sols[0])) <= 1e-7

    def test_inactive_constraint_matches_unconstrained(self):
        # constraint w <= 5 never binds; solution must match the ell=0 solve
        spec_c = single_player_spec(
            lambda w, th, i: 0.5 * (w[0] - 1.0) ** 2,
            lambda w, th, i: np.array([w[0] - 1.0]),
            constraint=lambda w, th, i: np.array([w[0] - 5.0]),
            jacobian=lambda w, th, i: np.array([[1.0]]),
            ell=1,
        )
        spec_u = single_player_spec(
            lambda w, th, i: 0.5 * (w[0] - 1.0) ** 2,
            lambda w, th, i: np.array([w[0] - 1.0]),
        )
        args = (THETA, np.zeros(1), np.zeros(1))
        wc = solve_subgame(ScenarioSubproblem(spec_c, *args, rho=1.0))
        wu = solve_subgame(ScenarioSubproblem(spec_u, *args, rho=1.0))
        assert abs(wc.w[0] - wu.w[0]) <= 1e-7
        assert np.all(np.abs(wc.v) <= 1e-6)

    def test_objective_scaling_by_scenario_count(self):
        # with 1/S scaling the fixed point shifts toward x_ref as S grows
        spec = single_player_spec(
            lambda w, th, i: 0.5 * (w[0] - 1.0) ** 2,
            lambda w, th, i: np.array([w[0] - 1.0]),
        )
        args = (THETA, np.zeros(1), np.zeros(1))
        w1 = solve_subgame(ScenarioSubproblem(spec, *args, rho=1.0, num_scenarios=1))
        w10 = solve_subgame(ScenarioSubproblem(spec, *args, rho=1.0, num_scenarios=10))
        # closed forms: (1/S) / (1/S + rho)
        assert abs(w1.w[0] - 0.5) <= 1e-8
        assert abs(w10.w[0] - 0.1 / 1.1) <= 1e-8

    def test_infeasible_constraints_detected(self):
        spec = single_player_spec(
            lambda w, th, i: 0.0,
            lambda w, th, i: np.zeros(1),
            constraint=lambda w, th, i: np.array([w[0] ** 2 + 1.0]),
            jacobian=lambda w, th, i: np.array([[2.0 * w[0]]]),
            ell=1,
        )
        p = ScenarioSubproblem(spec, THETA, np.zeros(1), np.zeros(1), rho=1.0)
        with pytest.raises(InfeasibleSubproblem):
            solve_subgame(p)

    def test_budget_exhaustion_carries_best_iterate(self, coupled_pair_spec):
        p = ScenarioSubproblem(
            coupled_pair_spec, THETA, np.zeros(2), np.zeros(2), rho=1.0
        )
        with pytest.raises(InnerMaxIterations) as exc:
            solve_subgame(p, max_iter=1)
        assert exc.value.best.w.shape == (2,)

    def test_rho_must_be_positive(self, coupled_pair_spec):
        with pytest.raises(Exception):
            ScenarioSubproblem(coupled_pair_spec, THETA, np.zeros(2), np.zeros(2), rho=0.0)
