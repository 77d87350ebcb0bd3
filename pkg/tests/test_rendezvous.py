import numpy as np
import pytest

from scengame import admm
from scengame.certificates import sample_scenarios
from scengame.game import check_monotonicity, gradient_consistency_check
from scengame.rendezvous import (
    RendezvousConfig,
    RendezvousGame,
    build_game,
    dynamics_matrices,
    rollout,
    sampler_for,
    verify_objective_bound,
)


@pytest.fixture(scope="module")
def default_game():
    cfg = RendezvousConfig()
    spec, sampler = build_game(cfg)
    return cfg, spec, sampler


def theta_sampler(sampler):
    return lambda rng: sampler.draw(rng, 1)[0]


class TestDynamics:
    def test_matrix_entries_dt_01(self):
        A, B = dynamics_matrices(0.1)
        assert A[0, 1] == 0.1 and A[2, 3] == 0.1
        assert np.array_equal(np.diag(A), np.ones(4))
        assert B[0, 0] == pytest.approx(0.005)
        assert B[1, 0] == 0.1
        assert B[2, 1] == pytest.approx(0.005)
        assert B[3, 1] == 0.1

    def test_zero_control_constant_position(self):
        cfg = RendezvousConfig(horizon=4, dt=0.3)
        xi = rollout(cfg, [0.7, 0.0, -0.2, 0.0], np.zeros(8))
        assert np.allclose(xi[:, 0], 0.7)
        assert np.allclose(xi[:, 2], -0.2)

    def test_unit_step_response(self):
        # dt=1, T=1, u=(1,0): x position gains 1/2, x velocity gains 1
        cfg = RendezvousConfig(horizon=1, dt=1.0)
        xi = rollout(cfg, np.zeros(4), [1.0, 0.0])
        assert xi[1, 0] == 0.5
        assert xi[1, 1] == 1.0
        assert xi[1, 2] == 0.0

    def test_constant_acceleration_closed_form(self):
        # unit x-acceleration from rest with dt=1: positions t^2/2
        cfg = RendezvousConfig(horizon=3, dt=1.0)
        u = np.array([1.0, 0.0] * 3)
        xi = rollout(cfg, np.zeros(4), u)
        assert np.allclose(xi[1:, 0], [0.5, 2.0, 4.5])


class TestParameterPacking:
    def test_dimensions(self, default_game):
        cfg, spec, sampler = default_game
        assert spec.joint_dim == 20
        assert spec.param_dim == 40
        assert spec.constraint_dim == 35
        assert sampler.dim == 40

    def test_pack_unpack_roundtrip(self, default_game):
        cfg, _, _ = default_game
        game = RendezvousGame(cfg)
        P1 = np.arange(16.0).reshape(4, 4)
        P2 = np.arange(16.0, 32.0).reshape(4, 4)
        theta = game.pack(P1, P2, [0.001, 0.002], [0.003, 0.004], [-0.1, -0.05], [0.02, 0.08])
        p = game.unpack(theta)
        assert np.allclose(p.Q1, np.eye(4) + P1.T @ P1)
        assert np.allclose(p.Q2, np.eye(4) + P2.T @ P2)
        assert np.array_equal(p.b2, [0.003, 0.004])
        assert np.array_equal(p.xi1_0, [-0.1, 0.0, -0.05, 0.0])
        assert np.array_equal(p.xi2_0, [0.02, 0.0, 0.08, 0.0])

    def test_sampler_ranges(self, default_game):
        cfg, _, sampler = default_game
        scen = sample_scenarios(sampler, 200, seed=3).scenarios
        assert scen[:, :32].min() >= 0.0 and scen[:, :32].max() <= 1.0
        assert scen[:, 32:36].min() >= 0.0 and scen[:, 32:36].max() <= 0.01
        assert scen[:, 36:38].min() >= -0.15 and scen[:, 36:38].max() <= 0.0
        assert scen[:, 38:40].min() >= 0.0 and scen[:, 38:40].max() <= 0.15


class TestObjective:
    def test_hand_computed_single_step(self):
        # T=1, dt=1, P=0 (Q=I), both players at origin, u1=(1,0):
        # xi(0)=0, xi(1)=(0.5,1,0,0); f = (0.5*(0.25+1) + 0.5*1)/1 = 1.125
        cfg = RendezvousConfig(horizon=1, dt=1.0)
        game = RendezvousGame(cfg)
        theta = game.pack(np.zeros((4, 4)), np.zeros((4, 4)),
                          [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0])
        x = np.array([1.0, 0.0, 0.0, 0.0])
        assert game.objective(x, theta, 0) == pytest.approx(1.125, abs=1e-12)
        assert game.objective(x, theta, 1) == 0.0

    def test_gradient_consistency(self, default_game):
        cfg, spec, sampler = default_game
        report = gradient_consistency_check(
            spec, 12, seed=4, theta_sampler=theta_sampler(sampler), scale=0.5
        )
        assert report.max_gradient_deviation <= 1e-6
        assert report.max_jacobian_deviation <= 1e-6

    def test_monotone_pseudogradient(self, default_game):
        cfg, spec, sampler = default_game
        report = check_monotonicity(
            spec, 1000, seed=5, theta_sampler=theta_sampler(sampler)
        )
        assert report.min_inner_product >= -1e-10


class TestConstraints:
    def test_zero_state_fixed_point(self):
        # both players at the origin with zero controls: relative position 0,
        # rows (a) satisfied since b >= 0, norm rows have slack 1
        cfg = RendezvousConfig()
        game = RendezvousGame(cfg)
        theta = game.pack(np.zeros((4, 4)), np.zeros((4, 4)),
                          [0.005, 0.005], [0.002, 0.002], [0.0, 0.0], [0.0, 0.0])
        h = game.constraint(np.zeros(20), theta, 0)
        assert np.all(h[:10] <= 0.0)
        assert np.allclose(h[10:15], -1.0)
        assert np.allclose(h[15:], -1.0)

    def test_row_split(self, default_game):
        cfg, spec, sampler = default_game
        game = RendezvousGame(cfg)
        rng = np.random.default_rng(0)
        theta = sampler.draw(rng, 1)[0]
        x = rng.uniform(-1.0, 1.0, 20)
        for i in range(2):
            h = game.constraint(x, theta, i)
            assert h.shape == (35,)
            u = x[i * 10 : (i + 1) * 10]
            assert np.allclose(h[15:25], u - 1.0)
            assert np.allclose(h[25:35], -u - 1.0)

    def test_relative_position_uses_own_offset(self, default_game):
        cfg, _, sampler = default_game
        game = RendezvousGame(cfg)
        rng = np.random.default_rng(1)
        theta = sampler.draw(rng, 1)[0]
        x = rng.uniform(-0.5, 0.5, 20)
        h0 = game.constraint(x, theta, 0)[:10]
        h1 = game.constraint(x, theta, 1)[:10]
        b1, b2 = theta[32:34], theta[34:36]
        assert np.allclose(h0 - h1, np.tile(b2 - b1, 5))

    def test_control_bound_binding_flags(self, default_game):
        cfg, _, sampler = default_game
        game = RendezvousGame(cfg)
        theta = sampler.draw(np.random.default_rng(2), 1)[0]
        x = np.zeros(20)
        x[0] = 1.0
        h = game.constraint(x, theta, 0)
        assert h[15] == 0.0  # u_1(0) at its upper bound


class TestObjectiveBound:
    def test_zero_point(self):
        cfg = RendezvousConfig()
        game = RendezvousGame(cfg)
        theta = game.pack(np.zeros((4, 4)), np.zeros((4, 4)),
                          [0, 0], [0, 0], [0, 0], [0, 0])
        assert game.objective(np.zeros(20), theta, 0) == 0.0

    def test_sampling_audit(self):
        audit = verify_objective_bound(RendezvousConfig(), 10_000, seed=8)
        assert audit.ok
        assert audit.max_abs_objective < 3.0

    def test_adversarial_corner_exceeds_default_bound(self):
        # Worst corner (every P entry 1, every control at a bound): the cost
        # reaches about 3.5056 at dt=0.1, so the default bound D=3 holds for
        # the sampling distribution's bulk but not at the extreme corner.
        # At dt=0.05 the corner stays below 3 (checked below).
        cfg = RendezvousConfig()
        game = RendezvousGame(cfg)
        theta = game.pack(np.ones((4, 4)), np.ones((4, 4)),
                          [0.01, 0.01], [0.01, 0.01], [-0.15, -0.15], [0.15, 0.15])
        worst = 0.0
        rng = np.random.default_rng(9)
        for trial in range(3000):
            u = rng.choice([-1.0, 1.0], size=20)
            for i in range(2):
                worst = max(worst, abs(game.objective(u, theta, i)))
        assert worst == pytest.approx(3.505555, abs=1e-6)
        assert worst > cfg.objective_bound

    def test_corner_within_bound_at_halved_step(self):
        cfg = RendezvousConfig(dt=0.05)
        game = RendezvousGame(cfg)
        theta = game.pack(np.ones((4, 4)), np.ones((4, 4)),
                          [0.01, 0.01], [0.01, 0.01], [-0.15, -0.15], [0.15, 0.15])
        worst = 0.0
        rng = np.random.default_rng(9)
        for trial in range(1000):
            u = rng.choice([-1.0, 1.0], size=20)
            for i in range(2):
                worst = max(worst, abs(game.objective(u, theta, i)))
        assert worst <= cfg.objective_bound


class TestSolverIntegration:
    def test_small_run_converges(self, default_game):
        cfg, spec, sampler = default_game
        scen = sample_scenarios(sampler, 3, seed=42)
        rho = admm.suggest_rho(spec, scen)
        res = admm.run(spec, scen, admm.AdmmConfig(rho=rho, tol=1e-12, max_iter=500))
        assert res.status == admm.STATUS_CONVERGED
        assert res.max_multiplier_imbalance <= 1e-10
        for pt in res.inner_points:
            assert np.all(pt.v >= 0.0)

    def test_picklable_for_worker_processes(self, default_game):
        import pickle

        cfg, spec, _ = default_game
        clone = pickle.loads(pickle.dumps(spec))
        rng = np.random.default_rng(3)
        theta = sampler_for(cfg).draw(rng, 1)[0]
        x = rng.uniform(-0.5, 0.5, 20)
        assert clone.objective(x, theta, 0) == spec.objective(x, theta, 0)
