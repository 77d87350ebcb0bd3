"""Two-spacecraft rendezvous game over double-integrator dynamics.

Each spacecraft chooses a planar acceleration sequence over a horizon of T
steps.  Costs are linear-quadratic in the rolled-out states with a randomly
sampled state-weighting matrix; the players are coupled through constraints
on their relative position.  The random parameter vector packs, in order:
player 1's 4x4 weighting factor (row-major), player 2's, the two 2-vector
relative-position offsets, and the two initial positions (initial velocities
are zero).

Per player and scenario the constraint stack has 35 rows:
10 relative-position rows (2 per step), 5 squared-norm rows, and 20 box rows
on the player's own controls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .certificates import BoxSampler
from .game import GameSpec

Array = np.ndarray

NUM_PLAYERS = 2
CONTROL_DIM = 2  # q: planar acceleration per step
STATE_DIM = 4  # [pos_x, pos_y, vel_x, vel_y]


@dataclass(frozen=True)
class RendezvousConfig:
    horizon: int = 5  # T
    dt: float = 0.1
    pos_range_p1: tuple[float, float] = (-0.15, 0.0)
    pos_range_p2: tuple[float, float] = (0.0, 0.15)
    p_entry_range: tuple[float, float] = (0.0, 1.0)
    b_entry_range: tuple[float, float] = (0.0, 0.01)
    objective_bound: float = 3.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def control_len(self) -> int:
        """Decision length per player: T * q."""
        return self.horizon * CONTROL_DIM

    @property
    def param_dim(self) -> int:
        # two 4x4 P factors + two b offsets + two initial positions
        return 2 * 16 + 2 * 2 + 2 * 2

    @property
    def constraint_rows(self) -> int:
        """Rows per player per scenario: 2T relative-position, T norm, 4T box."""
        T = self.horizon
        return 2 * T + T + 2 * CONTROL_DIM * T


def dynamics_matrices(dt: float) -> tuple[Array, Array]:
    """Double-integrator (A, B) for one planar spacecraft."""
    A = np.array(
        [
            [1.0, dt, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, dt],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    B = np.array(
        [
            [0.5 * dt**2, 0.0],
            [dt, 0.0],
            [0.0, 0.5 * dt**2],
            [0.0, dt],
        ]
    )
    return A, B


def rollout(cfg: RendezvousConfig, initial_state: Array, controls: Array) -> Array:
    """States xi(0..T), (T+1, 4), under the exact linear recursion."""
    A, B = dynamics_matrices(cfg.dt)
    controls = np.asarray(controls, dtype=float).reshape(cfg.horizon, CONTROL_DIM)
    xi = np.empty((cfg.horizon + 1, STATE_DIM))
    xi[0] = np.asarray(initial_state, dtype=float)
    for t in range(cfg.horizon):
        xi[t + 1] = A @ xi[t] + B @ controls[t]
    return xi


@dataclass(frozen=True)
class _Theta:
    Q1: Array
    Q2: Array
    b1: Array
    b2: Array
    xi1_0: Array
    xi2_0: Array


class RendezvousGame:
    """Callback bundle for :class:`GameSpec`; instances are picklable.

    Note the state axis ordering in the joint decision: player 1's controls
    u_1(0..T-1) first, then player 2's.
    """

    def __init__(self, cfg: RendezvousConfig):
        self.cfg = cfg
        T = cfg.horizon
        A, B = dynamics_matrices(cfg.dt)
        # Free-response and forced-response maps of the stacked states
        # xi(0..T):  Xi = Phi @ xi0 + Gamma @ u.
        phi = np.zeros(((T + 1) * STATE_DIM, STATE_DIM))
        gamma = np.zeros(((T + 1) * STATE_DIM, T * CONTROL_DIM))
        Ap = np.eye(STATE_DIM)
        phi[0:STATE_DIM] = Ap
        powers = [Ap]
        for t in range(1, T + 1):
            Ap = A @ Ap
            powers.append(Ap)
            phi[t * STATE_DIM : (t + 1) * STATE_DIM] = Ap
        for t in range(1, T + 1):
            for tau in range(t):
                gamma[
                    t * STATE_DIM : (t + 1) * STATE_DIM,
                    tau * CONTROL_DIM : (tau + 1) * CONTROL_DIM,
                ] = powers[t - 1 - tau] @ B
        self.phi = phi
        self.gamma = gamma
        # Position rows of the rollout for t = 1..T (relative-position maps).
        pos_rows = np.concatenate(
            [[t * STATE_DIM, t * STATE_DIM + 2] for t in range(1, T + 1)]
        )
        self.pos_rows = pos_rows
        self.c_pos = gamma[pos_rows]  # (2T, Tq): controls -> positions 1..T
        self.phi_pos = phi[pos_rows]  # (2T, 4)
        self._cache: dict[bytes, _Theta] = {}

    # -- parameter packing ---------------------------------------------------

    def unpack(self, theta: Array) -> _Theta:
        key = np.asarray(theta, dtype=float).tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        theta = np.asarray(theta, dtype=float)
        P1 = theta[0:16].reshape(4, 4)
        P2 = theta[16:32].reshape(4, 4)
        parsed = _Theta(
            Q1=np.eye(4) + P1.T @ P1,
            Q2=np.eye(4) + P2.T @ P2,
            b1=theta[32:34].copy(),
            b2=theta[34:36].copy(),
            xi1_0=np.array([theta[36], 0.0, theta[37], 0.0]),
            xi2_0=np.array([theta[38], 0.0, theta[39], 0.0]),
        )
        if len(self._cache) > 4096:
            self._cache.clear()
        self._cache[key] = parsed
        return parsed

    def pack(self, P1, P2, b1, b2, pos1, pos2) -> Array:
        return np.concatenate(
            [
                np.asarray(P1, dtype=float).ravel(),
                np.asarray(P2, dtype=float).ravel(),
                np.asarray(b1, dtype=float),
                np.asarray(b2, dtype=float),
                np.asarray(pos1, dtype=float),
                np.asarray(pos2, dtype=float),
            ]
        )

    def __getstate__(self):
        return {"cfg": self.cfg}

    def __setstate__(self, state):
        self.__init__(state["cfg"])

    # -- helpers -------------------------------------------------------------

    def _controls(self, x: Array, i: int) -> Array:
        nu = self.cfg.control_len
        return np.asarray(x, dtype=float)[i * nu : (i + 1) * nu]

    def _initial(self, p: _Theta, i: int) -> Array:
        return p.xi1_0 if i == 0 else p.xi2_0

    def _weight(self, p: _Theta, i: int) -> Array:
        return p.Q1 if i == 0 else p.Q2

    def _offset(self, p: _Theta, i: int) -> Array:
        return p.b1 if i == 0 else p.b2

    def _states(self, p: _Theta, i: int, u: Array) -> Array:
        """Stacked states xi(0..T) as (T+1, 4)."""
        flat = self.phi @ self._initial(p, i) + self.gamma @ u
        return flat.reshape(self.cfg.horizon + 1, STATE_DIM)

    def relative_positions(self, x: Array, theta: Array) -> Array:
        """Stacked [xi1 - xi2] position differences for t = 1..T, (2T,)."""
        p = self.unpack(theta)
        du = self._controls(x, 0) - self._controls(x, 1)
        return self.phi_pos @ (p.xi1_0 - p.xi2_0) + self.c_pos @ du

    # -- GameSpec callbacks --------------------------------------------------

    def objective(self, x: Array, theta: Array, i: int) -> float:
        p = self.unpack(theta)
        u = self._controls(x, i)
        xi = self._states(p, i, u)
        Q = self._weight(p, i)
        state_cost = 0.5 * float(np.einsum("ts,sr,tr->", xi, Q, xi))
        return (state_cost + 0.5 * float(u @ u)) / self.cfg.horizon

    def objective_gradient(self, x: Array, theta: Array, i: int) -> Array:
        p = self.unpack(theta)
        u = self._controls(x, i)
        xi = self._states(p, i, u)
        grad_states = (xi @ self._weight(p, i)).ravel()
        return (self.gamma.T @ grad_states + u) / self.cfg.horizon

    def pseudogradient_jacobian(self, x: Array, theta: Array) -> Array:
        p = self.unpack(theta)
        T = self.cfg.horizon
        nu = self.cfg.control_len
        out = np.zeros((2 * nu, 2 * nu))
        for i in range(NUM_PLAYERS):
            Q = self._weight(p, i)
            qbar = np.kron(np.eye(T + 1), Q)
            block = (self.gamma.T @ qbar @ self.gamma + np.eye(nu)) / T
            out[i * nu : (i + 1) * nu, i * nu : (i + 1) * nu] = block
        return out

    def constraint(self, x: Array, theta: Array, i: int) -> Array:
        p = self.unpack(theta)
        T = self.cfg.horizon
        rel = self.relative_positions(x, theta)
        rel_rows = rel - np.tile(self._offset(p, i), T)
        norm_rows = (rel.reshape(T, 2) ** 2).sum(axis=1) - 1.0
        u = self._controls(x, i)
        box_rows = np.concatenate([u - 1.0, -u - 1.0])
        return np.concatenate([rel_rows, norm_rows, box_rows])

    def constraint_jacobian(self, x: Array, theta: Array, i: int) -> Array:
        T = self.cfg.horizon
        nu = self.cfg.control_len
        nn = 2 * nu
        rel = self.relative_positions(x, theta)
        jac = np.zeros((self.cfg.constraint_rows, nn))
        # relative-position rows: d(rel)/du = [C, -C]
        jac[0 : 2 * T, 0:nu] = self.c_pos
        jac[0 : 2 * T, nu:nn] = -self.c_pos
        # norm rows: 2 rel_t' d(rel_t)/du
        for t in range(T):
            g = 2.0 * rel[2 * t : 2 * t + 2] @ self.c_pos[2 * t : 2 * t + 2]
            jac[2 * T + t, 0:nu] = g
            jac[2 * T + t, nu:nn] = -g
        # own control box rows
        own = slice(i * nu, (i + 1) * nu)
        jac[3 * T : 3 * T + nu, own] = np.eye(nu)
        jac[3 * T + nu : 3 * T + 2 * nu, own] = -np.eye(nu)
        return jac

    def constraint_curvature(self, x: Array, theta: Array, i: int, v: Array) -> Array:
        """sum_r v[r] d^2 h_r / (du_i du): only the norm rows curve."""
        T = self.cfg.horizon
        nu = self.cfg.control_len
        out = np.zeros((nu, 2 * nu))
        sign = 1.0 if i == 0 else -1.0
        for t in range(T):
            vt = v[2 * T + t]
            if vt == 0.0:
                continue
            C_t = self.c_pos[2 * t : 2 * t + 2]  # (2, nu)
            own = 2.0 * vt * sign * C_t.T
            out[:, 0:nu] += own @ C_t
            out[:, nu:] += -own @ C_t
        return out


def sampler_for(cfg: RendezvousConfig) -> BoxSampler:
    lows = (
        [cfg.p_entry_range[0]] * 32
        + [cfg.b_entry_range[0]] * 4
        + [cfg.pos_range_p1[0]] * 2
        + [cfg.pos_range_p2[0]] * 2
    )
    highs = (
        [cfg.p_entry_range[1]] * 32
        + [cfg.b_entry_range[1]] * 4
        + [cfg.pos_range_p1[1]] * 2
        + [cfg.pos_range_p2[1]] * 2
    )
    return BoxSampler(tuple(lows), tuple(highs), name="rendezvous_uniform")


def build_game(cfg: Optional[RendezvousConfig] = None) -> tuple[GameSpec, BoxSampler]:
    """Assemble the GameSpec and the matching scenario sampler."""
    cfg = cfg or RendezvousConfig()
    game = RendezvousGame(cfg)
    spec = GameSpec(
        num_players=NUM_PLAYERS,
        decision_dim=cfg.control_len,
        param_dim=cfg.param_dim,
        constraint_dim=cfg.constraint_rows,
        objective=game.objective,
        objective_gradient=game.objective_gradient,
        constraint=game.constraint,
        constraint_jacobian=game.constraint_jacobian,
        objective_bound=cfg.objective_bound,
        separable_constraints=False,
        pseudogradient_jacobian=game.pseudogradient_jacobian,
        constraint_curvature=game.constraint_curvature,
    )
    return spec, sampler_for(cfg)


@dataclass(frozen=True)
class BoundAudit:
    max_abs_objective: float
    bound: float
    num_samples: int

    @property
    def ok(self) -> bool:
        return self.max_abs_objective <= self.bound


def verify_objective_bound(
    cfg: RendezvousConfig, num_samples: int, seed: int
) -> BoundAudit:
    """Empirical audit of sup |f_i| over feasible controls and the theta box."""
    spec, sampler = build_game(cfg)
    rng = np.random.default_rng(seed)
    thetas = sampler.draw(rng, num_samples)
    worst = 0.0
    for j in range(num_samples):
        u = rng.uniform(-1.0, 1.0, spec.joint_dim)
        for i in range(NUM_PLAYERS):
            worst = max(worst, abs(float(spec.objective(u, thetas[j], i))))
    return BoundAudit(worst, cfg.objective_bound, num_samples)
