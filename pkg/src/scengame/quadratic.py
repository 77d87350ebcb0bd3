"""Decoupled quadratic test game with closed-form everything.

Player i tracks a random target: f_i(x, theta) = (a_i / 2) ||x_i - c_i||^2
where theta stacks the per-player targets c_1, ..., c_N.  The players do not
interact, so the sampled-game equilibrium is the per-player mean target and
the consensus algorithm's behavior is exactly analyzable: the Lyapunov
function of the constrained-consensus formulation contracts per iteration by
(rho / (a_i / S + rho))^2 on each player's modes.

Used as a solver fixture in tests and as the ``decoupled_quadratic`` problem
of the command-line front-end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .certificates import BoxSampler, ScenarioSet
from .game import GameSpec

Array = np.ndarray


@dataclass(frozen=True)
class QuadraticConfig:
    num_players: int = 2
    decision_dim: int = 2
    curvatures: tuple[float, ...] = (1.0, 1.0)  # a_i, one per player
    target_range: tuple[float, float] = (-1.0, 1.0)
    objective_bound: float = 50.0

    def __post_init__(self):
        if len(self.curvatures) != self.num_players:
            raise ValueError("need one curvature per player")
        if any(a <= 0 for a in self.curvatures):
            raise ValueError("curvatures must be positive")


class QuadraticGame:
    """Picklable callback bundle; theta = [c_1, ..., c_N] concatenated."""

    def __init__(self, cfg: QuadraticConfig):
        self.cfg = cfg

    def _target(self, theta: Array, i: int) -> Array:
        n = self.cfg.decision_dim
        return np.asarray(theta, dtype=float)[i * n : (i + 1) * n]

    def _own(self, x: Array, i: int) -> Array:
        n = self.cfg.decision_dim
        return np.asarray(x, dtype=float)[i * n : (i + 1) * n]

    def objective(self, x: Array, theta: Array, i: int) -> float:
        d = self._own(x, i) - self._target(theta, i)
        return 0.5 * self.cfg.curvatures[i] * float(d @ d)

    def objective_gradient(self, x: Array, theta: Array, i: int) -> Array:
        return self.cfg.curvatures[i] * (self._own(x, i) - self._target(theta, i))

    def pseudogradient_jacobian(self, x: Array, theta: Array) -> Array:
        n = self.cfg.decision_dim
        return np.diag(np.repeat(self.cfg.curvatures, n))


def build_game(cfg: QuadraticConfig | None = None) -> tuple[GameSpec, BoxSampler]:
    cfg = cfg or QuadraticConfig()
    game = QuadraticGame(cfg)
    spec = GameSpec(
        num_players=cfg.num_players,
        decision_dim=cfg.decision_dim,
        param_dim=cfg.num_players * cfg.decision_dim,
        constraint_dim=0,
        objective=game.objective,
        objective_gradient=game.objective_gradient,
        objective_bound=cfg.objective_bound,
        pseudogradient_jacobian=game.pseudogradient_jacobian,
        separable_constraints=True,
    )
    d = cfg.num_players * cfg.decision_dim
    sampler = BoxSampler(
        (cfg.target_range[0],) * d, (cfg.target_range[1],) * d, name="quadratic_targets"
    )
    return spec, sampler


def equilibrium(cfg: QuadraticConfig, scenarios: ScenarioSet) -> Array:
    """Closed-form sampled-game equilibrium: per-player mean target."""
    return scenarios.scenarios.mean(axis=0)


def consensus_multipliers(cfg: QuadraticConfig, scenarios: ScenarioSet) -> Array:
    """lambda_i^j* = -a_i (x_i* - c_i^j) / S, zero-sum over scenarios."""
    S = scenarios.size
    x_star = equilibrium(cfg, scenarios)
    scale = np.repeat(cfg.curvatures, cfg.decision_dim)
    return -scale[None, :] * (x_star[None, :] - scenarios.scenarios) / S


def per_player_contraction(cfg: QuadraticConfig, S: int, rho: float) -> list[float]:
    """Exact per-iteration Lyapunov ratio on player i's modes."""
    return [(rho / (a / S + rho)) ** 2 for a in cfg.curvatures]
