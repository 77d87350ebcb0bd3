"""Parametric N-player game model: objectives, pseudogradient, constraints.

A :class:`GameSpec` bundles user-supplied callbacks for the per-player
objectives ``f_i(x, theta)`` and inequality constraints ``h_i(x, theta) <= 0``
together with the problem dimensions.  Callbacks always receive the full joint
decision vector; slicing out a player's own block is the callee's job, since
constraints may couple players.

Callbacks must be pure, deterministic functions of their arguments and must
return finite values; non-finite output is a hard error everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

Array = np.ndarray

# Central-difference step scale: eps_machine**(1/3), per-coordinate scaled.
_FD_SCALE = float(np.finfo(float).eps) ** (1.0 / 3.0)


class GameModelError(Exception):
    """Base class for errors raised by the game model."""


class DimensionMismatch(GameModelError):
    """A vector or matrix has the wrong shape for the spec."""


class NonFiniteValue(GameModelError):
    """A user callback returned NaN or infinity."""

    def __init__(self, message: str, point: Optional[Array] = None):
        super().__init__(message)
        self.point = point


@dataclass(frozen=True)
class GameSpec:
    """An N-player game with per-player objectives and inequality constraints.

    Each player controls a block of ``decision_dim`` contiguous entries of the
    joint decision vector (length ``num_players * decision_dim``).  Player i's
    feasible set is ``{x : constraint(x, theta, i) <= 0}`` componentwise.

    ``objective_gradient`` returns the gradient of ``objective`` with respect
    to player i's own block only.  ``constraint_jacobian`` returns the full
    ``constraint_dim x joint_dim`` Jacobian of player i's constraint vector.

    ``pseudogradient_jacobian`` and ``constraint_curvature`` are optional
    analytic accelerators for Newton-type solvers; finite differences are used
    when they are absent.  ``constraint_curvature(x, theta, i, v)`` must return
    the ``decision_dim x joint_dim`` matrix ``sum_r v[r] * d^2 h_{i,r} /
    (dx_i dx)``.
    """

    num_players: int
    decision_dim: int
    param_dim: int
    constraint_dim: int
    objective: Callable[[Array, Array, int], float]
    objective_gradient: Callable[[Array, Array, int], Array]
    objective_bound: float
    constraint: Optional[Callable[[Array, Array, int], Array]] = None
    constraint_jacobian: Optional[Callable[[Array, Array, int], Array]] = None
    separable_constraints: bool = False
    pseudogradient_jacobian: Optional[Callable[[Array, Array], Array]] = None
    constraint_curvature: Optional[Callable[[Array, Array, int, Array], Array]] = None

    def __post_init__(self):
        if self.num_players < 1 or self.decision_dim < 1 or self.param_dim < 1:
            raise DimensionMismatch(
                "num_players, decision_dim and param_dim must be positive"
            )
        if self.constraint_dim < 0:
            raise DimensionMismatch("constraint_dim must be non-negative")
        if self.constraint_dim > 0 and (
            self.constraint is None or self.constraint_jacobian is None
        ):
            raise GameModelError(
                "constraint and constraint_jacobian are required when "
                "constraint_dim > 0"
            )
        if not np.isfinite(self.objective_bound) or self.objective_bound <= 0:
            raise GameModelError("objective_bound must be a positive finite scalar")

    @property
    def joint_dim(self) -> int:
        return self.num_players * self.decision_dim

    def block(self, i: int) -> slice:
        """Index range of player i's block in the joint decision vector."""
        n = self.decision_dim
        return slice(i * n, (i + 1) * n)

    def check_joint(self, x: Array, name: str = "x") -> Array:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.joint_dim,):
            raise DimensionMismatch(
                f"{name} has shape {x.shape}, expected ({self.joint_dim},)"
            )
        return x

    def check_theta(self, theta: Array) -> Array:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.param_dim,):
            raise DimensionMismatch(
                f"theta has shape {theta.shape}, expected ({self.param_dim},)"
            )
        return theta


def split_blocks(spec: GameSpec, x: Array) -> list[Array]:
    """Split a joint decision vector into the per-player blocks."""
    x = spec.check_joint(x)
    return [x[spec.block(i)] for i in range(spec.num_players)]


def pseudogradient(spec: GameSpec, x: Array, theta: Array) -> Array:
    """Stack of own-block objective gradients, block i = grad_i f_i(x, theta)."""
    x = spec.check_joint(x)
    theta = spec.check_theta(theta)
    out = np.empty(spec.joint_dim)
    for i in range(spec.num_players):
        g = np.asarray(spec.objective_gradient(x, theta, i), dtype=float)
        if g.shape != (spec.decision_dim,):
            raise DimensionMismatch(
                f"objective_gradient for player {i} has shape {g.shape}, "
                f"expected ({spec.decision_dim},)"
            )
        if not np.all(np.isfinite(g)):
            raise NonFiniteValue(
                f"objective_gradient for player {i} returned non-finite values",
                point=x,
            )
        out[spec.block(i)] = g
    return out


def stacked_constraint(spec: GameSpec, x: Array, theta: Array) -> Array:
    """All players' constraint vectors stacked, player index ascending."""
    if spec.constraint_dim == 0:
        return np.empty(0)
    x = spec.check_joint(x)
    parts = []
    for i in range(spec.num_players):
        h = np.asarray(spec.constraint(x, theta, i), dtype=float)
        if h.shape != (spec.constraint_dim,):
            raise DimensionMismatch(
                f"constraint for player {i} has shape {h.shape}, "
                f"expected ({spec.constraint_dim},)"
            )
        if not np.all(np.isfinite(h)):
            raise NonFiniteValue(
                f"constraint for player {i} returned non-finite values", point=x
            )
        parts.append(h)
    return np.concatenate(parts)


def central_difference(func: Callable[[Array], Array], x: Array) -> Array:
    """Central-difference Jacobian of ``func`` at ``x``.

    Step per coordinate: ``eps**(1/3) * max(1, |x_k|)``.
    """
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(func(x), dtype=float))
    jac = np.empty((f0.size, x.size))
    for k in range(x.size):
        h = _FD_SCALE * max(1.0, abs(x[k]))
        xp = x.copy()
        xm = x.copy()
        xp[k] += h
        xm[k] -= h
        fp = np.atleast_1d(np.asarray(func(xp), dtype=float))
        fm = np.atleast_1d(np.asarray(func(xm), dtype=float))
        jac[:, k] = (fp - fm) / (2.0 * h)
    return jac


def fd_pseudogradient_jacobian(spec: GameSpec, x: Array, theta: Array) -> Array:
    """Finite-difference Jacobian of the pseudogradient (joint_dim square)."""
    return central_difference(lambda z: pseudogradient(spec, z, theta), x)


@dataclass(frozen=True)
class MonotonicityReport:
    min_inner_product: float
    violating_pair: Optional[tuple[Array, Array, Array]]
    num_pairs: int
    tolerance: float

    @property
    def monotone(self) -> bool:
        return self.violating_pair is None


def check_monotonicity(
    spec: GameSpec,
    num_pairs: int,
    seed: int,
    tolerance: float = 1e-10,
    theta_sampler: Optional[Callable[[np.random.Generator], Array]] = None,
    scale: float = 1.0,
) -> MonotonicityReport:
    """Sample (x, y, theta) triples and report min (x-y)^T (F(x)-F(y)).

    A negative value below ``-tolerance`` flags the first violating triple; a
    violation is a report outcome, not an error.  ``theta_sampler`` draws the
    parameter vector (standard normal by default).
    """
    if num_pairs < 1:
        raise ValueError("num_pairs must be >= 1")
    rng = np.random.default_rng(seed)
    worst = np.inf
    violating = None
    for _ in range(num_pairs):
        x = scale * rng.standard_normal(spec.joint_dim)
        y = scale * rng.standard_normal(spec.joint_dim)
        if theta_sampler is None:
            theta = rng.standard_normal(spec.param_dim)
        else:
            theta = np.asarray(theta_sampler(rng), dtype=float)
        val = float(
            (x - y) @ (pseudogradient(spec, x, theta) - pseudogradient(spec, y, theta))
        )
        if val < worst:
            worst = val
            if val < -tolerance and violating is None:
                violating = (x, y, theta)
    return MonotonicityReport(worst, violating, num_pairs, tolerance)


@dataclass(frozen=True)
class ConsistencyReport:
    max_gradient_deviation: float
    max_jacobian_deviation: float
    max_abs_objective: float
    num_points: int
    tolerance: float

    @property
    def ok(self) -> bool:
        return (
            self.max_gradient_deviation <= self.tolerance
            and self.max_jacobian_deviation <= self.tolerance
        )


def gradient_consistency_check(
    spec: GameSpec,
    num_points: int,
    seed: int,
    tolerance: float = 1e-4,
    theta_sampler: Optional[Callable[[np.random.Generator], Array]] = None,
    scale: float = 1.0,
) -> ConsistencyReport:
    """Compare supplied gradients and Jacobians against central differences.

    Deviations are relative: ``||fd - supplied||_inf / max(1, ||supplied||_inf)``.
    Also tracks the largest observed ``|f_i|`` for the objective-bound audit.
    """
    if num_points < 1:
        raise ValueError("num_points must be >= 1")
    rng = np.random.default_rng(seed)
    max_grad = 0.0
    max_jac = 0.0
    max_obj = 0.0
    for _ in range(num_points):
        x = scale * rng.standard_normal(spec.joint_dim)
        if theta_sampler is None:
            theta = rng.standard_normal(spec.param_dim)
        else:
            theta = np.asarray(theta_sampler(rng), dtype=float)
        for i in range(spec.num_players):
            val = float(spec.objective(x, theta, i))
            if not np.isfinite(val):
                raise NonFiniteValue(
                    f"objective for player {i} returned a non-finite value", point=x
                )
            max_obj = max(max_obj, abs(val))
            g = np.asarray(spec.objective_gradient(x, theta, i), dtype=float)
            blk = spec.block(i)

            def f_of_block(u, _x=x, _theta=theta, _i=i, _blk=blk):
                z = _x.copy()
                z[_blk] = u
                return np.array([spec.objective(z, _theta, _i)])

            fd = central_difference(f_of_block, x[blk])[0]
            dev = float(
                np.max(np.abs(fd - g)) / max(1.0, float(np.max(np.abs(g))))
            )
            max_grad = max(max_grad, dev)
            if spec.constraint_dim > 0:
                jac = np.asarray(spec.constraint_jacobian(x, theta, i), dtype=float)
                if jac.shape != (spec.constraint_dim, spec.joint_dim):
                    raise DimensionMismatch(
                        f"constraint_jacobian for player {i} has shape "
                        f"{jac.shape}, expected "
                        f"({spec.constraint_dim}, {spec.joint_dim})"
                    )
                fd_jac = central_difference(
                    lambda z, _theta=theta, _i=i: spec.constraint(z, _theta, _i), x
                )
                dev = float(
                    np.max(np.abs(fd_jac - jac))
                    / max(1.0, float(np.max(np.abs(jac))))
                )
                max_jac = max(max_jac, dev)
    return ConsistencyReport(max_grad, max_jac, max_obj, num_points, tolerance)
