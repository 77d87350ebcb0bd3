"""Per-scenario subgame solver.

For one scenario the consensus algorithm needs a joint KKT point of the
N-player game in which player i minimizes

    f_i(w; theta) / S  +  lambda_i' (w_i - x_i)  +  (rho/2) ||w_i - x_i||^2

subject to its own constraint stack ``h_i(w; theta) <= 0``.  All players'
stationarity conditions are solved simultaneously by the interior-point core;
the quadratic penalty makes the joint operator strongly monotone, so the
primal solution is unique and warm starting cannot change the answer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ipcore
from .game import GameSpec, fd_pseudogradient_jacobian, pseudogradient, stacked_constraint

Array = np.ndarray


class InnerSolverError(Exception):
    pass


class InnerMaxIterations(InnerSolverError):
    """The interior-point budget ran out; carries the best iterate."""

    def __init__(self, message: str, best: "KKTPoint"):
        super().__init__(message)
        self.best = best


class InfeasibleSubproblem(InnerSolverError):
    """No strictly feasible point was found for the scenario constraints."""


@dataclass(frozen=True)
class ScenarioSubproblem:
    """One scenario's augmented subgame: (spec, theta, consensus point, duals)."""

    spec: GameSpec
    theta: Array
    x_ref: Array  # current consensus iterate, length joint_dim
    lambda_ref: Array  # stacked consensus multipliers, length joint_dim
    rho: float
    num_scenarios: int = 1  # the objective is scaled by 1 / num_scenarios

    def __post_init__(self):
        if self.rho <= 0:
            raise InnerSolverError("rho must be positive")
        if self.num_scenarios < 1:
            raise InnerSolverError("num_scenarios must be >= 1")
        object.__setattr__(self, "theta", self.spec.check_theta(self.theta))
        object.__setattr__(self, "x_ref", self.spec.check_joint(self.x_ref, "x_ref"))
        object.__setattr__(
            self, "lambda_ref", self.spec.check_joint(self.lambda_ref, "lambda_ref")
        )


@dataclass
class KKTPoint:
    """A per-scenario primal-dual point with its accepted residuals."""

    w: Array  # joint primal, length joint_dim
    v: Array  # constraint multipliers, length num_players * constraint_dim
    stationarity_residual: float
    complementarity_residual: float
    feasibility_violation: float
    iterations: int


def _own_jacobian_blocks(spec: GameSpec, w: Array, theta: Array) -> list[Array]:
    """Per-player (constraint_dim x decision_dim) own-block Jacobian slices."""
    return [
        np.asarray(spec.constraint_jacobian(w, theta, i), dtype=float)[:, spec.block(i)]
        for i in range(spec.num_players)
    ]


def _build_system(p: ScenarioSubproblem) -> ipcore.KKTSystem:
    spec = p.spec
    theta = p.theta
    n = spec.decision_dim
    ell = spec.constraint_dim
    nn = spec.joint_dim
    m = spec.num_players * ell
    inv_s = 1.0 / p.num_scenarios

    def stationarity(w: Array, v: Array) -> Array:
        r = inv_s * pseudogradient(spec, w, theta)
        r += p.lambda_ref + p.rho * (w - p.x_ref)
        if ell > 0:
            for i, blk in enumerate(_own_jacobian_blocks(spec, w, theta)):
                r[spec.block(i)] += blk.T @ v[i * ell : (i + 1) * ell]
        return r

    def constraints(w: Array) -> Array:
        return stacked_constraint(spec, w, theta)

    def constraint_jacobian(w: Array) -> Array:
        rows = [
            np.asarray(spec.constraint_jacobian(w, theta, i), dtype=float)
            for i in range(spec.num_players)
        ]
        return np.vstack(rows)

    def multiplier_matrix(w: Array) -> Array:
        B = np.zeros((nn, m))
        for i, blk in enumerate(_own_jacobian_blocks(spec, w, theta)):
            B[spec.block(i), i * ell : (i + 1) * ell] = blk.T
        return B

    def stationarity_jacobian(w: Array, v: Array) -> Array:
        if spec.pseudogradient_jacobian is not None:
            K = inv_s * np.asarray(spec.pseudogradient_jacobian(w, theta), dtype=float)
        else:
            K = inv_s * fd_pseudogradient_jacobian(spec, w, theta)
        K = K + p.rho * np.eye(nn)
        if ell > 0:
            for i in range(spec.num_players):
                v_i = v[i * ell : (i + 1) * ell]
                if spec.constraint_curvature is not None:
                    curv = np.asarray(
                        spec.constraint_curvature(w, theta, i, v_i), dtype=float
                    )
                else:
                    from .game import central_difference

                    curv = central_difference(
                        lambda z, _i=i, _v=v_i: np.asarray(
                            spec.constraint_jacobian(z, theta, _i), dtype=float
                        )[:, spec.block(_i)].T
                        @ _v,
                        w,
                    )
                K[spec.block(i), :] += curv
        return K

    return ipcore.KKTSystem(
        dim=nn,
        num_rows=m,
        stationarity=stationarity,
        constraints=constraints if ell > 0 else None,
        constraint_jacobian=constraint_jacobian if ell > 0 else None,
        multiplier_matrix=multiplier_matrix if ell > 0 else None,
        stationarity_jacobian=stationarity_jacobian,
    )


def _check_feasibility(p: ScenarioSubproblem, w_start: Array) -> None:
    """Look for a strictly feasible point; raise InfeasibleSubproblem if the
    scenario constraint set appears empty.  Only called after a failed solve."""
    from scipy.optimize import minimize

    spec = p.spec

    def violation(w: Array) -> float:
        h = stacked_constraint(spec, w, p.theta)
        viol = np.maximum(h, 0.0)
        return 0.5 * float(viol @ viol)

    def violation_grad(w: Array) -> Array:
        h = stacked_constraint(spec, w, p.theta)
        viol = np.maximum(h, 0.0)
        rows = [
            np.asarray(spec.constraint_jacobian(w, p.theta, i), dtype=float)
            for i in range(spec.num_players)
        ]
        return np.vstack(rows).T @ viol

    res = minimize(
        violation,
        np.asarray(w_start, dtype=float),
        jac=violation_grad,
        method="L-BFGS-B",
        options={"maxiter": 500, "ftol": 1e-16, "gtol": 1e-12},
    )
    if res.fun > 1e-12:
        raise InfeasibleSubproblem(
            f"no feasible point found for the scenario constraints "
            f"(residual {np.sqrt(2 * res.fun):.3e})"
        )


def solve_subgame(
    p: ScenarioSubproblem,
    warm_start: Optional[KKTPoint] = None,
    tol: float = 1e-8,
    feasibility_tol: float = 1e-9,
    max_iter: int = 100,
) -> KKTPoint:
    """Solve one scenario's augmented subgame to a joint KKT point.

    Returns a point with stationarity/feasibility/complementarity residuals
    within the given tolerances and nonnegative multipliers.  Raises
    :class:`InfeasibleSubproblem` when the constraint set is (numerically)
    empty, :class:`InnerMaxIterations` otherwise on budget exhaustion.
    """
    system = _build_system(p)
    if warm_start is not None:
        w0 = warm_start.w
        v0 = warm_start.v if warm_start.v.size else None
    else:
        w0 = p.x_ref
        v0 = None
    try:
        res = ipcore.solve_kkt(
            system,
            w0,
            v0,
            tol_stationarity=tol,
            tol_feasibility=feasibility_tol,
            tol_complementarity=tol,
            max_iter=max_iter,
        )
    except ipcore.IPMaxIterations as exc:
        best = exc.result
        _check_feasibility(p, best.w)
        raise InnerMaxIterations(
            str(exc),
            KKTPoint(
                best.w,
                best.v,
                best.stationarity_residual,
                best.complementarity_residual,
                best.feasibility_violation,
                best.iterations,
            ),
        ) from exc
    return KKTPoint(
        res.w,
        res.v,
        res.stationarity_residual,
        res.complementarity_residual,
        res.feasibility_violation,
        res.iterations,
    )


@dataclass(frozen=True)
class KKTResidual:
    stationarity: float
    feasibility: float
    complementarity: float


def kkt_residual(p: ScenarioSubproblem, point: KKTPoint) -> KKTResidual:
    """Residuals of the joint KKT conditions at an arbitrary point."""
    system = _build_system(p)
    stat, feas, comp = ipcore.residuals(system, point.w, point.v)
    return KKTResidual(stat, feas, comp)
