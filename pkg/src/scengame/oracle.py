"""Centralized reference solvers used as correctness anchors in tests.

``solve_centralized`` solves the sampled game directly in the single shared
decision vector, with every scenario's constraints stacked into one KKT
system (no splitting).  From its solution it reconstructs the consensus
multipliers that the decentralized algorithm converges to, yielding a full
reference triple (w*, x*, lambda*) for Lyapunov and equivalence tests.

``extragradient_reference`` is an independent, slower second opinion for
unconstrained or box-constrained instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ipcore
from .certificates import ScenarioSet
from .game import GameSpec, fd_pseudogradient_jacobian, pseudogradient, stacked_constraint

Array = np.ndarray

MAX_CONSTRAINT_ROWS = 10**5


class OracleError(Exception):
    pass


class OracleSizeError(OracleError):
    """Instance too large for the dense reference factorizations."""


class InfeasibleScenarioSet(OracleError):
    """The intersection of all sampled constraint sets is empty."""


@dataclass
class ReferenceSolution:
    """An optimal triple of the consensus formulation.

    ``w_star`` is ``x_star`` replicated once per scenario; ``lambda_star``
    holds the per-scenario consensus multipliers (zero-sum over scenarios for
    each player); ``v_star`` the per-scenario inequality multipliers.
    """

    x_star: Array  # (joint_dim,)
    w_star: Array  # (S, joint_dim)
    lambda_star: Array  # (S, joint_dim)
    v_star: Array  # (S, num_players * constraint_dim)
    stationarity_residual: float
    feasibility_violation: float
    complementarity_residual: float
    iterations: int


def _scenario_jacobians(spec: GameSpec, x: Array, theta: Array) -> Array:
    """Full stacked constraint Jacobian for one scenario, players ascending."""
    return np.vstack(
        [
            np.asarray(spec.constraint_jacobian(x, theta, i), dtype=float)
            for i in range(spec.num_players)
        ]
    )


def solve_centralized(
    spec: GameSpec,
    scenarios: ScenarioSet,
    tol: float = 1e-9,
    feasibility_tol: float = 1e-10,
    max_iter: int = 200,
) -> ReferenceSolution:
    """Solve the sampled game as one stacked KKT system in x.

    Player i's stationarity couples the empirical objective gradient with all
    scenarios' constraint rows:

        (1/S) sum_j grad_i f_i(x; theta_j) + sum_j B_i(x; theta_j)' v_i^j = 0.

    Dense linear algebra only; refuses instances beyond the size guard.
    """
    S = scenarios.size
    N = spec.num_players
    ell = spec.constraint_dim
    nn = spec.joint_dim
    if S * N * ell > MAX_CONSTRAINT_ROWS:
        raise OracleSizeError(
            f"{S * N * ell} stacked constraint rows exceed the dense-oracle "
            f"guard of {MAX_CONSTRAINT_ROWS}"
        )
    thetas = scenarios.scenarios
    m_per = N * ell  # rows per scenario
    m = S * m_per

    def stationarity(x: Array, v: Array) -> Array:
        r = np.zeros(nn)
        for j in range(S):
            r += pseudogradient(spec, x, thetas[j])
        r /= S
        if ell > 0:
            for j in range(S):
                vj = v[j * m_per : (j + 1) * m_per]
                for i in range(N):
                    blk = np.asarray(
                        spec.constraint_jacobian(x, thetas[j], i), dtype=float
                    )[:, spec.block(i)]
                    r[spec.block(i)] += blk.T @ vj[i * ell : (i + 1) * ell]
        return r

    def constraints(x: Array) -> Array:
        return np.concatenate([stacked_constraint(spec, x, thetas[j]) for j in range(S)])

    def constraint_jacobian(x: Array) -> Array:
        return np.vstack([_scenario_jacobians(spec, x, thetas[j]) for j in range(S)])

    def multiplier_matrix(x: Array) -> Array:
        B = np.zeros((nn, m))
        for j in range(S):
            for i in range(N):
                blk = np.asarray(
                    spec.constraint_jacobian(x, thetas[j], i), dtype=float
                )[:, spec.block(i)]
                cols = slice(j * m_per + i * ell, j * m_per + (i + 1) * ell)
                B[spec.block(i), cols] = blk.T
        return B

    def stationarity_jacobian(x: Array, v: Array) -> Array:
        K = np.zeros((nn, nn))
        for j in range(S):
            if spec.pseudogradient_jacobian is not None:
                K += np.asarray(spec.pseudogradient_jacobian(x, thetas[j]), dtype=float)
            else:
                K += fd_pseudogradient_jacobian(spec, x, thetas[j])
        K /= S
        if ell > 0:
            for j in range(S):
                vj = v[j * m_per : (j + 1) * m_per]
                for i in range(N):
                    v_i = vj[i * ell : (i + 1) * ell]
                    if spec.constraint_curvature is not None:
                        curv = np.asarray(
                            spec.constraint_curvature(x, thetas[j], i, v_i),
                            dtype=float,
                        )
                    else:
                        from .game import central_difference

                        curv = central_difference(
                            lambda z, _j=j, _i=i, _v=v_i: np.asarray(
                                spec.constraint_jacobian(z, thetas[_j], _i),
                                dtype=float,
                            )[:, spec.block(_i)].T
                            @ _v,
                            x,
                        )
                    K[spec.block(i), :] += curv
        return K

    system = ipcore.KKTSystem(
        dim=nn,
        num_rows=m,
        stationarity=stationarity,
        constraints=constraints if ell > 0 else None,
        constraint_jacobian=constraint_jacobian if ell > 0 else None,
        multiplier_matrix=multiplier_matrix if ell > 0 else None,
        stationarity_jacobian=stationarity_jacobian,
    )
    try:
        res = ipcore.solve_kkt(
            system,
            np.zeros(nn),
            tol_stationarity=tol,
            tol_feasibility=feasibility_tol,
            tol_complementarity=tol,
            max_iter=max_iter,
        )
    except ipcore.IPMaxIterations as exc:
        _check_scenario_feasibility(spec, scenarios, exc.result.w)
        raise OracleError(str(exc)) from exc

    x_star = res.w
    v_star = res.v.reshape(S, m_per) if ell > 0 else np.zeros((S, 0))
    lambda_star = np.empty((S, nn))
    for j in range(S):
        lam = -pseudogradient(spec, x_star, thetas[j]) / S
        if ell > 0:
            for i in range(N):
                blk = np.asarray(
                    spec.constraint_jacobian(x_star, thetas[j], i), dtype=float
                )[:, spec.block(i)]
                lam[spec.block(i)] -= blk.T @ v_star[j, i * ell : (i + 1) * ell]
        lambda_star[j] = lam
    w_star = np.tile(x_star, (S, 1))
    return ReferenceSolution(
        x_star,
        w_star,
        lambda_star,
        v_star,
        res.stationarity_residual,
        res.feasibility_violation,
        res.complementarity_residual,
        res.iterations,
    )


def _check_scenario_feasibility(
    spec: GameSpec, scenarios: ScenarioSet, x_start: Array
) -> None:
    from scipy.optimize import minimize

    thetas = scenarios.scenarios

    def violation(x: Array) -> float:
        total = 0.0
        for j in range(scenarios.size):
            h = stacked_constraint(spec, x, thetas[j])
            viol = np.maximum(h, 0.0)
            total += 0.5 * float(viol @ viol)
        return total

    res = minimize(
        violation, np.asarray(x_start, dtype=float), method="L-BFGS-B",
        options={"maxiter": 500},
    )
    if res.fun > 1e-12:
        raise InfeasibleScenarioSet(
            "the intersection of the sampled constraint sets is empty "
            f"(violation {np.sqrt(2 * res.fun):.3e}); the certificates assume "
            "a non-empty sampled feasible set"
        )


def extragradient_reference(
    spec: GameSpec,
    scenarios: ScenarioSet,
    step: float,
    iters: int,
    box: Optional[tuple[Array, Array]] = None,
    x0: Optional[Array] = None,
) -> Array:
    """Projected two-step extragradient on the empirical pseudogradient.

    Supports box constraints only; meant as a loose-tolerance second opinion,
    not a production solver.  Raises on divergence (iterate norm > 1e6).
    """
    thetas = scenarios.scenarios

    def F(x: Array) -> Array:
        total = np.zeros(spec.joint_dim)
        for j in range(scenarios.size):
            total += pseudogradient(spec, x, thetas[j])
        return total / scenarios.size

    def project(x: Array) -> Array:
        if box is None:
            return x
        lo, hi = box
        return np.clip(x, lo, hi)

    x = np.zeros(spec.joint_dim) if x0 is None else np.array(x0, dtype=float)
    for _ in range(iters):
        x_half = project(x - step * F(x))
        x = project(x - step * F(x_half))
        if float(np.linalg.norm(x)) > 1e6:
            raise OracleError("extragradient iteration diverged (norm > 1e6)")
    return x
