"""Primal-dual interior-point core for joint KKT systems.

Solves systems of the form

    R(w, v) = 0,   h(w) <= 0,   v >= 0,   v .* h(w) = 0,

where ``R`` stacks the players' stationarity equations and is affine in the
multipliers ``v`` through a placement matrix ``B(w)`` (``dR/dv = B``).  Slack
variables ``s = -h(w)`` are kept explicit; the perturbed complementarity
``v .* s = mu`` is driven to zero geometrically.  Each Newton step is
condensed onto the primal block, so the linear solves stay ``dim x dim``
regardless of the number of constraint rows.

The core is deterministic: no randomized restarts, no pivots depending on
timing.  It is shared by the per-scenario subgame solver and the centralized
reference solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Array = np.ndarray

FRACTION_TO_BOUNDARY = 0.995
SIGMA = 0.2  # geometric reduction factor for the barrier parameter
REGULARIZATION = 1e-8


class IPError(Exception):
    pass


class IPMaxIterations(IPError):
    """Iteration budget exhausted; carries the best iterate found."""

    def __init__(self, message: str, result: "IPResult"):
        super().__init__(message)
        self.result = result


@dataclass
class KKTSystem:
    """Callbacks defining one complementarity system.

    ``stationarity(w, v)`` includes the multiplier term ``B(w) @ v``.
    ``stationarity_jacobian(w, v)`` is ``dR/dw`` at fixed ``v`` (including any
    constraint-curvature contribution); when absent it is approximated by
    central differences of ``stationarity``.
    """

    dim: int
    num_rows: int
    stationarity: Callable[[Array, Array], Array]
    constraints: Optional[Callable[[Array], Array]] = None
    constraint_jacobian: Optional[Callable[[Array], Array]] = None  # (m, dim)
    multiplier_matrix: Optional[Callable[[Array], Array]] = None  # (dim, m)
    stationarity_jacobian: Optional[Callable[[Array, Array], Array]] = None

    def jac(self, w: Array, v: Array) -> Array:
        if self.stationarity_jacobian is not None:
            return np.asarray(self.stationarity_jacobian(w, v), dtype=float)
        from .game import central_difference

        return central_difference(lambda z: self.stationarity(z, v), w)


@dataclass
class IPResult:
    w: Array
    v: Array
    s: Array
    iterations: int
    stationarity_residual: float
    feasibility_violation: float
    complementarity_residual: float
    converged: bool


def residuals(system: KKTSystem, w: Array, v: Array) -> tuple[float, float, float]:
    """(stationarity, feasibility, complementarity) inf-norms at (w, v)."""
    stat = float(np.max(np.abs(system.stationarity(w, v)), initial=0.0))
    if system.num_rows == 0:
        return stat, 0.0, 0.0
    h = np.asarray(system.constraints(w), dtype=float)
    feas = float(np.max(np.maximum(h, 0.0), initial=0.0))
    comp = float(np.max(np.abs(v * h), initial=0.0))
    return stat, feas, comp


def _solve_reg(mat: Array, rhs: Array) -> Array:
    try:
        sol = np.linalg.solve(mat, rhs)
        if np.all(np.isfinite(sol)):
            return sol
    except np.linalg.LinAlgError:
        pass
    n = mat.shape[0]
    return np.linalg.solve(mat + REGULARIZATION * np.eye(n), rhs)


def solve_kkt(
    system: KKTSystem,
    w0: Array,
    v0: Optional[Array] = None,
    tol_stationarity: float = 1e-8,
    tol_feasibility: float = 1e-9,
    tol_complementarity: float = 1e-8,
    max_iter: int = 100,
) -> IPResult:
    """Run the interior-point iteration from (w0, v0) to the stated tolerances.

    Raises :class:`IPMaxIterations` (carrying the best iterate) when the
    budget runs out.  Infeasibility classification is the caller's job.
    """
    w = np.array(w0, dtype=float)
    m = system.num_rows
    if m == 0:
        return _solve_unconstrained(system, w, tol_stationarity, max_iter)

    h = np.asarray(system.constraints(w), dtype=float)
    if v0 is None:
        v = np.full(m, 1.0)
    else:
        v = np.maximum(np.asarray(v0, dtype=float), 1e-8)
    s = np.maximum(-h, 1e-2)

    best: Optional[IPResult] = None
    for it in range(max_iter):
        r_stat = np.asarray(system.stationarity(w, v), dtype=float)
        if not np.all(np.isfinite(r_stat)):
            raise IPError("non-finite stationarity residual")
        h = np.asarray(system.constraints(w), dtype=float)
        stat = float(np.max(np.abs(r_stat)))
        feas = float(np.max(np.maximum(h, 0.0)))
        comp = float(np.max(np.abs(v * h)))
        result = IPResult(w.copy(), v.copy(), s.copy(), it, stat, feas, comp, False)
        if best is None or (stat + feas + comp) < (
            best.stationarity_residual
            + best.feasibility_violation
            + best.complementarity_residual
        ):
            best = result
        if (
            stat <= tol_stationarity
            and feas <= tol_feasibility
            and comp <= tol_complementarity
        ):
            result.converged = True
            return result

        mu = SIGMA * float(v @ s) / m
        r_pri = h + s
        r_comp = v * s - mu

        K = system.jac(w, v)
        B = np.asarray(system.multiplier_matrix(w), dtype=float)
        J = np.asarray(system.constraint_jacobian(w), dtype=float)

        # Condense (dv, ds) out of the Newton system.
        ratio = v / s
        rhs_v = r_pri - r_comp / v
        mat = K + B @ (ratio[:, None] * J)
        rhs = -(r_stat + B @ (ratio * rhs_v))
        dw = _solve_reg(mat, rhs)
        dv = ratio * (J @ dw + rhs_v)
        ds = -(r_comp + s * dv) / v

        alpha = 1.0
        neg = ds < 0
        if np.any(neg):
            alpha = min(alpha, FRACTION_TO_BOUNDARY * float(np.min(-s[neg] / ds[neg])))
        neg = dv < 0
        if np.any(neg):
            alpha = min(alpha, FRACTION_TO_BOUNDARY * float(np.min(-v[neg] / dv[neg])))

        merit0 = _merit(system, w, v, s, mu)
        accepted = False
        a = alpha
        for _ in range(20):
            w_t = w + a * dw
            v_t = v + a * dv
            s_t = s + a * ds
            if np.all(v_t > 0) and np.all(s_t > 0):
                if _merit(system, w_t, v_t, s_t, mu) < merit0:
                    accepted = True
                    break
            a *= 0.5
        if not accepted:
            # Take the damped step anyway; the barrier keeps iterates interior.
            a = max(a, 1e-10)
            w_t = w + a * dw
            v_t = np.maximum(v + a * dv, 1e-14)
            s_t = np.maximum(s + a * ds, 1e-14)
        w, v, s = w_t, v_t, s_t

    raise IPMaxIterations(
        f"no convergence in {max_iter} interior-point iterations "
        f"(best residuals: stationarity={best.stationarity_residual:.3e}, "
        f"feasibility={best.feasibility_violation:.3e}, "
        f"complementarity={best.complementarity_residual:.3e})",
        best,
    )


def _merit(system: KKTSystem, w: Array, v: Array, s: Array, mu: float) -> float:
    r_stat = np.asarray(system.stationarity(w, v), dtype=float)
    h = np.asarray(system.constraints(w), dtype=float)
    if not (np.all(np.isfinite(r_stat)) and np.all(np.isfinite(h))):
        return np.inf
    return float(r_stat @ r_stat + (h + s) @ (h + s) + (v * s - mu) @ (v * s - mu))


def _solve_unconstrained(
    system: KKTSystem, w: Array, tol: float, max_iter: int
) -> IPResult:
    v = np.empty(0)
    for it in range(max_iter):
        r = np.asarray(system.stationarity(w, v), dtype=float)
        stat = float(np.max(np.abs(r), initial=0.0))
        if stat <= tol:
            return IPResult(w, v, np.empty(0), it, stat, 0.0, 0.0, True)
        K = system.jac(w, v)
        dw = _solve_reg(K, -r)
        a = 1.0
        norm0 = float(r @ r)
        for _ in range(30):
            r_t = np.asarray(system.stationarity(w + a * dw, v), dtype=float)
            if np.all(np.isfinite(r_t)) and float(r_t @ r_t) < norm0:
                break
            a *= 0.5
        w = w + a * dw
    r = np.asarray(system.stationarity(w, v), dtype=float)
    stat = float(np.max(np.abs(r), initial=0.0))
    raise IPMaxIterations(
        f"no convergence in {max_iter} Newton iterations (stationarity={stat:.3e})",
        IPResult(w, v, np.empty(0), max_iter, stat, 0.0, 0.0, False),
    )
