"""Consensus ADMM over sampled scenarios.

Each outer iteration solves the S per-scenario subgames (independently, so
they can run on worker processes), averages the results into the consensus
decision, and updates the per-scenario multipliers.  The loop stops when the
squared consensus residual ||w(k+1) - M x(k)||^2 falls below the configured
tolerance; by construction the multipliers then certify an equilibrium of the
sampled game.

Trace rows are written per completed outer iteration.  Row k records the
Lyapunov value at the *start* of iteration k (when a reference triple is
supplied) and the consensus residual produced *during* iteration k, so
consecutive rows can be used to verify the descent inequality
V(k+1) <= V(k) - rho * ||w(k+1) - M x(k)||^2.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .certificates import ScenarioSet
from .game import GameSpec, pseudogradient
from .inner import (
    InnerSolverError,
    KKTPoint,
    ScenarioSubproblem,
    solve_subgame,
)

Array = np.ndarray

ZERO_SUM_TOL = 1e-10

STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max_iter"
STATUS_INNER_FAILURE = "inner_failure"


class AdmmError(Exception):
    pass


@dataclass
class AdmmConfig:
    rho: float = 5.0
    tol: float = 1e-8  # threshold on the squared consensus residual
    max_iter: int = 5000
    workers: int = 1  # worker processes for the scenario phase
    inner_tol: float = 1e-8
    inner_feasibility_tol: float = 1e-9
    inner_max_iter: int = 100
    record_trace: bool = True
    record_iterates: bool = False  # keep full (w, x, lambda) history
    time_limit_s: Optional[float] = None

    def __post_init__(self):
        if self.rho <= 0 or self.tol <= 0:
            raise AdmmError("rho and tol must be positive")
        if self.workers < 1:
            raise AdmmError("workers must be >= 1")


@dataclass
class ConsensusState:
    """The iterate triple: per-scenario decisions, consensus, multipliers."""

    w: Array  # (S, joint_dim)
    x: Array  # (joint_dim,)
    lam: Array  # (S, joint_dim)
    iteration: int = 0


@dataclass
class TraceRow:
    k: int
    consensus_residual: float  # ||w(k+1) - M x(k)||^2
    dual_change: float  # ||lambda(k+1) - lambda(k)||_F
    lyapunov: Optional[float]  # V(k), start of the iteration
    inner_iter_min: int
    inner_iter_mean: float
    inner_iter_max: int
    phase_ms_inner: float
    phase_ms_outer: float


CSV_HEADER = [
    "k",
    "consensus_residual",
    "dual_change",
    "lyapunov",
    "inner_iter_min",
    "inner_iter_mean",
    "inner_iter_max",
    "phase_ms_inner",
    "phase_ms_outer",
]


@dataclass
class SolverTrace:
    rows: list[TraceRow] = field(default_factory=list)

    def to_csv(self, include_timing: bool = True) -> str:
        buf = io.StringIO()
        header = CSV_HEADER if include_timing else CSV_HEADER[:-2]
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for r in self.rows:
            row = [
                r.k,
                repr(r.consensus_residual),
                repr(r.dual_change),
                "" if r.lyapunov is None else repr(r.lyapunov),
                r.inner_iter_min,
                repr(r.inner_iter_mean),
                r.inner_iter_max,
            ]
            if include_timing:
                row += [f"{r.phase_ms_inner:.3f}", f"{r.phase_ms_outer:.3f}"]
            writer.writerow(row)
        return buf.getvalue()

    def write_csv(self, path, include_timing: bool = True) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv(include_timing=include_timing))


@dataclass
class RunHistory:
    """Full iterate history for invariant replay (small instances only)."""

    xs: list[Array] = field(default_factory=list)  # x(0..K)
    lams: list[Array] = field(default_factory=list)  # lambda(0..K)
    ws: list[Array] = field(default_factory=list)  # w(1..K)
    max_constraint: list[float] = field(default_factory=list)  # max_j max h(w^j(k+1))
    lyapunov: list[float] = field(default_factory=list)  # V(0..K) when reference given


@dataclass
class AdmmResult:
    x: Array
    state: ConsensusState
    trace: SolverTrace
    status: str
    iterations: int
    inner_points: list[KKTPoint]
    vi_residual: Optional[float]
    final_lyapunov: Optional[float]
    max_multiplier_imbalance: float
    wall_time_s: float
    history: Optional[RunHistory] = None
    failure_scenario: Optional[int] = None
    failure_iteration: Optional[int] = None
    failure_message: Optional[str] = None
    total_inner_ms: float = 0.0


ReferenceTriple = tuple[Array, Array, Array]  # (w*, x*, lambda*)


def _as_reference(reference) -> Optional[ReferenceTriple]:
    if reference is None:
        return None
    if isinstance(reference, tuple):
        w_star, x_star, lam_star = reference
    else:  # oracle.ReferenceSolution duck-typing
        w_star, x_star, lam_star = reference.w_star, reference.x_star, reference.lambda_star
    return (
        np.asarray(w_star, dtype=float),
        np.asarray(x_star, dtype=float),
        np.asarray(lam_star, dtype=float),
    )


def consensus_update(w: Array, lam: Array, rho: float) -> Array:
    """x_i <- (1/S) sum_j (lambda_i^j / rho + w_i^j), pairwise fixed order."""
    if rho <= 0:
        raise AdmmError("rho must be positive")
    S = w.shape[0]
    return np.add.reduce(lam / rho + w, axis=0) / S


def dual_update(lam: Array, w: Array, x_new: Array, rho: float) -> Array:
    """lambda_i^j <- lambda_i^j + rho (w_i^j - x_i)."""
    if rho <= 0:
        raise AdmmError("rho must be positive")
    return lam + rho * (w - x_new[None, :])


def consensus_residual(w: Array, x_prev: Array) -> float:
    """Squared Euclidean violation of the consensus constraints."""
    diff = w - x_prev[None, :]
    return float(np.sum(diff * diff))


def lyapunov(lam: Array, x: Array, reference, rho: float) -> float:
    """(1/rho) ||lambda - lambda*||^2 + rho * S * ||x - x*||^2.

    The factor S comes from the consensus map replicating x once per scenario.
    """
    _, x_star, lam_star = _as_reference(reference)
    S = lam.shape[0]
    dlam = lam - lam_star
    dx = x - x_star
    return float((dlam * dlam).sum() / rho + rho * S * float(dx @ dx))


def multiplier_imbalance(lam: Array) -> float:
    """inf-norm of the per-player multiplier sums (zero at every iterate k>=1)."""
    return float(np.max(np.abs(np.add.reduce(lam, axis=0)), initial=0.0))


def zero_sum_ok(lam: Array, tol: float = ZERO_SUM_TOL) -> bool:
    scale = max(1.0, float(np.max(np.abs(lam), initial=0.0)))
    return multiplier_imbalance(lam) <= tol * scale


def vi_optimality_residual(
    spec: GameSpec,
    scenarios: ScenarioSet,
    w: Array,
    x: Array,
    lam: Array,
    inner_points: Sequence[KKTPoint],
) -> float:
    """inf-norm of the stacked equilibrium operator at the iterate.

    Three blocks: per-scenario stationarity with the inequality multipliers
    realizing the constraint subgradients, the per-player multiplier balance,
    and the consensus residual.
    """
    S = scenarios.size
    ell = spec.constraint_dim
    block1 = 0.0
    for j in range(S):
        theta = scenarios.scenarios[j]
        r = pseudogradient(spec, w[j], theta) / S + lam[j]
        if ell > 0:
            v = inner_points[j].v
            for i in range(spec.num_players):
                blk = np.asarray(
                    spec.constraint_jacobian(w[j], theta, i), dtype=float
                )[:, spec.block(i)]
                r[spec.block(i)] += blk.T @ v[i * ell : (i + 1) * ell]
        block1 = max(block1, float(np.max(np.abs(r))))
    block2 = multiplier_imbalance(lam)
    block3 = float(np.max(np.abs(w - x[None, :]), initial=0.0))
    return max(block1, block2, block3)


def lemma3_sides(
    rho: float,
    lam_prev: Array,
    lam_next: Array,
    w_next: Array,
    x_prev: Array,
    x_next: Array,
    reference,
) -> tuple[float, float]:
    """Both sides of the key multiplier/consensus inequality for one step."""
    w_star, _, lam_star = _as_reference(reference)
    lhs = float(((lam_next - lam_star) * (lam_next - lam_prev)).sum()) / rho
    rhs = rho * float(((w_next - w_star) * (x_prev - x_next)[None, :]).sum())
    return lhs, rhs


def lemma3_check(
    rho: float,
    lam_prev: Array,
    lam_next: Array,
    w_next: Array,
    x_prev: Array,
    x_next: Array,
    reference,
    slack: float = 1e-8,
) -> bool:
    lhs, rhs = lemma3_sides(rho, lam_prev, lam_next, w_next, x_prev, x_next, reference)
    return lhs <= rhs + slack * (1.0 + abs(rhs))


def contraction_bound(m: float, L: float, rho: float) -> float:
    """Per-step Lyapunov contraction factor under strong monotonicity.

    With condition number kappa = L/m the bound is
    1 - 1 / (2 kappa^(0.5 + |e|)), e = log_kappa(rho / sqrt(m L)).
    """
    if m <= 0 or L < m or rho <= 0:
        raise AdmmError("need 0 < m <= L and rho > 0")
    kappa = L / m
    # kappa**|e| with e = log_kappa(rho / sqrt(mL)) does not depend on kappa:
    # it equals max(rho / sqrt(mL), sqrt(mL) / rho), which also gives the
    # continuous limit at kappa = 1.
    penalty_mismatch = max(rho / math.sqrt(m * L), math.sqrt(m * L) / rho)
    return 1.0 - 1.0 / (2.0 * math.sqrt(kappa) * penalty_mismatch)


@dataclass
class LinearRateReport:
    bound: float
    ratios: list[float]  # V(k) / V(k-1) per step
    exempt: list[bool]  # steps with a binding constraint (checked vs Thm 1)
    violations: list[int]  # non-exempt steps whose ratio exceeds the bound
    descent_violations: list[int]  # exempt steps violating the descent inequality

    @property
    def ok(self) -> bool:
        return not self.violations and not self.descent_violations


def linear_rate_check(
    history: RunHistory,
    residuals: Sequence[float],
    m: float,
    L: float,
    rho: float,
    binding_margin: float = 1e-6,
    tol: float = 1e-9,
) -> LinearRateReport:
    """Compare recorded Lyapunov ratios against the contraction bound.

    Steps where some scenario constraint is within ``binding_margin`` of
    active are exempt from the linear bound and are instead checked against
    the plain descent inequality V(k) <= V(k-1) - rho * r(k-1).
    """
    if not history.lyapunov:
        raise AdmmError("history carries no Lyapunov values (reference missing)")
    bound = contraction_bound(m, L, rho)
    V = history.lyapunov
    ratios: list[float] = []
    exempt: list[bool] = []
    violations: list[int] = []
    descent_violations: list[int] = []
    for k in range(1, len(V)):
        ratio = V[k] / V[k - 1] if V[k - 1] > 0 else 0.0
        ratios.append(ratio)
        is_exempt = history.max_constraint[k - 1] >= -binding_margin
        exempt.append(is_exempt)
        if is_exempt:
            if V[k] > V[k - 1] - rho * residuals[k - 1] + tol * (1.0 + V[k - 1]):
                descent_violations.append(k)
        elif ratio > bound + tol:
            violations.append(k)
    return LinearRateReport(bound, ratios, exempt, violations, descent_violations)


def suggest_rho(spec: GameSpec, scenarios: ScenarioSet, x: Optional[Array] = None) -> float:
    """Penalty weight near the contraction-optimal sqrt(m L) of the scaled game.

    The subgame objectives carry a 1/S factor, so their curvature range is
    [m/S, L/S]; the suggestion is the geometric mean of the extreme
    eigenvalues of the empirical pseudogradient Jacobian, divided by S.
    Requires an analytic ``pseudogradient_jacobian``; falls back to finite
    differences otherwise.
    """
    from .game import fd_pseudogradient_jacobian

    x = np.zeros(spec.joint_dim) if x is None else spec.check_joint(x)
    S = scenarios.size
    K = np.zeros((spec.joint_dim, spec.joint_dim))
    for j in range(S):
        theta = scenarios.scenarios[j]
        if spec.pseudogradient_jacobian is not None:
            K += np.asarray(spec.pseudogradient_jacobian(x, theta), dtype=float)
        else:
            K += fd_pseudogradient_jacobian(spec, x, theta)
    K /= S
    sym = 0.5 * (K + K.T)
    eigs = np.linalg.eigvalsh(sym)
    m_hat = max(float(eigs[0]), 1e-12)
    L_hat = max(float(eigs[-1]), m_hat)
    return math.sqrt(m_hat * L_hat) / S


# ---------------------------------------------------------------------------
# Scenario phase workers


_WORKER_CTX: dict = {}


def _init_worker(spec, thetas, rho, S, inner_tol, inner_feas_tol, inner_max_iter):
    _WORKER_CTX["spec"] = spec
    _WORKER_CTX["thetas"] = thetas
    _WORKER_CTX["rho"] = rho
    _WORKER_CTX["S"] = S
    _WORKER_CTX["inner"] = (inner_tol, inner_feas_tol, inner_max_iter)


def _solve_scenario_task(args):
    j, x, lam_j, warm_w, warm_v = args
    spec = _WORKER_CTX["spec"]
    thetas = _WORKER_CTX["thetas"]
    tol, feas_tol, max_iter = _WORKER_CTX["inner"]
    sub = ScenarioSubproblem(
        spec, thetas[j], x, lam_j, _WORKER_CTX["rho"], _WORKER_CTX["S"]
    )
    warm = None
    if warm_w is not None:
        warm = KKTPoint(warm_w, warm_v, 0.0, 0.0, 0.0, 0)
    try:
        pt = solve_subgame(sub, warm, tol=tol, feasibility_tol=feas_tol, max_iter=max_iter)
    except InnerSolverError as exc:
        return ("error", j, f"{type(exc).__name__}: {exc}")
    return ("ok", j, pt.w, pt.v, pt.iterations, pt.stationarity_residual,
            pt.feasibility_violation, pt.complementarity_residual)


def run(
    spec: GameSpec,
    scenarios: ScenarioSet,
    cfg: AdmmConfig,
    init: Optional[ConsensusState] = None,
    reference=None,
) -> AdmmResult:
    """Run the outer consensus loop until the stopping test or the budget.

    With ``cfg.workers > 1`` the scenario phase runs on worker processes (the
    spec's callbacks must then be picklable); results are reduced in fixed
    scenario order, so the trace is bit-identical for any worker count.
    """
    S = scenarios.size
    nn = spec.joint_dim
    ref = _as_reference(reference)
    if init is None:
        state = ConsensusState(np.zeros((S, nn)), np.zeros(nn), np.zeros((S, nn)))
    else:
        state = ConsensusState(
            np.array(init.w, dtype=float),
            np.array(init.x, dtype=float),
            np.array(init.lam, dtype=float),
            init.iteration,
        )
    trace = SolverTrace()
    history = RunHistory() if cfg.record_iterates else None
    if history is not None:
        history.xs.append(state.x.copy())
        history.lams.append(state.lam.copy())
        if ref is not None:
            history.lyapunov.append(lyapunov(state.lam, state.x, ref, cfg.rho))

    warm: list[Optional[tuple[Array, Array]]] = [None] * S
    inner_points: list[Optional[KKTPoint]] = [None] * S
    max_imbalance = 0.0
    total_inner_ms = 0.0
    status = STATUS_MAX_ITER
    failure = None
    t_start = time.perf_counter()

    pool = None
    if cfg.workers > 1:
        pool = ProcessPoolExecutor(
            max_workers=cfg.workers,
            initializer=_init_worker,
            initargs=(
                spec,
                scenarios.scenarios,
                cfg.rho,
                S,
                cfg.inner_tol,
                cfg.inner_feasibility_tol,
                cfg.inner_max_iter,
            ),
        )
    else:
        _init_worker(
            spec,
            scenarios.scenarios,
            cfg.rho,
            S,
            cfg.inner_tol,
            cfg.inner_feasibility_tol,
            cfg.inner_max_iter,
        )

    try:
        for k in range(cfg.max_iter):
            iter_start = time.perf_counter()
            tasks = [
                (
                    j,
                    state.x,
                    state.lam[j],
                    warm[j][0] if warm[j] is not None else None,
                    warm[j][1] if warm[j] is not None else None,
                )
                for j in range(S)
            ]
            if pool is not None:
                chunk = max(1, S // (4 * cfg.workers))
                outcomes = list(pool.map(_solve_scenario_task, tasks, chunksize=chunk))
            else:
                outcomes = [_solve_scenario_task(t) for t in tasks]
            inner_ms = (time.perf_counter() - iter_start) * 1e3
            total_inner_ms += inner_ms

            w_new = np.empty((S, nn))
            iters = np.empty(S, dtype=int)
            for out in outcomes:
                if out[0] == "error":
                    _, j, msg = out
                    status = STATUS_INNER_FAILURE
                    failure = (j, k, msg)
                    break
                _, j, wj, vj, itc, stat_r, feas_r, comp_r = out
                w_new[j] = wj
                warm[j] = (wj, vj)
                iters[j] = itc
                inner_points[j] = KKTPoint(wj, vj, stat_r, comp_r, feas_r, itc)
            if failure is not None:
                break
            if not np.all(np.isfinite(w_new)):
                raise AdmmError(f"non-finite scenario iterate at outer iteration {k}")

            residual = consensus_residual(w_new, state.x)
            V_k = lyapunov(state.lam, state.x, ref, cfg.rho) if ref is not None else None
            x_new = consensus_update(w_new, state.lam, cfg.rho)
            lam_new = dual_update(state.lam, w_new, x_new, cfg.rho)
            dual_change = float(np.linalg.norm(lam_new - state.lam))

            scale = max(1.0, float(np.max(np.abs(lam_new), initial=0.0)))
            max_imbalance = max(max_imbalance, multiplier_imbalance(lam_new) / scale)

            state = ConsensusState(w_new, x_new, lam_new, k + 1)
            outer_ms = (time.perf_counter() - iter_start) * 1e3

            if cfg.record_trace:
                trace.rows.append(
                    TraceRow(
                        k,
                        residual,
                        dual_change,
                        V_k,
                        int(iters.min()),
                        float(iters.mean()),
                        int(iters.max()),
                        inner_ms,
                        outer_ms,
                    )
                )
            if history is not None:
                history.xs.append(x_new.copy())
                history.lams.append(lam_new.copy())
                history.ws.append(w_new.copy())
                if spec.constraint_dim > 0:
                    from .game import stacked_constraint

                    history.max_constraint.append(
                        max(
                            float(
                                np.max(
                                    stacked_constraint(
                                        spec, w_new[j], scenarios.scenarios[j]
                                    )
                                )
                            )
                            for j in range(S)
                        )
                    )
                else:
                    history.max_constraint.append(-math.inf)
                if ref is not None:
                    history.lyapunov.append(lyapunov(lam_new, x_new, ref, cfg.rho))

            if residual <= cfg.tol:
                status = STATUS_CONVERGED
                break
            if (
                cfg.time_limit_s is not None
                and time.perf_counter() - t_start > cfg.time_limit_s
            ):
                status = STATUS_MAX_ITER
                break
    finally:
        if pool is not None:
            pool.shutdown()

    wall = time.perf_counter() - t_start
    vi_res = None
    if status == STATUS_CONVERGED and all(p is not None for p in inner_points):
        vi_res = vi_optimality_residual(
            spec, scenarios, state.w, state.x, state.lam, inner_points
        )
    final_V = lyapunov(state.lam, state.x, ref, cfg.rho) if ref is not None else None
    result = AdmmResult(
        x=state.x,
        state=state,
        trace=trace,
        status=status,
        iterations=state.iteration,
        inner_points=[p for p in inner_points if p is not None],
        vi_residual=vi_res,
        final_lyapunov=final_V,
        max_multiplier_imbalance=max_imbalance,
        wall_time_s=wall,
        history=history,
        total_inner_ms=total_inner_ms,
    )
    if failure is not None:
        result.failure_scenario, result.failure_iteration, result.failure_message = failure
    return result
