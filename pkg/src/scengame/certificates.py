"""Scenario sampling and sample-complexity certificates.

The certificates bound, with confidence ``1 - delta``, both the empirical
objective error and the chance-constraint feasibility of any point that is
feasible for all sampled constraints.  Two variants are provided: a general
one, and a tighter one for games whose constraints are separable per player.

Certificates are reported, never enforced: the solver runs for any sample
size.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .game import GameSpec

Array = np.ndarray

MAX_SAMPLE_SEARCH = 10**8


class CertificateError(Exception):
    pass


@dataclass(frozen=True)
class BoxSampler:
    """Coordinate-wise uniform sampler on the box [lows, highs]."""

    lows: tuple[float, ...]
    highs: tuple[float, ...]
    name: str = "uniform_box"

    def __post_init__(self):
        if len(self.lows) != len(self.highs):
            raise CertificateError("lows and highs must have equal length")
        for lo, hi in zip(self.lows, self.highs):
            if lo > hi:
                raise CertificateError(f"empty range: lo={lo} > hi={hi}")

    @property
    def dim(self) -> int:
        return len(self.lows)

    def draw(self, rng: np.random.Generator, count: int) -> Array:
        lows = np.asarray(self.lows)
        highs = np.asarray(self.highs)
        return lows + (highs - lows) * rng.random((count, self.dim))


@dataclass(frozen=True)
class ScenarioSet:
    """S i.i.d. parameter draws together with the seed that produced them."""

    scenarios: Array  # (S, d)
    seed: int
    sampler_id: str

    def __post_init__(self):
        scen = np.asarray(self.scenarios, dtype=float)
        if scen.ndim != 2 or scen.shape[0] < 1:
            raise CertificateError("scenarios must be a non-empty (S, d) array")
        if not np.all(np.isfinite(scen)):
            raise CertificateError("scenarios contain non-finite values")
        object.__setattr__(self, "scenarios", scen)
        scen.setflags(write=False)

    @property
    def size(self) -> int:
        return self.scenarios.shape[0]

    @property
    def param_dim(self) -> int:
        return self.scenarios.shape[1]


def sample_scenarios(sampler: BoxSampler, S: int, seed: int) -> ScenarioSet:
    """Draw S i.i.d. scenarios; bit-identical regeneration for a fixed seed."""
    if S < 1:
        raise CertificateError("S must be >= 1")
    rng = np.random.default_rng(seed)
    return ScenarioSet(sampler.draw(rng, S), seed=seed, sampler_id=sampler.name)


@dataclass(frozen=True)
class CertificateQuery:
    """Inputs of the closed-form confidence bounds."""

    sample_size: int
    failure_prob: float  # per-scenario constraint failure probability
    objective_tol: float  # allowed empirical-mean objective error
    objective_bound: float
    num_players: int
    decision_dim: int
    separable: bool = False

    def __post_init__(self):
        if not (0.0 < self.failure_prob < 1.0):
            raise CertificateError("failure_prob must lie in (0, 1)")
        if self.objective_tol <= 0.0:
            raise CertificateError("objective_tol must be positive")
        if self.objective_bound <= 0.0:
            raise CertificateError("objective_bound must be positive")
        if self.sample_size < 1:
            raise CertificateError("sample_size must be >= 1")
        if self.num_players < 1 or self.decision_dim < 1:
            raise CertificateError("num_players and decision_dim must be >= 1")


def binomial_tail(S: int, eps: float, k_max: int) -> float:
    """Lower binomial tail sum_{l=0}^{k_max} C(S,l) eps^l (1-eps)^(S-l).

    Evaluated in log space (exact integer binomials, shifted exponentials,
    compensated summation) so that S in the thousands with k_max of a few
    dozen neither overflows nor loses precision.
    """
    if not (0.0 < eps < 1.0):
        raise CertificateError("eps must lie in (0, 1)")
    if k_max < 0 or k_max > S:
        raise CertificateError(f"k_max={k_max} outside [0, {S}]")
    if k_max == S:
        return 1.0  # full support, exact
    log_eps = math.log(eps)
    log_1m = math.log1p(-eps)
    logs = [
        math.log(math.comb(S, l)) + l * log_eps + (S - l) * log_1m
        for l in range(k_max + 1)
    ]
    m = max(logs)
    if m == -math.inf:
        return 0.0
    total = math.fsum(math.exp(lt - m) for lt in logs)
    return min(1.0, math.exp(m) * total if m > -700.0 else math.exp(m + math.log(total)))


def _exp_term(q: CertificateQuery) -> float:
    return (
        2.0
        * q.num_players
        * math.exp(
            -q.sample_size * q.objective_tol**2 / (4.0 * q.objective_bound**2)
        )
    )


def delta_prop1(q: CertificateQuery) -> float:
    """General confidence bound: objective Hoeffding term plus the binomial
    tail over the joint decision dimension."""
    k_max = min(q.sample_size, q.num_players * q.decision_dim - 1)
    tail = binomial_tail(q.sample_size, q.failure_prob, k_max)
    return _exp_term(q) + tail


def delta_prop2(q: CertificateQuery) -> float:
    """Tighter bound for separable constraints: per-player binomial tails over
    the single-player decision dimension, combined by union bound."""
    if not q.separable:
        raise CertificateError(
            "the improved certificate requires per-player independent constraints"
        )
    k_max = min(q.sample_size, q.decision_dim - 1)
    tail = binomial_tail(q.sample_size, q.failure_prob, k_max)
    return _exp_term(q) + q.num_players * tail


def min_samples(target_delta: float, template: CertificateQuery) -> int:
    """Smallest sample size whose certificate meets ``target_delta``.

    Uses the separable bound when ``template.separable`` is set, else the
    general one.  Exponential bracketing followed by bisection over the
    eventually-monotone regime; the answer is verified by direct evaluation
    at S and S-1.
    """
    if not (0.0 < target_delta < 1.0):
        raise CertificateError("target_delta must lie in (0, 1)")
    formula = delta_prop2 if template.separable else delta_prop1

    def delta_at(S: int) -> float:
        return formula(dataclasses.replace(template, sample_size=S))

    if delta_at(1) <= target_delta:
        return 1
    lo, hi = 1, 2
    while delta_at(hi) > target_delta:
        lo = hi
        hi *= 2
        if hi > MAX_SAMPLE_SEARCH:
            raise CertificateError(
                f"no sample size <= {MAX_SAMPLE_SEARCH} achieves "
                f"delta <= {target_delta}; delta({MAX_SAMPLE_SEARCH}) = "
                f"{delta_at(MAX_SAMPLE_SEARCH):.3e}"
            )
    # delta(lo) > target >= delta(hi); bisect on the monotone tail.
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if delta_at(mid) <= target_delta:
            hi = mid
        else:
            lo = mid
    # Walk down through any local non-monotonicity near the boundary.
    while hi > 1 and delta_at(hi - 1) <= target_delta:
        hi -= 1
    assert delta_at(hi) <= target_delta
    assert hi == 1 or delta_at(hi - 1) > target_delta
    return hi


def empirical_objective(
    spec: GameSpec, x: Array, scenarios: ScenarioSet, i: int
) -> float:
    """Mean of f_i over the scenario set, summed in ascending scenario order."""
    x = spec.check_joint(x)
    total = 0.0
    for j in range(scenarios.size):
        val = float(spec.objective(x, scenarios.scenarios[j], i))
        if not math.isfinite(val):
            raise CertificateError(
                f"objective for player {i} is non-finite at scenario {j}"
            )
        total += val
    return total / scenarios.size


def certificate_report(q: CertificateQuery) -> dict:
    """JSON-serializable summary of the certificate for a given query."""
    report = {
        "S": q.sample_size,
        "eps": q.failure_prob,
        "eps_tilde": q.objective_tol,
        "D": q.objective_bound,
        "N": q.num_players,
        "n": q.decision_dim,
        "exp_term": _exp_term(q),
        "tail_term": binomial_tail(
            q.sample_size,
            q.failure_prob,
            min(q.sample_size, q.num_players * q.decision_dim - 1),
        ),
        "delta_prop1": delta_prop1(q),
    }
    if q.separable:
        report["delta_prop2"] = delta_prop2(q)
    return report


def write_certificate(q: CertificateQuery, path) -> dict:
    report = certificate_report(q)
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report
