"""Batch command-line front-end.

Subcommands: ``certify`` (closed-form confidence bounds), ``solve`` (one
consensus run with trace CSV and summary JSON), ``compare`` (consensus run
against the centralized oracle), ``sweep`` (solve over a list of sample
sizes, combined CSV).

Configuration is a single INI-style file with one flat section per concern;
unknown sections or keys are rejected.  All randomness derives from one root
seed: the scenario set of every run is drawn with exactly that seed, so the
same config file reproduces byte-identical traces.

Exit codes: 0 success / converged, 1 configuration error, 2 iteration budget
exhausted or oracle refusal, 3 inner-solver failure.

Worker-count precedence: ``--workers`` flag, then the ``SCENGAME_THREADS``
environment variable, then the config file.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import io
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import admm, oracle
from .admm import AdmmConfig
from .certificates import CertificateQuery, sample_scenarios, write_certificate
from .game import GameSpec
from .quadratic import QuadraticConfig
from .quadratic import build_game as build_quadratic
from .rendezvous import RendezvousConfig
from .rendezvous import build_game as build_rendezvous

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BUDGET = 2
EXIT_INNER = 3

THREADS_ENV = "SCENGAME_THREADS"

PROBLEMS = ("rendezvous", "decoupled_quadratic")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    problem: str = "rendezvous"
    sample_size: int = 10
    seed: int = 0
    out: str = "out"
    admm: AdmmConfig = field(default_factory=AdmmConfig)
    failure_prob: float = 0.05
    objective_tol: float = 0.5
    rendezvous: RendezvousConfig = field(default_factory=RendezvousConfig)
    quadratic: QuadraticConfig = field(default_factory=QuadraticConfig)
    sweep_sizes: tuple[int, ...] = (10, 50, 100)

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(
                f"unknown problem {self.problem!r}; choose from {PROBLEMS}"
            )
        if self.sample_size < 1:
            raise ConfigError("sample_size must be >= 1")
        if not self.sweep_sizes:
            raise ConfigError("sweep sizes must be non-empty")


def _parse_pair(raw: str) -> tuple[float, float]:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"expected 'lo, hi', got {raw!r}")
    return (float(parts[0]), float(parts[1]))


def _parse_floats(raw: str) -> tuple[float, ...]:
    return tuple(float(p) for p in raw.split(",") if p.strip())


def _parse_ints(raw: str) -> tuple[int, ...]:
    return tuple(int(p) for p in raw.split(",") if p.strip())


_SCHEMA = {
    "run": {"problem": str, "sample_size": int, "seed": int, "out": str},
    "admm": {
        "rho": float,
        "tol": float,
        "max_iter": int,
        "workers": int,
        "inner_tol": float,
        "inner_feasibility_tol": float,
        "inner_max_iter": int,
        "record_iterates": bool,
        "time_limit_s": float,
    },
    "certificate": {"failure_prob": float, "objective_tol": float},
    "rendezvous": {
        "horizon": int,
        "dt": float,
        "pos_range_p1": _parse_pair,
        "pos_range_p2": _parse_pair,
        "p_entry_range": _parse_pair,
        "b_entry_range": _parse_pair,
        "objective_bound": float,
    },
    "quadratic": {
        "num_players": int,
        "decision_dim": int,
        "curvatures": _parse_floats,
        "target_range": _parse_pair,
        "objective_bound": float,
    },
    "sweep": {"sizes": _parse_ints},
}


def load_config(path) -> RunConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        values[section] = {}
        for key, raw in parser[section].items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            conv = _SCHEMA[section][key]
            try:
                if conv is bool:
                    values[section][key] = parser[section].getboolean(key)
                else:
                    values[section][key] = conv(raw)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(
                    f"bad value for {key!r} in [{section}]: {raw!r} ({exc})"
                ) from exc

    run = values.get("run", {})
    cert = values.get("certificate", {})
    try:
        cfg = RunConfig(
            problem=run.get("problem", "rendezvous"),
            sample_size=run.get("sample_size", 10),
            seed=run.get("seed", 0),
            out=run.get("out", "out"),
            admm=AdmmConfig(**values.get("admm", {})),
            failure_prob=cert.get("failure_prob", 0.05),
            objective_tol=cert.get("objective_tol", 0.5),
            rendezvous=RendezvousConfig(**values.get("rendezvous", {})),
            quadratic=QuadraticConfig(**values.get("quadratic", {})),
            sweep_sizes=values.get("sweep", {}).get("sizes", (10, 50, 100)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def dump_config(cfg: RunConfig) -> str:
    """Serialize to the INI format ``load_config`` reads (round-trip safe)."""
    parser = configparser.ConfigParser()
    parser["run"] = {
        "problem": cfg.problem,
        "sample_size": _fmt(cfg.sample_size),
        "seed": _fmt(cfg.seed),
        "out": cfg.out,
    }
    a = cfg.admm
    parser["admm"] = {
        "rho": _fmt(a.rho),
        "tol": _fmt(a.tol),
        "max_iter": _fmt(a.max_iter),
        "workers": _fmt(a.workers),
        "inner_tol": _fmt(a.inner_tol),
        "inner_feasibility_tol": _fmt(a.inner_feasibility_tol),
        "inner_max_iter": _fmt(a.inner_max_iter),
        "record_iterates": _fmt(a.record_iterates),
    }
    if a.time_limit_s is not None:
        parser["admm"]["time_limit_s"] = _fmt(a.time_limit_s)
    parser["certificate"] = {
        "failure_prob": _fmt(cfg.failure_prob),
        "objective_tol": _fmt(cfg.objective_tol),
    }
    r = cfg.rendezvous
    parser["rendezvous"] = {
        "horizon": _fmt(r.horizon),
        "dt": _fmt(r.dt),
        "pos_range_p1": _fmt(r.pos_range_p1),
        "pos_range_p2": _fmt(r.pos_range_p2),
        "p_entry_range": _fmt(r.p_entry_range),
        "b_entry_range": _fmt(r.b_entry_range),
        "objective_bound": _fmt(r.objective_bound),
    }
    q = cfg.quadratic
    parser["quadratic"] = {
        "num_players": _fmt(q.num_players),
        "decision_dim": _fmt(q.decision_dim),
        "curvatures": _fmt(q.curvatures),
        "target_range": _fmt(q.target_range),
        "objective_bound": _fmt(q.objective_bound),
    }
    parser["sweep"] = {"sizes": _fmt(cfg.sweep_sizes)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def build_problem(cfg: RunConfig) -> tuple[GameSpec, "object"]:
    if cfg.problem == "rendezvous":
        return build_rendezvous(cfg.rendezvous)
    return build_quadratic(cfg.quadratic)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_certify(cfg: RunConfig, out_dir: Path) -> int:
    spec, _ = build_problem(cfg)
    query = CertificateQuery(
        sample_size=cfg.sample_size,
        failure_prob=cfg.failure_prob,
        objective_tol=cfg.objective_tol,
        objective_bound=spec.objective_bound,
        num_players=spec.num_players,
        decision_dim=spec.decision_dim,
        separable=spec.separable_constraints,
    )
    report = write_certificate(query, out_dir / "certificate.json")
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def _run_once(cfg: RunConfig, S: int, record_iterates: Optional[bool] = None):
    spec, sampler = build_problem(cfg)
    scenarios = sample_scenarios(sampler, S, cfg.seed)
    acfg = dataclasses.replace(cfg.admm)
    if record_iterates is not None:
        acfg.record_iterates = record_iterates
    result = admm.run(spec, scenarios, acfg)
    return spec, scenarios, result


def _summary(result: admm.AdmmResult) -> dict:
    last = result.trace.rows[-1] if result.trace.rows else None
    return {
        "status": result.status,
        "iterations": result.iterations,
        "final_consensus_residual": last.consensus_residual if last else None,
        "vi_residual": result.vi_residual,
        "max_multiplier_imbalance": result.max_multiplier_imbalance,
        "wall_time_s": result.wall_time_s,
        "inner_time_ms": result.total_inner_ms,
        "x": [float(v) for v in result.x],
        "failure_scenario": result.failure_scenario,
        "failure_message": result.failure_message,
    }


def _status_exit(status: str) -> int:
    if status == admm.STATUS_CONVERGED:
        return EXIT_OK
    if status == admm.STATUS_INNER_FAILURE:
        return EXIT_INNER
    return EXIT_BUDGET


def cmd_solve(cfg: RunConfig, out_dir: Path) -> int:
    _, _, result = _run_once(cfg, cfg.sample_size)
    result.trace.write_csv(out_dir / "trace.csv")
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(_summary(result), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"status={result.status} iterations={result.iterations}")
    return _status_exit(result.status)


def cmd_compare(cfg: RunConfig, out_dir: Path) -> int:
    spec, sampler = build_problem(cfg)
    scenarios = sample_scenarios(sampler, cfg.sample_size, cfg.seed)
    try:
        t0 = time.perf_counter()
        ref = oracle.solve_centralized(spec, scenarios)
        oracle_s = time.perf_counter() - t0
    except oracle.OracleSizeError as exc:
        print(f"oracle refused: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    acfg = dataclasses.replace(cfg.admm)
    result = admm.run(spec, scenarios, acfg, reference=ref)
    report = {
        "status": result.status,
        "iterations": result.iterations,
        "deviation_inf": float(np.max(np.abs(result.x - ref.x_star))),
        "admm_wall_s": result.wall_time_s,
        "oracle_wall_s": oracle_s,
        "lyapunov": [row.lyapunov for row in result.trace.rows],
        "final_lyapunov": result.final_lyapunov,
    }
    with open(out_dir / "compare.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"status={result.status} deviation_inf={report['deviation_inf']:.3e}"
    )
    return _status_exit(result.status)


def cmd_sweep(cfg: RunConfig, out_dir: Path) -> int:
    rows = []
    worst = EXIT_OK
    for S in cfg.sweep_sizes:
        spec, scenarios, result = _run_once(cfg, S)
        sub = out_dir / f"S_{S}"
        sub.mkdir(parents=True, exist_ok=True)
        result.trace.write_csv(sub / "trace.csv")
        with open(sub / "summary.json", "w") as fh:
            json.dump(_summary(result), fh, indent=2, sort_keys=True)
            fh.write("\n")
        denom = min(S, max(cfg.admm.workers, 1))
        rows.append(
            (
                S,
                result.iterations,
                result.total_inner_ms,
                result.total_inner_ms / denom,
            )
        )
        worst = max(worst, _status_exit(result.status))
        print(f"S={S} status={result.status} iterations={result.iterations}")
    with open(out_dir / "sweep.csv", "w") as fh:
        fh.write("S,iterations,wall_ms_sequential,wall_ms_parallel_estimate\n")
        for S, iters, seq, par in rows:
            fh.write(f"{S},{iters},{seq:.3f},{par:.3f}\n")
    return worst


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scengame",
        description="Scenario-game solver and certificate front-end",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("certify", "solve", "compare", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None)
        p.add_argument("--out", type=Path, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
    return parser


def _resolve(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    env = os.environ.get(THREADS_ENV)
    if env is not None:
        try:
            cfg.admm.workers = int(env)
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
    if args.workers is not None:
        cfg.admm.workers = args.workers
    if cfg.admm.workers < 1:
        raise ConfigError("workers must be >= 1")
    if args.out is not None:
        cfg.out = str(args.out)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    handler = {
        "certify": cmd_certify,
        "solve": cmd_solve,
        "compare": cmd_compare,
        "sweep": cmd_sweep,
    }[args.command]
    return handler(cfg, out_dir)


if __name__ == "__main__":
    sys.exit(main())
