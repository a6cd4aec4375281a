"""Batch execution of repetitions and the per-iteration log schema.

Random streams: each repetition has a base seed (``rng_seeds[r]`` or
``rng_seed + r``).  A ``numpy.random.SeedSequence`` built from it is split
with ``spawn(2)`` into child 0, which picks the seed point when the seed
comes from the objective's seed zone, and child 1, which drives the
measurement noise (PCG64 bit generator for both).  Repetitions therefore
never share a stream and their results do not depend on scheduling.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..baselines import run_algorithm
from ..bench.metrics import measurement_stats
from ..bench.sim import SimEvaluator, ToyCarParams, load_track
from ..bench.synthetic import NoiseModel, SyntheticEvaluator, SyntheticObjective
from ..bench.synthetic import load as load_synthetic
from ..errors import ConfigError
from ..grid import ParamGrid
from ..tuner import RunRecord, TunerState
from .config import ExperimentConfig

log = logging.getLogger(__name__)

THREADS_ENV = "COAT_TUNER_THREADS"

#: per-iteration CSV columns; ``theta`` expands to one column per dimension
CSV_COLUMNS = ("n", "theta_idx", "theta", "y", "truth", "tau", "violated", "dnf",
               "goal_idx", "pess_size", "opti_size", "rep", "wall_ms")


def csv_header(dims: int) -> list[str]:
    out = []
    for c in CSV_COLUMNS:
        if c == "theta":
            out.extend(f"theta_{k}" for k in range(dims))
        else:
            out.append(c)
    return out


def _num(v: float | None) -> str:
    """Shortest round-trip text for a float (blank for None)."""
    if v is None:
        return ""
    return repr(float(v))


def record_row(rec: RunRecord, rep: int, timing: bool) -> list[str]:
    return [
        str(rec.n), str(rec.theta_index), *(_num(c) for c in rec.theta_coords),
        _num(rec.measurement), _num(rec.truth), _num(rec.tau),
        str(int(rec.violated)), str(int(rec.dnf)), str(rec.goal_index),
        str(rec.pess_size), str(rec.opti_size), str(rep),
        f"{rec.wall_millis:.3f}" if timing else "",
    ]


@dataclass
class Objective:
    """Resolved objective: evaluator factory plus what the oracles need."""

    kind: str
    name: str
    grid: ParamGrid
    lipschitz: float
    tau: float | None
    tau_scale: float | None
    make_evaluator: Callable[[NoiseModel], Callable[[int], object]]
    synthetic: SyntheticObjective | None = None
    truth: np.ndarray | None = field(default=None, repr=False)

    @property
    def q_star(self) -> float | None:
        return None if self.truth is None else float(self.truth.max())


def resolve_objective(cfg: ExperimentConfig) -> Objective:
    g = cfg.grid()
    if cfg.objective_kind == "synthetic":
        obj = load_synthetic(cfg.objective_name)
        if obj.dims != g.dims:
            raise ConfigError(f"objective {obj.name!r} is {obj.dims}-D but the grid is {g.dims}-D")
        lip = obj.lipschitz if cfg.lipschitz == "objective" else float(cfg.lipschitz)
        tau, scale = cfg.tau, cfg.tau_scale
        if tau is None and scale is None:
            tau = obj.tau
        return Objective("synthetic", obj.name, g, lip, tau, scale,
                         lambda noise: SyntheticEvaluator(obj, g, noise), obj, obj.on_grid(g))
    track = load_track(cfg.objective_name)
    params = ToyCarParams()
    return Objective("sim", track.name, g, float(cfg.lipschitz), cfg.tau, cfg.tau_scale,
                     lambda noise: SimEvaluator(track, g, params, noise))


def pick_seed(cfg: ExperimentConfig, objective: Objective, rng: np.random.Generator) -> list[int]:
    g = objective.grid
    if cfg.seed_coords:
        return [g.physical_to_index(p) for p in cfg.seed_coords]
    cands = objective.synthetic.seed_candidates(g)
    if cands.size == 0:
        raise ConfigError(f"objective {objective.name!r} has no grid point in its seed zone")
    return [int(rng.choice(cands))]


@dataclass
class RepResult:
    rep: int
    rng_seed: int
    seed_set: list[int]
    recommendation: int
    state: TunerState = field(repr=False)
    rows: list[list[str]] = field(repr=False)
    summary: dict = field(repr=False)


def run_repetition(cfg: ExperimentConfig, rep: int,
                   callback: Callable[[TunerState], None] | None = None) -> RepResult:
    """One independent run; pure given ``(cfg, rep)``.

    ``callback`` receives every intermediate tuner state (used by checks
    that need more than the log, such as bound monotonicity).
    """
    objective = resolve_objective(cfg)
    base = cfg.seeds()[rep]
    seed_ss, noise_ss = np.random.SeedSequence(base).spawn(2)
    seed_set = pick_seed(cfg, objective, np.random.Generator(np.random.PCG64(seed_ss)))
    noise = NoiseModel(cfg.noise_sigma if cfg.noise_inject else 0.0, noise_ss)
    evaluate = objective.make_evaluator(noise)
    tc = cfg.tuner_config(objective.lipschitz, base, objective.tau, objective.tau_scale)
    rec, state = run_algorithm(cfg.algorithm, tc, objective.grid, seed_set, evaluate, callback)
    records = (state.seed_record,) + state.history
    rows = [record_row(r, rep, cfg.record_timing) for r in records]
    return RepResult(rep, base, seed_set, rec, state, rows, summarize(state, rep, base, rec, objective))


def summarize(state: TunerState, rep: int, base_seed: int, rec: int, objective: Objective) -> dict:
    """Per-repetition summary; statistics cover the tuning iterations (n >= 1)."""
    hist = state.history
    ys = [r.measurement for r in hist]
    stats = measurement_stats(ys)
    g = objective.grid
    out = {
        "rep": rep,
        "rng_seed": base_seed,
        "seed_index": state.seed_record.theta_index,
        "iterations": state.n,
        "converged": state.converged,
        "reason": state.reason,
        "recommendation": rec,
        "recommendation_coords": [float(c) for c in g.to_physical(g.coords[rec])],
        "violations": int(sum(r.violated for r in hist)),
        "dnf": int(sum(r.dnf for r in hist)),
        "min": stats["min"],
        "mean": stats["mean"],
        "std": stats["std"],
        "tau": state.tau,
        "seed_measurement": state.seed_record.measurement,
        "pess_size": int(state.ss.pess.sum()),
        "opti_size": int(state.ss.opti.sum()),
    }
    if objective.truth is not None:
        out["recommendation_truth"] = float(objective.truth[rec])
    return out


def aggregate(summaries: list[dict]) -> dict:
    """Means over repetitions, in repetition order (recomputable from the CSV)."""
    def mean(key):
        vals = [s[key] for s in summaries if s[key] is not None]
        return float(np.mean(vals)) if vals else None

    return {
        "repetitions": len(summaries),
        "violations": mean("violations"),
        "min": mean("min"),
        "mean": mean("mean"),
        "std": mean("std"),
        "iterations": mean("iterations"),
        "converged_fraction": float(np.mean([bool(s["converged"]) for s in summaries])),
    }


def worker_count(n_jobs: int) -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
        if cap < 1:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_jobs))


def run_all(cfg: ExperimentConfig) -> list[RepResult]:
    """Run every repetition, in a process pool when more than one worker is allowed."""
    reps = list(range(cfg.repetitions))
    workers = worker_count(len(reps))
    if workers == 1:
        results = []
        for r in reps:
            results.append(run_repetition(cfg, r))
            log.info("repetition %d done: %d iterations, %s", r, results[-1].state.n,
                     results[-1].state.reason)
        return results
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_repetition, [cfg] * len(reps), reps))


def best_known(results: list[RepResult], objective: Objective) -> float:
    """Regret reference: the exact grid maximum, else the best finished measurement."""
    if objective.q_star is not None:
        return objective.q_star
    ys = [r.measurement for res in results for r in (res.state.seed_record,) + res.state.history
          if not r.dnf and math.isfinite(r.measurement)]
    return max(ys)
