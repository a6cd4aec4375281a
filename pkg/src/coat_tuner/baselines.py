"""GP-UCB and a SafeOpt-style tuner sharing the GP core of the main loop.

Both run under the same evaluator, budget and kernel settings as
:func:`coat_tuner.tuner.run` so that their logs are directly comparable.
Neither has a termination rule; they always spend the whole budget.
"""

from __future__ import annotations

import enum
import time
from dataclasses import replace
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, TerminalError
from .grid import ParamGrid
from .sets import ConfidenceState, SetState
from .tuner import TunerConfig, TunerState, evaluate_safely, observe, run as run_coat, start


class BaselineKind(str, enum.Enum):
    GP_UCB = "gp_ucb"
    SAFE_OPT = "safe_opt"


ALGORITHMS = ("coat", BaselineKind.GP_UCB.value, BaselineKind.SAFE_OPT.value)


def gp_ucb_step(mu: np.ndarray, sigma: np.ndarray, beta: float) -> int:
    """Unconstrained ``argmax mu + sqrt(beta) sigma``; ties go to the lowest index."""
    acq = np.asarray(mu, dtype=float) + np.sqrt(beta) * np.asarray(sigma, dtype=float)
    return int(np.argmax(acq))


def expanders(safe: np.ndarray, cs: ConfidenceState, ss: SetState, g: ParamGrid) -> np.ndarray:
    """Safe points whose optimistic bound could certify some unsafe point.

    A safe point ``s`` is an expander when an unsafe ``x`` exists with
    ``u(s) - L d(s, x) >= tau``, i.e. the nearest unsafe point lies within
    ``(u(s) - tau) / L``.
    """
    out = np.zeros_like(safe)
    unsafe = np.flatnonzero(~safe)
    if unsafe.size == 0:
        return out
    cand = np.flatnonzero(safe & (cs.u >= ss.tau))
    if cand.size == 0:
        return out
    if ss.lipschitz == 0:
        out[cand] = True
        return out
    dist, _ = cKDTree(g.coords[unsafe]).query(g.coords[cand], k=1)
    out[cand] = cs.u[cand] - ss.lipschitz * dist >= ss.tau
    return out


def safe_opt_step(cs: ConfidenceState, ss: SetState, g: ParamGrid) -> int:
    """Widest point among the potential maximizers and expanders of the safe set.

    The safe set is ``ss.pess``.  Maximizers are safe points whose upper
    bound reaches the best safe lower bound.
    """
    safe = ss.pess
    idx = np.flatnonzero(safe)
    if idx.size == 0:
        raise TerminalError("safe set is empty")
    best_lower = cs.l[idx].max()
    maximizers = safe & (cs.u >= best_lower)
    cand = np.flatnonzero(maximizers | expanders(safe, cs, ss, g))
    if cand.size == 0:  # cannot happen: the best-l point is always a maximizer
        cand = idx
    w = cs.width[cand]
    return int(cand[np.argmax(w)])


def recommend(kind: str, state: TunerState) -> int:
    """Final recommendation of a baseline run.

    GP-UCB returns the best measured point; SafeOpt the safe point with the
    highest lower bound.
    """
    if kind == BaselineKind.GP_UCB.value:
        recs = (state.seed_record,) + state.history
        return max(recs, key=lambda r: (r.measurement, -r.n)).theta_index
    safe = np.flatnonzero(state.ss.pess)
    return int(safe[np.argmax(state.cs.l[safe])])


def run_baseline(kind: str, config: TunerConfig, grid: ParamGrid, seed_set: Sequence[int],
                 evaluate: Callable[[int], object],
                 callback: Callable[[TunerState], None] | None = None) -> tuple[int, TunerState]:
    """Run a baseline for the full budget; same return contract as ``tuner.run``."""
    kind = BaselineKind(kind).value
    state = start(config, grid, seed_set, evaluate)
    if callback is not None:
        callback(state)
    use_sets = kind == BaselineKind.SAFE_OPT.value
    while state.n < config.max_iters:
        t0 = time.perf_counter()
        if use_sets:
            index = safe_opt_step(state.cs, state.ss, grid)
        else:
            mu, sigma = state.gp.posterior()
            index = gp_ucb_step(mu, sigma, config.beta(state.n + 1))
        m = evaluate_safely(evaluate, index)
        state = replace(observe(state, state.n + 1, index, m, index, t0, update_set_state=use_sets),
                        goal=index)
        if callback is not None:
            callback(state)
    rec = recommend(kind, state)
    return rec, replace(state, goal=rec, reason="budget")


def run_algorithm(algorithm: str, config: TunerConfig, grid: ParamGrid, seed_set: Sequence[int],
                  evaluate: Callable[[int], object],
                  callback: Callable[[TunerState], None] | None = None) -> tuple[int, TunerState]:
    """Dispatch on ``algorithm`` (coat, gp_ucb or safe_opt)."""
    if algorithm == "coat":
        return run_coat(config, grid, seed_set, evaluate, callback)
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"algorithm must be one of {', '.join(ALGORITHMS)}, got {algorithm!r}")
    return run_baseline(algorithm, config, grid, seed_set, evaluate, callback)
