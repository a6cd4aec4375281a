"""Goal-directed safe tuning loop (COAt-MPC) with Constrained Expansion.

Each iteration picks a goal by UCB inside the optimistic set, then either
stops (goal certified to eps), samples the pessimistic point closest to the
goal that is still uncertain, or samples the goal itself.  Every evaluated
point lies in the pessimistic set at the moment it is chosen.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, InputError, TerminalError
from .gp import BetaSchedule, GpModel, KernelParams
from .grid import ParamGrid, point_distances
from .sets import (
    ConfidenceState,
    SetState,
    as_mask,
    initial_bounds,
    update_bounds,
    update_sets,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Measurement:
    """Result of one evaluation.

    ``truth`` is the noiseless value when the evaluator knows it (synthetic
    objectives); ``dnf`` marks a failed evaluation.
    """

    y: float
    dnf: bool = False
    truth: float | None = None


class EvaluationFailure(Exception):
    """Raised by evaluators when an evaluation did not produce a value."""


@dataclass(frozen=True)
class TunerConfig:
    epsilon: float = 0.1
    max_iters: int = 70
    beta: BetaSchedule = field(default_factory=BetaSchedule)
    lipschitz: float = 1.0
    tau: float | None = None
    tau_scale: float | None = None
    kernel: KernelParams = field(default_factory=KernelParams)
    noise_sigma: float = 0.05
    prior_mean: str | float = "seed"
    rng_seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.lipschitz >= 0:
            raise ConfigError(f"lipschitz constant must be >= 0, got {self.lipschitz}")
        if (self.tau is None) == (self.tau_scale is None):
            raise ConfigError("exactly one of tau and tau_scale must be set")
        if self.tau_scale is not None and self.tau_scale < 1:
            raise ConfigError(f"tau_scale must be >= 1, got {self.tau_scale}")
        if not self.noise_sigma > 0:
            raise ConfigError(f"noise sigma must be > 0, got {self.noise_sigma}")
        if isinstance(self.prior_mean, str) and self.prior_mean not in ("seed", "tau", "zero"):
            raise ConfigError(f"prior_mean must be 'seed', 'tau', 'zero' or a number, got {self.prior_mean!r}")

    def resolve_offset(self, first_measurement: float, tau: float) -> float:
        """Raw performance value that maps to the GP prior mean of zero."""
        if self.prior_mean == "seed":
            return float(first_measurement)
        if self.prior_mean == "tau":
            return float(tau)
        if self.prior_mean == "zero":
            return 0.0
        return float(self.prior_mean)

    def resolve_tau(self, first_measurement: float) -> float:
        if self.tau is not None:
            return float(self.tau)
        return make_tau(first_measurement, self.tau_scale)


def make_tau(first_measurement: float, tau_scale: float) -> float:
    """Threshold as a multiple of the first seed measurement.

    On a negative-lap-time scale a factor above one loosens the bound.
    """
    if tau_scale < 1:
        raise ConfigError(f"tau_scale must be >= 1, got {tau_scale}")
    return tau_scale * first_measurement


@dataclass(frozen=True)
class RunRecord:
    n: int
    theta_index: int
    theta_coords: tuple[float, ...]
    measurement: float
    tau: float
    violated: bool
    goal_index: int
    pess_size: int
    opti_size: int
    wall_millis: float
    truth: float | None = None
    dnf: bool = False


@dataclass(frozen=True, eq=False)
class TunerState:
    n: int
    grid: ParamGrid
    config: TunerConfig
    gp: GpModel
    cs: ConfidenceState
    ss: SetState
    tau: float
    offset: float
    goal: int | None = None
    terminated: bool = False
    reason: str = ""
    history: tuple[RunRecord, ...] = ()
    seed_record: RunRecord | None = None

    @property
    def tau_internal(self) -> float:
        return self.tau - self.offset

    @property
    def converged(self) -> bool:
        return self.terminated and self.reason == "converged"


def initial_state(config: TunerConfig, grid: ParamGrid, seed_set: Sequence[int], tau: float,
                  offset: float = 0.0) -> TunerState:
    """State before any evaluation: pessimistic set = seed, optimistic set = domain."""
    seed_list = [int(i) for i in seed_set]
    if not seed_list:
        raise InputError("seed set must not be empty")
    gp = GpModel.empty(config.kernel, config.noise_sigma ** 2, grid)
    mu0, sigma0 = gp.posterior()
    tau_int = tau - offset
    cs = initial_bounds(mu0, sigma0, config.beta(1), seed_list, tau_int)
    ss = SetState.initial(seed_list, grid.total, config.lipschitz, config.epsilon, tau_int)
    return TunerState(0, grid, config, gp, cs, ss, float(tau), float(offset), goal=seed_list[0])


def select_goal(ss: SetState, cs: ConfidenceState, exclude: np.ndarray | None = None) -> int:
    """UCB argmax over the optimistic set; ties go to the lowest flat index."""
    cand = ss.opti if exclude is None else ss.opti & ~exclude
    idx = np.flatnonzero(cand)
    if idx.size == 0:
        raise TerminalError("optimistic set exhausted")
    return int(idx[np.argmax(cs.u[idx])])


def check_termination(goal: int, ss: SetState, cs: ConfidenceState, eps: float) -> bool:
    return bool(ss.pess[goal]) and bool(cs.u[goal] - cs.l[goal] < eps)


def constrained_expansion(ss: SetState, cs: ConfidenceState, goal: int, g: ParamGrid) -> int | None:
    """Pessimistic point closest to ``goal`` whose width is still >= eps.

    Returns None when every pessimistic point is eps-accurate.
    """
    idx = np.flatnonzero(ss.pess & (cs.width >= ss.epsilon))
    if idx.size == 0:
        return None
    d = point_distances(g.coords[idx], g.coords[goal])
    return int(idx[np.argmin(d)])


def evaluate_safely(evaluate: Callable[[int], object], index: int) -> Measurement:
    """Call the evaluator, turning any failure into a DNF measurement."""
    try:
        out = evaluate(index)
    except Exception as exc:  # evaluator crashes must not end the run
        log.warning("evaluation at index %d failed: %s", index, exc)
        return Measurement(math.nan, dnf=True)
    if isinstance(out, Measurement):
        return out
    y = float(out)
    if not math.isfinite(y):
        return Measurement(math.nan, dnf=True)
    return Measurement(y)


def observe(state: TunerState, n: int, index: int, m: Measurement, goal: int,
            started: float | None = None, update_set_state: bool = True) -> TunerState:
    """Add a measurement to the model, tighten bounds, expand sets and log it."""
    tau = state.tau
    if m.dnf:
        y = tau - 3.0 * state.config.noise_sigma
    else:
        y = m.y
    if m.dnf:
        violated = True
    elif m.truth is not None:
        violated = m.truth < tau
    else:
        violated = y < tau

    gp = state.gp.add_observation(index, y - state.offset)
    mu, sigma = gp.posterior()
    cs = update_bounds(state.cs, mu, sigma, state.config.beta(max(n, 1)))
    ss = update_sets(state.ss, cs, state.grid) if update_set_state else state.ss
    elapsed = 0.0 if started is None else (time.perf_counter() - started) * 1e3
    rec = RunRecord(
        n=n,
        theta_index=int(index),
        theta_coords=tuple(float(v) for v in state.grid.to_physical(state.grid.coords[index])),
        measurement=float(y),
        tau=float(tau),
        violated=bool(violated),
        goal_index=int(goal),
        pess_size=int(ss.pess.sum()),
        opti_size=int(ss.opti.sum()),
        wall_millis=elapsed,
        truth=m.truth,
        dnf=m.dnf,
    )
    if n == 0:
        return replace(state, gp=gp, cs=cs, ss=ss, seed_record=rec)
    return replace(state, n=n, gp=gp, cs=cs, ss=ss, history=state.history + (rec,))


def start(config: TunerConfig, grid: ParamGrid, seed_set: Sequence[int],
          evaluate: Callable[[int], object]) -> TunerState:
    """Evaluate the first seed point, fix tau and the offset, and fold it in."""
    seed_list = [int(i) for i in seed_set]
    if not seed_list:
        raise InputError("seed set must not be empty")
    t0 = time.perf_counter()
    first = evaluate_safely(evaluate, seed_list[0])
    if first.dnf:
        raise TerminalError(f"seed evaluation at index {seed_list[0]} failed")
    tau = config.resolve_tau(first.y)
    if first.y < tau:
        log.warning("first seed measurement %.4g is below tau %.4g; seed may be infeasible",
                    first.y, tau)
    offset = config.resolve_offset(first.y, tau)
    state = initial_state(config, grid, seed_list, tau, offset)
    return observe(state, 0, seed_list[0], first, seed_list[0], t0)


def choose_sample(state: TunerState) -> tuple[int, int | None, str]:
    """Goal and sample index for the next iteration.

    Returns ``(goal, sample, reason)``; ``sample`` is None when the run ends
    (``reason`` is then "converged" or "exhausted").
    """
    ss, cs = state.ss, state.cs
    exclude = np.zeros(state.grid.total, dtype=bool)
    while True:
        try:
            goal = select_goal(ss, cs, exclude)
        except TerminalError:
            fallback = np.flatnonzero(ss.pess)
            return int(fallback[np.argmax(cs.l[fallback])]), None, "exhausted"
        if check_termination(goal, ss, cs, ss.epsilon):
            return goal, None, "converged"
        if ss.pess[goal]:
            return goal, goal, ""
        sample = constrained_expansion(ss, cs, goal, state.grid)
        if sample is not None:
            return goal, sample, ""
        # The whole pessimistic set is eps-accurate, so every goal outside
        # it would fail the same way: drop them all from this round.
        exclude |= ~ss.pess


def tuner_step(state: TunerState, evaluate: Callable[[int], object]) -> TunerState:
    if state.terminated:
        raise InputError("run already terminated")
    if state.n >= state.config.max_iters:
        raise InputError("iteration budget exhausted")
    t0 = time.perf_counter()
    goal, sample, reason = choose_sample(state)
    if sample is None:
        return replace(state, goal=goal, terminated=True, reason=reason)
    if not state.ss.pess[sample]:
        raise AssertionError(f"sample {sample} is outside the pessimistic set")
    m = evaluate_safely(evaluate, sample)
    new = observe(state, state.n + 1, sample, m, goal, t0)
    return replace(new, goal=goal)


def run(config: TunerConfig, grid: ParamGrid, seed_set: Sequence[int],
        evaluate: Callable[[int], object],
        callback: Callable[[TunerState], None] | None = None) -> tuple[int, TunerState]:
    """Tune until certified or out of budget.

    Returns the recommended flat index (the last goal) and the final state.
    """
    state = start(config, grid, seed_set, evaluate)
    if callback is not None:
        callback(state)
    while not state.terminated and state.n < config.max_iters:
        state = tuner_step(state, evaluate)
        if callback is not None:
            callback(state)
    if not state.terminated:
        state = replace(state, reason="budget")
    return int(state.goal), state
