"""Intersected confidence bounds and the Lipschitz set operators.

Index sets are boolean masks over the flat grid.  The one-step operators
are implemented directly (vectorized brute force); their fixed points,
which the tuner needs every iteration, go through the compiled closure
kernel in :mod:`coat_tuner.kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import kernels
from .errors import InputError
from .grid import ParamGrid

_CHUNK = 512


@dataclass(frozen=True, eq=False)
class ConfidenceState:
    """Lower/upper bounds per grid point after ``n`` updates."""

    l: np.ndarray
    u: np.ndarray
    n: int = 0

    @property
    def width(self) -> np.ndarray:
        return self.u - self.l


@dataclass(frozen=True, eq=False)
class SetState:
    """Seed, pessimistic and optimistic sets plus the operator constants."""

    seed: np.ndarray
    pess: np.ndarray
    opti: np.ndarray
    lipschitz: float
    epsilon: float
    tau: float

    @classmethod
    def initial(cls, seed, total: int, lipschitz: float, epsilon: float, tau: float) -> "SetState":
        seed_mask = as_mask(seed, total)
        if not seed_mask.any():
            raise InputError("seed set must not be empty")
        return cls(
            seed=seed_mask,
            pess=seed_mask.copy(),
            opti=np.ones(total, dtype=bool),
            lipschitz=float(lipschitz),
            epsilon=float(epsilon),
            tau=float(tau),
        )


def as_mask(s, total: int) -> np.ndarray:
    """Boolean mask from an index collection or an existing mask."""
    s = np.asarray(s if not isinstance(s, (set, frozenset)) else sorted(s))
    if s.dtype == bool:
        if s.shape != (total,):
            raise InputError(f"mask has shape {s.shape}, expected ({total},)")
        return s.copy()
    mask = np.zeros(total, dtype=bool)
    if s.size:
        idx = s.astype(np.int64).ravel()
        if idx.min() < 0 or idx.max() >= total:
            raise InputError("index set contains out-of-range indices")
        mask[idx] = True
    return mask


def to_indices(mask: np.ndarray) -> frozenset[int]:
    return frozenset(int(i) for i in np.flatnonzero(mask))


def initial_bounds(mu0, sigma0, beta1: float, seed=None, tau: float | None = None) -> ConfidenceState:
    """Prior bounds ``mu0 -/+ sqrt(beta1) sigma0``.

    With ``seed`` and ``tau`` given, the lower bound on seed points is raised
    to ``tau``: the seed is known to satisfy the constraint.  The upper bound
    is never clamped.
    """
    root = np.sqrt(beta1)
    mu0 = np.asarray(mu0, dtype=float)
    sigma0 = np.asarray(sigma0, dtype=float)
    l = mu0 - root * sigma0
    u = mu0 + root * sigma0
    if seed is not None and tau is not None:
        mask = as_mask(seed, len(l))
        l[mask] = np.maximum(l[mask], tau)
    return ConfidenceState(l, u, 0)


def update_bounds(cs: ConfidenceState, mu, sigma, beta: float) -> ConfidenceState:
    """Intersect the running bounds with ``mu -/+ sqrt(beta) sigma``."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if mu.shape != cs.l.shape or sigma.shape != cs.l.shape:
        raise InputError(f"posterior vectors have shapes {mu.shape}/{sigma.shape}, expected {cs.l.shape}")
    if beta < 0:
        raise InputError(f"beta must be >= 0, got {beta}")
    root = np.sqrt(beta)
    return ConfidenceState(
        np.maximum(cs.l, mu - root * sigma),
        np.minimum(cs.u, mu + root * sigma),
        cs.n + 1,
    )


def one_step(coords: np.ndarray, values: np.ndarray, threshold: float, lipschitz: float, s) -> np.ndarray:
    """``{x : exists a in s, values[a] - L d(x, a) >= threshold}`` by brute force."""
    s = np.asarray(s, dtype=bool)
    anchors = np.flatnonzero(s & (values >= threshold))
    out = np.zeros(len(coords), dtype=bool)
    out[anchors] = True
    for start in range(0, len(anchors), _CHUNK):
        block = anchors[start : start + _CHUNK]
        d2 = np.zeros((len(block), len(coords)))
        for k in range(coords.shape[1]):
            diff = coords[block, k][:, None] - coords[None, :, k]
            d2 += diff * diff
        hit = values[block][:, None] - lipschitz * np.sqrt(d2) >= threshold
        out |= hit.any(axis=0)
    return out


def pessimistic_step(s, cs: ConfidenceState, ss: SetState, g: ParamGrid) -> np.ndarray:
    return one_step(g.coords, cs.l, ss.tau, ss.lipschitz, as_mask(s, g.total))


def optimistic_step(s, cs: ConfidenceState, ss: SetState, g: ParamGrid) -> np.ndarray:
    return one_step(g.coords, cs.u - ss.epsilon, ss.tau, ss.lipschitz, as_mask(s, g.total))


def expand_fixed_point(step: Callable[[np.ndarray], np.ndarray], s0, max_iter: int | None = None,
                       return_iterations: bool = False):
    """Apply ``step`` until the set stops changing.

    ``step`` maps a boolean mask to a boolean mask.  Returns the fixed point
    (and, if requested, how many applications changed the set).
    """
    current = np.asarray(s0, dtype=bool).copy()
    limit = (len(current) + 2) if max_iter is None else max_iter
    changes = 0
    for _ in range(limit):
        nxt = np.asarray(step(current), dtype=bool)
        if np.array_equal(nxt, current):
            break
        current = nxt
        changes += 1
    else:
        raise RuntimeError(f"no fixed point after {limit} iterations")
    if return_iterations:
        return current, changes
    return current


def pessimistic_closure(s, cs: ConfidenceState, ss: SetState, g: ParamGrid, backend=None) -> np.ndarray:
    """Limit of repeated :func:`pessimistic_step` from ``s`` (compiled kernel)."""
    member = kernels.lipschitz_closure(
        g.coords, g.shape, cs.l, ss.tau, ss.lipschitz, as_mask(s, g.total), backend=backend
    )
    return member.astype(bool)


def optimistic_closure(s, cs: ConfidenceState, ss: SetState, g: ParamGrid, backend=None) -> np.ndarray:
    """Limit of repeated :func:`optimistic_step` from ``s`` (compiled kernel)."""
    values = np.ascontiguousarray(cs.u - ss.epsilon)
    member = kernels.lipschitz_closure(
        g.coords, g.shape, values, ss.tau, ss.lipschitz, as_mask(s, g.total), backend=backend
    )
    return member.astype(bool)


def update_sets(ss: SetState, cs: ConfidenceState, g: ParamGrid, backend=None) -> SetState:
    """Expand both sets from the previous pessimistic set.

    The new pessimistic set is united with the old one and the seed so it
    can never shrink.
    """
    pess = pessimistic_closure(ss.pess, cs, ss, g, backend) | ss.pess | ss.seed
    opti = optimistic_closure(ss.pess, cs, ss, g, backend) | pess
    return replace(ss, pess=pess, opti=opti)


def true_reachable_set(q_values, s0, lipschitz: float, eps: float, tau: float, g: ParamGrid,
                       backend=None) -> np.ndarray:
    """Points reachable from ``s0`` while staying ``eps``-feasible under the true ``q``."""
    values = np.ascontiguousarray(np.asarray(q_values, dtype=float) - eps)
    member = kernels.lipschitz_closure(
        g.coords, g.shape, values, tau, lipschitz, as_mask(s0, g.total), backend=backend
    )
    return member.astype(bool)


def sage_pessimistic(cs: ConfidenceState, ss: SetState, g: ParamGrid) -> np.ndarray:
    """One pessimistic step applied to the whole domain (analysis/test helper)."""
    return pessimistic_step(np.ones(g.total, dtype=bool), cs, ss, g)
