"""Independent reference implementations used as test oracles.

Nothing here shares code with the package beyond the grid coordinates:
the GP oracle is a dense linear solve, the closure oracle a boolean
transitive closure of the full "can reach" relation.
"""

from __future__ import annotations

import math

import numpy as np


def matern52(r, variance: float, lengthscale: float):
    """Closed-form Matérn-5/2 covariance at distance ``r``."""
    r = np.asarray(r, dtype=float)
    a = math.sqrt(5.0) * r / lengthscale
    return variance * (1.0 + a + 5.0 * r * r / (3.0 * lengthscale * lengthscale)) * np.exp(-a)


def _dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1))


def dense_posterior(coords, obs_x, obs_y, variance, lengthscale, noise_var):
    """Posterior mean and variance over ``coords`` by a dense solve.

    ``mu = k^T (K + s^2 I)^-1 y`` and ``var = k(x,x) - k^T (K + s^2 I)^-1 k``.
    """
    coords = np.asarray(coords, dtype=float)
    if len(obs_x) == 0:
        return np.zeros(len(coords)), np.full(len(coords), float(variance))
    x = coords[list(obs_x)]
    k_xx = matern52(_dist(x, x), variance, lengthscale) + noise_var * np.eye(len(x))
    k_xg = matern52(_dist(x, coords), variance, lengthscale)
    mu = k_xg.T @ np.linalg.solve(k_xx, np.asarray(obs_y, dtype=float))
    var = variance - np.einsum("ij,ij->j", k_xg, np.linalg.solve(k_xx, k_xg))
    return mu, var


def reach_matrix(coords, values, threshold, lipschitz) -> np.ndarray:
    """``A[a, x]`` is True when anchor ``a`` certifies ``x`` in one step.

    The comparison is written exactly as ``values[a] - L * sqrt(d2) >= thr``
    with ``d2`` summed one dimension at a time, so ties resolve the same way
    as in any implementation that evaluates the same expression.
    """
    coords = np.asarray(coords, dtype=float)
    d2 = np.zeros((len(coords), len(coords)))
    for k in range(coords.shape[1]):
        diff = coords[:, None, k] - coords[None, :, k]
        d2 += diff * diff
    return np.asarray(values, dtype=float)[:, None] - lipschitz * np.sqrt(d2) >= threshold


def transitive_closure(adj: np.ndarray) -> np.ndarray:
    """Reflexive-transitive closure by repeated boolean squaring."""
    t = adj | np.eye(len(adj), dtype=bool)
    while True:
        tf = t.astype(np.float64)
        nxt = t | ((tf @ tf) > 0)
        if np.array_equal(nxt, t):
            return t
        t = nxt


def closure_oracle(coords, values, threshold, lipschitz, start) -> np.ndarray:
    """Every point reachable from a qualifying start point through one-step edges."""
    adj = reach_matrix(coords, values, threshold, lipschitz)
    start = np.asarray(start, dtype=bool)
    anchors = start & np.diag(adj)
    if not anchors.any():
        return np.zeros(len(values), dtype=bool)
    return transitive_closure(adj)[anchors].any(axis=0)


def one_step_oracle(coords, values, threshold, lipschitz, s) -> np.ndarray:
    """Direct pairwise loop over every (x, anchor) pair."""
    coords = np.asarray(coords, dtype=float)
    out = np.zeros(len(coords), dtype=bool)
    for x in range(len(coords)):
        for a in np.flatnonzero(s):
            d2 = 0.0
            for k in range(coords.shape[1]):
                diff = coords[a, k] - coords[x, k]
                d2 += diff * diff
            if values[a] - lipschitz * math.sqrt(d2) >= threshold:
                out[x] = True
                break
    return out


def reachable_bfs_oracle(coords, values, threshold, lipschitz, start) -> np.ndarray:
    """Same set as :func:`closure_oracle`, by a plain BFS that scans every point.

    Memory stays linear, so this one is usable on 10^4-point grids.
    """
    coords = np.asarray(coords, dtype=float)
    values = np.asarray(values, dtype=float)
    member = np.zeros(len(values), dtype=bool)
    todo = [int(a) for a in np.flatnonzero(np.asarray(start, dtype=bool)) if values[a] >= threshold]
    member[todo] = True
    while todo:
        a = todo.pop()
        d2 = np.zeros(len(coords))
        for k in range(coords.shape[1]):
            diff = coords[a, k] - coords[:, k]
            d2 += diff * diff
        new = (values[a] - lipschitz * np.sqrt(d2) >= threshold) & ~member
        member |= new
        todo.extend(int(i) for i in np.flatnonzero(new))
    return member
