"""Pure numpy implementation of the hot kernels (fallback for ``_kernels``)."""

from __future__ import annotations

import math
from collections import deque

import numpy as np


def lipschitz_closure(coords, shape, values, threshold, lipschitz, start):
    """Fixed point of the one-step Lipschitz operator started from ``start``.

    The one-step operator maps a set S to every point x for which some
    anchor a in S has ``values[a] - lipschitz * d(a, x) >= threshold``.

    Parameters
    ----------
    coords : ndarray, shape (n, dims)
        Normalized grid coordinates, row-major flat order.
    shape : sequence of int
        Points per dimension.
    values : ndarray, shape (n,)
        Bound used by the operator (lower bound, or upper bound minus eps).
    threshold : float
    lipschitz : float
    start : ndarray of bool, shape (n,)
        Initial set.

    Returns
    -------
    ndarray of uint8, shape (n,)
        Membership mask of the limit set.
    """
    coords = np.asarray(coords, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    shape = tuple(int(s) for s in shape)
    n, dims = coords.shape
    member = np.zeros(n, dtype=np.uint8)
    start = np.asarray(start, dtype=bool)

    seeds = np.flatnonzero(start & (values >= threshold))
    member[seeds] = 1
    queue = deque(int(a) for a in seeds)
    rest = np.flatnonzero(member == 0)
    axes = [np.arange(c) for c in shape]
    scale = [c - 1 for c in shape]

    n_out = len(rest)
    while queue and n_out > 0:
        a = queue.popleft()
        ca = coords[a]
        va = values[a]
        if lipschitz > 0:
            radius = (va - threshold) / lipschitz
        else:
            radius = math.inf
        ranges = []
        box_size = 1
        for k in range(dims):
            if scale[k] == 0 or not radius < dims:
                ranges.append(axes[k])
                continue
            lo = max(0, math.floor((ca[k] - radius) * scale[k]) - 1)
            hi = min(scale[k], math.ceil((ca[k] + radius) * scale[k]) + 1)
            ranges.append(axes[k][lo : hi + 1])
        for r in ranges:
            box_size *= len(r)
        if n_out <= box_size:
            rest = rest[member[rest] == 0]
            box = rest
        else:
            box = np.ravel_multi_index(np.meshgrid(*ranges, indexing="ij"), shape).ravel()
            box = box[member[box] == 0]
        if box.size == 0:
            continue
        d2 = np.zeros(box.size)
        for k in range(dims):
            diff = ca[k] - coords[box, k]
            d2 += diff * diff
        hit = box[va - lipschitz * np.sqrt(d2) >= threshold]
        if hit.size == 0:
            continue
        member[hit] = 1
        n_out -= hit.size
        queue.extend(int(j) for j in hit[values[hit] >= threshold])
    return member
