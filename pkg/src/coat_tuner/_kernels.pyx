# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels.  Must stay bit-compatible with ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor, ceil, INFINITY

cnp.import_array()

ctypedef cnp.int64_t idx_t


def lipschitz_closure(const double[:, ::1] coords, shape, const double[::1] values,
                      double threshold, double lipschitz, start):
    """Fixed point of the one-step Lipschitz operator started from ``start``.

    Same contract as ``coat_tuner._pykernels.lipschitz_closure``.  Each anchor
    scans either its bounding box (skipping grid lines that are already
    full) or the list of remaining non-members, whichever is shorter.
    """
    cdef Py_ssize_t n = coords.shape[0]
    cdef Py_ssize_t dims = coords.shape[1]
    cdef cnp.ndarray[idx_t, ndim=1] counts_arr = np.asarray(shape, dtype=np.int64)
    if counts_arr.shape[0] != dims:
        raise ValueError("shape does not match coordinate dimension")
    if values.shape[0] != n:
        raise ValueError("values must match the number of grid points")
    cdef cnp.uint8_t[::1] start_mask = np.ascontiguousarray(start, dtype=np.uint8)
    if start_mask.shape[0] != n:
        raise ValueError("start must match the number of grid points")

    cdef idx_t last = counts_arr[dims - 1]
    cdef Py_ssize_t n_lines = n // last
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] member_arr = np.zeros(n, dtype=np.uint8)
    cdef idx_t[::1] counts = counts_arr
    cdef idx_t[::1] strides = np.empty(dims, dtype=np.int64)
    cdef idx_t[::1] lo = np.empty(dims, dtype=np.int64)
    cdef idx_t[::1] hi = np.empty(dims, dtype=np.int64)
    cdef idx_t[::1] pos = np.empty(dims, dtype=np.int64)
    cdef idx_t[::1] queue = np.empty(n, dtype=np.int64)
    cdef idx_t[::1] rest = np.empty(n, dtype=np.int64)
    cdef idx_t[::1] line_out = np.zeros(n_lines, dtype=np.int64)
    cdef cnp.uint8_t[::1] member = member_arr

    cdef Py_ssize_t head = 0, tail = 0, r_len = 0, n_out, keep, k, j, a, flat, base, line
    cdef idx_t box_size
    cdef double va, radius, diff, d2, c
    cdef bint done

    strides[dims - 1] = 1
    for k in range(dims - 2, -1, -1):
        strides[k] = strides[k + 1] * counts[k + 1]

    for a in range(n):
        if start_mask[a] and values[a] >= threshold:
            member[a] = 1
            queue[tail] = a
            tail += 1
    for a in range(n):
        if not member[a]:
            rest[r_len] = a
            r_len += 1
            line_out[a // last] += 1
    n_out = r_len

    with nogil:
        while head < tail and n_out > 0:
            a = queue[head]
            head += 1
            va = values[a]
            if lipschitz > 0:
                radius = (va - threshold) / lipschitz
            else:
                radius = INFINITY
            box_size = 1
            for k in range(dims):
                if counts[k] == 1 or not (radius < dims):
                    lo[k] = 0
                    hi[k] = counts[k] - 1
                else:
                    c = coords[a, k]
                    lo[k] = <idx_t>floor((c - radius) * (counts[k] - 1)) - 1
                    hi[k] = <idx_t>ceil((c + radius) * (counts[k] - 1)) + 1
                    if lo[k] < 0:
                        lo[k] = 0
                    if hi[k] > counts[k] - 1:
                        hi[k] = counts[k] - 1
                box_size *= hi[k] - lo[k] + 1

            if n_out <= box_size:
                keep = 0
                for j in range(r_len):
                    flat = rest[j]
                    if member[flat]:
                        continue
                    d2 = 0.0
                    for k in range(dims):
                        diff = coords[a, k] - coords[flat, k]
                        d2 += diff * diff
                    if va - lipschitz * sqrt(d2) >= threshold:
                        member[flat] = 1
                        n_out -= 1
                        line_out[flat // last] -= 1
                        if values[flat] >= threshold:
                            queue[tail] = flat
                            tail += 1
                    else:
                        rest[keep] = flat
                        keep += 1
                r_len = keep
                continue

            # walk the box line by line; the last dimension is contiguous
            for k in range(dims - 1):
                pos[k] = lo[k]
            done = False
            while not done:
                base = 0
                for k in range(dims - 1):
                    base += pos[k] * strides[k]
                line = base // last
                if line_out[line] > 0:
                    for j in range(lo[dims - 1], hi[dims - 1] + 1):
                        flat = base + j
                        if member[flat]:
                            continue
                        d2 = 0.0
                        for k in range(dims):
                            diff = coords[a, k] - coords[flat, k]
                            d2 += diff * diff
                        if va - lipschitz * sqrt(d2) >= threshold:
                            member[flat] = 1
                            n_out -= 1
                            line_out[line] -= 1
                            if values[flat] >= threshold:
                                queue[tail] = flat
                                tail += 1
                if dims == 1:
                    break
                k = dims - 2
                while True:
                    pos[k] += 1
                    if pos[k] <= hi[k]:
                        break
                    pos[k] = lo[k]
                    if k == 0:
                        done = True
                        break
                    k -= 1
    return member_arr
