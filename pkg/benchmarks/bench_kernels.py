"""Compare the compiled and numpy closure kernels on tuner-sized inputs.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Each case runs both backends on identical inputs, checks that the masks are
equal and prints the best-of-``repeat`` wall time.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from coat_tuner import kernels
from coat_tuner.grid import ParamGrid


def cases():
    rng = np.random.default_rng(7)
    g = ParamGrid.uniform(2, 100, 0.0, 1.0)
    x = g.coords
    hill = 1.0 - 4.0 * ((x - 0.3) ** 2).sum(axis=1)
    yield "100x100 saturated, L=10", g, np.full(g.total, 1.0), 0.0, 10.0
    yield "100x100 hill, L=5", g, hill, 0.0, 5.0
    yield "100x100 hill, L=20", g, hill, 0.0, 20.0
    yield "100x100 random, L=3", g, rng.normal(size=g.total), 0.0, 3.0
    g3 = ParamGrid.uniform(3, 25, 0.0, 1.0)
    yield "25^3 random, L=2", g3, rng.normal(size=g3.total) + 0.5, 0.0, 2.0
    g1 = ParamGrid.uniform(1, 5000, 0.0, 1.0)
    yield "5000 1-D sine, L=8", g1, np.sin(12 * g1.coords[:, 0]), -0.2, 8.0


def best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    names = [b for b in ("compiled", "python") if b in kernels.BACKENDS]
    print(f"backends available: {', '.join(names)} (default: {kernels.BACKEND})")
    print(f"{'case':30s} " + " ".join(f"{n:>12s}" for n in names) + "   speedup")
    for label, g, values, thr, lip in cases():
        start = np.zeros(g.total, dtype=np.uint8)
        start[np.argmax(values)] = 1
        times, masks = [], []
        for n in names:
            fn = kernels.get_backend(n).lipschitz_closure
            t, m = best_time(lambda: fn(g.coords, g.shape, values, thr, lip, start), args.repeat)
            times.append(t)
            masks.append(np.asarray(m, dtype=bool))
        if len(masks) == 2 and not np.array_equal(masks[0], masks[1]):
            raise SystemExit(f"backends disagree on case {label!r}")
        speed = f"{times[1] / times[0]:8.1f}x" if len(times) == 2 else ""
        print(f"{label:30s} " + " ".join(f"{t * 1e3:10.2f}ms" for t in times) + f"  {speed}")


if __name__ == "__main__":
    main()
