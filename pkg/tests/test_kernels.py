import os
import subprocess
import sys
import zlib

import numpy as np
import pytest
from oracles import closure_oracle

from coat_tuner import kernels
from coat_tuner.grid import ParamGrid

BACKENDS = sorted(kernels.BACKENDS)


def _case(shape, L, rng, kind):
    g = ParamGrid(shape, (0.0,) * len(shape), (1.0,) * len(shape))
    if kind == "random":
        values = rng.normal(size=g.total)
    else:  # smooth hill, long closures
        c = rng.random(len(shape))
        values = 1.0 - 3.0 * ((g.coords - c) ** 2).sum(axis=1)
    start = np.zeros(g.total, bool)
    start[rng.integers(g.total, size=2)] = True
    return g, values, 0.0, L, start


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("shape", [(1,), (2,), (50,), (7, 9), (1, 12), (4, 5, 6), (3, 1, 4)])
@pytest.mark.parametrize("kind", ["random", "hill"])
def test_backend_matches_oracle(backend, shape, kind):
    rng = np.random.default_rng(zlib.crc32(repr((shape, kind)).encode()))
    for L in (0.0, 0.5, 3.0, 25.0):
        g, values, thr, L, start = _case(shape, L, rng, kind)
        got = kernels.lipschitz_closure(g.coords, g.shape, values, thr, L, start, backend=backend)
        assert got.dtype == np.uint8
        np.testing.assert_array_equal(got.astype(bool), closure_oracle(g.coords, values, thr, L, start))


def test_backends_agree_on_ties():
    # exact-arithmetic ties on the boundary: spacing 0.25, L 4, steps of exactly 1
    g = ParamGrid((9,), (0.0,), (1.0,))
    values = np.array([4.0, 3.0, 2.0, 1.0, 0.0, -1.0, -2.0, -3.0, -4.0])
    start = np.zeros(9, bool)
    start[0] = True
    outs = [kernels.lipschitz_closure(g.coords, g.shape, values, 0.0, 4.0, start, backend=b) for b in BACKENDS]
    for o in outs:
        np.testing.assert_array_equal(o.astype(bool), closure_oracle(g.coords, values, 0.0, 4.0, start))
    assert outs[0][:5].all()


def test_unknown_backend():
    with pytest.raises(ValueError, match="not available"):
        kernels.get_backend("fortran")


def test_compiled_backend_present():
    """The build ships the compiled kernel; the fallback is only for broken builds."""
    assert "compiled" in kernels.BACKENDS
    assert kernels.BACKEND == "compiled"


def test_pure_fallback_can_be_forced():
    env = dict(os.environ, COAT_TUNER_PURE="1")
    out = subprocess.run([sys.executable, "-c", "from coat_tuner import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
