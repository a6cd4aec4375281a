"""Kernel backend selection.

The compiled ``_kernels`` extension is used when importable; otherwise the
numpy implementation in ``_pykernels`` is used.  Setting the environment
variable ``COAT_TUNER_PURE=1`` forces the fallback.
"""

import os

from . import _pykernels

try:
    if os.environ.get("COAT_TUNER_PURE", "") not in ("", "0"):
        raise ImportError("pure backend forced")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _pykernels}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

BACKEND = "compiled" if _compiled is not None else "python"


def get_backend(name=None):
    """Return the kernel module called ``name`` (default: the active one)."""
    name = name or BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available; have {sorted(BACKENDS)}") from None


def lipschitz_closure(coords, shape, values, threshold, lipschitz, start, backend=None):
    mod = get_backend(backend)
    return mod.lipschitz_closure(coords, shape, values, float(threshold), float(lipschitz), start)
