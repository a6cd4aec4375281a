"""Goal-directed safe tuning of controller parameters over a discrete grid.

The main entry points are :func:`coat_tuner.tuner.run` (COAt-MPC with
Constrained Expansion) and :func:`coat_tuner.baselines.run_algorithm`,
which also dispatches to GP-UCB and a SafeOpt-style baseline.
"""

from .errors import CoatError, ConfigError, InputError, NumericalError, TerminalError
from .gp import BetaSchedule, GpModel, KernelParams
from .grid import ParamGrid
from .kernels import BACKEND
from .tuner import Measurement, RunRecord, TunerConfig, TunerState, run

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BetaSchedule", "CoatError", "ConfigError", "GpModel", "InputError", "KernelParams",
    "Measurement", "NumericalError", "ParamGrid", "RunRecord", "TerminalError", "TunerConfig",
    "TunerState", "run",
]
