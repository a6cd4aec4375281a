"""Experiment configuration: a TOML file validated into an ExperimentConfig.

Every key is checked against a fixed schema before anything runs.  Unknown
keys and bad values raise :class:`ConfigError` with the file name and, when
it can be located, the line of the offending key.
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..baselines import ALGORITHMS
from ..errors import ConfigError
from ..gp import BetaSchedule, KernelParams
from ..grid import ParamGrid
from ..tuner import TunerConfig

# table -> {key: expected python types}
SCHEMA: dict[str, dict[str, tuple[type, ...]]] = {
    "": {
        "algorithm": (str,),
        "objective": (str,),
        "repetitions": (int,),
        "rng_seed": (int,),
        "rng_seeds": (list,),
        "max_iters": (int,),
        "epsilon": (int, float),
        "output": (str,),
        "record_timing": (bool,),
    },
    "grid": {"points_per_dim": (int, list), "lo": (int, float, list), "hi": (int, float, list)},
    "kernel": {"variance": (int, float), "lengthscale": (int, float, list)},
    "noise": {"sigma": (int, float), "inject": (bool,)},
    "beta": {"mode": (str,), "value": (int, float), "rkhs_bound": (int, float), "delta": (int, float),
             "gamma_rate": (int, float)},
    "lipschitz": {"L": (int, float, str)},
    "constraint": {"tau": (int, float), "tau_scale": (int, float)},
    "seed": {"coords": (list,), "zone": (bool,)},
    "gp": {"prior_mean": (str, int, float)},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a batch of runs."""

    algorithm: str = "coat"
    objective: str = "synthetic:hill"
    repetitions: int = 1
    rng_seed: int = 0
    rng_seeds: tuple[int, ...] | None = None
    max_iters: int = 70
    epsilon: float = 0.3
    output: str = "runs/out"
    record_timing: bool = False
    points_per_dim: tuple[int, ...] = (100, 100)
    lo: tuple[float, ...] = (0.0, 0.0)
    hi: tuple[float, ...] = (1000.0, 1000.0)
    kernel_variance: float = 1.0
    kernel_lengthscale: float | tuple[float, ...] = 0.1
    noise_sigma: float = 0.05
    noise_inject: bool = True
    beta_mode: str = "fixed"
    beta_value: float = 5.0
    beta_rkhs_bound: float = 1.0
    beta_delta: float = 0.1
    beta_gamma_rate: float = 1.0
    lipschitz: float | str = "objective"
    tau: float | None = None
    tau_scale: float | None = None
    seed_coords: tuple[tuple[float, ...], ...] = ()
    seed_zone: bool = False
    prior_mean: str | float = "seed"
    source: str = field(default="", compare=False)

    @property
    def objective_kind(self) -> str:
        return self.objective.split(":", 1)[0]

    @property
    def objective_name(self) -> str:
        return self.objective.split(":", 1)[1]

    def grid(self) -> ParamGrid:
        return ParamGrid(self.points_per_dim, self.lo, self.hi)

    def seeds(self) -> tuple[int, ...]:
        """Per-repetition base seeds (explicit list, or consecutive from ``rng_seed``)."""
        if self.rng_seeds is not None:
            return self.rng_seeds
        return tuple(self.rng_seed + r for r in range(self.repetitions))

    def beta(self) -> BetaSchedule:
        if self.beta_mode == "fixed":
            return BetaSchedule("fixed", self.beta_value)
        rate = self.beta_gamma_rate
        # information capacity bound gamma(n) = rate * log(1 + n)^(d + 1), a
        # user-scaled version of the Matern rate
        d = len(self.points_per_dim)
        return BetaSchedule("theoretical", rkhs_bound=self.beta_rkhs_bound, noise_sigma=self.noise_sigma,
                            delta=self.beta_delta, info_gain=_GammaBound(rate, d))

    def tuner_config(self, lipschitz: float, rng_seed: int = 0, tau: float | None = None,
                     tau_scale: float | None = None) -> TunerConfig:
        """Tuner settings; ``tau``/``tau_scale`` replace the configured policy when given."""
        if tau is None and tau_scale is None:
            tau, tau_scale = self.tau, self.tau_scale
        return TunerConfig(
            epsilon=self.epsilon,
            max_iters=self.max_iters,
            beta=self.beta(),
            lipschitz=lipschitz,
            tau=tau,
            tau_scale=tau_scale,
            kernel=KernelParams(self.kernel_variance, self.kernel_lengthscale),
            noise_sigma=self.noise_sigma,
            prior_mean=self.prior_mean,
            rng_seed=rng_seed,
        )


@dataclass(frozen=True)
class _GammaBound:
    rate: float
    dims: int

    def __call__(self, n: int) -> float:
        return self.rate * math.log1p(n) ** (self.dims + 1)


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Map ``(table, key)`` to its 1-based line number by a light scan."""
    out: dict[tuple[str, str], int] = {}
    table = ""
    header = re.compile(r"^\s*\[\s*([A-Za-z0-9_.\-]+)\s*\]")
    keyline = re.compile(r"^\s*([A-Za-z0-9_\-]+|\"[^\"]*\")\s*=")
    for i, line in enumerate(text.splitlines(), start=1):
        m = header.match(line)
        if m:
            table = m.group(1)
            out.setdefault((table, ""), i)
            continue
        m = keyline.match(line)
        if m:
            out.setdefault((table, m.group(1).strip('"')), i)
    return out


class _Checker:
    def __init__(self, path: str, text: str):
        self.path = path
        self.lines = _key_lines(text)

    def fail(self, table: str, key: str, msg: str):
        line = self.lines.get((table, key)) or self.lines.get((table, ""))
        where = f"{self.path}:{line}" if line else self.path
        name = f"{table}.{key}" if table and key else (key or table)
        raise ConfigError(f"{where}: {name}: {msg}")


def parse_config(text: str, path: str = "<config>") -> ExperimentConfig:
    """Validate TOML ``text`` into an :class:`ExperimentConfig`."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    chk = _Checker(path, text)

    values: dict[str, Any] = {}
    for key, val in raw.items():
        if isinstance(val, dict):
            if key not in SCHEMA or key == "":
                chk.fail(key, "", "unknown table")
            for sub, v in val.items():
                _check_type(chk, key, sub, v)
                values[f"{key}.{sub}"] = v
        else:
            _check_type(chk, "", key, val)
            values[key] = val

    kw: dict[str, Any] = {"source": path}
    simple = {
        "algorithm": "algorithm", "objective": "objective", "repetitions": "repetitions",
        "rng_seed": "rng_seed", "max_iters": "max_iters", "epsilon": "epsilon", "output": "output",
        "record_timing": "record_timing", "kernel.variance": "kernel_variance",
        "noise.sigma": "noise_sigma", "noise.inject": "noise_inject", "beta.mode": "beta_mode",
        "beta.value": "beta_value", "beta.rkhs_bound": "beta_rkhs_bound", "beta.delta": "beta_delta",
        "beta.gamma_rate": "beta_gamma_rate", "lipschitz.L": "lipschitz", "constraint.tau": "tau",
        "constraint.tau_scale": "tau_scale", "seed.zone": "seed_zone", "gp.prior_mean": "prior_mean",
    }
    for src, dst in simple.items():
        if src in values:
            v = values[src]
            kw[dst] = float(v) if isinstance(v, int) and not isinstance(v, bool) and dst in _FLOATS else v
    if "rng_seeds" in values:
        seeds = values["rng_seeds"]
        if not seeds or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
            chk.fail("", "rng_seeds", "must be a non-empty list of integers")
        kw["rng_seeds"] = tuple(seeds)
    if "kernel.lengthscale" in values:
        ls = values["kernel.lengthscale"]
        kw["kernel_lengthscale"] = tuple(float(v) for v in ls) if isinstance(ls, list) else float(ls)
    if "seed.coords" in values:
        pts = values["seed.coords"]
        try:
            kw["seed_coords"] = tuple(tuple(float(c) for c in p) for p in pts)
        except TypeError:
            chk.fail("seed", "coords", "must be a list of coordinate lists")

    _resolve_grid(chk, kw, values.get("grid.points_per_dim", 100),
                  values.get("grid.lo", 0.0), values.get("grid.hi", 1000.0))

    cfg = ExperimentConfig(**kw)
    _validate(chk, cfg, values)
    return cfg


_FLOATS = {"epsilon", "kernel_variance", "noise_sigma", "beta_value", "beta_rkhs_bound", "beta_delta",
           "beta_gamma_rate", "lipschitz", "tau", "tau_scale", "prior_mean"}


def _check_type(chk: _Checker, table: str, key: str, val):
    allowed = SCHEMA.get(table, {})
    if key not in allowed:
        chk.fail(table, key, "unknown key")
    types = allowed[key]
    if isinstance(val, bool) and bool not in types:
        chk.fail(table, key, f"expected {'/'.join(t.__name__ for t in types)}, got bool")
    if not isinstance(val, types):
        chk.fail(table, key, f"expected {'/'.join(t.__name__ for t in types)}, got {type(val).__name__}")


def _resolve_grid(chk: _Checker, kw: dict, ppd, lo, hi):
    """Broadcast scalar grid entries; the dimension comes from any list given (default 2)."""
    dims = next((len(v) for v in (ppd, lo, hi) if isinstance(v, list)), 2)

    def expand(v, name, cast):
        if isinstance(v, list):
            if len(v) != dims:
                chk.fail("grid", name, f"has {len(v)} entries, grid has {dims} dimensions")
            return tuple(cast(x) for x in v)
        return (cast(v),) * dims

    kw["points_per_dim"] = expand(ppd, "points_per_dim", int)
    kw["lo"] = expand(lo, "lo", float)
    kw["hi"] = expand(hi, "hi", float)
    try:
        ParamGrid(kw["points_per_dim"], kw["lo"], kw["hi"])
    except ValueError as exc:
        chk.fail("grid", "", str(exc))


def _validate(chk: _Checker, cfg: ExperimentConfig, values: dict):
    if cfg.algorithm not in ALGORITHMS:
        chk.fail("", "algorithm", f"must be one of {', '.join(ALGORITHMS)}")
    kind, _, name = cfg.objective.partition(":")
    if kind not in ("synthetic", "sim") or not name:
        chk.fail("", "objective", "must look like synthetic:<name> or sim:<track>")
    if cfg.repetitions < 1:
        chk.fail("", "repetitions", "must be >= 1")
    if cfg.rng_seeds is not None and len(cfg.rng_seeds) != cfg.repetitions:
        chk.fail("", "rng_seeds", f"has {len(cfg.rng_seeds)} entries for {cfg.repetitions} repetitions")
    if cfg.max_iters < 1:
        chk.fail("", "max_iters", "must be >= 1")
    if not cfg.epsilon > 0:
        chk.fail("", "epsilon", "must be > 0")
    if not cfg.noise_sigma > 0:
        chk.fail("noise", "sigma", "must be > 0 (it is also the model noise level)")
    if not cfg.kernel_variance > 0:
        chk.fail("kernel", "variance", "must be > 0")
    ls = cfg.kernel_lengthscale
    if not all(v > 0 for v in (ls if isinstance(ls, tuple) else (ls,))):
        chk.fail("kernel", "lengthscale", "must be > 0")
    if isinstance(ls, tuple) and len(ls) != len(cfg.points_per_dim):
        chk.fail("kernel", "lengthscale", f"has {len(ls)} entries for a {len(cfg.points_per_dim)}-D grid")
    if cfg.beta_mode not in ("fixed", "theoretical"):
        chk.fail("beta", "mode", "must be 'fixed' or 'theoretical'")
    if isinstance(cfg.lipschitz, str):
        if cfg.lipschitz != "objective" or kind != "synthetic":
            chk.fail("lipschitz", "L", "must be a number, or \"objective\" for synthetic objectives")
    elif cfg.lipschitz < 0:
        chk.fail("lipschitz", "L", "must be >= 0")
    if ("constraint.tau" in values) == ("constraint.tau_scale" in values) and kind == "sim":
        chk.fail("constraint", "", "set exactly one of tau and tau_scale")
    if "constraint.tau" in values and "constraint.tau_scale" in values:
        chk.fail("constraint", "tau_scale", "set exactly one of tau and tau_scale")
    if cfg.tau_scale is not None and cfg.tau_scale < 1:
        chk.fail("constraint", "tau_scale", "must be >= 1")
    if cfg.seed_coords and cfg.seed_zone:
        chk.fail("seed", "zone", "use either coords or zone, not both")
    if not cfg.seed_coords and not cfg.seed_zone:
        if kind == "sim":
            chk.fail("seed", "", "the simulator needs seed.coords")
        # synthetics default to their seed zone
    dims = len(cfg.points_per_dim)
    for p in cfg.seed_coords:
        if len(p) != dims:
            chk.fail("seed", "coords", f"point {list(p)} does not have {dims} coordinates")
    if isinstance(cfg.prior_mean, str) and cfg.prior_mean not in ("seed", "tau", "zero"):
        chk.fail("gp", "prior_mean", "must be 'seed', 'tau', 'zero' or a number")
    if cfg.tau is None and cfg.tau_scale is None:
        return  # synthetics fall back to the objective's own tau
    try:
        cfg.tuner_config(1.0 if isinstance(cfg.lipschitz, str) else cfg.lipschitz)
    except ConfigError as exc:
        chk.fail("", "", str(exc))


BUNDLED_CONFIGS = ("quickstart", "constrained_protocol", "sim_protocol")


def bundled_config(name: str) -> Path | None:
    """Path of a config shipped with the package (``quickstart`` etc.), if any."""
    name = name.removesuffix(".toml")
    if name not in BUNDLED_CONFIGS:
        return None
    return Path(str(resources.files("coat_tuner").joinpath(f"data/{name}.toml")))


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read and validate a config file, then apply command-line overrides."""
    p = Path(path)
    if not p.exists() and bundled_config(str(path)) is not None:
        p = bundled_config(str(path))
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    cfg = parse_config(text, str(p))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def apply_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    changes = {k: v for k, v in overrides.items() if v is not None}
    if "algorithm" in changes and changes["algorithm"] not in ALGORITHMS:
        raise ConfigError(f"--algorithm must be one of {', '.join(ALGORITHMS)}")
    if "rng_seed" in changes:
        changes["rng_seeds"] = None
    return replace(cfg, **changes)
