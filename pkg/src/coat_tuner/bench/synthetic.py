"""Closed-form synthetic objectives with exact grid oracles.

Each objective is a constant plus a sum of isotropic Gaussian bumps over
normalized coordinates.  Coefficients live in ``data/synthetics.json`` so
that the functions are versioned with the repository.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from ..errors import ConfigError
from ..grid import ParamGrid
from ..tuner import Measurement


@dataclass(frozen=True)
class Bump:
    center: tuple[float, ...]
    amplitude: float
    width: float


@dataclass(frozen=True)
class SyntheticObjective:
    """``q(x) = offset + sum_i a_i exp(-|x - c_i|^2 / (2 s_i^2))``."""

    name: str
    offset: float
    bumps: tuple[Bump, ...]
    lipschitz: float
    tau: float
    seed_zone: tuple[tuple[float, float], ...] = ()
    description: str = ""
    version: int = 1

    @property
    def dims(self) -> int:
        return len(self.bumps[0].center)

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.full(len(x), self.offset)
        for b in self.bumps:
            c = np.asarray(b.center)
            r2 = ((x - c) ** 2).sum(axis=1)
            out += b.amplitude * np.exp(-r2 / (2.0 * b.width ** 2))
        return out

    def gradient(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        grad = np.zeros_like(x)
        for b in self.bumps:
            c = np.asarray(b.center)
            r2 = ((x - c) ** 2).sum(axis=1)
            w = b.amplitude * np.exp(-r2 / (2.0 * b.width ** 2)) / b.width ** 2
            grad -= w[:, None] * (x - c)
        return grad

    def on_grid(self, g: ParamGrid) -> np.ndarray:
        if g.dims != self.dims:
            raise ConfigError(f"objective {self.name!r} is {self.dims}-D, grid is {g.dims}-D")
        return self(g.coords)

    def grid_max(self, g: ParamGrid) -> tuple[int, float]:
        """Exact maximizer over the grid by exhaustive scan (lowest index on ties)."""
        q = self.on_grid(g)
        i = int(np.argmax(q))
        return i, float(q[i])

    def seed_candidates(self, g: ParamGrid) -> np.ndarray:
        """Grid points inside the seed zone (all feasible by construction)."""
        x = g.coords
        inside = np.ones(len(x), dtype=bool)
        for k, (lo, hi) in enumerate(self.seed_zone):
            inside &= (x[:, k] >= lo) & (x[:, k] <= hi)
        return np.flatnonzero(inside & (self.on_grid(g) >= self.tau))


@dataclass
class NoiseModel:
    """Zero-mean Gaussian measurement noise with its own seeded stream."""

    sigma: float = 0.0
    rng_seed: int = 0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError(f"noise sigma must be >= 0, got {self.sigma}")
        self.rng = np.random.Generator(np.random.PCG64(self.rng_seed))

    def sample(self) -> float:
        if self.sigma == 0:
            return 0.0
        return float(self.rng.normal(0.0, self.sigma))


def eval_synthetic(obj: SyntheticObjective, theta, noise: NoiseModel | None = None) -> float:
    """Noisy evaluation at normalized coordinates ``theta``."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < -1e-12) or np.any(theta > 1 + 1e-12):
        raise ConfigError(f"coordinates {theta.tolist()} outside the unit cube")
    q = float(obj(theta)[0])
    return q + (noise.sample() if noise is not None else 0.0)


class SyntheticEvaluator:
    """Evaluator over grid indices that also reports the noiseless value."""

    def __init__(self, obj: SyntheticObjective, grid: ParamGrid, noise: NoiseModel | None = None):
        self.obj = obj
        self.grid = grid
        self.noise = noise or NoiseModel(0.0)
        self.truth = obj.on_grid(grid)

    def __call__(self, index: int) -> Measurement:
        q = float(self.truth[index])
        return Measurement(q + self.noise.sample(), truth=q)


def empirical_lipschitz(obj: SyntheticObjective, n_pairs: int = 100_000, rng_seed: int = 0) -> float:
    """Largest |q(a) - q(b)| / d(a, b) over random pairs in the unit cube."""
    rng = np.random.Generator(np.random.PCG64(rng_seed))
    a = rng.random((n_pairs, obj.dims))
    # half of the pairs are close, which is where the ratio peaks
    step = rng.normal(size=(n_pairs, obj.dims)) * np.where(np.arange(n_pairs) % 2 == 0, 1e-3, 0.3)[:, None]
    b = np.clip(a + step, 0.0, 1.0)
    d = np.sqrt(((a - b) ** 2).sum(axis=1))
    ok = d > 0
    return float(np.max(np.abs(obj(a[ok]) - obj(b[ok])) / d[ok]))


def lipschitz_bound(obj: SyntheticObjective, resolution: int = 801, margin: float = 1.05) -> float:
    """Max gradient norm on a dense lattice, inflated by ``margin``."""
    axes = [np.linspace(0.0, 1.0, resolution)] * obj.dims
    mesh = np.meshgrid(*axes, indexing="ij")
    x = np.stack([m.ravel() for m in mesh], axis=1)
    g = obj.gradient(x)
    return float(np.sqrt((g ** 2).sum(axis=1)).max() * margin)


@lru_cache(maxsize=None)
def _catalog() -> dict:
    text = resources.files("coat_tuner").joinpath("data/synthetics.json").read_text()
    return json.loads(text)


def available() -> list[str]:
    return sorted(_catalog())


def load(name: str) -> SyntheticObjective:
    cat = _catalog()
    if name not in cat:
        raise ConfigError(f"unknown synthetic objective {name!r}; have {available()}")
    spec = cat[name]
    return SyntheticObjective(
        name=name,
        offset=float(spec["offset"]),
        bumps=tuple(Bump(tuple(b["center"]), float(b["amplitude"]), float(b["width"]))
                    for b in spec["bumps"]),
        lipschitz=float(spec["lipschitz"]),
        tau=float(spec["tau"]),
        seed_zone=tuple(tuple(z) for z in spec.get("seed_zone", ())),
        description=spec.get("description", ""),
        version=int(spec.get("version", 1)),
    )
