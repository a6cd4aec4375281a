"""Exact Gaussian-process regression over the points of a ParamGrid.

The model caches ``V = chol^-1 K(X, grid)`` so that a new observation costs
one triangular row update instead of a refit, and the posterior over the
whole grid is a pair of matrix-vector products.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConfigError, InputError, NumericalError
from .grid import ParamGrid

SQRT5 = math.sqrt(5.0)

#: posterior variances below this are clamped to it (never negative)
VARIANCE_FLOOR = 0.0

JITTER_START = 1e-8
JITTER_GROWTH = 10.0
JITTER_RETRIES = 3


@dataclass(frozen=True)
class KernelParams:
    """Matérn kernel with smoothness 5/2.

    ``lengthscale`` is a scalar or one value per dimension, in normalized
    coordinate units.
    """

    variance: float = 1.0
    lengthscale: float | tuple[float, ...] = 0.1

    def __post_init__(self):
        ls = self.lengthscale
        if np.ndim(ls) > 0:
            ls = tuple(float(v) for v in np.ravel(ls))
            object.__setattr__(self, "lengthscale", ls)
        if not self.variance > 0:
            raise ConfigError(f"kernel variance must be > 0, got {self.variance}")
        if not np.all(np.asarray(ls, dtype=float) > 0):
            raise ConfigError(f"kernel lengthscale must be > 0, got {ls}")

    def __call__(self, r):
        """Kernel value at scaled distance ``r`` (already divided by the lengthscale)."""
        r = np.asarray(r, dtype=float)
        s = SQRT5 * r
        return self.variance * (1.0 + s + s * s / 3.0) * np.exp(-s)

    def cross(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Covariance matrix between the rows of ``a`` and ``b``."""
        ls = np.broadcast_to(np.asarray(self.lengthscale, dtype=float), (a.shape[1],))
        d2 = np.zeros((a.shape[0], b.shape[0]))
        for k in range(a.shape[1]):
            diff = (a[:, None, k] - b[None, :, k]) / ls[k]
            d2 += diff * diff
        return self(np.sqrt(d2))


def kernel_eval(kp: KernelParams, r: float) -> float:
    """Matérn-5/2 value at unscaled distance ``r`` (scalar lengthscale only)."""
    if r < 0:
        raise InputError(f"distance must be nonnegative, got {r}")
    if np.ndim(kp.lengthscale) > 0:
        raise InputError("kernel_eval needs a scalar lengthscale")
    return float(kp(r / kp.lengthscale))


@dataclass(frozen=True, eq=False)
class GpModel:
    """GP posterior state; ``add_observation`` returns a new model."""

    kernel: KernelParams
    noise_var: float
    coords: np.ndarray = field(repr=False)
    obs_x: tuple[int, ...] = ()
    obs_y: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    chol: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)), repr=False)
    jitter: float = 0.0
    _v: np.ndarray | None = field(default=None, repr=False)
    _alpha: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @classmethod
    def empty(cls, kernel: KernelParams, noise_var: float, grid: ParamGrid) -> "GpModel":
        if not noise_var > 0:
            raise ConfigError(f"noise variance must be > 0, got {noise_var}")
        return cls(kernel, float(noise_var), grid.coords, _v=np.zeros((0, grid.total)))

    @property
    def n_obs(self) -> int:
        return len(self.obs_x)

    def add_observation(self, i: int, y: float) -> "GpModel":
        i = int(i)
        if not 0 <= i < len(self.coords):
            raise InputError(f"index {i} outside the grid")
        if not math.isfinite(y):
            raise InputError(f"observation must be finite, got {y}")
        obs_x = self.obs_x + (i,)
        obs_y = np.append(self.obs_y, float(y))

        kx = self.kernel.cross(self.coords[i : i + 1], self.coords)[0]
        l12 = self._v[:, i]
        l22_sq = kx[i] + self.noise_var + self.jitter - l12 @ l12
        if not l22_sq > 1e-12 * self.kernel.variance:
            return self._refit(obs_x, obs_y, self.jitter)
        l22 = math.sqrt(l22_sq)
        n = self.n_obs
        chol = np.zeros((n + 1, n + 1))
        chol[:n, :n] = self.chol
        chol[n, :n] = l12
        chol[n, n] = l22
        v_row = (kx - l12 @ self._v) / l22
        alpha = np.append(self._alpha, (y - l12 @ self._alpha) / l22)
        return replace(
            self, obs_x=obs_x, obs_y=obs_y, chol=chol,
            _v=np.vstack([self._v, v_row]), _alpha=alpha,
        )

    def refit(self) -> "GpModel":
        """Recompute the factorization from scratch."""
        return self._refit(self.obs_x, self.obs_y, 0.0)

    def _refit(self, obs_x, obs_y, jitter) -> "GpModel":
        x = self.coords[list(obs_x)]
        k = self.kernel.cross(x, x)
        chol, jitter = cholesky_with_jitter(k, self.noise_var, self.kernel.variance, jitter)
        v = solve_triangular(chol, self.kernel.cross(x, self.coords), lower=True)
        alpha = solve_triangular(chol, np.asarray(obs_y, dtype=float), lower=True)
        return replace(
            self, obs_x=tuple(obs_x), obs_y=np.asarray(obs_y, dtype=float),
            chol=chol, jitter=jitter, _v=v, _alpha=alpha,
        )

    def posterior(self) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation at every grid point."""
        if self.n_obs == 0:
            n = len(self.coords)
            return np.zeros(n), np.full(n, math.sqrt(self.kernel.variance))
        mu = self._alpha @ self._v
        var = self.kernel.variance - np.einsum("ij,ij->j", self._v, self._v)
        return mu, np.sqrt(np.maximum(var, VARIANCE_FLOOR))


def posterior(m: GpModel, g: ParamGrid | None = None) -> tuple[np.ndarray, np.ndarray]:
    if g is not None and len(g.coords) != len(m.coords):
        raise InputError("model was built for a different grid")
    return m.posterior()


def add_observation(m: GpModel, i: int, y: float) -> GpModel:
    return m.add_observation(i, y)


def cholesky_with_jitter(k, noise_var, variance, jitter=0.0):
    """Lower Cholesky factor of ``k + (noise_var + jitter) I``.

    On failure the diagonal jitter starts at ``1e-8 * variance`` and grows
    tenfold, at most three times.
    """
    eye = np.eye(len(k))
    attempt = jitter
    for retry in range(JITTER_RETRIES + 1):
        try:
            return np.linalg.cholesky(k + (noise_var + attempt) * eye), attempt
        except np.linalg.LinAlgError:
            if retry == JITTER_RETRIES:
                break
            attempt = JITTER_START * variance if attempt == 0 else attempt * JITTER_GROWTH
    raise NumericalError(
        f"covariance not positive definite after {JITTER_RETRIES} jitter retries "
        f"(last jitter {attempt:.1e})"
    )


@dataclass(frozen=True)
class BetaSchedule:
    """Confidence scaling; fixed, or the RKHS bound with a user info-gain bound.

    In ``theoretical`` mode ``sqrt(beta_n) = B + 4 sigma sqrt(gamma(n) + 1 + ln(1/delta))``
    where ``gamma`` is a user-supplied nondecreasing bound on the information
    capacity.
    """

    mode: str = "fixed"
    value: float = 5.0
    rkhs_bound: float = 1.0
    noise_sigma: float = 0.1
    delta: float = 0.1
    info_gain: Callable[[int], float] | None = None

    def __post_init__(self):
        if self.mode not in ("fixed", "theoretical"):
            raise ConfigError(f"beta.mode must be 'fixed' or 'theoretical', got {self.mode!r}")
        if self.mode == "fixed" and not self.value > 0:
            raise ConfigError(f"beta.value must be > 0, got {self.value}")
        if self.mode == "theoretical":
            if not 0 < self.delta < 1:
                raise ConfigError(f"beta.delta must lie in (0, 1), got {self.delta}")
            if self.rkhs_bound < 0 or self.noise_sigma < 0:
                raise ConfigError("beta.rkhs_bound and beta.noise_sigma must be >= 0")

    def __call__(self, n: int) -> float:
        return beta_at(self, n)


def beta_at(b: BetaSchedule, n: int) -> float:
    if n < 1:
        raise InputError(f"iteration must be >= 1, got {n}")
    if b.mode == "fixed":
        return float(b.value)
    gamma = 0.0 if b.info_gain is None else float(b.info_gain(n))
    root = b.rkhs_bound + 4.0 * b.noise_sigma * math.sqrt(gamma + 1.0 + math.log(1.0 / b.delta))
    return root * root
