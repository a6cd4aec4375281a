"""Toy lap-time simulator: kinematic bicycle plus a preview contouring controller.

This is a stand-in for a full model predictive contouring controller.  Every
control period (``control_dt``) the controller tries each action of a small
discrete set, holds it over a short preview horizon and keeps the cheapest
one under

    Qc * mean(e_c^2) + Ql * e_l^2 - q_progress * ds + u^T R u

where ``e_c`` is the lateral offset from the centerline, ``ds`` the progress
along the centerline over the preview and ``e_l = ds - v_ref * T`` the lag
of that progress behind a nominal reference advance.  Minimizing the lag and
progress terms alone gives a cruise speed of
``v_ref + q_progress / (2 Ql T)``, so low lag weights drive fast (and
eventually off the track) while high ones crawl.  The contour weight decides
how hard the car brakes to hold the line in corners.  Running wide onto
the outer part of the track costs speed, so laps degrade before the car
finally leaves the track.

The weights are the two tuned parameters, each in [0, 1000].
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from ..errors import ConfigError, InputError
from ..grid import ParamGrid
from ..tuner import Measurement
from .synthetic import NoiseModel

WEIGHT_RANGE = (0.0, 1000.0)


@dataclass(frozen=True, eq=False)
class Track:
    """Closed centerline (meters) with a constant width."""

    centerline: np.ndarray
    width: float
    name: str = ""

    def __post_init__(self):
        pts = np.ascontiguousarray(self.centerline, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
            raise InputError("centerline must be an (n >= 3, 2) array")
        if not self.width > 0:
            raise InputError(f"track width must be > 0, got {self.width}")
        seg = np.roll(pts, -1, axis=0) - pts
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len <= 0):
            raise InputError("centerline has repeated consecutive waypoints")
        object.__setattr__(self, "centerline", pts)
        object.__setattr__(self, "_seg", seg)
        object.__setattr__(self, "_seg_len", seg_len)
        object.__setattr__(self, "_s", np.concatenate([[0.0], np.cumsum(seg_len)[:-1]]))

    @property
    def length(self) -> float:
        return float(self._seg_len.sum())

    @property
    def n_segments(self) -> int:
        return len(self.centerline)

    @classmethod
    def from_csv(cls, path, name: str | None = None) -> "Track":
        """Read ``x_m,y_m,width_m`` rows; the width must be the same on every row."""
        path = Path(path)
        try:
            with path.open(newline="") as fh:
                rows = list(csv.DictReader(fh))
        except OSError as exc:
            raise ConfigError(f"cannot read track file {path}: {exc}") from exc
        if not rows or not {"x_m", "y_m", "width_m"} <= set(rows[0]):
            raise ConfigError(f"{path}: expected columns x_m,y_m,width_m")
        pts = np.array([[float(r["x_m"]), float(r["y_m"])] for r in rows])
        widths = {float(r["width_m"]) for r in rows}
        if len(widths) != 1:
            raise ConfigError(f"{path}: track width must be constant")
        return cls(pts, widths.pop(), name or path.stem)

    def projection_field(self, resolution: float = 0.01):
        """Nearest-segment projection cached on a raster around the track.

        Returns ``(origin, resolution, s_grid, e_grid)``; cells farther than
        the track width from the centerline hold ``e = inf``.
        """
        key = float(resolution)
        cache = self.__dict__.setdefault("_fields", {})
        if key not in cache:
            margin = self.width * 1.5
            lo = self.centerline.min(axis=0) - margin
            hi = self.centerline.max(axis=0) + margin
            nx, ny = (np.ceil((hi - lo) / resolution).astype(int) + 1)
            gx = lo[0] + resolution * np.arange(nx)
            gy = lo[1] + resolution * np.arange(ny)
            mx, my = np.meshgrid(gx, gy, indexing="ij")
            pts = np.stack([mx.ravel(), my.ravel()], axis=1)
            s_flat, e_flat = self._project_near(pts)
            s_grid = s_flat.reshape(nx, ny)
            e_grid = e_flat.reshape(nx, ny)
            e_grid[np.abs(e_grid) > margin] = np.inf
            cache[key] = (lo, key, s_grid, e_grid)
        return cache[key]

    def lookup(self, x: np.ndarray, y: np.ndarray, resolution: float = 0.01):
        """``(s, e_c)`` from the cached field (nearest cell; off-raster gives inf)."""
        lo, res, s_grid, e_grid = self.projection_field(resolution)
        i = np.rint((x - lo[0]) / res).astype(np.int64)
        j = np.rint((y - lo[1]) / res).astype(np.int64)
        inside = (i >= 0) & (i < s_grid.shape[0]) & (j >= 0) & (j < s_grid.shape[1])
        i = np.where(inside, i, 0)
        j = np.where(inside, j, 0)
        return s_grid[i, j], np.where(inside, e_grid[i, j], np.inf)

    def _project_near(self, pts: np.ndarray, reach: int = 4):
        """Projection restricted to segments around each point's nearest waypoint."""
        _, near = cKDTree(self.centerline).query(pts)
        best_d2 = np.full(len(pts), np.inf)
        best_s = np.zeros(len(pts))
        best_e = np.zeros(len(pts))
        for off in range(-reach, reach):
            idx = (near + off) % self.n_segments
            a = self.centerline[idx]
            seg = self._seg[idx]
            ln = self._seg_len[idx]
            rel = pts - a
            t = np.clip((rel * seg).sum(axis=1) / (ln * ln), 0.0, 1.0)
            d2 = ((rel - t[:, None] * seg) ** 2).sum(axis=1)
            better = d2 < best_d2
            cross = seg[:, 0] * rel[:, 1] - seg[:, 1] * rel[:, 0]
            best_d2 = np.where(better, d2, best_d2)
            best_s = np.where(better, self._s[idx] + t * ln, best_s)
            best_e = np.where(better, np.sign(cross) * np.sqrt(d2), best_e)
        return best_s, best_e

    def point_at(self, s: float) -> np.ndarray:
        s = s % self.length
        i = int(np.searchsorted(self._s, s, side="right") - 1)
        return self.centerline[i] + self._seg[i] * ((s - self._s[i]) / self._seg_len[i])

    def heading_at(self, s: float) -> float:
        i = int(np.searchsorted(self._s, s % self.length, side="right") - 1)
        return math.atan2(self._seg[i, 1], self._seg[i, 0])

    def project(self, points: np.ndarray, hint: int | None = None, window: int = 25):
        """Nearest-segment projection of ``points``.

        Returns ``(s, e_c, segment)`` with signed lateral offset ``e_c``
        (positive to the left).  With ``hint`` only segments within
        ``window`` of it are searched.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if hint is None:
            cand = np.arange(self.n_segments)
        else:
            cand = (hint + np.arange(-window, window + 1)) % self.n_segments
        a = self.centerline[cand]
        seg = self._seg[cand]
        ln = self._seg_len[cand]
        rel = pts[:, None, :] - a[None, :, :]
        t = np.clip((rel * seg[None]).sum(axis=2) / (ln * ln)[None], 0.0, 1.0)
        foot = a[None] + t[..., None] * seg[None]
        d2 = ((pts[:, None, :] - foot) ** 2).sum(axis=2)
        k = np.argmin(d2, axis=1)
        rows = np.arange(len(pts))
        best = cand[k]
        tk = t[rows, k]
        s = self._s[best] + tk * self._seg_len[best]
        cross = seg[k, 0] * rel[rows, k, 1] - seg[k, 1] * rel[rows, k, 0]
        e_c = np.sign(cross) * np.sqrt(d2[rows, k])
        return s, e_c, best


@dataclass(frozen=True)
class ToyCarParams:
    """Vehicle, controller and integration constants (SI units)."""

    wheelbase: float = 0.1
    v_max: float = 4.0
    steer_max: float = 0.45
    accel_max: float = 4.0
    lat_accel_max: float = 4.5
    control_dt: float = 0.02
    dt: float = 0.02
    horizon: int = 20
    steer_levels: int = 9
    q_progress: float = 3.3
    r_weights: tuple[float, float] = (0.3, 0.1)
    v_ref: float = 1.0
    contour_scale: float = 0.3
    lag_scale: float = 0.008
    max_time: float = 30.0
    verge_fraction: float = 0.5
    verge_drag: float = 15.0

    def __post_init__(self):
        for name in ("wheelbase", "v_max", "steer_max", "accel_max", "lat_accel_max", "control_dt", "dt",
                     "max_time"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        ratio = self.control_dt / self.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigError("control_dt must be a whole multiple of dt")
        if self.horizon < 1 or self.steer_levels < 2:
            raise ConfigError("horizon must be >= 1 and steer_levels >= 2")


@dataclass(frozen=True)
class LapOutcome:
    seconds: float
    dnf: bool
    reason: str = ""
    ticks: int = 0


def _actions(p: ToyCarParams) -> tuple[np.ndarray, np.ndarray]:
    steer = np.linspace(-p.steer_max, p.steer_max, p.steer_levels)
    accel = np.array([-p.accel_max, 0.0, p.accel_max])
    s, a = np.meshgrid(steer, accel, indexing="ij")
    return s.ravel(), a.ravel()


def _limit_steer(steer, v, p: ToyCarParams):
    # lateral acceleration v^2 tan(d) / wb stays under the grip limit
    cap = np.arctan(p.lat_accel_max * p.wheelbase / np.maximum(v * v, 1e-9))
    cap = np.minimum(cap, p.steer_max)
    return np.clip(steer, -cap, cap)


def _arc(x, y, h, v, steer, dt, wheelbase):
    """Exact kinematic-bicycle motion over ``dt`` at constant speed and steering."""
    omega = v / wheelbase * np.tan(steer)
    h_new = h + omega * dt
    turn = np.abs(omega * dt) > 1e-9
    safe = np.where(turn, omega, 1.0)
    x_new = np.where(turn, x + v / safe * (np.sin(h_new) - np.sin(h)), x + v * np.cos(h) * dt)
    y_new = np.where(turn, y + v / safe * (np.cos(h) - np.cos(h_new)), y + v * np.sin(h) * dt)
    return x_new, y_new, h_new


def simulate_lap(params: ToyCarParams, track: Track, weights) -> LapOutcome:
    """Drive one flying lap; deterministic given the inputs."""
    qc, ql = (float(w) for w in weights)
    lo, hi = WEIGHT_RANGE
    if not (lo <= qc <= hi and lo <= ql <= hi):
        raise InputError(f"weights must lie in [{lo:g}, {hi:g}], got ({qc}, {ql})")
    p = params
    qc *= p.contour_scale
    ql *= p.lag_scale
    steer_a, accel_a = _actions(p)
    r_cost = p.r_weights[0] * (steer_a / p.steer_max) ** 2 + p.r_weights[1] * (accel_a / p.accel_max) ** 2
    half = 0.5 * track.width
    tc = p.control_dt
    substeps = int(round(tc / p.dt))
    preview = p.horizon * tc
    length = track.length

    # flying start: on the centerline at the reference speed
    pos = track.point_at(0.0).copy()
    psi = track.heading_at(0.0)
    v = p.v_ref
    s_prev, _, seg = track.project(pos)
    seg = int(seg[0])
    s_prev = float(s_prev[0])
    travelled = 0.0
    max_ticks = int(math.ceil(p.max_time / tc))

    for tick in range(max_ticks):
        # preview every action in parallel
        x = np.full(len(steer_a), pos[0])
        y = np.full(len(steer_a), pos[1])
        h = np.full(len(steer_a), psi)
        vv = np.full(len(steer_a), v)
        ec2 = np.zeros(len(steer_a))
        for _ in range(p.horizon):
            vv = np.clip(vv + accel_a * tc, 0.0, p.v_max)
            d = _limit_steer(steer_a, vv, p)
            x, y, h = _arc(x, y, h, vv, d, tc, p.wheelbase)
            s_k, e_k = track.lookup(x, y)
            ec2 += np.minimum(e_k * e_k, 1e6)
        ds = (s_k - s_prev + 0.5 * length) % length - 0.5 * length
        lag = ds - p.v_ref * preview
        cost = qc * ec2 / p.horizon + ql * lag * lag - p.q_progress * ds + r_cost
        k = int(np.argmin(cost))

        # hold the chosen action for one control period, integrating the
        # plant in ``substeps`` steps of ``dt``
        for sub in range(substeps):
            v_new = min(max(v + accel_a[k] * p.dt, 0.0), p.v_max)
            d = float(_limit_steer(steer_a[k], v_new, p))
            px, py, ph = _arc(pos[0], pos[1], psi, 0.5 * (v + v_new), d, p.dt, p.wheelbase)
            pos = np.array([float(px), float(py)])
            psi = float(ph)
            v = v_new
            s_now, e_now, segs = track.project(pos, seg)
            s_now, e_now, seg = float(s_now[0]), float(e_now[0]), int(segs[0])
            if abs(e_now) > p.verge_fraction * half:
                # low-grip verge strip, unknown to the controller: speed
                # decays at rate ``verge_drag`` per second
                v *= math.exp(-p.verge_drag * p.dt)
            if abs(e_now) > half:
                return LapOutcome(math.nan, True, "left track", tick + 1)
            step = (s_now - s_prev + 0.5 * length) % length - 0.5 * length
            if travelled + step >= length:
                frac = (length - travelled) / step if step > 0 else 1.0
                return LapOutcome(tick * tc + (sub + frac) * p.dt, False, "", tick + 1)
            travelled += step
            s_prev = s_now
    return LapOutcome(math.nan, True, "time budget", max_ticks)


def lap_time(params: ToyCarParams, track: Track, weights, noise: NoiseModel | None = None) -> float | None:
    """Negative lap time plus noise, or None for a DNF."""
    out = simulate_lap(params, track, weights)
    if out.dnf:
        return None
    return -out.seconds + (noise.sample() if noise is not None else 0.0)


def bundled_track_path(name: str = "loop_track") -> Path:
    ref = resources.files("coat_tuner").joinpath(f"data/{name}.csv")
    if not ref.is_file():
        raise ConfigError(f"unknown bundled track {name!r}")
    return Path(str(ref))


def load_track(name_or_path: str) -> Track:
    """A bundled track by name, or a CSV file path."""
    path = Path(name_or_path)
    if path.suffix == ".csv" and path.exists():
        return Track.from_csv(path)
    return Track.from_csv(bundled_track_path(name_or_path), name_or_path)


class SimEvaluator:
    """Evaluator over grid indices whose physical coordinates are the two weights."""

    def __init__(self, track: Track, grid: ParamGrid, params: ToyCarParams | None = None,
                 noise: NoiseModel | None = None):
        if grid.dims != 2:
            raise ConfigError(f"the simulator tunes 2 weights, grid has {grid.dims} dimensions")
        self.track = track
        self.grid = grid
        self.params = params or ToyCarParams()
        self.noise = noise or NoiseModel(0.0)
        self._cache: dict[int, LapOutcome] = {}

    def outcome(self, index: int) -> LapOutcome:
        if index not in self._cache:
            w = self.grid.to_physical(self.grid.coords[index])
            self._cache[index] = simulate_lap(self.params, self.track, w)
        return self._cache[index]

    def __call__(self, index: int) -> Measurement:
        out = self.outcome(int(index))
        if out.dnf:
            return Measurement(math.nan, dnf=True)
        return Measurement(-out.seconds + self.noise.sample(), truth=-out.seconds)
