"""Regret and summary statistics over run histories."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from ..tuner import RunRecord, make_tau

__all__ = ["cumulative_regret", "make_tau", "measurement_stats"]


def cumulative_regret(history: Iterable[RunRecord | float], q_star: float) -> np.ndarray:
    """``r_n = sum_{i <= n} (q_star - y_i)``.

    ``history`` holds run records (their measurement is used) or plain
    values.
    """
    ys = np.array([h.measurement if isinstance(h, RunRecord) else float(h) for h in history], dtype=float)
    return np.cumsum(q_star - ys)


def measurement_stats(values: Sequence[float]) -> dict:
    """Min, mean and population standard deviation of a list of measurements."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {"min": None, "mean": None, "std": None}
    return {"min": float(v.min()), "mean": float(v.mean()), "std": float(v.std())}
