"""Deterministic fixed-step RK4 integration with daily trajectory samples.

The internal step is adjusted to divide one day exactly, so samples land on
integer days and piecewise-daily inputs (test schedules, rate breakpoints at
integer days) never straddle a step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from .model import STATE_COLUMNS, ModelParams, epidemic_extinct

__all__ = ["IntegrationError", "Trajectory", "integrate", "long_run", "trajectory_frame"]

DEFAULT_STEP = 0.05

RHS = Callable[[float, np.ndarray], np.ndarray]
PostStep = Callable[[float, np.ndarray], np.ndarray]


class IntegrationError(RuntimeError):
    """Non-finite derivative encountered; reports time and component."""

    def __init__(self, t: float, component: int, value: float):
        self.t = t
        self.component = component
        super().__init__(
            f"non-finite derivative at t={t}, component {component}: {value}"
        )


@dataclass(frozen=True)
class Trajectory:
    """Daily-sampled solution of one integration run."""

    t0: float
    step: float
    times: np.ndarray  # integer days, shape (n,)
    states: np.ndarray  # shape (n, dim)
    columns: tuple[str, ...] = STATE_COLUMNS

    def __post_init__(self) -> None:
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have equal length")

    def __len__(self) -> int:
        return len(self.times)

    def state_at(self, day: float) -> np.ndarray:
        idx = int(round(day - self.times[0]))
        if idx < 0 or idx >= len(self.times) or self.times[idx] != day:
            raise KeyError(f"day {day} not sampled (range {self.times[0]}..{self.times[-1]})")
        return self.states[idx]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    def column(self, name: str) -> np.ndarray:
        return self.states[:, self.columns.index(name)]


def _steps_per_day(step: float) -> int:
    if step <= 0:
        raise ValueError("step must be > 0")
    return max(1, int(round(1.0 / step)))


def _check_finite(t: float, dy: np.ndarray) -> None:
    # cheap probe first: the component sum is non-finite whenever any entry is
    if math.isfinite(float(dy.sum())):
        return
    finite = np.isfinite(dy)
    if finite.all():  # huge-but-finite entries can overflow the sum probe
        return
    bad = int(np.argmax(~finite))
    raise IntegrationError(t, bad, float(dy[bad]))


def _rk4_day(rhs: RHS, t: float, y: np.ndarray, h: float, n: int) -> np.ndarray:
    for _ in range(n):
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + (0.5 * h) * k1)
        k3 = rhs(t + 0.5 * h, y + (0.5 * h) * k2)
        k4 = rhs(t + h, y + h * k3)
        _check_finite(t, k1)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _check_finite(t + h, y)
        t += h
    return y


def integrate(
    rhs: RHS,
    state0: Sequence[float] | np.ndarray,
    t0: float,
    t1: float,
    step: float = DEFAULT_STEP,
    post_step: PostStep | None = None,
    columns: tuple[str, ...] = STATE_COLUMNS,
) -> Trajectory:
    """March rhs from t0 to t1 with classical RK4, sampling at integer days.

    ``post_step``, when given, may repair the state in place after each
    internal step (e.g. floor roundoff negatives).  t0 and t1 must be whole
    days with t1 > t0.
    """
    if t1 <= t0:
        raise ValueError("t1 must be > t0")
    if float(t0) != int(t0) or float(t1) != int(t1):
        raise ValueError("t0 and t1 must be whole days")
    n = _steps_per_day(step)
    h = 1.0 / n
    y = np.asarray(state0, dtype=float).copy()
    days = int(t1 - t0)
    times = np.arange(int(t0), int(t1) + 1, dtype=float)
    out = np.empty((days + 1, y.shape[0]))
    out[0] = y
    t = float(t0)
    for d in range(days):
        if post_step is None:
            y = _rk4_day(rhs, t, y, h, n)
        else:
            for k in range(n):
                y = _rk4_day(rhs, t + k * h, y, h, 1)
                y = post_step(t + (k + 1) * h, y)
        t = float(t0 + d + 1)
        out[d + 1] = y
    return Trajectory(t0=float(t0), step=h, times=times, states=out, columns=columns)


def long_run(
    rhs: RHS,
    state0: Sequence[float] | np.ndarray,
    t0: float = 0.0,
    horizon: float = 400.0,
    step: float = DEFAULT_STEP,
    post_step: PostStep | None = None,
    stop: Callable[[np.ndarray], bool] | None = None,
    columns: tuple[str, ...] = STATE_COLUMNS,
) -> Trajectory:
    """Integrate until the horizon or until the epidemic is extinct.

    The stop rule is checked at daily samples; by default it fires when both
    E and I drop below half a person (works for the 7- and 5-compartment
    layouts, whose E and I sit at indices 1 and 2).
    """
    if stop is None:
        stop = epidemic_extinct
    n = _steps_per_day(step)
    h = 1.0 / n
    y = np.asarray(state0, dtype=float).copy()
    samples = [y.copy()]
    times = [float(t0)]
    t = float(t0)
    while t < t0 + horizon - 1e-9 and not stop(y):
        if post_step is None:
            y = _rk4_day(rhs, t, y, h, n)
        else:
            for k in range(n):
                y = _rk4_day(rhs, t + k * h, y, h, 1)
                y = post_step(t + (k + 1) * h, y)
        t += 1.0
        times.append(t)
        samples.append(y.copy())
    return Trajectory(
        t0=float(t0), step=h, times=np.array(times), states=np.array(samples),
        columns=columns,
    )


def trajectory_frame(traj: Trajectory, params: ModelParams | None = None) -> pd.DataFrame:
    """Tabulate a trajectory; with params, adds the detected count D = rho(t)*I + T."""
    data = {"t": traj.times}
    for i, name in enumerate(traj.columns):
        data[name] = traj.states[:, i]
    frame = pd.DataFrame(data)
    if params is not None and {"I", "T"} <= set(traj.columns):
        rho = np.array([params.rho.value(float(t)) for t in traj.times])
        frame["D"] = rho * frame["I"].to_numpy() + frame["T"].to_numpy()
    return frame
