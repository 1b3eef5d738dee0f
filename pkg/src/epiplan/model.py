"""Compartmental model with detection by tracing and by mass testing.

The population is split into susceptible (S), exposed (E), currently
infected (I), dead-among-detected (F1), recovered-among-detected (R1) and
removed-among-undetected (L).  Detection happens through two channels:
tracing/symptoms at rate ``rho(t)`` (detected stock ``rho(t)*I``) and random
mass testing (detected stock ``T``, a subcount of ``I`` fed by the daily
test throughput).  Only undetected infected individuals,
``(1-rho)*I - T``, transmit.

Transmission and removal rates are piecewise exponential-decay functions of
time (one segment per restriction period), represented by
:class:`DecaySchedule`.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "ScheduleDomainError",
    "DecaySegment",
    "DecaySchedule",
    "ModelParams",
    "CompartmentState",
    "TestingPolicy",
    "ConstantParams",
    "eval_schedule",
    "delta_detections",
    "rhs_seir2",
    "rhs_seir4",
    "rhs_seir5",
    "make_rhs",
    "make_seir5_rhs",
    "make_state_clamp",
    "epidemic_extinct",
    "STATE_COLUMNS",
]

STATE_COLUMNS = ("S", "E", "I", "T", "F1", "R1", "L")
_S, _E, _I, _T, _F1, _R1, _L = range(7)


class ScheduleDomainError(ValueError):
    """Raised when a schedule is evaluated before its first segment."""


@dataclass(frozen=True)
class DecaySegment:
    """One interval of a piecewise rate: c0 - c1*(1 - exp(-r*(t - t_start))).

    The value starts at ``c0`` when the segment opens and decays toward
    ``c0 - c1``.  ``t_end`` is exclusive; the last segment of a schedule is
    open-ended (``t_end = inf``) and extrapolates indefinitely.
    """

    c0: float
    c1: float = 0.0
    r: float = 0.0
    t_start: float = 0.0
    t_end: float = math.inf

    def __post_init__(self) -> None:
        if self.r < 0:
            raise ValueError(f"decay rate must be >= 0, got {self.r}")
        if self.c0 < 0:
            raise ValueError(f"segment start value must be >= 0, got {self.c0}")
        if self.t_end <= self.t_start:
            raise ValueError("segment must have t_end > t_start")

    def value(self, t: float) -> float:
        return self.c0 - self.c1 * (1.0 - math.exp(-self.r * (t - self.t_start)))


@dataclass(frozen=True)
class DecaySchedule:
    """Contiguous, non-overlapping decay segments; last one open-ended."""

    segments: tuple[DecaySegment, ...]
    _starts: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("schedule needs at least one segment")
        segs = tuple(self.segments)
        for a, b in zip(segs, segs[1:]):
            if a.t_end != b.t_start:
                raise ValueError(
                    f"segments must be contiguous: [{a.t_start},{a.t_end}) then [{b.t_start},{b.t_end})"
                )
        if segs[-1].t_end != math.inf:
            segs = segs[:-1] + (replace(segs[-1], t_end=math.inf),)
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "_starts", tuple(s.t_start for s in segs))

    @classmethod
    def constant(cls, value: float, t_start: float = 0.0) -> "DecaySchedule":
        return cls((DecaySegment(c0=value, t_start=t_start),))

    def segment_at(self, t: float) -> DecaySegment:
        idx = bisect_right(self._starts, t) - 1
        if idx < 0:
            raise ScheduleDomainError(
                f"t={t} is before the first segment (starts at {self._starts[0]})"
            )
        return self.segments[idx]

    def value(self, t: float) -> float:
        return self.segment_at(t).value(t)

    __call__ = value

    @property
    def t_start(self) -> float:
        return self._starts[0]

    def breakpoints(self) -> tuple[float, ...]:
        return self._starts


def eval_schedule(schedule: DecaySchedule, t: float) -> float:
    """Value of a piecewise decay schedule at time ``t`` (days)."""
    return schedule.value(t)


@dataclass(frozen=True)
class ModelParams:
    """Time-varying coefficients of the detection model.

    ``beta``: transmission rate; ``gamma1``/``gamma2``: death/recovery rates
    of detected individuals; ``rho``: tracing detection rate in (0,1);
    ``sigma``: incubation rate (1/mean incubation days); ``population``: N.

    The removal rate of undetected individuals and the rates among those
    detected by testing are taken equal to ``gamma1 + gamma2`` and
    ``gamma1``/``gamma2`` (the equal-rates simplification used throughout
    the experiments; the fully general unequal-rates system is not exposed).
    """

    beta: DecaySchedule
    gamma1: DecaySchedule
    gamma2: DecaySchedule
    rho: DecaySchedule
    sigma: float
    population: float

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.population <= 0:
            raise ValueError("population must be > 0")

    def validate_rho(self, t0: float, t1: float, n: int = 64) -> None:
        """Check 0 < rho(t) < 1 on a grid over [t0, t1]."""
        for t in np.linspace(t0, t1, n):
            r = self.rho.value(float(t))
            if not 0.0 < r < 1.0:
                raise ValueError(f"rho({t}) = {r} is outside (0, 1)")


@dataclass(frozen=True)
class CompartmentState:
    """One time slice of the seven tracked compartments (persons).

    ``T`` is a subcount of ``I`` (people currently infected who were found
    by testing), so conservation reads S + E + I + F1 + R1 + L = N.
    """

    S: float
    E: float
    I: float
    T: float = 0.0
    F1: float = 0.0
    R1: float = 0.0
    L: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.S, self.E, self.I, self.T, self.F1, self.R1, self.L])

    @classmethod
    def from_array(cls, y: np.ndarray) -> "CompartmentState":
        return cls(*map(float, y))

    @property
    def total(self) -> float:
        """Population accounted for (T excluded: it is inside I)."""
        return self.S + self.E + self.I + self.F1 + self.R1 + self.L

    def detected(self, rho_t: float) -> float:
        """Currently detected individuals D = rho(t)*I + T."""
        return rho_t * self.I + self.T

    def undetected_pool(self, rho_t: float) -> float:
        """y = (1-rho)*I - T, the infected still reachable by testing."""
        return (1.0 - rho_t) * self.I - self.T

    def check(self, population: float, rho_t: float, tol: float = 1e-9) -> None:
        eps = tol * population
        vals = self.as_array()
        if vals.min() < -eps:
            raise ValueError(f"negative compartment beyond tolerance: {self}")
        if abs(self.total - population) > eps:
            raise ValueError(
                f"compartments sum to {self.total}, expected {population}"
            )
        if self.undetected_pool(rho_t) < -eps:
            raise ValueError("T exceeds (1-rho)*I")


@dataclass(frozen=True)
class TestingPolicy:
    """Daily test throughput for one location.

    ``alpha`` is either a constant number of tests per day or a mapping
    day -> tests (missing days mean no tests).  ``factor`` models extra
    detections per test from contact tracing and socio-demographic
    targeting; the modeled scenarios use 1, 3 and 9.  The effective
    throughput ``factor*alpha`` is capped at the population size.
    """

    __test__ = False  # not a pytest case, despite the name

    alpha: float | Mapping[int, float] = 0.0
    factor: float = 1.0

    def __post_init__(self) -> None:
        if self.factor < 1.0:
            raise ValueError("factor must be >= 1")
        if isinstance(self.alpha, (int, float)):
            if self.alpha < 0:
                raise ValueError("alpha must be >= 0")
        else:
            bad = {d: a for d, a in self.alpha.items() if a < 0}
            if bad:
                raise ValueError(f"negative test counts for days {sorted(bad)}")

    def alpha_at(self, day: int) -> float:
        if isinstance(self.alpha, (int, float)):
            return float(self.alpha)
        return float(self.alpha.get(day, 0.0))

    def validate_against(self, population: float) -> None:
        if isinstance(self.alpha, (int, float)):
            values = [float(self.alpha)]
        else:
            values = [float(a) for a in self.alpha.values()]
        for a in values:
            if self.factor * a > population:
                raise ValueError(
                    f"factor*alpha = {self.factor * a} exceeds population {population}"
                )


@dataclass(frozen=True)
class ConstantParams:
    """Constant-coefficient reduction used by the qualitative analysis.

    ``gamma`` aggregates gamma1 + gamma2.  ``alpha`` is tests/day.
    ``rho = 0`` is allowed here (the classic no-tracing reduction).
    """

    beta: float
    gamma: float
    sigma: float
    rho: float
    alpha: float = 0.0
    N: float = 1.0

    def __post_init__(self) -> None:
        if min(self.beta, self.gamma, self.sigma, self.alpha) < 0:
            raise ValueError("rates must be >= 0")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must be in [0, 1), got {self.rho}")
        if self.N <= 0:
            raise ValueError("N must be > 0")


def delta_detections(
    state: CompartmentState, alpha_t: float, params: ModelParams, t: float
) -> float:
    """Detections per day from alpha_t random tests: alpha*((1-rho)I - T)/N.

    Uses the big-population simplification of the sampling probability (the
    exact form divides by N - R1 - F1 - rho*I - T instead of N).  A tiny
    negative pool from roundoff is treated as empty.
    """
    if alpha_t < 0:
        raise ValueError("alpha_t must be >= 0")
    rho_t = params.rho.value(t)
    pool = max(state.undetected_pool(rho_t), 0.0)
    return alpha_t * pool / params.population


def _rates(params: ModelParams, t: float) -> tuple[float, float, float, float]:
    return (
        params.beta.value(t),
        params.gamma1.value(t),
        params.gamma2.value(t),
        params.rho.value(t),
    )


def rhs_seir2(t: float, y: np.ndarray, params: ModelParams) -> np.ndarray:
    """Derivatives of the tracing-only system (no mass testing, T frozen).

    The infected-removal term is read as [rho*(g1+g2) + (1-rho)*gbar]*I with
    gbar = g1 + g2, the unique reading that conserves the population and
    matches the testing system when the rates are equal.  The expression
    shapes mirror :func:`rhs_seir4` so the two agree bit-for-bit at
    alpha = 0, T = 0.
    """
    beta, g1, g2, rho = _rates(params, t)
    g = g1 + g2
    N = params.population
    S, E, I = y[_S], y[_E], y[_I]
    pool = (1.0 - rho) * I
    force = beta / N * S * pool
    sE = params.sigma * E
    detected = rho * I
    out = np.empty(7)
    out[_S] = -force
    out[_E] = force - sE
    out[_I] = sE - g * I
    out[_T] = 0.0
    out[_F1] = g1 * detected
    out[_R1] = g2 * detected
    out[_L] = g * pool
    return out


def rhs_seir4(
    t: float, y: np.ndarray, params: ModelParams, policy: TestingPolicy
) -> np.ndarray:
    """Derivatives of the full system with mass testing.

    The detection inflow is factor-scaled and capped so the effective daily
    throughput never exceeds the population; the inflow is proportional to
    the undetected pool y = (1-rho)I - T (floored at zero), which keeps
    T <= (1-rho)I along exact trajectories.
    """
    beta, g1, g2, rho = _rates(params, t)
    g = g1 + g2
    N = params.population
    S, E, I, T = y[_S], y[_E], y[_I], y[_T]
    pool = max((1.0 - rho) * I - T, 0.0)
    force = beta / N * S * pool
    sE = params.sigma * E
    eff_alpha = min(policy.factor * policy.alpha_at(int(math.floor(t))), N)
    inflow = eff_alpha * pool / N
    detected = rho * I + T
    out = np.empty(7)
    out[_S] = -force
    out[_E] = force - sE
    out[_I] = sE - g * I
    out[_T] = inflow - g * T
    out[_F1] = g1 * detected
    out[_R1] = g2 * detected
    out[_L] = g * ((1.0 - rho) * I - T)
    return out


def rhs_seir5(t: float, y: np.ndarray, p: ConstantParams) -> np.ndarray:
    """Constant-coefficient five-compartment reduction (S, E, I, T, R).

    F1, R1 and L are pooled into R; S + E + I + R is conserved.
    """
    S, E, I, T = y[0], y[1], y[2], y[3]
    pool = (1.0 - p.rho) * I - T
    force = p.beta / p.N * S * pool
    sE = p.sigma * E
    return np.array([
        -force,
        force - sE,
        sE - p.gamma * I,
        p.alpha * pool / p.N - p.gamma * T,
        p.gamma * I,
    ])


def make_rhs(
    params: ModelParams, policy: TestingPolicy | None = None
) -> Callable[[float, np.ndarray], np.ndarray]:
    """Bind parameters (and optionally a testing policy) into a rhs(t, y)."""
    if policy is None or (
        isinstance(policy.alpha, (int, float)) and policy.alpha == 0.0
    ):
        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            return rhs_seir2(t, y, params)
    else:
        def rhs(t: float, y: np.ndarray) -> np.ndarray:
            return rhs_seir4(t, y, params, policy)
    return rhs


def make_seir5_rhs(p: ConstantParams) -> Callable[[float, np.ndarray], np.ndarray]:
    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        return rhs_seir5(t, y, p)
    return rhs


def make_state_clamp(params: ModelParams) -> Callable[[float, np.ndarray], np.ndarray]:
    """Post-step repair: floor roundoff negatives (rebalanced into L) and
    keep T inside [0, (1-rho)I]."""

    def clamp(t: float, y: np.ndarray) -> np.ndarray:
        shortfall = 0.0
        for i in (_S, _E, _I, _F1, _R1):
            v = y[i]
            if v < 0.0:
                shortfall += v
                y[i] = 0.0
        if shortfall != 0.0:
            y[_L] += shortfall
        if y[_L] < 0.0:
            y[_L] = 0.0
        rho_t = params.rho.value(t)
        cap = (1.0 - rho_t) * y[_I]
        if y[_T] < 0.0:
            y[_T] = 0.0
        elif y[_T] > cap:
            y[_T] = cap
        return y

    return clamp


def epidemic_extinct(y: np.ndarray, threshold: float = 0.5) -> bool:
    """Long-run stop rule: both E and I below half a person."""
    return y[_E] < threshold and y[_I] < threshold
