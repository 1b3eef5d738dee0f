"""Qualitative toolkit for the constant-coefficient reduction.

Final epidemic size, reproduction numbers and linear stability of the
disease-free equilibrium, all for the five-compartment system with constant
rates.  The removal aggregate is gamma = gamma1 + gamma2.
"""

from __future__ import annotations

import math
from typing import Iterable, NamedTuple

from scipy.optimize import brentq

from .model import ConstantParams

__all__ = [
    "FinalSizeError",
    "StabilityResult",
    "limit_susceptible",
    "monotonicity_scan",
    "basic_reproduction_number",
    "alternative_reproduction_number",
    "effective_reproduction_number",
    "is_stable",
]


class FinalSizeError(ValueError):
    """The final-size equation has no admissible root for these inputs."""


def _final_size_function(p: ConstantParams, S0: float, R0_init: float, T0: float):
    A = p.alpha + p.gamma * p.N
    b1r = p.beta * (1.0 - p.rho)

    def f(x: float) -> float:
        return A * math.log(x / S0) + b1r * (p.N - R0_init - x) - T0 * p.beta

    return f, A, b1r


def limit_susceptible(
    p: ConstantParams, S0: float, R0_init: float = 0.0, T0: float = 0.0
) -> float:
    """Long-run susceptible count S_inf.

    Root of (alpha + gamma N) log(x/S0) + beta (1-rho) (N - R0 - x) - T0 beta
    on (0, x0), where x0 = (alpha + gamma N) / (beta (1-rho)) is the
    function's maximum; the admissible root is the smaller of the two and is
    bracketed there.  Resolved to 1e-12 relative tolerance.
    """
    if S0 <= 0:
        raise ValueError("S0 must be > 0")
    if p.beta == 0.0:
        return S0
    if p.gamma <= 0:
        raise ValueError("gamma must be > 0")
    f, A, b1r = _final_size_function(p, S0, R0_init, T0)
    x0 = A / b1r
    if f(x0) < 0.0:
        raise FinalSizeError(
            "final-size function is negative at its maximum; inputs are inconsistent"
        )
    lo = 1e-15 * p.N
    while f(lo) > 0.0:  # pathological only for enormous S0/N ratios
        lo *= 0.5
        if lo < 5e-324:
            raise FinalSizeError("could not bracket the final-size root")
    return float(brentq(f, lo, x0, xtol=5e-324, rtol=1e-12))


def monotonicity_scan(
    p: ConstantParams,
    param: str,
    grid: Iterable[float],
    S0: float,
    R0_init: float = 0.0,
    T0: float = 0.0,
) -> list[tuple[float, float]]:
    """S_inf along an increasing grid of alpha or rho values."""
    if param not in ("alpha", "rho"):
        raise ValueError("param must be 'alpha' or 'rho'")
    values = [float(v) for v in grid]
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError("grid must be strictly increasing")
    out = []
    for v in values:
        q = ConstantParams(
            beta=p.beta,
            gamma=p.gamma,
            sigma=p.sigma,
            rho=v if param == "rho" else p.rho,
            alpha=v if param == "alpha" else p.alpha,
            N=p.N,
        )
        out.append((v, limit_susceptible(q, S0, R0_init, T0)))
    return out


def basic_reproduction_number(p: ConstantParams) -> float:
    """R0 = (beta(1-rho) - alpha/N) / gamma (next-generation spectral radius).

    May be negative when testing outpaces transmission; stability decisions
    should go through :func:`is_stable`.
    """
    if p.gamma == 0:
        raise ValueError("gamma must be > 0")
    return (p.beta * (1.0 - p.rho) - p.alpha / p.N) / p.gamma


def alternative_reproduction_number(p: ConstantParams) -> float:
    """Ratio form beta(1-rho) / (gamma + alpha/N); crosses 1 with R0."""
    denom = p.gamma + p.alpha / p.N
    if denom == 0:
        raise ValueError("gamma + alpha/N must be > 0")
    return p.beta * (1.0 - p.rho) / denom


def effective_reproduction_number(p: ConstantParams, S_t: float) -> float:
    """R_t = (S(t)/N * beta(1-rho) - alpha/N) / gamma."""
    if p.gamma == 0:
        raise ValueError("gamma must be > 0")
    if not 0.0 <= S_t <= p.N:
        raise ValueError("S_t must lie in [0, N]")
    return (S_t / p.N * p.beta * (1.0 - p.rho) - p.alpha / p.N) / p.gamma


class StabilityResult(NamedTuple):
    stable: bool
    a2: float
    a1: float
    a0: float


def is_stable(p: ConstantParams) -> StabilityResult:
    """Routh-Hurwitz verdict for the disease-free equilibrium.

    Characteristic cubic lambda^3 + a2 lambda^2 + a1 lambda + a0 of the
    linearized infective subsystem (E, I, T); stable iff a2 > 0, a0 > 0 and
    a2*a1 - a0 > 0.
    """
    aN = p.alpha / p.N
    a2 = p.sigma + 2.0 * p.gamma + aN
    a1 = (p.sigma + p.gamma) * (aN + p.gamma) + p.sigma * p.gamma
    a0 = p.sigma * p.gamma * (aN + p.gamma - p.beta * (1.0 - p.rho))
    stable = a2 > 0.0 and a0 > 0.0 and a2 * a1 - a0 > 0.0
    return StabilityResult(stable, a2, a1, a0)
