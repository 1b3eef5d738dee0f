"""Test-distribution planning: gain forecasts, greedy allocation, baselines.

The planner works on a region of locations with observed epidemic series.
For a current day t it forecasts, for every location and each of the next
14 days, how many cumulative infections would be avoided by spending a
block of K tests there on that day (the gain matrix), then allocates the
available tests greedily by descending gain under capacity constraints.
A rolling evaluation walks the planning period day by day, re-estimating
parameters from the data available so far, committing only the next day's
column, and finally scores the committed plan against a no-testing run of
the full-period model.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import effective_reproduction_number
from .estimation import (
    Bounds,
    DEConfig,
    EstimationError,
    FitnessWeights,
    FitResult,
    ObservationSeries,
    fit,
    weekly_breakpoints,
)
from .integrator import integrate
from .model import CompartmentState, ConstantParams, ModelParams, TestingPolicy, make_rhs

__all__ = [
    "Location",
    "Region",
    "CapacityRule",
    "GainMatrix",
    "DistributionMatrix",
    "EstimationSettings",
    "SavingReport",
    "estimate_until",
    "location_state_at",
    "gain_matrix",
    "test_distribution",
    "homogeneous_plan",
    "rolling_plan",
    "evaluate_plan",
    "evaluate_saving",
]

log = logging.getLogger(__name__)

GAIN_HORIZON_DAYS = 14
GAIN_LEAD_DAYS = 14


@dataclass(frozen=True)
class Location:
    location_id: str
    name: str
    population: float
    observations: ObservationSeries

    def __post_init__(self) -> None:
        if self.population <= 0:
            raise ValueError(f"{self.location_id}: population must be > 0")


@dataclass(frozen=True)
class Region:
    locations: tuple[Location, ...]

    def __post_init__(self) -> None:
        ids = [loc.location_id for loc in self.locations]
        if len(set(ids)) != len(ids):
            raise ValueError("location ids must be unique")

    def __len__(self) -> int:
        return len(self.locations)

    @property
    def populations(self) -> np.ndarray:
        return np.array([loc.population for loc in self.locations])

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(loc.location_id for loc in self.locations)


@dataclass(frozen=True)
class CapacityRule:
    """Daily testing capacity: a fixed count or a fraction of the budget."""

    mode: str
    value: float

    def __post_init__(self) -> None:
        if self.mode not in ("absolute", "fraction"):
            raise ValueError("mode must be 'absolute' or 'fraction'")
        if self.value <= 0:
            raise ValueError("capacity value must be > 0")
        if self.mode == "fraction" and self.value > 1:
            raise ValueError("fraction capacity must be <= 1")

    def daily_cap(self, total_tests: int) -> int:
        if self.mode == "absolute":
            return int(self.value)
        return int(math.floor(self.value * total_tests))


@dataclass(frozen=True)
class GainMatrix:
    """Forecast saved infections for (location, day) test blocks."""

    gains: np.ndarray  # (n_locations, GAIN_HORIZON_DAYS), >= 0
    days: np.ndarray  # absolute day of each column (t+1 .. t+14)
    current_t: float
    block_tests: int
    factor: float
    failed_locations: tuple[str, ...] = ()


@dataclass
class DistributionMatrix:
    """Integer test allocations per (location, day column)."""

    tests: np.ndarray  # (n_locations, n_days) int
    days: np.ndarray  # absolute day per column
    unassigned: int = 0

    @property
    def total_assigned(self) -> int:
        return int(self.tests.sum())

    def column_for(self, day: float) -> np.ndarray:
        idx = np.nonzero(self.days == day)[0]
        if idx.size == 0:
            raise KeyError(f"day {day} not in distribution")
        return self.tests[:, int(idx[0])]

    def policy_for(self, loc_index: int, factor: float) -> TestingPolicy:
        alloc = {
            int(d): float(v)
            for d, v in zip(self.days, self.tests[loc_index])
            if v > 0
        }
        return TestingPolicy(alpha=alloc, factor=factor)


@dataclass(frozen=True)
class EstimationSettings:
    """How the planner re-estimates parameters from truncated data."""

    master_seed: int
    sigma: float = 0.2
    rho: float | None = 0.1
    breakpoint_every: int = 7
    population_size: int = 5
    max_stale_generations: int = 200
    max_generations: int | None = None
    bounds: Bounds = field(default_factory=Bounds)
    weights: FitnessWeights = field(default_factory=FitnessWeights)
    fit_step: float = 0.25
    forecast_step: float = 0.25
    sim_step: float = 0.05
    polish_passes: int = 2
    polish_maxfev: int = 3000
    # cap on the initial-exposed gene relative to the inferred initial
    # infected count; short truncated windows otherwise admit spurious
    # transient-only fits with no transmission
    e0_bound_factor: float = 20.0

    def de_config(self, loc_index: int, upto_day: float) -> DEConfig:
        seq = np.random.SeedSequence((self.master_seed, loc_index, int(upto_day)))
        return DEConfig(
            rng_seed=int(seq.generate_state(1)[0]),
            population_size=self.population_size,
            max_stale_generations=self.max_stale_generations,
            max_generations=self.max_generations,
        )


FitCache = dict


def estimate_until(
    region: Region,
    loc_index: int,
    upto_day: float,
    settings: EstimationSettings,
    cache: FitCache | None = None,
) -> FitResult:
    """Fit a location's parameters using only data up to ``upto_day``.

    Results are cached by (location, day): truncated-data fits do not depend
    on any hypothetical testing, so they are shared across planner runs.
    """
    loc = region.locations[loc_index]
    key = (loc.location_id, float(upto_day))
    if cache is not None and key in cache:
        return cache[key]
    obs = loc.observations.upto(upto_day)
    bps = weekly_breakpoints(obs, settings.breakpoint_every, anchor="end")
    bounds = settings.bounds
    if bounds.e0 is None:
        rho_hint = settings.rho if settings.rho is not None else 0.5 * sum(bounds.rho)
        i0 = float(obs.detected[0]) / rho_hint
        bounds = replace(bounds, e0=(0.0, settings.e0_bound_factor * max(i0, 1.0)))
    result = fit(
        obs,
        bps,
        population=loc.population,
        cfg=settings.de_config(loc_index, upto_day),
        sigma=settings.sigma,
        rho=settings.rho,
        weights=settings.weights,
        bounds=bounds,
        step=settings.fit_step,
        polish_passes=settings.polish_passes,
        polish_maxfev=settings.polish_maxfev,
    )
    if cache is not None:
        cache[key] = result
    return result


def location_state_at(fit_result: FitResult, day: float, step: float = 0.25) -> CompartmentState:
    """State of a fitted (no-testing) model at ``day``."""
    t0 = fit_result.breakpoints[0]
    if day == t0:
        return fit_result.init_state
    traj = integrate(
        make_rhs(fit_result.model_params()),
        fit_result.init_state.as_array(),
        t0,
        day,
        step=step,
    )
    return CompartmentState.from_array(traj.final_state)


def _gate_reproduction_number(params: ModelParams, day: float, S_day: float) -> float:
    gamma = params.gamma1.value(day) + params.gamma2.value(day)
    p = ConstantParams(
        beta=params.beta.value(day),
        gamma=max(gamma, 1e-12),
        sigma=params.sigma,
        rho=params.rho.value(day),
        alpha=0.0,
        N=params.population,
    )
    return effective_reproduction_number(p, min(max(S_day, 0.0), params.population))


def gain_matrix(
    region: Region,
    t: float,
    block_tests: int,
    factor: float,
    settings: EstimationSettings,
    cache: FitCache | None = None,
    last_day: float | None = None,
) -> GainMatrix:
    """Forecast gains of a K-test block for each location and lookahead day.

    For lookahead day t+i (i = 1..14) the gain is the difference in
    cumulative infections N - S at day t+i+14 between a no-testing forecast
    and one where the block is spent at t+i, both driven by parameters
    estimated from data up to t.  Days whose effective reproduction number
    (from the no-testing forecast) is below 1 score zero: the epidemic is
    already declining there.  ``last_day`` clips the lookahead to the
    planning period (instants beyond the horizon are not plannable).
    """
    n = len(region)
    width = GAIN_HORIZON_DAYS
    if last_day is not None:
        width = max(min(width, int(last_day - t)), 0)
    gains = np.zeros((n, width))
    days = t + 1.0 + np.arange(width)
    failed = []
    for li, loc in enumerate(region.locations):
        try:
            fr = estimate_until(region, li, t, settings, cache)
        except EstimationError as exc:
            log.warning("gain row skipped for %s at t=%s: %s", loc.location_id, t, exc)
            failed.append(loc.location_id)
            continue
        params = fr.model_params()
        state_t = location_state_at(fr, t, step=settings.forecast_step)
        end = t + width + GAIN_LEAD_DAYS
        base = integrate(
            make_rhs(params), state_t.as_array(), t, end, step=settings.forecast_step
        )
        N = loc.population
        for i in range(1, width + 1):
            day = t + i
            r_eff = _gate_reproduction_number(params, day, float(base.state_at(day)[0]))
            if r_eff < 1.0:
                continue
            policy = TestingPolicy(
                alpha={int(day): min(float(block_tests), N / factor)}, factor=factor
            )
            tested = integrate(
                make_rhs(params, policy), state_t.as_array(), t, day + GAIN_LEAD_DAYS,
                step=settings.forecast_step,
            )
            p_base = N - float(base.state_at(day + GAIN_LEAD_DAYS)[0])
            p_test = N - float(tested.final_state[0])
            gains[li, i - 1] = max(p_base - p_test, 0.0)
    return GainMatrix(
        gains=gains, days=days, current_t=t, block_tests=block_tests,
        factor=factor, failed_locations=tuple(failed),
    )


def test_distribution(
    G: GainMatrix,
    total_tests: int,
    caps: CapacityRule,
    region: Region,
    prior_allocated: np.ndarray | None = None,
) -> DistributionMatrix:
    """Greedy allocation by descending gain.

    Repeatedly takes the highest-gain cell (ties: lowest location index,
    then earliest day) and assigns the most tests feasible there: the
    remaining budget, the day's remaining capacity, and the location's
    remaining population headroom (factor * lifetime tests <= population,
    with ``prior_allocated`` counting earlier commitments).  Stops when the
    budget is gone or no positive gain remains; leftovers are reported
    unassigned.
    """
    if total_tests < 0:
        raise ValueError("total_tests must be >= 0")
    n_loc = len(region)
    work = G.gains.copy()
    alloc = np.zeros_like(work, dtype=np.int64)
    col_used = np.zeros(work.shape[1], dtype=np.int64)
    loc_used = np.zeros(n_loc, dtype=np.int64)
    if prior_allocated is not None:
        loc_used += np.asarray(prior_allocated, dtype=np.int64)
    pop_cap = np.floor(region.populations / G.factor).astype(np.int64)
    cap = caps.daily_cap(total_tests)
    remaining = int(total_tests)
    while remaining > 0:
        flat = int(np.argmax(work))
        l, d = divmod(flat, work.shape[1])
        if work[l, d] <= 0.0:
            break
        amount = min(remaining, cap - col_used[d], pop_cap[l] - loc_used[l])
        amount = int(max(amount, 0))
        alloc[l, d] += amount
        col_used[d] += amount
        loc_used[l] += amount
        remaining -= amount
        work[l, d] = 0.0
    return DistributionMatrix(tests=alloc, days=G.days.copy(), unassigned=remaining)


test_distribution.__test__ = False  # Algorithm name, not a pytest case


def homogeneous_plan(
    region: Region, total_tests: int, days: np.ndarray
) -> DistributionMatrix:
    """Baseline: proportional to population and constant over the horizon.

    Location totals are rounded by largest remainder (ties to the larger
    population, then the lower index); each location's total is spread
    evenly over the days, with its leftover placed one test per day on the
    final days.
    """
    if total_tests < 0:
        raise ValueError("total_tests must be >= 0")
    days = np.asarray(days, dtype=float)
    m = len(days)
    pops = region.populations
    quotas = total_tests * pops / pops.sum()
    base = np.floor(quotas).astype(np.int64)
    leftover = int(total_tests - base.sum())
    order = sorted(
        range(len(region)),
        key=lambda i: (-(quotas[i] - base[i]), -pops[i], i),
    )
    for i in order[:leftover]:
        base[i] += 1
    alloc = np.zeros((len(region), m), dtype=np.int64)
    for li, loc_total in enumerate(base):
        per_day, extra = divmod(int(loc_total), m)
        alloc[li, :] = per_day
        if extra:
            alloc[li, m - extra:] += 1
    return DistributionMatrix(tests=alloc, days=days, unassigned=0)


@dataclass(frozen=True)
class SavingReport:
    """Outcome of evaluating a test distribution against no testing."""

    infections_without: float
    infections_with: float
    distribution: DistributionMatrix
    factor: float
    end_day: float

    @property
    def saving(self) -> float:
        return self.infections_without - self.infections_with


def evaluate_plan(
    region: Region,
    plan: DistributionMatrix,
    sim_fits: dict[str, FitResult],
    factor: float,
    end_day: float,
    step: float = 0.05,
) -> SavingReport:
    """Score a committed plan with the full-period simulation parameters.

    Each location's fitted model is run to ``end_day`` twice, without tests
    and with the plan's daily tests (scaled by the detection factor); the
    report compares cumulative infections N - S(end).
    """
    without = 0.0
    with_plan = 0.0
    for li, loc in enumerate(region.locations):
        fr = sim_fits[loc.location_id]
        params = fr.model_params()
        y0 = fr.init_state.as_array()
        t0 = fr.breakpoints[0]
        base = integrate(make_rhs(params), y0, t0, end_day, step=step)
        policy = plan.policy_for(li, factor)
        tested = integrate(make_rhs(params, policy), y0, t0, end_day, step=step)
        without += loc.population - float(base.final_state[0])
        with_plan += loc.population - float(tested.final_state[0])
    return SavingReport(
        infections_without=without,
        infections_with=with_plan,
        distribution=plan,
        factor=factor,
        end_day=end_day,
    )


def rolling_plan(
    region: Region,
    total_tests: int,
    caps: CapacityRule,
    factor: float,
    plan_start: float,
    horizon: int,
    settings: EstimationSettings,
    cache: FitCache | None = None,
    block_tests: int | None = None,
    gain_cache: dict | None = None,
) -> DistributionMatrix:
    """Myopic day-by-day plan over ``horizon`` days after ``plan_start``.

    At each day t the gain and distribution matrices are rebuilt from data
    up to t and the remaining budget, but only the t+1 column is committed.
    The block size for gain forecasts defaults to the daily capacity.
    Gain matrices depend only on (day, block size, factor), so they may be
    shared across budget scenarios through ``gain_cache``.
    """
    if block_tests is None:
        block_tests = max(caps.daily_cap(total_tests), 1)
    n_loc = len(region)
    days = plan_start + 1.0 + np.arange(horizon)
    plan_end = plan_start + horizon
    committed = np.zeros((n_loc, horizon), dtype=np.int64)
    committed_per_loc = np.zeros(n_loc, dtype=np.int64)
    remaining = int(total_tests)
    for step_idx in range(horizon):
        if remaining <= 0:
            break
        t = plan_start + step_idx
        gkey = (float(t), int(block_tests), float(factor))
        if gain_cache is not None and gkey in gain_cache:
            G = gain_cache[gkey]
        else:
            G = gain_matrix(region, t, block_tests, factor, settings, cache,
                            last_day=plan_end)
            if gain_cache is not None:
                gain_cache[gkey] = G
        D = test_distribution(G, remaining, caps, region, prior_allocated=committed_per_loc)
        col = D.column_for(t + 1.0)
        committed[:, step_idx] = col
        committed_per_loc += col
        remaining -= int(col.sum())
    return DistributionMatrix(tests=committed, days=days, unassigned=remaining)


def evaluate_saving(
    region: Region,
    total_tests: int,
    caps: CapacityRule,
    factor: float,
    plan_start: float,
    horizon: int,
    settings: EstimationSettings,
    cache: FitCache | None = None,
    block_tests: int | None = None,
    plan: DistributionMatrix | None = None,
    gain_cache: dict | None = None,
) -> SavingReport:
    """Build (or take) a plan and score it over [data start, plan_start + horizon].

    Simulation parameters are estimated once from the full observation
    window of each location; the rolling plan itself only ever sees data up
    to its current day.
    """
    sim_fits = {}
    for li, loc in enumerate(region.locations):
        sim_fits[loc.location_id] = estimate_until(
            region, li, float(loc.observations.days[-1]), settings, cache
        )
    if plan is None:
        plan = rolling_plan(
            region, total_tests, caps, factor, plan_start, horizon, settings,
            cache, block_tests, gain_cache,
        )
    end_day = plan_start + horizon
    return evaluate_plan(region, plan, sim_fits, factor, end_day, step=settings.sim_step)
