"""Ingestion of per-location epidemic time series and bundled fixtures.

Two CSV schemas are accepted:

* schema A (multi-location): ``date,location_id,cumulative_cases,cumulative_deaths``
* schema B (single location): ``date,cumulative_cases,cumulative_deaths,cumulative_recovered``

Dates are ISO-8601; day 0 is the first date in the file.  When recovered
counts are not reported (schema A) the recovered series is reconstructed
from a fixed average recovery time: everyone detected more than 14 days ago
and not dead counts as recovered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from .estimation import ObservationSeries
from .model import CompartmentState, DecaySchedule, DecaySegment, ModelParams

__all__ = [
    "DataValidationError",
    "LocationSeries",
    "RawSeries",
    "load_timeseries",
    "load_population_registry",
    "reconstruct_observations",
    "export_observations",
    "spain_model_params",
    "spain_initial_state",
    "spain_fixture",
    "SPAIN_BREAKPOINTS",
    "SPAIN_POPULATION",
    "synthetic_region",
]

RECOVERY_WINDOW_DAYS = 14

SCHEMA_A = ("date", "location_id", "cumulative_cases", "cumulative_deaths")
SCHEMA_B = ("date", "cumulative_cases", "cumulative_deaths", "cumulative_recovered")


class DataValidationError(ValueError):
    pass


@dataclass(frozen=True)
class LocationSeries:
    """Cumulative detected cases/deaths (and optionally recoveries) for one location."""

    location_id: str
    days: np.ndarray  # day indices on the file-wide axis
    cases: np.ndarray
    deaths: np.ndarray
    recovered: np.ndarray | None = None
    filled_days: tuple[int, ...] = ()  # forward-filled gaps, for reporting


@dataclass(frozen=True)
class RawSeries:
    """Validated per-location cumulative series on a shared day axis."""

    start_date: pd.Timestamp
    locations: dict[str, LocationSeries]

    def day_of(self, date_str: str) -> int:
        return int((pd.Timestamp(date_str) - self.start_date).days)

    def date_of(self, day: float) -> pd.Timestamp:
        return self.start_date + pd.Timedelta(days=int(day))


def _validate_monotone(loc: str, name: str, days: np.ndarray, values: np.ndarray) -> None:
    drops = np.nonzero(np.diff(values) < 0)[0]
    if drops.size:
        rows = ", ".join(f"day {int(days[i + 1])}" for i in drops[:5])
        raise DataValidationError(
            f"{loc}: cumulative {name} decreases at {rows}"
        )


def _build_location(loc: str, sub: pd.DataFrame, start: pd.Timestamp,
                    has_recovered: bool) -> LocationSeries:
    sub = sub.sort_values("date")
    if sub["date"].duplicated().any():
        dup = sub.loc[sub["date"].duplicated(), "date"].iloc[0]
        raise DataValidationError(f"{loc}: duplicated date {dup.date()}")
    days = ((sub["date"] - start).dt.days).to_numpy()
    full = np.arange(days[0], days[-1] + 1)
    filled = tuple(int(d) for d in sorted(set(full) - set(days)))
    cols = ["cumulative_cases", "cumulative_deaths"] + (
        ["cumulative_recovered"] if has_recovered else []
    )
    frame = sub.set_index(days)[cols].reindex(full).ffill()
    if frame.isna().any().any():
        raise DataValidationError(f"{loc}: missing values before the first record")
    cases = frame["cumulative_cases"].to_numpy(dtype=float)
    deaths = frame["cumulative_deaths"].to_numpy(dtype=float)
    _validate_monotone(loc, "cases", full, cases)
    _validate_monotone(loc, "deaths", full, deaths)
    if np.any(deaths > cases):
        bad = int(full[np.argmax(deaths > cases)])
        raise DataValidationError(f"{loc}: deaths exceed cases at day {bad}")
    recovered = None
    if has_recovered:
        recovered = frame["cumulative_recovered"].to_numpy(dtype=float)
        _validate_monotone(loc, "recovered", full, recovered)
        if np.any(deaths + recovered > cases):
            bad = int(full[np.argmax(deaths + recovered > cases)])
            raise DataValidationError(
                f"{loc}: deaths + recovered exceed cases at day {bad}"
            )
    return LocationSeries(
        location_id=loc, days=full.astype(float), cases=cases, deaths=deaths,
        recovered=recovered, filled_days=filled,
    )


def load_timeseries(path, schema: str = "auto") -> RawSeries:
    """Read and validate a cumulative-series CSV (schema A or B)."""
    frame = pd.read_csv(path)
    if frame.empty:
        raise DataValidationError(f"{path}: no data rows")
    cols = tuple(frame.columns)
    if schema == "auto":
        if set(SCHEMA_A) <= set(cols):
            schema = "per_location"
        elif set(SCHEMA_B) <= set(cols):
            schema = "single_location"
        else:
            raise DataValidationError(
                f"{path}: columns {cols} match neither {SCHEMA_A} nor {SCHEMA_B}"
            )
    expected = SCHEMA_A if schema == "per_location" else SCHEMA_B
    unknown = set(cols) - set(expected)
    if unknown or not set(expected) <= set(cols):
        raise DataValidationError(
            f"{path}: expected columns {expected}, got {cols}"
        )
    try:
        frame["date"] = pd.to_datetime(frame["date"], format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise DataValidationError(f"{path}: unparseable date: {exc}") from exc
    start = frame["date"].min()
    locations: dict[str, LocationSeries] = {}
    if schema == "per_location":
        for loc, sub in frame.groupby("location_id", sort=True):
            locations[str(loc)] = _build_location(str(loc), sub, start, False)
    else:
        locations["location"] = _build_location("location", frame, start, True)
    return RawSeries(start_date=start, locations=locations)


def load_population_registry(path) -> dict[str, tuple[str, float]]:
    """location_id -> (name, population) from a registry CSV."""
    frame = pd.read_csv(path)
    expected = {"location_id", "name", "population"}
    if set(frame.columns) != expected:
        raise DataValidationError(
            f"{path}: expected columns {sorted(expected)}, got {list(frame.columns)}"
        )
    out: dict[str, tuple[str, float]] = {}
    for row in frame.itertuples(index=False):
        pop = float(row.population)
        if pop <= 0:
            raise DataValidationError(f"{path}: population of {row.location_id} must be > 0")
        out[str(row.location_id)] = (str(row.name), pop)
    return out


def reconstruct_observations(
    raw: RawSeries, window: int = RECOVERY_WINDOW_DAYS
) -> dict[str, ObservationSeries]:
    """Per-location observed (D, F1, R1) series.

    With reported recoveries: D = C - F1 - R1.  Otherwise recoveries are
    reconstructed from the average recovery time: R1(t) = C(t-window) - F1(t)
    (floored at zero) and D(t) = C(t) - C(t-window), with C = 0 before the
    series starts, so that D + R1 + F1 = C.
    """
    out: dict[str, ObservationSeries] = {}
    for loc_id, loc in raw.locations.items():
        if loc.recovered is not None:
            rec = loc.recovered
            det = loc.cases - loc.deaths - rec
        else:
            shifted = np.concatenate([
                np.zeros(min(window, len(loc.cases))), loc.cases[:-window]
            ])[: len(loc.cases)]
            det = loc.cases - shifted
            rec = np.maximum(shifted - loc.deaths, 0.0)
        out[loc_id] = ObservationSeries(
            days=loc.days, detected=det, deaths=loc.deaths, recovered=rec
        )
    return out


def export_observations(obs: ObservationSeries, path) -> None:
    """Write an observation series as CSV (day,detected,deaths,recovered)."""
    pd.DataFrame({
        "day": obs.days,
        "detected": obs.detected,
        "deaths": obs.deaths,
        "recovered": obs.recovered,
    }).to_csv(path, index=False)


# ---------------------------------------------------------------------------
# Spain first-wave fixture (Feb 20 - May 17, 2020; day 0 = Feb 20)
# ---------------------------------------------------------------------------

SPAIN_POPULATION = 47_000_000.0
SPAIN_SIGMA = 0.2
SPAIN_RHO = 0.1
SPAIN_BREAKPOINTS = (0.0, 21.0, 41.0, 61.0)
SPAIN_END_DAY = 87.0

# (c0, c1, r) per interval; value = c0 - c1*(1 - exp(-r (t - t_start)))
_SPAIN_BETA = ((1.04, 0.0, 0.0), (0.6, 0.596, 0.09), (0.04, 0.033, 0.05), (0.02, 0.0065, 0.09))
_SPAIN_GAMMA1 = ((0.0069, 0.0, 0.0), (0.012, 0.001, 0.05), (0.0095, 0.008, 0.065), (0.0055, 0.004, 0.075))
_SPAIN_GAMMA2 = ((0.014, 0.0, 0.0), (0.056, 0.04, 0.025), (0.055, 0.025, 0.44), (0.035, 0.01, 0.93))


def _piecewise(coeffs) -> DecaySchedule:
    edges = list(SPAIN_BREAKPOINTS) + [math.inf]
    segs = tuple(
        DecaySegment(c0=c0, c1=c1, r=r, t_start=t0, t_end=t1)
        for (c0, c1, r), t0, t1 in zip(coeffs, edges, edges[1:])
    )
    return DecaySchedule(segs)


def spain_model_params(rho: float = SPAIN_RHO) -> ModelParams:
    """Published piecewise estimates for the Spanish first wave."""
    return ModelParams(
        beta=_piecewise(_SPAIN_BETA),
        gamma1=_piecewise(_SPAIN_GAMMA1),
        gamma2=_piecewise(_SPAIN_GAMMA2),
        rho=DecaySchedule.constant(rho),
        sigma=SPAIN_SIGMA,
        population=SPAIN_POPULATION,
    )


def spain_initial_state(e0: float = 160.0, i0: float = 30.0) -> CompartmentState:
    """Feb 20, 2020: 3 detected active cases at rho=0.1, estimated 160 exposed."""
    return CompartmentState(
        S=SPAIN_POPULATION - i0 - e0, E=e0, I=i0, T=0.0, F1=0.0, R1=0.0, L=0.0
    )


def _data_path(name: str) -> Path:
    return Path(resources.files("epiplan.data") / name)


def spain_fixture() -> tuple[ObservationSeries, ModelParams, CompartmentState]:
    """Bundled Spain snapshot plus the published parameters and initial state.

    The CSV is a model-generated stand-in for the ministry series (the live
    repositories are not fetched at build time); see the data README.
    """
    raw = load_timeseries(_data_path("spain_first_wave.csv"), schema="single_location")
    obs = reconstruct_observations(raw)["location"]
    return obs, spain_model_params(), spain_initial_state()


def synthetic_region():
    """Bundled three-location region used by the planner test-bed."""
    from .planner import Location, Region

    raw = load_timeseries(_data_path("synthetic_region_cases.csv"), schema="per_location")
    registry = load_population_registry(_data_path("synthetic_region_population.csv"))
    observations = reconstruct_observations(raw)
    locs = []
    for loc_id in sorted(raw.locations):
        name, pop = registry[loc_id]
        locs.append(Location(
            location_id=loc_id, name=name, population=pop,
            observations=observations[loc_id],
        ))
    return Region(locations=tuple(locs))
