#!/usr/bin/env python3
"""Regenerate the bundled CSV snapshots under src/epiplan/data/.

The Spain file is a model-generated stand-in for the ministry series (the
live repositories are not fetched): the bundled first-wave parameter set is
simulated and small seeded noise is layered on top, so the snapshot is
realistic but self-contained.  The synthetic region is a three-location
test-bed with one growing, one declining and one borderline epidemic.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from epiplan.dataio import spain_initial_state, spain_model_params
from epiplan.integrator import integrate
from epiplan.model import (
    CompartmentState,
    DecaySchedule,
    DecaySegment,
    ModelParams,
    make_rhs,
)

DATA_DIR = Path(__file__).resolve().parent.parent / "src" / "epiplan" / "data"


def detected_curves(params: ModelParams, init: CompartmentState, days: int):
    traj = integrate(make_rhs(params), init.as_array(), 0.0, float(days), step=0.05)
    rho = np.array([params.rho.value(float(t)) for t in traj.times])
    active = rho * traj.column("I") + traj.column("T")
    return active, traj.column("F1"), traj.column("R1")


def noisy_increments(series: np.ndarray, rng, scale: float) -> np.ndarray:
    inc = np.diff(series, prepend=0.0)
    inc = inc * (1.0 + scale * rng.standard_normal(len(inc)))
    return np.cumsum(np.maximum(inc, 0.0))


def make_spain(days: int = 87, seed: int = 20200220) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    active, deaths, recovered = detected_curves(
        spain_model_params(), spain_initial_state(), days
    )
    noisy_active = np.maximum(active * (1.0 + 0.02 * rng.standard_normal(len(active))), 0.0)
    noisy_deaths = noisy_increments(deaths, rng, 0.01)
    noisy_recovered = noisy_increments(recovered, rng, 0.01)
    cases = np.round(noisy_active + noisy_deaths + noisy_recovered)
    noisy_deaths = np.round(noisy_deaths)
    noisy_recovered = np.round(noisy_recovered)
    cases = np.maximum.accumulate(cases)  # repair dips; the lift lands on the active count
    cases[0] = max(cases[0], 3.0)
    dates = pd.date_range("2020-02-20", periods=days + 1, freq="D")
    return pd.DataFrame({
        "date": dates.strftime("%Y-%m-%d"),
        "cumulative_cases": cases.astype(int),
        "cumulative_deaths": noisy_deaths.astype(int),
        "cumulative_recovered": noisy_recovered.astype(int),
    })


SYNTHETIC_LOCATIONS = {
    # id: (name, population, (beta0, beta1, r_beta), gamma1, gamma2, E0, I0)
    # transmission decays lockdown-style; alderton and carwick stay above
    # the epidemic threshold through the planning window and crest just
    # beyond the data, brockfield declines throughout
    "alderton": ("Alderton", 1_000_000.0, (0.55, 0.38, 0.045), 0.012, 0.108, 300.0, 150.0),
    "brockfield": ("Brockfield", 500_000.0, (0.05, 0.0, 0.0), 0.012, 0.088, 500.0, 4000.0),
    "carwick": ("Carwick", 250_000.0, (0.50, 0.36, 0.04), 0.012, 0.098, 400.0, 200.0),
}
SYNTHETIC_RHO = 0.1
SYNTHETIC_SIGMA = 0.2


def synthetic_truth() -> dict[str, tuple[ModelParams, CompartmentState]]:
    out = {}
    for loc_id, (name, pop, (b0, b1, br), g1, g2, e0, i0) in SYNTHETIC_LOCATIONS.items():
        params = ModelParams(
            beta=DecaySchedule((DecaySegment(c0=b0, c1=b1, r=br),)),
            gamma1=DecaySchedule.constant(g1),
            gamma2=DecaySchedule.constant(g2),
            rho=DecaySchedule.constant(SYNTHETIC_RHO),
            sigma=SYNTHETIC_SIGMA,
            population=pop,
        )
        init = CompartmentState(S=pop - e0 - i0, E=e0, I=i0)
        out[loc_id] = (params, init)
    return out


def make_synthetic(days: int = 63, seed: int = 20200401) -> tuple[pd.DataFrame, pd.DataFrame]:
    rng = np.random.default_rng(seed)
    dates = pd.date_range("2020-04-01", periods=days + 1, freq="D")
    rows = []
    pop_rows = []
    for loc_id, (params, init) in synthetic_truth().items():
        name, pop = SYNTHETIC_LOCATIONS[loc_id][0], SYNTHETIC_LOCATIONS[loc_id][1]
        active, deaths, recovered = detected_curves(params, init, days)
        cases = active + deaths + recovered  # cumulative detected
        noisy_cases = np.round(noisy_increments(cases, rng, 0.005))
        noisy_deaths = np.minimum(np.round(noisy_increments(deaths, rng, 0.005)), noisy_cases)
        for d, c, f in zip(dates, noisy_cases, noisy_deaths):
            rows.append((d.strftime("%Y-%m-%d"), loc_id, int(c), int(f)))
        pop_rows.append((loc_id, name, int(pop)))
    cases_frame = pd.DataFrame(
        rows, columns=["date", "location_id", "cumulative_cases", "cumulative_deaths"]
    )
    pop_frame = pd.DataFrame(pop_rows, columns=["location_id", "name", "population"])
    return cases_frame, pop_frame


def main() -> None:
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    make_spain().to_csv(DATA_DIR / "spain_first_wave.csv", index=False)
    cases, pops = make_synthetic()
    cases.to_csv(DATA_DIR / "synthetic_region_cases.csv", index=False)
    pops.to_csv(DATA_DIR / "synthetic_region_population.csv", index=False)
    print(f"fixtures written to {DATA_DIR}")


if __name__ == "__main__":
    main()
