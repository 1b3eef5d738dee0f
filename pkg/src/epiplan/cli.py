"""Command-line front end: fit, simulate, analyze, plan, baseline, evaluate.

Dates on the command line are ISO-8601 and are converted to day indices
with day 0 = the first date of the loaded series; plain integers are
accepted as day indices directly.  Exit codes: 0 success, 2 invalid input,
3 numerical failure.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click
import numpy as np
import pandas as pd

from . import dataio
from .analysis import (
    FinalSizeError,
    alternative_reproduction_number,
    basic_reproduction_number,
    is_stable,
    limit_susceptible,
    monotonicity_scan,
)
from .estimation import (
    DEConfig,
    EstimationError,
    FitResult,
    fit as run_fit,
    weekly_breakpoints,
)
from .integrator import IntegrationError, integrate, trajectory_frame
from .model import ConstantParams, CompartmentState, ModelParams, TestingPolicy, make_rhs
from .planner import (
    CapacityRule,
    DistributionMatrix,
    EstimationSettings,
    Location,
    Region,
    evaluate_plan,
    evaluate_saving,
    homogeneous_plan,
    rolling_plan,
)

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (dataio.DataValidationError, EstimationError, ValueError) as exc:
            if isinstance(exc, (IntegrationError, FinalSizeError)):
                click.echo(f"numerical failure: {exc}", err=True)
                sys.exit(EXIT_NUMERICAL)
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
        except (IntegrationError, FinalSizeError) as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)
    return wrapper


@click.group()
@click.option("--seed", type=int, default=None, help="RNG seed (required for estimation/planning).")
@click.option("--step", type=float, default=0.05, show_default=True, help="Integrator step (days).")
@click.option("--out", type=click.Path(file_okay=False), default=".", show_default=True,
              help="Output directory.")
@click.pass_context
def main(ctx, seed, step, out):
    """Epidemic model fitting, simulation, analysis and test planning."""
    ctx.ensure_object(dict)
    ctx.obj.update(seed=seed, step=step, out=Path(out))
    ctx.obj["out"].mkdir(parents=True, exist_ok=True)


def _require_seed(ctx) -> int:
    seed = ctx.obj["seed"]
    if seed is None:
        raise click.UsageError("--seed is required for this command (reproducibility)")
    return seed


def _to_day(value: str, raw: dataio.RawSeries) -> float:
    try:
        return float(int(value))
    except ValueError:
        return float(raw.day_of(value))


def _load_region(data_path, population_file, population) -> tuple[Region, dataio.RawSeries]:
    raw = dataio.load_timeseries(data_path)
    observations = dataio.reconstruct_observations(raw)
    locs = []
    if population_file is not None:
        registry = dataio.load_population_registry(population_file)
        for loc_id in sorted(raw.locations):
            if loc_id not in registry:
                raise dataio.DataValidationError(f"no population entry for {loc_id}")
            name, pop = registry[loc_id]
            locs.append(Location(loc_id, name, pop, observations[loc_id]))
    else:
        if population is None:
            raise click.UsageError("provide --population-file or --population")
        if len(raw.locations) != 1:
            raise click.UsageError("--population only applies to single-location data")
        (loc_id,) = raw.locations
        locs.append(Location(loc_id, loc_id, population, observations[loc_id]))
    return Region(locations=tuple(locs)), raw


def _settings(ctx, seed, rho, sigma, weekly_every, pop_size, max_stale, max_generations,
              fit_step, polish_passes, polish_maxfev) -> EstimationSettings:
    return EstimationSettings(
        master_seed=seed,
        sigma=sigma,
        rho=None if rho == "estimate" else float(rho),
        breakpoint_every=weekly_every,
        population_size=pop_size,
        max_stale_generations=max_stale,
        max_generations=max_generations,
        fit_step=fit_step,
        sim_step=ctx.obj["step"],
        polish_passes=polish_passes,
        polish_maxfev=polish_maxfev,
    )


def _estimation_options(fn):
    opts = [
        click.option("--rho", default="0.1", show_default=True,
                     help="Fixed detection-by-tracing rate, or 'estimate'."),
        click.option("--sigma", type=float, default=0.2, show_default=True),
        click.option("--weekly-every", type=int, default=7, show_default=True),
        click.option("--pop-size", type=int, default=5, show_default=True),
        click.option("--max-stale", type=int, default=200, show_default=True),
        click.option("--max-generations", type=int, default=None),
        click.option("--fit-step", type=float, default=0.25, show_default=True),
        click.option("--polish-passes", type=int, default=2, show_default=True),
        click.option("--polish-maxfev", type=int, default=3000, show_default=True),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


@main.command("fit")
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@click.option("--population-file", type=click.Path(exists=True, dir_okay=False))
@click.option("--population", type=float, default=None, help="Population for single-location data.")
@click.option("--intervals", default=None,
              help="Comma-separated interval start dates/days (a trailing end marker is allowed).")
@click.option("--weekly", "weekly", is_flag=True, help="Automatic intervals every --weekly-every days.")
@click.option("--weekly-every", type=int, default=7, show_default=True)
@click.option("--rho", default="0.1", show_default=True,
              help="Fixed detection-by-tracing rate, or 'estimate'.")
@click.option("--sigma", type=float, default=0.2, show_default=True)
@click.option("--pop-size", type=int, default=5, show_default=True)
@click.option("--max-stale", type=int, default=1000, show_default=True)
@click.option("--max-generations", type=int, default=None)
@click.option("--fit-step", type=float, default=0.25, show_default=True)
@click.option("--polish-passes", type=int, default=3, show_default=True)
@click.option("--polish-maxfev", type=int, default=5000, show_default=True)
@click.pass_context
@_guarded
def cmd_fit(ctx, data, population_file, population, intervals, weekly, weekly_every,
            rho, sigma, pop_size, max_stale, max_generations, fit_step,
            polish_passes, polish_maxfev):
    """Estimate piecewise parameters per location; writes one fit file each."""
    seed = _require_seed(ctx)
    if intervals is None and not weekly:
        raise click.UsageError("provide --intervals or --weekly")
    region, raw = _load_region(data, population_file, population)
    out: Path = ctx.obj["out"]
    settings = _settings(ctx, seed, rho, sigma, weekly_every, pop_size, max_stale,
                         max_generations, fit_step, polish_passes, polish_maxfev)
    report_lines = []
    for li, loc in enumerate(region.locations):
        obs = loc.observations
        if intervals is not None:
            bps = [_to_day(tok.strip(), raw) for tok in intervals.split(",")]
        else:
            bps = weekly_breakpoints(obs, weekly_every)
        result = run_fit(
            obs, bps,
            population=loc.population,
            cfg=settings.de_config(li, float(obs.days[-1])),
            sigma=sigma,
            rho=settings.rho,
            bounds=settings.bounds,
            weights=settings.weights,
            step=fit_step,
            polish_passes=polish_passes,
            polish_maxfev=polish_maxfev,
        )
        path = out / f"fit_{loc.location_id}.txt"
        result.save(path)
        line = (f"{loc.location_id}: intervals={len(result.breakpoints)} "
                f"fitness={result.fitness:.6g} generations={sum(result.generations)} "
                f"-> {path}")
        report_lines.append(line)
        click.echo(line)
    (out / "fit_report.txt").write_text("\n".join(report_lines) + "\n")


@main.command("simulate")
@click.option("--params-file", type=click.Path(exists=True, dir_okay=False),
              help="Fit-result file to simulate.")
@click.option("--spain-fixture", "use_spain", is_flag=True,
              help="Use the bundled first-wave parameter set.")
@click.option("--t0", type=int, default=None, help="Start day (default: params start).")
@click.option("--t1", type=int, required=True, help="End day.")
@click.option("--alpha", type=float, default=0.0, show_default=True, help="Constant tests/day.")
@click.option("--alpha-file", type=click.Path(exists=True, dir_okay=False),
              help="CSV day,tests schedule (overrides --alpha).")
@click.option("--factor", type=float, default=1.0, show_default=True)
@click.option("--output", default="trajectory.csv", show_default=True)
@click.pass_context
@_guarded
def cmd_simulate(ctx, params_file, use_spain, t0, t1, alpha, alpha_file, factor, output):
    """Integrate the model and write a daily trajectory CSV (with D)."""
    if use_spain == (params_file is not None):
        raise click.UsageError("choose exactly one of --spain-fixture / --params-file")
    if use_spain:
        params = dataio.spain_model_params()
        init = dataio.spain_initial_state()
        start = 0.0
    else:
        fr = FitResult.load(params_file)
        params = fr.model_params()
        init = fr.init_state
        start = fr.breakpoints[0]
    if t0 is not None:
        if float(t0) != start:
            raise click.UsageError(f"--t0 must equal the parameter start day {start}")
    if alpha_file is not None:
        sched = pd.read_csv(alpha_file)
        if not {"day", "tests"} <= set(sched.columns):
            raise dataio.DataValidationError(f"{alpha_file}: need columns day,tests")
        policy = TestingPolicy(
            alpha={int(r.day): float(r.tests) for r in sched.itertuples(index=False)},
            factor=factor,
        )
    else:
        policy = TestingPolicy(alpha=alpha, factor=factor)
    policy.validate_against(params.population)
    traj = integrate(
        make_rhs(params, policy), init.as_array(), start, float(t1),
        step=ctx.obj["step"],
    )
    frame = trajectory_frame(traj, params)
    path = ctx.obj["out"] / output
    frame.to_csv(path, index=False)
    click.echo(f"final S = {frame['S'].iloc[-1]:.1f}; trajectory -> {path}")


@main.command("analyze")
@click.option("--beta", type=float, required=True)
@click.option("--gamma", type=float, required=True, help="Aggregate removal rate gamma1+gamma2.")
@click.option("--sigma", type=float, default=0.2, show_default=True)
@click.option("--rho", type=float, default=0.1, show_default=True)
@click.option("--alpha", type=float, default=0.0, show_default=True)
@click.option("--population", type=float, required=True)
@click.option("--i0", type=float, default=1.0, show_default=True)
@click.option("--e0", type=float, default=0.0, show_default=True)
@click.option("--t0-init", type=float, default=0.0, show_default=True)
@click.option("--r0-init", type=float, default=0.0, show_default=True)
@click.option("--scan", type=click.Choice(["alpha", "rho"]), default=None)
@click.option("--scan-grid", default=None, help="Comma-separated increasing values.")
@click.pass_context
@_guarded
def cmd_analyze(ctx, beta, gamma, sigma, rho, alpha, population, i0, e0, t0_init,
                r0_init, scan, scan_grid):
    """Report S_inf, reproduction numbers and stability for constant rates."""
    p = ConstantParams(beta=beta, gamma=gamma, sigma=sigma, rho=rho, alpha=alpha, N=population)
    s0 = population - i0 - e0 - r0_init
    sinf = limit_susceptible(p, s0, r0_init, t0_init)
    r0 = basic_reproduction_number(p)
    r0_alt = alternative_reproduction_number(p)
    verdict = is_stable(p)
    click.echo(f"S_inf {sinf:.6g}")
    click.echo(f"R0 {r0:.6g}")
    click.echo(f"R0_alt {r0_alt:.6g}")
    click.echo(f"stability {'stable' if verdict.stable else 'unstable'}")
    if scan is not None:
        if scan_grid is None:
            raise click.UsageError("--scan needs --scan-grid")
        grid = [float(tok) for tok in scan_grid.split(",")]
        rows = monotonicity_scan(p, scan, grid, s0, r0_init, t0_init)
        path = ctx.obj["out"] / f"scan_{scan}.csv"
        pd.DataFrame(rows, columns=[scan, "S_inf"]).to_csv(path, index=False)
        click.echo(f"scan -> {path}")


def _plan_frame(plan: DistributionMatrix, region: Region) -> pd.DataFrame:
    rows = []
    for di, day in enumerate(plan.days):
        for li, loc in enumerate(region.locations):
            tests = int(plan.tests[li, di])
            if tests > 0:
                rows.append((int(day), loc.location_id, loc.name, tests))
    return pd.DataFrame(rows, columns=["day", "location_id", "location_name", "tests"])


def _cap_rule(spec_str: str) -> CapacityRule:
    try:
        mode, value = spec_str.split(":")
        return CapacityRule(mode=mode, value=float(value))
    except ValueError as exc:
        raise click.UsageError(f"bad --cap-mode {spec_str!r}; use absolute:10000 or fraction:0.1") from exc


def _report_text(title: str, report) -> str:
    d = report.distribution
    return "\n".join([
        title,
        f"infections without testing: {report.infections_without:.1f}",
        f"infections with plan:       {report.infections_with:.1f}",
        f"saving:                     {report.saving:.1f}",
        f"tests assigned:             {d.total_assigned}",
        f"tests unassigned:           {d.unassigned}",
    ])


@main.command("plan")
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@click.option("--population-file", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--total", type=int, required=True, help="Total tests to distribute.")
@click.option("--cap-mode", default="absolute:10000", show_default=True)
@click.option("--factor", type=click.Choice(["1", "3", "9"]), default="1", show_default=True)
@click.option("--plan-start", default=None, help="Day/date planning starts (default: day 14).")
@click.option("--horizon", type=int, default=14, show_default=True, help="Planning days M.")
@click.option("--k-tests", type=int, default=None, help="Gain block size (default: daily cap).")
@click.option("--baseline", type=click.Choice(["homogeneous"]), default=None,
              help="Also evaluate a baseline distribution.")
@_estimation_options
@click.pass_context
@_guarded
def cmd_plan(ctx, data, population_file, total, cap_mode, factor, plan_start, horizon,
             k_tests, rho, sigma, weekly_every, pop_size, max_stale, max_generations,
             fit_step, polish_passes, polish_maxfev, baseline):
    """Rolling gain-driven test plan plus its saving evaluation."""
    seed = _require_seed(ctx)
    region, raw = _load_region(data, population_file, None)
    caps = _cap_rule(cap_mode)
    factor_v = float(factor)
    settings = _settings(ctx, seed, rho, sigma, weekly_every, pop_size, max_stale,
                         max_generations, fit_step, polish_passes, polish_maxfev)
    start = _to_day(plan_start, raw) if plan_start is not None else 14.0
    cache: dict = {}
    report = evaluate_saving(
        region, total, caps, factor_v, start, horizon, settings, cache,
        block_tests=k_tests,
    )
    out: Path = ctx.obj["out"]
    _plan_frame(report.distribution, region).to_csv(out / "plan.csv", index=False)
    text = _report_text("gain-driven plan", report)
    if baseline == "homogeneous":
        hom = homogeneous_plan(region, total, report.distribution.days)
        hom_report = evaluate_saving(
            region, total, caps, factor_v, start, horizon, settings, cache, plan=hom,
        )
        text += "\n" + _report_text("homogeneous baseline", hom_report)
        text += f"\nadvantage over baseline:    {report.saving - hom_report.saving:.1f}"
    (out / "saving_report.txt").write_text(text + "\n")
    click.echo(text)


@main.command("baseline")
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@click.option("--population-file", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--total", type=int, required=True)
@click.option("--factor", type=click.Choice(["1", "3", "9"]), default="1", show_default=True)
@click.option("--plan-start", default=None)
@click.option("--horizon", type=int, default=14, show_default=True)
@_estimation_options
@click.pass_context
@_guarded
def cmd_baseline(ctx, data, population_file, total, factor, plan_start, horizon, rho,
                 sigma, weekly_every, pop_size, max_stale, max_generations, fit_step,
                 polish_passes, polish_maxfev):
    """Population-proportional homogeneous plan plus its saving evaluation."""
    seed = _require_seed(ctx)
    region, raw = _load_region(data, population_file, None)
    factor_v = float(factor)
    settings = _settings(ctx, seed, rho, sigma, weekly_every, pop_size, max_stale,
                         max_generations, fit_step, polish_passes, polish_maxfev)
    start = _to_day(plan_start, raw) if plan_start is not None else 14.0
    days = start + 1.0 + np.arange(horizon)
    plan = homogeneous_plan(region, total, days)
    report = evaluate_saving(
        region, total, CapacityRule("absolute", max(total, 1)), factor_v, start,
        horizon, settings, {}, plan=plan,
    )
    out: Path = ctx.obj["out"]
    _plan_frame(plan, region).to_csv(out / "baseline_plan.csv", index=False)
    text = _report_text("homogeneous baseline", report)
    (out / "baseline_report.txt").write_text(text + "\n")
    click.echo(text)


@main.command("evaluate")
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@click.option("--population-file", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--plan", "plan_file", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Plan CSV (day,location_id,location_name,tests).")
@click.option("--factor", type=click.Choice(["1", "3", "9"]), default="1", show_default=True)
@click.option("--end-day", default=None, help="Evaluation end day/date (default: last plan day + 14).")
@_estimation_options
@click.pass_context
@_guarded
def cmd_evaluate(ctx, data, population_file, plan_file, factor, end_day, rho, sigma,
                 weekly_every, pop_size, max_stale, max_generations, fit_step,
                 polish_passes, polish_maxfev):
    """Score an existing plan CSV against the no-testing simulation."""
    seed = _require_seed(ctx)
    region, raw = _load_region(data, population_file, None)
    factor_v = float(factor)
    settings = _settings(ctx, seed, rho, sigma, weekly_every, pop_size, max_stale,
                         max_generations, fit_step, polish_passes, polish_maxfev)
    frame = pd.read_csv(plan_file)
    needed = {"day", "location_id", "tests"}
    if not needed <= set(frame.columns):
        raise dataio.DataValidationError(f"{plan_file}: need columns {sorted(needed)}")
    days = np.array(sorted(frame["day"].unique()), dtype=float)
    tests = np.zeros((len(region), len(days)), dtype=np.int64)
    ids = {loc_id: i for i, loc_id in enumerate(region.ids)}
    day_idx = {d: i for i, d in enumerate(days)}
    for row in frame.itertuples(index=False):
        if str(row.location_id) not in ids:
            raise dataio.DataValidationError(f"unknown location {row.location_id} in plan")
        tests[ids[str(row.location_id)], day_idx[float(row.day)]] += int(row.tests)
    plan = DistributionMatrix(tests=tests, days=days)
    end = _to_day(end_day, raw) if end_day is not None else float(days[-1]) + 14.0
    end = min(end, float(min(loc.observations.days[-1] for loc in region.locations)))
    cache: dict = {}
    sim_fits = {}
    from .planner import estimate_until
    for li, loc in enumerate(region.locations):
        sim_fits[loc.location_id] = estimate_until(
            region, li, float(loc.observations.days[-1]), settings, cache
        )
    report = evaluate_plan(region, plan, sim_fits, factor_v, end, step=settings.sim_step)
    text = _report_text(f"plan {plan_file}", report)
    (ctx.obj["out"] / "evaluation_report.txt").write_text(text + "\n")
    click.echo(text)


if __name__ == "__main__":
    main()
