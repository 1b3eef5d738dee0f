import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from epiplan.cli import main
from epiplan.dataio import _data_path


@pytest.fixture
def runner():
    return CliRunner()


SPAIN = str(_data_path("spain_first_wave.csv"))
REGION = str(_data_path("synthetic_region_cases.csv"))
POPS = str(_data_path("synthetic_region_population.csv"))

FAST_FIT = ["--max-stale", "10", "--fit-step", "1.0", "--polish-passes", "0"]
FAST_PLAN = [
    "--max-stale", "8", "--fit-step", "1.0", "--polish-passes", "0",
    "--weekly-every", "14", "--plan-start", "35", "--horizon", "3",
]


class TestFitCommand:
    def test_missing_seed_is_usage_error(self, runner, tmp_path):
        res = runner.invoke(main, ["--out", str(tmp_path), "fit", SPAIN,
                                   "--population", "47000000", "--weekly"])
        assert res.exit_code == 2

    def test_spainish_interval_list_gives_four_intervals(self, runner, tmp_path):
        res = runner.invoke(main, [
            "--seed", "5", "--out", str(tmp_path), "fit", SPAIN,
            "--population", "47000000",
            "--intervals", "2020-02-20,2020-03-12,2020-04-01,2020-04-21,2020-05-17",
            *FAST_FIT,
        ])
        assert res.exit_code == 0, res.output
        text = (tmp_path / "fit_location.txt").read_text()
        assert "breakpoints 0.0 21.0 41.0 61.0" in text
        assert (tmp_path / "fit_report.txt").exists()

    def test_weekly_mode(self, runner, tmp_path):
        res = runner.invoke(main, [
            "--seed", "5", "--out", str(tmp_path), "fit", REGION,
            "--population-file", POPS, "--weekly", "--weekly-every", "21",
            *FAST_FIT,
        ])
        assert res.exit_code == 0, res.output
        for loc in ("alderton", "brockfield", "carwick"):
            assert (tmp_path / f"fit_{loc}.txt").exists()

    def test_intervals_or_weekly_required(self, runner, tmp_path):
        res = runner.invoke(main, ["--seed", "1", "--out", str(tmp_path), "fit",
                                   SPAIN, "--population", "47000000"])
        assert res.exit_code == 2


class TestSimulateCommand:
    def test_spain_fixture_long_run_endpoint(self, runner, tmp_path):
        res = runner.invoke(main, ["--out", str(tmp_path), "simulate",
                                   "--spain-fixture", "--t1", "400"])
        assert res.exit_code == 0, res.output
        frame = pd.read_csv(tmp_path / "trajectory.csv")
        assert abs(frame["S"].iloc[-1] - 44_364_000) <= 0.01 * 47e6
        assert list(frame.columns) == ["t", "S", "E", "I", "T", "F1", "R1", "L", "D"]

    def test_zero_alpha_equals_default(self, runner, tmp_path):
        r1 = runner.invoke(main, ["--out", str(tmp_path / "a"), "simulate",
                                  "--spain-fixture", "--t1", "50"])
        r2 = runner.invoke(main, ["--out", str(tmp_path / "b"), "simulate",
                                  "--spain-fixture", "--t1", "50", "--alpha", "0"])
        assert r1.exit_code == 0 and r2.exit_code == 0
        assert (tmp_path / "a" / "trajectory.csv").read_bytes() == \
               (tmp_path / "b" / "trajectory.csv").read_bytes()

    def test_simulate_from_fit_file(self, runner, tmp_path):
        res = runner.invoke(main, [
            "--seed", "5", "--out", str(tmp_path), "fit", SPAIN,
            "--population", "47000000", "--weekly", "--weekly-every", "30",
            *FAST_FIT,
        ])
        assert res.exit_code == 0, res.output
        res = runner.invoke(main, ["--out", str(tmp_path), "simulate",
                                   "--params-file", str(tmp_path / "fit_location.txt"),
                                   "--t1", "100", "--alpha", "10000", "--factor", "3"])
        assert res.exit_code == 0, res.output

    def test_numerical_failure_exit_code(self, runner, tmp_path):
        bad = tmp_path / "bad_fit.txt"
        bad.write_text("\n".join([
            "epiplan-fit v1", "seed 1", "fitness 0.0", "population 1000.0",
            "sigma 0.2", "fixed_rho 0.1", "breakpoints 0.0", "end_day 10.0",
            "e0 5.0", "generations 1",
            "init 900.0 5.0 50.0 0.0 0.0 0.0 45.0",
            "gene 0 beta0 1e308 0.0 inf", "gene 0 beta1 0.0 0.0 3.0",
            "gene 0 beta_r 0.0 0.0 1.0", "gene 0 gamma1_0 0.01 0.0 0.5",
            "gene 0 gamma1_1 0.0 0.0 0.5", "gene 0 gamma1_r 0.0 0.0 1.0",
            "gene 0 gamma2_0 0.09 0.0 0.5", "gene 0 gamma2_1 0.0 0.0 0.5",
            "gene 0 gamma2_r 0.0 0.0 1.0",
        ]) + "\n")
        res = runner.invoke(main, ["--out", str(tmp_path), "simulate",
                                   "--params-file", str(bad), "--t1", "50"])
        assert res.exit_code == 3


class TestAnalyzeCommand:
    def test_classic_r0(self, runner, tmp_path):
        res = runner.invoke(main, ["--out", str(tmp_path), "analyze",
                                   "--beta", "0.5", "--gamma", "0.1", "--rho", "0",
                                   "--alpha", "0", "--population", "1e6"])
        assert res.exit_code == 0, res.output
        assert "R0 5" in res.output

    def test_unstable_verdict(self, runner, tmp_path):
        res = runner.invoke(main, ["--out", str(tmp_path), "analyze",
                                   "--beta", "0.5", "--gamma", "0.1",
                                   "--population", "1e6"])
        assert "stability unstable" in res.output

    def test_scan_csv(self, runner, tmp_path):
        res = runner.invoke(main, ["--out", str(tmp_path), "analyze",
                                   "--beta", "0.3", "--gamma", "0.1",
                                   "--population", "1e6", "--i0", "100",
                                   "--scan", "alpha", "--scan-grid", "0,50000,100000"])
        assert res.exit_code == 0, res.output
        frame = pd.read_csv(tmp_path / "scan_alpha.csv")
        assert list(frame.columns) == ["alpha", "S_inf"]
        assert frame["S_inf"].is_monotonic_increasing


class TestPlanCommands:
    def test_zero_budget_plan(self, runner, tmp_path):
        res = runner.invoke(main, [
            "--seed", "9", "--out", str(tmp_path), "plan", REGION,
            "--population-file", POPS, "--total", "0", *FAST_PLAN,
        ])
        assert res.exit_code == 0, res.output
        assert "saving:                     0.0" in res.output
        assert (tmp_path / "plan.csv").exists()

    def test_plan_with_baseline_comparison(self, runner, tmp_path):
        res = runner.invoke(main, [
            "--seed", "9", "--out", str(tmp_path), "plan", REGION,
            "--population-file", POPS, "--total", "5000",
            "--cap-mode", "absolute:2000", "--factor", "9",
            "--baseline", "homogeneous", *FAST_PLAN,
        ])
        assert res.exit_code == 0, res.output
        assert "homogeneous baseline" in res.output
        assert "advantage over baseline" in res.output
        plan = pd.read_csv(tmp_path / "plan.csv")
        if len(plan):
            per_day = plan.groupby("day")["tests"].sum()
            assert (per_day <= 2000).all()

    def test_fraction_cap_mode(self, runner, tmp_path):
        res = runner.invoke(main, [
            "--seed", "9", "--out", str(tmp_path), "plan", REGION,
            "--population-file", POPS, "--total", "2000",
            "--cap-mode", "fraction:0.1", "--factor", "3", *FAST_PLAN,
        ])
        assert res.exit_code == 0, res.output
        plan = pd.read_csv(tmp_path / "plan.csv")
        if len(plan):
            assert plan.groupby("day")["tests"].sum().max() <= 200

    def test_baseline_command(self, runner, tmp_path):
        res = runner.invoke(main, [
            "--seed", "9", "--out", str(tmp_path), "baseline", REGION,
            "--population-file", POPS, "--total", "1750",
            "--plan-start", "35", "--horizon", "5",
            "--max-stale", "8", "--fit-step", "1.0", "--polish-passes", "0",
            "--weekly-every", "14",
        ])
        assert res.exit_code == 0, res.output
        plan = pd.read_csv(tmp_path / "baseline_plan.csv")
        totals = plan.groupby("location_id")["tests"].sum()
        assert totals["alderton"] == 1000
        assert totals["brockfield"] == 500
        assert totals["carwick"] == 250

    def test_evaluate_existing_plan(self, runner, tmp_path):
        plan = pd.DataFrame({
            "day": [36, 37], "location_id": ["alderton", "carwick"],
            "location_name": ["Alderton", "Carwick"], "tests": [1000, 500],
        })
        plan_path = tmp_path / "myplan.csv"
        plan.to_csv(plan_path, index=False)
        res = runner.invoke(main, [
            "--seed", "9", "--out", str(tmp_path), "evaluate", REGION,
            "--population-file", POPS, "--plan", str(plan_path), "--factor", "3",
            "--max-stale", "8", "--fit-step", "1.0", "--polish-passes", "0",
            "--weekly-every", "14",
        ])
        assert res.exit_code == 0, res.output
        assert (tmp_path / "evaluation_report.txt").exists()

    def test_missing_seed(self, runner, tmp_path):
        res = runner.invoke(main, ["--out", str(tmp_path), "plan", REGION,
                                   "--population-file", POPS, "--total", "100"])
        assert res.exit_code == 2


class TestValidationErrors:
    def test_bad_data_exit_code(self, runner, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("date,cumulative_cases,cumulative_deaths,cumulative_recovered\n"
                       "2020-01-02,5,0,0\n2020-01-03,4,0,0\n")
        res = runner.invoke(main, ["--seed", "1", "--out", str(tmp_path), "fit",
                                   str(bad), "--population", "1000", "--weekly",
                                   *FAST_FIT])
        assert res.exit_code == 2
