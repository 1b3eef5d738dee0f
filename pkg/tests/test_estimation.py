import math

import numpy as np
import pytest

from epiplan.estimation import (
    Bounds,
    DEConfig,
    EstimationError,
    FitnessWeights,
    FitResult,
    ObservationSeries,
    build_initial_state,
    data_norm,
    de_descendant,
    fit,
    fitness,
    new_population,
    weekly_breakpoints,
)
from epiplan.integrator import integrate
from epiplan.model import (
    CompartmentState,
    DecaySchedule,
    DecaySegment,
    ModelParams,
    make_rhs,
)

N = 1e6


def constant_params(beta=0.3, g1=0.01, g2=0.09, rho=0.1):
    return ModelParams(
        beta=DecaySchedule.constant(beta),
        gamma1=DecaySchedule.constant(g1),
        gamma2=DecaySchedule.constant(g2),
        rho=DecaySchedule.constant(rho),
        sigma=0.2,
        population=N,
    )


def synthetic_obs(params, init, days, step=0.25):
    traj = integrate(make_rhs(params), init.as_array(), 0.0, float(days), step=step)
    rho = np.array([params.rho.value(float(t)) for t in traj.times])
    return ObservationSeries(
        days=traj.times,
        detected=rho * traj.column("I"),
        deaths=traj.column("F1"),
        recovered=traj.column("R1"),
    )


class TestObservationSeries:
    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ObservationSeries(days=np.array([]), detected=np.array([]),
                              deaths=np.array([]), recovered=np.array([]))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ObservationSeries(days=np.array([0.0, 1.0]), detected=np.array([1.0]),
                              deaths=np.array([0.0, 0.0]), recovered=np.array([0.0, 0.0]))

    def test_window_inclusive(self):
        obs = ObservationSeries(days=np.arange(10.0), detected=np.ones(10),
                                deaths=np.zeros(10), recovered=np.zeros(10))
        win = obs.window(2.0, 5.0)
        assert list(win.days) == [2.0, 3.0, 4.0, 5.0]


class TestFitnessWeights:
    def test_defaults_sum_to_one(self):
        w = FitnessWeights()
        assert w.a1 + w.a2 + w.a3 == pytest.approx(1.0)
        assert (w.a1, w.a2, w.a3) == (0.35, 0.35, 0.30)

    def test_bad_sum_rejected(self):
        with pytest.raises(ValueError):
            FitnessWeights(0.5, 0.5, 0.5)


class TestFitness:
    def test_perfect_candidate_scores_zero(self):
        params = constant_params()
        init = CompartmentState(S=N - 800, E=500, I=300)
        obs = synthetic_obs(params, init, 30)
        val = fitness(params, init, obs, step=0.25)
        assert val <= 1e-9 * data_norm(obs)

    def test_single_observation_hand_value(self):
        params = constant_params(rho=0.1)
        init = CompartmentState(S=N - 10, E=0.0, I=10.0)  # model D = 1
        obs = ObservationSeries(days=np.array([0.0]), detected=np.array([4.0]),
                                deaths=np.array([4.0]), recovered=np.array([0.0]))
        # diffs: D 3, F1 4, R1 0 -> 0.35*3 + 0.35*4 + 0.3*0
        assert fitness(params, init, obs) == pytest.approx(2.45)

    def test_blowup_candidate_scores_inf(self):
        params = constant_params(beta=3.0, g1=0.0, g2=0.0)
        bad = ModelParams(beta=DecaySchedule.constant(1e30), gamma1=params.gamma1,
                          gamma2=params.gamma2, rho=params.rho, sigma=0.2, population=N)
        init = CompartmentState(S=N - 100, E=50, I=50)
        obs = ObservationSeries(days=np.array([0.0, 40.0]), detected=np.array([5.0, 5.0]),
                                deaths=np.array([0.0, 1.0]), recovered=np.array([0.0, 1.0]))
        assert fitness(bad, init, obs) == math.inf


class TestNewPopulation:
    def test_identical_population_unchanged(self):
        pop = np.tile(np.array([1.0, 2.0]), (5, 1))
        fits = np.full(5, 7.0)
        rng = np.random.default_rng(0)
        new_pop, new_fit, replaced = new_population(
            pop, fits, lambda g: 7.0, rng,
            lower=np.zeros(2), upper=np.full(2, 10.0),
        )
        assert replaced == 0
        assert np.array_equal(new_pop, pop)

    def test_hand_traced_descendant(self):
        pop = np.array([[1.0], [2.0], [3.0], [5.0]])
        # 1-based indices from the trace: i=1, r3=3, r1=2, r2=4
        u = de_descendant(pop, 0, r1=1, r2=3, r3=2, K=0.5, F=0.5)
        assert u[0] == pytest.approx(0.5)

    def test_single_gene_trial_is_the_mutant_regardless_of_crossover(self):
        pop = np.array([[1.0], [2.0], [3.0], [5.0]])
        fits = np.array([10.0, 10.0, 10.0, 10.0])
        rng = np.random.default_rng(42)
        new_pop, _, _ = new_population(
            pop, fits, lambda g: abs(g[0] - 0.5), rng,
            lower=np.array([0.0]), upper=np.array([10.0]),
            K=0.5, F=0.5, crossover_rate=0.5,
        )
        # every accepted trial must be expressible by the mutation line
        for i, row in enumerate(new_pop):
            if row[0] != pop[i, 0]:
                found = False
                others = [j for j in range(4) if j != i]
                for r1 in others:
                    for r2 in others:
                        for r3 in others:
                            if len({r1, r2, r3}) < 3:
                                continue
                            u = pop[i, 0] + 0.5 * (pop[r3, 0] - pop[i, 0]) + 0.5 * (pop[r1, 0] - pop[r2, 0])
                            if np.isclose(min(max(u, 0.0), 10.0), row[0]):
                                found = True
                assert found

    def test_strictly_better_replacement_only(self):
        pop = np.array([[0.0], [1.0], [2.0], [3.0]])
        fits = np.array([0.0, 1.0, 2.0, 3.0])  # fitness = value
        rng = np.random.default_rng(1)
        new_pop, new_fit, _ = new_population(
            pop, fits, lambda g: float(g[0]), rng,
            lower=np.array([0.0]), upper=np.array([3.0]),
        )
        assert np.all(new_fit <= fits)
        assert new_fit[0] == 0.0  # the best cannot be displaced by a worse trial

    def test_bounds_respected(self):
        rng = np.random.default_rng(9)
        pop = rng.random((6, 3)) * 4.0 - 2.0
        lower, upper = np.full(3, -1.0), np.full(3, 1.0)
        pop = np.clip(pop, lower, upper)
        fits = np.array([float(np.sum(g ** 2)) for g in pop])
        for _ in range(50):
            pop, fits, _ = new_population(
                pop, fits, lambda g: float(np.sum(g ** 2)), rng, lower, upper
            )
            assert np.all(pop >= lower) and np.all(pop <= upper)

    def test_population_below_four_rejected(self):
        with pytest.raises(ValueError):
            new_population(np.zeros((3, 1)), np.zeros(3), lambda g: 0.0,
                           np.random.default_rng(0), np.zeros(1), np.ones(1))


class TestDEConfig:
    def test_minimum_population(self):
        with pytest.raises(ValueError):
            DEConfig(rng_seed=1, population_size=3)

    def test_crossover_rate_validated(self):
        with pytest.raises(ValueError):
            DEConfig(rng_seed=1, crossover_rate=0.0)


class TestFit:
    @pytest.fixture(scope="class")
    def generated(self):
        params = constant_params(beta=0.4)
        init = CompartmentState(S=N - 700, E=400, I=300)
        obs = synthetic_obs(params, init, 21, step=0.5)
        return params, init, obs

    def test_breakpoints_must_start_at_first_day(self, generated):
        _, _, obs = generated
        with pytest.raises(EstimationError):
            fit(obs, [1.0], population=N, cfg=DEConfig(rng_seed=0), rho=0.1)

    def test_empty_observations_rejected(self):
        obs = ObservationSeries(days=np.array([0.0]), detected=np.array([1.0]),
                                deaths=np.array([0.0]), recovered=np.array([0.0]))
        with pytest.raises(EstimationError):
            fit(obs, [0.0], population=N, cfg=DEConfig(rng_seed=0), rho=0.1)

    def test_single_interval_when_window_shorter_than_breakpoints(self, generated):
        _, _, obs = generated
        cfg = DEConfig(rng_seed=3, max_stale_generations=20)
        res = fit(obs, [0.0, 50.0], population=N, cfg=cfg, rho=0.1, step=0.5,
                  polish_passes=0)
        assert res.breakpoints == (0.0,)

    def test_determinism_and_roundtrip(self, generated, tmp_path):
        _, _, obs = generated
        cfg = DEConfig(rng_seed=11, max_stale_generations=30)
        r1 = fit(obs, [0.0, 10.0], population=N, cfg=cfg, rho=0.1, step=0.5,
                 polish_passes=1, polish_maxfev=1000)
        r2 = fit(obs, [0.0, 10.0], population=N, cfg=cfg, rho=0.1, step=0.5,
                 polish_passes=1, polish_maxfev=1000)
        assert np.array_equal(r1.genes, r2.genes)
        assert r1.fitness == r2.fitness

        path = tmp_path / "fit.txt"
        r1.save(path)
        loaded = FitResult.load(path)
        assert np.array_equal(loaded.genes, r1.genes)
        assert loaded.fitness == r1.fitness
        assert loaded.breakpoints == r1.breakpoints
        assert loaded.init_state == r1.init_state
        assert loaded.seed == r1.seed
        # and the reloaded result decodes to the same model
        t_orig = integrate(make_rhs(r1.model_params()), r1.init_state.as_array(), 0.0, 21.0)
        t_load = integrate(make_rhs(loaded.model_params()), loaded.init_state.as_array(), 0.0, 21.0)
        assert np.array_equal(t_orig.states, t_load.states)

    def test_termination_by_stale_generations(self, generated):
        _, _, obs = generated
        cfg = DEConfig(rng_seed=5, max_stale_generations=5, max_generations=2000)
        res = fit(obs, [0.0], population=N, cfg=cfg, rho=0.1, step=0.5, polish_passes=0)
        assert res.generations[0] <= 2000

    def test_estimated_rho_gene_present(self, generated):
        _, _, obs = generated
        cfg = DEConfig(rng_seed=6, max_stale_generations=15)
        res = fit(obs, [0.0], population=N, cfg=cfg, rho=None, step=0.5, polish_passes=0)
        assert "rho" in res.names
        assert res.fixed_rho is None
        assert 0.01 <= res.rho_values()[0] <= 0.9

    def test_gene_bounds_recorded(self, generated):
        _, _, obs = generated
        cfg = DEConfig(rng_seed=7, max_stale_generations=10)
        res = fit(obs, [0.0], population=N, cfg=cfg, rho=0.1, step=0.5, polish_passes=0)
        assert np.all(res.genes >= res.lower) and np.all(res.genes <= res.upper)
        assert res.names[:3] == ("beta0", "beta1", "beta_r")


class TestSelfConsistencySmall:
    def test_refit_recovers_single_interval_curve(self):
        params = constant_params(beta=0.5, g1=0.01, g2=0.09)
        init = CompartmentState(S=N - 800, E=500, I=300)
        obs = synthetic_obs(params, init, 15, step=0.5)
        res = fit(obs, [0.0], population=N, cfg=DEConfig(rng_seed=2), rho=0.1, step=0.5)
        assert res.fitness <= 0.01 * data_norm(obs)


class TestHelpers:
    def test_weekly_breakpoints(self):
        obs = ObservationSeries(days=np.arange(92.0), detected=np.ones(92),
                                deaths=np.zeros(92), recovered=np.zeros(92))
        bps = weekly_breakpoints(obs)
        assert len(bps) == 13
        assert bps[0] == 0.0 and bps[-1] == 84.0

    def test_build_initial_state_conserves_population(self):
        st = build_initial_state(3.0, 0.0, 0.0, 0.1, 160.0, 47e6)
        assert st.I == pytest.approx(30.0)
        assert st.total == pytest.approx(47e6)

    def test_build_initial_state_rejects_overflow(self):
        with pytest.raises(EstimationError):
            build_initial_state(50.0, 0.0, 0.0, 0.1, 1000.0, 1200.0)

    def test_auto_e0_bound_covers_spainish_scale(self):
        b = Bounds()
        lo, hi = b.interval_bounds(estimate_rho=False)
        assert len(lo) == 9
        lo_r, hi_r = b.interval_bounds(estimate_rho=True)
        assert len(lo_r) == 10
