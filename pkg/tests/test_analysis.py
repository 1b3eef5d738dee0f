import math

import numpy as np
import pytest

from epiplan.analysis import (
    FinalSizeError,
    alternative_reproduction_number,
    basic_reproduction_number,
    effective_reproduction_number,
    is_stable,
    limit_susceptible,
    monotonicity_scan,
)
from epiplan.model import ConstantParams

# frozen before the implementation existed: independent bisection of the
# final-size function at beta=0.3, gamma=0.1, sigma=0.2, rho=0.1, alpha=0,
# N=1e6, S0=1e6-100
FROZEN_SINF = 84396.48824266228


def cp(**kw):
    base = dict(beta=0.3, gamma=0.1, sigma=0.2, rho=0.1, alpha=0.0, N=1e6)
    base.update(kw)
    return ConstantParams(**base)


class TestLimitSusceptible:
    def test_frozen_bisection_fixture(self):
        val = limit_susceptible(cp(), S0=1e6 - 100.0)
        assert val == pytest.approx(FROZEN_SINF, rel=1e-9)

    def test_classic_final_size_relation(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            gamma = rng.uniform(0.05, 0.4)
            beta = gamma * rng.uniform(1.2, 5.0)
            N = 10 ** rng.uniform(4, 8)
            S0 = N - rng.uniform(1.0, 1e-3 * N)
            p = ConstantParams(beta=beta, gamma=gamma, sigma=0.2, rho=0.0, alpha=0.0, N=N)
            sinf = limit_susceptible(p, S0)
            lhs = math.log(S0 / sinf)
            rhs = beta / gamma * (1.0 - sinf / N)
            assert lhs == pytest.approx(rhs, rel=1e-9)

    def test_vanishing_transmission_keeps_everyone_susceptible(self):
        p = cp(beta=1e-9)
        S0 = 1e6 - 100.0
        assert limit_susceptible(p, S0) == pytest.approx(S0, rel=1e-6)
        assert limit_susceptible(cp(beta=0.0), S0) == S0

    def test_smaller_than_s0_when_epidemic_seeded(self):
        S0 = 1e6 - 100.0
        assert limit_susceptible(cp(), S0) < S0

    def test_testing_terms_shift_the_root(self):
        S0 = 1e6 - 1000.0
        no_tests = limit_susceptible(cp(), S0)
        testing = limit_susceptible(cp(alpha=5e4), S0)
        assert testing > no_tests

    def test_inconsistent_inputs_raise(self):
        # S0 tiny makes log term dominate: f(x0) < 0
        with pytest.raises(FinalSizeError):
            limit_susceptible(cp(beta=30.0), S0=1.0, R0_init=0.0, T0=1e6)


class TestMonotonicityScan:
    def test_alpha_scan_strictly_increasing(self):
        rows = monotonicity_scan(cp(), "alpha", [0.0, 5e4, 1e5], S0=1e6 - 100.0)
        vals = [v for _, v in rows]
        assert vals == sorted(vals) and len(set(vals)) == 3

    def test_rho_scan_strictly_increasing(self):
        rows = monotonicity_scan(cp(), "rho", [0.1, 0.15, 0.3], S0=1e6 - 100.0)
        vals = [v for _, v in rows]
        assert vals == sorted(vals) and len(set(vals)) == 3

    def test_singleton_grid(self):
        rows = monotonicity_scan(cp(), "alpha", [1000.0], S0=1e6 - 100.0)
        assert len(rows) == 1

    def test_decreasing_grid_rejected(self):
        with pytest.raises(ValueError):
            monotonicity_scan(cp(), "alpha", [1.0, 0.5], S0=1e6 - 100.0)


class TestReproductionNumbers:
    def test_classic_reduction(self):
        p = cp(rho=0.0, alpha=0.0, beta=0.5, gamma=0.1)
        assert basic_reproduction_number(p) == pytest.approx(5.0)

    def test_hand_value(self):
        p = cp(beta=0.5, gamma=0.1, rho=0.1, alpha=0.0)
        assert basic_reproduction_number(p) == pytest.approx(4.5)

    def test_alternative_form_crosses_one_together(self):
        rng = np.random.default_rng(11)
        for _ in range(500):
            p = ConstantParams(
                beta=rng.uniform(0.0, 1.0), gamma=rng.uniform(0.01, 0.5),
                sigma=rng.uniform(0.05, 0.5), rho=rng.uniform(0.01, 0.9),
                alpha=rng.uniform(0.0, 1e4), N=1e6,
            )
            r0 = basic_reproduction_number(p)
            r0_alt = alternative_reproduction_number(p)
            assert (r0 < 1.0) == (r0_alt < 1.0)

    def test_effective_equals_basic_at_full_susceptibility(self):
        p = cp(beta=0.37, gamma=0.11, rho=0.2, alpha=3e3)
        assert effective_reproduction_number(p, p.N) == pytest.approx(
            basic_reproduction_number(p)
        )

    def test_effective_zero_susceptible(self):
        p = cp(alpha=0.0)
        assert effective_reproduction_number(p, 0.0) == 0.0

    def test_effective_hand_value(self):
        p = cp(beta=0.4, rho=0.1, gamma=0.1, alpha=0.0)
        assert effective_reproduction_number(p, p.N / 2) == pytest.approx(1.8)


class TestStability:
    def test_subcritical_is_stable(self):
        p = cp(beta=0.05, gamma=0.1)  # R0 = 0.45
        assert is_stable(p).stable

    def test_supercritical_unstable_with_root_oracle(self):
        p = cp(beta=0.3, gamma=0.1, rho=0.1)  # R0 = 2.7
        verdict = is_stable(p)
        assert not verdict.stable
        roots = np.roots([1.0, verdict.a2, verdict.a1, verdict.a0])
        assert roots.real.max() > 0.0

    def test_constant_term_tracks_one_minus_r0(self):
        rng = np.random.default_rng(23)
        for _ in range(500):
            p = ConstantParams(
                beta=rng.uniform(0.0, 1.0), gamma=rng.uniform(0.01, 0.5),
                sigma=rng.uniform(0.05, 0.5), rho=rng.uniform(0.01, 0.9),
                alpha=rng.uniform(0.0, 1e4), N=1e6,
            )
            r0 = basic_reproduction_number(p)
            verdict = is_stable(p)
            assert verdict.a0 == pytest.approx(p.sigma * p.gamma ** 2 * (1.0 - r0), rel=1e-9)
