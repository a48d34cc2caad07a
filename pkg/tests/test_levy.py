"""Tempered-stable tail integrals and jump samplers."""

import math

import mpmath as mp
import numpy as np
import pytest
from scipy import stats

from statvol.levy import (
    TemperedStableMeasure,
    TruncationPolicy,
    compound_poisson_increment,
    sample_jump_above,
    sample_jumps_above,
    small_jump_variance,
    small_jump_variance_closed,
    tail_first_moment,
    tail_first_moment_closed,
    tail_intensity,
    tail_intensity_closed,
    wienerized_increment,
)
from statvol.rng import stream

BENCH = TemperedStableMeasure(c=0.01, lam=1.0, alpha=0.5)
STABLE = TemperedStableMeasure(c=0.01, lam=0.0, alpha=0.5)


def _mp_tail(m, u, order=0):
    with mp.workdps(40):
        f = lambda y: m.c * y ** (order - 1 - mp.mpf(m.alpha)) * mp.e ** (-m.lam * y)
        return float(mp.quad(f, [u, u + 1.0, mp.inf]))


class TestMeasureValidation:
    @pytest.mark.parametrize("c,lam,alpha", [(-1, 1, 0.5), (0, 1, 0.5),
                                             (0.01, -1, 0.5), (0.01, 1, 0.0),
                                             (0.01, 1, 1.0)])
    def test_rejects_bad_parameters(self, c, lam, alpha):
        with pytest.raises(ValueError):
            TemperedStableMeasure(c=c, lam=lam, alpha=alpha)

    def test_mean_rate_closed_form(self):
        # int y pi(dy) = c Gamma(1-alpha) lam^{alpha-1}
        assert BENCH.mean_rate() == pytest.approx(0.01 * math.gamma(0.5), rel=1e-14)

    def test_truncation_policy(self):
        pol = TruncationPolicy()
        assert pol.threshold(3, 0.2) == 0.2
        sq = TruncationPolicy(power=2.0)
        assert sq.threshold(3, 0.2) == pytest.approx(0.04)
        with pytest.raises(ValueError):
            TruncationPolicy(power=0.5)


class TestTailIntensity:
    def test_untempered_closed_form(self):
        assert tail_intensity(STABLE, 0.01) == pytest.approx(0.2, rel=1e-12)

    def test_quadrature_vs_mpmath(self):
        for u in (1e-6, 1e-3, 0.01, 0.1, 1.0, 5.0):
            assert tail_intensity(BENCH, u) == pytest.approx(_mp_tail(BENCH, u), rel=1e-9)

    def test_closed_form_matches_quadrature(self):
        for u in (1e-6, 1e-3, 0.01, 0.1, 1.0, 5.0):
            assert tail_intensity_closed(BENCH, u) == pytest.approx(
                tail_intensity(BENCH, u), rel=1e-9)

    def test_rejects_bad_threshold(self):
        with pytest.raises(ValueError):
            tail_intensity(BENCH, 0.0)


class TestTailFirstMoment:
    def test_quadrature_vs_mpmath(self):
        for u in (1e-4, 0.01, 0.5, 2.0):
            expect = _mp_tail(BENCH, u, order=1)
            assert tail_first_moment(BENCH, u) == pytest.approx(expect, rel=1e-9)
            assert tail_first_moment_closed(BENCH, u) == pytest.approx(expect, rel=1e-9)

    def test_diverges_without_tempering(self):
        with pytest.raises(ValueError):
            tail_first_moment(STABLE, 0.1)


class TestSmallJumpVariance:
    def test_untempered_closed_form(self):
        assert small_jump_variance(STABLE, 1.0) == pytest.approx(0.01 / 1.5, rel=1e-12)
        assert small_jump_variance_closed(STABLE, 1.0) == pytest.approx(0.01 / 1.5, rel=1e-14)

    def test_quadrature_vs_closed_form(self):
        for u in (1e-4, 0.01, 0.3, 2.0):
            assert small_jump_variance(BENCH, u) == pytest.approx(
                small_jump_variance_closed(BENCH, u), rel=1e-9)

    def test_monotone_in_threshold(self):
        assert small_jump_variance(BENCH, 0.5) < small_jump_variance(BENCH, 1.0)


class TestRejectionSampler:
    def test_support(self):
        rng = stream(5, 0)
        u = 0.05
        for _ in range(500):
            assert sample_jump_above(BENCH, u, rng) > u * (1.0 - 1e-15)

    def test_untempered_is_exact_pareto(self):
        # lam = 0: every proposal accepted; (u/Y)^alpha is uniform
        rng = stream(6, 0)
        u = 0.2
        ys = sample_jumps_above(STABLE, u, 20000, rng)
        v = (u / ys) ** STABLE.alpha
        d = stats.kstest(v, "uniform")
        assert d.pvalue > 0.01

    def test_mean_matches_quadrature(self):
        rng = stream(7, 0)
        u = 0.1
        n = 10**6
        ys = sample_jumps_above(BENCH, u, n, rng)
        target = _mp_tail(BENCH, u, order=1) / _mp_tail(BENCH, u, order=0)
        se = ys.std(ddof=1) / math.sqrt(n)
        assert abs(ys.mean() - target) < 3.0 * se

    def test_ks_against_quadrature_cdf(self):
        # acceptance-level test: 1e5 samples vs the tail CDF at level 0.01
        rng = stream(8, 0)
        u = 0.05
        n = 10**5
        ys = sample_jumps_above(BENCH, u, n, rng)
        lam_u = tail_intensity_closed(BENCH, u)

        def cdf(y):
            y = np.asarray(y, dtype=float)
            return 1.0 - np.array([tail_intensity_closed(BENCH, yy) for yy in y]) / lam_u

        d = stats.kstest(np.sort(ys)[:: max(1, n // 2000)], cdf)
        assert d.pvalue > 0.01


class TestCompoundPoissonIncrement:
    def test_zero_without_compensation_possible(self):
        # with a huge threshold the jump count is almost surely zero
        rng = stream(9, 0)
        val = compound_poisson_increment(BENCH, 50.0, 0.01, False, rng)
        assert val == 0.0

    def test_pure_compensator_when_no_jumps(self):
        rng = stream(10, 0)
        gamma = 0.01
        u = 50.0
        val = compound_poisson_increment(BENCH, u, gamma, True, rng)
        assert val == pytest.approx(-gamma * tail_first_moment_closed(BENCH, u), rel=1e-12)
        assert val < 0.0

    def test_compensated_mean_and_variance(self):
        rng = stream(11, 0)
        u, gamma = 0.01, 2.0  # ~0.3 jumps per draw keeps the kurtosis sane
        n = 10**5
        draws = np.array([compound_poisson_increment(BENCH, u, gamma, True, rng)
                          for _ in range(n)])
        target_var = gamma * _mp_tail(BENCH, u, order=2)
        se_mean = draws.std(ddof=1) / math.sqrt(n)
        assert abs(draws.mean()) < 3.0 * se_mean
        # size the variance-estimator noise from the sample's own kurtosis
        centered = draws - draws.mean()
        kurt = (centered**4).mean() / draws.var() ** 2
        se_var = target_var * math.sqrt(max(kurt - 1.0, 0.0) / n)
        assert abs(draws.var(ddof=1) - target_var) < 3.0 * se_var


class TestWienerizedIncrement:
    def test_reduces_to_cp_at_tiny_variance(self):
        rng1, rng2 = stream(12, 0), stream(12, 0)
        u = 1e-12  # essentially no discarded jumps
        a = wienerized_increment(BENCH, u, 0.01, False, rng1)
        b = compound_poisson_increment(BENCH, u, 0.01, False, rng2)
        assert a == pytest.approx(b, abs=1e-7)

    def test_zero_jump_conditioned_variance(self):
        # huge threshold: no jumps, so the draw is the pure Gaussian leg
        rng = stream(13, 0)
        u, gamma = 50.0, 0.04
        n = 200_000
        draws = np.array([wienerized_increment(BENCH, u, gamma, False, rng)
                          for _ in range(n)])
        target = gamma * small_jump_variance_closed(BENCH, u)
        rel_se = math.sqrt(2.0 / n)
        assert draws.var(ddof=1) == pytest.approx(target, rel=6.0 * rel_se)

    def test_compensated_mean_near_zero(self):
        rng = stream(14, 0)
        u, gamma = 0.1, 0.5
        n = 50_000
        draws = np.array([wienerized_increment(BENCH, u, gamma, True, rng)
                          for _ in range(n)])
        se = draws.std(ddof=1) / math.sqrt(n)
        assert abs(draws.mean()) < 3.0 * se
