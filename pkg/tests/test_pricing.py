"""Payoffs, estimators, parity, Black-Scholes, implied volatility."""

import math
import warnings

import mpmath as mp
import numpy as np
import pytest

from statvol import pricing
from statvol.levy import TemperedStableMeasure
from statvol.models import (
    BNSParams,
    HestonDriver,
    HestonParams,
    PricePathView,
    growth_rate,
)
from statvol.pricing import (
    AsianSpec,
    BandViolationError,
    asian_payoff,
    bs_call,
    discounted_average_forward,
    implied_vol,
    parity_rhs,
    price_asian,
    price_asian_grid,
    price_european,
)
from statvol.rng import stream
from statvol.schedule import make_polynomial_schedule


def constant_path(value, T=1.0):
    values = np.array([value, value])
    return PricePathView(values, np.array([0.0, T / 2]), np.array([T / 2, T / 2]), T)


def bench_heston(**kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return HestonParams(s0=50.0, r=0.05, rho=kw.pop("rho", 0.5), k=2.0,
                            theta=0.01, sigma_v=0.1, **kw)


class ZeroVolDriver:
    """Degenerate model: v = 0 and y = 0 forever, rho = 0."""

    dim = 2
    records_aux = False
    model_name = "heston"

    def __init__(self):
        self.params = bench_heston(rho=0.0)

    def initial_state(self):
        return (0.0, 0.0)

    def step(self, state, index, gamma, rng):
        return state

    def price_path(self, window):
        from statvol.models import heston_price_path

        return heston_price_path(window, self.params)


class TestAsianPayoff:
    def test_constant_path_call(self):
        spec = AsianSpec(K=44.0, T=1.0, kind="call", r=0.0)
        assert asian_payoff(constant_path(50.0), spec) == pytest.approx(6.0)

    def test_out_of_the_money(self):
        spec = AsianSpec(K=56.0, T=1.0, kind="call", r=0.0)
        assert asian_payoff(constant_path(50.0), spec) == 0.0

    def test_pathwise_identity(self):
        rng = stream(1, 0)
        for _ in range(50):
            v = float(rng.uniform(30, 70))
            path = constant_path(v)
            c = asian_payoff(path, AsianSpec(K=50.0, T=1.0, kind="call", r=0.05))
            p = asian_payoff(path, AsianSpec(K=50.0, T=1.0, kind="put", r=0.05))
            assert c - p == pytest.approx(math.exp(-0.05) * (v - 50.0), abs=1e-12)

    def test_lipschitz_in_strike(self):
        path = constant_path(50.0)
        disc = math.exp(-0.05)
        for k1, k2 in ((40.0, 41.0), (49.5, 50.7), (60.0, 63.0)):
            c1 = asian_payoff(path, AsianSpec(K=k1, T=1.0, kind="call", r=0.05))
            c2 = asian_payoff(path, AsianSpec(K=k2, T=1.0, kind="call", r=0.05))
            assert abs(c1 - c2) <= disc * abs(k1 - k2) + 1e-12

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            AsianSpec(K=-1.0, T=1.0)
        with pytest.raises(ValueError):
            AsianSpec(K=50.0, T=0.0)
        with pytest.raises(ValueError):
            AsianSpec(K=50.0, T=1.0, kind="straddle")


class TestParityRhs:
    def test_benchmark_value_high_precision(self):
        with mp.workdps(40):
            expect = float(mp.mpf(50) / (mp.mpf("0.05") * 1) * (1 - mp.e ** mp.mpf("-0.05"))
                           - 50 * mp.e ** mp.mpf("-0.05"))
        assert parity_rhs(50.0, 0.05, 1.0, 50.0) == pytest.approx(expect, abs=1e-10)
        assert parity_rhs(50.0, 0.05, 1.0, 50.0) == pytest.approx(1.2091042742502903, abs=1e-10)

    def test_zero_rate_limit(self):
        assert parity_rhs(50.0, 0.0, 1.0, 50.0) == 0.0
        # continuity: tiny r approaches the limit
        assert parity_rhs(50.0, 1e-12, 1.0, 50.0) == pytest.approx(0.0, abs=1e-9)

    def test_worthless_put(self):
        got = parity_rhs(50.0, 0.05, 1.0, 0.0)
        assert got == pytest.approx(50.0 / 0.05 * (1 - math.exp(-0.05)), rel=1e-14)

    def test_heston_gap_consistency(self):
        # the model-aware discounted average forward reproduces parity_rhs
        p = bench_heston()
        for K in (44.0, 50.0, 56.0):
            gap = discounted_average_forward(p, 1.0) - K * math.exp(-0.05)
            assert gap == pytest.approx(parity_rhs(50.0, 0.05, 1.0, K), rel=1e-12)


class TestZeroVolDegenerate:
    def test_asian_closed_form(self):
        driver = ZeroVolDriver()
        s = make_polynomial_schedule(1, 1 / 3, 1, 1 / 3)
        spec = AsianSpec(K=44.0, T=1.0, kind="call", r=0.05)
        est = price_asian(driver, s, spec, 200, stream(2, 0), use_parity=False)
        a = 50.0 * (math.exp(0.05) - 1.0) / 0.05
        assert est.mean_average == pytest.approx(a, rel=1e-12)
        assert est.value == pytest.approx(math.exp(-0.05) * (a - 44.0), rel=1e-12)

    def test_european_closed_form(self):
        driver = ZeroVolDriver()
        s = make_polynomial_schedule(1, 1 / 3, 1, 1 / 3)
        spec = AsianSpec(K=44.0, T=1.0, kind="call", r=0.05)
        est = price_european(driver, s, spec, 200, stream(2, 0))
        assert est.value == pytest.approx(
            math.exp(-0.05) * (50.0 * math.exp(0.05) - 44.0), rel=1e-12)


@pytest.fixture(scope="module")
def heston_run():
    s = make_polynomial_schedule(1, 1 / 3, 1, 1 / 3)
    driver = HestonDriver(bench_heston())
    specs = [AsianSpec(K=k, T=1.0, kind="call", r=0.05)
             for k in (44.0, 50.0, 56.0)]
    return pricing.price_asian_grid(driver, s, specs, 30_000, stream(3, 0),
                                    use_parity=True)


class TestPriceAsianGrid:

    def test_exact_estimator_parity(self, heston_run):
        disc = math.exp(-0.05)
        for est in heston_run:
            lhs = est.direct - est.other_direct
            rhs = disc * (est.mean_average - est.K)
            assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(rhs))

    def test_leg_selection(self, heston_run):
        fwd = pricing.forward_average(50.0, 0.05, 1.0)
        for est in heston_run:
            assert est.used_parity
            if est.K <= fwd:
                gap = discounted_average_forward(bench_heston(), 1.0) \
                    - est.K * math.exp(-0.05)
                assert est.value == pytest.approx(est.other_direct + gap, rel=1e-12)
            else:
                assert est.value == est.direct

    def test_checkpoints_present(self, heston_run):
        ns = [n for n, _ in heston_run[0].checkpoints]
        assert ns == [1, 10, 100, 1000, 10000, 30000]
        # diagnostic: the last two checkpoints are close on the MC scale
        last, prev = heston_run[0].checkpoints[-1][1], heston_run[0].checkpoints[-2][1]
        assert abs(last - prev) < 5.0 * max(heston_run[0].se, 1e-3) * 10

    def test_values_nonnegative(self, heston_run):
        for est in heston_run:
            assert est.value >= 0.0
            assert est.direct >= 0.0

    def test_mixed_maturities_rejected(self):
        s = make_polynomial_schedule(1, 1 / 3, 1, 1 / 3)
        driver = HestonDriver(bench_heston())
        specs = [AsianSpec(K=50.0, T=1.0, r=0.05), AsianSpec(K=50.0, T=2.0, r=0.05)]
        with pytest.raises(ValueError):
            price_asian_grid(driver, s, specs, 100, stream(0, 0))

    def test_put_grid_parity_reconstruction(self):
        s = make_polynomial_schedule(1, 1 / 3, 1, 1 / 3)
        driver = HestonDriver(bench_heston())
        spec = AsianSpec(K=56.0, T=1.0, kind="put", r=0.05)
        est = price_asian(driver, s, spec, 20_000, stream(4, 0), use_parity=True)
        # K=56 is above the forward average: the put is reconstructed
        gap = discounted_average_forward(bench_heston(), 1.0) - 56.0 * math.exp(-0.05)
        assert est.value == pytest.approx(est.other_direct - gap, rel=1e-12)


class TestEuropeanMonotonicity:
    def test_decreasing_in_strike_on_shared_stream(self):
        s = make_polynomial_schedule(1, 1 / 3, 1, 1 / 3)
        driver = HestonDriver(bench_heston())
        specs = [AsianSpec(K=k, T=1.0, kind="call", r=0.05)
                 for k in (44.0, 48.0, 52.0, 56.0)]
        ests = pricing.price_european_grid(driver, s, specs, 20_000, stream(5, 0))
        vals = [e.value for e in ests]
        assert all(a >= b for a, b in zip(vals, vals[1:]))


class TestBlackScholes:
    def test_zero_vol_intrinsic(self):
        assert bs_call(50.0, 44.0, 1.0, 0.05, 0.0) == pytest.approx(
            50.0 - 44.0 * math.exp(-0.05), rel=1e-12)

    def test_atm_flat_rate_value(self):
        # frozen from an independent high-precision normal-CDF evaluation
        with mp.workdps(40):
            d = mp.mpf("0.1")
            expect = float(100 * (mp.ncdf(d) - mp.ncdf(-d)))
        assert bs_call(100.0, 100.0, 1.0, 0.0, 0.2) == pytest.approx(expect, rel=1e-12)
        assert bs_call(100.0, 100.0, 1.0, 0.0, 0.2) == pytest.approx(7.965567455405804, rel=1e-10)

    def test_monotone_in_vol(self):
        prices = [bs_call(50.0, 52.0, 1.0, 0.05, s) for s in np.linspace(0.05, 2.0, 40)]
        assert all(b > a for a, b in zip(prices, prices[1:]))

    def test_zero_strike(self):
        assert bs_call(50.0, 0.0, 1.0, 0.05, 0.3) == 50.0


class TestImpliedVol:
    def test_round_trip_grid(self):
        for sigma in np.linspace(0.01, 3.0, 25):
            price = bs_call(50.0, 52.0, 1.0, 0.05, float(sigma))
            assert implied_vol(price, 50.0, 52.0, 1.0, 0.05) == pytest.approx(
                float(sigma), abs=1e-8)

    def test_band_edges_raise(self):
        intrinsic = max(50.0 - 44.0 * math.exp(-0.05), 0.0)
        with pytest.raises(BandViolationError):
            implied_vol(intrinsic, 50.0, 44.0, 1.0, 0.05)
        with pytest.raises(BandViolationError):
            implied_vol(50.0, 50.0, 44.0, 1.0, 0.05)
        with pytest.raises(BandViolationError):
            implied_vol(55.0, 50.0, 44.0, 1.0, 0.05)

    def test_tiny_premium_gives_tiny_vol(self):
        # sigma -> 0 as the premium approaches intrinsic (below ~1e-4 the
        # time value of this ITM call hits the float plateau, so probe the
        # limit at resolvable premiums)
        intrinsic = 50.0 - 44.0 * math.exp(-0.05)
        sigmas = [implied_vol(intrinsic + eps, 50.0, 44.0, 1.0, 0.05)
                  for eps in (1e-2, 1e-3, 1e-4)]
        assert sigmas[0] > sigmas[1] > sigmas[2]
        assert sigmas[2] < 0.06

    def test_near_spot_price_converges(self):
        # deep band edge: the root sits beyond the initial bracket
        sigma = implied_vol(0.999 * 50.0, 50.0, 50.0, 1.0, 0.0)
        assert bs_call(50.0, 50.0, 1.0, 0.0, sigma) == pytest.approx(
            49.95, abs=1e-10 * 50.0)
        assert sigma > 5.0


class TestBnsParityUsesModelGrowth:
    def test_gap_differs_from_martingale_parity(self):
        p = BNSParams(s0=50.0, r=0.05, rho=-1.0, mu=1.0,
                      jump=TemperedStableMeasure(c=0.01, lam=1.0, alpha=0.5))
        daf = discounted_average_forward(p, 1.0)
        mart = parity_rhs(50.0, 0.05, 1.0, 0.0)
        assert daf < mart  # leverage jumps drag the discounted mean down
        g = growth_rate(p)
        expect = 50.0 * math.exp(-0.05) * (math.exp(g) - 1.0) / g
        assert daf == pytest.approx(expect, rel=1e-12)
