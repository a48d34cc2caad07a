"""Payoffs, windowed-average price estimators, parity, and implied vol.

The Asian estimators fold discounted payoffs of the reconstructed price
path over shifted windows into the engine's weighted average.  Because the
call and the put are evaluated on the same windows, the pathwise identity
``(A - K)+ - (K - A)+ = A - K`` carries over to the estimators:

    C_n - P_n = e^{-rT} * (weighted mean of A - K)        (exactly)

and the exact call-put gap ``e^{-rT} (E[A] - K)`` is known in closed form
(for a martingale model it is the classical Asian parity
``(s0/(rT)) (1 - e^{-rT}) - K e^{-rT}``).  Estimating the out-of-the-money
leg and reconstructing the other through the gap is the variance-reduced
("parity on") estimator.

Standard errors come from the weighted second moment of the payoffs with
effective sample size ``H_n^2 / sum eta_k^2``; overlapping windows make
consecutive payoffs strongly correlated, so these bands understate the
error of a single run.  Replication-level spread (fresh seeds) is the
honest band and is what the cross-validation checks use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .models import PricePathView, growth_rate
from .schedule import Schedule

__all__ = [
    "AsianSpec",
    "PriceEstimate",
    "BandViolationError",
    "asian_payoff",
    "parity_rhs",
    "discounted_average_forward",
    "forward_average",
    "price_asian",
    "price_asian_grid",
    "price_european",
    "price_european_grid",
    "bs_call",
    "implied_vol",
]

_IV_TOL_FACTOR = 1e-10
_SQRT2 = math.sqrt(2.0)


class BandViolationError(ValueError):
    """Price outside the no-arbitrage band, so no implied volatility exists."""


@dataclass(frozen=True)
class AsianSpec:
    """Fixed-strike average-price option on ``(1/T) int_0^T S ds``."""

    K: float
    T: float
    kind: str = "call"
    r: float = 0.0

    def __post_init__(self):
        if self.K < 0.0:
            raise ValueError(f"strike must be >= 0, got {self.K}")
        if not self.T > 0.0:
            raise ValueError(f"maturity must be positive, got {self.T}")
        if self.kind not in ("call", "put"):
            raise ValueError(f"kind must be 'call' or 'put', got {self.kind!r}")


@dataclass
class PriceEstimate:
    """A windowed-average price estimate.

    ``value`` is the reported price: the direct estimator, or the
    parity-reconstructed one when ``used_parity``.  ``direct`` and
    ``other_direct`` are the raw call/put legs estimated on the same
    windows; ``companion`` is the parity-paired estimate of the same leg.
    """

    K: float
    T: float
    kind: str
    value: float
    n: int
    se: float
    direct: float
    other_direct: float
    mean_average: float
    used_parity: bool
    companion: float | None = None
    checkpoints: list = field(default_factory=list)  # (n, value) pairs


def asian_payoff(path: PricePathView, spec: AsianSpec) -> float:
    """Discounted Asian payoff of one stepwise price path."""
    a = path.average(spec.T)
    disc = math.exp(-spec.r * spec.T)
    if spec.kind == "call":
        return disc * max(a - spec.K, 0.0)
    return disc * max(spec.K - a, 0.0)


def _mean_exp_growth(g: float, T: float) -> float:
    """(e^{gT} - 1) / (gT), continuously extended to 1 at g = 0."""
    x = g * T
    if x == 0.0:
        return 1.0
    return math.expm1(x) / x


def parity_rhs(s0: float, r: float, T: float, K: float) -> float:
    """Exact Asian call-put gap for a martingale model:
    ``(s0/(rT)) (1 - e^{-rT}) - K e^{-rT}``, with the removable ``r = 0``
    limit ``s0 - K`` handled analytically."""
    if not T > 0.0:
        raise ValueError(f"maturity must be positive, got {T}")
    if r == 0.0:
        return s0 - K
    return s0 * (-math.expm1(-r * T)) / (r * T) - K * math.exp(-r * T)


def discounted_average_forward(params, T: float) -> float:
    """``e^{-rT} E[(1/T) int_0^T S ds]`` under the model's own growth rate.

    For a martingale model this is ``(s0/(rT)) (1 - e^{-rT})``; with
    uncompensated leverage jumps the growth rate differs from ``r`` and the
    exact gap must use it, otherwise the reconstructed leg inherits a flat
    bias across all strikes.
    """
    g = growth_rate(params)
    return params.s0 * math.exp(-params.r * T) * _mean_exp_growth(g, T)


def forward_average(s0: float, r: float, T: float) -> float:
    """Undiscounted martingale average forward ``s0 (e^{rT} - 1)/(rT)``.

    Used only as the moneyness threshold that picks which leg to estimate.
    """
    return s0 * _mean_exp_growth(r, T)


# -- estimators ---------------------------------------------------------------


def _common_T_r(specs: list[AsianSpec]) -> tuple[float, float]:
    Ts = {s.T for s in specs}
    rs = {s.r for s in specs}
    if len(Ts) != 1 or len(rs) != 1:
        raise ValueError("all specs in one grid run must share maturity and rate")
    return Ts.pop(), rs.pop()


def _asian_functional(driver, strikes: np.ndarray, disc: float):
    def functional(window: engine.Window) -> np.ndarray:
        a = driver.price_path(window).average()
        d = a - strikes
        return np.concatenate(
            [disc * np.maximum(d, 0.0), disc * np.maximum(-d, 0.0), [a]]
        )

    return functional


def _european_functional(driver, strikes: np.ndarray, disc: float):
    def functional(window: engine.Window) -> np.ndarray:
        s_T = driver.price_path(window).terminal()
        d = s_T - strikes
        return np.concatenate(
            [disc * np.maximum(d, 0.0), disc * np.maximum(-d, 0.0), [s_T]]
        )

    return functional


def _naive_se(avg: engine.FunctionalAverage, avg2: engine.FunctionalAverage) -> np.ndarray:
    mean = np.asarray(avg.value, dtype=float)
    var = np.maximum(np.asarray(avg2.value, dtype=float) - mean**2, 0.0)
    return np.sqrt(var * avg.weight_sq_total) / avg.weight_total


def _assemble(
    specs: list[AsianSpec],
    strikes: np.ndarray,
    result: engine.RunResult,
    params,
    use_parity: bool,
    T: float,
    r: float,
) -> list[PriceEstimate]:
    nk = len(strikes)
    vec = np.asarray(result.average.value, dtype=float)
    se = _naive_se(result.average, result.second_moment)
    disc = math.exp(-r * T)
    daf = discounted_average_forward(params, T)
    fwd = forward_average(params.s0, r, T)
    mean_a = float(vec[2 * nk])

    def pick(values: np.ndarray, spec: AsianSpec, i: int) -> tuple[float, bool, float | None]:
        call_d = float(values[i])
        put_d = float(values[nk + i])
        gap = daf - spec.K * disc
        if not use_parity:
            return (call_d if spec.kind == "call" else put_d), False, None
        if spec.kind == "call":
            if spec.K <= fwd:
                return max(put_d + gap, 0.0), True, put_d + gap
            return call_d, True, put_d + gap
        if spec.K > fwd:
            return max(call_d - gap, 0.0), True, call_d - gap
        return put_d, True, call_d - gap

    out = []
    for i, spec in enumerate(specs):
        value, parity_used, companion = pick(vec, spec, i)
        call_d = float(vec[i])
        put_d = float(vec[nk + i])
        # the se of the reported value: parity shifts by a constant, so it
        # is the estimated leg's se either way
        if use_parity and spec.kind == "call" and spec.K <= fwd:
            se_i = float(se[nk + i])
        elif use_parity and spec.kind == "put" and spec.K > fwd:
            se_i = float(se[i])
        else:
            se_i = float(se[i if spec.kind == "call" else nk + i])
        cps = [(n, pick(np.asarray(v, dtype=float), spec, i)[0]) for n, v in result.checkpoints]
        out.append(
            PriceEstimate(
                K=spec.K,
                T=T,
                kind=spec.kind,
                value=value,
                n=result.n_iters,
                se=se_i,
                direct=call_d if spec.kind == "call" else put_d,
                other_direct=put_d if spec.kind == "call" else call_d,
                mean_average=mean_a,
                used_parity=parity_used,
                companion=companion,
                checkpoints=cps,
            )
        )
    return out


def price_asian_grid(
    driver,
    sched: Schedule,
    specs: list[AsianSpec],
    n_iters: int,
    rng: np.random.Generator,
    use_parity: bool = True,
) -> list[PriceEstimate]:
    """Estimate a strike grid of Asian prices from one trajectory.

    All windows are shared across strikes, so the per-strike cost beyond
    the trajectory itself is one payoff evaluation per window.
    """
    T, r = _common_T_r(specs)
    strikes = np.array([s.K for s in specs], dtype=float)
    disc = math.exp(-r * T)
    functional = _asian_functional(driver, strikes, disc)
    result = engine.run(
        driver, sched, functional, T, n_iters, rng, track_second_moment=True
    )
    return _assemble(specs, strikes, result, driver.params, use_parity, T, r)


def price_asian(
    driver,
    sched: Schedule,
    spec: AsianSpec,
    n_iters: int,
    rng: np.random.Generator,
    use_parity: bool = True,
) -> PriceEstimate:
    """Estimate one Asian price (see :func:`price_asian_grid`)."""
    return price_asian_grid(driver, sched, [spec], n_iters, rng, use_parity)[0]


def price_european_grid(
    driver,
    sched: Schedule,
    specs: list[AsianSpec],
    n_iters: int,
    rng: np.random.Generator,
) -> list[PriceEstimate]:
    """Estimate terminal-value (European) prices on a shared trajectory."""
    T, r = _common_T_r(specs)
    strikes = np.array([s.K for s in specs], dtype=float)
    disc = math.exp(-r * T)
    functional = _european_functional(driver, strikes, disc)
    result = engine.run(
        driver, sched, functional, T, n_iters, rng, track_second_moment=True
    )
    return _assemble(specs, strikes, result, driver.params, False, T, r)


def price_european(
    driver,
    sched: Schedule,
    spec: AsianSpec,
    n_iters: int,
    rng: np.random.Generator,
) -> PriceEstimate:
    return price_european_grid(driver, sched, [spec], n_iters, rng)[0]


# -- Black-Scholes and implied volatility -------------------------------------


def _norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def _norm_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def bs_call(s0: float, K: float, T: float, r: float, sigma: float) -> float:
    """Black-Scholes European call; ``sigma = 0`` returns the discounted intrinsic."""
    if not T > 0.0:
        raise ValueError(f"maturity must be positive, got {T}")
    if sigma < 0.0:
        raise ValueError(f"volatility must be >= 0, got {sigma}")
    if K <= 0.0:
        return s0
    if sigma == 0.0:
        return max(s0 - K * math.exp(-r * T), 0.0)
    st = sigma * math.sqrt(T)
    d1 = (math.log(s0 / K) + (r + 0.5 * sigma * sigma) * T) / st
    d2 = d1 - st
    return s0 * _norm_cdf(d1) - K * math.exp(-r * T) * _norm_cdf(d2)


def _vega(s0: float, K: float, T: float, r: float, sigma: float) -> float:
    st = sigma * math.sqrt(T)
    d1 = (math.log(s0 / K) + (r + 0.5 * sigma * sigma) * T) / st
    return s0 * math.sqrt(T) * _norm_pdf(d1)


def implied_vol(price: float, s0: float, K: float, T: float, r: float) -> float:
    """Invert the Black-Scholes call price for sigma.

    Newton from sigma = 0.2, falling back to bisection when 50 iterations
    have not converged (or Newton leaves the admissible range).  The
    bisection bracket starts at [1e-6, 5] and doubles its upper edge until
    it covers the root, which exists for any price strictly inside the
    no-arbitrage band ``((s0 - K e^{-rT})+, s0)``.
    """
    intrinsic = max(s0 - K * math.exp(-r * T), 0.0)
    if not (intrinsic < price < s0):
        raise BandViolationError(
            f"price {price} outside the no-arbitrage band ({intrinsic}, {s0})"
        )
    tol = _IV_TOL_FACTOR * s0
    sigma = 0.2
    for _ in range(50):
        diff = bs_call(s0, K, T, r, sigma) - price
        if abs(diff) <= tol:
            return sigma
        vega = _vega(s0, K, T, r, sigma)
        if vega <= 0.0 or not math.isfinite(vega):
            break
        step = diff / vega
        nxt = sigma - step
        if not (1e-12 < nxt < 10.0):
            break
        sigma = nxt
    else:
        diff = bs_call(s0, K, T, r, sigma) - price
        if abs(diff) <= tol:
            return sigma

    lo, hi = 1e-6, 5.0
    while bs_call(s0, K, T, r, hi) < price:
        hi *= 2.0
        if hi > 1e4:
            raise BandViolationError(f"no volatility below {hi} reproduces price {price}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        diff = bs_call(s0, K, T, r, mid) - price
        if abs(diff) <= tol:
            return mid
        if diff < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
