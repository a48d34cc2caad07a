"""Stationary stochastic volatility dynamics packaged as engine drivers.

Two models are provided, each as (a) a one-step transition usable on its
own and (b) a driver for the windowed-average engine together with the map
from a state window to the corresponding price path over ``[0, T]``.

Square-root (Heston-type) model
    d S = S (r dt + sqrt((1-rho^2) v) dW1 + rho sqrt(v) dW2)
    d v = k (theta - v) dt + sigma_v sqrt(v) dW2

  The scheme evolves the stationary pair ``(v, y)`` where
  ``d y = -y dt + sqrt(v) dW1~`` is an auxiliary mean-reverting process.
  The price path is reconstructed from a window without simulating any
  stochastic integral: the v-equation gives

      int_0^t sqrt(v) dW2 = (v_t - v_0 - k theta t + k int_0^t v ds) / sigma_v

  exactly (call it ``Lam(t)``), and ``M_t = int sqrt(v) dW1 = y_t - y_0 +
  int_0^t y ds`` is invariant to the window's ``y_0``.  Then

      S_t = s0 * exp(r t - 0.5 int_0^t v ds + rho Lam(t) + sqrt(1-rho^2) M_t).

  The invariant law of ``v`` is Gamma with shape ``2 k theta / sigma_v**2``
  and mean ``theta``.

Log-price/subordinator (BNS-type) model
    d X = (r - v/2) dt + sqrt(v) dW + rho dZ      (rho <= 0)
    d v = -mu v dt + dZ

  with ``Z`` a tempered-stable subordinator.  One subordinator increment
  feeds both equations (leverage).  Only the pair ``(v, X-increments)`` is
  stationary, so each window is re-based at its own start:
  ``S_t = s0 * exp(X_t - X_0)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import levy
from .engine import Window, WindowTooShortError
from .levy import TemperedStableMeasure, TruncationPolicy
from .schemes import cir_reflected_step, ou_companion_step

__all__ = [
    "HestonParams",
    "BNSParams",
    "PricePathView",
    "heston_joint_step",
    "heston_price_path",
    "bns_joint_step",
    "bns_price_path",
    "HestonDriver",
    "BnsDriver",
    "heston_invariant_gamma",
    "heston_invariant_moments",
    "bns_jump_cumulant_rate",
    "bns_stationary_mean_variance",
    "growth_rate",
]

_SQRT6 = math.sqrt(6.0)


@dataclass(frozen=True)
class HestonParams:
    """Square-root SSV parameters plus scheme initial values.

    Requires the positivity condition ``2 k theta > sigma_v**2`` (the
    variance process then never hits 0 from a positive start).  The
    stronger sufficient condition ``2 k theta / sigma_v**2 > 1 + 2
    sqrt(6)/sigma_v`` under which scheme convergence is actually proved is
    only warned about: the benchmark parameter set violates it and works
    fine in practice.
    """

    s0: float
    r: float
    rho: float
    k: float
    theta: float
    sigma_v: float
    v_init: float | None = None
    y_init: float = 0.0

    def __post_init__(self):
        if not self.s0 > 0.0:
            raise ValueError(f"spot must be positive, got {self.s0}")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"correlation must lie in [-1, 1], got {self.rho}")
        for name in ("k", "theta", "sigma_v"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 2.0 * self.k * self.theta > self.sigma_v**2:
            raise ValueError(
                "need 2*k*theta > sigma_v**2 for a positive variance process; "
                f"got 2*k*theta = {2.0 * self.k * self.theta}, sigma_v**2 = {self.sigma_v**2}"
            )
        ratio = 2.0 * self.k * self.theta / self.sigma_v**2
        if not ratio > 1.0 + 2.0 * _SQRT6 / self.sigma_v:
            warnings.warn(
                f"2*k*theta/sigma_v**2 = {ratio:.4g} does not satisfy the sufficient "
                f"scheme-convergence condition (> {1.0 + 2.0 * _SQRT6 / self.sigma_v:.4g}); "
                "proceeding anyway",
                RuntimeWarning,
                stacklevel=2,
            )
        if self.v_init is None:
            object.__setattr__(self, "v_init", self.theta)
        elif self.v_init < 0.0:
            raise ValueError(f"v_init must be >= 0, got {self.v_init}")


@dataclass(frozen=True)
class BNSParams:
    """Log-price/subordinator SSV parameters plus scheme initial values."""

    s0: float
    r: float
    rho: float
    mu: float
    jump: TemperedStableMeasure
    x_init: float = 0.0
    v_init: float | None = None
    truncation: TruncationPolicy = field(default_factory=TruncationPolicy)
    compensate: bool = False

    def __post_init__(self):
        if not self.s0 > 0.0:
            raise ValueError(f"spot must be positive, got {self.s0}")
        if self.rho > 0.0:
            raise ValueError(f"leverage rho must be <= 0, got {self.rho}")
        if not self.mu > 0.0:
            raise ValueError(f"reversion mu must be positive, got {self.mu}")
        if self.v_init is None:
            # stationary mean of v = (mean jump rate) / mu
            object.__setattr__(self, "v_init", self.jump.mean_rate() / self.mu)
        elif self.v_init < 0.0:
            raise ValueError(f"v_init must be >= 0, got {self.v_init}")


def heston_invariant_gamma(params: HestonParams) -> tuple[float, float]:
    """(shape, scale) of the Gamma invariant law of v; mean is theta."""
    shape = 2.0 * params.k * params.theta / params.sigma_v**2
    scale = params.sigma_v**2 / (2.0 * params.k)
    return shape, scale


def heston_invariant_moments(params: HestonParams) -> tuple[float, float]:
    """(mean, variance) of the invariant law of v."""
    return params.theta, params.theta * params.sigma_v**2 / (2.0 * params.k)


def bns_jump_cumulant_rate(params: BNSParams) -> float:
    """Exponential growth correction ``int (e^{rho y} - 1) pi(dy)`` (<= 0).

    ``E[S_t] = s0 * exp((r + this) * t)``: with uncompensated leverage jumps
    the discounted price is not a martingale, and this rate quantifies the
    drift deficit.
    """
    m, rho = params.jump, params.rho
    if rho == 0.0:
        return 0.0
    a = m.alpha
    return m.c * math.gamma(1.0 - a) * (m.lam**a - (m.lam - rho) ** a) / a


def bns_stationary_mean_variance(params: BNSParams) -> float:
    """Stationary mean of v: full jump mass rate over mu."""
    return params.jump.mean_rate() / params.mu


def growth_rate(params) -> float:
    """Exponential growth rate g with ``E[S_t] = s0 * e^{g t}`` for the model."""
    if isinstance(params, HestonParams):
        return params.r
    if isinstance(params, BNSParams):
        return params.r + bns_jump_cumulant_rate(params)
    raise TypeError(f"unsupported parameter record {type(params).__name__}")


# -- price path views ---------------------------------------------------------


def _expm1_over(x: np.ndarray) -> np.ndarray:
    """(e^x - 1)/x elementwise, continuously extended to 1 at 0."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-8
    out[small] = 1.0 + 0.5 * x[small]
    xs = x[~small]
    out[~small] = np.expm1(xs) / xs
    return out


class PricePathView:
    """Price path over a window ``[0, T]``, derived on demand.

    Between the grid points the driving state is frozen, so the log price
    is linear on each segment: segment ``i`` starts at ``values[i]`` and
    grows at exponential rate ``slopes[i]`` for ``seg_lengths[i]`` time
    units.  Genuinely stepwise paths (the log-price model) have zero
    slopes.  Segment integrals are closed-form, which is what makes the
    Asian integral exact given the discrete state path.
    """

    __slots__ = ("values", "grid_times", "seg_lengths", "slopes", "horizon")

    def __init__(self, values: np.ndarray, grid_times: np.ndarray,
                 seg_lengths: np.ndarray, horizon: float,
                 slopes: np.ndarray | None = None):
        self.values = values
        self.grid_times = grid_times
        self.seg_lengths = seg_lengths
        self.slopes = slopes
        self.horizon = horizon

    def _segment_integrals(self, seg: np.ndarray) -> float:
        # sum_i S_i * l_i * (e^{b_i l_i} - 1)/(b_i l_i): exact per segment
        if self.slopes is None:
            return float(np.dot(self.values, seg))
        x = self.slopes * seg
        return float(np.dot(self.values * seg, _expm1_over(x)))

    def average(self, T: float | None = None) -> float:
        """Time average ``(1/T) int_0^T S ds``, exact for the discrete path."""
        if T is None or T == self.horizon:
            return self._segment_integrals(self.seg_lengths) / self.horizon
        if T > self.horizon:
            raise WindowTooShortError(
                f"path covers [0, {self.horizon}], requested horizon {T}")
        clipped = np.minimum(self.seg_lengths, np.maximum(T - self.grid_times, 0.0))
        return self._segment_integrals(clipped) / T

    def terminal(self) -> float:
        """Path value at the right edge of the window."""
        if self.slopes is None:
            return float(self.values[-1])
        return float(self.values[-1] * math.exp(self.slopes[-1] * self.seg_lengths[-1]))


def _shifted_cumsum(values: np.ndarray) -> np.ndarray:
    out = np.empty(len(values) + 1)
    out[0] = 0.0
    np.cumsum(values, out=out[1:])
    return out


# -- square-root model --------------------------------------------------------


def heston_joint_step(
    state: tuple[float, float],
    gamma: float,
    params: HestonParams,
    rng: np.random.Generator,
) -> tuple[tuple[float, float], float]:
    """One (v, y) step; returns the new state and the recorded dW2 increment.

    Draws two independent scaled Brownian increments (v first, then y); the
    correlation rho enters only through the price reconstruction, never the
    state dynamics.
    """
    v, y = state
    z = rng.standard_normal(2)
    sg = math.sqrt(gamma)
    dw2 = sg * float(z[0])
    dw1 = sg * float(z[1])
    v1 = cir_reflected_step(v, gamma, params.k, params.theta, params.sigma_v, dw2)
    y1 = ou_companion_step(y, gamma, v, dw1)
    return (v1, y1), dw2


def heston_price_path(window: Window, params: HestonParams,
                      T: float | None = None) -> PricePathView:
    """Reconstruct the price path over a (v, y) window.

    All integrals accumulate segment by segment, so the whole path costs
    O(window length).  ``v_0`` and ``y_0`` are the values at the window's
    own start, making the construction shift-invariant.  With (v, y)
    frozen between grid points, the log price is linear on each segment
    with rate ``r - v/2 + rho k (v - theta)/sigma_v + sqrt(1-rho^2) y``;
    the per-segment rates are attached to the view so path integrals stay
    exact.
    """
    if T is not None and T > window.T:
        raise WindowTooShortError(f"window covers [0, {window.T}], requested {T}")
    v = window.states(0)
    y = window.states(1)
    t = window.grid_times
    ell = window.seg_lengths
    iv = _shifted_cumsum(v[:-1] * ell[:-1]) if len(v) > 1 else np.zeros(1)
    iy = _shifted_cumsum(y[:-1] * ell[:-1]) if len(y) > 1 else np.zeros(1)
    rho_c = math.sqrt(1.0 - params.rho**2)
    lam = (v - v[0] - params.k * params.theta * t + params.k * iv) / params.sigma_v
    mart = y - y[0] + iy
    expo = params.r * t - 0.5 * iv + params.rho * lam + rho_c * mart
    values = params.s0 * np.exp(expo)
    slopes = (
        params.r
        - 0.5 * v
        + params.rho * params.k * (v - params.theta) / params.sigma_v
        + rho_c * y
    )
    return PricePathView(values, t, ell, window.T, slopes=slopes)


class _BlockNormals:
    """Scalar consumption of block-drawn standard normals."""

    __slots__ = ("_rng", "_size", "_buf", "_pos")

    def __init__(self, rng: np.random.Generator, size: int = 8192):
        self._rng = rng
        self._size = size
        self._buf = []
        self._pos = 0

    def take(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._rng.standard_normal(self._size).tolist()
            self._pos = 0
        v = self._buf[self._pos]
        self._pos += 1
        return v


class HestonDriver:
    """Engine driver for the (v, y) scheme.

    Consumes normals from its own block cache (two per step: dW2 then dW1),
    so trajectories are reproducible given the generator but the raw-draw
    layout differs from repeated :func:`heston_joint_step` calls.  Records
    the dW2 increments as the trajectory's auxiliary channel.
    """

    dim = 2
    records_aux = True
    model_name = "heston"

    def __init__(self, params: HestonParams):
        self.params = params
        self._normals: _BlockNormals | None = None

    def initial_state(self) -> tuple[float, float]:
        return (self.params.v_init, self.params.y_init)

    def step(self, state, index, gamma, rng):
        blk = self._normals
        if blk is None or blk._rng is not rng:
            blk = self._normals = _BlockNormals(rng)
        p = self.params
        v, y = state
        sg = math.sqrt(gamma)
        dw2 = sg * blk.take()
        dw1 = sg * blk.take()
        v1 = cir_reflected_step(v, gamma, p.k, p.theta, p.sigma_v, dw2)
        y1 = ou_companion_step(y, gamma, v, dw1)
        return (v1, y1), dw2

    def price_path(self, window: Window) -> PricePathView:
        return heston_price_path(window, self.params)


# -- log-price/subordinator model ---------------------------------------------


def _bns_update(
    x: float, v: float, gamma: float, r: float, rho: float, mu: float,
    dw: float, dz: float,
) -> tuple[float, float]:
    if v < 0.0:
        raise ValueError(f"variance went negative ({v}); need gamma*mu <= 1")
    x1 = x + gamma * (r - 0.5 * v) + math.sqrt(v) * dw + rho * dz
    v1 = v - gamma * mu * v + dz
    return x1, v1


def bns_joint_step(
    state: tuple[float, float],
    gamma: float,
    params: BNSParams,
    rng: np.random.Generator,
    index: int = 0,
) -> tuple[float, float]:
    """One (x, v) step.  A single subordinator increment enters both
    equations: the log price jumps by ``rho * dZ <= 0`` exactly when the
    variance jumps by ``dZ >= 0``."""
    x, v = state
    u = params.truncation.threshold(index, gamma)
    dz = levy.compound_poisson_increment(params.jump, u, gamma, params.compensate, rng)
    dw = math.sqrt(gamma) * rng.standard_normal()
    return _bns_update(x, v, gamma, params.r, params.rho, params.mu, dw, dz)


def bns_price_path(window: Window, params: BNSParams,
                   T: float | None = None) -> PricePathView:
    """Price path over an (x, v) window, re-based so the window prices from spot."""
    if T is not None and T > window.T:
        raise WindowTooShortError(f"window covers [0, {window.T}], requested {T}")
    x = window.states(0)
    values = params.s0 * np.exp(x - x[0])
    return PricePathView(values, window.grid_times, window.seg_lengths, window.T)


class BnsDriver:
    """Engine driver for the (x, v) scheme.

    ``scheme`` selects the jump approximation: "P" (truncated compound
    Poisson, the default), "W" (Wienerized small jumps), or "E" with a
    caller-supplied ``increment_sampler(gamma, rng)`` returning exact
    subordinator increments.
    """

    dim = 2
    records_aux = False
    model_name = "bns"

    def __init__(self, params: BNSParams, scheme: str = "P", increment_sampler=None):
        if scheme not in ("P", "W", "E"):
            raise ValueError(f"unknown scheme {scheme!r}")
        if scheme == "E" and increment_sampler is None:
            raise ValueError("scheme 'E' needs an exact increment sampler")
        self.params = params
        self.scheme = scheme
        self.increment_sampler = increment_sampler
        self._normals: _BlockNormals | None = None

    def initial_state(self) -> tuple[float, float]:
        return (self.params.x_init, self.params.v_init)

    def step(self, state, index, gamma, rng):
        blk = self._normals
        if blk is None or blk._rng is not rng:
            blk = self._normals = _BlockNormals(rng)
        p = self.params
        if self.scheme == "E":
            dz = self.increment_sampler(gamma, rng)
        else:
            u = p.truncation.threshold(index, gamma)
            if self.scheme == "P":
                dz = levy.compound_poisson_increment(p.jump, u, gamma, p.compensate, rng)
            else:
                dz = levy.wienerized_increment(p.jump, u, gamma, p.compensate, rng)
        dw = math.sqrt(gamma) * blk.take()
        x, v = state
        return _bns_update(x, v, gamma, p.r, p.rho, p.mu, dw, dz)

    def price_path(self, window: Window) -> PricePathView:
        return bns_price_path(window, self.params)
