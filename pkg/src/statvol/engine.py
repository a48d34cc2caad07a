"""Single-trajectory engine for weighted window averages.

One engine run owns one trajectory of a stepwise-constant scheme.  At
iteration ``j`` it exposes the shifted window starting at grid index ``j``
(physical span ``[Gamma_j, Gamma_j + T]``), evaluates a path functional on
it, and folds the result into a running weighted average through the
recurrence

    value <- value + (eta_{j+1} / H_{j+1}) * (F(window_j) - value),

which reproduces the explicit weighted mean ``(1/H_n) sum eta_k F(window_{k-1})``
without storing the history.  Windows are views into a shared buffer, never
copies; entries below the current window start are evicted as the sweep
advances, so live storage stays at one window's length.

The trajectory itself is produced by a *driver*: any object with

    ``dim``            -- state dimension d
    ``records_aux``    -- whether step() returns an auxiliary scalar to record
    ``initial_state()``-- the state at grid index 0
    ``step(state, index, gamma, rng)`` -- the transition to grid index
                          ``index`` over a step of length ``gamma``; returns
                          ``new_state`` or ``(new_state, aux)``.

Drivers are strictly sequential (each step depends on the last); parallelism
belongs at the replication level with one RNG stream per engine run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .schedule import Schedule

__all__ = [
    "BufferAccessError",
    "DriverStepError",
    "WindowTooShortError",
    "PathBuffer",
    "Window",
    "window_integral",
    "FunctionalAverage",
    "update_average",
    "MarginalAccumulator",
    "MarginalStats",
    "RunResult",
    "run",
]


class BufferAccessError(IndexError):
    """Read of an evicted or not-yet-simulated trajectory index."""


class DriverStepError(RuntimeError):
    """Driver failure, carrying the offending grid index."""

    def __init__(self, index: int, message: str):
        super().__init__(f"driver step to index {index} failed: {message}")
        self.index = index


class WindowTooShortError(ValueError):
    """A functional asked for a longer horizon than the window covers."""


class PathBuffer:
    """Contiguous range of trajectory states, indexed by global grid index.

    Retains exactly the indices ``[start, end]``; reads outside that range
    raise :class:`BufferAccessError`.  Storage compacts in place when the
    evicted prefix dominates, so memory stays proportional to the live span.
    """

    __slots__ = ("dim", "_cols", "_aux", "_base", "_start", "_end")

    def __init__(self, dim: int, record_aux: bool = False, capacity: int = 1024):
        self.dim = dim
        self._cols = [np.empty(capacity) for _ in range(dim)]
        self._aux = np.empty(capacity) if record_aux else None
        self._base = 0  # global index stored at physical slot 0
        self._start = 0  # smallest retained global index
        self._end = -1  # largest stored global index

    @property
    def start(self) -> int:
        return self._start

    @property
    def end(self) -> int:
        return self._end

    def append(self, state: Sequence[float], aux: float = 0.0) -> None:
        pos = self._end + 1 - self._base
        cap = len(self._cols[0])
        if pos >= cap:
            self._compact_or_grow()
            pos = self._end + 1 - self._base
        for c in range(self.dim):
            self._cols[c][pos] = state[c]
        if self._aux is not None:
            self._aux[pos] = aux
        self._end += 1

    def _compact_or_grow(self) -> None:
        live_lo = self._start - self._base
        live_n = self._end - self._start + 1
        cap = len(self._cols[0])
        if live_lo >= cap // 2:
            # plenty of dead prefix: slide live data to the front
            for c in range(self.dim):
                self._cols[c][:live_n] = self._cols[c][live_lo : live_lo + live_n]
            if self._aux is not None:
                self._aux[:live_n] = self._aux[live_lo : live_lo + live_n]
            self._base = self._start
        else:
            new_cap = cap * 2
            for c in range(self.dim):
                grown = np.empty(new_cap)
                grown[:live_n] = self._cols[c][live_lo : live_lo + live_n]
                self._cols[c] = grown
            if self._aux is not None:
                grown = np.empty(new_cap)
                grown[:live_n] = self._aux[live_lo : live_lo + live_n]
                self._aux = grown
            self._base = self._start

    def evict_below(self, index: int) -> None:
        """Drop all indices strictly below ``index``."""
        if index > self._start:
            self._start = min(index, self._end + 1)

    def _check_range(self, lo: int, hi: int) -> None:
        if lo < self._start or hi > self._end:
            raise BufferAccessError(
                f"indices [{lo}, {hi}] outside retained range "
                f"[{self._start}, {self._end}]"
            )

    def state(self, index: int) -> tuple[float, ...]:
        self._check_range(index, index)
        pos = index - self._base
        return tuple(float(self._cols[c][pos]) for c in range(self.dim))

    def coord_slice(self, coord: int, lo: int, hi: int) -> np.ndarray:
        """View of coordinate ``coord`` over global indices ``lo..hi`` inclusive."""
        self._check_range(lo, hi)
        p = lo - self._base
        return self._cols[coord][p : p + (hi - lo + 1)]

    def aux_slice(self, lo: int, hi: int) -> np.ndarray:
        if self._aux is None:
            raise BufferAccessError("buffer records no auxiliary channel")
        self._check_range(lo, hi)
        p = lo - self._base
        return self._aux[p : p + (hi - lo + 1)]

    def retained_indices(self) -> range:
        return range(self._start, self._end + 1)


class Window:
    """Stepwise-constant path over ``[0, T]``, shifted to start at grid index ``start``.

    Grid point ``i`` sits at local time ``grid_times[i]`` and carries the
    state of global index ``start + i``; the path holds that value for the
    following ``seg_lengths[i]`` time units.  The final segment is the
    partial piece ``T - grid_times[-1]`` (possibly zero), so the segment
    lengths always sum to ``T`` exactly.
    """

    __slots__ = ("_buf", "start", "end", "T", "grid_times", "seg_lengths")

    def __init__(
        self,
        buf: PathBuffer,
        start: int,
        end: int,
        T: float,
        grid_times: np.ndarray,
        seg_lengths: np.ndarray,
    ):
        buf._check_range(start, end)
        self._buf = buf
        self.start = start
        self.end = end
        self.T = T
        self.grid_times = grid_times
        self.seg_lengths = seg_lengths

    def __len__(self) -> int:
        return self.end - self.start + 1

    def states(self, coord: int) -> np.ndarray:
        """Values of one state coordinate at the window grid points."""
        return self._buf.coord_slice(coord, self.start, self.end)

    def state_matrix(self) -> np.ndarray:
        """Grid states as an ``(len, dim)`` array (copies)."""
        return np.column_stack([self.states(c) for c in range(self._buf.dim)])

    def aux(self) -> np.ndarray:
        """Recorded auxiliary values aligned with the grid points."""
        return self._buf.aux_slice(self.start, self.end)

    def start_state(self) -> tuple[float, ...]:
        return self._buf.state(self.start)

    def integral_of_values(self, values: np.ndarray, T: float | None = None) -> float:
        """Exact integral over ``[0, T]`` of the stepwise path taking ``values``."""
        if T is None or T == self.T:
            return float(np.dot(values, self.seg_lengths))
        return float(np.dot(values, _clip_segments(self.grid_times, self.seg_lengths, self.T, T)))

    def integral(self, g: Callable, T: float | None = None) -> float:
        """Integral of ``g`` along the stepwise path; ``g`` maps a state tuple to a real."""
        vals = np.array([g(s) for s in zip(*(self.states(c) for c in range(self._buf.dim)))])
        return self.integral_of_values(vals, T)


def _clip_segments(
    grid_times: np.ndarray, seg_lengths: np.ndarray, T_window: float, T: float
) -> np.ndarray:
    if T > T_window:
        raise WindowTooShortError(f"window covers [0, {T_window}], requested horizon {T}")
    clipped = np.minimum(seg_lengths, np.maximum(T - grid_times, 0.0))
    return clipped


def window_integral(window: Window, g: Callable, T: float | None = None) -> float:
    """Integral of a state functional along a window's stepwise path."""
    return window.integral(g, T)


class FunctionalAverage:
    """Running weighted mean maintained by the one-pass recurrence.

    After ``n`` updates with weights ``eta_k`` and values ``f_k``, ``value``
    equals ``(1/H_n) * sum_k eta_k f_k`` up to rounding, where
    ``H_n = sum eta_k`` is kept in ``weight_total``.  Values may be scalars
    or numpy arrays (updated componentwise).
    """

    __slots__ = ("count", "weight_total", "weight_sq_total", "value")

    def __init__(self) -> None:
        self.count = 0
        self.weight_total = 0.0
        self.weight_sq_total = 0.0
        self.value: float | np.ndarray = 0.0

    def update(self, eta: float, f_value) -> "FunctionalAverage":
        if not eta > 0.0:
            raise ValueError(f"weights must be positive, got {eta}")
        self.weight_total += eta
        self.weight_sq_total += eta * eta
        self.value = self.value + (eta / self.weight_total) * (f_value - self.value)
        self.count += 1
        return self

    def copy_value(self):
        return np.array(self.value, copy=True) if isinstance(self.value, np.ndarray) else self.value


def update_average(avg: FunctionalAverage, eta: float, f_value) -> FunctionalAverage:
    """Fold one weighted observation into a running average (in place)."""
    return avg.update(eta, f_value)


@dataclass
class MarginalStats:
    """Weighted moments and normalized histogram of trajectory marginals."""

    weight_total: float
    mean: np.ndarray
    variance: np.ndarray
    skewness: np.ndarray
    histogram: np.ndarray  # shape (dim, bins + 2): [underflow, bins..., overflow]
    bin_edges: np.ndarray  # shape (bins + 1,)


class MarginalAccumulator:
    """Weighted moment sums and fixed-bin histograms of the point marginal.

    Fed with ``(eta_k, state at grid index k-1)`` pairs, it tracks the
    weighted occupation of the state space: per-coordinate moment sums up to
    order three plus a histogram with explicit under/overflow bins.  Total
    accumulated weight equals ``H_n``.
    """

    def __init__(self, dim: int, bins: int = 200, lo: float = 0.0, hi: float = 1.0):
        if bins < 1:
            raise ValueError("need at least one histogram bin")
        if not hi > lo:
            raise ValueError(f"histogram range must be increasing, got ({lo}, {hi})")
        self.dim = dim
        self.bins = bins
        self.lo = float(lo)
        self.hi = float(hi)
        self._inv_width = bins / (hi - lo)
        self.weight_total = 0.0
        self._m1 = [0.0] * dim
        self._m2 = [0.0] * dim
        self._m3 = [0.0] * dim
        self._hist = np.zeros((dim, bins + 2))
        self.count = 0

    def update(self, eta: float, state: Sequence[float]) -> None:
        self.weight_total += eta
        for c in range(self.dim):
            x = state[c]
            self._m1[c] += eta * x
            self._m2[c] += eta * x * x
            self._m3[c] += eta * x * x * x
            b = int((x - self.lo) * self._inv_width)
            if x < self.lo:
                b = -1
            elif b >= self.bins:
                b = self.bins
            self._hist[c, b + 1] += eta
        self.count += 1

    def stats(self) -> MarginalStats:
        if self.count == 0:
            raise ValueError("marginal accumulator is empty")
        w = self.weight_total
        mean = np.array(self._m1) / w
        var = np.maximum(np.array(self._m2) / w - mean**2, 0.0)
        m3 = np.array(self._m3) / w
        central3 = m3 - 3.0 * mean * var - mean**3
        with np.errstate(divide="ignore", invalid="ignore"):
            skew = np.where(var > 0.0, central3 / np.power(var, 1.5), 0.0)
        return MarginalStats(
            weight_total=w,
            mean=mean,
            variance=var,
            skewness=skew,
            histogram=self._hist / w,
            bin_edges=np.linspace(self.lo, self.hi, self.bins + 1),
        )


def marginal_stats(acc: MarginalAccumulator) -> MarginalStats:
    return acc.stats()


@dataclass
class RunResult:
    """Outcome of an engine sweep."""

    n_iters: int
    T: float
    average: FunctionalAverage | None
    second_moment: FunctionalAverage | None
    checkpoints: list = field(default_factory=list)  # (n, value) pairs
    marginal: MarginalAccumulator | None = None
    marginal_checkpoints: list = field(default_factory=list)  # (n, mean, variance)
    buffer: PathBuffer | None = None

    @property
    def value(self):
        return None if self.average is None else self.average.value


def _checkpoint_grid(n_iters: int) -> list[int]:
    grid = []
    p = 1
    while p <= n_iters:
        grid.append(p)
        p *= 10
    if not grid or grid[-1] != n_iters:
        grid.append(n_iters)
    return grid


def run(
    driver,
    sched: Schedule,
    functional: Callable[[Window], object] | None,
    T: float,
    n_iters: int,
    rng: np.random.Generator,
    phi: Callable[[tuple], float] | None = None,
    marginal: MarginalAccumulator | None = None,
    track_second_moment: bool = False,
    keep_buffer: bool = False,
) -> RunResult:
    """Sweep ``n_iters`` shifted windows of length ``T`` along one trajectory.

    At iteration ``j`` (zero-based) the window starting at grid index ``j``
    is evaluated and folded in with weight ``eta_{j+1}``.  When ``phi`` is
    given, ``F(window) * phi(window start state)`` is folded instead, which
    reweights the estimate toward an initial law absolutely continuous with
    respect to the invariant one.  After iteration ``j`` the buffer retains
    exactly the indices ``[j + 1, horizon_index(j + 1, T)]``.

    ``functional=None`` runs marginal/diagnostic sweeps without window
    evaluation.  Estimates are checkpointed at ``n = 1, 10, 100, ...`` and
    at the final iteration.
    """
    if n_iters < 1:
        raise ValueError(f"need at least one iteration, got {n_iters}")
    if not T > 0.0:
        raise ValueError(f"window horizon must be positive, got {T}")

    buf = PathBuffer(driver.dim, record_aux=getattr(driver, "records_aux", False))
    state = tuple(float(x) for x in driver.initial_state())
    buf.append(state)
    frontier = 0
    records_aux = getattr(driver, "records_aux", False)

    avg = FunctionalAverage() if functional is not None else None
    avg2 = FunctionalAverage() if (functional is not None and track_second_moment) else None
    checkpoints: list = []
    marginal_checkpoints: list = []
    cp_grid = set(_checkpoint_grid(n_iters))

    def extend_to(target: int) -> None:
        nonlocal state, frontier
        sched.ensure(target + 1)
        gam = sched._gam  # re-read: ensure() may have swapped the arrays
        while frontier < target:
            k = frontier + 1
            g = float(gam[k])
            try:
                out = driver.step(state, k, g, rng)
            except Exception as exc:  # surface the index of the failing step
                raise DriverStepError(k, str(exc)) from exc
            if records_aux:
                state, aux = out
            else:
                state, aux = out, 0.0
            s0 = state[0]
            ok = math.isfinite(s0) if driver.dim == 1 else all(map(math.isfinite, state))
            if not ok:
                raise DriverStepError(k, f"non-finite state {state}")
            buf.append(state, aux)
            frontier = k

    N_j = sched.horizon_index(0, T)
    extend_to(N_j)
    gam = sched._gam
    eta = sched._eta
    Gam = sched._Gam

    for j in range(n_iters):
        m = N_j - j
        t = Gam[j : N_j + 1] - Gam[j]
        ell = np.empty(m + 1)
        ell[:m] = gam[j + 1 : N_j + 1]
        ell[m] = T - t[m]

        if functional is not None:
            window = Window(buf, j, N_j, T, t, ell)
            f = functional(window)
            if phi is not None:
                f = f * phi(buf.state(j))
            eta_j = float(eta[j + 1])
            avg.update(eta_j, f)
            if avg2 is not None:
                avg2.update(eta_j, f * f)
        if marginal is not None:
            marginal.update(float(eta[j + 1]), buf.state(j))

        n_done = j + 1
        if n_done in cp_grid:
            if avg is not None:
                checkpoints.append((n_done, avg.copy_value()))
            if marginal is not None and marginal.count > 0:
                st = marginal.stats()
                marginal_checkpoints.append((n_done, st.mean.copy(), st.variance.copy()))

        buf.evict_below(j + 1)
        N_j = sched.horizon_index(j + 1, T, hint=N_j)
        extend_to(N_j)
        gam = sched._gam
        eta = sched._eta
        Gam = sched._Gam

    return RunResult(
        n_iters=n_iters,
        T=T,
        average=avg,
        second_moment=avg2,
        checkpoints=checkpoints,
        marginal=marginal,
        marginal_checkpoints=marginal_checkpoints,
        buffer=buf if keep_buffer else None,
    )
