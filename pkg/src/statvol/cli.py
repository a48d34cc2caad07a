"""Batch front-end: configuration, seeding, runs, CSV emission.

Subcommands
    price-asian       strike grid of Asian prices (reproduces the benchmark tables)
    price-european    strike grid of terminal-value prices
    vol-surface       (K, T) grid of European prices and implied volatilities
    stationary-stats  weighted moments/histogram of the volatility marginal
    check-schedule    step/weight admissibility diagnostics
    oracle            classical fixed-grid MC cross-check (square-root model)

Determinism contract: for a fixed (config, seed, threads) the emitted CSV is
byte-identical across runs, and results are identical across thread counts.
Replication ``i`` always consumes the Philox stream derived from
``(seed, i)`` and results are reduced in replication order, so the thread
pool only changes scheduling, never values.  Wall time goes to stderr, not
into the CSV.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

from . import engine, oracles, pricing, schedule
from .engine import DriverStepError, MarginalAccumulator
from .levy import TemperedStableMeasure, TruncationPolicy
from .models import BNSParams, BnsDriver, HestonDriver, HestonParams
from .pricing import AsianSpec, BandViolationError
from .rng import stream
from .schemes import SchemeError

__all__ = ["main", "ConfigError", "RunConfig", "load_config"]

_DEFAULT_STRIKES = tuple(float(k) for k in range(44, 57))


class ConfigError(ValueError):
    """Invalid configuration key, value, or combination."""


@dataclass
class RunConfig:
    model: str = ""
    s0: float = 50.0
    r: float = 0.05
    rho: float | None = None
    k: float = 2.0
    theta: float = 0.01
    sigma_v: float = 0.1
    v_init: float | None = None
    y_init: float = 0.0
    x_init: float = 0.0
    mu: float = 1.0
    jump_c: float = 0.01
    jump_lambda: float = 1.0
    jump_alpha: float = 0.5
    truncation_power: float = 1.0
    truncation_umax: float = 1.0
    compensate_jumps: bool = False
    c1: float = 1.0
    rho1: float = 1.0 / 3.0
    c2: float = 1.0
    rho2: float = 1.0 / 3.0
    strikes: tuple = _DEFAULT_STRIKES
    kind: str = "call"
    maturity: float = 1.0
    maturities: tuple | None = None
    n_iters: int = 500_000
    seed: int = 12345
    parity: bool = True
    replications: int = 1
    threads: int = 1
    out: str = "-"
    hist_bins: int = 200
    hist_lo: float = 0.0
    hist_hi: float = 0.05
    oracle_paths: int = 20_000
    oracle_fine_step: float = 1e-3
    eps: float = 0.0
    series_s: float = 2.0
    scan_max: int = 1_000_000


_BOOL_KEYS = {"parity", "compensate_jumps"}
_INT_KEYS = {"n_iters", "seed", "replications", "threads", "hist_bins",
             "oracle_paths", "scan_max"}
_LIST_KEYS = {"strikes", "maturities"}
_STR_KEYS = {"model", "kind", "out"}


def _parse_bool(key: str, raw: str) -> bool:
    if raw in ("on", "true", "1", "yes"):
        return True
    if raw in ("off", "false", "0", "no"):
        return False
    raise ConfigError(f"{key}: expected on/off, got {raw!r}")


def load_config(path: str | Path) -> RunConfig:
    """Parse a flat key=value config file (see config_schema.txt)."""
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if key in _STR_KEYS:
                value = raw
            elif key in _BOOL_KEYS:
                value = _parse_bool(key, raw)
            elif key in _INT_KEYS:
                value = int(raw)
            elif key in _LIST_KEYS:
                value = tuple(float(tok) for tok in raw.split(",") if tok.strip())
            else:
                value = float(raw)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {raw!r}") from exc
        setattr(cfg, key, value)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.model not in ("heston", "bns"):
        raise ConfigError(f"model must be 'heston' or 'bns', got {cfg.model!r}")
    if cfg.kind not in ("call", "put"):
        raise ConfigError(f"kind must be 'call' or 'put', got {cfg.kind!r}")
    if cfg.n_iters < 1:
        raise ConfigError(f"n_iters must be >= 1, got {cfg.n_iters}")
    if cfg.seed < 0:
        raise ConfigError(f"seed must be >= 0, got {cfg.seed}")
    if cfg.replications < 1:
        raise ConfigError(f"replications must be >= 1, got {cfg.replications}")
    if cfg.threads < 1:
        raise ConfigError(f"threads must be >= 1, got {cfg.threads}")
    if not cfg.maturity > 0.0:
        raise ConfigError(f"maturity must be positive, got {cfg.maturity}")
    if not cfg.strikes:
        raise ConfigError("strikes must be non-empty")
    if any(k < 0.0 for k in cfg.strikes):
        raise ConfigError(f"strikes must be >= 0, got {cfg.strikes}")
    if cfg.maturities is not None and any(t <= 0.0 for t in cfg.maturities):
        raise ConfigError(f"maturities must be positive, got {cfg.maturities}")
    if not cfg.hist_hi > cfg.hist_lo:
        raise ConfigError("hist_hi must exceed hist_lo")


def _build_schedule(cfg: RunConfig) -> schedule.Schedule:
    try:
        return schedule.make_polynomial_schedule(cfg.c1, cfg.rho1, cfg.c2, cfg.rho2)
    except schedule.ScheduleError as exc:
        raise ConfigError(str(exc)) from exc


def _build_driver(cfg: RunConfig):
    try:
        if cfg.model == "heston":
            rho = 0.5 if cfg.rho is None else cfg.rho
            params = HestonParams(
                s0=cfg.s0, r=cfg.r, rho=rho, k=cfg.k, theta=cfg.theta,
                sigma_v=cfg.sigma_v, v_init=cfg.v_init, y_init=cfg.y_init,
            )
            return HestonDriver(params)
        rho = -1.0 if cfg.rho is None else cfg.rho
        params = BNSParams(
            s0=cfg.s0, r=cfg.r, rho=rho, mu=cfg.mu,
            jump=TemperedStableMeasure(c=cfg.jump_c, lam=cfg.jump_lambda,
                                       alpha=cfg.jump_alpha),
            x_init=cfg.x_init, v_init=cfg.v_init,
            truncation=TruncationPolicy(power=cfg.truncation_power,
                                        u_max=cfg.truncation_umax),
            compensate=cfg.compensate_jumps,
        )
        return BnsDriver(params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _fmt(x) -> str:
    if isinstance(x, float):
        s = f"{x:.12g}"
    else:
        s = str(x)
    if "," in s or '"' in s:
        s = '"' + s.replace('"', '""') + '"'
    return s


def _emit(out: str, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    text = "\n".join(lines) + "\n"
    if out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)


def _map_reps(cfg: RunConfig, worker):
    """Run ``worker(rep)`` for every replication, reduced in fixed order."""
    reps = range(cfg.replications)
    if cfg.threads <= 1 or cfg.replications == 1:
        return [worker(i) for i in reps]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(worker, reps))


def _combined_rows(cfg: RunConfig, per_rep: list[list[pricing.PriceEstimate]]):
    """Average per-strike estimates over replications (fixed order)."""
    n_reps = len(per_rep)
    rows = []
    for i, k in enumerate(cfg.strikes):
        vals = [per_rep[r][i].value for r in range(n_reps)]
        value = sum(vals) / n_reps
        se = math.sqrt(sum(per_rep[r][i].se ** 2 for r in range(n_reps))) / n_reps
        rows.append([k, value, se, n_reps * cfg.n_iters, cfg.seed])
    return rows


def _prepare_grid_run(cfg: RunConfig, T: float):
    _build_driver(cfg)  # validate model parameters before any simulation
    sched = _build_schedule(cfg)
    # Pre-extend so the schedule is strictly read-only during the thread
    # fan-out; the margin covers galloping-search overshoot past the last
    # window's end index.
    sched.ensure(sched.horizon_index(cfg.n_iters, T) + 1024)
    return sched


def cmd_price_asian(cfg: RunConfig) -> None:
    _validate(cfg)
    T = cfg.maturity
    sched = _prepare_grid_run(cfg, T)
    specs = [AsianSpec(K=k, T=T, kind=cfg.kind, r=cfg.r) for k in cfg.strikes]

    def worker(rep: int):
        driver = _build_driver(cfg)
        return pricing.price_asian_grid(
            driver, sched, specs, cfg.n_iters, stream(cfg.seed, rep),
            use_parity=cfg.parity,
        )

    per_rep = _map_reps(cfg, worker)
    rows = _combined_rows(cfg, per_rep)
    _emit(cfg.out, ["strike", "estimate", "std_error", "n", "seed"], rows)


def cmd_price_european(cfg: RunConfig) -> None:
    _validate(cfg)
    T = cfg.maturity
    sched = _prepare_grid_run(cfg, T)
    specs = [AsianSpec(K=k, T=T, kind=cfg.kind, r=cfg.r) for k in cfg.strikes]

    def worker(rep: int):
        driver = _build_driver(cfg)
        return pricing.price_european_grid(
            driver, sched, specs, cfg.n_iters, stream(cfg.seed, rep))

    per_rep = _map_reps(cfg, worker)
    rows = _combined_rows(cfg, per_rep)
    _emit(cfg.out, ["strike", "estimate", "std_error", "n", "seed"], rows)


def cmd_vol_surface(cfg: RunConfig) -> None:
    _validate(cfg)
    maturities = cfg.maturities if cfg.maturities is not None else (cfg.maturity,)
    rows = []
    for ti, T in enumerate(maturities):
        sched = _prepare_grid_run(cfg, T)
        specs = [AsianSpec(K=k, T=T, kind="call", r=cfg.r) for k in cfg.strikes]

        def worker(rep: int, _sched=sched, _specs=specs, _ti=ti):
            driver = _build_driver(cfg)
            return pricing.price_european_grid(
                driver, _sched, _specs, cfg.n_iters,
                stream(cfg.seed, _ti * cfg.replications + rep))

        per_rep = _map_reps(cfg, worker)
        for i, k in enumerate(cfg.strikes):
            price = sum(per_rep[r][i].value for r in range(len(per_rep))) / len(per_rep)
            try:
                iv = pricing.implied_vol(price, cfg.s0, k, T, cfg.r)
                status = "ok"
            except BandViolationError:
                iv = math.nan
                status = "band_violation"
            rows.append([k, T, price, iv, status])
    _emit(cfg.out, ["strike", "maturity", "price", "implied_vol", "status"], rows)


def cmd_stationary_stats(cfg: RunConfig) -> None:
    _validate(cfg)
    sched = _build_schedule(cfg)
    driver = _build_driver(cfg)
    vol_coord = 0 if cfg.model == "heston" else 1
    marg = MarginalAccumulator(dim=driver.dim, bins=cfg.hist_bins,
                               lo=cfg.hist_lo, hi=cfg.hist_hi)
    T = sched.gamma(1)  # marginal-only sweep: keep windows trivial
    res = engine.run(driver, sched, functional=None, T=T, n_iters=cfg.n_iters,
                     rng=stream(cfg.seed, 0), marginal=marg)
    rows = []
    for n, mean, var in res.marginal_checkpoints:
        rows.append(["moment", n, float(mean[vol_coord]), float(var[vol_coord]),
                     "", "", ""])
    st = marg.stats()
    edges = st.bin_edges
    hist = st.histogram[vol_coord]
    rows.append(["histogram", cfg.n_iters, "", "", "-inf", edges[0], hist[0]])
    for b in range(cfg.hist_bins):
        rows.append(["histogram", cfg.n_iters, "", "", edges[b], edges[b + 1], hist[b + 1]])
    rows.append(["histogram", cfg.n_iters, "", "", edges[-1], "+inf", hist[-1]])
    _emit(cfg.out, ["record", "n", "mean", "variance", "bin_lo", "bin_hi", "mass"], rows)


def cmd_check_schedule(cfg: RunConfig) -> None:
    _validate(cfg)
    sched = _build_schedule(cfg)
    try:
        diags = [
            schedule.check_weight_step_condition(sched, cfg.eps, n_max=cfg.scan_max),
            schedule.check_invariance_condition(sched, n_max=min(cfg.scan_max, 10**5)),
            schedule.check_series_condition(
                sched, cfg.series_s, eps=cfg.eps, T=cfg.maturity,
                k_max=min(cfg.scan_max, 10**5)),
        ]
    except schedule.ScheduleError as exc:
        raise ConfigError(str(exc)) from exc
    rows = [[d.name, "pass" if d.passed else "fail", d.summary] for d in diags]
    _emit(cfg.out, ["condition", "verdict", "detail"], rows)


def cmd_oracle(cfg: RunConfig) -> None:
    _validate(cfg)
    if cfg.model != "heston":
        raise ConfigError("the oracle command supports only model=heston")
    driver = _build_driver(cfg)
    rows = []
    for i, k in enumerate(cfg.strikes):
        spec = AsianSpec(K=k, T=cfg.maturity, kind=cfg.kind, r=cfg.r)
        est = oracles.cir_direct_stationary_price(
            driver.params, spec, cfg.oracle_paths, cfg.oracle_fine_step,
            stream(cfg.seed, i))
        rows.append([k, est.value, est.se, est.n_paths, cfg.seed])
    _emit(cfg.out, ["strike", "estimate", "std_error", "n_paths", "seed"], rows)


_COMMANDS = {
    "price-asian": cmd_price_asian,
    "price-european": cmd_price_european,
    "vol-surface": cmd_vol_surface,
    "stationary-stats": cmd_stationary_stats,
    "check-schedule": cmd_check_schedule,
    "oracle": cmd_oracle,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="statvol",
        description="Ergodic Monte Carlo pricing in stationary stochastic "
                    "volatility models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int, help="64-bit RNG seed")
        p.add_argument("--iters", type=int, help="iterations per replication")
        p.add_argument("--out", help="output CSV path ('-' for stdout)")
        p.add_argument("--parity", choices=["on", "off"],
                       help="call-put parity variance reduction")
        p.add_argument("--threads", type=int, help="worker threads")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        if args.iters is not None:
            cfg.n_iters = args.iters
        if args.out is not None:
            cfg.out = args.out
        if args.parity is not None:
            cfg.parity = args.parity == "on"
        if args.threads is not None:
            cfg.threads = args.threads
        _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DriverStepError, SchemeError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    print(f"# wall_time_s={time.perf_counter() - t0:.3f}", file=sys.stderr)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
