"""Command-line front end: sweep experiments to CSV, one-shot allocations,
rate-function evaluation and the distortion floor.

Subcommands:
  run    -- execute an experiment config and write a CSV artifact
  alloc  -- solve one snapshot file and print the allocation table
  rate   -- evaluate the large-deviation rate function (and Chernoff bound)
  dinf   -- distortion floor of the large-network limit

Exit codes: 0 success, 2 config/usage error, 3 infeasible target,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .allocation import (
    CapVector,
    l2_min_power_allocation,
    max_performance_allocation,
    max_performance_with_caps,
    min_power_allocation,
)
from .analysis import (
    CappedPolicy,
    EqualPolicy,
    OptimalPolicy,
    active_fraction,
    average_distortion,
    average_min_power,
    chernoff_bound,
    d_infinity,
    outage_probability,
    rate_function_exponential,
    rate_function_numeric,
    RateFunctionQuery,
)
from .config import ConfigError, ExperimentConfig, config_hash, load_config, load_model_only
from .errors import FadeFusionError, InfeasibleTarget, InternalConsistencyError
from .model import Snapshot, blue_mse
from .units import parse_power, watts_to_dbm

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_INTERNAL = 4


class _SweepInfeasible(FadeFusionError):
    """Every trial at every point of a min-power sweep was infeasible."""


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.12g}"


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _policy_object(name: str, cap_scale: float):
    return {
        "equal": EqualPolicy(),
        "optimal": OptimalPolicy(),
        "capped": CappedPolicy(cap_scale),
    }[name]


def _run_outage(cfg: ExperimentConfig):
    policy = _policy_object(cfg.policy, cfg.cap_scale)
    columns = ["p_tot_w", "p_tot_dbm"]
    for k in cfg.k_values:
        columns += [f"outage_k{k}", f"half_width_k{k}"]
    rows = []
    for p_tot in cfg.sweep.values():
        row = [p_tot, watts_to_dbm(p_tot)]
        for k in cfg.k_values:
            est = outage_probability(
                cfg.model, k, policy, cfg.d0, p_tot, cfg.trials, cfg.seed, workers=cfg.workers
            )
            row += [est.probability, est.half_width_95]
        rows.append(row)
    return columns, rows


def _run_distortion(cfg: ExperimentConfig):
    policy = _policy_object(cfg.policy, cfg.cap_scale)
    columns = ["p_tot_w", "p_tot_dbm"]
    for k in cfg.k_values:
        columns += [f"avg_mse_k{k}", f"excluded_k{k}"]
    rows = []
    for p_tot in cfg.sweep.values():
        row = [p_tot, watts_to_dbm(p_tot)]
        for k in cfg.k_values:
            avg = average_distortion(
                cfg.model, k, policy, p_tot, cfg.trials, cfg.seed, workers=cfg.workers
            )
            row += [avg.mean, avg.excluded]
        rows.append(row)
    return columns, rows


def _run_outage_compare(cfg: ExperimentConfig):
    columns = ["p_tot_w", "p_tot_dbm"]
    for name in cfg.policies:
        columns += [f"outage_{name}", f"half_width_{name}"]
    rows = []
    for p_tot in cfg.sweep.values():
        row = [p_tot, watts_to_dbm(p_tot)]
        for name in cfg.policies:
            est = outage_probability(
                cfg.model,
                cfg.k,
                _policy_object(name, cfg.cap_scale),
                cfg.d0,
                p_tot,
                cfg.trials,
                cfg.seed,
                workers=cfg.workers,
            )
            row += [est.probability, est.half_width_95]
        rows.append(row)
    return columns, rows


def _run_active_fraction(cfg: ExperimentConfig):
    columns = ["p_tot_w", "p_tot_dbm", "active_fraction"]
    rows = []
    for p_tot in cfg.sweep.values():
        fraction = active_fraction(
            cfg.model, cfg.k, p_tot, cfg.trials, cfg.seed, workers=cfg.workers
        )
        rows.append([p_tot, watts_to_dbm(p_tot), fraction])
    return columns, rows


def _run_min_power(cfg: ExperimentConfig):
    columns = [
        "d0",
        "mean_power_optimal_w",
        "mean_power_equal_w",
        "equal_over_optimal_ratio",
        "infeasible_trials",
    ]
    rows = []
    any_feasible = False
    for d0 in cfg.sweep.values():
        summary = average_min_power(
            cfg.model, cfg.k, d0, cfg.trials, cfg.seed, workers=cfg.workers
        )
        feasible = summary.infeasible < summary.trials
        any_feasible = any_feasible or feasible
        ratio = summary.mean_equal_w / summary.mean_optimal_w if feasible else math.nan
        rows.append(
            [d0, summary.mean_optimal_w, summary.mean_equal_w, ratio, summary.infeasible]
        )
    if not any_feasible:
        raise _SweepInfeasible(
            "every trial at every sweep point was infeasible; "
            "raise d0 above the distortion floor"
        )
    return columns, rows


_SCENARIOS = {
    "outage": _run_outage,
    "distortion": _run_distortion,
    "outage-compare": _run_outage_compare,
    "active-fraction": _run_active_fraction,
    "min-power": _run_min_power,
}


def _write_csv(cfg: ExperimentConfig, columns, rows) -> None:
    lines = [
        "# fadefusion-csv v1",
        f"# scenario={cfg.scenario}",
        f"# seed={cfg.seed}",
        f"# trials={cfg.trials}",
        f"# config_hash={config_hash(cfg)}",
        ",".join(columns),
    ]
    lines += [",".join(_fmt(value) for value in row) for row in rows]
    with open(cfg.output, "w", newline="") as handle:
        handle.write("\n".join(lines) + "\n")


def _cmd_run(args) -> int:
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set needs section.key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    cfg = load_config(
        args.config,
        overrides=overrides,
        seed=args.seed,
        trials=args.trials,
        output=args.output,
        workers=args.workers,
    )
    started = time.perf_counter()
    columns, rows = _SCENARIOS[cfg.scenario](cfg)
    _write_csv(cfg, columns, rows)
    elapsed = time.perf_counter() - started
    print(
        f"scenario={cfg.scenario} seed={cfg.seed} trials={cfg.trials} "
        f"points={len(rows)} wall_time={elapsed:.2f}s output={cfg.output}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# alloc
# ---------------------------------------------------------------------------


def read_snapshot_file(path: str) -> Snapshot:
    """Parse the plain-text snapshot format: a sigma_theta_sq header line,
    then one 'gamma s' pair per line ('noiseless' or 'inf' marks gamma)."""
    sigma_theta_sq = None
    gamma, s = [], []
    try:
        with open(path) as handle:
            for lineno, raw in enumerate(handle, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" in line:
                    key, _, value = line.partition("=")
                    if key.strip() != "sigma_theta_sq":
                        raise ConfigError(f"{path}:{lineno}: unknown header {key.strip()!r}")
                    sigma_theta_sq = float(value)
                    continue
                fields = line.split()
                if len(fields) != 2:
                    raise ConfigError(f"{path}:{lineno}: expected 'gamma s'")
                gamma.append(
                    math.inf if fields[0].lower() in ("noiseless", "inf") else float(fields[0])
                )
                s.append(float(fields[1]))
    except OSError as exc:
        raise ConfigError(f"cannot read snapshot file: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"bad number in snapshot file {path}: {exc}") from exc
    if sigma_theta_sq is None:
        raise ConfigError(f"{path}: missing 'sigma_theta_sq = ...' header")
    if not gamma:
        raise ConfigError(f"{path}: no sensors")
    try:
        return Snapshot.from_arrays(sigma_theta_sq, gamma, s)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_caps(raw: Optional[str], k: int) -> Optional[CapVector]:
    if raw is None:
        return None
    values = [math.inf if v.strip().lower() == "inf" else parse_power(v) for v in raw.split(",")]
    if len(values) == 1:
        values = values * k
    if len(values) != k:
        raise ConfigError(f"--caps needs 1 or {k} values, got {len(values)}")
    return CapVector(tuple(values))


def _print_allocation(snapshot, allocation, diagnostics, extras, machine: bool) -> None:
    powers = allocation.transmit_powers(snapshot)
    if machine:
        print(f"k={snapshot.k}")
        for key, value in extras:
            print(f"{key}={_fmt(value)}")
        if diagnostics is not None:
            print(f"active_count={diagnostics.active_count}")
            print(f"threshold={_fmt(diagnostics.threshold_constant)}")
            print(f"dual={_fmt(diagnostics.dual_value)}")
        for i in range(snapshot.k):
            print(
                f"sensor_{i + 1}: alpha_prime={_fmt(allocation.alpha_prime[i])} "
                f"transmit_w={_fmt(powers[i])} active={int(allocation.alpha_prime[i] > 0)}"
            )
        return
    print(f"{'sensor':>6}  {'gamma':>12}  {'s_per_w':>12}  {'alpha_prime':>14}  "
          f"{'transmit_w':>14}  active")
    for i, site in enumerate(snapshot.sensors):
        gamma_txt = "noiseless" if math.isinf(site.gamma) else _fmt(site.gamma)
        print(
            f"{i + 1:>6}  {gamma_txt:>12}  {_fmt(site.s):>12}  "
            f"{_fmt(allocation.alpha_prime[i]):>14}  {_fmt(powers[i]):>14}  "
            f"{'yes' if allocation.alpha_prime[i] > 0 else 'no'}"
        )
    summary = "  ".join(f"{key}={_fmt(value)}" for key, value in extras)
    if diagnostics is not None:
        summary += (
            f"  active_count={diagnostics.active_count}"
            f"  threshold={_fmt(diagnostics.threshold_constant)}"
            f"  dual={_fmt(diagnostics.dual_value)}"
        )
    print(summary)


def _cmd_alloc(args) -> int:
    snapshot = read_snapshot_file(args.snapshot)
    caps = _parse_caps(args.caps, snapshot.k)
    if args.budget is not None:
        if args.l2:
            raise ConfigError("--l2 applies to --target solves only")
        budget = parse_power(args.budget)
        if caps is None:
            allocation, diagnostics = max_performance_allocation(snapshot, budget)
        else:
            allocation, diagnostics = max_performance_with_caps(snapshot, budget, caps)
    else:
        if caps is not None:
            raise ConfigError("--caps applies to --budget solves only")
        target = float(args.target)
        if args.l2:
            allocation, diagnostics = l2_min_power_allocation(snapshot, target), None
        else:
            allocation, diagnostics = min_power_allocation(snapshot, target)
    extras = [("total_power_w", allocation.total_power(snapshot))]
    try:
        extras.append(("mse", blue_mse(snapshot, allocation)))
    except FadeFusionError:
        extras.append(("mse", math.inf))
    _print_allocation(snapshot, allocation, diagnostics, extras, args.machine)
    return EXIT_OK


# ---------------------------------------------------------------------------
# rate / dinf
# ---------------------------------------------------------------------------


def _cmd_rate(args) -> int:
    if (args.mean_b is None) == (args.samples is None):
        raise ConfigError("rate needs exactly one of --mean-b or --samples")
    if args.samples is not None:
        try:
            samples = np.loadtxt(args.samples, ndmin=1)
        except OSError as exc:
            raise ConfigError(f"cannot read samples: {exc}") from exc
        query = RateFunctionQuery(a=args.a, samples=samples)
    else:
        query = RateFunctionQuery(a=args.a, mean_b=args.mean_b)
        print(f"rate_closed={_fmt(rate_function_exponential(args.a, args.mean_b))}")
    value, theta_star = rate_function_numeric(query, full_output=True)
    print(f"rate_numeric={_fmt(value)}")
    print(f"theta_star={_fmt(theta_star)}")
    if args.k is not None:
        print(f"chernoff_bound_k{args.k}={_fmt(chernoff_bound(args.k, value))}")
    return EXIT_OK


def _cmd_dinf(args) -> int:
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set needs section.key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    model = load_model_only(args.config, overrides)
    p_tot = parse_power(args.p_tot)
    print(f"d_infinity={_fmt(d_infinity(model, p_tot, k=args.k))}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fadefusion",
        description="Fused-estimation outage experiments and power allocation tools",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config and write CSV")
    run.add_argument("--config", required=True, help="experiment file (key = value sections)")
    run.add_argument("--seed", type=int, default=None, help="override the run seed")
    run.add_argument("--trials", type=int, default=None, help="override the trial count")
    run.add_argument("--output", default=None, help="override the CSV path")
    run.add_argument("--workers", type=int, default=None, help="worker process count")
    run.add_argument(
        "--set", action="append", metavar="SECTION.KEY=VALUE", help="override any config value"
    )
    run.set_defaults(func=_cmd_run)

    alloc = sub.add_parser("alloc", help="solve one snapshot file and print the allocation")
    alloc.add_argument("snapshot", help="snapshot file: sigma_theta_sq header, 'gamma s' lines")
    group = alloc.add_mutually_exclusive_group(required=True)
    group.add_argument("--budget", help="sum transmit power (watts or dBm)")
    group.add_argument("--target", type=float, help="distortion target")
    alloc.add_argument("--caps", help="per-sensor transmit caps: one value or K comma-separated")
    alloc.add_argument("--l2", action="store_true", help="minimize the sum of squared powers")
    alloc.add_argument("--machine", action="store_true", help="key=value output for scripting")
    alloc.set_defaults(func=_cmd_alloc)

    rate = sub.add_parser("rate", help="evaluate the large-deviation rate function")
    rate.add_argument("--a", type=float, required=True, help="tail point of the sample mean")
    rate.add_argument("--mean-b", type=float, default=None, help="exponential distribution mean")
    rate.add_argument("--samples", default=None, help="file with one sample per line")
    rate.add_argument("--k", type=int, default=None, help="also print the K-sensor Chernoff bound")
    rate.set_defaults(func=_cmd_rate)

    dinf = sub.add_parser("dinf", help="distortion floor of the large-network limit")
    dinf.add_argument("--p-tot", required=True, help="total power (watts or dBm)")
    dinf.add_argument("--config", default=None, help="experiment file supplying the model")
    dinf.add_argument(
        "--set", action="append", metavar="SECTION.KEY=VALUE", help="override any config value"
    )
    dinf.add_argument("--k", type=int, default=1, help="sensor positions to average the merit over")
    dinf.set_defaults(func=_cmd_dinf)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleTarget as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        print(f"feasibility_floor={_fmt(exc.floor)}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except _SweepInfeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except InternalConsistencyError as exc:
        print(f"internal consistency failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
