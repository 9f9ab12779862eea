"""Experiment driver: single runs, sweeps, verification, fleet dumps.

Configuration is a flat key=value bundle plus two plain-text column
files (arrival profile, load shape); command-line flags override file
values. Every run directory receives a resolved-config capturing all
effective settings, and output files are written atomically.
"""

from __future__ import annotations

import argparse
import os
import sys
from contextlib import contextmanager
from dataclasses import dataclass, field, replace

import numpy as np

from . import defaults, figures, metrics, oracle
from .engine import RunStats, SimConfig, measurement_filter, run_simulation
from .policies import ALL_POLICY_NAMES, Policy, parse_policy
from .powergrid import (
    ChargerSpec,
    LoadShape,
    charger_preset,
    make_grid,
    realized_sdr,
    total_required_energy,
)
from .workload import (
    WorkloadConfig,
    adjusted_departure_fraction,
    arrival_profile_from_weights,
    dump_fleet_csv,
    generate_fleet,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

_CONFIG_DEFAULTS = {
    "days": "15",
    "warmup_days": "4",
    "last_measured_day": "13",
    "arrivals_per_day": "1500",
    "duration_mean_h": "14",
    "duration_std_h": "4",
    "duration_min_h": "6",
    "duration_max_h": "22",
    "one_way_commute_mean_mi": "14.5",
    "commute_cap_mi": "70",
    "extra_daily_mi": "20",
    "emergency_mi": "10",
    "initial_charge_max_mi": "30",
    "battery_capacity_miles": "100",
    "charger": "home-110-15",
    "derate_13a": "false",
    "exact_charger_physics": "false",
    "peak_other_fraction": "0.8",
    "bin_width_min": "30",
    "policies": "all",
    "sdr_grid": ",".join(f"{x:g}" for x in metrics.DEFAULT_SDR_GRID),
    "seeds": "1,2,3",
    "simple": "false",
    "fdfs_slack": "false",
    "trace": "false",
    "arrival_profile": "",
    "load_shape": "",
    "out": "out",
}


@dataclass
class ExperimentConfig:
    raw: dict
    workload: WorkloadConfig = None
    base: metrics.SweepBase = None
    policies: list = field(default_factory=list)
    sdr_grid: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    out_dir: str = "out"
    trace: bool = False
    arrival_weights: list = field(default_factory=list)
    shape_values: list = field(default_factory=list)


def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def read_config_bundle(path) -> dict:
    """Parse a flat key=value file; '#' starts a comment."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {text!r}")
            key, _, value = text.partition("=")
            key = key.strip()
            if key not in _CONFIG_DEFAULTS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value.strip()
    return values


def _flag_overrides(args) -> dict:
    mapping = {
        "days": args.days,
        "arrivals_per_day": args.arrivals_per_day,
        "charger": args.charger,
        "out": args.out,
        "arrival_profile": args.arrival_profile,
        "load_shape": args.load_shape,
    }
    overrides = {k: str(v) for k, v in mapping.items() if v is not None}
    if getattr(args, "policy", None):
        overrides["policies"] = args.policy
    if getattr(args, "policies", None):
        overrides["policies"] = args.policies
    if getattr(args, "sdr", None) is not None:
        overrides["sdr_grid"] = str(args.sdr)
    if getattr(args, "sdr_grid", None):
        overrides["sdr_grid"] = args.sdr_grid
    if getattr(args, "seed", None) is not None:
        overrides["seeds"] = str(args.seed)
    if getattr(args, "seeds", None):
        overrides["seeds"] = args.seeds
    if getattr(args, "derate_13a", False):
        overrides["derate_13a"] = "true"
    if getattr(args, "exact_charger_physics", False):
        overrides["exact_charger_physics"] = "true"
    if getattr(args, "simple", False):
        overrides["simple"] = "true"
    if getattr(args, "fdfs_slack", False):
        overrides["fdfs_slack"] = "true"
    if getattr(args, "trace", False):
        overrides["trace"] = "true"
    return overrides


def resolve_config(args) -> ExperimentConfig:
    raw = dict(_CONFIG_DEFAULTS)
    explicit = set()
    if getattr(args, "config", None):
        from_file = read_config_bundle(args.config)
        raw.update(from_file)
        explicit |= set(from_file)
    overrides = _flag_overrides(args)
    raw.update(overrides)
    explicit |= set(overrides)

    # A shortened horizon scales the measurement window proportionally
    # unless the window was pinned explicitly.
    days = int(raw["days"])
    if days != int(_CONFIG_DEFAULTS["days"]):
        if "warmup_days" not in explicit:
            raw["warmup_days"] = str(min(4, max(1, days * 4 // 15)))
        if "last_measured_day" not in explicit:
            warmup = int(raw["warmup_days"])
            raw["last_measured_day"] = str(max(warmup + 1, min(days - 1, days * 13 // 15)))

    charger = charger_preset(
        raw["charger"],
        derate_13a=_parse_bool(raw["derate_13a"]),
        exact_physics=_parse_bool(raw["exact_charger_physics"]),
    )
    workload = WorkloadConfig(
        seed=0,  # overridden per cell
        days=int(raw["days"]),
        duration_mean_h=float(raw["duration_mean_h"]),
        duration_std_h=float(raw["duration_std_h"]),
        duration_min_h=float(raw["duration_min_h"]),
        duration_max_h=float(raw["duration_max_h"]),
        one_way_commute_mean_mi=float(raw["one_way_commute_mean_mi"]),
        commute_cap_mi=float(raw["commute_cap_mi"]),
        extra_daily_mi=float(raw["extra_daily_mi"]),
        emergency_mi=float(raw["emergency_mi"]),
        initial_charge_max_mi=float(raw["initial_charge_max_mi"]),
        battery_capacity_miles=float(raw["battery_capacity_miles"]),
    )
    if raw["arrival_profile"]:
        weights = defaults.read_column_file(raw["arrival_profile"])
        if len(weights) != 24:
            raise ValueError("arrival profile file must hold 24 hourly weights")
    else:
        weights = defaults.default_hourly_arrival_weights()
    profile = arrival_profile_from_weights(weights, float(raw["arrivals_per_day"]))

    if raw["load_shape"]:
        shape_values = defaults.read_column_file(raw["load_shape"])
    else:
        shape_values = defaults.default_load_shape_values()
    shape = LoadShape.from_values(shape_values)

    simple = _parse_bool(raw["simple"])
    fdfs_slack = _parse_bool(raw["fdfs_slack"])
    names = raw["policies"].strip()
    if names == "all":
        policy_names = list(ALL_POLICY_NAMES)
    else:
        policy_names = [p.strip() for p in names.split(",") if p.strip()]
    if not policy_names:
        raise ValueError("at least one policy required")
    policies = [
        parse_policy(
            name,
            simple=simple and name in ("fcfs", "rr"),
            fdfs_least_slack=fdfs_slack,
        )
        for name in policy_names
    ]

    sdr_grid = [float(x) for x in raw["sdr_grid"].split(",") if x.strip()]
    if not sdr_grid:
        raise ValueError("empty supply-ratio grid")
    if any(x < 1.0 for x in sdr_grid):
        raise ValueError(
            "supply-to-demand ratio below 1 is refused: delays would grow indefinitely"
        )
    seeds = [int(x) for x in raw["seeds"].split(",") if x.strip()]
    if not seeds:
        raise ValueError("at least one seed required")

    base = metrics.SweepBase(
        workload=workload,
        profile=profile,
        shape=shape,
        charger=charger,
        warmup_days=int(raw["warmup_days"]),
        last_measured_day=int(raw["last_measured_day"]),
        peak_other_fraction=float(raw["peak_other_fraction"]),
        bin_width_min=float(raw["bin_width_min"]),
    )
    # Exercise the window constraint early (config error, not runtime).
    SimConfig(
        policy=policies[0], sdr_target=max(sdr_grid), seed=seeds[0],
        days=workload.days, warmup_days=base.warmup_days,
        last_measured_day=base.last_measured_day,
    )
    return ExperimentConfig(
        raw=raw,
        workload=workload,
        base=base,
        policies=policies,
        sdr_grid=sdr_grid,
        seeds=seeds,
        out_dir=raw["out"],
        trace=_parse_bool(raw["trace"]),
        arrival_weights=list(profile.hourly_weights),
        shape_values=list(shape.values),
    )


@contextmanager
def _atomic(path):
    tmp = f"{path}.tmp"
    try:
        yield tmp
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_atomic(path, writer) -> None:
    with _atomic(path) as tmp:
        writer(tmp)


def write_run_context(cfg: ExperimentConfig) -> None:
    """Materialize resolved-config and the two input curves in out_dir."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    profile_path = os.path.join(cfg.out_dir, "arrival-profile.txt")
    shape_path = os.path.join(cfg.out_dir, "load-shape.txt")
    _write_atomic(profile_path, lambda p: defaults.write_column_file(
        p, cfg.arrival_weights, header="hourly arrival weights (normalized)"))
    _write_atomic(shape_path, lambda p: defaults.write_column_file(
        p, cfg.shape_values, header="per-slot non-vehicle load shape (peak 1)"))

    resolved = dict(cfg.raw)
    resolved["arrival_profile"] = profile_path
    resolved["load_shape"] = shape_path

    def write(p):
        with open(p, "w", encoding="utf-8") as fh:
            fh.write("# effective configuration; rerun with --config to reproduce\n")
            for key in sorted(resolved):
                fh.write(f"{key}={resolved[key]}\n")

    _write_atomic(os.path.join(cfg.out_dir, "resolved-config"), write)


def _cell_summary(report: metrics.MetricsReport) -> str:
    adfd = "NA" if report.adfd_minutes is None else f"{report.adfd_minutes:.1f}min"
    seed = "mean" if report.seed is None else report.seed
    return (
        f"{report.policy} sdr={report.sdr:g} seed={seed}: "
        f"n={report.n_measured} fod={report.fod:.4f} adfd={adfd}"
    )


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    if len(cfg.policies) != 1 or len(cfg.sdr_grid) != 1 or len(cfg.seeds) != 1:
        raise ValueError("simulate runs exactly one (policy, sdr, seed) cell; use sweep for grids")
    policy, sdr, seed = cfg.policies[0], cfg.sdr_grid[0], cfg.seeds[0]
    write_run_context(cfg)

    base = cfg.base
    wl = replace(base.workload, seed=seed)
    fleet = generate_fleet(wl, base.profile, base.charger)
    grid = make_grid(base.shape, total_required_energy(fleet, wl.days), sdr, base.peak_other_fraction)
    sim_cfg = SimConfig(
        policy=policy, sdr_target=sdr, seed=seed, days=wl.days,
        warmup_days=base.warmup_days, last_measured_day=base.last_measured_day,
    )
    stats = RunStats()
    trace_path = os.path.join(cfg.out_dir, "trace.csv") if cfg.trace else None
    outcomes = run_simulation(sim_cfg, fleet, grid, base.charger, stats=stats, trace_path=trace_path)
    measured = measurement_filter(outcomes, sim_cfg)
    report = metrics.build_report(
        policy.name, sdr, seed, measured, base.bin_width_min,
        sdr_realized=realized_sdr(grid),
        adjusted_fraction=adjusted_departure_fraction(fleet),
        plugged_at_census=tuple(stats.plugged_at_census),
    )
    table = [report]
    _write_atomic(os.path.join(cfg.out_dir, "fod.csv"), lambda p: metrics.write_fod_csv(table, p))
    _write_atomic(os.path.join(cfg.out_dir, "adfd.csv"), lambda p: metrics.write_adfd_csv(table, p))
    _write_atomic(os.path.join(cfg.out_dir, "outcomes.csv"), lambda p: metrics.write_outcomes_csv(outcomes, p))
    print(_cell_summary(report))
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    write_run_context(cfg)
    table = metrics.sweep(
        cfg.policies, cfg.sdr_grid, cfg.seeds, cfg.base, max_workers=args.workers
    )
    for report in table:
        print(_cell_summary(report))
    out = cfg.out_dir
    _write_atomic(os.path.join(out, "fod.csv"), lambda p: metrics.write_fod_csv(table, p))
    _write_atomic(os.path.join(out, "adfd.csv"), lambda p: metrics.write_adfd_csv(table, p))
    _write_atomic(os.path.join(out, "delaydist.csv"), lambda p: metrics.write_delaydist_csv(table, p))
    if not args.no_figures:
        dist_sdr = 1.2 if any(abs(s - 1.2) < 1e-9 for s in cfg.sdr_grid) else cfg.sdr_grid[0]
        figures.emit_figures(table, out, dist_sdr=dist_sdr)
    return EXIT_OK


def cmd_dump_fleet(cfg: ExperimentConfig, args) -> int:
    write_run_context(cfg)
    wl = replace(cfg.workload, seed=cfg.seeds[0])
    fleet = generate_fleet(wl, cfg.base.profile, cfg.base.charger)
    path = os.path.join(cfg.out_dir, "fleet.csv")
    _write_atomic(path, lambda p: dump_fleet_csv(fleet, p))
    adjusted = adjusted_departure_fraction(fleet)
    print(f"fleet seed={wl.seed}: {len(fleet)} vehicles, adjusted departures {adjusted:.3%} -> {path}")
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, args) -> int:
    write_run_context(cfg)
    out = cfg.out_dir
    if args.audit_trace:
        if len(cfg.policies) != 1:
            raise ValueError("auditing a trace needs exactly one --policy")
        violations = oracle.audit_trace(args.audit_trace, cfg.policies[0])
        _write_atomic(os.path.join(out, "violations.csv"),
                      lambda p: oracle.write_violations_csv(violations, p))
        print(f"audited {args.audit_trace}: {len(violations)} violation(s)")
        return EXIT_OK if not violations else EXIT_RUNTIME

    rng = np.random.default_rng(args.oracle_seed)
    policies = cfg.policies
    dt_kind = parse_policy("minmax-dt").kind
    all_violations = []
    mismatches = []
    # Steady-capacity instances check the largest-delay-first policy
    # against the exhaustive optimum; cycling-capacity instances only
    # audit the per-slot selection rules (the optimum needs hindsight
    # there, so no online policy is held to it).
    for index in range(args.instances):
        inst = oracle.random_tiny_instance(rng, constant_k=True)
        optimum = oracle.brute_force_min_max_delay(inst)
        for policy in policies:
            trace_path = os.path.join(out, "verify-trace.csv")
            outcomes = oracle.run_policy_on_instance(inst, policy, trace_path=trace_path)
            for v in oracle.audit_trace(trace_path, policy):
                all_violations.append(oracle.Violation(
                    v.slot, v.rule, f"instance {index} policy {policy.name}: {v.detail}"))
            if policy.kind is dt_kind:
                achieved = oracle.max_delay(outcomes)
                if achieved != optimum:
                    mismatches.append((index, achieved, optimum))
    n_varying = args.instances // 2
    for index in range(n_varying):
        inst = oracle.random_tiny_instance(rng)
        for policy in policies:
            trace_path = os.path.join(out, "verify-trace.csv")
            oracle.run_policy_on_instance(inst, policy, trace_path=trace_path)
            for v in oracle.audit_trace(trace_path, policy):
                all_violations.append(oracle.Violation(
                    v.slot, v.rule, f"varying instance {index} policy {policy.name}: {v.detail}"))
    _write_atomic(os.path.join(out, "violations.csv"),
                  lambda p: oracle.write_violations_csv(all_violations, p))
    if os.path.exists(os.path.join(out, "verify-trace.csv")):
        os.unlink(os.path.join(out, "verify-trace.csv"))
    print(
        f"verified {args.instances} steady + {n_varying} cycling random instances "
        f"x {len(policies)} policies: {len(all_violations)} audit violation(s), "
        f"{len(mismatches)} optimum mismatch(es)"
    )
    for index, achieved, optimum in mismatches[:10]:
        print(f"  instance {index}: achieved max delay {achieved}, optimum {optimum}")
    return EXIT_OK if not all_violations and not mismatches else EXIT_RUNTIME


def _add_common_flags(sub):
    sub.add_argument("--config", help="key=value bundle; flags override file values")
    sub.add_argument("--policy", help="single policy name")
    sub.add_argument("--policies", help="comma list of policy names, or 'all'")
    sub.add_argument("--sdr", type=float, help="single supply-to-demand ratio")
    sub.add_argument("--sdr-grid", dest="sdr_grid", help="comma list of ratios")
    sub.add_argument("--seed", type=int, help="single workload seed")
    sub.add_argument("--seeds", help="comma list of seeds")
    sub.add_argument("--days", type=int, help="simulated days")
    sub.add_argument("--arrivals-per-day", dest="arrivals_per_day", type=float)
    sub.add_argument("--charger", help="charger preset name")
    sub.add_argument("--derate-13a", dest="derate_13a", action="store_true",
                     help="limit the household circuit to 13 A continuous")
    sub.add_argument("--exact-charger-physics", dest="exact_charger_physics",
                     action="store_true", help="use the unrounded charge rate")
    sub.add_argument("--simple", action="store_true",
                     help="ignore driving-distance info where the policy allows it")
    sub.add_argument("--fdfs-slack", dest="fdfs_slack", action="store_true",
                     help="order not-yet-late vehicles by least slack instead of earliest departure")
    sub.add_argument("--trace", action="store_true", help="write a per-slot trace")
    sub.add_argument("--arrival-profile", dest="arrival_profile",
                     help="24-line hourly arrival weight file")
    sub.add_argument("--load-shape", dest="load_shape",
                     help="288-line per-slot load shape file")
    sub.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridshare",
        description="Slot-based simulator for fair charging of electric vehicles under a constrained grid",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    sim = commands.add_parser("simulate", help="run one (policy, sdr, seed) cell")
    _add_common_flags(sim)
    sim.set_defaults(func=cmd_simulate)

    sw = commands.add_parser("sweep", help="run the full (policy, sdr, seed) grid")
    _add_common_flags(sw)
    sw.add_argument("--workers", type=int, default=None,
                    help=f"process pool size (default: ${metrics.THREADS_ENV_VAR} or CPU count)")
    sw.add_argument("--no-figures", action="store_true", help="skip SVG chart output")
    sw.set_defaults(func=cmd_sweep)

    df = commands.add_parser("dump-fleet", help="write the generated fleet as CSV")
    _add_common_flags(df)
    df.set_defaults(func=cmd_dump_fleet)

    ver = commands.add_parser("verify", help="brute-force and trace-audit verification")
    _add_common_flags(ver)
    ver.add_argument("--instances", type=int, default=500,
                     help="number of random tiny instances")
    ver.add_argument("--oracle-seed", dest="oracle_seed", type=int, default=2024,
                     help="seed for the instance generator")
    ver.add_argument("--audit-trace", dest="audit_trace",
                     help="audit an existing trace file instead of running the campaign")
    ver.set_defaults(func=cmd_verify)
    return parser


def run(argv=None) -> int:
    """Entry point returning a process exit code (0 ok, 2 config, 3 runtime)."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return args.func(cfg, args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - boundary of the process
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
