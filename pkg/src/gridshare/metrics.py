"""Evaluation metrics and the (policy, supply ratio, seed) sweep.

The headline quantities are the fraction of measured vehicles that left
late and the mean lateness of just those vehicles, plus the delay
distribution among them. A sweep runs one simulation per grid cell,
optionally across a process pool, and appends seed-averaged rows.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

from .engine import RunStats, SimConfig, VehicleOutcome, measurement_filter, run_simulation
from .policies import Policy
from .powergrid import ChargerSpec, LoadShape, make_grid, realized_sdr, total_required_energy
from .units import SLOT_MINUTES
from .workload import (
    ArrivalProfile,
    WorkloadConfig,
    adjusted_departure_fraction,
    generate_fleet,
)

DEFAULT_SDR_GRID = (1.00, 1.05, 1.10, 1.15, 1.20, 1.40, 1.60, 1.80, 2.00, 3.00)
DEFAULT_SEEDS = (1, 2, 3)
THREADS_ENV_VAR = "GRIDSHARE_THREADS"


@dataclass(frozen=True)
class MetricsReport:
    """One sweep cell (or a seed-averaged row, seed None)."""

    policy: str
    sdr: float
    seed: int | None
    n_measured: int
    fod: float
    adfd_minutes: float | None
    delay_histogram: tuple  # (lo_min, hi_min, fraction-of-delayed) triples
    delay_cdf: tuple        # (minutes, cumulative fraction) pairs
    sdr_realized: float | None = None
    adjusted_fraction: float | None = None
    plugged_at_census: tuple = ()


def fraction_delayed(outcomes: Sequence[VehicleOutcome]) -> float:
    """Share of vehicles that left after their expected departure."""
    if not outcomes:
        raise ValueError("no outcomes to evaluate")
    return sum(1 for o in outcomes if o.delayed) / len(outcomes)


def average_delay_of_delayed(outcomes: Sequence[VehicleOutcome]) -> float | None:
    """Mean delay in minutes over delayed vehicles; None when none were."""
    delays = [o.delay_slots for o in outcomes if o.delayed]
    if not delays:
        return None
    return SLOT_MINUTES * sum(delays) / len(delays)


def delay_distribution(
    outcomes: Sequence[VehicleOutcome], bin_width_min: float = 30.0
) -> tuple[tuple, tuple]:
    """Histogram and CDF of delay minutes, normalized over delayed vehicles.

    Bins are [i*w, (i+1)*w); the CDF is sampled at bin upper edges and
    ends at 1.
    """
    if bin_width_min <= 0:
        raise ValueError("bin width must be positive")
    delays = [SLOT_MINUTES * o.delay_slots for o in outcomes if o.delayed]
    if not delays:
        raise ValueError("no delayed vehicles")
    n_bins = int(max(delays) // bin_width_min) + 1
    counts = [0] * n_bins
    for d in delays:
        counts[int(d // bin_width_min)] += 1
    total = len(delays)
    histogram = tuple(
        (i * bin_width_min, (i + 1) * bin_width_min, c / total)
        for i, c in enumerate(counts)
    )
    cdf = []
    running = 0.0
    for lo, hi, frac in histogram:
        running += frac
        cdf.append((hi, running))
    return histogram, tuple(cdf)


def tail_fraction(outcomes: Sequence[VehicleOutcome], threshold_min: float) -> float | None:
    """Among delayed vehicles, the share delayed strictly more than the cutoff."""
    delays = [SLOT_MINUTES * o.delay_slots for o in outcomes if o.delayed]
    if not delays:
        return None
    return sum(1 for d in delays if d > threshold_min) / len(delays)


@dataclass(frozen=True)
class SweepBase:
    """Everything a sweep cell needs besides (policy, sdr, seed)."""

    workload: WorkloadConfig
    profile: ArrivalProfile
    shape: LoadShape
    charger: ChargerSpec
    warmup_days: int = 4
    last_measured_day: int = 13
    peak_other_fraction: float = 0.8
    bin_width_min: float = 30.0


def run_cell(base: SweepBase, policy: Policy, sdr: float, seed: int) -> MetricsReport:
    """Generate the seed's fleet, calibrate, simulate, and summarize."""
    wl = replace(base.workload, seed=seed)
    fleet = generate_fleet(wl, base.profile, base.charger)
    tpr = total_required_energy(fleet, wl.days)
    grid = make_grid(base.shape, tpr, sdr, base.peak_other_fraction)
    cfg = SimConfig(
        policy=policy, sdr_target=sdr, seed=seed, days=wl.days,
        warmup_days=base.warmup_days, last_measured_day=base.last_measured_day,
    )
    stats = RunStats()
    outcomes = run_simulation(cfg, fleet, grid, base.charger, stats=stats)
    measured = measurement_filter(outcomes, cfg)
    return build_report(
        policy.name, sdr, seed, measured, base.bin_width_min,
        sdr_realized=realized_sdr(grid),
        adjusted_fraction=adjusted_departure_fraction(fleet),
        plugged_at_census=tuple(stats.plugged_at_census),
    )


def build_report(
    policy_name: str,
    sdr: float,
    seed: int | None,
    measured: Sequence[VehicleOutcome],
    bin_width_min: float = 30.0,
    **diagnostics,
) -> MetricsReport:
    fod = fraction_delayed(measured)
    adfd = average_delay_of_delayed(measured)
    if any(o.delayed for o in measured):
        histogram, cdf = delay_distribution(measured, bin_width_min)
    else:
        histogram, cdf = (), ()
    return MetricsReport(
        policy=policy_name, sdr=sdr, seed=seed, n_measured=len(measured),
        fod=fod, adfd_minutes=adfd, delay_histogram=histogram, delay_cdf=cdf,
        **diagnostics,
    )


def _run_cell_entry(args):
    base, policy, sdr, seed = args
    try:
        return run_cell(base, policy, sdr, seed)
    except Exception as exc:
        raise RuntimeError(
            f"sweep cell policy={policy.name} sdr={sdr} seed={seed} failed: {exc}"
        ) from exc


def resolve_workers(max_workers: int | None = None) -> int:
    if max_workers is None:
        env = os.environ.get(THREADS_ENV_VAR)
        if env is not None:
            max_workers = int(env)
        else:
            max_workers = os.cpu_count() or 1
    return max(1, max_workers)


def sweep(
    policies: Sequence[Policy],
    sdr_grid: Sequence[float] = DEFAULT_SDR_GRID,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    base: SweepBase | None = None,
    max_workers: int | None = None,
) -> list[MetricsReport]:
    """One report per (policy, sdr, seed) plus a seed-averaged row per curve.

    Cells run independently (optionally across processes); the output
    order is canonical regardless of completion order: policies in the
    given order, ratios ascending, seeds ascending, averaged row last.
    """
    if base is None:
        raise ValueError("sweep needs a base configuration")
    if not policies:
        raise ValueError("at least one policy required")
    if any(s < 1.0 for s in sdr_grid):
        raise ValueError("supply-to-demand ratios below 1 are refused: delays would grow indefinitely")
    sdr_grid = sorted(sdr_grid)
    seeds = sorted(seeds)
    cells = [(base, p, sdr, seed) for p in policies for sdr in sdr_grid for seed in seeds]

    workers = min(resolve_workers(max_workers), len(cells))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell_entry, cells, chunksize=1))
    else:
        results = [_run_cell_entry(c) for c in cells]

    by_cell = {(r.policy, r.sdr, r.seed): r for r in results}
    table: list[MetricsReport] = []
    for p in policies:
        for sdr in sdr_grid:
            group = [by_cell[(p.name, sdr, seed)] for seed in seeds]
            table.extend(group)
            table.append(average_reports(group))
    return table


def average_reports(group: Sequence[MetricsReport]) -> MetricsReport:
    """Seed-averaged row: unweighted means across the per-seed reports."""
    if not group:
        raise ValueError("nothing to average")
    fod = sum(r.fod for r in group) / len(group)
    adfds = [r.adfd_minutes for r in group if r.adfd_minutes is not None]
    adfd = sum(adfds) / len(adfds) if adfds else None
    histogram, cdf = _average_distributions(group)
    realized = [r.sdr_realized for r in group if r.sdr_realized is not None]
    adjusted = [r.adjusted_fraction for r in group if r.adjusted_fraction is not None]
    return MetricsReport(
        policy=group[0].policy, sdr=group[0].sdr, seed=None,
        n_measured=sum(r.n_measured for r in group),
        fod=fod, adfd_minutes=adfd,
        delay_histogram=histogram, delay_cdf=cdf,
        sdr_realized=sum(realized) / len(realized) if realized else None,
        adjusted_fraction=sum(adjusted) / len(adjusted) if adjusted else None,
    )


def _average_distributions(group):
    with_delays = [r for r in group if r.delay_histogram]
    if not with_delays:
        return (), ()
    width = with_delays[0].delay_histogram[0][1] - with_delays[0].delay_histogram[0][0]
    n_bins = max(len(r.delay_histogram) for r in with_delays)
    sums = [0.0] * n_bins
    for r in with_delays:
        for i, (_, _, frac) in enumerate(r.delay_histogram):
            sums[i] += frac
    histogram = tuple(
        (i * width, (i + 1) * width, s / len(with_delays)) for i, s in enumerate(sums)
    )
    cdf = []
    running = 0.0
    for lo, hi, frac in histogram:
        running += frac
        cdf.append((hi, running))
    return histogram, tuple(cdf)


# ---------------------------------------------------------------------------
# CSV output contracts


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _seed_label(seed: int | None) -> str:
    return "mean" if seed is None else str(seed)


def write_fod_csv(reports: Sequence[MetricsReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "sdr", "seed", "n", "fod"])
        for r in reports:
            writer.writerow([r.policy, _fmt(r.sdr), _seed_label(r.seed), r.n_measured, _fmt(r.fod)])


def write_adfd_csv(reports: Sequence[MetricsReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "sdr", "seed", "n", "adfd_minutes"])
        for r in reports:
            value = "NA" if r.adfd_minutes is None else _fmt(r.adfd_minutes)
            writer.writerow([r.policy, _fmt(r.sdr), _seed_label(r.seed), r.n_measured, value])


def write_delaydist_csv(reports: Sequence[MetricsReport], path) -> None:
    """Seed-averaged delay histograms, one row per (curve, bin)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "sdr", "bin_lo_min", "bin_hi_min", "fraction"])
        for r in reports:
            if r.seed is not None:
                continue
            for lo, hi, frac in r.delay_histogram:
                writer.writerow([r.policy, _fmt(r.sdr), _fmt(lo), _fmt(hi), _fmt(frac)])


def write_outcomes_csv(outcomes: Sequence[VehicleOutcome], path) -> None:
    """Raw per-vehicle results, sufficient to recompute every metric."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "id", "arrival_slot", "expected_departure_slot", "satisfied_slot",
            "actual_departure_slot", "delay_slots", "delayed", "measured",
        ])
        for o in outcomes:
            writer.writerow([
                o.id, o.arrival_slot, o.expected_departure_slot, o.satisfied_slot,
                o.actual_departure_slot, o.delay_slots, int(o.delayed), int(o.measured),
            ])
