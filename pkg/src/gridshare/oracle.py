"""Independent verification tools for desk-scale instances.

Two tools: an exhaustive search for the best achievable maximum delay
on tiny instances (never touching the policy code), and an auditor that
replays a per-slot trace and checks the selection rules slot by slot.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Sequence

import numpy as np

from .engine import RunStats, SimConfig, VehicleOutcome, run_simulation
from .policies import Policy, PolicyKind
from .powergrid import ChargerSpec
from .workload import Vehicle

# Rate of one mile per slot makes required_miles equal whole charging
# intervals, the natural unit for hand-checkable instances.
ORACLE_CHARGER = ChargerSpec(volts=120.0, amps=28.0, miles_per_slot=1.0)

MAX_TINY_VEHICLES = 5
MAX_TINY_HORIZON = 30


@dataclass(frozen=True)
class TinyInstance:
    vehicles: tuple[Vehicle, ...]
    k_profile: tuple[int, ...]

    def __post_init__(self):
        if not 1 <= len(self.vehicles) <= MAX_TINY_VEHICLES:
            raise ValueError(f"tiny instances hold 1..{MAX_TINY_VEHICLES} vehicles")
        if max(v.arrival_slot for v in self.vehicles) > MAX_TINY_HORIZON:
            raise ValueError(f"arrivals must fall within {MAX_TINY_HORIZON} slots")
        if not self.k_profile or any(k < 0 for k in self.k_profile):
            raise ValueError("k_profile must be non-empty and non-negative")


def tiny_instance(specs: Sequence[tuple[int, int, int]], k_profile: Sequence[int],
                  topoff_extra: float = 0.0) -> TinyInstance:
    """Build an instance from (arrival, expected_departure, needed_slots) triples."""
    vehicles = tuple(
        Vehicle(
            id=i,
            arrival_slot=arr,
            expected_departure_slot=dep,
            required_miles=float(need),
            current_miles=0.0,
            battery_capacity_miles=float(need) + topoff_extra,
            connected_slots=dep - arr,
        )
        for i, (arr, dep, need) in enumerate(specs)
    )
    return TinyInstance(vehicles=vehicles, k_profile=tuple(int(k) for k in k_profile))


def brute_force_min_max_delay(inst: TinyInstance, branch_budget: int = 10_000_000) -> int:
    """Exact minimum over all on/off schedules of the largest delay.

    Exhaustive search over per-slot charging subsets with memoization on
    (slot, remaining needs). Charging a larger subset never hurts, so
    only maximal subsets are enumerated. Raises if the search would
    exceed the branch budget.
    """
    vehicles = inst.vehicles
    arrivals = [v.arrival_slot for v in vehicles]
    deadlines = [v.expected_departure_slot for v in vehicles]
    needs = tuple(
        math.ceil(max(v.required_miles - v.current_miles, 0.0) / ORACLE_CHARGER.miles_per_slot)
        for v in vehicles
    )
    profile = inst.k_profile
    cycle = len(profile)

    if sum(profile) == 0 and sum(needs) > 0:
        raise ValueError("k_profile provides no capacity")
    # Generous stopping point: even one charger-slot per profile cycle
    # finishes everything within this horizon, so a run past it is a bug.
    cycles_needed = -(-sum(needs) // max(sum(profile), 1))
    t_max = max(deadlines) + cycle * (cycles_needed + 2) + 4

    budget = [branch_budget]

    @lru_cache(maxsize=None)
    def best_from(t: int, remaining: tuple) -> int:
        budget[0] -= 1
        if budget[0] < 0:
            raise RuntimeError("instance too large for exhaustive search")
        if all(r == 0 for r in remaining):
            return 0
        if t > t_max:
            raise RuntimeError("search ran past the feasibility horizon")
        eligible = [i for i in range(len(remaining)) if remaining[i] > 0 and arrivals[i] <= t]
        if not eligible:
            # Nothing plugged and unfinished: jump to the next arrival.
            t_next = min(arrivals[i] for i in range(len(remaining)) if remaining[i] > 0)
            return best_from(t_next, remaining)
        k = profile[t % cycle]
        m = min(k, len(eligible))
        if m == 0:
            return best_from(t + 1, remaining)
        best = None
        for subset in combinations(eligible, m):
            rem = list(remaining)
            finish_delay = 0
            for i in subset:
                rem[i] -= 1
                if rem[i] == 0:
                    finish_delay = max(finish_delay, max(0, (t + 1) - deadlines[i]))
            value = max(finish_delay, best_from(t + 1, tuple(rem)))
            if best is None or value < best:
                best = value
                if best == 0 and finish_delay == 0:
                    # Can't do better than zero future delay.
                    break
        return best

    try:
        return best_from(0, needs)
    finally:
        best_from.cache_clear()


def run_policy_on_instance(
    inst: TinyInstance, policy: Policy, trace_path=None
) -> list[VehicleOutcome]:
    """Drive the real engine over a tiny instance with its capacity profile."""
    cfg = SimConfig(policy=policy, sdr_target=1.0, seed=0, days=3, warmup_days=0, last_measured_day=1)
    return run_simulation(
        cfg, list(inst.vehicles), None, ORACLE_CHARGER,
        k_profile=inst.k_profile, trace_path=trace_path, stats=RunStats(),
    )


def max_delay(outcomes: Sequence[VehicleOutcome]) -> int:
    return max((o.delay_slots for o in outcomes), default=0)


def random_tiny_instance(rng: np.random.Generator, *, constant_k: bool = False) -> TinyInstance:
    """A feasible random instance: mixed arrivals, needs, and K pattern.

    With constant_k the capacity is the same every slot; this is the
    regime in which the largest-delay-first policy provably matches the
    exhaustive optimum. Cycling profiles with zero-capacity slots break
    the policy's charged-every-slot lookahead and are used for rule
    audits only.
    """
    n = int(rng.integers(2, MAX_TINY_VEHICLES + 1))
    specs = []
    for _ in range(n):
        arrival = int(rng.integers(0, 10))
        need = int(rng.integers(0, 7))
        stay = int(rng.integers(1, 15))
        specs.append((arrival, arrival + stay, need))
    if constant_k:
        k_profile = [int(rng.integers(1, 4))]
    else:
        cycle = int(rng.integers(3, 9))
        k_profile = [int(rng.integers(0, 4)) for _ in range(cycle)]
        if sum(k_profile) == 0:
            k_profile[int(rng.integers(0, cycle))] = 1
    topoff_extra = float(rng.choice([0.0, 2.0]))
    return tiny_instance(specs, k_profile, topoff_extra=topoff_extra)


# ---------------------------------------------------------------------------
# Trace auditing


@dataclass(frozen=True)
class Violation:
    slot: int
    rule: str
    detail: str


@dataclass
class _TraceRow:
    vehicle_id: int
    tier: int
    arrival_slot: int
    expected_departure_slot: int
    intervals_needed: int
    delay_if_continuous: int
    selected: bool


_TRACE_FIELDS = [
    "slot", "k", "vehicle_id", "tier", "arrival_slot",
    "expected_departure_slot", "intervals_needed", "delay_if_continuous",
    "selected",
]


def read_trace(path) -> list[tuple[int, int, list[_TraceRow]]]:
    """Parse a trace CSV into (slot, k, rows) groups in slot order."""
    slots: list[tuple[int, int, list[_TraceRow]]] = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _TRACE_FIELDS:
            raise ValueError(f"{path}:1: unexpected trace header {header!r}")
        for lineno, raw in enumerate(reader, start=2):
            try:
                slot, k, vid, tier, arr, dep, need, dt, sel = (int(x) for x in raw)
            except (ValueError, TypeError):
                raise ValueError(f"{path}:{lineno}: malformed trace row {raw!r}") from None
            row = _TraceRow(vid, tier, arr, dep, need, dt, bool(sel))
            if slots and slots[-1][0] == slot:
                if slots[-1][1] != k:
                    raise ValueError(f"{path}:{lineno}: inconsistent K within slot {slot}")
                slots[-1][2].append(row)
            else:
                if slots and slot < slots[-1][0]:
                    raise ValueError(f"{path}:{lineno}: slots out of order")
                slots.append((slot, k, [row]))
    return slots


def _audit_key(policy: Policy, slot: int, row: _TraceRow):
    kind = policy.kind
    if kind is PolicyKind.FCFS or kind is PolicyKind.RR:
        return (row.arrival_slot, row.vehicle_id)
    if kind is PolicyKind.FDFS:
        if not policy.fdfs_least_slack:
            return (row.expected_departure_slot, row.arrival_slot, row.vehicle_id)
        if slot >= row.expected_departure_slot:
            return (0, row.expected_departure_slot, row.arrival_slot, row.vehicle_id)
        slack = (row.expected_departure_slot - slot) - row.intervals_needed
        return (1, slack, row.arrival_slot, row.vehicle_id)
    if kind is PolicyKind.MINMAX_ER:
        return (-row.intervals_needed, row.arrival_slot, row.vehicle_id)
    if kind is PolicyKind.MINMAX_DT:
        return (-row.delay_if_continuous, row.arrival_slot, row.vehicle_id)
    raise AssertionError(kind)


def audit_trace(trace, policy: Policy) -> list[Violation]:
    """Check a per-slot trace against the selection contract.

    Verifies, slot by slot: row self-consistency, work conservation,
    deficit-before-top-off ordering, the policy's top-K key order (with
    tie-breaks) for the sorted policies, list rotation for round robin,
    and the delay-dominance rule for the min-max-delay policy. The list
    reconstruction is done from scratch here; the policy module is never
    consulted.
    """
    if isinstance(trace, (str, bytes)) or hasattr(trace, "__fspath__"):
        trace = read_trace(trace)
    violations: list[Violation] = []
    # Reconstructed list orders for the rotation check.
    list_order = {1: deque(), 2: deque()}
    seen: set[int] = set()

    for slot, k, rows in trace:
        by_id = {r.vehicle_id: r for r in rows}
        if len(by_id) != len(rows):
            violations.append(Violation(slot, "duplicate-row", "vehicle listed twice"))
            continue

        for r in rows:
            implied = r.intervals_needed - (r.expected_departure_slot - slot)
            if r.delay_if_continuous != implied:
                violations.append(Violation(
                    slot, "row-consistency",
                    f"vehicle {r.vehicle_id}: delay column {r.delay_if_continuous} != {implied}",
                ))

        selected = [r for r in rows if r.selected]
        expected_count = min(k, len(rows))
        if len(selected) != expected_count:
            violations.append(Violation(
                slot, "work-conservation",
                f"selected {len(selected)}, expected min({k}, {len(rows)}) = {expected_count}",
            ))

        tier1 = [r for r in rows if r.tier == 1]
        tier2 = [r for r in rows if r.tier == 2]
        if any(r.selected for r in tier2) and not all(r.selected for r in tier1):
            violations.append(Violation(
                slot, "tier-ordering", "top-off vehicle charged while a deficit vehicle waited"))

        if policy.kind is PolicyKind.RR:
            _update_reconstructed_lists(list_order, seen, tier1, tier2)
            expected = _rr_expected(list_order, k)
            actual = [r.vehicle_id for r in selected]
            if set(actual) != set(expected):
                violations.append(Violation(
                    slot, "rr-rotation",
                    f"selected {sorted(actual)}, rotation order expects {sorted(expected)}",
                ))
                # Re-sync so one fault is reported once, not echoed forever.
                _rr_rotate(list_order, set(actual))
            else:
                _rr_rotate(list_order, set(expected))
        else:
            for tier_rows in (tier1, tier2):
                n_sel = sum(1 for r in tier_rows if r.selected)
                if 0 < n_sel < len(tier_rows):
                    ordered = sorted(tier_rows, key=lambda r: _audit_key(policy, slot, r))
                    should = {r.vehicle_id for r in ordered[:n_sel]}
                    actual = {r.vehicle_id for r in tier_rows if r.selected}
                    if should != actual:
                        violations.append(Violation(
                            slot, "key-ordering",
                            f"tier {tier_rows[0].tier}: selected {sorted(actual)}, "
                            f"priority order expects {sorted(should)}",
                        ))
            if policy.kind is PolicyKind.MINMAX_DT:
                unsel = [r for r in tier1 if not r.selected]
                sel = [r for r in tier1 if r.selected]
                if sel and unsel:
                    worst_unselected = max(r.delay_if_continuous for r in unsel)
                    least_selected = min(r.delay_if_continuous for r in sel)
                    if worst_unselected > least_selected:
                        violations.append(Violation(
                            slot, "dt-dominance",
                            f"unselected delay {worst_unselected} exceeds selected {least_selected}",
                        ))
    return violations


def _update_reconstructed_lists(list_order, seen, tier1, tier2):
    """Mirror the documented list maintenance from trace membership diffs."""
    present = {r.vehicle_id: r.tier for r in tier1 + tier2}
    for tier in (1, 2):
        kept = deque()
        movers = []
        for vid in list_order[tier]:
            now = present.get(vid)
            if now is None:
                seen.discard(vid)
            elif now == tier:
                kept.append(vid)
            else:
                movers.append(vid)
        list_order[tier] = kept
        # Crossers join the tail of the other tier (only 1 -> 2 occurs in
        # engine traces; the other direction is tolerated for robustness).
        list_order[2 if tier == 1 else 1].extend(movers)
    for rows in (tier1, tier2):
        for r in sorted(rows, key=lambda r: r.vehicle_id):
            if r.vehicle_id not in seen:
                seen.add(r.vehicle_id)
                list_order[r.tier].append(r.vehicle_id)


def _rr_expected(list_order, k: int) -> list[int]:
    n1 = len(list_order[1])
    k1 = min(k, n1)
    k2 = min(max(k - n1, 0), len(list_order[2]))
    return list(list_order[1])[:k1] + list(list_order[2])[:k2]


def _rr_rotate(list_order, selected_ids) -> None:
    for tier in (1, 2):
        q = list_order[tier]
        chosen = [vid for vid in q if vid in selected_ids]
        for vid in chosen:
            q.remove(vid)
            q.append(vid)


def write_violations_csv(violations: Sequence[Violation], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot", "rule", "detail"])
        for v in violations:
            writer.writerow([v.slot, v.rule, v.detail])
