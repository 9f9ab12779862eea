"""The five selection disciplines behind one interface.

Every policy serves the deficit list (vehicles short of their required
charge) before the top-off list (at or above required, below full).
Within a tier the order is policy-specific; surplus switches always go
to top-off under the same key so the comparison isolates the deficit
tier. Ties break by arrival slot, then id.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Mapping

if TYPE_CHECKING:
    from .powergrid import ChargerSpec
    from .workload import Vehicle


class PolicyKind(Enum):
    FCFS = "fcfs"
    FDFS = "fdfs"
    RR = "rr"
    MINMAX_ER = "minmax-er"
    MINMAX_DT = "minmax-dt"


# Kinds whose priority key depends on the charge deficit, so the simple
# (no driving-distance information) variant makes no sense for them.
_DISTANCE_REQUIRED = frozenset({PolicyKind.FDFS, PolicyKind.MINMAX_ER, PolicyKind.MINMAX_DT})


@dataclass(frozen=True)
class Policy:
    kind: PolicyKind
    use_distance_info: bool = True
    # Alternative reading of the FDFS tie rule for not-yet-late vehicles:
    # least slack instead of earliest expected departure.
    fdfs_least_slack: bool = False

    def __post_init__(self):
        if not self.use_distance_info and self.kind in _DISTANCE_REQUIRED:
            raise ValueError(f"{self.kind.value} requires driving-distance information")

    @property
    def name(self) -> str:
        suffix = "" if self.use_distance_info else "-simple"
        return self.kind.value + suffix


def parse_policy(name: str, *, simple: bool = False, fdfs_least_slack: bool = False) -> Policy:
    """Build a policy from its CLI name."""
    try:
        kind = PolicyKind(name)
    except ValueError:
        known = ", ".join(k.value for k in PolicyKind)
        raise ValueError(f"unknown policy {name!r} (choose from {known})") from None
    return Policy(kind=kind, use_distance_info=not simple, fdfs_least_slack=fdfs_least_slack)


ALL_POLICY_NAMES = tuple(k.value for k in PolicyKind)


@dataclass
class PolicyState:
    """Rotating lists plus tie-break data, owned by a single run.

    deficit and topoff hold vehicle ids in list order (head = next in
    line for the rotation policies); membership mirrors their union.
    """

    use_distance_info: bool = True
    rate_miles_per_slot: float = 0.5
    deficit: deque = field(default_factory=deque)
    topoff: deque = field(default_factory=deque)
    members: set = field(default_factory=set)
    arrival_order: dict = field(default_factory=dict)


def new_policy_state(policy: Policy, charger: "ChargerSpec") -> PolicyState:
    return PolicyState(
        use_distance_info=policy.use_distance_info,
        rate_miles_per_slot=charger.miles_per_slot,
    )


def intervals_for_deficit(required_miles: float, current_miles: float, rate_miles_per_slot: float) -> int:
    """Whole charging slots needed to close a charge deficit (0 if none)."""
    deficit = required_miles - current_miles
    if deficit <= 0.0:
        return 0
    return math.ceil(deficit / rate_miles_per_slot)


def charge_intervals_required(vehicle: "Vehicle", charger: "ChargerSpec") -> int:
    """Slots of charging this vehicle still needs before it can leave."""
    return intervals_for_deficit(vehicle.required_miles, vehicle.current_miles, charger.miles_per_slot)


def delay_if_continuous(vehicle: "Vehicle", t: int, charger: "ChargerSpec") -> int:
    """Departure delay in slots if charged every remaining slot.

    Positive values are unavoidable delay already locked in; the
    magnitude of a negative value is how many slots of denial the
    vehicle can absorb before becoming late.
    """
    needed = charge_intervals_required(vehicle, charger)
    return needed - (vehicle.expected_departure_slot - t)


def _as_map(plugged) -> Mapping[int, "Vehicle"]:
    if isinstance(plugged, Mapping):
        return plugged
    return {v.id: v for v in plugged}


def update_membership(state: PolicyState, plugged) -> PolicyState:
    """Refresh list membership from the plugged fleet, preserving order.

    Departed or fully charged vehicles drop out; deficit vehicles that
    crossed their required charge move to the tail of the top-off list
    (in deficit-list order); new arrivals join the tail of their tier in
    plugged order. Without distance information there is no top-off
    tier: every not-full vehicle stays in the single deficit list.
    """
    plugged_map = _as_map(plugged)
    informed = state.use_distance_info

    new_deficit = deque()
    movers = []
    for vid in state.deficit:
        v = plugged_map.get(vid)
        if v is None or v.current_miles >= v.battery_capacity_miles:
            state.members.discard(vid)
            state.arrival_order.pop(vid, None)
            continue
        if informed and v.current_miles >= v.required_miles:
            movers.append(vid)
        else:
            new_deficit.append(vid)

    new_topoff = deque()
    for vid in state.topoff:
        v = plugged_map.get(vid)
        if v is None or v.current_miles >= v.battery_capacity_miles:
            state.members.discard(vid)
            state.arrival_order.pop(vid, None)
            continue
        new_topoff.append(vid)
    new_topoff.extend(movers)

    for vid, v in plugged_map.items():
        if vid in state.members:
            continue
        if v.current_miles >= v.battery_capacity_miles:
            continue
        state.members.add(vid)
        state.arrival_order[vid] = v.arrival_slot
        if informed and v.current_miles >= v.required_miles:
            new_topoff.append(vid)
        else:
            new_deficit.append(vid)

    state.deficit = new_deficit
    state.topoff = new_topoff
    return state


def _priority_key(policy: Policy, t: int, rate: float):
    """Smaller key = served earlier. Keys fold in the tie-break."""
    kind = policy.kind
    if kind is PolicyKind.FCFS:
        def key(v):
            return (v.arrival_slot, v.id)
    elif kind is PolicyKind.FDFS and not policy.fdfs_least_slack:
        # Late vehicles first by how late they are; descending lateness
        # equals ascending expected departure, which also orders the
        # not-yet-late by earliest departure, so one key covers both.
        def key(v):
            return (v.expected_departure_slot, v.arrival_slot, v.id)
    elif kind is PolicyKind.FDFS:
        def key(v):
            t_l = v.expected_departure_slot
            if t >= t_l:
                return (0, t_l, v.arrival_slot, v.id)
            needed = intervals_for_deficit(v.required_miles, v.current_miles, rate)
            return (1, (t_l - t) - needed, v.arrival_slot, v.id)
    elif kind is PolicyKind.MINMAX_ER:
        def key(v):
            needed = intervals_for_deficit(v.required_miles, v.current_miles, rate)
            return (-needed, v.arrival_slot, v.id)
    elif kind is PolicyKind.MINMAX_DT:
        # Descending delay-if-charged-continuously; at a fixed slot that
        # is ascending (departure - slots still needed).
        def key(v):
            needed = intervals_for_deficit(v.required_miles, v.current_miles, rate)
            return (v.expected_departure_slot - needed, v.arrival_slot, v.id)
    else:  # pragma: no cover
        raise AssertionError(kind)
    return key


def _take_top(ids: Iterable[int], k: int, plugged_map, key) -> list[int]:
    return heapq.nsmallest(k, ids, key=lambda vid: key(plugged_map[vid]))


def _rotate(queue: deque, k: int) -> list[int]:
    picked = []
    for _ in range(k):
        vid = queue.popleft()
        queue.append(vid)
        picked.append(vid)
    return picked


def select(policy: Policy, state: PolicyState, t: int, K: int, plugged) -> list[int]:
    """Ids of the vehicles switched on this slot, highest priority first.

    Always returns min(K, eligible) ids, deficit tier before top-off.
    The rotation policy moves what it picks to the bottom of its list;
    every other policy leaves the state untouched.
    """
    if K < 0:
        raise ValueError("negative capacity")
    n1 = len(state.deficit)
    n2 = len(state.topoff)
    take = min(K, n1 + n2)
    if take == 0:
        return []
    if take == n1 + n2 and policy.kind is not PolicyKind.RR:
        return list(state.deficit) + list(state.topoff)

    k1 = min(take, n1)
    k2 = take - k1
    if policy.kind is PolicyKind.RR:
        return _rotate(state.deficit, k1) + _rotate(state.topoff, k2)

    plugged_map = _as_map(plugged)
    key = _priority_key(policy, t, state.rate_miles_per_slot)
    selected = (
        list(state.deficit) if k1 == n1 else _take_top(state.deficit, k1, plugged_map, key)
    )
    if k2:
        selected += (
            list(state.topoff) if k2 == n2 else _take_top(state.topoff, k2, plugged_map, key)
        )
    return selected
