import pytest

from gridshare.powergrid import ChargerSpec, LoadShape, charger_preset
from gridshare.workload import Vehicle


def make_test_vehicle(vid, arrival, departure, required, current=0.0, capacity=None,
                      measured=False):
    """Hand-built session for policy/engine tests (1 mile = 1 slot at unit rate)."""
    return Vehicle(
        id=vid,
        arrival_slot=arrival,
        expected_departure_slot=departure,
        required_miles=float(required),
        current_miles=float(current),
        battery_capacity_miles=float(capacity if capacity is not None else max(required, current)),
        connected_slots=departure - arrival,
        measured=measured,
    )


@pytest.fixture
def unit_charger():
    """One mile of range per slot: interval counts equal miles."""
    return ChargerSpec(volts=120.0, amps=28.0, miles_per_slot=1.0)


@pytest.fixture
def home_charger():
    return charger_preset("home-110-15")


@pytest.fixture
def flat_shape():
    return LoadShape.from_values([1.0] * 288)
