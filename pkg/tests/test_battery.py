"""Battery step arithmetic and state-of-charge safety."""

import pytest
from hypothesis import given, settings, strategies as st

from greendc.battery import Battery, BatteryCommand, battery_step, with_soc
from greendc.simtime import HOUR_MS


def test_max_charge_power_scales_with_capacity():
    # 100 kWh at the default 3 kW/kWh charges at 300 kW
    assert Battery(capacity_kwh=100.0).max_charge_kw == 300.0


def test_full_battery_charges_nothing():
    b = Battery(capacity_kwh=10.0, soc_kwh=10.0)
    grid, soc = battery_step(b, BatteryCommand.CHARGE, 5000.0, HOUR_MS)
    assert grid == 5000.0
    assert soc == 10.0


def test_discharge_energy_balance_hand_check():
    # soc 10 kWh, demand 5 kW over 1 h: grid 0, soc 5 kWh
    b = Battery(capacity_kwh=20.0, soc_kwh=10.0)
    grid, soc = battery_step(b, BatteryCommand.DISCHARGE, 5000.0, HOUR_MS)
    assert grid == 0.0
    assert soc == pytest.approx(5.0)


def test_charge_is_headroom_limited():
    # 1 kWh of headroom over 1 h cannot draw more than 1 kW extra
    b = Battery(capacity_kwh=10.0, soc_kwh=9.0)
    grid, soc = battery_step(b, BatteryCommand.CHARGE, 0.0, HOUR_MS)
    assert grid == pytest.approx(1000.0)
    assert soc == pytest.approx(10.0)


def test_discharge_is_demand_limited():
    b = Battery(capacity_kwh=100.0, soc_kwh=100.0)
    grid, soc = battery_step(b, BatteryCommand.DISCHARGE, 2000.0, HOUR_MS)
    assert grid == 0.0
    assert soc == pytest.approx(98.0)


def test_discharge_cap_override():
    b = Battery(capacity_kwh=100.0, soc_kwh=100.0, discharge_cap_kw=1.0)
    grid, soc = battery_step(b, BatteryCommand.DISCHARGE, 5000.0, HOUR_MS)
    assert grid == pytest.approx(4000.0)
    assert soc == pytest.approx(99.0)


def test_idle_passthrough():
    b = Battery(capacity_kwh=10.0, soc_kwh=4.0)
    grid, soc = battery_step(b, BatteryCommand.IDLE, 1234.0, HOUR_MS)
    assert grid == 1234.0
    assert soc == 4.0


def test_efficiency_applies_on_discharge():
    # delivering 5 kWh at 50% efficiency drains 10 kWh of stored energy
    b = Battery(capacity_kwh=20.0, soc_kwh=10.0, efficiency=0.5)
    grid, soc = battery_step(b, BatteryCommand.DISCHARGE, 5000.0, HOUR_MS)
    assert grid == 0.0
    assert soc == pytest.approx(0.0)


def test_invalid_battery_rejected():
    with pytest.raises(ValueError):
        Battery(capacity_kwh=0.0)
    with pytest.raises(ValueError):
        Battery(capacity_kwh=1.0, soc_kwh=2.0)
    with pytest.raises(ValueError):
        Battery(capacity_kwh=1.0, efficiency=0.0)


@settings(max_examples=500, deadline=None)
@given(
    capacity=st.floats(1.0, 500.0),
    start_frac=st.floats(0.0, 1.0),
    efficiency=st.floats(0.1, 1.0),
    steps=st.lists(
        st.tuples(
            st.sampled_from(list(BatteryCommand)),
            st.floats(0.0, 1e6),
            st.integers(1, 48 * HOUR_MS),
        ),
        min_size=1,
        max_size=30,
    ),
)
def test_soc_bounds_hold_under_random_command_sequences(capacity, start_frac, efficiency, steps):
    b = Battery(capacity_kwh=capacity, soc_kwh=capacity * start_frac, efficiency=efficiency)
    for command, demand, dt in steps:
        grid, soc = battery_step(b, command, demand, dt)
        assert grid >= 0.0
        assert -1e-9 <= soc <= capacity * (1 + 1e-12)
        if command is BatteryCommand.DISCHARGE:
            assert grid <= demand + 1e-9
        b = with_soc(b, min(capacity, max(0.0, soc)))
