"""Battery energy store with C-rate-limited charging.

The charge/discharge arithmetic is saturating: state of charge never
leaves [0, capacity] and discharge never exceeds the demand it offsets.
Round-trip losses are applied on discharge.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .simtime import HOURS_10Y


class BatteryCommand(Enum):
    CHARGE = "charge"
    DISCHARGE = "discharge"
    IDLE = "idle"


@dataclass(frozen=True)
class Battery:
    capacity_kwh: float
    soc_kwh: float = 0.0
    c_rate: float = 3.0  # kW of charge power per kWh of capacity
    discharge_cap_kw: float | None = None  # default: symmetric with charging
    embodied_rate_kg_per_kwh: float = 100.0
    lifespan_h: float = HOURS_10Y
    efficiency: float = 1.0

    def __post_init__(self) -> None:
        if self.capacity_kwh <= 0:
            raise ValueError("battery capacity must be positive")
        if not 0.0 <= self.soc_kwh <= self.capacity_kwh:
            raise ValueError("state of charge outside [0, capacity]")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("efficiency must be in (0, 1]")

    @property
    def max_charge_kw(self) -> float:
        return self.c_rate * self.capacity_kwh

    @property
    def max_discharge_kw(self) -> float:
        if self.discharge_cap_kw is not None:
            return self.discharge_cap_kw
        return self.c_rate * self.capacity_kwh


def battery_step(
    battery: Battery, command: BatteryCommand, demand_w: float, dt_ms: int
) -> tuple[float, float]:
    """Advance one interval; returns (grid draw in watts, new soc in kWh).

    Charging draws grid power on top of the demand; discharging offsets
    demand without ever exporting. The returned grid draw is the constant
    level over the whole interval.
    """
    if dt_ms <= 0:
        raise ValueError("dt must be positive")
    if demand_w < 0:
        raise ValueError("demand must be >= 0")
    dt_h = dt_ms / 3_600_000.0

    if command is BatteryCommand.CHARGE:
        headroom_kwh = battery.capacity_kwh - battery.soc_kwh
        p_chg_kw = min(battery.max_charge_kw, headroom_kwh / dt_h)
        soc = min(battery.capacity_kwh, battery.soc_kwh + p_chg_kw * dt_h)
        return demand_w + p_chg_kw * 1000.0, soc

    if command is BatteryCommand.DISCHARGE:
        p_dis_kw = min(
            battery.max_discharge_kw,
            demand_w / 1000.0,
            battery.soc_kwh * battery.efficiency / dt_h,
        )
        soc = max(0.0, battery.soc_kwh - p_dis_kw * dt_h / battery.efficiency)
        return max(0.0, demand_w - p_dis_kw * 1000.0), soc

    return demand_w, battery.soc_kwh


def with_soc(battery: Battery, soc_kwh: float) -> Battery:
    return replace(battery, soc_kwh=soc_kwh)
