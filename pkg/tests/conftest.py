"""Shared builders for simulation fixtures."""

from __future__ import annotations

import pytest

from greendc.battery import Battery
from greendc.carbon import CarbonTrace
from greendc.config import BatterySpec, CpuSpec, GpuSpec, HostGroup, PowerSourceSpec, TopologySpec
from greendc.power import PowerModel, PowerShape
from greendc.simtime import HOUR_MS
from greendc.workload import Fragment, Task, Workload

SQRT_50_150 = PowerModel(PowerShape.SQRT, 50.0, 150.0)


def make_topology(
    hosts: int = 1,
    cores: int = 4,
    core_mhz: float = 1000.0,
    memory_mib: int = 4096,
    model: PowerModel = SQRT_50_150,
    gpu: GpuSpec | None = None,
    battery: Battery | None = None,
    embodied_kg: float = 100.0,
    lifespan_h: float = 43_830.0,
    name: str = "test",
) -> TopologySpec:
    batteries = ()
    if battery is not None:
        batteries = (BatterySpec("b0", "grid", battery),)
    return TopologySpec(
        name=name,
        hosts=(
            HostGroup("g0", hosts, CpuSpec(cores, core_mhz, model), memory_mib,
                      embodied_kg, lifespan_h, gpu, "grid"),
        ),
        power_sources=(PowerSourceSpec("grid"),),
        batteries=batteries,
    )


def flat_trace(value: float = 200.0, hours: int = 24 * 30) -> CarbonTrace:
    starts = tuple(h * HOUR_MS for h in range(hours))
    return CarbonTrace(starts, tuple(float(value) for _ in range(hours)), "flat")


def cyclic_trace(pattern: list[float], hours_each: int, days: int) -> CarbonTrace:
    """Daily cycle: pattern[i] holds for hours_each hours, repeated for days."""
    starts, vals = [], []
    period = len(pattern) * hours_each
    for h in range(period * days):
        starts.append(h * HOUR_MS)
        vals.append(float(pattern[(h % period) // hours_each]))
    return CarbonTrace(tuple(starts), tuple(vals), "cyclic")


def simple_task(
    tid: str,
    submission_ms: int,
    duration_ms: int,
    cpu_usage_mhz: float = 1000.0,
    cores: int = 1,
    memory_mib: int = 1,
    gpu_count: int = 0,
    gpu_usage: float = 0.0,
) -> Task:
    return Task(
        tid, submission_ms, cores, 1000.0, memory_mib, gpu_count,
        (Fragment(duration_ms, cpu_usage_mhz, gpu_usage),),
    )


def make_workload(tasks: list[Task]) -> Workload:
    return Workload(tuple(sorted(tasks, key=lambda t: (t.submission_ms, t.id))))


@pytest.fixture
def sqrt_model() -> PowerModel:
    return SQRT_50_150
