"""Deterministic discrete-event engine.

Events at the same timestamp are processed in (priority class, component
registration order, insertion sequence) order, which makes every run a
pure function of (graph, workload, seed). A component whose state is
updated more than the cascade cap times at one timestamp aborts the run:
that is a modeling error (a same-time feedback loop), not an engine
condition to paper over.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from typing import Any

from .graph import Component, ComponentGraph, Priority
from .simtime import SimTime

log = logging.getLogger(__name__)

CASCADE_CAP = 1000


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Event:
    time: SimTime
    priority: Priority
    target: Component
    payload: Any


class Engine:
    """Clock, event queue, and shared run services for one simulation."""

    def __init__(self, graph: ComponentGraph, *, start_ms: SimTime = 0, seed: int = 0) -> None:
        self.graph = graph
        self.clock: SimTime = start_ms
        self.start_ms: SimTime = start_ms
        self.seed = seed
        self.end_ms: SimTime | None = None
        self.tasks_remaining = 0
        self._heap: list[tuple[SimTime, int, int, int, Event]] = []
        self._seq = 0
        self._cascade_counts: dict[int, int] = {}
        self._cascade_clock: SimTime = start_ms
        self._recent: list[str] = []
        self.warnings: list[str] = []
        self._warned: set[str] = set()

    def post(self, time: SimTime, target: Component, payload: Any, priority: Priority) -> None:
        if time < self.clock:
            raise SimulationError(
                f"event for {target.id} at t={time} is before the clock ({self.clock})"
            )
        event = Event(time, priority, target, payload)
        heapq.heappush(self._heap, (time, int(priority), target.order, self._seq, event))
        self._seq += 1

    def warn_once(self, key: str, message: str) -> None:
        if key in self._warned:
            return
        self._warned.add(key)
        self.warnings.append(message)
        log.warning("%s", message)

    def task_done(self) -> None:
        self.tasks_remaining -= 1

    def run(self) -> SimTime:
        """Drive the queue until the workload is finished; returns the end time."""
        for comp in list(self.graph.components):
            comp.on_start(self)
        if self.tasks_remaining == 0:
            self.end_ms = self.clock
        while self._heap:
            time, _, order, _, event = self._heap[0]
            if self.end_ms is not None and time > self.end_ms:
                break
            heapq.heappop(self._heap)
            if time > self.clock:
                self.clock = time
                self._cascade_counts.clear()
                self._recent.clear()
            count = self._cascade_counts.get(order, 0) + 1
            self._cascade_counts[order] = count
            self._recent.append(f"{event.target.id}<-{type(event.payload).__name__}")
            if len(self._recent) > 8:
                self._recent.pop(0)
            if count > CASCADE_CAP:
                raise SimulationError(
                    f"cascade did not converge at t={self.clock}: component "
                    f"{event.target.id!r} updated more than {CASCADE_CAP} times; "
                    f"recent chain: {' | '.join(self._recent)}"
                )
            event.target.handle(event, self)
            if self.tasks_remaining == 0 and self.end_ms is None:
                self.end_ms = self.clock
        if self.tasks_remaining > 0:
            raise SimulationError(
                f"simulation stalled at t={self.clock} with "
                f"{self.tasks_remaining} unfinished tasks and no pending events"
            )
        if self.end_ms is None:
            self.end_ms = self.clock
        return self.end_ms


# --- run outputs ----------------------------------------------------------

@dataclass
class TaskRow:
    task_id: str
    submission_ms: SimTime
    start_ms: SimTime | None
    finish_ms: SimTime | None
    delay_ms: int | None
    sla_violated: bool


@dataclass
class SourceTotals:
    source_id: str
    energy_j: float = 0.0
    device_energy_j: float = 0.0
    carbon_g: float = 0.0
    peak_w: float = 0.0
    battery_charge_j: float = 0.0
    battery_discharge_j: float = 0.0


@dataclass
class RunReport:
    start_ms: SimTime
    end_ms: SimTime
    service_rows: list[tuple] = field(default_factory=list)
    power_rows: list[tuple] = field(default_factory=list)
    battery_rows: list[tuple] = field(default_factory=list)
    host_rows: list[tuple] = field(default_factory=list)
    task_rows: list[TaskRow] = field(default_factory=list)
    sources: list[SourceTotals] = field(default_factory=list)
    operational_g: float = 0.0
    embodied_hosts_g: float = 0.0
    embodied_batteries_g: float = 0.0
    peak_power_w: float = 0.0
    warnings: list[str] = field(default_factory=list)
    # per-source piecewise grid-draw timelines, kept when requested
    timelines: dict[str, list[tuple[SimTime, SimTime, float]]] = field(default_factory=dict)
    task_exec_segments: dict[str, list[tuple[SimTime, SimTime, float, float]]] = field(default_factory=dict)

    @property
    def makespan_ms(self) -> int:
        return self.end_ms - self.start_ms

    @property
    def embodied_g(self) -> float:
        return self.embodied_hosts_g + self.embodied_batteries_g

    @property
    def total_g(self) -> float:
        return self.operational_g + self.embodied_g

    @property
    def energy_j(self) -> float:
        return sum(s.energy_j for s in self.sources)

    @property
    def device_energy_j(self) -> float:
        return sum(s.device_energy_j for s in self.sources)

    @property
    def battery_charge_j(self) -> float:
        return sum(s.battery_charge_j for s in self.sources)

    @property
    def battery_discharge_j(self) -> float:
        return sum(s.battery_discharge_j for s in self.sources)

    def energy_balance_error(self) -> float:
        """Relative error of grid + discharge == device + charge."""
        lhs = self.energy_j + self.battery_discharge_j
        rhs = self.device_energy_j + self.battery_charge_j
        scale = max(abs(lhs), abs(rhs), 1.0)
        return abs(lhs - rhs) / scale
