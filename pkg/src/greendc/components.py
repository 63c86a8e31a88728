"""Concrete simulation components and their event protocol.

State propagates as same-timestamp event cascades: a task's demand change
reaches its CPU, the CPU's power model updates its draw, the PSU re-sums,
the power source re-integrates. Every handler emits follow-ups only when
its own state actually changed, so a no-op delta dies out immediately.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from enum import Enum

from .battery import Battery
from .carbon import CarbonTrace, segment_carbon
from .config import (
    BatterySpec,
    HostGroup,
    PowerSourceSpec,
    SchedulerConfig,
)
from .engine import Engine, Event, SimulationError
from .graph import Component, ComponentGraph, ComponentKind, EdgeKind, Priority
from .policies import (
    BatteryAction,
    BatteryPolicy,
    CheckpointConfig,
    FailureTrace,
    ShiftDecision,
    ShiftPolicy,
    StopperPolicy,
    battery_decide,
    checkpoint_restore,
    inject_failures,
    rolling_mean_threshold,
    shift_decide,
    shifting_threshold,
    stopper_decide,
    stopper_threshold,
)
from .power import PowerModel, device_power
from .simtime import SimTime
from .workload import Task

_SOC_SLACK_J = 1e-6


# --- event payloads -------------------------------------------------------

@dataclass(frozen=True)
class TraceTick:
    pass


@dataclass(frozen=True)
class CiChanged:
    value: float


@dataclass(frozen=True)
class PolicyTick:
    pass


@dataclass(frozen=True)
class BatteryCmd:
    action: BatteryAction


@dataclass(frozen=True)
class BatteryEdgeTick:
    seq: int


@dataclass(frozen=True)
class SourceDemandChanged:
    demand_w: float


@dataclass(frozen=True)
class BatteryFlowChanged:
    pass


@dataclass(frozen=True)
class DeviceDrawChanged:
    pass


@dataclass(frozen=True)
class CpuDemand:
    task_id: str
    mhz: float


@dataclass(frozen=True)
class GpuDemand:
    task_id: str
    units: float


@dataclass(frozen=True)
class TaskArrival:
    task: "TaskComp"


@dataclass(frozen=True)
class WakeScheduler:
    pass


@dataclass(frozen=True)
class SchedEvalTick:
    pass


@dataclass(frozen=True)
class FragmentDone:
    seq: int


@dataclass(frozen=True)
class ForcedResumeCheck:
    task: "TaskComp"


@dataclass(frozen=True)
class HostFail:
    until_ms: SimTime


@dataclass(frozen=True)
class HostRepair:
    pass


@dataclass(frozen=True)
class SampleTick:
    pass


# --- trace-driven components ----------------------------------------------

class CarbonModelComp(Component):
    """Replays one region's carbon-intensity trace into its power source."""

    kind = ComponentKind.CARBON_MODEL

    def __init__(self, comp_id: str, trace: CarbonTrace, source: "PowerSourceComp") -> None:
        super().__init__(comp_id)
        self.trace = trace
        self.source = source
        self.current = 0.0

    def on_start(self, engine: Engine) -> None:
        t = engine.start_ms
        if not self.trace.covers(t):
            engine.warn_once(
                f"carbon-coverage:{self.id}",
                f"{self.id}: simulation time outside trace coverage; holding nearest sample",
            )
        self.current = self.trace.intensity_at(t)
        self.source.ci = self.current
        self._post_next(engine)

    def _post_next(self, engine: Engine) -> None:
        idx = self.trace.index_at(engine.clock)
        if idx + 1 < len(self.trace.starts):
            engine.post(self.trace.starts[idx + 1], self, TraceTick(), Priority.TRACE)

    def handle(self, event: Event, engine: Engine) -> None:
        assert isinstance(event.payload, TraceTick)
        value = self.trace.intensity_at(engine.clock)
        self._post_next(engine)
        if value != self.current:
            self.current = value
            engine.post(engine.clock, self.source, CiChanged(value), Priority.DEVICE)


class PowerSourceComp(Component):
    """Grid connection point: integrates energy, carbon, and peak draw."""

    kind = ComponentKind.POWER_SOURCE

    def __init__(self, comp_id: str, spec: PowerSourceSpec, record_timeline: bool = False) -> None:
        super().__init__(comp_id)
        self.spec = spec
        self.psus: list[PsuComp] = []
        self.batteries: list[BatteryComp] = []
        self.ci = 0.0
        self.device_draw_w = 0.0
        self.charge_w = 0.0
        self.discharge_w = 0.0
        self.last_ms: SimTime = 0
        self.energy_j = 0.0
        self.device_energy_j = 0.0
        self.carbon_g = 0.0
        self.charge_energy_j = 0.0
        self.discharge_energy_j = 0.0
        self.peak_w = 0.0
        self.timeline: list[list] | None = [] if record_timeline else None

    @property
    def grid_draw_w(self) -> float:
        return max(0.0, self.device_draw_w + self.charge_w - self.discharge_w)

    def on_start(self, engine: Engine) -> None:
        self.last_ms = engine.start_ms
        self.device_draw_w = sum(p.draw_w for p in self.psus)
        self._touch_peak(engine)

    def advance(self, now: SimTime) -> None:
        dt = now - self.last_ms
        if dt <= 0:
            return
        draw = self.grid_draw_w
        self.energy_j += draw * dt / 1000.0
        self.device_energy_j += self.device_draw_w * dt / 1000.0
        self.charge_energy_j += self.charge_w * dt / 1000.0
        self.discharge_energy_j += self.discharge_w * dt / 1000.0
        self.carbon_g += segment_carbon(draw, dt, self.ci)
        if self.timeline is not None:
            if self.timeline and self.timeline[-1][1] == self.last_ms and self.timeline[-1][2] == draw:
                self.timeline[-1][1] = now
            else:
                self.timeline.append([self.last_ms, now, draw])
        self.last_ms = now

    def _touch_peak(self, engine: Engine) -> None:
        draw = self.grid_draw_w
        if draw > self.peak_w:
            self.peak_w = draw
        if self.spec.max_power_w is not None and draw > self.spec.max_power_w:
            engine.warn_once(
                f"overdraw:{self.id}",
                f"{self.id}: draw {draw:.1f} W exceeds rated {self.spec.max_power_w:.1f} W",
            )

    def handle(self, event: Event, engine: Engine) -> None:
        payload = event.payload
        if isinstance(payload, CiChanged):
            self.advance(engine.clock)
            self.ci = payload.value
        elif isinstance(payload, DeviceDrawChanged):
            self.advance(engine.clock)
            new = sum(p.draw_w for p in self.psus)
            if new != self.device_draw_w:
                self.device_draw_w = new
                self._touch_peak(engine)
                for battery in self.batteries:
                    engine.post(engine.clock, battery, SourceDemandChanged(new), Priority.DEVICE)
        elif isinstance(payload, BatteryFlowChanged):
            self.advance(engine.clock)
            self.charge_w = sum(b.charge_w for b in self.batteries)
            self.discharge_w = sum(b.discharge_w for b in self.batteries)
            self._touch_peak(engine)


# --- host hardware ----------------------------------------------------------

class _ComputeDevice(Component):
    """Shared demand-aggregation and power-model logic for CPU and GPU."""

    def __init__(self, comp_id: str, model: PowerModel, capacity: float) -> None:
        super().__init__(comp_id)
        self.model = model
        self.capacity = capacity
        self.demand: dict[str, float] = {}
        self.failed = False
        self.power_w = device_power(model, 0.0)
        self.psu: PsuComp | None = None

    @property
    def utilization(self) -> float:
        if self.failed:
            return 0.0
        return min(1.0, sum(self.demand.values()) / self.capacity)

    def _recompute(self, engine: Engine) -> None:
        raw = sum(self.demand.values()) / self.capacity
        if raw > 1.0 + 1e-9:
            engine.warn_once(
                f"oversubscribed:{self.id}",
                f"{self.id}: demand exceeds capacity (utilization {raw:.3f}), clamping to 1",
            )
        power = 0.0 if self.failed else device_power(self.model, min(1.0, raw))
        if power != self.power_w:
            self.power_w = power
            if self.psu is not None:
                engine.post(engine.clock, self.psu, DeviceDrawChanged(), Priority.DEVICE)

    def set_failed(self, engine: Engine, failed: bool) -> None:
        if failed != self.failed:
            self.failed = failed
            self._recompute(engine)

    def _apply_demand(self, engine: Engine, task_id: str, amount: float) -> None:
        if amount <= 0.0:
            if task_id not in self.demand:
                return
            del self.demand[task_id]
        else:
            if self.demand.get(task_id) == amount:
                return
            self.demand[task_id] = amount
        self._recompute(engine)


class CpuComp(_ComputeDevice):
    kind = ComponentKind.CPU

    def handle(self, event: Event, engine: Engine) -> None:
        payload = event.payload
        assert isinstance(payload, CpuDemand)
        self._apply_demand(engine, payload.task_id, payload.mhz)


class GpuComp(_ComputeDevice):
    kind = ComponentKind.GPU

    def handle(self, event: Event, engine: Engine) -> None:
        payload = event.payload
        assert isinstance(payload, GpuDemand)
        self._apply_demand(engine, payload.task_id, payload.units)


class MemoryComp(Component):
    """Capacity-only component; memory draws no modeled power."""

    kind = ComponentKind.MEMORY

    def __init__(self, comp_id: str, capacity_mib: int) -> None:
        super().__init__(comp_id)
        self.capacity_mib = capacity_mib

    def handle(self, event: Event, engine: Engine) -> None:  # pragma: no cover
        raise SimulationError(f"memory component {self.id} received event {event.payload!r}")


class PsuComp(Component):
    kind = ComponentKind.PSU

    def __init__(self, comp_id: str, devices: list[_ComputeDevice], source: PowerSourceComp) -> None:
        super().__init__(comp_id)
        self.devices = devices
        self.source = source
        self.draw_w = sum(d.power_w for d in devices)
        for dev in devices:
            dev.psu = self

    def handle(self, event: Event, engine: Engine) -> None:
        assert isinstance(event.payload, DeviceDrawChanged)
        new = sum(d.power_w for d in self.devices)
        if new != self.draw_w:
            self.draw_w = new
            engine.post(engine.clock, self.source, DeviceDrawChanged(), Priority.DEVICE)


class HostComp(Component):
    """Failure domain grouping one PSU's devices; placement target for tasks."""

    kind = ComponentKind.HOST

    def __init__(
        self, comp_id: str, index: int, group: HostGroup,
        cpu: CpuComp, gpu: GpuComp | None, memory: MemoryComp, psu: PsuComp,
    ) -> None:
        super().__init__(comp_id)
        self.index = index
        self.group = group
        self.cpu = cpu
        self.gpu = gpu
        self.memory = memory
        self.psu = psu
        self.running: list[TaskComp] = []
        self.failed = False
        self.failed_until: SimTime = 0
        self.scheduler: SchedulerComp | None = None

    def handle(self, event: Event, engine: Engine) -> None:
        payload = event.payload
        if isinstance(payload, HostFail):
            if payload.until_ms > self.failed_until:
                self.failed_until = payload.until_ms
                engine.post(payload.until_ms, self, HostRepair(), Priority.TRACE)
            if not self.failed:
                self.failed = True
                for task in sorted(self.running, key=lambda t: t.order):
                    task.interrupt(engine)
                self.running.clear()
                self.cpu.set_failed(engine, True)
                if self.gpu is not None:
                    self.gpu.set_failed(engine, True)
        elif isinstance(payload, HostRepair):
            if self.failed and engine.clock >= self.failed_until:
                self.failed = False
                self.cpu.set_failed(engine, False)
                if self.gpu is not None:
                    self.gpu.set_failed(engine, False)
                if self.scheduler is not None:
                    self.scheduler.request_wake(engine)


# --- battery ----------------------------------------------------------------

class BatteryComp(Component):
    """Stateful energy store; power is piecewise constant between edge events."""

    kind = ComponentKind.BATTERY

    def __init__(self, comp_id: str, spec: BatterySpec, source: PowerSourceComp) -> None:
        super().__init__(comp_id)
        self.spec = spec
        self.params: Battery = spec.battery
        self.source = source
        self.capacity_j = self.params.capacity_kwh * 3.6e6
        self.soc_j = self.params.soc_kwh * 3.6e6
        self.mode = BatteryAction.HOLD
        self.charge_w = 0.0
        self.discharge_w = 0.0
        self.demand_w = 0.0
        self.last_ms: SimTime = 0
        self.edge_seq = 0

    @property
    def soc_kwh(self) -> float:
        return self.soc_j / 3.6e6

    def on_start(self, engine: Engine) -> None:
        self.last_ms = engine.start_ms
        self.demand_w = self.source.device_draw_w

    def advance(self, now: SimTime) -> None:
        dt = now - self.last_ms
        if dt <= 0:
            return
        if self.charge_w > 0.0:
            self.soc_j = min(self.capacity_j, self.soc_j + self.charge_w * dt / 1000.0)
        if self.discharge_w > 0.0:
            delivered = self.discharge_w * dt / 1000.0
            self.soc_j -= delivered / self.params.efficiency
            if self.soc_j < 0.0:
                if self.soc_j < -_SOC_SLACK_J:
                    raise SimulationError(f"{self.id}: state of charge fell below zero")
                self.soc_j = 0.0
        self.last_ms = now

    def _recompute(self, engine: Engine) -> None:
        now = engine.clock
        charge = discharge = 0.0
        edge_at: SimTime | None = None
        if self.mode is BatteryAction.CHARGE:
            headroom = self.capacity_j - self.soc_j
            if headroom > _SOC_SLACK_J:
                full_w = self.params.max_charge_kw * 1000.0
                t_ms = headroom / full_w * 1000.0
                if t_ms >= 1.0:
                    charge = full_w
                    edge_at = now + int(t_ms)
                else:
                    charge = headroom * 1000.0  # drains the headroom in exactly 1 ms
                    edge_at = now + 1
        elif self.mode is BatteryAction.DISCHARGE:
            available = self.soc_j * self.params.efficiency
            p_dis = min(self.params.max_discharge_kw * 1000.0, self.demand_w)
            if available > _SOC_SLACK_J and p_dis > 0.0:
                t_ms = available / p_dis * 1000.0
                if t_ms >= 1.0:
                    discharge = p_dis
                    edge_at = now + int(t_ms)
                else:
                    discharge = available * 1000.0
                    edge_at = now + 1
        if edge_at is not None:
            self.edge_seq += 1
            engine.post(edge_at, self, BatteryEdgeTick(self.edge_seq), Priority.DEVICE)
        if charge != self.charge_w or discharge != self.discharge_w:
            self.charge_w = charge
            self.discharge_w = discharge
            engine.post(now, self.source, BatteryFlowChanged(), Priority.DEVICE)

    def handle(self, event: Event, engine: Engine) -> None:
        payload = event.payload
        if isinstance(payload, BatteryCmd):
            self.advance(engine.clock)
            self.mode = payload.action
            self._recompute(engine)
        elif isinstance(payload, SourceDemandChanged):
            self.advance(engine.clock)
            self.demand_w = payload.demand_w
            if self.mode is BatteryAction.DISCHARGE:
                self._recompute(engine)
        elif isinstance(payload, BatteryEdgeTick):
            if payload.seq != self.edge_seq:
                return
            self.advance(engine.clock)
            self._recompute(engine)


class BatteryManagerComp(Component):
    """Rolling-mean threshold dispatch, re-evaluated at every trace sample."""

    kind = ComponentKind.BATTERY_MANAGER

    def __init__(
        self, comp_id: str, battery: BatteryComp, trace: CarbonTrace, policy: BatteryPolicy
    ) -> None:
        super().__init__(comp_id)
        self.battery = battery
        self.trace = trace
        self.policy = policy
        self.previous_ci: float | None = None
        self.last_action: BatteryAction | None = None
        self.threshold: float | None = None

    def on_start(self, engine: Engine) -> None:
        self._post_next(engine, include_now=True)

    def _post_next(self, engine: Engine, include_now: bool = False) -> None:
        starts = self.trace.starts
        idx = bisect_left(starts, engine.clock) if include_now else bisect_right(starts, engine.clock)
        if idx < len(starts):
            engine.post(starts[idx], self, PolicyTick(), Priority.POLICY)

    def handle(self, event: Event, engine: Engine) -> None:
        assert isinstance(event.payload, PolicyTick)
        self._post_next(engine)
        ci = self.trace.intensity_at(engine.clock)
        self.threshold = rolling_mean_threshold(self.trace, engine.clock, self.policy)
        action = battery_decide(ci, self.previous_ci, self.threshold)
        self.previous_ci = ci
        if action != self.last_action:
            self.last_action = action
            engine.post(engine.clock, self.battery, BatteryCmd(action), Priority.DEVICE)


# --- tasks -------------------------------------------------------------------

class TaskStatus(Enum):
    PENDING = "pending"
    RUNNING = "running"
    STOPPED = "stopped"
    DONE = "done"


class TaskComp(Component):
    kind = ComponentKind.TASK

    def __init__(self, spec: Task, scheduler: "SchedulerComp") -> None:
        super().__init__(f"task:{spec.id}")
        self.spec = spec
        self.scheduler = scheduler
        self.status = TaskStatus.PENDING
        self.host: HostComp | None = None
        self.frag_idx = 0
        self.frag_offset_ms = 0
        self.frag_started_ms: SimTime = 0
        self.progress_ms = 0
        self.start_ms: SimTime | None = None
        self.finish_ms: SimTime | None = None
        self.seq = 0
        self.delay_wake_posted = False
        self.forced_resume_posted = False
        self.restore_penalty_ms = 0
        self.exec_segments: list[tuple[SimTime, SimTime, float, float]] = []

    # placement -----------------------------------------------------------

    def place(self, engine: Engine, host: HostComp) -> None:
        assert self.status is TaskStatus.PENDING
        self.host = host
        host.running.append(self)
        self.status = TaskStatus.RUNNING
        if self.start_ms is None:
            self.start_ms = engine.clock
        self._locate_fragment()
        self._begin_fragment(engine)
        engine.graph.connect_dynamic(engine.clock, host.cpu.id, self.id, EdgeKind.COMPUTE)
        if host.gpu is not None and self.spec.gpu_count > 0:
            engine.graph.connect_dynamic(engine.clock, host.gpu.id, self.id, EdgeKind.COMPUTE)

    def _locate_fragment(self) -> None:
        remaining = self.progress_ms
        self.frag_idx = 0
        self.frag_offset_ms = 0
        for i, frag in enumerate(self.spec.fragments):
            if remaining < frag.duration_ms:
                self.frag_idx = i
                self.frag_offset_ms = remaining
                return
            remaining -= frag.duration_ms
        raise SimulationError(f"{self.id}: progress beyond total work")

    def _gpu_units(self) -> float:
        frag = self.spec.fragments[self.frag_idx]
        return frag.gpu_usage * self.spec.gpu_count

    def _begin_fragment(self, engine: Engine) -> None:
        assert self.host is not None
        frag = self.spec.fragments[self.frag_idx]
        self.frag_started_ms = engine.clock
        remaining = frag.duration_ms - self.frag_offset_ms + self.restore_penalty_ms
        self.restore_penalty_ms = 0
        engine.post(engine.clock, self.host.cpu, CpuDemand(self.spec.id, frag.cpu_usage_mhz), Priority.DEVICE)
        if self.host.gpu is not None and self.spec.gpu_count > 0:
            engine.post(engine.clock, self.host.gpu, GpuDemand(self.spec.id, self._gpu_units()), Priority.DEVICE)
        self.seq += 1
        engine.post(engine.clock + remaining, self, FragmentDone(self.seq), Priority.DEVICE)

    def _log_segment(self, t0: SimTime, t1: SimTime) -> None:
        if t1 > t0:
            frag = self.spec.fragments[self.frag_idx]
            self.exec_segments.append((t0, t1, frag.cpu_usage_mhz, frag.gpu_usage * self.spec.gpu_count))

    def _clear_demand(self, engine: Engine) -> None:
        assert self.host is not None
        engine.post(engine.clock, self.host.cpu, CpuDemand(self.spec.id, 0.0), Priority.DEVICE)
        if self.host.gpu is not None and self.spec.gpu_count > 0:
            engine.post(engine.clock, self.host.gpu, GpuDemand(self.spec.id, 0.0), Priority.DEVICE)

    def _disconnect(self, engine: Engine) -> None:
        assert self.host is not None
        engine.graph.disconnect_dynamic(engine.clock, self.host.cpu.id, self.id, EdgeKind.COMPUTE)
        if self.host.gpu is not None and self.spec.gpu_count > 0:
            engine.graph.disconnect_dynamic(engine.clock, self.host.gpu.id, self.id, EdgeKind.COMPUTE)

    # lifecycle -------------------------------------------------------------

    def handle(self, event: Event, engine: Engine) -> None:
        payload = event.payload
        assert isinstance(payload, FragmentDone)
        if payload.seq != self.seq or self.status is not TaskStatus.RUNNING:
            return
        self._log_segment(self.frag_started_ms, engine.clock)
        self.progress_ms += engine.clock - self.frag_started_ms
        self.frag_offset_ms = 0
        self.frag_idx += 1
        if self.frag_idx >= len(self.spec.fragments):
            self._complete(engine)
        else:
            self._begin_fragment(engine)

    def _complete(self, engine: Engine) -> None:
        assert self.host is not None
        host = self.host
        self.status = TaskStatus.DONE
        self.finish_ms = engine.clock
        self._clear_demand(engine)
        self._disconnect(engine)
        host.running.remove(self)
        self.host = None
        self.scheduler.task_completed(engine, self, host)
        engine.task_done()

    def stop(self, engine: Engine) -> None:
        """Pause in place (lossless); resources stay allocated."""
        if self.status is not TaskStatus.RUNNING:
            return
        self._log_segment(self.frag_started_ms, engine.clock)
        elapsed = engine.clock - self.frag_started_ms
        self.frag_offset_ms += elapsed
        self.progress_ms += elapsed
        self.status = TaskStatus.STOPPED
        self.seq += 1
        self._clear_demand(engine)

    def resume(self, engine: Engine) -> None:
        if self.status is not TaskStatus.STOPPED:
            return
        self.status = TaskStatus.RUNNING
        self._begin_fragment(engine)

    def interrupt(self, engine: Engine) -> None:
        """Failure path: lose work back to the last checkpoint and requeue."""
        if self.status not in (TaskStatus.RUNNING, TaskStatus.STOPPED):
            return
        if self.status is TaskStatus.RUNNING:
            self._log_segment(self.frag_started_ms, engine.clock)
            self.progress_ms += engine.clock - self.frag_started_ms
        host = self.host
        assert host is not None
        cfg = self.scheduler.checkpoint
        retained = checkpoint_restore(self.progress_ms, cfg)
        if cfg is not None and retained > 0:
            self.restore_penalty_ms = cfg.snapshot_cost_ms
        self.progress_ms = retained
        self.status = TaskStatus.PENDING
        self.seq += 1
        self._clear_demand(engine)
        self._disconnect(engine)
        self.host = None
        self.scheduler.task_interrupted(engine, self, host)


# --- scheduling ---------------------------------------------------------------

class SchedulerComp(Component):
    """FIFO queue ordered by (submission, id), with capacity filters, an
    optional shifting gate, and optional backfilling past a blocked head."""

    kind = ComponentKind.SCHEDULER

    def __init__(
        self,
        comp_id: str,
        cfg: SchedulerConfig,
        hosts: list[HostComp],
        gate: ShiftPolicy | None = None,
        gate_trace: CarbonTrace | None = None,
        checkpoint: CheckpointConfig | None = None,
        weighers: tuple = (),
    ) -> None:
        super().__init__(comp_id)
        self.cfg = cfg
        self.hosts = hosts
        self.gate = gate
        self.gate_trace = gate_trace
        self.checkpoint = checkpoint
        self.weighers = weighers
        self.pending: list[TaskComp] = []
        self.free_cores = [h.group.cpu.core_count for h in hosts]
        self.free_mem = [h.group.memory_mib for h in hosts]
        self.free_gpus = [(h.group.gpu.count if h.group.gpu else 0) for h in hosts]
        self.active_count = 0
        self.completed_count = 0
        self.terminated_count = 0
        self._wake_posted = False
        self._threshold_cache: tuple[SimTime, float] | None = None
        for host in hosts:
            host.scheduler = self

    def on_start(self, engine: Engine) -> None:
        if self.gate is not None and self.gate_trace is not None:
            self._post_next_eval(engine)

    def _post_next_eval(self, engine: Engine) -> None:
        starts = self.gate_trace.starts
        idx = bisect_right(starts, engine.clock)
        if idx < len(starts):
            engine.post(starts[idx], self, SchedEvalTick(), Priority.SCHEDULER)

    def request_wake(self, engine: Engine) -> None:
        if not self._wake_posted:
            self._wake_posted = True
            engine.post(engine.clock, self, WakeScheduler(), Priority.SCHEDULER)

    def handle(self, event: Event, engine: Engine) -> None:
        payload = event.payload
        if isinstance(payload, TaskArrival):
            self._admit(engine, payload.task)
            self.request_wake(engine)
        elif isinstance(payload, WakeScheduler):
            self._wake_posted = False
            self._pass(engine)
        elif isinstance(payload, SchedEvalTick):
            self._post_next_eval(engine)
            self._pass(engine)

    # queue operations ------------------------------------------------------

    def _admit(self, engine: Engine, task: TaskComp) -> None:
        spec = task.spec
        fits_somewhere = any(
            spec.cpu_cores <= h.group.cpu.core_count
            and spec.memory_mib <= h.group.memory_mib
            and spec.gpu_count <= (h.group.gpu.count if h.group.gpu else 0)
            for h in self.hosts
        )
        if not fits_somewhere:
            raise SimulationError(
                f"task {spec.id!r} is larger than every host in the topology: permanently unschedulable"
            )
        self._insort(task)

    def requeue(self, task: TaskComp) -> None:
        self._insort(task)

    def _insort(self, task: TaskComp) -> None:
        key = (task.spec.submission_ms, task.spec.id)
        lo, hi = 0, len(self.pending)
        while lo < hi:
            mid = (lo + hi) // 2
            other = self.pending[mid]
            if (other.spec.submission_ms, other.spec.id) <= key:
                lo = mid + 1
            else:
                hi = mid
        self.pending.insert(lo, task)

    # callbacks from tasks ----------------------------------------------------

    def task_completed(self, engine: Engine, task: TaskComp, host: HostComp) -> None:
        self._release(task, host)
        self.active_count -= 1
        self.completed_count += 1
        self.request_wake(engine)

    def task_interrupted(self, engine: Engine, task: TaskComp, host: HostComp) -> None:
        self._release(task, host)
        self.active_count -= 1
        self.requeue(task)
        self.request_wake(engine)

    def _release(self, task: TaskComp, host: HostComp) -> None:
        i = host.index
        self.free_cores[i] += task.spec.cpu_cores
        self.free_mem[i] += task.spec.memory_mib
        self.free_gpus[i] += task.spec.gpu_count

    # placement ----------------------------------------------------------------

    def _gate_state(self, engine: Engine) -> tuple[float, float]:
        assert self.gate is not None and self.gate_trace is not None
        if self._threshold_cache is None or self._threshold_cache[0] != engine.clock:
            threshold = shifting_threshold(self.gate_trace, engine.clock, self.gate)
            self._threshold_cache = (engine.clock, threshold)
        return self.gate_trace.intensity_at(engine.clock), self._threshold_cache[1]

    def _gate_delays(self, engine: Engine, task: TaskComp) -> bool:
        if self.gate is None or self.gate_trace is None:
            return False
        ci, threshold = self._gate_state(engine)
        decision = shift_decide(task.spec.submission_ms, engine.clock, threshold, ci, self.gate)
        if decision is ShiftDecision.DELAY and not task.delay_wake_posted:
            task.delay_wake_posted = True
            engine.post(
                task.spec.submission_ms + self.gate.max_delay_ms, self, WakeScheduler(), Priority.SCHEDULER
            )
        return decision is ShiftDecision.DELAY

    def _fits(self, i: int, task: TaskComp) -> bool:
        spec = task.spec
        return (
            not self.hosts[i].failed
            and self.free_cores[i] >= spec.cpu_cores
            and self.free_mem[i] >= spec.memory_mib
            and self.free_gpus[i] >= spec.gpu_count
        )

    def _select_host(self, task: TaskComp) -> int | None:
        best: int | None = None
        best_score = 0.0
        for i in range(len(self.hosts)):
            if not self._fits(i, task):
                continue
            if not self.weighers:
                return i  # first feasible host == lowest index
            score = sum(w(self, i, task) for w in self.weighers)
            if best is None or score > best_score:
                best, best_score = i, score
        return best

    def _pass(self, engine: Engine) -> None:
        i = 0
        while i < len(self.pending):
            task = self.pending[i]
            if i == 0 and self._gate_delays(engine, task):
                break
            if i > 0 and self._gate_delays(engine, task):
                i += 1
                continue
            host_idx = self._select_host(task)
            if host_idx is None:
                if not self.cfg.backfill:
                    break
                i += 1
                continue
            self.pending.pop(i)
            spec = task.spec
            self.free_cores[host_idx] -= spec.cpu_cores
            self.free_mem[host_idx] -= spec.memory_mib
            self.free_gpus[host_idx] -= spec.gpu_count
            self.active_count += 1
            task.place(engine, self.hosts[host_idx])
        self._assert_work_conserving(engine)

    def _assert_work_conserving(self, engine: Engine) -> None:
        # FIFO work conservation: the head of the queue, when released by
        # the gate, must not fit any free host after a pass.
        if not self.pending:
            return
        head = self.pending[0]
        if self._gate_delays(engine, head):
            return
        if self._select_host(head) is not None:
            raise SimulationError(
                f"scheduler invariant violated: head task {head.spec.id!r} fits a free host after a pass"
            )


class TaskStopperComp(Component):
    """Pauses running tasks above the carbon threshold; resumes below it."""

    kind = ComponentKind.TASK_STOPPER

    def __init__(
        self, comp_id: str, policy: StopperPolicy, trace: CarbonTrace, scheduler: SchedulerComp
    ) -> None:
        super().__init__(comp_id)
        self.policy = policy
        self.trace = trace
        self.scheduler = scheduler

    def on_start(self, engine: Engine) -> None:
        starts = self.trace.starts
        idx = bisect_left(starts, engine.clock)
        if idx < len(starts):
            engine.post(starts[idx], self, PolicyTick(), Priority.POLICY)

    def _post_next(self, engine: Engine) -> None:
        starts = self.trace.starts
        idx = bisect_right(starts, engine.clock)
        if idx < len(starts):
            engine.post(starts[idx], self, PolicyTick(), Priority.POLICY)

    def _tasks(self) -> list[TaskComp]:
        out: list[TaskComp] = []
        for host in self.scheduler.hosts:
            out.extend(host.running)
        return sorted(out, key=lambda t: t.order)

    def handle(self, event: Event, engine: Engine) -> None:
        payload = event.payload
        if isinstance(payload, ForcedResumeCheck):
            payload.task.resume(engine)
            return
        assert isinstance(payload, PolicyTick)
        self._post_next(engine)
        threshold = stopper_threshold(self.trace, engine.clock, self.policy)
        ci = self.trace.intensity_at(engine.clock)
        if stopper_decide(ci, threshold):
            for task in self._tasks():
                if task.status is not TaskStatus.RUNNING:
                    continue
                if engine.clock - task.spec.submission_ms >= self.policy.max_delay_ms:
                    continue  # past max delay: no longer stoppable
                task.stop(engine)
                if not task.forced_resume_posted:
                    task.forced_resume_posted = True
                    engine.post(
                        task.spec.submission_ms + self.policy.max_delay_ms,
                        self,
                        ForcedResumeCheck(task),
                        Priority.POLICY,
                    )
        else:
            for task in self._tasks():
                task.resume(engine)


class MetricsProbeComp(Component):
    """Samples graph state on the export grid into in-memory table rows."""

    kind = ComponentKind.METRICS_PROBE

    def __init__(
        self,
        comp_id: str,
        interval_ms: int,
        outputs: tuple[str, ...],
        scheduler: SchedulerComp,
        sources: list[PowerSourceComp],
        batteries: list[BatteryComp],
        hosts: list[HostComp],
    ) -> None:
        super().__init__(comp_id)
        if interval_ms <= 0:
            raise ValueError("export interval must be positive")
        self.interval_ms = interval_ms
        self.outputs = outputs
        self.scheduler = scheduler
        self.sources = sources
        self.batteries = batteries
        self.hosts = hosts
        self.service_rows: list[tuple] = []
        self.power_rows: list[tuple] = []
        self.battery_rows: list[tuple] = []
        self.host_rows: list[tuple] = []

    def on_start(self, engine: Engine) -> None:
        engine.post(engine.start_ms + self.interval_ms, self, SampleTick(), Priority.METRICS)

    def handle(self, event: Event, engine: Engine) -> None:
        assert isinstance(event.payload, SampleTick)
        t = engine.clock
        engine.post(t + self.interval_ms, self, SampleTick(), Priority.METRICS)
        if "service" in self.outputs:
            self.service_rows.append(
                (t, len(self.scheduler.pending), self.scheduler.active_count,
                 self.scheduler.completed_count, self.scheduler.terminated_count)
            )
        if "powerSource" in self.outputs:
            for src in self.sources:
                src.advance(t)
                self.power_rows.append((t, src.id, src.grid_draw_w, src.energy_j, src.ci, src.carbon_g))
        if "battery" in self.outputs:
            for bat in self.batteries:
                bat.advance(t)
                if bat.charge_w > 0.0:
                    mode, power = "charging", bat.charge_w
                elif bat.discharge_w > 0.0:
                    mode, power = "discharging", bat.discharge_w
                else:
                    mode, power = "idle", 0.0
                self.battery_rows.append((t, bat.id, bat.soc_kwh, mode, power))
        if "host" in self.outputs:
            for host in self.hosts:
                self.host_rows.append((t, host.id, host.cpu.utilization, host.psu.draw_w))


class FaultInjectorComp(Component):
    """Schedules host failures from a failure trace with seeded host choice."""

    kind = ComponentKind.FAULT_INJECTOR

    def __init__(self, comp_id: str, trace: FailureTrace, hosts: list[HostComp]) -> None:
        super().__init__(comp_id)
        self.trace = trace
        self.hosts = hosts

    def on_start(self, engine: Engine) -> None:
        events = inject_failures(self.trace, list(range(len(self.hosts))), engine.seed)
        for host_idx, start, duration in events:
            end = start + duration
            if end <= engine.start_ms:
                continue
            at = max(start, engine.start_ms)
            engine.post(at, self.hosts[host_idx], HostFail(end), Priority.TRACE)

    def handle(self, event: Event, engine: Engine) -> None:  # pragma: no cover
        raise SimulationError(f"fault injector received unexpected event {event.payload!r}")
