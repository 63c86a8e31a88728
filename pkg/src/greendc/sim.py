"""Graph assembly and single-run execution.

A run is a pure function of (topology, policies, traces, workload, seed):
the graph is built fresh, executed single-threaded, and reduced to a
RunReport. Disabled techniques contribute zero components, so a baseline
graph is byte-for-byte unaware of battery, stopper, or shifting code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .carbon import CarbonTrace, EmbodiedAsset, embodied_carbon
from .components import (
    BatteryComp,
    BatteryManagerComp,
    CarbonModelComp,
    CpuComp,
    FaultInjectorComp,
    GpuComp,
    HostComp,
    MemoryComp,
    MetricsProbeComp,
    PowerSourceComp,
    PsuComp,
    SchedulerComp,
    TaskArrival,
    TaskComp,
    TaskStopperComp,
)
from .config import SchedulerConfig, TopologySpec
from .engine import Engine, RunReport, TaskRow, SourceTotals
from .graph import ComponentGraph, EdgeKind, GraphError, Priority
from .policies import (
    BatteryPolicy,
    CheckpointConfig,
    FailureTrace,
    ShiftPolicy,
    SlaRule,
    StopperPolicy,
    sla_check,
)
from .simtime import SimTime, hours
from .workload import Workload


@dataclass(frozen=True)
class PolicyBundle:
    """Technique and resource-management configuration for one run."""

    scheduler: SchedulerConfig = SchedulerConfig()
    shifting: ShiftPolicy | None = None
    stopper: StopperPolicy | None = None
    failure_trace: FailureTrace | None = None
    checkpoint: CheckpointConfig | None = None
    sla: SlaRule = SlaRule()


def build_graph(
    topology: TopologySpec,
    policies: PolicyBundle,
    carbon_traces: dict[str, CarbonTrace] | CarbonTrace | None = None,
    record_timeline: bool = False,
) -> ComponentGraph:
    """Assemble the component graph for one run.

    ``carbon_traces`` maps power-source name to trace; a bare trace is
    attached to every source. Techniques that are off add nothing.
    """
    if isinstance(carbon_traces, CarbonTrace):
        carbon_traces = {src.name: carbon_traces for src in topology.power_sources}
    carbon_traces = carbon_traces or {}
    unknown = set(carbon_traces) - {s.name for s in topology.power_sources}
    if unknown:
        raise GraphError(f"carbon trace bound to unknown power source {sorted(unknown)[0]!r}")

    graph = ComponentGraph()
    sources: dict[str, PowerSourceComp] = {}
    for spec in topology.power_sources:
        comp = PowerSourceComp(f"source:{spec.name}", spec, record_timeline)
        graph.add(comp)
        sources[spec.name] = comp
    for name, trace in carbon_traces.items():
        model = CarbonModelComp(f"carbon:{name}", trace, sources[name])
        graph.add(model)
        graph.connect(model.id, sources[name].id, EdgeKind.CONTROL)

    hosts: list[HostComp] = []
    for group in topology.hosts:
        source = sources[group.power_source or topology.power_sources[0].name]
        for _ in range(group.count):
            idx = len(hosts)
            cpu = CpuComp(f"cpu:{idx}", group.cpu.power_model, group.cpu.capacity_mhz)
            graph.add(cpu)
            gpu = None
            if group.gpu is not None:
                gpu = GpuComp(f"gpu:{idx}", group.gpu.power_model, float(group.gpu.count))
                graph.add(gpu)
            memory = MemoryComp(f"mem:{idx}", group.memory_mib)
            graph.add(memory)
            devices = [cpu] + ([gpu] if gpu is not None else [])
            psu = PsuComp(f"psu:{idx}", devices, source)
            graph.add(psu)
            host = HostComp(f"host:{idx}", idx, group, cpu, gpu, memory, psu)
            graph.add(host)
            source.psus.append(psu)
            graph.connect(source.id, psu.id, EdgeKind.POWER)
            graph.connect(psu.id, cpu.id, EdgeKind.POWER)
            if gpu is not None:
                graph.connect(psu.id, gpu.id, EdgeKind.POWER)
            hosts.append(host)

    batteries: list[BatteryComp] = []
    for bat_spec in topology.batteries:
        if bat_spec.power_source not in sources:
            raise GraphError(
                f"battery {bat_spec.name!r} references unknown power source {bat_spec.power_source!r}"
            )
        source = sources[bat_spec.power_source]
        battery = BatteryComp(f"battery:{bat_spec.name}", bat_spec, source)
        graph.add(battery)
        source.batteries.append(battery)
        graph.connect(battery.id, source.id, EdgeKind.POWER)
        trace = carbon_traces.get(bat_spec.power_source)
        if trace is None:
            raise GraphError(
                f"battery {bat_spec.name!r} needs a carbon trace on source {bat_spec.power_source!r}"
            )
        manager = BatteryManagerComp(
            f"battery_mgr:{bat_spec.name}", battery, trace, BatteryPolicy(bat_spec.policy_window_ms)
        )
        graph.add(manager)
        graph.connect(manager.id, battery.id, EdgeKind.CONTROL)
        graph.connect(manager.id, source.id, EdgeKind.OBSERVE)
        batteries.append(battery)

    gate_trace = None
    if policies.shifting is not None or policies.stopper is not None:
        first_source = topology.power_sources[0].name
        gate_trace = carbon_traces.get(first_source)
        if gate_trace is None:
            raise GraphError("shifting/stopper policies need a carbon trace on the first power source")

    scheduler = SchedulerComp(
        "scheduler",
        policies.scheduler,
        hosts,
        gate=policies.shifting,
        gate_trace=gate_trace if policies.shifting is not None else None,
        checkpoint=policies.checkpoint,
    )
    graph.add(scheduler)
    for host in hosts:
        graph.connect(scheduler.id, host.id, EdgeKind.CONTROL)

    if policies.stopper is not None:
        stopper = TaskStopperComp("task_stopper", policies.stopper, gate_trace, scheduler)
        graph.add(stopper)
        graph.connect(stopper.id, sources[topology.power_sources[0].name].id, EdgeKind.OBSERVE)

    if policies.failure_trace is not None:
        injector = FaultInjectorComp("fault_injector", policies.failure_trace, hosts)
        graph.add(injector)
        for host in hosts:
            graph.connect(injector.id, host.id, EdgeKind.CONTROL)

    graph.validate()
    return graph


@dataclass(frozen=True)
class ProbeConfig:
    export_interval_ms: int = 300_000
    outputs: tuple[str, ...] = ("service", "powerSource", "battery", "task")


def simulate(
    graph: ComponentGraph,
    workload: Workload,
    probe: ProbeConfig = ProbeConfig(),
    *,
    seed: int = 0,
    start_ms: SimTime | None = None,
    sla: SlaRule = SlaRule(),
    keep_exec_segments: bool = False,
) -> RunReport:
    """Execute one run to completion and reduce it to a RunReport."""
    if start_ms is None:
        start_ms = workload.start_ms
    if workload.tasks and workload.tasks[0].submission_ms < start_ms:
        raise ValueError("workload submission times precede the simulation start")

    engine = Engine(graph, start_ms=start_ms, seed=seed)
    scheduler = next(iter(graph.of_kind(SchedulerComp.kind)))
    assert isinstance(scheduler, SchedulerComp)
    sources = [c for c in graph.components if isinstance(c, PowerSourceComp)]
    batteries = [c for c in graph.components if isinstance(c, BatteryComp)]
    hosts = [c for c in graph.components if isinstance(c, HostComp)]

    tasks: list[TaskComp] = []
    for spec in workload.tasks:
        comp = TaskComp(spec, scheduler)
        graph.add(comp)
        tasks.append(comp)
    engine.tasks_remaining = len(tasks)

    table_outputs = tuple(t for t in probe.outputs if t != "task")
    probe_comp = None
    if table_outputs:
        probe_comp = MetricsProbeComp(
            "probe", probe.export_interval_ms, table_outputs, scheduler, sources, batteries, hosts
        )
        graph.add(probe_comp)

    for comp in tasks:
        engine.post(comp.spec.submission_ms, scheduler, TaskArrival(comp), Priority.SCHEDULER)

    end_ms = engine.run()

    for src in sources:
        src.advance(end_ms)
    for bat in batteries:
        bat.advance(end_ms)

    report = RunReport(start_ms=start_ms, end_ms=end_ms)
    if probe_comp is not None:
        report.service_rows = probe_comp.service_rows
        report.power_rows = probe_comp.power_rows
        report.battery_rows = probe_comp.battery_rows
        report.host_rows = probe_comp.host_rows

    for src in sources:
        totals = SourceTotals(
            source_id=src.id,
            energy_j=src.energy_j,
            device_energy_j=src.device_energy_j,
            carbon_g=src.carbon_g,
            peak_w=src.peak_w,
            battery_charge_j=src.charge_energy_j,
            battery_discharge_j=src.discharge_energy_j,
        )
        report.sources.append(totals)
        report.operational_g += src.carbon_g
        if src.timeline is not None:
            report.timelines[src.id] = [tuple(seg) for seg in src.timeline]
    report.peak_power_w = max((s.peak_w for s in report.sources), default=0.0)

    makespan_h = hours(end_ms - start_ms)
    host_embodied = 0.0
    for host in hosts:
        asset = EmbodiedAsset(host.group.embodied_kg, host.group.lifespan_h)
        host_embodied += embodied_carbon(asset, makespan_h)
    report.embodied_hosts_g = host_embodied
    battery_embodied = 0.0
    for bat in batteries:
        params = bat.params
        total_kg = params.capacity_kwh * params.embodied_rate_kg_per_kwh
        if total_kg > 0:
            asset = EmbodiedAsset(total_kg, params.lifespan_h)
            battery_embodied += embodied_carbon(asset, makespan_h)
    report.embodied_batteries_g = battery_embodied

    if "task" in probe.outputs:
        for comp in tasks:
            work = comp.spec.work_ms
            delay = None
            if comp.finish_ms is not None:
                delay = comp.finish_ms - (comp.spec.submission_ms + work)
            report.task_rows.append(
                TaskRow(
                    task_id=comp.spec.id,
                    submission_ms=comp.spec.submission_ms,
                    start_ms=comp.start_ms,
                    finish_ms=comp.finish_ms,
                    delay_ms=delay,
                    sla_violated=sla_check(comp.spec.submission_ms, work, comp.finish_ms, sla),
                )
            )
    if keep_exec_segments:
        for comp in tasks:
            report.task_exec_segments[comp.spec.id] = list(comp.exec_segments)
    report.warnings = list(engine.warnings)
    return report
