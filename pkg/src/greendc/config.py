"""Topology, experiment, and failure-trace parsing.

Configs are JSON documents validated strictly: unknown fields are
rejected with a path-precise diagnostic so typos never silently change an
experiment. Field names are documented in FORMATS.md.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .battery import Battery
from .policies import (
    BatteryPolicy,
    CheckpointConfig,
    FailureRecord,
    FailureTrace,
    ShiftPolicy,
    SlaRule,
    StopperPolicy,
)
from .power import PowerModel, PowerShape
from .simtime import HOURS_5Y, MINUTE_MS, SimTime, parse_timestamp


class ConfigError(ValueError):
    """Malformed configuration; message carries document path context."""


def _require(obj: dict, where: str, required: set[str], optional: set[str]) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(obj) - required - optional
    if unknown:
        raise ConfigError(f"{where}.{sorted(unknown)[0]}: unknown field")
    missing = required - set(obj)
    if missing:
        raise ConfigError(f"{where}.{sorted(missing)[0]}: missing field")


# --- topology -----------------------------------------------------------

@dataclass(frozen=True)
class CpuSpec:
    core_count: int
    core_speed_mhz: float
    power_model: PowerModel

    @property
    def capacity_mhz(self) -> float:
        return self.core_count * self.core_speed_mhz


@dataclass(frozen=True)
class GpuSpec:
    count: int
    power_model: PowerModel


@dataclass(frozen=True)
class HostGroup:
    name: str
    count: int
    cpu: CpuSpec
    memory_mib: int
    embodied_kg: float
    lifespan_h: float = HOURS_5Y
    gpu: GpuSpec | None = None
    power_source: str | None = None  # default: the topology's first source


@dataclass(frozen=True)
class PowerSourceSpec:
    name: str
    max_power_w: float | None = None
    carbon_trace: str | None = None  # default region; the experiment axis overrides


@dataclass(frozen=True)
class BatterySpec:
    name: str
    power_source: str
    battery: Battery
    policy_id: str = "battery_rolling_mean"
    policy_window_ms: int = BatteryPolicy().window_ms


@dataclass(frozen=True)
class TopologySpec:
    name: str
    hosts: tuple[HostGroup, ...]
    power_sources: tuple[PowerSourceSpec, ...]
    batteries: tuple[BatterySpec, ...] = ()

    @property
    def host_count(self) -> int:
        return sum(g.count for g in self.hosts)


def _parse_power_model(obj: Any, where: str) -> PowerModel:
    _require(obj, where, {"shape", "idle_w", "max_w"}, set())
    try:
        shape = PowerShape(obj["shape"])
    except ValueError as exc:
        raise ConfigError(f"{where}.shape: unknown shape {obj['shape']!r}") from exc
    try:
        return PowerModel(shape, float(obj["idle_w"]), float(obj["max_w"]))
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_topology(path: str | Path) -> TopologySpec:
    path = Path(path)
    doc = _load_json(path)
    where = str(path)
    _require(doc, where, {"name", "hosts", "power_sources"}, {"batteries"})
    sources: list[PowerSourceSpec] = []
    for i, src in enumerate(doc["power_sources"]):
        w = f"{where}.power_sources[{i}]"
        _require(src, w, {"name"}, {"max_power_w", "carbon_trace"})
        sources.append(
            PowerSourceSpec(
                str(src["name"]),
                float(src["max_power_w"]) if "max_power_w" in src else None,
                src.get("carbon_trace"),
            )
        )
    if not sources:
        raise ConfigError(f"{where}.power_sources: at least one power source required")
    names = [s.name for s in sources]
    if len(set(names)) != len(names):
        raise ConfigError(f"{where}.power_sources: duplicate source name")

    groups: list[HostGroup] = []
    for i, grp in enumerate(doc["hosts"]):
        w = f"{where}.hosts[{i}]"
        _require(
            grp, w,
            {"name", "count", "cpu", "memory_mib", "embodied_kg"},
            {"gpu", "lifespan_h", "power_source"},
        )
        count = int(grp["count"])
        if count <= 0:
            raise ConfigError(f"{w}.count: must be positive")
        cw = f"{w}.cpu"
        _require(grp["cpu"], cw, {"core_count", "core_speed_mhz", "power_model"}, set())
        cpu = CpuSpec(
            int(grp["cpu"]["core_count"]),
            float(grp["cpu"]["core_speed_mhz"]),
            _parse_power_model(grp["cpu"]["power_model"], f"{cw}.power_model"),
        )
        if cpu.core_count <= 0 or cpu.core_speed_mhz <= 0:
            raise ConfigError(f"{cw}: core count and speed must be positive")
        gpu = None
        if "gpu" in grp:
            gw = f"{w}.gpu"
            _require(grp["gpu"], gw, {"count", "power_model"}, set())
            gpu = GpuSpec(int(grp["gpu"]["count"]), _parse_power_model(grp["gpu"]["power_model"], f"{gw}.power_model"))
            if gpu.count <= 0:
                raise ConfigError(f"{gw}.count: must be positive")
        src_name = grp.get("power_source", sources[0].name)
        if src_name not in names:
            raise ConfigError(f"{w}.power_source: unknown power source {src_name!r}")
        embodied = float(grp["embodied_kg"])
        lifespan = float(grp.get("lifespan_h", HOURS_5Y))
        if embodied <= 0 or lifespan <= 0:
            raise ConfigError(f"{w}: embodied carbon and lifespan must be positive")
        groups.append(
            HostGroup(str(grp["name"]), count, cpu, int(grp["memory_mib"]), embodied, lifespan, gpu, src_name)
        )
    if not groups:
        raise ConfigError(f"{where}.hosts: at least one host group required")
    group_names = [g.name for g in groups]
    if len(set(group_names)) != len(group_names):
        raise ConfigError(f"{where}.hosts: duplicate host group name")

    batteries: list[BatterySpec] = []
    for i, bat in enumerate(doc.get("batteries", [])):
        w = f"{where}.batteries[{i}]"
        batteries.append(_parse_battery(bat, w, names))
    bat_names = [b.name for b in batteries]
    if len(set(bat_names)) != len(bat_names):
        raise ConfigError(f"{where}.batteries: duplicate battery name")
    return TopologySpec(str(doc["name"]), tuple(groups), tuple(sources), tuple(batteries))


def _parse_battery(obj: Any, where: str, source_names: list[str]) -> BatterySpec:
    _require(
        obj, where,
        {"name", "capacity_kwh"},
        {"power_source", "c_rate", "discharge_cap_kw", "embodied_rate_kg_per_kwh",
         "lifespan_h", "efficiency", "initial_soc_kwh", "policy", "policy_window_ms"},
    )
    src = obj.get("power_source", source_names[0])
    if src not in source_names:
        raise ConfigError(f"{where}.power_source: unknown power source {src!r}")
    defaults = Battery(capacity_kwh=1.0)
    try:
        battery = Battery(
            capacity_kwh=float(obj["capacity_kwh"]),
            soc_kwh=float(obj.get("initial_soc_kwh", 0.0)),
            c_rate=float(obj.get("c_rate", defaults.c_rate)),
            discharge_cap_kw=float(obj["discharge_cap_kw"]) if "discharge_cap_kw" in obj else None,
            embodied_rate_kg_per_kwh=float(obj.get("embodied_rate_kg_per_kwh", defaults.embodied_rate_kg_per_kwh)),
            lifespan_h=float(obj.get("lifespan_h", defaults.lifespan_h)),
            efficiency=float(obj.get("efficiency", defaults.efficiency)),
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    policy = obj.get("policy", "battery_rolling_mean")
    if policy != "battery_rolling_mean":
        raise ConfigError(f"{where}.policy: unknown battery policy {policy!r}")
    window = int(obj.get("policy_window_ms", BatteryPolicy().window_ms))
    return BatterySpec(str(obj["name"]), src, battery, policy, window)


# --- experiment ---------------------------------------------------------

@dataclass(frozen=True)
class ScaleOverride:
    """Horizontal scaling: replace or scale the host count across runs."""

    host_count: int | None = None
    factor: float | None = None

    def apply(self, topology: TopologySpec) -> TopologySpec:
        groups = list(topology.hosts)
        if self.host_count is not None:
            if len(groups) != 1:
                raise ConfigError("host_count override requires a single host group")
            groups[0] = replace(groups[0], count=self.host_count)
        elif self.factor is not None:
            groups = [replace(g, count=max(1, round(g.count * self.factor))) for g in groups]
        return replace(topology, hosts=tuple(groups))


@dataclass(frozen=True)
class BatteryOverride:
    """Battery technique knobs; fills in for topologies without batteries."""

    capacity_kwh: float | None = None
    c_rate: float | None = None
    embodied_rate_kg_per_kwh: float | None = None
    efficiency: float | None = None

    def apply(self, topology: TopologySpec) -> TopologySpec:
        batteries = list(topology.batteries)
        if not batteries:
            if self.capacity_kwh is None:
                raise ConfigError("battery technique enabled but neither topology nor variant defines capacity_kwh")
            batteries = [BatterySpec("battery", topology.power_sources[0].name, Battery(self.capacity_kwh))]
        out = []
        for spec in batteries:
            b = spec.battery
            b = replace(
                b,
                capacity_kwh=self.capacity_kwh if self.capacity_kwh is not None else b.capacity_kwh,
                c_rate=self.c_rate if self.c_rate is not None else b.c_rate,
                embodied_rate_kg_per_kwh=(
                    self.embodied_rate_kg_per_kwh
                    if self.embodied_rate_kg_per_kwh is not None
                    else b.embodied_rate_kg_per_kwh
                ),
                efficiency=self.efficiency if self.efficiency is not None else b.efficiency,
            )
            out.append(replace(spec, battery=b))
        return replace(topology, batteries=tuple(out))


@dataclass(frozen=True)
class TechniqueVariant:
    """One point on the technique axis: which techniques are on, and how."""

    label: str
    battery: BatteryOverride | None = None
    shifting: ShiftPolicy | None = None
    stopper: StopperPolicy | None = None
    scale: ScaleOverride | None = None

    @property
    def is_baseline(self) -> bool:
        return self.battery is None and self.shifting is None and self.stopper is None and self.scale is None


@dataclass(frozen=True)
class SchedulerConfig:
    policy: str = "fifo"
    backfill: bool = False


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    topologies: tuple[str, ...]
    workloads: tuple[str, ...]
    carbon_traces: tuple[str, ...]
    technique_sets: tuple[TechniqueVariant, ...]
    seeds: tuple[int, ...]
    scheduler: SchedulerConfig = SchedulerConfig()
    failure_trace: str | None = None
    checkpoint: CheckpointConfig | None = None
    sla: SlaRule = SlaRule()
    export_interval_ms: int = 5 * MINUTE_MS
    outputs: tuple[str, ...] = ("service", "powerSource", "battery", "task")
    utilization_scale: float = 1.0
    base_dir: str = "."


_OUTPUT_TABLES = ("service", "powerSource", "battery", "host", "task")


def _num_list(value: Any) -> list[float]:
    return [float(v) for v in (value if isinstance(value, list) else [value])]


def _expand_technique(obj: Any, where: str) -> list[TechniqueVariant]:
    """Expand one technique-set entry; list-valued numeric knobs sweep."""
    _require(obj, where, set(), {"label", "battery", "shifting", "task_stopper", "horizontal_scale"})
    label = obj.get("label")

    scales: list[ScaleOverride | None] = [None]
    if "horizontal_scale" in obj:
        w = f"{where}.horizontal_scale"
        _require(obj["horizontal_scale"], w, set(), {"host_count", "factor"})
        hs = obj["horizontal_scale"]
        if ("host_count" in hs) == ("factor" in hs):
            raise ConfigError(f"{w}: exactly one of host_count / factor required")
        if "host_count" in hs:
            scales = [ScaleOverride(host_count=int(v)) for v in _num_list(hs["host_count"])]
        else:
            scales = [ScaleOverride(factor=float(v)) for v in _num_list(hs["factor"])]

    batteries: list[BatteryOverride | None] = [None]
    if "battery" in obj:
        w = f"{where}.battery"
        _require(obj["battery"], w, set(), {"capacity_kwh", "c_rate", "embodied_rate_kg_per_kwh", "efficiency"})
        b = obj["battery"]
        batteries = [
            BatteryOverride(cap, rate, emb, eff)
            for cap in ([None] if "capacity_kwh" not in b else _num_list(b["capacity_kwh"]))
            for rate in ([None] if "c_rate" not in b else _num_list(b["c_rate"]))
            for emb in ([None] if "embodied_rate_kg_per_kwh" not in b else _num_list(b["embodied_rate_kg_per_kwh"]))
            for eff in ([None] if "efficiency" not in b else _num_list(b["efficiency"]))
        ]

    shifting: ShiftPolicy | None = None
    if "shifting" in obj:
        w = f"{where}.shifting"
        _require(obj["shifting"], w, set(), {"percentile", "forecast_window_ms", "max_delay_ms"})
        s = obj["shifting"]
        d = ShiftPolicy()
        shifting = ShiftPolicy(
            float(s.get("percentile", d.percentile)),
            int(s.get("forecast_window_ms", d.forecast_window_ms)),
            int(s.get("max_delay_ms", d.max_delay_ms)),
        )

    stopper: StopperPolicy | None = None
    if "task_stopper" in obj:
        w = f"{where}.task_stopper"
        _require(obj["task_stopper"], w, set(), {"threshold", "percentile", "forecast_window_ms", "max_delay_ms"})
        s = obj["task_stopper"]
        d = StopperPolicy()
        stopper = StopperPolicy(
            float(s["threshold"]) if "threshold" in s else None,
            float(s.get("percentile", d.percentile)),
            int(s.get("forecast_window_ms", d.forecast_window_ms)),
            int(s.get("max_delay_ms", d.max_delay_ms)),
        )

    variants = []
    for scale in scales:
        for battery in batteries:
            parts = []
            if scale is not None:
                parts.append(f"hs[{scale.host_count if scale.host_count is not None else scale.factor}]")
            if battery is not None:
                knobs = ",".join(
                    f"{k}={v:g}"
                    for k, v in (
                        ("cap", battery.capacity_kwh),
                        ("rate", battery.c_rate),
                        ("emb", battery.embodied_rate_kg_per_kwh),
                        ("eff", battery.efficiency),
                    )
                    if v is not None
                )
                parts.append(f"battery[{knobs}]" if knobs else "battery")
            if shifting is not None:
                parts.append("shifting")
            if stopper is not None:
                parts.append("stopper")
            auto = "+".join(parts) if parts else "baseline"
            name = label if label is not None and len(scales) * len(batteries) == 1 else (
                f"{label}:{auto}" if label is not None else auto
            )
            variants.append(TechniqueVariant(name, battery, shifting, stopper, scale))
    return variants


def parse_experiment(path: str | Path) -> ExperimentSpec:
    path = Path(path)
    doc = _load_json(path)
    where = str(path)
    _require(
        doc, where,
        {"name", "topologies", "workloads", "carbon_traces", "seeds"},
        {"techniques", "scheduler", "failure_trace", "checkpoint_interval_ms",
         "checkpoint_snapshot_cost_ms", "sla_grace_ms", "export_interval_ms",
         "outputs", "utilization_scale"},
    )
    for axis in ("topologies", "workloads", "carbon_traces", "seeds"):
        if not isinstance(doc[axis], list) or not doc[axis]:
            raise ConfigError(f"{where}.{axis}: must be a non-empty list")
    seeds = tuple(int(s) for s in doc["seeds"])

    variants: list[TechniqueVariant] = []
    for i, entry in enumerate(doc.get("techniques", [])):
        variants.extend(_expand_technique(entry, f"{where}.techniques[{i}]"))
    if not any(v.is_baseline for v in variants):
        variants.insert(0, TechniqueVariant("baseline"))
    labels = [v.label for v in variants]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"{where}.techniques: duplicate technique label")

    sched = SchedulerConfig()
    if "scheduler" in doc:
        w = f"{where}.scheduler"
        _require(doc["scheduler"], w, set(), {"policy", "backfill"})
        policy = doc["scheduler"].get("policy", "fifo")
        if policy != "fifo":
            raise ConfigError(f"{w}.policy: unknown scheduler policy {policy!r}")
        sched = SchedulerConfig(policy, bool(doc["scheduler"].get("backfill", False)))

    checkpoint = None
    if "checkpoint_interval_ms" in doc:
        checkpoint = CheckpointConfig(
            int(doc["checkpoint_interval_ms"]),
            int(doc.get("checkpoint_snapshot_cost_ms", 0)),
        )
    elif "checkpoint_snapshot_cost_ms" in doc:
        raise ConfigError(f"{where}.checkpoint_snapshot_cost_ms: requires checkpoint_interval_ms")

    outputs = tuple(doc.get("outputs", ["service", "powerSource", "battery", "task"]))
    for table in outputs:
        if table not in _OUTPUT_TABLES:
            raise ConfigError(f"{where}.outputs: unknown table {table!r}")

    export = int(doc.get("export_interval_ms", 5 * MINUTE_MS))
    if export <= 0:
        raise ConfigError(f"{where}.export_interval_ms: must be positive")

    return ExperimentSpec(
        name=str(doc["name"]),
        topologies=tuple(str(p) for p in doc["topologies"]),
        workloads=tuple(str(p) for p in doc["workloads"]),
        carbon_traces=tuple(str(p) for p in doc["carbon_traces"]),
        technique_sets=tuple(variants),
        seeds=seeds,
        scheduler=sched,
        failure_trace=doc.get("failure_trace"),
        checkpoint=checkpoint,
        sla=SlaRule(int(doc.get("sla_grace_ms", SlaRule().grace_ms))),
        export_interval_ms=export,
        outputs=outputs,
        utilization_scale=float(doc.get("utilization_scale", 1.0)),
        base_dir=str(path.parent),
    )


# --- failure trace --------------------------------------------------------

FAILURE_COLUMNS = ("failure_start", "failure_duration", "failure_intensity")


def parse_failure_trace(path: str | Path) -> FailureTrace:
    """Read failure records: columns (failure_start, failure_duration,
    failure_intensity[, failure_hosts]). Intensity is a host fraction in
    (0, 1]; failure_hosts instead names an explicit host count."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        names = set(reader.fieldnames or ())
        missing = {"failure_start", "failure_duration"} - names
        if missing:
            raise ConfigError(f"{path}: missing columns {sorted(missing)}")
        if not {"failure_intensity", "failure_hosts"} & names:
            raise ConfigError(f"{path}: missing columns ['failure_intensity']")
        records = []
        for i, row in enumerate(reader):
            where = f"{path}: row {i + 1}"
            try:
                start = parse_timestamp(row["failure_start"])
                duration = int(float(row["failure_duration"]))
                intensity = row.get("failure_intensity")
                hosts = row.get("failure_hosts")
                fraction = float(intensity) if intensity not in (None, "") else None
                host_count = int(float(hosts)) if hosts not in (None, "") else None
                records.append(FailureRecord(start, duration, fraction, host_count))
            except ValueError as exc:
                raise ConfigError(f"{where}: {exc}") from exc
    return FailureTrace(tuple(records))


# --- serialization (round-trip support) -----------------------------------

def _load_json(path: Path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc


def topology_to_dict(spec: TopologySpec) -> dict:
    doc: dict[str, Any] = {
        "name": spec.name,
        "hosts": [],
        "power_sources": [],
    }
    for g in spec.hosts:
        grp: dict[str, Any] = {
            "name": g.name,
            "count": g.count,
            "cpu": {
                "core_count": g.cpu.core_count,
                "core_speed_mhz": g.cpu.core_speed_mhz,
                "power_model": _model_dict(g.cpu.power_model),
            },
            "memory_mib": g.memory_mib,
            "embodied_kg": g.embodied_kg,
            "lifespan_h": g.lifespan_h,
            "power_source": g.power_source,
        }
        if g.gpu is not None:
            grp["gpu"] = {"count": g.gpu.count, "power_model": _model_dict(g.gpu.power_model)}
        doc["hosts"].append(grp)
    for s in spec.power_sources:
        src: dict[str, Any] = {"name": s.name}
        if s.max_power_w is not None:
            src["max_power_w"] = s.max_power_w
        if s.carbon_trace is not None:
            src["carbon_trace"] = s.carbon_trace
        doc["power_sources"].append(src)
    if spec.batteries:
        doc["batteries"] = [
            {
                "name": b.name,
                "power_source": b.power_source,
                "capacity_kwh": b.battery.capacity_kwh,
                "initial_soc_kwh": b.battery.soc_kwh,
                "c_rate": b.battery.c_rate,
                **({"discharge_cap_kw": b.battery.discharge_cap_kw} if b.battery.discharge_cap_kw is not None else {}),
                "embodied_rate_kg_per_kwh": b.battery.embodied_rate_kg_per_kwh,
                "lifespan_h": b.battery.lifespan_h,
                "efficiency": b.battery.efficiency,
                "policy": b.policy_id,
                "policy_window_ms": b.policy_window_ms,
            }
            for b in spec.batteries
        ]
    return doc


def _model_dict(model: PowerModel) -> dict:
    return {"shape": model.shape.value, "idle_w": model.idle_w, "max_w": model.max_w}
