"""greendc: a trace-driven, composable datacenter simulator that quantifies
operational and embodied carbon, service quality, and power behavior under
sustainability techniques (horizontal scaling, batteries, temporal shifting)."""

from .battery import Battery, BatteryCommand, battery_step
from .carbon import (
    CarbonLedger,
    CarbonTrace,
    EmbodiedAsset,
    embodied_carbon,
    load_carbon_trace,
    operational_carbon,
)
from .config import ExperimentSpec, TopologySpec, parse_experiment, parse_failure_trace, parse_topology
from .engine import Engine, RunReport, SimulationError
from .graph import ComponentGraph, ComponentKind, EdgeKind
from .policies import (
    BatteryAction,
    BatteryPolicy,
    CheckpointConfig,
    ShiftDecision,
    ShiftPolicy,
    SlaRule,
    StopperPolicy,
    battery_decide,
    checkpoint_restore,
    inject_failures,
    rolling_mean_threshold,
    shift_decide,
    shifting_threshold,
    sla_check,
)
from .power import CalibrationResult, PowerModel, PowerShape, calibrate_power_model, device_power
from .sim import PolicyBundle, ProbeConfig, build_graph, simulate
from .workload import Fragment, Task, Workload, load_workload_dir, parse_workload

__version__ = "0.1.0"

__all__ = [
    "Battery",
    "BatteryAction",
    "BatteryCommand",
    "BatteryPolicy",
    "CalibrationResult",
    "CarbonLedger",
    "CarbonTrace",
    "CheckpointConfig",
    "ComponentGraph",
    "ComponentKind",
    "EdgeKind",
    "EmbodiedAsset",
    "Engine",
    "ExperimentSpec",
    "Fragment",
    "PolicyBundle",
    "PowerModel",
    "PowerShape",
    "ProbeConfig",
    "RunReport",
    "ShiftDecision",
    "ShiftPolicy",
    "SimulationError",
    "SlaRule",
    "StopperPolicy",
    "Task",
    "TopologySpec",
    "Workload",
    "battery_decide",
    "battery_step",
    "build_graph",
    "calibrate_power_model",
    "checkpoint_restore",
    "device_power",
    "embodied_carbon",
    "inject_failures",
    "load_carbon_trace",
    "load_workload_dir",
    "operational_carbon",
    "parse_experiment",
    "parse_failure_trace",
    "parse_topology",
    "parse_workload",
    "rolling_mean_threshold",
    "shift_decide",
    "shifting_threshold",
    "simulate",
    "sla_check",
]
