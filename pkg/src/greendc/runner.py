"""Experiment expansion and parallel execution.

An experiment file expands into a scenario matrix: the cross product of
topologies x workloads x carbon regions x technique sets x seeds, with a
baseline (all techniques off) always present. Each run is an isolated
single-threaded simulation writing its own output directory, so results
are identical at any parallelism degree.
"""

from __future__ import annotations

import hashlib
import json
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .analytic import naive_shift_savings, simulated_task_emission_g
from .carbon import load_carbon_trace
from .config import (
    ConfigError,
    ExperimentSpec,
    TechniqueVariant,
    parse_failure_trace,
    parse_topology,
)
from .metrics import (
    AggregationError,
    RunSummary,
    aggregate,
    read_summary_json,
    summarize_run,
    write_run_tables,
    write_summary_csv,
    write_summary_json,
)
from .sim import PolicyBundle, ProbeConfig, build_graph, simulate
from .workload import load_workload_dir


@dataclass(frozen=True)
class RunSpec:
    experiment: str
    topology_path: str
    workload_path: str
    carbon_trace_path: str
    variant: TechniqueVariant
    seed: int

    @property
    def topology_label(self) -> str:
        return Path(self.topology_path).stem

    @property
    def workload_label(self) -> str:
        return Path(self.workload_path).stem

    @property
    def region_label(self) -> str:
        return Path(self.carbon_trace_path).stem

    @property
    def run_id(self) -> str:
        key = json.dumps(
            [
                self.experiment, self.topology_label, self.workload_label,
                self.region_label, self.variant.label, self.seed,
            ],
            separators=(",", ":"),
        )
        return hashlib.sha1(key.encode()).hexdigest()[:12]


def expand(spec: ExperimentSpec) -> list[RunSpec]:
    """Deterministic lexicographic expansion over the declared axis order."""
    matrix = []
    for topology in spec.topologies:
        for workload in spec.workloads:
            for region in spec.carbon_traces:
                for variant in spec.technique_sets:
                    for seed in spec.seeds:
                        matrix.append(RunSpec(spec.name, topology, workload, region, variant, seed))
    return matrix


def _resolve(base_dir: str, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else Path(base_dir) / p


def run_one(
    run: RunSpec, spec: ExperimentSpec, out_dir: Path, analytic_compare: bool = False
) -> RunSummary:
    """Execute a single run and write its tables; pure in (run, spec, files)."""
    topology = parse_topology(_resolve(spec.base_dir, run.topology_path))
    variant = run.variant
    if variant.scale is not None:
        topology = variant.scale.apply(topology)
    if variant.battery is not None:
        topology = variant.battery.apply(topology)
    else:
        # batteries are a technique: off in this variant means zero battery components
        topology = replace(topology, batteries=())
    workload = load_workload_dir(_resolve(spec.base_dir, run.workload_path), spec.utilization_scale)
    trace = load_carbon_trace(_resolve(spec.base_dir, run.carbon_trace_path))
    failure = (
        parse_failure_trace(_resolve(spec.base_dir, spec.failure_trace))
        if spec.failure_trace is not None
        else None
    )
    policies = PolicyBundle(
        scheduler=spec.scheduler,
        shifting=variant.shifting,
        stopper=variant.stopper,
        failure_trace=failure,
        checkpoint=spec.checkpoint,
        sla=spec.sla,
    )
    graph = build_graph(topology, policies, trace)
    probe = ProbeConfig(spec.export_interval_ms, spec.outputs)
    report = simulate(
        graph, workload, probe, seed=run.seed, sla=spec.sla,
        keep_exec_segments=analytic_compare and variant.shifting is not None,
    )
    summary = summarize_run(
        report,
        experiment=spec.name,
        run_id=run.run_id,
        topology=run.topology_label,
        workload=run.workload_label,
        region=run.region_label,
        techniques=variant.label,
        seed=run.seed,
    )
    run_dir = out_dir / run.run_id
    write_run_tables(report, run_dir, spec.outputs)
    if analytic_compare and variant.shifting is not None:
        _write_analytic_compare(run_dir, topology, workload, trace, variant, report)
    write_summary_json(summary, report.warnings, run_dir / "summary.json")
    return summary


def _write_analytic_compare(run_dir, topology, workload, trace, variant, report) -> None:
    import csv

    group = topology.hosts[0]
    estimate = naive_shift_savings(
        workload, trace, variant.shifting, group.cpu.power_model, group.cpu.capacity_mhz
    )
    with open(run_dir / "analytic_compare.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task_id", "naive_saving_g", "simulated_saving_g"])
        for row in estimate.tasks:
            actual = simulated_task_emission_g(
                report.task_exec_segments.get(row.task_id, []),
                trace, group.cpu.power_model, group.cpu.capacity_mhz,
            )
            writer.writerow([row.task_id, repr(row.saving_g), repr(row.original_emission_g - actual)])


def _worker(args: tuple[RunSpec, ExperimentSpec, str, bool]) -> tuple[str, RunSummary | None, str | None]:
    run, spec, out_dir, analytic_compare = args
    try:
        summary = run_one(run, spec, Path(out_dir), analytic_compare)
        return run.run_id, summary, None
    except Exception:  # noqa: BLE001 - a failed run must not abort siblings
        return run.run_id, None, traceback.format_exc()


def run_all(
    spec: ExperimentSpec,
    output_root: Path,
    parallelism: int = 1,
    resume: bool = False,
    analytic_compare: bool = False,
) -> int:
    """Execute the full matrix; returns the process exit code (0/1)."""
    if parallelism < 1:
        raise ConfigError("parallelism must be >= 1")
    matrix = expand(spec)
    out_dir = output_root / spec.name
    existing = [p for p in (out_dir.glob("*") if out_dir.exists() else []) if p.is_dir()]
    if existing and not resume:
        raise ConfigError(
            f"output directory {out_dir} already holds runs; pass --resume to fill in missing ones"
        )
    out_dir.mkdir(parents=True, exist_ok=True)

    todo: list[RunSpec] = []
    summaries: dict[str, RunSummary] = {}
    for run in matrix:
        done_marker = out_dir / run.run_id / "summary.json"
        if resume and done_marker.exists():
            summaries[run.run_id] = read_summary_json(done_marker)
        else:
            todo.append(run)

    failures: list[tuple[str, str]] = []
    args = [(run, spec, str(out_dir), analytic_compare) for run in todo]
    if parallelism == 1 or len(todo) <= 1:
        results = map(_worker, args)
    else:
        pool = ProcessPoolExecutor(max_workers=parallelism)
        results = pool.map(_worker, args)
    for run_id, summary, error in results:
        if error is not None:
            failures.append((run_id, error))
            run_dir = out_dir / run_id
            run_dir.mkdir(parents=True, exist_ok=True)
            (run_dir / "error.txt").write_text(error)
        else:
            summaries[run_id] = summary
    if parallelism > 1 and len(todo) > 1:
        pool.shutdown()

    ordered = [summaries[r.run_id] for r in matrix if r.run_id in summaries]
    write_summary_csv([s.row() + ("",) for s in ordered], out_dir / "runs.csv")
    exit_code = 1 if failures else 0
    try:
        rows = aggregate(ordered)
        write_summary_csv(rows, out_dir / "summary.csv")
    except AggregationError as exc:
        (out_dir / "aggregation_error.txt").write_text(str(exc) + "\n")
        exit_code = 1
    for run_id, error in failures:
        print(f"run {run_id} FAILED:\n{error}")
    return exit_code
