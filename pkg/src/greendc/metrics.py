"""Output tables, run summaries, and cross-run aggregation.

CSV is the canonical output format. Numbers are written with repr so the
files are byte-identical for identical runs regardless of worker count or
process order.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .engine import RunReport
from .simtime import hours, kwh

SERVICE_COLUMNS = ("timestamp", "tasks_pending", "tasks_active", "tasks_completed", "tasks_terminated")
POWER_COLUMNS = ("timestamp", "source_id", "power_draw_W", "energy_usage_J", "carbon_intensity", "carbon_emission_g")
BATTERY_COLUMNS = ("timestamp", "battery_id", "soc_kWh", "mode", "power_W")
HOST_COLUMNS = ("timestamp", "host_id", "cpu_utilization", "power_draw_W")
TASK_COLUMNS = ("task_id", "submission", "start", "finish", "delay_ms", "sla_violated")

SUMMARY_COLUMNS = (
    "experiment", "run_id", "topology", "workload", "region", "techniques", "seed",
    "operational_g", "embodied_g", "total_g", "energy_kWh", "peak_power_W",
    "mean_task_delay_h", "sla_violation_fraction", "makespan_h",
    "tasks_total", "tasks_completed",
)


def _fmt(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, columns: tuple[str, ...], rows: list[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


@dataclass(frozen=True)
class RunSummary:
    experiment: str
    run_id: str
    topology: str
    workload: str
    region: str
    techniques: str
    seed: int
    operational_g: float
    embodied_g: float
    total_g: float
    energy_kwh: float
    peak_power_w: float
    mean_task_delay_h: float
    sla_violation_fraction: float
    makespan_h: float
    tasks_total: int
    tasks_completed: int

    def row(self) -> tuple:
        return (
            self.experiment, self.run_id, self.topology, self.workload, self.region,
            self.techniques, self.seed, self.operational_g, self.embodied_g, self.total_g,
            self.energy_kwh, self.peak_power_w, self.mean_task_delay_h,
            self.sla_violation_fraction, self.makespan_h, self.tasks_total, self.tasks_completed,
        )


def summarize_run(
    report: RunReport,
    *,
    experiment: str,
    run_id: str,
    topology: str,
    workload: str,
    region: str,
    techniques: str,
    seed: int,
) -> RunSummary:
    finished = [r for r in report.task_rows if r.delay_ms is not None]
    violations = sum(1 for r in report.task_rows if r.sla_violated)
    total = len(report.task_rows)
    return RunSummary(
        experiment=experiment,
        run_id=run_id,
        topology=topology,
        workload=workload,
        region=region,
        techniques=techniques,
        seed=seed,
        operational_g=report.operational_g,
        embodied_g=report.embodied_g,
        total_g=report.total_g,
        energy_kwh=kwh(report.energy_j),
        peak_power_w=report.peak_power_w,
        mean_task_delay_h=(
            sum(hours(r.delay_ms) for r in finished) / len(finished) if finished else 0.0
        ),
        sla_violation_fraction=(violations / total if total else 0.0),
        makespan_h=hours(report.makespan_ms),
        tasks_total=total,
        tasks_completed=len(finished),
    )


def write_run_tables(report: RunReport, out_dir: Path, outputs: tuple[str, ...]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    if "service" in outputs:
        _write_csv(out_dir / "service.csv", SERVICE_COLUMNS, report.service_rows)
    if "powerSource" in outputs:
        _write_csv(out_dir / "powerSource.csv", POWER_COLUMNS, report.power_rows)
    if "battery" in outputs:
        _write_csv(out_dir / "battery.csv", BATTERY_COLUMNS, report.battery_rows)
    if "host" in outputs:
        _write_csv(out_dir / "host.csv", HOST_COLUMNS, report.host_rows)
    if "task" in outputs:
        rows = [
            (r.task_id, r.submission_ms, r.start_ms, r.finish_ms, r.delay_ms, r.sla_violated)
            for r in report.task_rows
        ]
        _write_csv(out_dir / "task.csv", TASK_COLUMNS, rows)


def write_summary_json(summary: RunSummary, warnings: list[str], path: Path) -> None:
    doc = asdict(summary)
    doc["warnings"] = warnings
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_summary_json(path: Path) -> RunSummary:
    with open(path) as fh:
        doc = json.load(fh)
    doc.pop("warnings", None)
    return RunSummary(**doc)


class AggregationError(ValueError):
    pass


BASELINE_LABEL = "baseline"


def aggregate(summaries: list[RunSummary]) -> list[tuple]:
    """Per-run rows with carbon reduction against the matching baseline,
    plus per-(axes, technique) mean rows over seeds (seed column "mean").

    The baseline for a run shares its (topology, workload, region, seed)
    and has all techniques off. Reductions keep their sign: a technique
    that increases emissions aggregates negative.
    """
    baselines: dict[tuple, RunSummary] = {}
    for s in summaries:
        if s.techniques == BASELINE_LABEL:
            baselines[(s.topology, s.workload, s.region, s.seed)] = s
    rows: list[tuple] = []
    grouped: dict[tuple, list[tuple[RunSummary, float]]] = {}
    for s in sorted(summaries, key=lambda s: (s.topology, s.workload, s.region, s.techniques, s.seed)):
        base = baselines.get((s.topology, s.workload, s.region, s.seed))
        if base is None:
            raise AggregationError(
                f"run {s.run_id} ({s.techniques!r}, seed {s.seed}) has no baseline for "
                f"({s.topology}, {s.workload}, {s.region})"
            )
        if base.total_g == 0.0:
            reduction = 0.0
        else:
            reduction = 100.0 * (base.total_g - s.total_g) / base.total_g
        rows.append(s.row() + (reduction,))
        grouped.setdefault((s.topology, s.workload, s.region, s.techniques), []).append((s, reduction))

    mean_rows: list[tuple] = []
    for key in sorted(grouped):
        group = grouped[key]
        n = len(group)
        first = group[0][0]
        mean_rows.append(
            (
                first.experiment, "", key[0], key[1], key[2], key[3], "mean",
                sum(s.operational_g for s, _ in group) / n,
                sum(s.embodied_g for s, _ in group) / n,
                sum(s.total_g for s, _ in group) / n,
                sum(s.energy_kwh for s, _ in group) / n,
                sum(s.peak_power_w for s, _ in group) / n,
                sum(s.mean_task_delay_h for s, _ in group) / n,
                sum(s.sla_violation_fraction for s, _ in group) / n,
                sum(s.makespan_h for s, _ in group) / n,
                sum(s.tasks_total for s, _ in group) / n,
                sum(s.tasks_completed for s, _ in group) / n,
                sum(r for _, r in group) / n,
            )
        )
    return rows + mean_rows


def write_summary_csv(rows: list[tuple], path: Path) -> None:
    _write_csv(path, SUMMARY_COLUMNS + ("carbon_reduction_pct",), rows)
