"""Workload trace parsing: tasks plus their resource-demand fragments.

A workload is two files. The tasks file declares one row per task; the
fragments file holds each task's piecewise-constant demand timeline, in
execution order. Tasks may interleave freely in the fragments file but
the relative order of one task's fragments is its timeline.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .simtime import SimTime, parse_timestamp

TASK_COLUMNS = ("id", "submission_time", "duration", "cpu_count", "cpu_capacity", "mem_capacity", "gpu_count")
FRAGMENT_COLUMNS = ("id", "duration", "cpu_usage", "gpu_usage")


class WorkloadError(ValueError):
    """Malformed workload input; message carries file and row context."""


@dataclass(frozen=True)
class Fragment:
    duration_ms: int
    cpu_usage_mhz: float
    gpu_usage: float = 0.0


@dataclass(frozen=True)
class Task:
    id: str
    submission_ms: SimTime
    cpu_cores: int
    cpu_capacity_mhz: float
    memory_mib: int
    gpu_count: int
    fragments: tuple[Fragment, ...]
    deadline_ms: SimTime | None = None

    @property
    def work_ms(self) -> int:
        return sum(f.duration_ms for f in self.fragments)


@dataclass(frozen=True)
class Workload:
    tasks: tuple[Task, ...]  # sorted by (submission, id)

    @property
    def start_ms(self) -> SimTime:
        return self.tasks[0].submission_ms if self.tasks else 0


def _read_rows(path: Path, required: tuple[str, ...]) -> list[dict]:
    if path.suffix == ".parquet":
        try:
            import pandas as pd  # noqa: PLC0415

            rows = pd.read_parquet(path).to_dict("records")
        except ImportError as exc:
            raise WorkloadError(f"{path}: parquet support needs pandas+pyarrow installed") from exc
        if rows and not set(required) <= set(rows[0]):
            missing = sorted(set(required) - set(rows[0]))
            raise WorkloadError(f"{path}: missing columns {missing}")
        return rows
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        names = set(reader.fieldnames or ())
        if not set(required) <= names:
            missing = sorted(set(required) - names)
            raise WorkloadError(f"{path}: missing columns {missing}")
        return list(reader)


def parse_workload(
    tasks_path: str | Path,
    fragments_path: str | Path,
    utilization_scale: float = 1.0,
) -> Workload:
    """Join tasks with their fragments and validate the result.

    ``utilization_scale`` multiplies every fragment's CPU demand, the hook
    for traces that publish normalized rather than absolute utilization.
    """
    tasks_path, fragments_path = Path(tasks_path), Path(fragments_path)
    frag_by_task: dict[str, list[Fragment]] = {}
    for i, row in enumerate(_read_rows(fragments_path, FRAGMENT_COLUMNS)):
        where = f"{fragments_path}: row {i + 1}"
        try:
            task_id = str(row["id"])
            duration = int(float(row["duration"]))
            cpu = float(row["cpu_usage"]) * utilization_scale
            gpu = float(row["gpu_usage"]) if row.get("gpu_usage") not in (None, "") else 0.0
        except (ValueError, TypeError) as exc:
            raise WorkloadError(f"{where}: {exc}") from exc
        if duration <= 0:
            raise WorkloadError(f"{where}: fragment duration must be positive, got {duration}")
        if cpu < 0 or gpu < 0:
            raise WorkloadError(f"{where}: negative resource usage")
        frag_by_task.setdefault(task_id, []).append(Fragment(duration, cpu, gpu))

    tasks: list[Task] = []
    seen: set[str] = set()
    for i, row in enumerate(_read_rows(tasks_path, TASK_COLUMNS)):
        where = f"{tasks_path}: row {i + 1}"
        try:
            task_id = str(row["id"])
            submission = parse_timestamp(row["submission_time"])
            duration = int(float(row["duration"]))
            cores = int(float(row["cpu_count"]))
            capacity = float(row["cpu_capacity"])
            memory = int(float(row["mem_capacity"]))
            gpus = int(float(row["gpu_count"]))
            deadline_raw = row.get("deadline")
            deadline = parse_timestamp(deadline_raw) if deadline_raw not in (None, "") else None
        except (ValueError, TypeError) as exc:
            raise WorkloadError(f"{where}: {exc}") from exc
        if task_id in seen:
            raise WorkloadError(f"{where}: duplicate task id {task_id!r}")
        seen.add(task_id)
        if cores <= 0 or capacity < 0 or memory < 0 or gpus < 0:
            raise WorkloadError(f"{where}: non-positive resource request")
        frags = frag_by_task.pop(task_id, None)
        if not frags:
            raise WorkloadError(f"{where}: task {task_id!r} has no fragments")
        total = sum(f.duration_ms for f in frags)
        if total != duration:
            raise WorkloadError(
                f"{where}: task {task_id!r} duration {duration} != sum of fragments {total}"
            )
        requested_mhz = cores * capacity
        for frag in frags:
            if frag.cpu_usage_mhz > requested_mhz * (1 + 1e-9):
                raise WorkloadError(
                    f"{where}: fragment cpu usage {frag.cpu_usage_mhz} exceeds requested {requested_mhz}"
                )
            if frag.gpu_usage > 1.0 + 1e-9:
                raise WorkloadError(f"{where}: fragment gpu usage {frag.gpu_usage} exceeds 1.0")
            if frag.gpu_usage > 0 and gpus == 0:
                raise WorkloadError(f"{where}: gpu usage on a task requesting no GPU")
        tasks.append(Task(task_id, submission, cores, capacity, memory, gpus, tuple(frags), deadline))

    if frag_by_task:
        orphan = sorted(frag_by_task)[0]
        raise WorkloadError(f"{fragments_path}: fragments reference unknown task {orphan!r}")
    tasks.sort(key=lambda t: (t.submission_ms, t.id))
    return Workload(tuple(tasks))


def load_workload_dir(path: str | Path, utilization_scale: float = 1.0) -> Workload:
    """Load a workload directory holding tasks.csv and fragments.csv (or .parquet)."""
    path = Path(path)
    for ext in (".csv", ".parquet"):
        tasks = path / f"tasks{ext}"
        frags = path / f"fragments{ext}"
        if tasks.exists() and frags.exists():
            return parse_workload(tasks, frags, utilization_scale)
    raise WorkloadError(f"{path}: expected tasks.csv and fragments.csv (or .parquet)")


def write_workload(workload: Workload, path: str | Path) -> None:
    """Write a workload back to tasks.csv + fragments.csv (round-trip helper)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "tasks.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TASK_COLUMNS + ("deadline",))
        for t in workload.tasks:
            writer.writerow(
                [t.id, t.submission_ms, t.work_ms, t.cpu_cores, t.cpu_capacity_mhz,
                 t.memory_mib, t.gpu_count, "" if t.deadline_ms is None else t.deadline_ms]
            )
    with open(path / "fragments.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FRAGMENT_COLUMNS)
        for t in workload.tasks:
            for f in t.fragments:
                writer.writerow([t.id, f.duration_ms, f.cpu_usage_mhz, f.gpu_usage])


def summarize(tasks: Iterable[Task]) -> dict:
    """Manifest-style sanity numbers: task count and mean duration in seconds."""
    tasks = list(tasks)
    n = len(tasks)
    mean_s = sum(t.work_ms for t in tasks) / n / 1000.0 if n else 0.0
    return {"task_count": n, "mean_duration_s": mean_s}
