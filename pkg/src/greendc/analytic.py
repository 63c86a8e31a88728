"""Analytical estimators and brute-force oracles.

The naive shifting estimator prices each task in isolation: unconstrained
capacity, zero idle power, no failures. It is deliberately the optimistic
model that a full simulation corrects, and shares the real policy's
threshold rule so a comparison isolates modeling fidelity.
"""

from __future__ import annotations

from dataclasses import dataclass

from .carbon import CarbonTrace, operational_carbon
from .policies import ShiftDecision, ShiftPolicy, shift_decide, shifting_threshold
from .power import PowerModel, power_curve
from .simtime import SimTime
from .workload import Task, Workload

_INF = 2**62


def brute_force_carbon(
    segments: list[tuple[SimTime, SimTime, float]], trace: CarbonTrace
) -> float:
    """Independent operational-carbon oracle: enumerate every
    (segment, trace-interval) overlap explicitly. Segments must be disjoint."""
    ordered = sorted(segments)
    for (s0, e0, _), (s1, _e1, _) in zip(ordered, ordered[1:]):
        if e0 > s1:
            raise ValueError(f"overlapping segments at t={s1}")
    starts = trace.starts
    intervals: list[tuple[SimTime, SimTime, float]] = [(-_INF, starts[0], trace.intensities[0])]
    for i in range(len(starts) - 1):
        intervals.append((starts[i], starts[i + 1], trace.intensities[i]))
    intervals.append((starts[-1], _INF, trace.intensities[-1]))
    total = 0.0
    for seg_start, seg_end, watts in ordered:
        for lo, hi, ci in intervals:
            overlap = min(seg_end, hi) - max(seg_start, lo)
            if overlap > 0:
                total += watts * overlap / 1000.0 / 3.6e6 * ci
    return total


def marginal_power_w(model: PowerModel, usage_mhz: float, capacity_mhz: float) -> float:
    """Idle-free device power for one task's demand: (max - idle) * f(u)."""
    u = min(1.0, max(0.0, usage_mhz / capacity_mhz))
    return (model.max_w - model.idle_w) * power_curve(model.shape, u)


def task_power_timeline(
    task: Task, start: SimTime, model: PowerModel, capacity_mhz: float
) -> list[tuple[SimTime, SimTime, float]]:
    segments = []
    t = start
    for frag in task.fragments:
        segments.append((t, t + frag.duration_ms, marginal_power_w(model, frag.cpu_usage_mhz, capacity_mhz)))
        t += frag.duration_ms
    return segments


def task_emission_g(
    task: Task, start: SimTime, trace: CarbonTrace, model: PowerModel, capacity_mhz: float
) -> float:
    timeline = task_power_timeline(task, start, model, capacity_mhz)
    return operational_carbon(timeline, trace, start, start + task.work_ms)


def naive_shifted_start(
    task: Task, trace: CarbonTrace, policy: ShiftPolicy
) -> SimTime:
    """Earliest policy-admissible start, evaluated at submission and at every
    trace sample, capped at submission + max delay."""
    deadline = task.submission_ms + policy.max_delay_ms
    eval_times = [task.submission_ms]
    for s in trace.starts:
        if task.submission_ms < s < deadline:
            eval_times.append(s)
    for t in eval_times:
        threshold = shifting_threshold(trace, t, policy)
        ci = trace.intensity_at(t)
        if shift_decide(task.submission_ms, t, threshold, ci, policy) is ShiftDecision.RUN_NOW:
            return t
    return deadline


@dataclass(frozen=True)
class NaiveTaskEstimate:
    task_id: str
    original_start: SimTime
    shifted_start: SimTime
    original_emission_g: float
    shifted_emission_g: float
    original_ci: float
    shifted_ci: float

    @property
    def saving_g(self) -> float:
        return self.original_emission_g - self.shifted_emission_g


@dataclass(frozen=True)
class NaiveShiftEstimate:
    tasks: tuple[NaiveTaskEstimate, ...]

    @property
    def mean_saving_g(self) -> float:
        if not self.tasks:
            return 0.0
        return sum(t.saving_g for t in self.tasks) / len(self.tasks)


def naive_shift_savings(
    workload: Workload,
    trace: CarbonTrace,
    policy: ShiftPolicy,
    model: PowerModel,
    capacity_mhz: float,
) -> NaiveShiftEstimate:
    """The analytical estimator a simulation corrects: every task is priced
    in isolation at its original and policy-delayed start times."""
    rows = []
    for task in workload.tasks:
        original = task.submission_ms
        shifted = naive_shifted_start(task, trace, policy)
        rows.append(
            NaiveTaskEstimate(
                task_id=task.id,
                original_start=original,
                shifted_start=shifted,
                original_emission_g=task_emission_g(task, original, trace, model, capacity_mhz),
                shifted_emission_g=task_emission_g(task, shifted, trace, model, capacity_mhz),
                original_ci=trace.intensity_at(original),
                shifted_ci=trace.intensity_at(shifted),
            )
        )
    return NaiveShiftEstimate(tuple(rows))


def simulated_task_emission_g(
    exec_segments: list[tuple[SimTime, SimTime, float, float]],
    trace: CarbonTrace,
    model: PowerModel,
    capacity_mhz: float,
) -> float:
    """Marginal-power emission over a task's actual executed segments,
    including any work lost and redone after failures."""
    timeline = [
        (t0, t1, marginal_power_w(model, mhz, capacity_mhz))
        for t0, t1, mhz, _gpu in exec_segments
    ]
    if not timeline:
        return 0.0
    lo = min(t0 for t0, _, _ in timeline)
    hi = max(t1 for _, t1, _ in timeline)
    return operational_carbon(timeline, trace, lo, hi)
