"""Carbon-aware operational policies and service-level accounting.

Boundary convention: "below the threshold" is inclusive (<=) for both the
shifting gate and the battery policy, fixed once here and covered by
truth-table tests.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .carbon import CarbonTrace
from .simtime import DAY_MS, HOUR_MS, SimTime, WEEK_MS


# --- temporal shifting -------------------------------------------------

@dataclass(frozen=True)
class ShiftPolicy:
    percentile: float = 35.0
    forecast_window_ms: int = WEEK_MS
    max_delay_ms: int = DAY_MS

    def __post_init__(self) -> None:
        if not 0.0 < self.percentile < 100.0:
            raise ValueError("percentile must be in (0, 100)")
        if self.max_delay_ms <= 0 or self.forecast_window_ms <= 0:
            raise ValueError("window and max delay must be positive")


def nearest_rank(values: Sequence[float], percentile: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    if not values:
        raise ValueError("empty window")
    rank = math.ceil(percentile / 100.0 * len(values))
    return sorted(values)[max(rank, 1) - 1]


def shifting_threshold(trace: CarbonTrace, now: SimTime, policy: ShiftPolicy) -> float:
    """Percentile of the forecast window [now, now + window) of the trace.

    The sample active at ``now`` is part of the window; a trace ending
    inside the window contributes its held last value once.
    """
    values = trace.window_values(now, now + policy.forecast_window_ms, closed="left")
    active = trace.intensity_at(now)
    if not values or trace.starts[trace.index_at(now)] < now:
        values = [active] + values
    return nearest_rank(values, policy.percentile)


class ShiftDecision(Enum):
    RUN_NOW = "run_now"
    DELAY = "delay"


def shift_decide(
    submission: SimTime,
    now: SimTime,
    threshold: float,
    current_ci: float,
    policy: ShiftPolicy,
) -> ShiftDecision:
    """Gate one task: run when the intensity is at or below threshold, or
    once the maximum delay since submission is reached."""
    if now - submission >= policy.max_delay_ms:
        return ShiftDecision.RUN_NOW
    if current_ci <= threshold:
        return ShiftDecision.RUN_NOW
    return ShiftDecision.DELAY


# --- battery dispatch ---------------------------------------------------

@dataclass(frozen=True)
class BatteryPolicy:
    window_ms: int = WEEK_MS

    def __post_init__(self) -> None:
        if self.window_ms <= 0:
            raise ValueError("window must be positive")


class BatteryAction(Enum):
    CHARGE = "charge"
    DISCHARGE = "discharge"
    HOLD = "hold"


def rolling_mean_threshold(trace: CarbonTrace, now: SimTime, policy: BatteryPolicy) -> float | None:
    """Arithmetic mean of trace samples in the trailing window (now - w, now].

    Before any history exists the policy holds (returns None); with less
    than a full window the mean is over the available samples.
    """
    values = trace.window_values(now - policy.window_ms, now, closed="right")
    if not values:
        return None
    return sum(values) / len(values)


def battery_decide(
    current_ci: float, previous_ci: float | None, threshold: float | None
) -> BatteryAction:
    """Threshold dispatch: discharge above, charge at or below — but only
    once the intensity has stopped decreasing."""
    if threshold is None:
        return BatteryAction.HOLD
    if current_ci > threshold:
        return BatteryAction.DISCHARGE
    if previous_ci is not None and current_ci >= previous_ci:
        return BatteryAction.CHARGE
    return BatteryAction.HOLD


# --- task stopping ------------------------------------------------------

@dataclass(frozen=True)
class StopperPolicy:
    """Pause running tasks while intensity exceeds the threshold.

    The threshold is either fixed or the same forward-window percentile
    the shifting gate uses. Tasks past ``max_delay_ms`` since submission
    are no longer stoppable, so every task eventually completes.
    """

    fixed_threshold: float | None = None
    percentile: float = 35.0
    forecast_window_ms: int = WEEK_MS
    max_delay_ms: int = DAY_MS


def stopper_threshold(trace: CarbonTrace, now: SimTime, policy: StopperPolicy) -> float:
    if policy.fixed_threshold is not None:
        return policy.fixed_threshold
    shift = ShiftPolicy(policy.percentile, policy.forecast_window_ms, policy.max_delay_ms)
    return shifting_threshold(trace, now, shift)


def stopper_decide(current_ci: float, threshold: float) -> bool:
    """True when running stoppable tasks should be paused."""
    return current_ci > threshold


# --- checkpointing ------------------------------------------------------

@dataclass(frozen=True)
class CheckpointConfig:
    interval_ms: int = HOUR_MS
    snapshot_cost_ms: int = 0  # extra work added on each restore

    def __post_init__(self) -> None:
        if self.interval_ms <= 0:
            raise ValueError("checkpoint interval must be positive")
        if self.snapshot_cost_ms < 0:
            raise ValueError("snapshot cost must be >= 0")


def checkpoint_restore(progress_ms: int, cfg: CheckpointConfig | None) -> int:
    """Progress retained after an interruption.

    Without checkpointing the task restarts from zero; with it, progress
    is kept at checkpoint granularity.
    """
    if progress_ms < 0:
        raise ValueError("progress must be >= 0")
    if cfg is None:
        return 0
    return (progress_ms // cfg.interval_ms) * cfg.interval_ms


# --- SLA ----------------------------------------------------------------

@dataclass(frozen=True)
class SlaRule:
    grace_ms: int = DAY_MS
    acceptable_violation_fraction: float = 0.01

    def __post_init__(self) -> None:
        if self.grace_ms < 0:
            raise ValueError("grace must be >= 0")


def sla_check(
    submission: SimTime, work_ms: int, finish: SimTime | None, rule: SlaRule
) -> bool:
    """True when the task violates its SLA.

    Expected completion is submission plus pure work time; finishing
    exactly at expected + grace is within the SLA. Unfinished tasks
    violate.
    """
    if finish is None:
        return True
    return finish > submission + work_ms + rule.grace_ms


# --- failure injection --------------------------------------------------

@dataclass(frozen=True)
class FailureRecord:
    start: SimTime
    duration_ms: int
    fraction: float | None = None
    host_count: int | None = None

    def __post_init__(self) -> None:
        if self.duration_ms <= 0:
            raise ValueError("failure duration must be positive")
        if (self.fraction is None) == (self.host_count is None):
            raise ValueError("exactly one of fraction / host_count must be set")
        if self.fraction is not None and not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"failure fraction {self.fraction} outside (0, 1]")
        if self.host_count is not None and self.host_count < 1:
            raise ValueError("failure host count must be >= 1")


@dataclass(frozen=True)
class FailureTrace:
    records: tuple[FailureRecord, ...]


def inject_failures(
    trace: FailureTrace, host_ids: Sequence[int], seed: int
) -> list[tuple[int, SimTime, int]]:
    """Expand a failure trace into (host, start, duration) events.

    For fractional records, ceil(fraction * host count) distinct hosts are
    drawn uniformly; the draw consumes one seeded stream in record order,
    so identical (trace, seed) inputs give identical selections.
    """
    rng = random.Random(seed)
    ordered = sorted(host_ids)
    out: list[tuple[int, SimTime, int]] = []
    for rec in sorted(trace.records, key=lambda r: r.start):
        if rec.host_count is not None:
            k = min(rec.host_count, len(ordered))
        else:
            k = math.ceil(rec.fraction * len(ordered))
        chosen = rng.sample(ordered, k)
        for host in sorted(chosen):
            out.append((host, rec.start, rec.duration_ms))
    return out
