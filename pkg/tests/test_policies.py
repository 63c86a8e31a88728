"""Policy truth tables: shifting gate, battery dispatch, stopper, SLA,
checkpointing, and failure injection."""

import math

import pytest
from hypothesis import given, settings, strategies as st

from greendc.carbon import CarbonTrace
from greendc.policies import (
    BatteryAction,
    BatteryPolicy,
    CheckpointConfig,
    FailureRecord,
    FailureTrace,
    ShiftDecision,
    ShiftPolicy,
    SlaRule,
    battery_decide,
    checkpoint_restore,
    inject_failures,
    nearest_rank,
    rolling_mean_threshold,
    shift_decide,
    shifting_threshold,
    sla_check,
    stopper_decide,
)
from greendc.simtime import DAY_MS, HOUR_MS, MINUTE_MS


def hourly_trace(values, start=0) -> CarbonTrace:
    starts = tuple(start + i * HOUR_MS for i in range(len(values)))
    return CarbonTrace(starts, tuple(float(v) for v in values), "t")


# --- shifting threshold -----------------------------------------------------

def test_nearest_rank_ten_values():
    # n=10, p=35: rank ceil(3.5)=4 -> 4th smallest
    assert nearest_rank([10, 20, 30, 40, 50, 60, 70, 80, 90, 100], 35.0) == 40


def test_threshold_constant_window():
    trace = hourly_trace([120] * 24)
    assert shifting_threshold(trace, 0, ShiftPolicy()) == 120


def test_threshold_168_hourly_samples_rank59():
    values = list(range(1, 169))  # distinct values so the rank is visible
    trace = hourly_trace(values)
    # rank = ceil(0.35 * 168) = 59 -> 59th smallest = 59
    assert math.ceil(0.35 * 168) == 59
    assert shifting_threshold(trace, 0, ShiftPolicy()) == 59


def test_threshold_window_excludes_past_and_far_future():
    # sample active at `now` counts; samples past now+window do not
    values = [1000.0] * 5 + [10, 20, 30, 40, 50, 60, 70, 80, 90, 100] + [0.0] * 5
    trace = hourly_trace(values)
    policy = ShiftPolicy(percentile=35.0, forecast_window_ms=10 * HOUR_MS)
    assert shifting_threshold(trace, 5 * HOUR_MS, policy) == 40


def test_threshold_mid_interval_includes_active_sample():
    trace = hourly_trace([10, 20, 30, 40])
    policy = ShiftPolicy(forecast_window_ms=2 * HOUR_MS, percentile=35.0)
    # at t=30m the active sample (10) plus starts within [t, t+2h): 20, 30
    # n=3, rank ceil(1.05)=2 -> 20
    assert shifting_threshold(trace, 30 * MINUTE_MS, policy) == 20


def test_threshold_empty_trace_errors():
    with pytest.raises(ValueError):
        nearest_rank([], 35.0)


# --- shifting gate ----------------------------------------------------------

def test_shift_delay_above_threshold():
    decision = shift_decide(0, 2 * HOUR_MS, 150.0, 200.0, ShiftPolicy())
    assert decision is ShiftDecision.DELAY


def test_shift_max_delay_fallback():
    decision = shift_decide(0, 24 * HOUR_MS, 150.0, 200.0, ShiftPolicy())
    assert decision is ShiftDecision.RUN_NOW


def test_shift_boundary_inclusive():
    decision = shift_decide(0, HOUR_MS, 150.0, 150.0, ShiftPolicy())
    assert decision is ShiftDecision.RUN_NOW


def test_shift_below_threshold_runs():
    assert shift_decide(0, 0, 150.0, 100.0, ShiftPolicy()) is ShiftDecision.RUN_NOW


# --- battery policy -----------------------------------------------------------

def test_battery_discharge_above_threshold():
    assert battery_decide(200.0, 190.0, 150.0) is BatteryAction.DISCHARGE


def test_battery_hold_while_falling():
    assert battery_decide(120.0, 130.0, 150.0) is BatteryAction.HOLD


def test_battery_charge_once_rising():
    assert battery_decide(120.0, 110.0, 150.0) is BatteryAction.CHARGE


def test_battery_charge_at_boundary_and_flat():
    assert battery_decide(150.0, 150.0, 150.0) is BatteryAction.CHARGE


def test_battery_holds_without_threshold_or_trend():
    assert battery_decide(120.0, None, None) is BatteryAction.HOLD
    assert battery_decide(120.0, None, 150.0) is BatteryAction.HOLD
    assert battery_decide(200.0, None, 150.0) is BatteryAction.DISCHARGE


def test_rolling_mean_matches_sliding_window_oracle():
    values = [100 + 10 * (i % 17) for i in range(24 * 20)]
    trace = hourly_trace(values)
    policy = BatteryPolicy()
    for now_h in range(0, 24 * 20, 7):
        now = now_h * HOUR_MS
        # oracle: plain sliding window over sample times in (now-7d, now]
        window = [
            v for t, v in zip(trace.starts, trace.intensities)
            if now - 7 * DAY_MS < t <= now
        ]
        expected = sum(window) / len(window)
        assert rolling_mean_threshold(trace, now, policy) == pytest.approx(expected)


def test_rolling_mean_before_first_sample_holds():
    trace = hourly_trace([100, 200], start=10 * HOUR_MS)
    assert rolling_mean_threshold(trace, 0, BatteryPolicy()) is None


def test_rolling_mean_bootstrap_uses_available_history():
    trace = hourly_trace([100, 200, 300])
    assert rolling_mean_threshold(trace, 2 * HOUR_MS, BatteryPolicy()) == pytest.approx(200.0)


# --- stopper -------------------------------------------------------------------

def test_stopper_truth_table():
    assert stopper_decide(200.0, 150.0) is True
    assert stopper_decide(150.0, 150.0) is False
    assert stopper_decide(100.0, 150.0) is False


# --- checkpointing ---------------------------------------------------------------

def test_checkpoint_three_hours_forty_minutes():
    progress = 3 * HOUR_MS + 40 * MINUTE_MS
    assert checkpoint_restore(progress, CheckpointConfig(HOUR_MS)) == 3 * HOUR_MS


def test_checkpoint_exact_boundary_loses_nothing():
    assert checkpoint_restore(4 * HOUR_MS, CheckpointConfig(HOUR_MS)) == 4 * HOUR_MS


def test_no_checkpointing_restarts_from_zero():
    assert checkpoint_restore(3 * HOUR_MS + 40 * MINUTE_MS, None) == 0


# --- SLA --------------------------------------------------------------------------

def test_sla_within_grace_not_violated():
    # submit 0, work 2 h, finish 25 h: delay 23 h <= 24 h
    assert sla_check(0, 2 * HOUR_MS, 25 * HOUR_MS, SlaRule()) is False


def test_sla_past_grace_violated():
    assert sla_check(0, 2 * HOUR_MS, 27 * HOUR_MS, SlaRule()) is True


def test_sla_exact_boundary_inclusive():
    assert sla_check(0, 2 * HOUR_MS, 26 * HOUR_MS, SlaRule()) is False


def test_sla_unfinished_counts_as_violated():
    assert sla_check(0, HOUR_MS, None, SlaRule()) is True


# --- failure injection ---------------------------------------------------------------

def test_fraction_one_fails_all_hosts():
    trace = FailureTrace((FailureRecord(0, HOUR_MS, fraction=1.0),))
    events = inject_failures(trace, range(5), seed=7)
    assert sorted(h for h, _, _ in events) == [0, 1, 2, 3, 4]


def test_failure_determinism_per_seed():
    trace = FailureTrace(
        (FailureRecord(0, HOUR_MS, fraction=0.4), FailureRecord(HOUR_MS, HOUR_MS, fraction=0.6))
    )
    a = inject_failures(trace, range(10), seed=42)
    b = inject_failures(trace, range(10), seed=42)
    c = inject_failures(trace, range(10), seed=43)
    assert a == b
    assert a != c


def test_fraction_ceiling_rule():
    trace = FailureTrace((FailureRecord(0, HOUR_MS, fraction=0.25),))
    events = inject_failures(trace, range(10), seed=1)
    assert len(events) == 3  # ceil(2.5)


def test_explicit_host_count():
    trace = FailureTrace((FailureRecord(0, HOUR_MS, host_count=2),))
    events = inject_failures(trace, range(10), seed=1)
    assert len(events) == 2


def test_failure_record_validation():
    with pytest.raises(ValueError, match=r"outside \(0, 1\]"):
        FailureRecord(0, HOUR_MS, fraction=1.5)
    with pytest.raises(ValueError, match="duration"):
        FailureRecord(0, 0, fraction=0.5)
    with pytest.raises(ValueError, match="exactly one"):
        FailureRecord(0, HOUR_MS, fraction=0.5, host_count=2)
    with pytest.raises(ValueError, match="exactly one"):
        FailureRecord(0, HOUR_MS)


@settings(max_examples=200, deadline=None)
@given(
    n_hosts=st.integers(1, 40),
    fraction=st.floats(0.01, 1.0),
    seed=st.integers(0, 2**31),
)
def test_fraction_rule_properties(n_hosts, fraction, seed):
    trace = FailureTrace((FailureRecord(0, HOUR_MS, fraction=fraction),))
    events = inject_failures(trace, range(n_hosts), seed=seed)
    hosts = [h for h, _, _ in events]
    assert len(hosts) == len(set(hosts)) == math.ceil(fraction * n_hosts)
    assert all(0 <= h < n_hosts for h in hosts)
