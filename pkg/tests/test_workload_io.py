"""Parsers: workload traces, topologies, experiments, failure traces."""

import json

import pytest

from greendc.config import (
    ConfigError,
    parse_experiment,
    parse_failure_trace,
    parse_topology,
    topology_to_dict,
)
from greendc.simtime import HOUR_MS
from greendc.workload import WorkloadError, parse_workload, summarize


TASKS_HEADER = "id,submission_time,duration,cpu_count,cpu_capacity,mem_capacity,gpu_count\n"
FRAGS_HEADER = "id,duration,cpu_usage,gpu_usage\n"


def write_workload(tmp_path, tasks: str, frags: str):
    tp = tmp_path / "tasks.csv"
    fp = tmp_path / "fragments.csv"
    tp.write_text(TASKS_HEADER + tasks)
    fp.write_text(FRAGS_HEADER + frags)
    return tp, fp


def test_two_tasks_one_fragment_each(tmp_path):
    tp, fp = write_workload(
        tmp_path,
        "a,0,3600000,2,1000,1024,0\nb,1000,7200000,1,2000,512,0\n",
        "a,3600000,1500,0\nb,7200000,800,0\n",
    )
    wl = parse_workload(tp, fp)
    assert [t.id for t in wl.tasks] == ["a", "b"]
    assert wl.tasks[0].work_ms == 3600000
    assert wl.tasks[1].work_ms == 7200000
    assert wl.tasks[0].fragments[0].cpu_usage_mhz == 1500.0


def test_interleaved_fragments_equal_sorted_parse(tmp_path):
    # Fragment rows for different tasks interleave freely on disk; each
    # task's own rows stay in timeline order. Parsing must not care.
    tasks = "a,0,3000,1,1000,1,0\nb,0,3000,1,1000,1,0\n"
    sorted_frags = "a,1000,100,0\na,2000,200,0\nb,1000,300,0\nb,2000,400,0\n"
    interleaved = "b,1000,300,0\na,1000,100,0\nb,2000,400,0\na,2000,200,0\n"
    d1 = tmp_path / "sorted"
    d2 = tmp_path / "shuffled"
    d1.mkdir(), d2.mkdir()
    wl1 = parse_workload(*write_workload(d1, tasks, sorted_frags))
    wl2 = parse_workload(*write_workload(d2, tasks, interleaved))
    assert wl1 == wl2


def test_dangling_fragment_rejected(tmp_path):
    tp, fp = write_workload(tmp_path, "a,0,1000,1,1000,1,0\n", "a,1000,1,0\nzz,5,1,0\n")
    with pytest.raises(WorkloadError, match="unknown task 'zz'"):
        parse_workload(tp, fp)


def test_task_without_fragments_rejected(tmp_path):
    tp, fp = write_workload(tmp_path, "a,0,1000,1,1000,1,0\nb,0,9,1,1000,1,0\n", "a,1000,1,0\n")
    with pytest.raises(WorkloadError, match="no fragments"):
        parse_workload(tp, fp)


def test_duration_mismatch_rejected(tmp_path):
    tp, fp = write_workload(tmp_path, "a,0,5000,1,1000,1,0\n", "a,1000,1,0\n")
    with pytest.raises(WorkloadError, match="duration 5000 != sum of fragments 1000"):
        parse_workload(tp, fp)


def test_negative_duration_rejected(tmp_path):
    tp, fp = write_workload(tmp_path, "a,0,-1000,1,1000,1,0\n", "a,-1000,1,0\n")
    with pytest.raises(WorkloadError, match="positive"):
        parse_workload(tp, fp)


def test_missing_column_rejected(tmp_path):
    tp = tmp_path / "tasks.csv"
    tp.write_text("id,submission_time\nz,0\n")
    fp = tmp_path / "fragments.csv"
    fp.write_text(FRAGS_HEADER + "z,1,1,0\n")
    with pytest.raises(WorkloadError, match="missing columns"):
        parse_workload(tp, fp)


def test_usage_above_request_rejected(tmp_path):
    tp, fp = write_workload(tmp_path, "a,0,1000,1,1000,1,0\n", "a,1000,2000,0\n")
    with pytest.raises(WorkloadError, match="exceeds requested"):
        parse_workload(tp, fp)


def test_utilization_scale_hook(tmp_path):
    tp, fp = write_workload(tmp_path, "a,0,1000,2,1000,1,0\n", "a,1000,0.5,0\n")
    wl = parse_workload(tp, fp, utilization_scale=2000.0)
    assert wl.tasks[0].fragments[0].cpu_usage_mhz == 1000.0


def test_summarize_manifest_numbers(tmp_path):
    tp, fp = write_workload(
        tmp_path,
        "a,0,3600000,1,1000,1,0\nb,0,7200000,1,1000,1,0\n",
        "a,3600000,1,0\nb,7200000,1,0\n",
    )
    stats = summarize(parse_workload(tp, fp).tasks)
    assert stats["task_count"] == 2
    assert stats["mean_duration_s"] == pytest.approx(5400.0)


# --- topology ----------------------------------------------------------------

def surf_topology_doc():
    return {
        "name": "surf",
        "hosts": [
            {
                "name": "default",
                "count": 277,
                "cpu": {
                    "core_count": 16,
                    "core_speed_mhz": 2100,
                    "power_model": {"shape": "sqrt", "idle_w": 100, "max_w": 350},
                },
                "memory_mib": 131072,
                "embodied_kg": 1022,
            }
        ],
        "power_sources": [{"name": "grid"}],
    }


def test_parse_surf_default_topology(tmp_path):
    path = tmp_path / "surf.json"
    path.write_text(json.dumps(surf_topology_doc()))
    topo = parse_topology(path)
    assert topo.host_count == 277
    group = topo.hosts[0]
    assert group.cpu.core_count == 16
    assert group.cpu.core_speed_mhz == 2100
    assert group.memory_mib == 128 * 1024
    assert group.embodied_kg == 1022
    assert group.lifespan_h == 43830.0


def test_unknown_field_rejected_with_path(tmp_path):
    doc = surf_topology_doc()
    doc["hosts"][0]["cpus"] = 2
    path = tmp_path / "t.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match=r"hosts\[0\].cpus: unknown field"):
        parse_topology(path)


def test_battery_requires_known_power_source(tmp_path):
    doc = surf_topology_doc()
    doc["batteries"] = [{"name": "b", "capacity_kwh": 100, "power_source": "nope"}]
    path = tmp_path / "t.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="unknown power source 'nope'"):
        parse_topology(path)


def test_topology_round_trip(tmp_path):
    doc = surf_topology_doc()
    doc["batteries"] = [{"name": "b", "capacity_kwh": 150, "c_rate": 2.0}]
    p1 = tmp_path / "a.json"
    p1.write_text(json.dumps(doc))
    spec1 = parse_topology(p1)
    p2 = tmp_path / "b.json"
    p2.write_text(json.dumps(topology_to_dict(spec1)))
    assert parse_topology(p2) == spec1


# --- experiment -----------------------------------------------------------------

def experiment_doc():
    return {
        "name": "exp",
        "topologies": ["topo.json"],
        "workloads": ["wl"],
        "carbon_traces": ["NL.csv"],
        "seeds": [1, 2],
        "techniques": [{"battery": {"capacity_kwh": [100, 200]}}],
    }


def test_parse_experiment_expands_sweeps(tmp_path):
    path = tmp_path / "e.json"
    path.write_text(json.dumps(experiment_doc()))
    spec = parse_experiment(path)
    labels = [v.label for v in spec.technique_sets]
    assert labels[0] == "baseline"
    assert len(labels) == 3  # baseline + two capacities
    assert spec.seeds == (1, 2)


def test_experiment_empty_seeds_rejected(tmp_path):
    doc = experiment_doc()
    doc["seeds"] = []
    path = tmp_path / "e.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="seeds"):
        parse_experiment(path)


def test_experiment_unknown_output_table_rejected(tmp_path):
    doc = experiment_doc()
    doc["outputs"] = ["service", "bogus"]
    path = tmp_path / "e.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="unknown table 'bogus'"):
        parse_experiment(path)


def test_experiment_baseline_always_present(tmp_path):
    doc = experiment_doc()
    doc["techniques"] = []
    path = tmp_path / "e.json"
    path.write_text(json.dumps(doc))
    spec = parse_experiment(path)
    assert [v.label for v in spec.technique_sets] == ["baseline"]


# --- failure trace ----------------------------------------------------------------

def test_parse_failure_trace(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text(
        "failure_start,failure_duration,failure_intensity\n0,3600000,0.5\n7200000,1800000,1.0\n"
    )
    trace = parse_failure_trace(path)
    assert len(trace.records) == 2
    assert trace.records[0].fraction == 0.5
    assert trace.records[1].start == 2 * HOUR_MS


def test_failure_fraction_above_one_rejected(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("failure_start,failure_duration,failure_intensity\n0,1000,1.5\n")
    with pytest.raises(ConfigError, match=r"outside \(0, 1\]"):
        parse_failure_trace(path)


def test_failure_explicit_host_column(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("failure_start,failure_duration,failure_hosts\n0,1000,3\n")
    trace = parse_failure_trace(path)
    assert trace.records[0].host_count == 3


def test_overlapping_failures_accepted(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text(
        "failure_start,failure_duration,failure_intensity\n0,7200000,1.0\n3600000,7200000,1.0\n"
    )
    trace = parse_failure_trace(path)
    assert len(trace.records) == 2
