"""Carbon intensity traces and carbon accounting.

Operational carbon is the integral of grid draw times carbon intensity;
both are piecewise-constant, so the integral is computed exactly segment
by segment. Embodied carbon is attributed linearly over an asset's
lifetime.
"""

from __future__ import annotations

import csv
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .simtime import J_PER_KWH, SimTime, parse_timestamp


@dataclass(frozen=True)
class CarbonTrace:
    """Timestamped carbon-intensity series in gCO2-eq/kWh for one region."""

    starts: tuple[SimTime, ...]
    intensities: tuple[float, ...]
    region_id: str = ""

    def __post_init__(self) -> None:
        if len(self.starts) != len(self.intensities):
            raise ValueError("starts and intensities differ in length")
        if not self.starts:
            raise ValueError(f"carbon trace {self.region_id!r} is empty")
        if any(b <= a for a, b in zip(self.starts, self.starts[1:])):
            raise ValueError(f"carbon trace {self.region_id!r} timestamps not strictly increasing")
        if any(v < 0 for v in self.intensities):
            raise ValueError(f"carbon trace {self.region_id!r} has negative intensity")

    def index_at(self, t: SimTime) -> int:
        """Index of the sample active at t; clamps to the trace ends (hold rule)."""
        i = bisect_right(self.starts, t) - 1
        return min(max(i, 0), len(self.starts) - 1)

    def intensity_at(self, t: SimTime) -> float:
        return self.intensities[self.index_at(t)]

    def covers(self, t: SimTime) -> bool:
        return self.starts[0] <= t <= self.starts[-1]

    def window_values(self, lo: SimTime, hi: SimTime, closed: str = "left") -> list[float]:
        """Sample values with start inside the window.

        ``closed="left"`` selects starts in [lo, hi); ``closed="right"``
        selects starts in (lo, hi].
        """
        if closed == "left":
            i0 = bisect_right(self.starts, lo - 1)
            i1 = bisect_right(self.starts, hi - 1)
        else:
            i0 = bisect_right(self.starts, lo)
            i1 = bisect_right(self.starts, hi)
        return list(self.intensities[i0:i1])


def load_carbon_trace(path: str | Path, region_id: str | None = None) -> CarbonTrace:
    """Read a carbon trace file: columns (timestamp, carbon_intensity).

    CSV is the canonical format; ``.parquet`` is accepted when pandas with
    a parquet engine is installed.
    """
    path = Path(path)
    region = region_id if region_id is not None else path.stem
    if path.suffix == ".parquet":
        try:
            import pandas as pd  # noqa: PLC0415

            frame = pd.read_parquet(path)
        except ImportError as exc:
            raise RuntimeError(f"{path}: parquet support needs pandas+pyarrow installed") from exc
        rows = frame.to_dict("records")
    else:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"timestamp", "carbon_intensity"} <= set(reader.fieldnames):
                raise ValueError(f"{path}: expected columns timestamp, carbon_intensity")
            rows = list(reader)
    starts: list[SimTime] = []
    values: list[float] = []
    for i, row in enumerate(rows):
        try:
            starts.append(parse_timestamp(row["timestamp"]))
            values.append(float(row["carbon_intensity"]))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{path}: row {i + 1}: {exc}") from exc
    return CarbonTrace(tuple(starts), tuple(values), region)


def segment_carbon(watts: float, dt_ms: int, intensity: float) -> float:
    """Grams emitted by a constant draw over dt at a constant intensity."""
    return watts * dt_ms / 1000.0 / J_PER_KWH * intensity


def operational_carbon(
    timeline: Sequence[tuple[SimTime, SimTime, float]],
    trace: CarbonTrace,
    t0: SimTime,
    t1: SimTime,
) -> float:
    """Grams emitted by a piecewise-constant power timeline over [t0, t1].

    ``timeline`` holds (start, end, watts) segments covering the interval.
    Intensity outside the trace's span holds the nearest sample.
    """
    total = 0.0
    for seg_start, seg_end, watts in timeline:
        lo = max(seg_start, t0)
        hi = min(seg_end, t1)
        if hi <= lo or watts == 0.0:
            continue
        i = trace.index_at(lo)
        t = lo
        while t < hi:
            nxt = trace.starts[i + 1] if i + 1 < len(trace.starts) else hi
            upto = min(hi, nxt)
            total += segment_carbon(watts, upto - t, trace.intensities[i])
            t = upto
            i = min(i + 1, len(trace.starts) - 1)
    return total


@dataclass(frozen=True)
class EmbodiedAsset:
    """Manufacturing carbon of a hardware asset amortized over its lifespan."""

    total_embodied_kg: float
    lifespan_h: float

    def __post_init__(self) -> None:
        if self.total_embodied_kg <= 0 or self.lifespan_h <= 0:
            raise ValueError("embodied carbon and lifespan must be positive")


def embodied_carbon(asset: EmbodiedAsset, used_h: float) -> float:
    """Grams attributed to ``used_h`` hours of the asset's lifetime (linear, uncapped)."""
    if used_h < 0:
        raise ValueError("used hours must be >= 0")
    return asset.total_embodied_kg * 1000.0 * (used_h / asset.lifespan_h)


@dataclass
class CarbonLedger:
    """Run totals in grams, with a per-power-source operational breakdown."""

    operational_g: float = 0.0
    embodied_g: float = 0.0
    per_source_g: dict[str, float] = field(default_factory=dict)

    @property
    def total_g(self) -> float:
        return self.operational_g + self.embodied_g

    def add_operational(self, source_id: str, grams: float) -> None:
        self.operational_g += grams
        self.per_source_g[source_id] = self.per_source_g.get(source_id, 0.0) + grams
