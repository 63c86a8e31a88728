"""Device power models and the calibration harness.

A power model maps a utilization fraction in [0, 1] to a draw in watts
between an idle and a max level. Four curve shapes are supported; CPUs
are conventionally fitted with the square-root shape and GPUs with the
linear one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

log = logging.getLogger(__name__)


class PowerShape(str, Enum):
    SQRT = "sqrt"
    LINEAR = "linear"
    SQUARE = "square"
    CUBIC = "cubic"


def power_curve(shape: PowerShape, u: float) -> float:
    """The normalized utilization-to-power curve f(u), f(0)=0, f(1)=1."""
    if shape is PowerShape.SQRT:
        return math.sqrt(u)
    if shape is PowerShape.LINEAR:
        return u
    if shape is PowerShape.SQUARE:
        return u * u
    return u * u * u




@dataclass(frozen=True)
class PowerModel:
    shape: PowerShape
    idle_w: float
    max_w: float

    def __post_init__(self) -> None:
        if not 0 <= self.idle_w <= self.max_w:
            raise ValueError(
                f"power model requires 0 <= idle <= max, got idle={self.idle_w}, max={self.max_w}"
            )


def device_power(model: PowerModel, u: float) -> float:
    """Draw at utilization ``u``; values outside [0, 1] are clamped with a warning."""
    if u < 0.0 or u > 1.0:
        log.warning("utilization %.6g outside [0,1], clamping", u)
        u = min(1.0, max(0.0, u))
    return model.idle_w + (model.max_w - model.idle_w) * power_curve(model.shape, u)


@dataclass(frozen=True)
class CalibrationResult:
    model: PowerModel
    mape: float
    degenerate: bool = False


def _mape(samples: Sequence[tuple[float, float]], shape: PowerShape, idle: float, max_: float) -> float:
    total = 0.0
    n = 0
    for u, watts in samples:
        if watts == 0.0:
            continue  # zero-watt observations carry no percentage error
        pred = idle + (max_ - idle) * power_curve(shape, min(1.0, max(0.0, u)))
        total += abs(pred - watts) / abs(watts)
        n += 1
    if n == 0:
        raise ValueError("all observations are zero watts; MAPE undefined")
    return total / n


def calibrate_power_model(
    samples: Iterable[tuple[float, float]], shape: PowerShape
) -> CalibrationResult:
    """Fit (idle, max) minimizing MAPE over measured (utilization, watts) pairs.

    Grid search seeded with the least-squares solution, then shrinking
    coordinate refinement. A series with a single distinct utilization
    level is rank-deficient: the minimum-idle solution is returned with
    the ``degenerate`` flag set.
    """
    pts = [(float(u), float(w)) for u, w in samples]
    if len(pts) < 2:
        raise ValueError("calibration needs at least 2 samples")
    if all(w == 0.0 for _, w in pts):
        raise ValueError("all observations are zero watts; MAPE undefined")

    fs = [power_curve(shape, min(1.0, max(0.0, u))) for u, _ in pts]
    ws = [w for _, w in pts]
    if len(set(fs)) == 1:
        # w = idle*(1-f) + max*f has a line of optima; pick the min-idle one.
        f = fs[0]
        mean_w = sum(ws) / len(ws)
        if f == 0.0:
            idle, max_ = mean_w, mean_w
        else:
            idle, max_ = 0.0, mean_w / f
        model = PowerModel(shape, idle, max_)
        return CalibrationResult(model, _mape(pts, shape, idle, max_), degenerate=True)

    # Least-squares seed on w = a + b*f.
    n = len(pts)
    mean_f = sum(fs) / n
    mean_w = sum(ws) / n
    var_f = sum((f - mean_f) ** 2 for f in fs)
    cov = sum((f - mean_f) * (w - mean_w) for f, w in zip(fs, ws))
    b0 = cov / var_f
    a0 = mean_w - b0 * mean_f

    w_hi = max(ws)
    candidates = [(max(0.0, a0), max(0.0, b0))]
    steps = 8
    for i in range(steps + 1):
        for j in range(steps + 1):
            candidates.append((w_hi * i / steps, 2.0 * w_hi * j / steps))

    def feasible(a: float, b: float) -> bool:
        return a >= 0.0 and b >= 0.0

    best = min(
        (c for c in candidates if feasible(*c)),
        key=lambda c: _mape(pts, shape, c[0], c[0] + c[1]),
    )
    a, b = best
    best_err = _mape(pts, shape, a, a + b)
    step = max(w_hi / steps, 1.0)
    while step > 1e-9:
        improved = False
        for da, db in ((step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)):
            na, nb = a + da, b + db
            if not feasible(na, nb):
                continue
            err = _mape(pts, shape, na, na + nb)
            if err < best_err - 1e-15:
                a, b, best_err = na, nb, err
                improved = True
        if not improved:
            step /= 2.0
    model = PowerModel(shape, a, a + b)
    return CalibrationResult(model, best_err)
