"""Post-flight evaluation over telemetry logs.

Everything here is a pure function of already-recorded missions: the
intervention-charged reliability score, distance excluding teleport jumps,
the hover/drift/fly behaviour label, route-superposition consistency, and
per-step dispersion statistics of the policy outputs.

Reliability charges a fixed 1 m of distance per intervention:
reliability = 100 * (1 - interventions * 1.0 / distance), floored at 0.
The unit charge is the one constant that makes every published score in
the reference evaluation self-consistent with its (interventions,
distance) pair to two decimals; it is locked in by the regression tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geom import Vec3, wrap_pi
from .mission import TelemetryRecord

INTERVENTION_CHARGE_M = 1.0
HOVER_DISPLACEMENT_M = 2.0
DRIFT_SPEED_LIMIT = 0.2
DRIFT_STRAIGHTNESS = 0.6


@dataclass(frozen=True, slots=True)
class MissionSummary:
    interventions: int
    reliability: float | None  # None renders as a dash: undefined for a
    # motionless, intervention-free log
    duration_s: float
    duration_min: float
    distance_m: float
    behaviour: str
    y_delta_variance: float
    heading_change_rms: float


@dataclass(frozen=True, slots=True)
class DispersionStats:
    y_delta_variance: float
    x_delta_range: tuple[float, float]
    heading_change_rms: float


@dataclass(frozen=True, slots=True)
class OccupancyGrid:
    cell_size: float
    origin: Vec3  # world position of the corner of cell [0, 0]
    counts: np.ndarray  # [north_index, east_index] = how many runs visited

    def __post_init__(self):
        if self.cell_size <= 0.0:
            raise ValueError("cell_size must be positive")
        if (self.counts < 0).any():
            raise ValueError("counts must be non-negative")


def reliability(distance: float, interventions: int) -> float | None:
    """Percent of distance flown without charged interventions.

    Returns None (rendered as a dash) for a zero-distance log with no
    interventions, where the ratio is undefined.
    """
    if interventions < 0:
        raise ValueError("interventions must be >= 0")
    if distance < 0.0:
        raise ValueError("distance must be >= 0")
    if distance == 0.0:
        if interventions == 0:
            return None
        raise ValueError("interventions charged against zero distance")
    return max(0.0, 100.0 * (1.0 - interventions * INTERVENTION_CHARGE_M / distance))


def _segments(records: list[TelemetryRecord]):
    """Consecutive position pairs, skipping the teleport jump that follows
    an intervention-flagged record."""
    for i in range(1, len(records)):
        if records[i - 1].intervention is not None:
            continue
        yield records[i - 1].state.position, records[i].state.position


def total_distance(records: list[TelemetryRecord]) -> float:
    """Polyline length of the flight path; teleport jumps are not travel."""
    if len(records) < 2:
        raise ValueError("need at least 2 records")
    return sum((b - a).norm() for a, b in _segments(records))


def count_interventions(records: list[TelemetryRecord]) -> int:
    return sum(1 for r in records if r.intervention is not None)


def infer_dt(records: list[TelemetryRecord]) -> float:
    if len(records) < 2:
        raise ValueError("need at least 2 records")
    dt = records[1].time - records[0].time
    if dt <= 0.0:
        raise ValueError("records are not in increasing time order")
    return dt


def classify_behaviour(
    records: list[TelemetryRecord],
    hover_displacement: float = HOVER_DISPLACEMENT_M,
    drift_speed: float = DRIFT_SPEED_LIMIT,
    straightness: float = DRIFT_STRAIGHTNESS,
) -> str:
    """Label a log hovering, drifting, or flying.

    hovering: never strays more than hover_displacement horizontally from
    the start. drifting: strays farther, but slowly (mean horizontal speed
    under drift_speed) and in one consistent direction, measured as net
    displacement over path length. Everything else is flying.
    """
    if len(records) < 100:
        raise ValueError("behaviour labels need at least 100 records")
    start = records[0].state.position
    max_offset = max(
        math.hypot(r.state.position.x - start.x, r.state.position.y - start.y)
        for r in records
    )
    if max_offset < hover_displacement:
        return "hovering"

    horizontal_path = sum(math.hypot(b.x - a.x, b.y - a.y) for a, b in _segments(records))
    duration = len(records) * infer_dt(records)
    mean_speed = horizontal_path / duration if duration > 0.0 else 0.0

    end = records[-1].state.position
    net = math.hypot(end.x - start.x, end.y - start.y)
    is_straight = horizontal_path > 0.0 and net / horizontal_path >= straightness
    if mean_speed < drift_speed and is_straight:
        return "drifting"
    return "flying"


def visited_cells(
    records: list[TelemetryRecord], cell_size: float = 1.0
) -> set[tuple[int, int]]:
    return {
        (
            math.floor(r.state.position.x / cell_size),
            math.floor(r.state.position.y / cell_size),
        )
        for r in records
    }


def superpose(
    logs: list[list[TelemetryRecord]], cell_size: float = 1.0
) -> tuple[OccupancyGrid, float]:
    """Overlay runs on a shared grid.

    Each cell counts how many of the runs passed through it; consistency is
    the Jaccard ratio of cells every run visited to cells any run visited.
    """
    if len(logs) < 2:
        raise ValueError("superposition needs at least 2 logs")
    cell_sets = [visited_cells(log, cell_size) for log in logs]
    union = set.union(*cell_sets)
    intersection = set.intersection(*cell_sets)
    consistency = len(intersection) / len(union) if union else 1.0

    n_lo = min(c[0] for c in union)
    n_hi = max(c[0] for c in union)
    e_lo = min(c[1] for c in union)
    e_hi = max(c[1] for c in union)
    counts = np.zeros((n_hi - n_lo + 1, e_hi - e_lo + 1), dtype=np.int64)
    for cells in cell_sets:
        for n, e in cells:
            counts[n - n_lo, e - e_lo] += 1
    grid = OccupancyGrid(
        cell_size=cell_size,
        origin=Vec3(n_lo * cell_size, e_lo * cell_size, 0.0),
        counts=counts,
    )
    return grid, consistency


def dispersion_stats(records: list[TelemetryRecord]) -> DispersionStats:
    """Spread of the policy's per-step outputs across one log."""
    if len(records) < 2:
        raise ValueError("need at least 2 records")
    de = np.array([r.policy_output.de for r in records])
    dn = np.array([r.policy_output.dn for r in records])
    yaws = [r.target.yaw for r in records]
    diffs = [wrap_pi(b - a) for a, b in zip(yaws, yaws[1:])]
    rms = math.sqrt(sum(d * d for d in diffs) / len(diffs))
    return DispersionStats(
        y_delta_variance=float(de.var()),
        x_delta_range=(float(dn.min()), float(dn.max())),
        heading_change_rms=rms,
    )


def summarize(records: list[TelemetryRecord]) -> MissionSummary:
    """One-row digest of a mission log, in the evaluation table's shape."""
    interventions = count_interventions(records)
    distance = total_distance(records)
    behaviour = classify_behaviour(records)
    duration = len(records) * infer_dt(records)
    if interventions == 0 and (distance == 0.0 or behaviour == "hovering"):
        score = None  # station-keeping logs have no distance to charge against
    else:
        score = reliability(distance, interventions)
    stats = dispersion_stats(records)
    return MissionSummary(
        interventions=interventions,
        reliability=score,
        duration_s=duration,
        duration_min=duration / 60.0,
        distance_m=distance,
        behaviour=behaviour,
        y_delta_variance=stats.y_delta_variance,
        heading_change_rms=stats.heading_change_rms,
    )
