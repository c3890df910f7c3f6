"""Training samples from mission telemetry.

Each telemetry record becomes one sample: the rendered view from the
recorded vehicle pose, paired with the seven values the flight's policy
actually emitted there (position delta N/E/D plus the target
quaternion). Images are normalized by per-image channel-mean
subtraction, so serving needs no dataset-wide statistics.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from quadsitl.geom import Vec3, to_euler
from quadsitl.mission import TelemetryRecord, read_telemetry
from quadsitl.world import World, generate_world

from .rasterize import rasterize

QUATERNION_TOLERANCE = 1e-6
# targets this far off unit are data corruption, not float drift
QUATERNION_REJECT = 1e-3


@dataclass(frozen=True)
class TrainingSample:
    """One (image, action) pair.

    image: HxWx3 float32, channel-mean subtracted.
    target: 7 float32 values (dN, dE, dD, q0, q1, q2, q3); the quaternion
    part is unit within 1e-6.
    """

    image: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ValueError(f"image must be HxWx3, got {self.image.shape}")
        if self.target.shape != (7,):
            raise ValueError(f"target must hold 7 values, got {self.target.shape}")
        norm = float(np.linalg.norm(self.target[3:]))
        if not np.isfinite(norm) or abs(norm - 1.0) > QUATERNION_REJECT:
            raise ValueError(f"target quaternion norm {norm} too far from 1")
        if abs(norm - 1.0) > QUATERNION_TOLERANCE:
            renormed = self.target.copy()
            renormed[3:] /= norm
            object.__setattr__(self, "target", renormed)


def channel_mean_subtract(image: np.ndarray) -> np.ndarray:
    means = image.reshape(-1, image.shape[2]).mean(axis=0)
    return (image - means[None, None, :]).astype(np.float32)


def sample_from_record(
    record: TelemetryRecord, world: World, image_size: int = 112
) -> TrainingSample:
    position = record.state.position
    yaw = to_euler(record.state.orientation).yaw
    raw = rasterize(position, yaw, world, size=image_size)
    out = record.policy_output
    q = out.orientation
    target = np.array(
        [out.dn, out.de, out.dd, q.q0, q.q1, q.q2, q.q3], dtype=np.float32
    )
    return TrainingSample(image=channel_mean_subtract(raw), target=target)


def samples_from_records(
    records: list[TelemetryRecord], world: World, image_size: int = 112
) -> list[TrainingSample]:
    return [sample_from_record(r, world, image_size) for r in records]


def samples_from_telemetry(
    path: str | Path, image_size: int = 112, world: World | None = None
) -> list[TrainingSample]:
    """Load a telemetry log and rebuild its world from the header.

    The header names the world and carries the mission seed and start;
    generated worlds derive their seed as mission seed + 2 and center on
    the start, which is enough to reconstruct the geometry the flight
    actually saw. Pass `world` to override (custom geometry).
    """
    header, records = read_telemetry(path)
    if world is None:
        start = Vec3(*header["start"])
        world = generate_world(
            header["world"], int(header["seed"]) + 2, center=start
        )
    return samples_from_records(records, world, image_size)
