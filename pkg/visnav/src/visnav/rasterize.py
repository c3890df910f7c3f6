"""Synthetic forward-view rendering from world geometry.

Stands in for a camera: a pinhole projection of the obstacle cylinders
from the vehicle pose, depth-shaded so nearer trunks paint darker (and,
by perspective, taller) silhouettes on a white background. Values are
float32 in [0, 1], three identical channels, so the image slots into a
standard RGB convolution stack.

When no world geometry is available, `rasterize_rays` turns the eight
range readings of an observation into a banded pseudo-view with the same
shading convention.
"""

from __future__ import annotations

import math

import numpy as np

from quadsitl.geom import Vec3
from quadsitl.policy import RAY_AZIMUTHS_DEG, RAY_MAX_RANGE
from quadsitl.world import World

FOV_RAD = math.radians(90.0)
BACKGROUND = 1.0


def _wrap(angle: float) -> float:
    return math.atan2(math.sin(angle), math.cos(angle))


def rasterize(
    position: Vec3,
    yaw: float,
    world: World,
    size: int = 112,
    max_range: float = RAY_MAX_RANGE,
) -> np.ndarray:
    """Render the view along `yaw` from `position` as a size x size x 3 image.

    Each cylinder inside `max_range` and the 90-degree field of view is
    drawn as a vertical silhouette: horizontal extent from its angular
    width, vertical extent from projecting its top and base depths, shade
    from distance (near 0 = touching, near 1 = at max range). A per-pixel
    depth buffer keeps the nearest trunk in front.
    """
    if size < 2:
        raise ValueError("image size must be at least 2")
    img = np.full((size, size), BACKGROUND, dtype=np.float32)
    depth = np.full((size, size), np.inf, dtype=np.float32)
    half_fov = FOV_RAD / 2.0
    col_angle = FOV_RAD / size  # angular width of one pixel column

    for cyl in world.obstacles:
        rel_n = cyl.north - position.x
        rel_e = cyl.east - position.y
        dist = math.hypot(rel_n, rel_e)
        if dist <= cyl.radius or dist - cyl.radius > max_range:
            continue  # inside the trunk or too far to see
        bearing = _wrap(math.atan2(rel_e, rel_n) - yaw)
        half_width = math.asin(min(1.0, cyl.radius / dist))
        if abs(bearing) - half_width > half_fov:
            continue

        # columns covered by [bearing - half_width, bearing + half_width]
        lo = (bearing - half_width + half_fov) / col_angle
        hi = (bearing + half_width + half_fov) / col_angle
        col_lo = max(0, int(math.floor(lo)))
        col_hi = min(size - 1, int(math.ceil(hi)) - 1)
        if col_hi < col_lo:
            continue

        # vertical angles to the trunk's top and base depths (D is down,
        # so the top of the trunk has the smaller D value)
        top_d = cyl.base_d - cyl.height
        angle_top = math.atan2(top_d - position.z, dist)
        angle_base = math.atan2(cyl.base_d - position.z, dist)
        row_lo = int(math.floor((angle_top + half_fov) / col_angle))
        row_hi = int(math.ceil((angle_base + half_fov) / col_angle)) - 1
        row_lo = max(0, row_lo)
        row_hi = min(size - 1, row_hi)
        if row_hi < row_lo:
            continue

        shade = np.float32(min(1.0, dist / max_range))
        patch = depth[row_lo:row_hi + 1, col_lo:col_hi + 1]
        mask = patch > dist
        img[row_lo:row_hi + 1, col_lo:col_hi + 1][mask] = shade
        patch[mask] = dist

    return np.repeat(img[:, :, None], 3, axis=2)


def rasterize_rays(
    rays: tuple[float, ...] | list[float],
    size: int = 112,
    max_range: float = RAY_MAX_RANGE,
) -> np.ndarray:
    """Banded fallback view built from the range fan alone.

    One vertical band per ray, ordered left to right to match the ray
    azimuths; band shade is distance over max range, with clear rays
    left at the background value.
    """
    if len(rays) != len(RAY_AZIMUTHS_DEG):
        raise ValueError(f"expected {len(RAY_AZIMUTHS_DEG)} rays, got {len(rays)}")
    img = np.full((size, size), BACKGROUND, dtype=np.float32)
    band = size / len(rays)
    for i, dist in enumerate(rays):
        if dist >= max_range:
            continue
        lo = int(i * band)
        hi = int((i + 1) * band)
        img[:, lo:hi] = min(1.0, dist / max_range)
    return np.repeat(img[:, :, None], 3, axis=2)
