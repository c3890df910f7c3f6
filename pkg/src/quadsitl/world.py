"""Procedural flight environments: obstacle fields, terrain, and range rays.

Worlds are axis-aligned boxes in the N/E plane filled with vertical cylinder
obstacles. Three generators are built in:

    forest          dense Poisson-disk stand of cylinders under a canopy
    snowy_mountain  sparse obstacles on a conical terrain rise
    plain_field     empty flat ground

plus fully custom worlds built directly from explicit geometry. Generation is
deterministic per seed. Worlds are centered wherever the caller asks (usually
the mission start), with a small spawn clearing kept free of obstacles so a
vehicle never materializes inside a trunk.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .geom import Vec3, quat_yaw
from .policy import RAY_AZIMUTHS_DEG, RAY_MAX_RANGE

FOREST_DENSITY = 0.05  # cylinders per square metre
FOREST_MIN_SEPARATION = 2.0
FOREST_CANOPY = -15.0
MOUNTAIN_DENSITY = 0.005
SPAWN_CLEARING = 3.0  # obstacle-free radius around the world center


@dataclass(frozen=True, slots=True)
class Cylinder:
    """Vertical obstacle: axis at (north, east), spanning base_d up to its top.

    base_d is the D coordinate of the foot (ground level there); the cylinder
    occupies D in [base_d - height, base_d].
    """

    north: float
    east: float
    radius: float
    height: float
    base_d: float = 0.0

    def __post_init__(self) -> None:
        if self.radius <= 0.0:
            raise ValueError("cylinder radius must be positive")
        if self.height <= 0.0:
            raise ValueError("cylinder height must be positive")

    def spans_depth(self, d: float) -> bool:
        return self.base_d - self.height <= d <= self.base_d


@dataclass(frozen=True, slots=True)
class Bounds:
    """Axis-aligned N/E flight perimeter."""

    n_min: float
    n_max: float
    e_min: float
    e_max: float

    def __post_init__(self) -> None:
        if self.n_min >= self.n_max or self.e_min >= self.e_max:
            raise ValueError("bounds must be non-degenerate")

    def contains(self, north: float, east: float) -> bool:
        return self.n_min <= north <= self.n_max and self.e_min <= east <= self.e_max

    def exceedance(self, north: float, east: float) -> float:
        """How far outside the perimeter the point lies (0 when inside)."""
        dn = max(self.n_min - north, north - self.n_max, 0.0)
        de = max(self.e_min - east, east - self.e_max, 0.0)
        return max(dn, de)


@dataclass(frozen=True, slots=True)
class MountainProfile:
    """Conical terrain rise: peak height tapering linearly to zero at its rim."""

    peak_north: float
    peak_east: float
    peak_height: float
    rim_radius: float


@dataclass(frozen=True, slots=True)
class World:
    name: str
    obstacles: tuple[Cylinder, ...]
    canopy_ceiling: float
    bounds: Bounds
    seed: int = 0
    terrain: MountainProfile | None = None

    def ground_d(self, north: float, east: float) -> float:
        """Terrain surface D at (north, east); 0 on flat ground, negative uphill."""
        if self.terrain is None:
            return 0.0
        t = self.terrain
        distance = math.hypot(north - t.peak_north, east - t.peak_east)
        if distance >= t.rim_radius:
            return 0.0
        return -t.peak_height * (1.0 - distance / t.rim_radius)


def _poisson_disk(
    rng: random.Random,
    bounds: Bounds,
    count_target: int,
    min_separation: float,
    clear_center: tuple[float, float],
) -> list[tuple[float, float]]:
    """Dart-throwing Poisson-disk sampling with a cell hash for neighbor tests."""
    cell = min_separation
    grid: dict[tuple[int, int], tuple[float, float]] = {}
    points: list[tuple[float, float]] = []
    attempts_left = count_target * 40

    def cell_of(n: float, e: float) -> tuple[int, int]:
        return (int(math.floor(n / cell)), int(math.floor(e / cell)))

    while len(points) < count_target and attempts_left > 0:
        attempts_left -= 1
        n = rng.uniform(bounds.n_min, bounds.n_max)
        e = rng.uniform(bounds.e_min, bounds.e_max)
        if math.hypot(n - clear_center[0], e - clear_center[1]) < SPAWN_CLEARING:
            continue
        ci, cj = cell_of(n, e)
        ok = True
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                neighbor = grid.get((ci + di, cj + dj))
                if neighbor is not None and math.hypot(n - neighbor[0], e - neighbor[1]) < min_separation:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            grid[(ci, cj)] = (n, e)
            points.append((n, e))
    return points


def generate_world(
    name: str,
    seed: int,
    center: Vec3 = Vec3(),
    size: float = 200.0,
) -> World:
    """Build one of the named environments, centered on `center`.

    forest: Poisson-disk cylinder stand at FOREST_DENSITY, radii 0.3-0.8 m,
    trunk heights reaching the canopy at -15 m. snowy_mountain: sparse
    obstacles standing on a conical rise, no canopy. plain_field: empty.
    Identical (name, seed, center, size) always yields an identical world.
    """
    if size <= 0.0:
        raise ValueError("size must be positive")
    half = size / 2.0
    bounds = Bounds(
        n_min=center.x - half,
        n_max=center.x + half,
        e_min=center.y - half,
        e_max=center.y + half,
    )
    rng = random.Random(seed)

    if name == "plain_field":
        return World(
            name=name,
            obstacles=(),
            canopy_ceiling=-100.0,
            bounds=bounds,
            seed=seed,
        )

    if name == "forest":
        count = round(FOREST_DENSITY * size * size)
        points = _poisson_disk(
            rng, bounds, count, FOREST_MIN_SEPARATION, (center.x, center.y)
        )
        obstacles = tuple(
            Cylinder(
                north=n,
                east=e,
                radius=rng.uniform(0.3, 0.8),
                height=rng.uniform(12.0, 15.0),
            )
            for n, e in points
        )
        return World(
            name=name,
            obstacles=obstacles,
            canopy_ceiling=FOREST_CANOPY,
            bounds=bounds,
            seed=seed,
        )

    if name == "snowy_mountain":
        terrain = MountainProfile(
            peak_north=center.x + size * 0.3,
            peak_east=center.y + size * 0.3,
            peak_height=25.0,
            rim_radius=size * 0.4,
        )
        count = round(MOUNTAIN_DENSITY * size * size)
        points = _poisson_disk(
            rng, bounds, count, FOREST_MIN_SEPARATION, (center.x, center.y)
        )
        world_stub = World(
            name=name,
            obstacles=(),
            canopy_ceiling=-100.0,
            bounds=bounds,
            seed=seed,
            terrain=terrain,
        )
        obstacles = tuple(
            Cylinder(
                north=n,
                east=e,
                radius=rng.uniform(0.4, 1.0),
                height=rng.uniform(6.0, 10.0),
                base_d=world_stub.ground_d(n, e),
            )
            for n, e in points
        )
        return World(
            name=name,
            obstacles=obstacles,
            canopy_ceiling=-100.0,
            bounds=bounds,
            seed=seed,
            terrain=terrain,
        )

    raise ValueError(f"unknown world name '{name}'")


def _ray_circle_distance(
    origin_n: float,
    origin_e: float,
    direction_n: float,
    direction_e: float,
    cylinder: Cylinder,
) -> float | None:
    """Distance along the ray to the circle, or None when missed."""
    # Solve |o + t*d - c|^2 = r^2 for the smallest t >= 0 (d is unit length).
    ocn = origin_n - cylinder.north
    oce = origin_e - cylinder.east
    b = ocn * direction_n + oce * direction_e
    c = ocn * ocn + oce * oce - cylinder.radius * cylinder.radius
    disc = b * b - c
    if disc < 0.0:
        return None
    root = math.sqrt(disc)
    t = -b - root
    if t < 0.0:
        t = -b + root  # ray starts inside the circle
    if t < 0.0:
        return None
    return t


def cast_rays(state_position: Vec3, heading: float, world: World) -> tuple[float, ...]:
    """Horizontal forward-cone ranges at the vehicle's depth, capped at 50 m.

    One ray per azimuth in RAY_AZIMUTHS_DEG relative to `heading`; only
    cylinders whose vertical span contains the vehicle's D participate.
    """
    d = state_position.z
    live = [cyl for cyl in world.obstacles if cyl.spans_depth(d)]
    distances = []
    for az_deg in RAY_AZIMUTHS_DEG:
        angle = heading + math.radians(az_deg)
        dir_n, dir_e = math.cos(angle), math.sin(angle)
        best = RAY_MAX_RANGE
        for cyl in live:
            t = _ray_circle_distance(
                state_position.x, state_position.y, dir_n, dir_e, cyl
            )
            if t is not None and t < best:
                best = t
        distances.append(best)
    return tuple(distances)


def observation_rays(state, world: World) -> tuple[float, ...]:
    """Rays oriented along the vehicle's current yaw."""
    return cast_rays(state.position, quat_yaw(state.orientation), world)
