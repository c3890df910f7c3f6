"""Software-in-the-loop mission runner.

One mission = one seeded, fully deterministic loop:

    observe -> policy -> fence-clamped setpoint -> attitude target
    -> N inner control/dynamics sub-steps -> intervention check -> record

Telemetry is one record per policy iteration. Record k snapshots the state
the iteration started from (time = k*dt exactly), together with that
iteration's policy output, attitude target, final motor command, and the
intervention its stepping triggered, if any. Interventions teleport the
vehicle back to the most recent safe pose with zeroed velocity and level
attitude, so the record after a flagged one shows the safe pose itself.

Config comes from a single JSON file (see config_from_json). When a
component's seed is omitted it derives from the mission seed: sensors use
seed, wind seed+1, world seed+2, the explorer policy seed+3.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .control import (
    ControllerGains,
    ControllerState,
    EstimatedAttitude,
    PdGains,
    PidGains,
    TargetAttitude,
    control_step,
)
from .dynamics import (
    DT_MAX,
    MotorCommands,
    RigidBodyState,
    VehicleParams,
    Wind,
    hover_pwm,
    initial_state,
    step,
)
from .geom import Quaternion, Vec3, quat_yaw, yaw_quaternion
from .policy import (
    Observation,
    OuterLoopConfig,
    HoverPolicy,
    Policy,
    PolicyError,
    PolicyOutput,
    RandomExplorerPolicy,
    RemotePolicy,
    ReplayPolicy,
    WaypointPolicy,
    to_target,
)
from .sensors import SensorConfig, ImuSimulator
from .world import Bounds, Cylinder, World, generate_world, observation_rays

TELEMETRY_SCHEMA = "telemetry/1"
FENCE_MARGIN = 0.5  # setpoints are clamped this far inside the fence surfaces
BREACH_THRESHOLD = 1.0  # actual-position violation that counts as intervention
COLLISION_CLEARANCE = 0.3  # horizontal buffer added to cylinder radii
SAFE_POSE_DEPTH = 20


class ConfigError(ValueError):
    """Mission configuration problem, with a human-locatable message."""


class MissionAbort(RuntimeError):
    """Unrecoverable mission fault; carries the partial log."""

    def __init__(self, fault: str, records: list["TelemetryRecord"]):
        super().__init__(fault)
        self.fault = fault
        self.records = records


@dataclass(frozen=True, slots=True)
class TelemetryRecord:
    iteration: int
    time: float
    state: RigidBodyState
    policy_output: PolicyOutput
    target: TargetAttitude
    motors: MotorCommands
    intervention: str | None
    fence_clamped: bool
    distance_increment: float
    saturation_events: int


@dataclass(frozen=True, slots=True)
class PolicySpec:
    kind: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class WorldSpec:
    name: str = "plain_field"
    seed: int | None = None
    size: float = 200.0
    center: Vec3 | None = None
    # custom-world geometry; ignored for generated worlds
    obstacles: tuple[Cylinder, ...] = ()
    canopy_ceiling: float = -100.0
    bounds: Bounds | None = None


@dataclass(slots=True)
class MissionConfig:
    iterations: int = 150
    dt: float = 0.05
    start: Vec3 = field(default_factory=Vec3)
    seed: int = 0
    geo_fence_enabled: bool = True
    inner_substeps: int = 4
    policy: PolicySpec = field(default_factory=lambda: PolicySpec("hover"))
    world: WorldSpec = field(default_factory=WorldSpec)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    wind: Wind | None = None
    sensors: SensorConfig | None = None
    gains: ControllerGains = field(default_factory=ControllerGains)
    outer: OuterLoopConfig | None = None

    def __post_init__(self) -> None:
        if self.iterations <= 0:
            raise ConfigError("iterations must be positive")
        if not 0.0 < self.dt <= DT_MAX:
            raise ConfigError(f"dt must lie in (0, {DT_MAX}]")
        if self.inner_substeps < 1:
            raise ConfigError("inner_substeps must be >= 1")


def build_world(config: MissionConfig) -> World:
    spec = config.world
    if spec.name == "custom":
        bounds = spec.bounds
        if bounds is None:
            half = spec.size / 2.0
            center = spec.center if spec.center is not None else config.start
            bounds = Bounds(
                center.x - half, center.x + half, center.y - half, center.y + half
            )
        return World(
            name="custom",
            obstacles=spec.obstacles,
            canopy_ceiling=spec.canopy_ceiling,
            bounds=bounds,
            seed=spec.seed if spec.seed is not None else config.seed + 2,
        )
    center = spec.center if spec.center is not None else config.start
    seed = spec.seed if spec.seed is not None else config.seed + 2
    return generate_world(spec.name, seed, center=center, size=spec.size)


def build_policy(config: MissionConfig) -> Policy:
    spec = config.policy
    params = dict(spec.params)
    try:
        if spec.kind == "hover":
            return HoverPolicy()
        if spec.kind == "waypoint_list":
            waypoints = [Vec3(*w) for w in params.pop("waypoints")]
            return WaypointPolicy(waypoints, **params)
        if spec.kind == "random_explorer":
            params.setdefault("seed", config.seed + 3)
            return RandomExplorerPolicy(**params)
        if spec.kind == "replay":
            return ReplayPolicy(params.pop("path"), **params)
        if spec.kind == "remote":
            return RemotePolicy(**params)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"policy '{spec.kind}' parameters invalid: {exc}") from exc
    raise ConfigError(f"unknown policy kind '{spec.kind}'")


def geo_fence(setpoint: Vec3, world: World, margin: float = FENCE_MARGIN) -> tuple[Vec3, bool]:
    """Clamp a position setpoint under the canopy and inside the perimeter."""
    b = world.bounds
    clamped = Vec3(
        min(max(setpoint.x, b.n_min + margin), b.n_max - margin),
        min(max(setpoint.y, b.e_min + margin), b.e_max - margin),
        max(setpoint.z, world.canopy_ceiling + margin),
    )
    return clamped, clamped != setpoint


def detect_intervention(
    state: RigidBodyState, world: World, fence_enabled: bool
) -> str | None:
    """Classify the current state: collision beats fence_breach beats bounds_exit."""
    p = state.position
    for cyl in world.obstacles:
        if cyl.spans_depth(p.z) and (
            math.hypot(p.x - cyl.north, p.y - cyl.east)
            < cyl.radius + COLLISION_CLEARANCE
        ):
            return "collision"
    ground = world.ground_d(p.x, p.y)
    if ground < 0.0 and p.z > ground:
        return "collision"  # flew into raised terrain
    if fence_enabled:
        if world.canopy_ceiling - p.z > BREACH_THRESHOLD:
            return "fence_breach"
        if world.bounds.exceedance(p.x, p.y) > BREACH_THRESHOLD:
            return "bounds_exit"
    return None


def run_mission(config: MissionConfig) -> list[TelemetryRecord]:
    """Execute one mission; returns exactly `iterations` records on success.

    Raises MissionAbort (carrying partial records) when the start pose is
    already colliding or a remote policy fails mid-flight.
    """
    world = build_world(config)
    policy = build_policy(config)
    vehicle = config.vehicle
    wind = config.wind if config.wind is not None else Wind(seed=config.seed + 1)
    sensor_cfg = (
        config.sensors if config.sensors is not None else SensorConfig(seed=config.seed)
    )
    outer = (
        config.outer
        if config.outer is not None
        else OuterLoopConfig(trim_thrust=hover_pwm(vehicle))
    )
    gains = config.gains
    inner_dt = config.dt / config.inner_substeps

    state = initial_state(config.start)
    if detect_intervention(state, world, config.geo_fence_enabled) is not None:
        raise MissionAbort("start pose is already inside an obstacle or fence", [])

    imu_sim = ImuSimulator(sensor_cfg)
    ctl = ControllerState()
    safe_poses: deque[tuple[Vec3, float]] = deque(maxlen=SAFE_POSE_DEPTH)
    safe_poses.append((state.position, quat_yaw(state.orientation)))

    records: list[TelemetryRecord] = []
    imu_cache = imu_sim.read_imu(state)
    previous_snapshot: Vec3 | None = None
    previous_flagged = False

    try:
        for k in range(config.iterations):
            snapshot = state
            rays = observation_rays(state, world)
            observation = Observation(
                state=state, imu=imu_cache, range_sensors=rays, iteration=k
            )
            try:
                output = policy.next(observation)
            except PolicyError as exc:
                raise MissionAbort(
                    f"policy failure at iteration {k}: {exc}", records
                ) from exc

            raw_setpoint = state.position + output.delta()
            if config.geo_fence_enabled:
                setpoint, fence_clamped = geo_fence(raw_setpoint, world)
            else:
                setpoint, fence_clamped = raw_setpoint, False
            target, _ = to_target(output, state, outer, setpoint=setpoint)

            saturation_before = ctl.saturation_events
            motors = MotorCommands(0.0, 0.0, 0.0, 0.0)
            for _ in range(config.inner_substeps):
                imu_cache = imu_sim.read_imu(state)
                motors = control_step(target, imu_cache, gains, ctl, inner_dt)
                state = step(state, motors, vehicle, wind, inner_dt)
            saturation_delta = ctl.saturation_events - saturation_before

            kind = detect_intervention(state, world, config.geo_fence_enabled)
            if kind is None:
                safe_poses.append((state.position, quat_yaw(state.orientation)))
            else:
                safe_position, safe_yaw = safe_poses[-1]
                state = RigidBodyState(
                    position=safe_position,
                    orientation=yaw_quaternion(safe_yaw),
                    time=state.time,
                )
                ctl.reset()
                ctl.estimate = EstimatedAttitude(yaw=safe_yaw)
                imu_cache = imu_sim.read_imu(state)

            if previous_snapshot is None or previous_flagged:
                increment = 0.0
            else:
                increment = (snapshot.position - previous_snapshot).norm()
            records.append(
                TelemetryRecord(
                    iteration=k,
                    time=k * config.dt,
                    state=snapshot,
                    policy_output=output,
                    target=target,
                    motors=motors,
                    intervention=kind,
                    fence_clamped=fence_clamped,
                    distance_increment=increment,
                    saturation_events=saturation_delta,
                )
            )
            previous_snapshot = snapshot.position
            previous_flagged = kind is not None
    finally:
        policy.close()
    return records


def record_to_dict(record: TelemetryRecord) -> dict:
    s = record.state
    return {
        "iteration": record.iteration,
        "time": record.time,
        "state": {
            "p": list(s.position.as_tuple()),
            "v": list(s.velocity.as_tuple()),
            "a": list(s.acceleration.as_tuple()),
            "q": list(s.orientation.as_tuple()),
            "omega": list(s.angular_velocity.as_tuple()),
        },
        "policy_output": {
            "dN": record.policy_output.dn,
            "dE": record.policy_output.de,
            "dD": record.policy_output.dd,
            "q": list(record.policy_output.orientation.as_tuple()),
        },
        "target_attitude": {
            "roll": record.target.roll,
            "pitch": record.target.pitch,
            "yaw": record.target.yaw,
            "thrust": record.target.thrust,
        },
        "motor_commands": list(record.motors.as_tuple()),
        "intervention": record.intervention,
        "fence_clamped": record.fence_clamped,
        "distance_increment": record.distance_increment,
        "saturation_events": record.saturation_events,
    }


def record_from_dict(payload: dict) -> TelemetryRecord:
    s = payload["state"]
    out = payload["policy_output"]
    t = payload["target_attitude"]
    return TelemetryRecord(
        iteration=payload["iteration"],
        time=payload["time"],
        state=RigidBodyState(
            position=Vec3(*s["p"]),
            velocity=Vec3(*s["v"]),
            acceleration=Vec3(*s["a"]),
            orientation=Quaternion(*s["q"]),
            angular_velocity=Vec3(*s["omega"]),
            time=payload["time"],
        ),
        policy_output=PolicyOutput(
            dn=out["dN"], de=out["dE"], dd=out["dD"], orientation=Quaternion(*out["q"])
        ),
        target=TargetAttitude(
            roll=t["roll"], pitch=t["pitch"], yaw=t["yaw"], thrust=t["thrust"]
        ),
        motors=MotorCommands(*payload["motor_commands"]),
        intervention=payload["intervention"],
        fence_clamped=payload["fence_clamped"],
        distance_increment=payload["distance_increment"],
        saturation_events=payload["saturation_events"],
    )


def telemetry_header(config: MissionConfig, world: World) -> dict:
    return {
        "schema": TELEMETRY_SCHEMA,
        "dt": config.dt,
        "seed": config.seed,
        "world": world.name,
        "start": list(config.start.as_tuple()),
    }


def write_telemetry(
    path: str | Path,
    records: list[TelemetryRecord],
    header: dict,
    fault: str | None = None,
) -> None:
    """Write schema header + one record per line; a trailing fault line on aborts."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for record in records:
            fh.write(json.dumps(record_to_dict(record), separators=(",", ":")) + "\n")
        if fault is not None:
            fh.write(json.dumps({"fault": fault}, separators=(",", ":")) + "\n")


def read_telemetry(path: str | Path) -> tuple[dict, list[TelemetryRecord]]:
    """Strict reader: raises on any malformed line. CLI analyze uses its own
    tolerant line loop; this one backs replay, metrics, and the tests."""
    header: dict = {}
    records: list[TelemetryRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            payload = json.loads(line)
            if "schema" in payload:
                header = payload
            elif "fault" in payload:
                header["fault"] = payload["fault"]
            else:
                records.append(record_from_dict(payload))
    return header, records


def _require(mapping: dict, allowed: set[str], where: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(sorted(unknown))}")


def _vec3(value, where: str) -> Vec3:
    if not isinstance(value, list) or len(value) != 3:
        raise ConfigError(f"{where} must be a 3-element array")
    return Vec3(float(value[0]), float(value[1]), float(value[2]))


def config_from_dict(raw: dict) -> MissionConfig:
    """Build a MissionConfig from parsed JSON, validating field by field."""
    _require(
        raw,
        {
            "iterations",
            "dt",
            "start",
            "seed",
            "geo_fence_enabled",
            "inner_substeps",
            "policy",
            "world",
            "vehicle",
            "wind",
            "sensors",
            "gains",
            "outer",
        },
        "mission config",
    )
    try:
        policy_raw = dict(raw.get("policy", {"kind": "hover"}))
        kind = policy_raw.pop("kind")
        policy = PolicySpec(kind=kind, params=policy_raw)

        world_raw = dict(raw.get("world", {}))
        _require(
            world_raw,
            {"name", "seed", "size", "center", "obstacles", "canopy_ceiling", "bounds"},
            "world config",
        )
        world_kwargs: dict = {
            "name": world_raw.get("name", "plain_field"),
            "seed": world_raw.get("seed"),
            "size": float(world_raw.get("size", 200.0)),
        }
        if "center" in world_raw:
            world_kwargs["center"] = _vec3(world_raw["center"], "world.center")
        if "obstacles" in world_raw:
            world_kwargs["obstacles"] = tuple(
                Cylinder(**obstacle) for obstacle in world_raw["obstacles"]
            )
        if "canopy_ceiling" in world_raw:
            world_kwargs["canopy_ceiling"] = float(world_raw["canopy_ceiling"])
        if "bounds" in world_raw:
            world_kwargs["bounds"] = Bounds(*world_raw["bounds"])
        world = WorldSpec(**world_kwargs)

        vehicle_raw = dict(raw.get("vehicle", {}))
        for key in ("inertia_diag", "gravity"):
            if key in vehicle_raw:
                vehicle_raw[key] = _vec3(vehicle_raw[key], f"vehicle.{key}")
        if "motor_bias" in vehicle_raw:
            vehicle_raw["motor_bias"] = tuple(vehicle_raw["motor_bias"])
        vehicle = VehicleParams(**vehicle_raw)

        wind = None
        if "wind" in raw:
            wind_raw = dict(raw["wind"])
            for key in ("mean", "gust_amplitude"):
                if key in wind_raw:
                    wind_raw[key] = _vec3(wind_raw[key], f"wind.{key}")
            wind = Wind(**wind_raw)

        sensors = SensorConfig(**raw["sensors"]) if "sensors" in raw else None

        gains_raw = dict(raw.get("gains", {}))
        if "rate_pd" in gains_raw:
            gains_raw["rate_pd"] = PdGains(**gains_raw["rate_pd"])
        if "attitude_pid" in gains_raw:
            gains_raw["attitude_pid"] = PidGains(**gains_raw["attitude_pid"])
        gains = ControllerGains(**gains_raw)

        outer = OuterLoopConfig(**raw["outer"]) if "outer" in raw else None

        config = MissionConfig(
            iterations=int(raw.get("iterations", 150)),
            dt=float(raw.get("dt", 0.05)),
            start=_vec3(raw["start"], "start") if "start" in raw else Vec3(),
            seed=int(raw.get("seed", 0)),
            geo_fence_enabled=bool(raw.get("geo_fence_enabled", True)),
            inner_substeps=int(raw.get("inner_substeps", 4)),
            policy=policy,
            world=world,
            vehicle=vehicle,
            wind=wind,
            sensors=sensors,
            gains=gains,
            outer=outer,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid mission config: {exc}") from exc
    return config


def config_from_json(path: str | Path) -> MissionConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return config_from_dict(raw)
