"""Navigation policies and the mapping from policy output to attitude targets.

A policy consumes one Observation per mission iteration and emits a
PolicyOutput: the NED position delta to fly next plus an absolute orientation
quaternion. Built-in policies cover hovering, scripted waypoint routes, a
seeded random explorer, telemetry replay, and a remote policy reached over a
newline-delimited JSON TCP protocol.

to_target converts a policy output into a TargetAttitude for the cascade
controller: yaw comes from the output quaternion, roll/pitch/thrust from a
position P-controller toward the delta setpoint. A config switch lets the
quaternion supply roll/pitch directly instead.
"""

from __future__ import annotations

import json
import math
import socket
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path

from .control import TargetAttitude
from .dynamics import RigidBodyState
from .geom import (
    Quaternion,
    Vec3,
    quat_norm,
    quat_yaw,
    to_euler,
    yaw_quaternion,
)
from .sensors import ImuReading

# Forward-cone ray fan, left to right, degrees relative to body heading.
RAY_AZIMUTHS_DEG = (-52.5, -37.5, -22.5, -7.5, 7.5, 22.5, 37.5, 52.5)
RAY_MAX_RANGE = 50.0

# Policy deltas beyond this are rejected as implausible single-step commands.
DELTA_LIMIT = 50.0

# Quaternions whose norm strays further than this from 1 are garbage, not
# numeric drift, and are rejected instead of silently renormalized.
NORM_REJECT_BAND = 0.5


class PolicyError(RuntimeError):
    """Policy failure carrying a human-readable cause (remote faults mostly)."""


@dataclass(frozen=True, slots=True)
class Observation:
    """Everything a policy may look at for one iteration."""

    state: RigidBodyState
    imu: ImuReading
    range_sensors: tuple[float, ...]
    iteration: int

    def __post_init__(self) -> None:
        if len(self.range_sensors) != len(RAY_AZIMUTHS_DEG):
            raise ValueError(
                f"expected {len(RAY_AZIMUTHS_DEG)} ray distances, "
                f"got {len(self.range_sensors)}"
            )
        for d in self.range_sensors:
            if not (0.0 <= d <= RAY_MAX_RANGE):
                raise ValueError(f"ray distance {d} outside [0, {RAY_MAX_RANGE}]")
        if self.iteration < 0:
            raise ValueError("iteration must be non-negative")


@dataclass(frozen=True, slots=True)
class PolicyOutput:
    """Seven-value policy action: NED position delta plus orientation.

    The quaternion is normalized on construction when its norm is within
    NORM_REJECT_BAND of 1; anything further off is rejected. Accepted outputs
    therefore always carry |q| = 1 to within 1e-9.
    """

    dn: float = 0.0
    de: float = 0.0
    dd: float = 0.0
    orientation: Quaternion = field(default_factory=Quaternion)

    def __post_init__(self) -> None:
        for name in ("dn", "de", "dd"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"PolicyOutput.{name} must be finite")
            if abs(value) > DELTA_LIMIT:
                raise ValueError(
                    f"PolicyOutput.{name} = {value} exceeds +/-{DELTA_LIMIT} m"
                )
        norm = quat_norm(self.orientation)
        if not math.isfinite(norm) or abs(norm - 1.0) >= NORM_REJECT_BAND:
            raise ValueError(f"orientation norm {norm} too far from 1 to accept")
        q = self.orientation
        object.__setattr__(
            self,
            "orientation",
            Quaternion(q.q0 / norm, q.q1 / norm, q.q2 / norm, q.q3 / norm),
        )

    def delta(self) -> Vec3:
        return Vec3(self.dn, self.de, self.dd)


HOVER_OUTPUT = PolicyOutput()


class Policy(ABC):
    """One policy instance drives one mission; next() is called once per iteration."""

    @abstractmethod
    def next(self, observation: Observation) -> PolicyOutput: ...

    def close(self) -> None:
        """Release external resources; no-op for in-process policies."""


class HoverPolicy(Policy):
    """Always commands zero delta and identity orientation."""

    def next(self, observation: Observation) -> PolicyOutput:
        return HOVER_OUTPUT


class WaypointPolicy(Policy):
    """Flies an ordered waypoint list, emitting steps of bounded length.

    Each call aims at the active waypoint: the delta is the remaining vector
    clipped to step_length and the quaternion faces the waypoint. A waypoint
    is consumed once the vehicle is within arrival_radius; after the last one
    the policy holds position at its final heading.
    """

    def __init__(
        self,
        waypoints: list[Vec3],
        step_length: float = 1.0,
        arrival_radius: float = 0.5,
    ) -> None:
        if not waypoints:
            raise ValueError("waypoint list must not be empty")
        if step_length <= 0.0 or step_length > DELTA_LIMIT:
            raise ValueError(f"step_length must lie in (0, {DELTA_LIMIT}]")
        if arrival_radius <= 0.0:
            raise ValueError("arrival_radius must be positive")
        self._waypoints = list(waypoints)
        self._index = 0
        self._step = step_length
        self._arrival = arrival_radius
        self._yaw = 0.0

    def next(self, observation: Observation) -> PolicyOutput:
        position = observation.state.position
        while (
            self._index < len(self._waypoints)
            and (self._waypoints[self._index] - position).norm() <= self._arrival
        ):
            self._index += 1
        if self._index >= len(self._waypoints):
            return PolicyOutput(orientation=yaw_quaternion(self._yaw))
        remaining = self._waypoints[self._index] - position
        horizontal = math.hypot(remaining.x, remaining.y)
        if horizontal > 1e-9:
            self._yaw = math.atan2(remaining.y, remaining.x)
        distance = remaining.norm()
        if distance > self._step:
            remaining = remaining.scale(self._step / distance)
        return PolicyOutput(
            dn=remaining.x,
            de=remaining.y,
            dd=remaining.z,
            orientation=yaw_quaternion(self._yaw),
        )


class RandomExplorerPolicy(Policy):
    """Seeded wandering flight that steers away from nearby obstacles.

    The heading performs a Gaussian random walk; when the shortest forward
    ray drops below avoid_range the heading is pushed toward the freer side
    of the ray fan, harder the closer the obstacle. Altitude is held.
    Identical seeds give identical output sequences.
    """

    def __init__(
        self,
        seed: int,
        step_length: float = 1.0,
        wander_sd: float = 0.15,
        avoid_range: float = 8.0,
        turn_gain: float = 0.6,
    ) -> None:
        import random

        if step_length <= 0.0 or step_length > DELTA_LIMIT:
            raise ValueError(f"step_length must lie in (0, {DELTA_LIMIT}]")
        self._rng = random.Random(seed)
        self._step = step_length
        self._wander_sd = wander_sd
        self._avoid_range = avoid_range
        self._turn_gain = turn_gain
        self._heading = 0.0

    def next(self, observation: Observation) -> PolicyOutput:
        rays = observation.range_sensors
        half = len(rays) // 2
        nearest = min(rays)
        steer = 0.0
        if nearest < self._avoid_range:
            left_clear = sum(rays[:half]) / half
            right_clear = sum(rays[half:]) / half
            # positive yaw turns right (clockwise from above in NED)
            direction = 1.0 if right_clear >= left_clear else -1.0
            steer = direction * self._turn_gain * (1.0 - nearest / self._avoid_range)
        self._heading += self._rng.gauss(0.0, self._wander_sd) + steer
        return PolicyOutput(
            dn=self._step * math.cos(self._heading),
            de=self._step * math.sin(self._heading),
            dd=0.0,
            orientation=yaw_quaternion(self._heading),
        )


class ReplayPolicy(Policy):
    """Re-emits the policy outputs recorded in a telemetry log, in order.

    Pacing is inherent: one output per mission iteration, matching the rate
    the log was produced at. After the log is exhausted the policy holds a
    hover output, so replays into longer missions degrade gracefully.
    """

    def __init__(self, path: str | Path) -> None:
        self._outputs: list[PolicyOutput] = []
        self._cursor = 0
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                if "schema" in record and "policy_output" not in record:
                    continue  # header line
                out = record["policy_output"]
                q = out["q"]
                self._outputs.append(
                    PolicyOutput(
                        dn=out["dN"],
                        de=out["dE"],
                        dd=out["dD"],
                        orientation=Quaternion(q[0], q[1], q[2], q[3]),
                    )
                )

    def next(self, observation: Observation) -> PolicyOutput:
        if self._cursor >= len(self._outputs):
            return HOVER_OUTPUT
        output = self._outputs[self._cursor]
        self._cursor += 1
        return output


def encode_request(observation: Observation, image_b64: str | None = None) -> str:
    """Serialize one wire-protocol request line (no trailing newline)."""
    state = observation.state
    payload: dict = {
        "iteration": observation.iteration,
        "state": {
            "p": list(state.position.as_tuple()),
            "v": list(state.velocity.as_tuple()),
            "q": list(state.orientation.as_tuple()),
            "omega": list(state.angular_velocity.as_tuple()),
        },
        "rays": list(observation.range_sensors),
    }
    if image_b64 is not None:
        payload["image_b64"] = image_b64
    return json.dumps(payload, separators=(",", ":"))


def decode_response(line: str) -> PolicyOutput:
    """Parse and validate one wire-protocol response line.

    Raises PolicyError naming the defect: invalid JSON, a missing or
    non-numeric field, a wrong-size quaternion, or a rejected norm.
    """
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as exc:
        raise PolicyError(f"invalid JSON in response: {exc}") from exc
    if not isinstance(payload, dict):
        raise PolicyError("response must be a JSON object")
    for key in ("dN", "dE", "dD", "q"):
        if key not in payload:
            raise PolicyError(f"response missing field '{key}'")
    q = payload["q"]
    if not isinstance(q, list) or len(q) != 4:
        raise PolicyError("response field 'q' must be a 4-element array")
    values = []
    for key in ("dN", "dE", "dD"):
        v = payload[key]
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise PolicyError(f"response field '{key}' must be a number")
        values.append(float(v))
    for c in q:
        if not isinstance(c, (int, float)) or isinstance(c, bool):
            raise PolicyError("response quaternion components must be numbers")
    norm = math.hypot(*(float(c) for c in q))
    if not math.isfinite(norm) or abs(norm - 1.0) >= NORM_REJECT_BAND:
        raise PolicyError(f"response rejected: quaternion norm {norm:.6g} outside acceptance band")
    try:
        return PolicyOutput(
            dn=values[0],
            de=values[1],
            dd=values[2],
            orientation=Quaternion(float(q[0]), float(q[1]), float(q[2]), float(q[3])),
        )
    except ValueError as exc:
        raise PolicyError(f"response rejected: {exc}") from exc


class RemotePolicy(Policy):
    """Blocking request/response client for an external policy server.

    Connects lazily on first use and keeps the connection for the whole
    mission: one request line per iteration, answered in order. Any socket
    failure, timeout, or malformed response raises PolicyError with the
    cause; the mission layer decides what to do with it.
    """

    def __init__(self, host: str, port: int, timeout: float = 1.0) -> None:
        if timeout <= 0.0:
            raise ValueError("timeout must be positive")
        self._host = host
        self._port = port
        self._timeout = timeout
        self._sock: socket.socket | None = None
        self._reader = None

    def _connect(self) -> None:
        try:
            self._sock = socket.create_connection(
                (self._host, self._port), timeout=self._timeout
            )
        except OSError as exc:
            raise PolicyError(
                f"cannot connect to policy server {self._host}:{self._port}: {exc}"
            ) from exc
        self._reader = self._sock.makefile("r", encoding="utf-8", newline="\n")

    def next(self, observation: Observation) -> PolicyOutput:
        if self._sock is None:
            self._connect()
        assert self._sock is not None and self._reader is not None
        request = encode_request(observation) + "\n"
        try:
            self._sock.sendall(request.encode("utf-8"))
            line = self._reader.readline()
        except socket.timeout as exc:
            raise PolicyError(
                f"policy server timed out after {self._timeout}s"
            ) from exc
        except OSError as exc:
            raise PolicyError(f"policy server connection failed: {exc}") from exc
        if not line:
            raise PolicyError("policy server closed the connection")
        return decode_response(line)

    def close(self) -> None:
        if self._reader is not None:
            self._reader.close()
            self._reader = None
        if self._sock is not None:
            self._sock.close()
            self._sock = None


@dataclass(frozen=True, slots=True)
class OuterLoopConfig:
    """Position-to-attitude mapping constants for to_target.

    kp_pos converts metres of horizontal error to radians of lean, kp_alt
    metres of altitude error to thrust offset from trim. attitude_source
    picks where roll/pitch come from: the position controller ("position")
    or the policy quaternion itself ("quaternion").
    """

    kp_pos: float = 0.04
    kp_alt: float = 0.02
    tilt_limit: float = 0.35
    trim_thrust: float = 0.4905
    attitude_source: str = "position"

    def __post_init__(self) -> None:
        if self.kp_pos < 0.0 or self.kp_alt < 0.0:
            raise ValueError("gains must be non-negative")
        if not 0.0 < self.tilt_limit <= math.pi / 2:
            raise ValueError("tilt_limit must lie in (0, pi/2]")
        if not 0.0 <= self.trim_thrust <= 1.0:
            raise ValueError("trim_thrust must lie in [0, 1]")
        if self.attitude_source not in ("position", "quaternion"):
            raise ValueError("attitude_source must be 'position' or 'quaternion'")


def _clamp(value: float, low: float, high: float) -> float:
    return min(max(value, low), high)


def to_target(
    output: PolicyOutput,
    state: RigidBodyState,
    limits: OuterLoopConfig,
    setpoint: Vec3 | None = None,
) -> tuple[TargetAttitude, Vec3]:
    """Map a policy output to an attitude target and its position setpoint.

    The setpoint is the current position plus the output delta, unless a
    pre-clamped setpoint (e.g. after geo-fencing) is supplied. Yaw is taken
    from the output quaternion. Roll/pitch lean the vehicle toward the
    setpoint: the error is expressed in the current heading frame, so a
    scenario rotated in yaw produces correspondingly rotated commands.
    Pitching nose-down (negative) moves forward; rolling right (positive)
    moves right. Thrust is trim plus a climb-proportional term.
    """
    if setpoint is None:
        setpoint = state.position + output.delta()
    yaw_target = quat_yaw(output.orientation)

    if limits.attitude_source == "quaternion":
        euler = to_euler(output.orientation)
        roll = _clamp(euler.roll, -limits.tilt_limit, limits.tilt_limit)
        pitch = _clamp(euler.pitch, -limits.tilt_limit, limits.tilt_limit)
    else:
        error = setpoint - state.position
        heading = quat_yaw(state.orientation)
        cos_h, sin_h = math.cos(heading), math.sin(heading)
        err_forward = cos_h * error.x + sin_h * error.y
        err_right = -sin_h * error.x + cos_h * error.y
        pitch = _clamp(
            -limits.kp_pos * err_forward, -limits.tilt_limit, limits.tilt_limit
        )
        roll = _clamp(limits.kp_pos * err_right, -limits.tilt_limit, limits.tilt_limit)

    err_down = setpoint.z - state.position.z
    thrust = _clamp(limits.trim_thrust - limits.kp_alt * err_down, 0.0, 1.0)
    return (
        TargetAttitude(roll=roll, pitch=pitch, yaw=yaw_target, thrust=thrust),
        setpoint,
    )
