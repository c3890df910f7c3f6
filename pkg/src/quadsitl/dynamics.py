"""Rigid-body quadrotor dynamics in the NED frame.

The translational integrators are fixed by contract and must stay exact
for polynomial accelerations:

* velocity uses the trapezoid rule  v' = v + (a_k + a_k1)/2 * dt
* position uses                     p' = p + v*dt + a_k/2 * dt^2

``step`` evaluates them in a pinned order: position from a_k, then the
net acceleration at the new configuration (a_k1), then velocity from the
(a_k, a_k1) pair, then orientation and body rates. Forces are thrust
along body -D, linear drag against the air-relative velocity, and
gravity; torques come from the X-layout motor geometry with motors 1,2
in front, 1,4 on the left, and 1,3 spinning clockwise.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .geom import (
    Quaternion,
    Vec3,
    from_angular_velocity,
    quat_mul,
    quat_normalized,
    rotate_vector,
)

DT_MAX = 0.1


class SimulationFault(RuntimeError):
    """A dynamics update produced a non-finite quantity."""

    def __init__(self, quantity: str, value: object):
        super().__init__(f"non-finite {quantity}: {value!r}")
        self.quantity = quantity


@dataclass(frozen=True, slots=True)
class MotorCommands:
    """Per-motor PWM in [0,1]."""

    pwm1: float
    pwm2: float
    pwm3: float
    pwm4: float

    def __post_init__(self):
        for name, value in zip(("pwm1", "pwm2", "pwm3", "pwm4"), self.as_tuple()):
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0,1], got {value!r}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.pwm1, self.pwm2, self.pwm3, self.pwm4)


ZERO_MOTORS = MotorCommands(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True, slots=True)
class VehicleParams:
    mass: float = 1.0
    arm_length: float = 0.25
    inertia_diag: Vec3 = field(default_factory=lambda: Vec3(0.02, 0.02, 0.04))
    thrust_coeff: float = 5.0  # N per unit PWM
    yaw_torque_coeff: float = 0.2  # N*m per unit PWM
    drag_coeff: float = 6.0  # N*s/m
    gravity: Vec3 = field(default_factory=lambda: Vec3(0.0, 0.0, 9.81))
    # additive per-motor PWM offset modelling rotor asymmetry; zero on a
    # healthy vehicle, used by the drift demonstration scenario
    motor_bias: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        if self.thrust_coeff <= 0.0:
            raise ValueError("thrust_coeff must be positive")
        if min(self.inertia_diag.as_tuple()) <= 0.0:
            raise ValueError("inertia components must be positive")
        if self.gravity.z <= 0.0:
            raise ValueError("gravity must point down (+D)")


@dataclass(frozen=True, slots=True)
class Wind:
    """Constant mean flow plus sinusoidal gusts with a seeded phase per axis."""

    mean: Vec3 = field(default_factory=Vec3)
    gust_amplitude: Vec3 = field(default_factory=Vec3)
    gust_period: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.gust_amplitude.norm() > 0.0 and self.gust_period <= 0.0:
            raise ValueError("gust_period must be positive when gusts are enabled")


CALM = Wind()


def wind_velocity(wind: Wind, t: float) -> Vec3:
    if wind.gust_amplitude.norm() == 0.0:
        return wind.mean
    rng = random.Random(wind.seed)
    phases = (rng.uniform(0, 2 * math.pi), rng.uniform(0, 2 * math.pi), rng.uniform(0, 2 * math.pi))
    w = 2.0 * math.pi / wind.gust_period
    return Vec3(
        wind.mean.x + wind.gust_amplitude.x * math.sin(w * t + phases[0]),
        wind.mean.y + wind.gust_amplitude.y * math.sin(w * t + phases[1]),
        wind.mean.z + wind.gust_amplitude.z * math.sin(w * t + phases[2]),
    )


@dataclass(frozen=True, slots=True)
class RigidBodyState:
    position: Vec3 = field(default_factory=Vec3)
    velocity: Vec3 = field(default_factory=Vec3)
    acceleration: Vec3 = field(default_factory=Vec3)
    orientation: Quaternion = field(default_factory=Quaternion)
    angular_velocity: Vec3 = field(default_factory=Vec3)
    time: float = 0.0


def initial_state(position: Vec3 = Vec3(), orientation: Quaternion = Quaternion()) -> RigidBodyState:
    return RigidBodyState(position=position, orientation=orientation)


def hover_pwm(params: VehicleParams) -> float:
    """PWM at which four thrust-linear motors exactly cancel gravity."""
    return params.mass * params.gravity.z / (4.0 * params.thrust_coeff)


def _effective_pwm(motors: MotorCommands, params: VehicleParams) -> tuple[float, float, float, float]:
    b = params.motor_bias
    return (motors.pwm1 + b[0], motors.pwm2 + b[1], motors.pwm3 + b[2], motors.pwm4 + b[3])


def net_acceleration(
    state: RigidBodyState,
    motors: MotorCommands,
    params: VehicleParams,
    wind: Wind = CALM,
) -> Vec3:
    """World-frame acceleration: rotated thrust plus drag, over mass, plus gravity."""
    p1, p2, p3, p4 = _effective_pwm(motors, params)
    # paired grouping keeps left/right mirror trajectories bit-exact
    total_pwm = (p1 + p2) + (p3 + p4)
    thrust_body = Vec3(0.0, 0.0, -params.thrust_coeff * total_pwm)
    thrust_world = rotate_vector(state.orientation, thrust_body)
    relative_flow = wind_velocity(wind, state.time) - state.velocity
    drag = relative_flow.scale(params.drag_coeff)
    inv_m = 1.0 / params.mass
    return Vec3(
        (thrust_world.x + drag.x) * inv_m + params.gravity.x,
        (thrust_world.y + drag.y) * inv_m + params.gravity.y,
        (thrust_world.z + drag.z) * inv_m + params.gravity.z,
    )


def angular_acceleration(motors: MotorCommands, params: VehicleParams) -> Vec3:
    """Body angular acceleration from the motor layout; gyroscopic terms omitted.

    Motors 1,2 front / 3,4 rear (pitch +,+,-,-); 1,4 left / 2,3 right
    (roll +,-,-,+); 1,3 CW / 2,4 CCW (yaw -,+,-,+).
    """
    p1, p2, p3, p4 = _effective_pwm(motors, params)
    lever = params.arm_length / math.sqrt(2.0)  # X layout: both axes share the diagonal arm
    # paired grouping keeps left/right mirror trajectories bit-exact
    roll_torque = params.thrust_coeff * lever * ((p1 + p4) - (p2 + p3))
    pitch_torque = params.thrust_coeff * lever * ((p1 + p2) - (p3 + p4))
    yaw_torque = params.yaw_torque_coeff * ((p2 + p4) - (p1 + p3))
    inertia = params.inertia_diag
    return Vec3(roll_torque / inertia.x, pitch_torque / inertia.y, yaw_torque / inertia.z)


def step_position(p: Vec3, v: Vec3, a: Vec3, dt: float) -> Vec3:
    return Vec3(
        p.x + v.x * dt + 0.5 * a.x * dt * dt,
        p.y + v.y * dt + 0.5 * a.y * dt * dt,
        p.z + v.z * dt + 0.5 * a.z * dt * dt,
    )


def step_velocity(v: Vec3, a_k: Vec3, a_k1: Vec3, dt: float) -> Vec3:
    return Vec3(
        v.x + 0.5 * (a_k.x + a_k1.x) * dt,
        v.y + 0.5 * (a_k.y + a_k1.y) * dt,
        v.z + 0.5 * (a_k.z + a_k1.z) * dt,
    )


def step_orientation(q: Quaternion, omega: Vec3, dt: float) -> Quaternion:
    """Advance attitude about the instantaneous body-rate axis, renormalized."""
    return quat_normalized(quat_mul(q, from_angular_velocity(omega, dt)))


def _require_finite(v: Vec3, quantity: str) -> Vec3:
    if not (math.isfinite(v.x) and math.isfinite(v.y) and math.isfinite(v.z)):
        raise SimulationFault(quantity, v.as_tuple())
    return v


def step(
    state: RigidBodyState,
    motors: MotorCommands,
    params: VehicleParams,
    wind: Wind = CALM,
    dt: float = 0.05,
) -> RigidBodyState:
    """One dynamics step of ``dt`` seconds under constant motor commands.

    Raises
    ------
    ValueError
        If ``dt`` is outside (0, 0.1].
    SimulationFault
        If any intermediate quantity becomes non-finite.
    """
    if not 0.0 < dt <= DT_MAX:
        raise ValueError(f"dt must lie in (0, {DT_MAX}], got {dt!r}")

    a_k = _require_finite(net_acceleration(state, motors, params, wind), "acceleration")
    position = step_position(state.position, state.velocity, a_k, dt)
    moved = RigidBodyState(
        position=position,
        velocity=state.velocity,
        acceleration=a_k,
        orientation=state.orientation,
        angular_velocity=state.angular_velocity,
        time=state.time + dt,
    )
    a_k1 = _require_finite(net_acceleration(moved, motors, params, wind), "acceleration")
    velocity = _require_finite(step_velocity(state.velocity, a_k, a_k1, dt), "velocity")
    orientation = step_orientation(state.orientation, state.angular_velocity, dt)
    alpha = angular_acceleration(motors, params)
    omega = _require_finite(state.angular_velocity + alpha.scale(dt), "angular velocity")

    # inelastic ground plane at D = 0: never sink below, kill downward motion
    if position.z >= 0.0:
        position = Vec3(position.x, position.y, 0.0)
        if velocity.z > 0.0:
            velocity = Vec3(velocity.x, velocity.y, 0.0)

    return RigidBodyState(
        position=_require_finite(position, "position"),
        velocity=velocity,
        acceleration=a_k1,
        orientation=orientation,
        angular_velocity=omega,
        time=state.time + dt,
    )
