"""Cascade flight controller: attitude estimation, two nested loops, motor mixing.

The control path runs once per inner step and is purely sample-based; no
internal clock. Structure:

    estimate_attitude  complementary filter fusing gyro integration with
                       accelerometer tilt and magnetometer heading
    rate_loop          PD on attitude error, emits desired body rates
    attitude_loop      PID on body-rate error, emits normalized torque efforts
    mix_pwm            maps collective thrust + efforts onto four motors

All angles are radians, rates rad/s. Efforts and thrust share the motor PWM
scale, so gains are dimensionless against that scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .dynamics import MotorCommands
from .geom import Vec3, wrap_pi
from .sensors import ImuReading

# Accelerometer tilt extraction is meaningless near free fall; below this
# specific-force magnitude the filter trusts the gyro alone.
ACCEL_TRUST_FLOOR = 1.0


@dataclass(frozen=True, slots=True)
class TargetAttitude:
    """Setpoint for the outer cascade: lean angles, heading, and collective thrust."""

    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0
    thrust: float = 0.0

    def __post_init__(self) -> None:
        for name in ("roll", "pitch", "yaw", "thrust"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"TargetAttitude.{name} must be finite")
        if not 0.0 <= self.thrust <= 1.0:
            raise ValueError(f"thrust must lie in [0, 1], got {self.thrust}")


@dataclass(frozen=True, slots=True)
class EstimatedAttitude:
    """Filtered roll/pitch/yaw estimate, radians."""

    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0


@dataclass(frozen=True, slots=True)
class BodyRateCommand:
    """Per-axis motion commands on the motor PWM scale (rate-control outputs)."""

    roll_rate_cmd: float = 0.0
    pitch_rate_cmd: float = 0.0
    yaw_rate_cmd: float = 0.0


@dataclass(frozen=True, slots=True)
class PdGains:
    kp: float = 0.0
    kd: float = 0.0


@dataclass(frozen=True, slots=True)
class PidGains:
    kp: float = 0.0
    ki: float = 0.0
    kd: float = 0.0


@dataclass(frozen=True, slots=True)
class ControllerGains:
    """Gains and limits for both loops; one set applied to each body axis.

    Defaults hold a 1 kg test vehicle to the step-response and hover bounds
    used by the acceptance suite. integrator_limit bounds each axis of the
    rate-loop integrator (anti-windup); output_limit clamps both the desired
    rates and the torque efforts.
    """

    rate_pd: PdGains = field(default_factory=lambda: PdGains(kp=4.5, kd=0.05))
    attitude_pid: PidGains = field(
        default_factory=lambda: PidGains(kp=0.15, ki=0.05, kd=0.003)
    )
    integrator_limit: float = 0.5
    output_limit: float = 0.3
    gyro_weight: float = 0.98

    def __post_init__(self) -> None:
        if not 0.0 <= self.gyro_weight <= 1.0:
            raise ValueError(f"gyro_weight must lie in [0, 1], got {self.gyro_weight}")
        if self.integrator_limit < 0.0 or self.output_limit < 0.0:
            raise ValueError("limits must be non-negative")


@dataclass(slots=True)
class ControllerState:
    """Mutable per-vehicle controller memory carried across steps."""

    estimate: EstimatedAttitude = field(default_factory=EstimatedAttitude)
    prev_angle_error: Vec3 | None = None
    prev_rate_error: Vec3 | None = None
    integrator: Vec3 = field(default_factory=Vec3)
    saturation_events: int = 0

    def reset(self) -> None:
        self.estimate = EstimatedAttitude()
        self.prev_angle_error = None
        self.prev_rate_error = None
        self.integrator = Vec3()
        self.saturation_events = 0


def _clamp(value: float, low: float, high: float) -> float:
    return min(max(value, low), high)


def estimate_attitude(
    imu: ImuReading,
    previous: EstimatedAttitude,
    dt: float,
    gyro_weight: float = 0.98,
) -> EstimatedAttitude:
    """Advance the complementary attitude filter by one sample.

    Gyro rates are integrated for the propagation term. When the specific
    force is strong enough to carry tilt information, accelerometer roll and
    pitch pull the estimate back with weight (1 - gyro_weight); the
    magnetometer corrects yaw the same way using a tilt-compensated heading.
    Corrections are applied along the wrapped angle difference so a reference
    on the far side of +/-pi never drags the estimate the long way around.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not 0.0 <= gyro_weight <= 1.0:
        raise ValueError(f"gyro_weight must lie in [0, 1], got {gyro_weight}")

    roll = previous.roll + imu.gyro.x * dt
    pitch = previous.pitch + imu.gyro.y * dt
    yaw = previous.yaw + imu.gyro.z * dt

    blend = 1.0 - gyro_weight
    ax, ay, az = imu.accel.x, imu.accel.y, imu.accel.z
    if imu.accel.norm() >= ACCEL_TRUST_FLOOR:
        roll_ref = math.atan2(-ay, -az)
        pitch_ref = math.atan2(ax, math.hypot(ay, az))
        roll = wrap_pi(roll + blend * wrap_pi(roll_ref - roll))
        pitch = wrap_pi(pitch + blend * wrap_pi(pitch_ref - pitch))

    # Level the magnetometer with the freshly corrected roll/pitch before
    # extracting heading, otherwise lean couples into yaw.
    sr, cr = math.sin(roll), math.cos(roll)
    sp, cp = math.sin(pitch), math.cos(pitch)
    mx, my, mz = imu.mag.x, imu.mag.y, imu.mag.z
    level_x = cp * mx + sp * sr * my + sp * cr * mz
    level_y = cr * my - sr * mz
    if level_x != 0.0 or level_y != 0.0:
        yaw_ref = math.atan2(-level_y, level_x)
        yaw = yaw + blend * wrap_pi(yaw_ref - yaw)
    # Final wrap keeps every channel inside (-pi, pi] even on the pure
    # integration path (tumbling in free fall).
    return EstimatedAttitude(roll=wrap_pi(roll), pitch=wrap_pi(pitch), yaw=wrap_pi(yaw))


def rate_loop(
    target: TargetAttitude,
    estimate: EstimatedAttitude,
    gains: ControllerGains,
    ctl: ControllerState,
    dt: float,
) -> Vec3:
    """PD on attitude error; returns desired body rates, rad/s, clamped.

    The yaw error is wrapped to (-pi, pi] so the vehicle always turns the
    short way. Roll and pitch errors are used raw: targets are tilt-limited
    far inside the wrap range.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    error = Vec3(
        target.roll - estimate.roll,
        target.pitch - estimate.pitch,
        wrap_pi(target.yaw - estimate.yaw),
    )
    if ctl.prev_angle_error is None:
        derivative = Vec3()
    else:
        derivative = (error - ctl.prev_angle_error).scale(1.0 / dt)
    ctl.prev_angle_error = error
    kp, kd = gains.rate_pd.kp, gains.rate_pd.kd
    lim = gains.output_limit
    return Vec3(
        _clamp(kp * error.x + kd * derivative.x, -lim, lim),
        _clamp(kp * error.y + kd * derivative.y, -lim, lim),
        _clamp(kp * error.z + kd * derivative.z, -lim, lim),
    )


def attitude_loop(
    desired_rates: Vec3,
    gyro: Vec3,
    gains: ControllerGains,
    ctl: ControllerState,
    dt: float,
) -> BodyRateCommand:
    """PID on body-rate error; returns torque efforts on the PWM scale.

    The integrator is clamped per axis to integrator_limit before use, which
    bounds windup during saturation instead of resetting history.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    error = desired_rates - gyro
    ilim = gains.integrator_limit
    integ = Vec3(
        _clamp(ctl.integrator.x + error.x * dt, -ilim, ilim),
        _clamp(ctl.integrator.y + error.y * dt, -ilim, ilim),
        _clamp(ctl.integrator.z + error.z * dt, -ilim, ilim),
    )
    ctl.integrator = integ
    if ctl.prev_rate_error is None:
        derivative = Vec3()
    else:
        derivative = (error - ctl.prev_rate_error).scale(1.0 / dt)
    ctl.prev_rate_error = error
    kp, ki, kd = gains.attitude_pid.kp, gains.attitude_pid.ki, gains.attitude_pid.kd
    lim = gains.output_limit
    return BodyRateCommand(
        roll_rate_cmd=_clamp(kp * error.x + ki * integ.x + kd * derivative.x, -lim, lim),
        pitch_rate_cmd=_clamp(kp * error.y + ki * integ.y + kd * derivative.y, -lim, lim),
        yaw_rate_cmd=_clamp(kp * error.z + ki * integ.z + kd * derivative.z, -lim, lim),
    )


def mix_pwm_raw(
    thrust: float, command: BodyRateCommand
) -> tuple[float, float, float, float]:
    """Motor mix before clamping; exposed for saturation accounting and tests.

    Sign layout (motors 1,2 front; 1,4 left; 1,3 spin clockwise):

        pwm1 = thrust - yaw + roll + pitch
        pwm2 = thrust + yaw - roll + pitch
        pwm3 = thrust - yaw - roll - pitch
        pwm4 = thrust + yaw + roll - pitch
    """
    t = thrust
    r, p, y = command.roll_rate_cmd, command.pitch_rate_cmd, command.yaw_rate_cmd
    return (t - y + r + p, t + y - r + p, t - y - r - p, t + y + r - p)


def mix_pwm(thrust: float, command: BodyRateCommand) -> MotorCommands:
    """Clamped motor mix: each channel limited to the physical PWM range [0, 1]."""
    raw = mix_pwm_raw(thrust, command)
    return MotorCommands(*(_clamp(v, 0.0, 1.0) for v in raw))


def control_step(
    target: TargetAttitude,
    imu: ImuReading,
    gains: ControllerGains,
    ctl: ControllerState,
    dt: float,
) -> MotorCommands:
    """Run one full cascade pass and update controller memory in place.

    Order: refresh the attitude estimate from the IMU, convert attitude error
    to desired rates, convert rate error to torque efforts, mix onto motors.
    A step whose pre-clamp mix leaves [0, 1] on any channel increments
    ctl.saturation_events by one.
    """
    ctl.estimate = estimate_attitude(imu, ctl.estimate, dt, gains.gyro_weight)
    desired = rate_loop(target, ctl.estimate, gains, ctl, dt)
    command = attitude_loop(desired, imu.gyro, gains, ctl, dt)
    raw = mix_pwm_raw(target.thrust, command)
    if any(v < 0.0 or v > 1.0 for v in raw):
        ctl.saturation_events += 1
    return MotorCommands(*(_clamp(v, 0.0, 1.0) for v in raw))
