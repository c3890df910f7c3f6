"""Simulated IMU: gyro, accelerometer (specific force) and magnetometer.

The accelerometer reports specific force in the body frame, i.e. the
world-frame (a - g) rotated into the body: hover reads (0,0,-9.81) and
free fall reads zero. The magnetometer reports world north (1,0,0) in
the body frame. Noise is seeded Gaussian per axis; an optional
exponential low-pass runs over each sensor triplet (alpha = 1 disables
it).

Motor vibration is modelled as one high-frequency sinusoid injected
into the accelerometer's y and z axes together (a diagonal shake, the
worst case for tilt extraction: the correlated components rectify into
a DC attitude error once atan2 gets involved, which the low-pass
removes by attenuating the sinusoid before that nonlinearity).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .dynamics import RigidBodyState
from .geom import Vec3, rotate_vector_inverse

WORLD_NORTH = Vec3(1.0, 0.0, 0.0)


@dataclass(frozen=True, slots=True)
class ImuReading:
    gyro: Vec3
    accel: Vec3
    mag: Vec3
    time: float


@dataclass(frozen=True, slots=True)
class SensorConfig:
    gyro_noise_sd: float = 0.005
    accel_noise_sd: float = 0.05
    mag_noise_sd: float = 0.01
    lowpass_alpha: float = 1.0  # 1 = filtering disabled
    seed: int = 0
    vibration_amplitude: float = 0.0  # m/s^2, motor-vibration feed into accel y+z
    vibration_freq_hz: float = 25.0

    def __post_init__(self):
        for name in ("gyro_noise_sd", "accel_noise_sd", "mag_noise_sd"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.lowpass_alpha <= 1.0:
            raise ValueError("lowpass_alpha must lie in [0,1]")
        if self.vibration_amplitude < 0.0:
            raise ValueError("vibration_amplitude must be >= 0")


def low_pass(prev: Vec3, current: Vec3, alpha: float) -> Vec3:
    """Exponential smoothing, per axis: alpha*current + (1-alpha)*prev."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0,1]")
    keep = 1.0 - alpha
    return Vec3(
        alpha * current.x + keep * prev.x,
        alpha * current.y + keep * prev.y,
        alpha * current.z + keep * prev.z,
    )


class ImuSimulator:
    """Owns the seeded noise stream and the filter memory of one IMU."""

    def __init__(self, config: SensorConfig):
        self.config = config
        self._rng = random.Random(config.seed)
        self._prev_gyro: Vec3 | None = None
        self._prev_accel: Vec3 | None = None
        self._prev_mag: Vec3 | None = None

    def _noise(self, sd: float) -> Vec3:
        if sd == 0.0:
            return Vec3(0.0, 0.0, 0.0)
        g = self._rng.gauss
        return Vec3(g(0.0, sd), g(0.0, sd), g(0.0, sd))

    def _filtered(self, prev: Vec3 | None, current: Vec3) -> Vec3:
        if prev is None or self.config.lowpass_alpha == 1.0:
            return current
        return low_pass(prev, current, self.config.lowpass_alpha)

    def read_imu(self, state: RigidBodyState) -> ImuReading:
        cfg = self.config
        gyro = state.angular_velocity + self._noise(cfg.gyro_noise_sd)

        specific_force = state.acceleration - Vec3(0.0, 0.0, 9.81)
        accel = rotate_vector_inverse(state.orientation, specific_force) + self._noise(cfg.accel_noise_sd)
        if cfg.vibration_amplitude > 0.0:
            shake = cfg.vibration_amplitude * math.sin(2.0 * math.pi * cfg.vibration_freq_hz * state.time)
            accel = Vec3(accel.x, accel.y + shake, accel.z + shake)

        mag = rotate_vector_inverse(state.orientation, WORLD_NORTH) + self._noise(cfg.mag_noise_sd)

        gyro = self._filtered(self._prev_gyro, gyro)
        accel = self._filtered(self._prev_accel, accel)
        mag = self._filtered(self._prev_mag, mag)
        self._prev_gyro, self._prev_accel, self._prev_mag = gyro, accel, mag
        return ImuReading(gyro=gyro, accel=accel, mag=mag, time=state.time)
