"""Vectors, quaternions and Euler angles for a right-handed NED world.

Conventions used everywhere in this package:

* Axes are North/East/Down; D grows toward the ground, altitude is -D.
* Quaternions are scalar-first ``(q0, q1, q2, q3)`` and Hamilton
  (i*j = k), so ``quat_mul(a, b)`` applies ``b`` first, then ``a``.
* Orientation quaternions map body-frame vectors into the world frame.
* Euler angles are intrinsic Z-Y-X (yaw, pitch, roll).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

UNIT_TOLERANCE = 1e-9
OMEGA_EPSILON = 1e-12
GIMBAL_LOCK_TOLERANCE = 1e-6


@dataclass(frozen=True, slots=True)
class Vec3:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def scale(self, k: float) -> "Vec3":
        return Vec3(k * self.x, k * self.y, k * self.z)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def normalized(self) -> "Vec3":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize a zero vector")
        return self.scale(1.0 / n)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True, slots=True)
class Quaternion:
    """Scalar-first unit quaternion; identity by default."""

    q0: float = 1.0
    q1: float = 0.0
    q2: float = 0.0
    q3: float = 0.0

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.q0, self.q1, self.q2, self.q3)


@dataclass(frozen=True, slots=True)
class EulerAngles:
    """Z-Y-X angles in radians. ``degenerate`` marks gimbal lock (|pitch| = pi/2)."""

    roll: float
    pitch: float
    yaw: float
    degenerate: bool = False


IDENTITY = Quaternion()


def wrap_pi(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


def quat_norm(q: Quaternion) -> float:
    return math.sqrt(q.q0 * q.q0 + q.q1 * q.q1 + q.q2 * q.q2 + q.q3 * q.q3)


def quat_normalized(q: Quaternion) -> Quaternion:
    n = quat_norm(q)
    if n == 0.0:
        raise ValueError("cannot normalize a zero quaternion")
    return Quaternion(q.q0 / n, q.q1 / n, q.q2 / n, q.q3 / n)


def quat_conjugate(q: Quaternion) -> Quaternion:
    return Quaternion(q.q0, -q.q1, -q.q2, -q.q3)


def quat_mul(a: Quaternion, b: Quaternion) -> Quaternion:
    """Hamilton product a*b."""
    return Quaternion(
        a.q0 * b.q0 - a.q1 * b.q1 - a.q2 * b.q2 - a.q3 * b.q3,
        a.q0 * b.q1 + a.q1 * b.q0 + a.q2 * b.q3 - a.q3 * b.q2,
        a.q0 * b.q2 - a.q1 * b.q3 + a.q2 * b.q0 + a.q3 * b.q1,
        a.q0 * b.q3 + a.q1 * b.q2 - a.q2 * b.q1 + a.q3 * b.q0,
    )


def from_axis_angle(axis: Vec3, angle: float) -> Quaternion:
    """Quaternion rotating by ``angle`` (radians) about a unit ``axis``.

    Raises
    ------
    ValueError
        If ``axis`` is not unit length within 1e-9.
    """
    if abs(axis.norm() - 1.0) > UNIT_TOLERANCE:
        raise ValueError(f"rotation axis must be unit length, got |axis|={axis.norm()!r}")
    half = 0.5 * angle
    s = math.sin(half)
    return Quaternion(math.cos(half), axis.x * s, axis.y * s, axis.z * s)


def from_angular_velocity(omega: Vec3, dt: float) -> Quaternion:
    """Incremental rotation covering ``dt`` seconds of body rate ``omega``.

    The rotation axis is the instantaneous direction of ``omega`` and the
    angle is ``|omega| * dt``. Rates below 1e-12 rad/s return the identity
    so that rest states never divide by a vanishing norm.
    """
    rate = omega.norm()
    if rate < OMEGA_EPSILON:
        return IDENTITY
    return from_axis_angle(omega.scale(1.0 / rate), rate * dt)


def rotate_vector(q: Quaternion, v: Vec3) -> Vec3:
    """Rotate ``v`` by the unit quaternion ``q`` (body->world for orientations).

    Raises
    ------
    ValueError
        If ``q`` is not unit length within 1e-9.
    """
    if abs(quat_norm(q) - 1.0) > UNIT_TOLERANCE:
        raise ValueError(f"rotation quaternion must be unit length, got |q|={quat_norm(q)!r}")
    # v' = v + 2*q0*(u x v) + 2*(u x (u x v)), u = vector part; expanded form
    # avoids building two full quaternion products.
    ux, uy, uz = q.q1, q.q2, q.q3
    tx = 2.0 * (uy * v.z - uz * v.y)
    ty = 2.0 * (uz * v.x - ux * v.z)
    tz = 2.0 * (ux * v.y - uy * v.x)
    return Vec3(
        v.x + q.q0 * tx + (uy * tz - uz * ty),
        v.y + q.q0 * ty + (uz * tx - ux * tz),
        v.z + q.q0 * tz + (ux * ty - uy * tx),
    )


def rotate_vector_inverse(q: Quaternion, v: Vec3) -> Vec3:
    """Rotate ``v`` by the inverse of ``q`` (world->body for orientations)."""
    return rotate_vector(quat_conjugate(q), v)


def from_euler(roll: float, pitch: float, yaw: float) -> Quaternion:
    """Quaternion for intrinsic Z-Y-X angles (yaw about D, then pitch, then roll)."""
    cr, sr = math.cos(0.5 * roll), math.sin(0.5 * roll)
    cp, sp = math.cos(0.5 * pitch), math.sin(0.5 * pitch)
    cy, sy = math.cos(0.5 * yaw), math.sin(0.5 * yaw)
    return Quaternion(
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    )


def to_euler(q: Quaternion) -> EulerAngles:
    """Decompose a unit quaternion into Z-Y-X angles.

    At gimbal lock (|pitch| within 1e-6 of pi/2) roll and yaw are not
    separable; the result is flagged ``degenerate`` with roll fixed to 0
    and yaw carrying the whole observable rotation.
    """
    sinp = 2.0 * (q.q0 * q.q2 - q.q3 * q.q1)
    sinp = max(-1.0, min(1.0, sinp))
    pitch = math.asin(sinp)
    if abs(abs(pitch) - 0.5 * math.pi) < GIMBAL_LOCK_TOLERANCE:
        return EulerAngles(0.0, pitch, wrap_pi(2.0 * math.atan2(q.q3, q.q0)), degenerate=True)
    roll = math.atan2(2.0 * (q.q0 * q.q1 + q.q2 * q.q3), 1.0 - 2.0 * (q.q1 * q.q1 + q.q2 * q.q2))
    yaw = math.atan2(2.0 * (q.q0 * q.q3 + q.q1 * q.q2), 1.0 - 2.0 * (q.q2 * q.q2 + q.q3 * q.q3))
    return EulerAngles(roll, pitch, yaw)


def quat_yaw(q: Quaternion) -> float:
    """Heading (rotation about D) of a unit quaternion, radians in (-pi, pi]."""
    return math.atan2(2.0 * (q.q0 * q.q3 + q.q1 * q.q2), 1.0 - 2.0 * (q.q2 * q.q2 + q.q3 * q.q3))


def yaw_quaternion(yaw: float) -> Quaternion:
    """Pure-heading quaternion (level attitude)."""
    return Quaternion(math.cos(0.5 * yaw), 0.0, 0.0, math.sin(0.5 * yaw))
