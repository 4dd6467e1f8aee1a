"""
Quaternion algebra shared by the estimator and the simulator.

Quaternions are float arrays laid out vector part first, ``(v1, v2, v3, s)``.
Products use

    [a (x)] = [[-[a_v x] + a_o I3, a_v], [-a_v^T, a_o]]      a (x) b = [a (x)] b
    [a (.)] = [[ [a_v x] + a_o I3, a_v], [-a_v^T, a_o]]      a (.) b = [a (.)] b

so ``a (x) b == b (.) a`` and ``to_rotation(a (x) b) == to_rotation(a) @ to_rotation(b)``.
Error quaternions always carry a non-negative scalar part.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.typing import ArrayLike, NDArray

Quaternion = NDArray[np.float64]

OTIMES = "otimes"
ODOT = "odot"

RENORM_TOL = 1e-12
SMALL_ROTATION = 1e-10


def identity() -> Quaternion:
    return np.array([0.0, 0.0, 0.0, 1.0])


def quat(v: ArrayLike, s: float) -> Quaternion:
    out = np.empty(4)
    out[:3] = v
    out[3] = s
    return out


def conj(q: Quaternion) -> Quaternion:
    return np.array([-q[0], -q[1], -q[2], q[3]])


def normalize(q: Quaternion) -> Quaternion:
    """Rescale to unit norm when the drift exceeds ``RENORM_TOL``."""
    norm = math.sqrt(float(q @ q))
    if abs(norm - 1.0) > RENORM_TOL:
        return q / norm
    return q


def positive_scalar(q: Quaternion) -> Quaternion:
    return -q if q[3] < 0.0 else q


def from_vector_part(qv: ArrayLike) -> Quaternion:
    """Small rotation from its vector part, scalar recovered as sqrt(1 - |qv|^2)."""
    qv = np.asarray(qv, dtype=float)
    sq = float(qv @ qv)
    if sq > 1.0:
        raise ValueError(f"vector part norm {math.sqrt(sq):.6g} exceeds 1")
    return quat(qv, math.sqrt(1.0 - sq))


def from_axis_angle(axis: ArrayLike, angle: float) -> Quaternion:
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if norm == 0.0:
        return identity()
    return quat(math.sin(0.5 * angle) * axis / norm, math.cos(0.5 * angle))


def cross_matrix(v: ArrayLike) -> NDArray[np.float64]:
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def otimes_matrix(a: Quaternion) -> NDArray[np.float64]:
    m = np.empty((4, 4))
    m[:3, :3] = a[3] * np.eye(3) - cross_matrix(a[:3])
    m[:3, 3] = a[:3]
    m[3, :3] = -a[:3]
    m[3, 3] = a[3]
    return m


def odot_matrix(a: Quaternion) -> NDArray[np.float64]:
    m = otimes_matrix(a)
    m[:3, :3] = a[3] * np.eye(3) + cross_matrix(a[:3])
    return m


def quat_mul(a: Quaternion, b: Quaternion, op: str = OTIMES) -> Quaternion:
    if op == ODOT:
        a, b = b, a
    elif op != OTIMES:
        raise ValueError(f"unknown quaternion product {op!r}")
    av, bv = a[:3], b[:3]
    out = np.empty(4)
    out[:3] = a[3] * bv + b[3] * av - np.cross(av, bv)
    out[3] = a[3] * b[3] - av @ bv
    return normalize(out)


def to_rotation(q: Quaternion) -> NDArray[np.float64]:
    v, s = q[:3], q[3]
    return (s * s - v @ v) * np.eye(3) + 2.0 * np.outer(v, v) - 2.0 * s * cross_matrix(v)


def body_to_camera(q: Quaternion) -> NDArray[np.float64]:
    """Matrix taking target-body vectors into the camera frame, ``to_rotation(q).T``."""
    return to_rotation(q).T


def propagate_const_rate(q: Quaternion, omega: ArrayLike, T: float) -> Quaternion:
    """Exact solution of ``q_dot = 1/2 omega~ (x) q`` for a rate held over ``T``."""
    omega = np.asarray(omega, dtype=float)
    rate = math.sqrt(float(omega @ omega))
    if rate * T < SMALL_ROTATION:
        out = q + 0.5 * T * (otimes_matrix(quat(omega, 0.0)) @ q)
    else:
        half = 0.5 * rate * T
        axis = otimes_matrix(quat(omega / rate, 0.0))
        out = math.cos(half) * q + math.sin(half) * (axis @ q)
    return normalize(out)


def error_quat(q: Quaternion, q_nom: Quaternion) -> Quaternion:
    """``dq = q (x) q_nom*`` with the scalar part made non-negative."""
    return positive_scalar(quat_mul(q, conj(q_nom)))


def angle_between(q: Quaternion, q_est: Quaternion) -> float:
    """Rotation angle (rad, in [0, pi]) separating two attitudes."""
    dqv = error_quat(q, q_est)[:3]
    return 2.0 * math.asin(min(1.0, float(np.linalg.norm(dqv))))
