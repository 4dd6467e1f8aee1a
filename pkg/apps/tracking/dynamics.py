"""
Target and relative-orbit dynamics.

Rotation follows Euler's torque-free equation written with inertia ratios, translation
follows the linearized Clohessy-Wiltshire (Euler-Hill) model of a circular chaser orbit.
The 21-component error state is laid out as

    [dq_v | omega | p | r_o | v_o | rho_t | deta_v]

and every Jacobian, transition and covariance matrix in the package uses that order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .quaternion import (
    Quaternion,
    body_to_camera,
    cross_matrix,
    from_vector_part,
    otimes_matrix,
    propagate_const_rate,
    quat,
    quat_mul,
)

STATE_DIM = 21
NOISE_DIM = 6

DQ = slice(0, 3)
OMEGA = slice(3, 6)
P = slice(6, 9)
R_O = slice(9, 12)
V_O = slice(12, 15)
RHO = slice(15, 18)
DETA = slice(18, 21)

STATE_LABELS = (
    "dq_x", "dq_y", "dq_z",
    "omega_x", "omega_y", "omega_z",
    "p_x", "p_y", "p_z",
    "r_o_x", "r_o_y", "r_o_z",
    "v_o_x", "v_o_y", "v_o_z",
    "rho_t_x", "rho_t_y", "rho_t_z",
    "deta_x", "deta_y", "deta_z",
)

MAX_SUBSTEP = 1e-3


@dataclass(frozen=True)
class InertiaRatios:
    p: NDArray[np.float64]
    J: NDArray[np.float64] = field(default_factory=lambda: np.eye(3))

    @classmethod
    def from_inertia(cls, inertia: ArrayLike) -> "InertiaRatios":
        ixx, iyy, izz = np.asarray(inertia, dtype=float)
        if min(ixx, iyy, izz) <= 0.0:
            raise ValueError("principal inertias must be positive")
        p = np.array([(iyy - izz) / ixx, (izz - ixx) / iyy, (ixx - iyy) / izz])
        return cls(p=p, J=np.diag([1.0, ixx / iyy, ixx / izz]))

    @classmethod
    def from_ratios(cls, p: ArrayLike) -> "InertiaRatios":
        """
        Rebuild ``J`` from the ratios alone: with I_xx = 1,
        I_yy = (1 + p_x) / (1 - p_y) and I_zz = 1 + I_yy p_y.
        Ratios that do not describe a physical body fall back to ``J = I``.
        """
        p = np.array(p, dtype=float)
        denom = 1.0 - p[1]
        if abs(denom) > 1e-9:
            iyy = (1.0 + p[0]) / denom
            izz = 1.0 + iyy * p[1]
            if iyy > 0.0 and izz > 0.0:
                return cls(p=p, J=np.diag([1.0, 1.0 / iyy, 1.0 / izz]))
        return cls(p=p, J=np.eye(3))


@dataclass(frozen=True)
class OrbitRate:
    n_z: float = 0.0

    def __post_init__(self):
        if self.n_z < 0.0:
            raise ValueError("orbit rate must be non-negative")

    @property
    def vector(self) -> NDArray[np.float64]:
        return np.array([0.0, 0.0, self.n_z])

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.n_z if self.n_z > 0.0 else math.inf


@dataclass(frozen=True)
class TruthState:
    q: Quaternion
    omega: NDArray[np.float64]
    r_o: NDArray[np.float64]
    v_o: NDArray[np.float64]
    t: float = 0.0

    def motion(self) -> NDArray[np.float64]:
        return np.concatenate([self.omega, self.r_o, self.v_o])


@dataclass(frozen=True)
class TargetGeometry:
    """Grapple-frame offset ``rho_t`` (body frame) and principal-axes rotation ``eta``."""

    rho_t: NDArray[np.float64]
    eta: Quaternion

    def pose(self, q: Quaternion, r_o: NDArray[np.float64]):
        """Grapple position and orientation seen by the camera for body attitude ``q``."""
        return r_o + body_to_camera(q) @ self.rho_t, quat_mul(self.eta, q)


@dataclass(frozen=True)
class NoiseIntensities:
    sigma_tau: float = 0.0
    sigma_f: float = 0.0

    def __post_init__(self):
        if self.sigma_tau < 0.0 or self.sigma_f < 0.0:
            raise ValueError("noise intensities must be non-negative")

    def covariance(self) -> NDArray[np.float64]:
        return np.diag([self.sigma_tau**2] * 3 + [self.sigma_f**2] * 3)


def euler_accel(omega: ArrayLike, ratios: InertiaRatios) -> NDArray[np.float64]:
    wx, wy, wz = omega
    px, py, pz = ratios.p
    return np.array([px * wy * wz, py * wx * wz, pz * wx * wy])


def rot_jacobians(omega: ArrayLike, ratios: InertiaRatios):
    wx, wy, wz = omega
    px, py, pz = ratios.p
    A = np.array([
        [0.0, px * wz, px * wy],
        [py * wz, 0.0, py * wx],
        [pz * wy, pz * wx, 0.0],
    ])
    B = np.diag([wy * wz, wx * wz, wx * wy])
    return A, B


def cw_accel(r_o: ArrayLike, v_o: ArrayLike, orbit: OrbitRate) -> NDArray[np.float64]:
    n = orbit.n_z
    r_o = np.asarray(r_o, dtype=float)
    v_o = np.asarray(v_o, dtype=float)
    gravity = np.array([3.0 * n * n * r_o[0], 0.0, -n * n * r_o[2]])
    return -2.0 * np.cross(orbit.vector, v_o) + gravity


def continuous_error_model(omega_bar: ArrayLike, ratios: InertiaRatios, orbit: OrbitRate):
    """Continuous error dynamics ``(A, B)`` about the nominal rate and ratios."""
    omega_bar = np.asarray(omega_bar, dtype=float)
    A_rot, B_rot = rot_jacobians(omega_bar, ratios)
    n = orbit.n_z

    A = np.zeros((STATE_DIM, STATE_DIM))
    A[DQ, DQ] = -cross_matrix(omega_bar)
    A[DQ, OMEGA] = 0.5 * np.eye(3)
    A[OMEGA, OMEGA] = A_rot
    A[OMEGA, P] = B_rot
    A[R_O, V_O] = np.eye(3)
    A[V_O, R_O] = np.diag([3.0 * n * n, 0.0, -n * n])
    A[V_O, V_O] = -2.0 * cross_matrix(orbit.vector)

    B = np.zeros((STATE_DIM, NOISE_DIM))
    B[OMEGA, 0:3] = ratios.J
    B[V_O, 3:6] = np.eye(3)
    return A, B


def error_drift(
    dchi: ArrayLike,
    omega_bar: ArrayLike,
    p_bar: ArrayLike,
    r_bar: ArrayLike,
    v_bar: ArrayLike,
    orbit: OrbitRate,
) -> NDArray[np.float64]:
    """
    Nonlinear drift of the error state about a nominal trajectory.

    The nominal attitude turns at ``omega_bar`` while the true one turns at
    ``omega_bar + domega``; its Jacobian at ``dchi = 0`` is ``continuous_error_model``.
    """
    dchi = np.asarray(dchi, dtype=float)
    omega_bar = np.asarray(omega_bar, dtype=float)
    p_bar = np.asarray(p_bar, dtype=float)
    dq = from_vector_part(dchi[DQ])
    omega = omega_bar + dchi[OMEGA]
    p = p_bar + dchi[P]

    dq_dot = 0.5 * (otimes_matrix(quat(omega, 0.0)) @ dq - otimes_matrix(dq) @ quat(omega_bar, 0.0))

    out = np.zeros(STATE_DIM)
    out[DQ] = dq_dot[:3]
    out[OMEGA] = (
        euler_accel(omega, InertiaRatios(p=p))
        - euler_accel(omega_bar, InertiaRatios(p=p_bar))
    )
    out[R_O] = dchi[V_O]
    out[V_O] = (
        cw_accel(np.asarray(r_bar) + dchi[R_O], np.asarray(v_bar) + dchi[V_O], orbit)
        - cw_accel(r_bar, v_bar, orbit)
    )
    return out


def _motion_rate(y, ratios: InertiaRatios, orbit: OrbitRate, disturbance):
    out = np.empty(9)
    out[0:3] = euler_accel(y[0:3], ratios)
    out[3:6] = y[6:9]
    out[6:9] = cw_accel(y[3:6], y[6:9], orbit)
    if disturbance is not None:
        out[0:3] += ratios.J @ disturbance[0:3]
        out[6:9] += disturbance[3:6]
    return out


def integrate_motion(
    q: Quaternion,
    motion: NDArray[np.float64],
    ratios: InertiaRatios,
    orbit: OrbitRate,
    dt: float,
    disturbance: Optional[NDArray[np.float64]] = None,
    max_substep: float = MAX_SUBSTEP,
    hold_attitude_rate: bool = False,
):
    """
    Advance ``(q, [omega, r_o, v_o])`` over ``dt`` with fixed-step RK4.

    The quaternion follows each substep with the mean of the substep's end rates, or,
    with ``hold_attitude_rate``, in one closed-form step at the initial rate.
    """
    steps = max(1, math.ceil(dt / max_substep - 1e-9))
    h = dt / steps
    y = np.array(motion, dtype=float)
    omega_start = y[0:3].copy()
    for _ in range(steps):
        k1 = _motion_rate(y, ratios, orbit, disturbance)
        k2 = _motion_rate(y + 0.5 * h * k1, ratios, orbit, disturbance)
        k3 = _motion_rate(y + 0.5 * h * k2, ratios, orbit, disturbance)
        k4 = _motion_rate(y + h * k3, ratios, orbit, disturbance)
        y_next = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not hold_attitude_rate:
            q = propagate_const_rate(q, 0.5 * (y[0:3] + y_next[0:3]), h)
        y = y_next
    if hold_attitude_rate:
        q = propagate_const_rate(q, omega_start, dt)
    return q, y


def propagate_truth(
    s: TruthState,
    ratios: InertiaRatios,
    orbit: OrbitRate,
    dt: float,
    disturbance: Optional[ArrayLike] = None,
    max_substep: float = MAX_SUBSTEP,
) -> TruthState:
    if dt <= 0.0:
        raise ValueError(f"time step must be positive, got {dt}")
    if not (np.all(np.isfinite(s.q)) and np.all(np.isfinite(s.motion()))):
        raise ValueError(f"non-finite truth state at t={s.t}")
    if disturbance is not None:
        disturbance = np.asarray(disturbance, dtype=float)
    q, y = integrate_motion(s.q, s.motion(), ratios, orbit, dt, disturbance, max_substep)
    return TruthState(q=q, omega=y[0:3], r_o=y[3:6], v_o=y[6:9], t=s.t + dt)
