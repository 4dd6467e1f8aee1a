"""
Adaptive extended Kalman filter for the pose, twist and mass parameters of a tumbling target.

The filter keeps nominal quaternions for the target attitude ``q`` and the principal-axes
rotation ``eta`` and estimates their small error vector parts together with the rates,
inertia ratios, relative orbit state and grapple-point offset. Errors are folded back into
the nominal quaternions right after every correction (``q = dq (x) q_bar``,
``eta = deta (.) eta_bar``) so between cycles the attitude errors are zero.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray
from scipy.stats import chi2

from .discretize import symmetrize, van_loan
from .dynamics import (
    DETA,
    DQ,
    MAX_SUBSTEP,
    OMEGA,
    P,
    R_O,
    RHO,
    STATE_DIM,
    V_O,
    InertiaRatios,
    NoiseIntensities,
    OrbitRate,
    TargetGeometry,
    continuous_error_model,
    integrate_motion,
)
from .quaternion import (
    ODOT,
    Quaternion,
    body_to_camera,
    conj,
    cross_matrix,
    from_vector_part,
    positive_scalar,
    quat_mul,
)

logger = logging.getLogger(__name__)

MEAS_DIM = 6

NOMINAL_SUBSTEP = "substep"
NOMINAL_HOLD = "hold"

DEFAULT_INITIAL_STD = {
    "dq": 0.3,
    "omega": 0.1,
    "p": 0.5,
    "r_o": 0.5,
    "v_o": 0.05,
    "rho_t": 0.2,
    "deta": 0.3,
}

_BLOCKS = {"dq": DQ, "omega": OMEGA, "p": P, "r_o": R_O, "v_o": V_O, "rho_t": RHO, "deta": DETA}


def initial_covariance(std: Optional[Mapping[str, float]] = None) -> NDArray[np.float64]:
    values = dict(DEFAULT_INITIAL_STD)
    values.update(std or {})
    P0 = np.zeros((STATE_DIM, STATE_DIM))
    for name, block in _BLOCKS.items():
        P0[block, block] = values[name] ** 2 * np.eye(3)
    return P0


@dataclass(frozen=True)
class MeasurementNoise:
    sigma_r: float
    sigma_qo: float

    def __post_init__(self):
        if self.sigma_r <= 0.0 or self.sigma_qo <= 0.0:
            raise ValueError("measurement noise levels must be positive")

    def covariance(self) -> NDArray[np.float64]:
        return np.diag([self.sigma_r**2] * 3 + [self.sigma_qo**2] * 3)


@dataclass(frozen=True)
class PoseMeasurement:
    t: float
    r_c: NDArray[np.float64]
    mu: Quaternion
    valid: bool = True


@dataclass(frozen=True)
class FilterConfig:
    joseph_form: bool = True
    gate_enabled: bool = True
    gate_probability: float = 0.999
    gate_max_rejections: int = 0
    walk_p: float = 0.0
    walk_rho: float = 0.0
    walk_eta: float = 0.0
    nominal_attitude: str = NOMINAL_SUBSTEP
    max_substep: float = MAX_SUBSTEP
    clamp_norm: float = 0.99
    pose_step: float = 0.1

    def walk(self) -> Optional[NDArray[np.float64]]:
        if not (self.walk_p or self.walk_rho or self.walk_eta):
            return None
        w = np.zeros(STATE_DIM)
        w[P] = self.walk_p
        w[RHO] = self.walk_rho
        w[DETA] = self.walk_eta
        return w

    @property
    def gate_threshold(self) -> float:
        return float(chi2.ppf(self.gate_probability, MEAS_DIM))


@dataclass
class FilterState:
    q: Quaternion
    eta: Quaternion
    omega: NDArray[np.float64]
    p: NDArray[np.float64]
    r_o: NDArray[np.float64]
    v_o: NDArray[np.float64]
    rho_t: NDArray[np.float64]
    P: NDArray[np.float64]
    t: float = 0.0
    fault: bool = False

    def copy(self, **changes) -> "FilterState":
        arrays = {
            f.name: np.array(getattr(self, f.name))
            for f in dataclasses.fields(self)
            if isinstance(getattr(self, f.name), np.ndarray)
        }
        arrays.update(changes)
        return dataclasses.replace(self, **arrays)

    def motion(self) -> NDArray[np.float64]:
        return np.concatenate([self.omega, self.r_o, self.v_o])

    def pose(self):
        """Grapple-frame position and orientation in the camera frame."""
        return TargetGeometry(rho_t=self.rho_t, eta=self.eta).pose(self.q, self.r_o)

    def std(self) -> NDArray[np.float64]:
        return np.sqrt(np.clip(np.diag(self.P), 0.0, None))

    def is_finite(self) -> bool:
        return all(
            np.all(np.isfinite(a))
            for a in (self.q, self.eta, self.omega, self.p, self.r_o, self.v_o, self.rho_t, self.P)
        )


@dataclass(frozen=True)
class UpdateOutcome:
    state: FilterState
    nis: float = math.nan
    accepted: bool = False
    gated: bool = False
    clamped: bool = False


def predict(
    s: FilterState,
    T: float,
    orbit: OrbitRate,
    intensities: NoiseIntensities,
    config: FilterConfig = FilterConfig(),
) -> FilterState:
    if T <= 0.0:
        raise ValueError(f"prediction interval must be positive, got {T}")
    if s.fault:
        return s.copy(t=s.t + T)

    ratios = InertiaRatios.from_ratios(s.p)
    A, B = continuous_error_model(s.omega, ratios, orbit)
    try:
        model = van_loan(A, B, intensities.covariance(), T, config.walk())
    except ValueError as exc:
        logger.warning("prediction fault at t=%.3f: %s", s.t, exc)
        return s.copy(t=s.t + T, fault=True)

    q, y = integrate_motion(
        s.q,
        s.motion(),
        ratios,
        orbit,
        T,
        max_substep=config.max_substep,
        hold_attitude_rate=config.nominal_attitude == NOMINAL_HOLD,
    )
    out = s.copy(
        q=q,
        omega=y[0:3],
        r_o=y[3:6],
        v_o=y[6:9],
        P=symmetrize(model.phi @ s.P @ model.phi.T + model.Q),
        t=s.t + T,
    )
    if not out.is_finite():
        logger.warning("non-finite state after prediction at t=%.3f, freezing filter", out.t)
        return s.copy(t=s.t + T, fault=True)
    return out


def measurement_model(s: FilterState, dchi: ArrayLike) -> NDArray[np.float64]:
    """
    Pose seen by the camera when the error state is ``dchi`` about ``s``:
    the grapple position and the vector part of ``eta_bar* (x) mu (x) q_bar*``.
    """
    dchi = np.asarray(dchi, dtype=float)
    q = quat_mul(from_vector_part(dchi[DQ]), s.q)
    eta = quat_mul(from_vector_part(dchi[DETA]), s.eta, ODOT)
    r_c, mu = TargetGeometry(rho_t=s.rho_t + dchi[RHO], eta=eta).pose(q, s.r_o + dchi[R_O])
    z2 = positive_scalar(quat_mul(quat_mul(conj(s.eta), mu), conj(s.q)))
    return np.concatenate([r_c, z2[:3]])


def orientation_sensitivity(dq_v: ArrayLike, deta_v: ArrayLike):
    """Partials of ``(deta (x) dq)_v`` with respect to ``dq_v`` and ``deta_v``."""
    dq_v = np.asarray(dq_v, dtype=float)
    deta_v = np.asarray(deta_v, dtype=float)
    dq_o = from_vector_part(dq_v)[3]
    deta_o = from_vector_part(deta_v)[3]
    d_dq = deta_o * np.eye(3) - cross_matrix(deta_v) - np.outer(deta_v, dq_v) / dq_o
    d_deta = dq_o * np.eye(3) + cross_matrix(dq_v) - np.outer(dq_v, deta_v) / deta_o
    return d_dq, d_deta


def sensitivity_matrix(
    s: FilterState,
    dq_v: Optional[ArrayLike] = None,
    deta_v: Optional[ArrayLike] = None,
) -> NDArray[np.float64]:
    C = body_to_camera(s.q)
    H = np.zeros((MEAS_DIM, STATE_DIM))
    H[0:3, DQ] = -2.0 * C @ cross_matrix(s.rho_t)
    H[0:3, R_O] = np.eye(3)
    H[0:3, RHO] = C
    if dq_v is None and deta_v is None:
        H[3:6, DQ] = np.eye(3)
        H[3:6, DETA] = np.eye(3)
    else:
        d_dq, d_deta = orientation_sensitivity(
            np.zeros(3) if dq_v is None else dq_v,
            np.zeros(3) if deta_v is None else deta_v,
        )
        H[3:6, DQ] = d_dq
        H[3:6, DETA] = d_deta
    return H


def innovation(
    s: FilterState,
    m: PoseMeasurement,
    noise: MeasurementNoise,
    dq_v: Optional[ArrayLike] = None,
    deta_v: Optional[ArrayLike] = None,
    sensitivity=sensitivity_matrix,
):
    """Innovation ``e``, sensitivity ``H`` and innovation covariance ``S`` for one pose."""
    if not m.valid:
        raise ValueError(f"measurement at t={m.t} is flagged invalid")
    z2 = positive_scalar(quat_mul(quat_mul(conj(s.eta), m.mu), conj(s.q)))[:3]
    if dq_v is None and deta_v is None:
        r_c_hat, _ = s.pose()
        e = np.concatenate([m.r_c - r_c_hat, z2])
    else:
        dchi = np.zeros(STATE_DIM)
        if dq_v is not None:
            dchi[DQ] = dq_v
        if deta_v is not None:
            dchi[DETA] = deta_v
        e = np.concatenate([m.r_c, z2]) - measurement_model(s, dchi)
    H = sensitivity(s, dq_v, deta_v)
    S = symmetrize(H @ s.P @ H.T + noise.covariance())
    return e, H, S


def kalman_gain(P: NDArray, H: NDArray, R: NDArray) -> NDArray[np.float64]:
    S = symmetrize(H @ P @ H.T + R)
    return scipy.linalg.cho_solve(scipy.linalg.cho_factor(S), H @ P).T


def _clamp(dv: NDArray, limit: float):
    norm = float(np.linalg.norm(dv))
    if norm >= 1.0:
        return dv * (limit / norm), True
    return dv, False


def apply_update(
    s: FilterState,
    m: PoseMeasurement,
    noise: MeasurementNoise,
    config: FilterConfig = FilterConfig(),
) -> UpdateOutcome:
    if not m.valid or s.fault:
        return UpdateOutcome(state=s)

    e, H, S = innovation(s, m, noise)
    try:
        nis = float(e @ scipy.linalg.cho_solve(scipy.linalg.cho_factor(S), e))
        K = kalman_gain(s.P, H, noise.covariance())
    except (np.linalg.LinAlgError, ValueError) as exc:
        logger.warning("singular innovation covariance at t=%.3f: %s", s.t, exc)
        return UpdateOutcome(state=s.copy(fault=True))

    if config.gate_enabled and nis > config.gate_threshold:
        logger.warning("measurement at t=%.3f gated (NIS %.1f)", m.t, nis)
        return UpdateOutcome(state=s, nis=nis, gated=True)

    dx = K @ e
    dq_v, clamped_q = _clamp(dx[DQ], config.clamp_norm)
    deta_v, clamped_eta = _clamp(dx[DETA], config.clamp_norm)
    if clamped_q or clamped_eta:
        logger.warning("attitude correction clamped at t=%.3f, filter may be diverging", m.t)

    I_KH = np.eye(STATE_DIM) - K @ H
    if config.joseph_form:
        P_new = I_KH @ s.P @ I_KH.T + K @ noise.covariance() @ K.T
    else:
        P_new = I_KH @ s.P

    out = s.copy(
        q=quat_mul(from_vector_part(dq_v), s.q),
        eta=quat_mul(from_vector_part(deta_v), s.eta, ODOT),
        omega=s.omega + dx[OMEGA],
        p=s.p + dx[P],
        r_o=s.r_o + dx[R_O],
        v_o=s.v_o + dx[V_O],
        rho_t=s.rho_t + dx[RHO],
        P=symmetrize(P_new),
    )
    if not out.is_finite():
        logger.warning("non-finite state after update at t=%.3f, freezing filter", m.t)
        return UpdateOutcome(state=s.copy(fault=True), nis=nis)
    return UpdateOutcome(state=out, nis=nis, accepted=True, clamped=clamped_q or clamped_eta)


def update(
    s: FilterState,
    m: PoseMeasurement,
    noise: MeasurementNoise,
    config: FilterConfig = FilterConfig(),
) -> FilterState:
    return apply_update(s, m, noise, config).state


def predict_ahead(
    s: FilterState,
    dt: float,
    orbit: OrbitRate,
    intensities: NoiseIntensities,
    config: FilterConfig = FilterConfig(),
) -> FilterState:
    """Open-loop prediction of a copy of ``s``, in steps no longer than ``config.pose_step``."""
    out = s.copy()
    if dt <= 0.0:
        return out
    steps = max(1, math.ceil(dt / config.pose_step - 1e-9))
    for _ in range(steps):
        out = predict(out, dt / steps, orbit, intensities, config)
    return out


def predict_pose(
    s: FilterState,
    dt: float,
    orbit: OrbitRate,
    intensities: NoiseIntensities,
    config: FilterConfig = FilterConfig(),
):
    return predict_ahead(s, dt, orbit, intensities, config).pose()


@dataclass
class RelativePoseFilter:
    """One target track: the live state plus the bookkeeping a run reports."""

    state: FilterState
    orbit: OrbitRate
    intensities: NoiseIntensities
    noise: MeasurementNoise
    config: FilterConfig = FilterConfig()
    updates: int = 0
    gated: int = 0
    clamped: int = 0
    nis: list = field(default_factory=list)
    rejected_run: int = 0

    @property
    def fault(self) -> bool:
        return self.state.fault

    def propagate_to(self, t: float) -> FilterState:
        if t > self.state.t:
            self.state = predict(self.state, t - self.state.t, self.orbit, self.intensities, self.config)
            self.state.t = t
        return self.state

    def process(self, m: PoseMeasurement) -> UpdateOutcome:
        """
        Predict to ``m.t`` and correct. After ``gate_max_rejections`` gated samples in a row
        the next one is taken ungated so a filter that has drifted can re-acquire.
        """
        self.propagate_to(m.t)
        config = self.config
        limit = config.gate_max_rejections
        if config.gate_enabled and limit and self.rejected_run >= limit:
            logger.warning("%d samples gated in a row, taking t=%.3f ungated", self.rejected_run, m.t)
            config = dataclasses.replace(config, gate_enabled=False)
        outcome = apply_update(self.state, m, self.noise, config)
        if outcome.gated:
            self.rejected_run += 1
        elif outcome.accepted:
            self.rejected_run = 0
        self.state = outcome.state
        if outcome.accepted:
            self.updates += 1
            self.nis.append((m.t, outcome.nis))
        self.gated += int(outcome.gated)
        self.clamped += int(outcome.clamped)
        return outcome

    def predict_pose(self, dt: float):
        return predict_pose(self.state, dt, self.orbit, self.intensities, self.config)
