"""
Self-validation oracles run by ``manage.py validate``.

Every check returns the largest error it saw and the tolerance it was held to. The
sensitivity-matrix builder is looked up at call time so a test can substitute a broken one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
from scipy.integrate import solve_ivp

from apps.tracking import ekf
from apps.tracking.discretize import van_loan
from apps.tracking.dynamics import (
    DETA,
    DQ,
    STATE_DIM,
    InertiaRatios,
    NoiseIntensities,
    OrbitRate,
    TruthState,
    continuous_error_model,
    error_drift,
    integrate_motion,
    propagate_truth,
)
from apps.tracking.quaternion import from_axis_angle, otimes_matrix, propagate_const_rate, quat, to_rotation

logger = logging.getLogger(__name__)

INERTIA = np.array([4.0, 8.0, 5.0])
OMEGA0 = np.array([0.10, 0.20, 0.15])
ORBIT = OrbitRate(1.13e-3)
FD_STEP = 1e-6


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error)) and self.max_error <= self.tolerance


def _sample_state() -> ekf.FilterState:
    rng = np.random.default_rng(7)
    return ekf.FilterState(
        q=from_axis_angle(rng.standard_normal(3), 0.7),
        eta=from_axis_angle(rng.standard_normal(3), 0.2),
        omega=OMEGA0.copy(),
        p=InertiaRatios.from_inertia(INERTIA).p,
        r_o=np.array([1.5, -0.2, 0.3]),
        v_o=np.array([0.01, 0.0, -0.02]),
        rho_t=np.array([-0.15, 0.02, 0.01]),
        P=np.eye(STATE_DIM),
    )


def _jacobian(f: Callable, x0: np.ndarray, rows: int) -> np.ndarray:
    J = np.zeros((rows, x0.size))
    for j in range(x0.size):
        dx = np.zeros(x0.size)
        dx[j] = FD_STEP
        J[:, j] = (f(x0 + dx) - f(x0 - dx)) / (2.0 * FD_STEP)
    return J


def check_sensitivity(sensitivity: Optional[Callable] = None) -> CheckResult:
    """Measurement sensitivity against central differences, at the reset point and away from it."""
    sensitivity = sensitivity or ekf.sensitivity_matrix
    s = _sample_state()
    zero = np.zeros(STATE_DIM)
    fd = _jacobian(lambda x: ekf.measurement_model(s, x), zero, ekf.MEAS_DIM)
    err = float(np.max(np.abs(sensitivity(s) - fd)))

    dchi = np.zeros(STATE_DIM)
    dchi[DQ] = [0.05, -0.03, 0.02]
    dchi[DETA] = [-0.02, 0.04, 0.01]
    fd = _jacobian(lambda x: ekf.measurement_model(s, x), dchi, ekf.MEAS_DIM)
    H = sensitivity(s, dchi[DQ], dchi[DETA])
    err = max(err, float(np.max(np.abs(H[3:6] - fd[3:6]))))
    return CheckResult("sensitivity_fd", err, 1e-6)


def check_error_model() -> CheckResult:
    s = _sample_state()
    ratios = InertiaRatios.from_ratios(s.p)
    A, _ = continuous_error_model(s.omega, ratios, ORBIT)
    fd = _jacobian(lambda x: error_drift(x, s.omega, s.p, s.r_o, s.v_o, ORBIT), np.zeros(STATE_DIM), STATE_DIM)
    return CheckResult("error_model_fd", float(np.max(np.abs(A - fd))), 1e-7)


def check_van_loan() -> CheckResult:
    """Transition and process noise against the matrix differential equations."""
    s = _sample_state()
    ratios = InertiaRatios.from_ratios(s.p)
    A, B = continuous_error_model(s.omega, ratios, ORBIT)
    W = NoiseIntensities(1e-2, 1e-2).covariance()
    T = 0.5
    model = van_loan(A, B, W, T)
    n = STATE_DIM
    BWB = B @ W @ B.T

    def rhs(_, y):
        phi = y[: n * n].reshape(n, n)
        Q = y[n * n:].reshape(n, n)
        return np.concatenate([(A @ phi).ravel(), (A @ Q + Q @ A.T + BWB).ravel()])

    y0 = np.concatenate([np.eye(n).ravel(), np.zeros(n * n)])
    sol = solve_ivp(rhs, (0.0, T), y0, method="DOP853", rtol=1e-12, atol=1e-14)
    phi = sol.y[: n * n, -1].reshape(n, n)
    Q = sol.y[n * n:, -1].reshape(n, n)
    err = max(
        float(np.max(np.abs(model.phi - phi))),
        float(np.max(np.abs(model.Q - Q)) / max(float(np.max(np.abs(Q))), 1e-300)),
    )
    return CheckResult("van_loan_ode", err, 1e-8)


def check_double_integrator() -> CheckResult:
    T, q = 0.7, 2.5
    model = van_loan(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]]), np.array([[q]]), T)
    phi = np.array([[1.0, T], [0.0, 1.0]])
    Q = q * np.array([[T**3 / 3.0, T**2 / 2.0], [T**2 / 2.0, T]])
    err = max(float(np.max(np.abs(model.phi - phi))), float(np.max(np.abs(model.Q - Q))))
    return CheckResult("double_integrator", err, 1e-12)


def check_conservation(duration: float = 120.0) -> List[CheckResult]:
    """Torque-free rotation keeps its energy and its angular momentum, in size and in space."""
    ratios = InertiaRatios.from_inertia(INERTIA)
    I = np.diag(INERTIA)
    s = TruthState(q=from_axis_angle([1.0, 2.0, 3.0], 0.4), omega=OMEGA0.copy(), r_o=np.zeros(3), v_o=np.zeros(3))

    def energy(x):
        return 0.5 * x.omega @ I @ x.omega

    def momentum(x):
        return to_rotation(x.q).T @ (I @ x.omega)

    end = propagate_truth(s, ratios, OrbitRate(0.0), duration)
    h0, h1 = momentum(s), momentum(end)
    return [
        CheckResult("energy", abs(energy(end) - energy(s)) / energy(s), 1e-9),
        CheckResult("momentum_norm", abs(np.linalg.norm(h1) - np.linalg.norm(h0)) / np.linalg.norm(h0), 1e-9),
        CheckResult("momentum_inertial", float(np.linalg.norm(h1 - h0) / np.linalg.norm(h0)), 1e-5),
        CheckResult("quaternion_norm", abs(float(np.linalg.norm(end.q)) - 1.0), 1e-12),
    ]


def cw_closed_form(r0, n: float, t: float) -> np.ndarray:
    """Relative position after ``t`` for a start at rest."""
    x0, y0, z0 = r0
    nt = n * t
    return np.array([(4.0 - 3.0 * math.cos(nt)) * x0, y0 + 6.0 * (math.sin(nt) - nt) * x0, z0 * math.cos(nt)])


def check_cw(duration: Optional[float] = None) -> CheckResult:
    """Closed-form Clohessy-Wiltshire motion, by default over one orbit."""
    duration = ORBIT.period if duration is None else duration
    r0 = np.array([1.5, -0.4, 0.8])
    motion = np.concatenate([np.zeros(3), r0, np.zeros(3)])
    _, y = integrate_motion(quat(np.zeros(3), 1.0), motion, InertiaRatios(p=np.zeros(3)), ORBIT, duration, max_substep=0.5)
    return CheckResult("cw_closed_form", float(np.max(np.abs(y[3:6] - cw_closed_form(r0, ORBIT.n_z, duration)))), 1e-6)


def check_const_rate(T: float = 2.0) -> CheckResult:
    q0 = from_axis_angle([0.3, -1.0, 0.5], 1.1)
    omega = np.array([0.4, -0.25, 0.3])
    Om = 0.5 * otimes_matrix(quat(omega, 0.0))
    sol = solve_ivp(lambda _, y: Om @ y, (0.0, T), q0, method="DOP853", rtol=1e-12, atol=1e-14)
    err = float(np.max(np.abs(propagate_const_rate(q0, omega, T) - sol.y[:, -1])))
    return CheckResult("const_rate_step", err, 1e-9)


def run_checks() -> List[CheckResult]:
    results = [
        check_sensitivity(),
        check_error_model(),
        check_van_loan(),
        check_double_integrator(),
        *check_conservation(),
        check_cw(),
        check_const_rate(),
    ]
    for r in results:
        logger.debug("%s: max error %.3e (tolerance %.1e)", r.name, r.max_error, r.tolerance)
    return results
