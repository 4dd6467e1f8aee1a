"""
Experiment engine: ground truth, synthetic camera poses and the filter run loop.

Random draws come from counter-based Philox generators keyed by ``(seed, stream)`` so the
truth disturbance, the measurement noise and the initial-estimate perturbation are
independent and reproducible.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from apps.tracking.dynamics import DETA, DQ, OMEGA, P, R_O, RHO, STATE_DIM, V_O, TruthState, propagate_truth
from apps.tracking.ekf import (
    FilterState,
    PoseMeasurement,
    RelativePoseFilter,
    initial_covariance,
    predict_ahead,
)
from apps.tracking.quaternion import (
    angle_between,
    error_quat,
    from_axis_angle,
    from_vector_part,
    identity,
    quat_mul,
)

from .scenario import (
    INIT_MEASUREMENT,
    INIT_TRUTH,
    INIT_TRUTH_PERTURBED,
    INIT_TRUTH_SAMPLED,
    TRUTH_MODES,
    Scenario,
)

logger = logging.getLogger(__name__)

STREAM_DISTURBANCE = 0
STREAM_MEASUREMENT = 1
STREAM_INIT = 2

DISTURBANCE_STEP = 0.05
MAX_NOISE_NORM = 0.999


def noise_generator(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


def truth_pose(s: TruthState, scenario: Scenario):
    return scenario.geometry.pose(s.q, s.r_o)


def simulate_truth(scenario: Scenario) -> List[TruthState]:
    grid = scenario.grid()
    if grid.size == 0:
        return []
    ratios, orbit = scenario.ratios, scenario.orbit
    rng = noise_generator(scenario.seed, STREAM_DISTURBANCE)
    scale = np.sqrt(np.diag(scenario.intensities.covariance()))

    state = scenario.initial_truth()
    series = [state]
    for k in range(1, grid.size):
        dt = grid[k] - grid[k - 1]
        if scenario.truth_disturbance:
            chunks = max(1, math.ceil(dt / DISTURBANCE_STEP - 1e-9))
            h = dt / chunks
            for _ in range(chunks):
                state = propagate_truth(state, ratios, orbit, h, rng.standard_normal(6) * scale / math.sqrt(h))
        else:
            state = propagate_truth(state, ratios, orbit, dt)
        state = replace(state, t=float(grid[k]))
        series.append(state)
    return series


def synthesize_measurements(truth: Sequence[TruthState], scenario: Scenario) -> List[PoseMeasurement]:
    rng = noise_generator(scenario.seed, STREAM_MEASUREMENT)
    out = []
    for s in truth:
        dr = rng.standard_normal(3) * scenario.sigma_r
        dv = rng.standard_normal(3) * scenario.sigma_qo
        norm = np.linalg.norm(dv)
        if norm >= MAX_NOISE_NORM:
            dv *= MAX_NOISE_NORM / norm
        r_c, mu = truth_pose(s, scenario)
        out.append(
            PoseMeasurement(
                t=s.t,
                r_c=r_c + dr,
                mu=quat_mul(from_vector_part(dv), mu),
                valid=not scenario.occluded(s.t),
            )
        )
    return out


def start_index(scenario: Scenario, measurements: Sequence[PoseMeasurement]) -> Optional[int]:
    """First valid sample at or after the filter start, else the first sample there at all."""
    candidates = [k for k, m in enumerate(measurements) if m.t >= scenario.filter_start - 1e-9]
    for k in candidates:
        if measurements[k].valid:
            return k
    return candidates[0] if candidates else None


def usable_pose(m: PoseMeasurement) -> bool:
    return bool(np.all(np.isfinite(m.r_c))) and abs(float(np.linalg.norm(m.mu)) - 1.0) < 1e-6


def initial_estimate(
    scenario: Scenario,
    measurements: Sequence[PoseMeasurement],
    k0: int,
    truth: Optional[Sequence[TruthState]] = None,
) -> FilterState:
    """
    First filter state at sample ``k0``.

    ``measurement`` seeds the pose from the camera alone (rates from the previous
    sample); the truth modes need the truth series. ``truth_perturbed`` offsets the
    attitude and rate by fixed amounts and starts the parameters from zero,
    ``truth_sampled`` draws every error from the initial covariance.
    """
    m = measurements[k0]
    P0 = initial_covariance(scenario.initial_std)
    zeros = np.zeros(3)

    if scenario.init_mode == INIT_MEASUREMENT:
        omega, v_o = zeros, zeros
        if not usable_pose(m):
            logger.warning("no usable pose at t=%.2f s, starting from the identity attitude", m.t)
            return FilterState(
                q=identity(), eta=identity(), omega=zeros, p=zeros, r_o=zeros, v_o=zeros, rho_t=zeros, P=P0, t=m.t,
            )
        if k0 > 0 and measurements[k0 - 1].valid and usable_pose(measurements[k0 - 1]):
            prev = measurements[k0 - 1]
            T = m.t - prev.t
            omega = 2.0 * error_quat(m.mu, prev.mu)[:3] / T
            v_o = (m.r_c - prev.r_c) / T
        return FilterState(
            q=np.array(m.mu), eta=identity(), omega=omega, p=zeros, r_o=np.array(m.r_c),
            v_o=v_o, rho_t=zeros, P=P0, t=m.t,
        )

    if truth is None:
        raise ValueError(f"initialization mode {scenario.init_mode!r} needs the truth series")
    s = truth[k0]
    if scenario.init_mode == INIT_TRUTH:
        return FilterState(
            q=np.array(s.q), eta=np.array(scenario.eta), omega=np.array(s.omega),
            p=np.array(scenario.ratios.p), r_o=np.array(s.r_o), v_o=np.array(s.v_o),
            rho_t=np.array(scenario.rho_t), P=P0, t=m.t,
        )
    rng = noise_generator(scenario.seed, STREAM_INIT)
    if scenario.init_mode == INIT_TRUTH_PERTURBED:
        axis = rng.standard_normal(3)
        direction = rng.standard_normal(3)
        return FilterState(
            q=quat_mul(from_axis_angle(axis, scenario.init_att_err), s.q),
            eta=identity(),
            omega=s.omega + scenario.init_rate_err * direction / np.linalg.norm(direction),
            p=zeros, r_o=np.array(s.r_o), v_o=np.array(s.v_o), rho_t=zeros, P=P0, t=m.t,
        )
    if scenario.init_mode == INIT_TRUTH_SAMPLED:
        # errors drawn from P0 itself, for consistency batches
        e = rng.standard_normal(STATE_DIM) * np.sqrt(np.diag(P0))
        return FilterState(
            q=quat_mul(from_vector_part(_bounded(e[DQ])), s.q),
            eta=quat_mul(scenario.eta, from_vector_part(_bounded(e[DETA]))),
            omega=s.omega + e[OMEGA],
            p=scenario.ratios.p + e[P],
            r_o=s.r_o + e[R_O],
            v_o=s.v_o + e[V_O],
            rho_t=scenario.rho_t + e[RHO],
            P=P0,
            t=m.t,
        )
    raise ValueError(f"unknown initialization mode {scenario.init_mode!r}")


def _bounded(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v * (MAX_NOISE_NORM / norm) if norm >= MAX_NOISE_NORM else v


@dataclass
class FilterRun:
    filt: Optional[RelativePoseFilter]
    estimates: List[Optional[FilterState]]


def drive_filter(
    scenario: Scenario,
    measurements: Sequence[PoseMeasurement],
    truth: Optional[Sequence[TruthState]] = None,
) -> FilterRun:
    """
    Predict to each sample time and correct on valid samples, from the start sample on.

    A filter seeded from the start sample does not correct on it again. Without a truth
    series the truth-based modes fall back to seeding from the measurements.
    """
    estimates: List[Optional[FilterState]] = [None] * len(measurements)
    k0 = start_index(scenario, measurements)
    if k0 is None:
        logger.warning("no valid measurement after t=%.1f s, filter never started", scenario.filter_start)
        return FilterRun(filt=None, estimates=estimates)

    if truth is None and scenario.init_mode in TRUTH_MODES:
        logger.warning("no truth series for %s initialization, seeding from the measurements", scenario.init_mode)
        scenario = replace(scenario, init_mode=INIT_MEASUREMENT)

    filt = RelativePoseFilter(
        state=initial_estimate(scenario, measurements, k0, truth),
        orbit=scenario.orbit,
        intensities=scenario.filter_intensities,
        noise=scenario.noise,
        config=scenario.filter,
    )
    logger.info("filter started at t=%.2f s (%s initialization)", measurements[k0].t, scenario.init_mode)
    estimates[k0] = filt.state
    first = k0 + 1 if scenario.init_mode == INIT_MEASUREMENT else k0
    for k in range(first, len(measurements)):
        was_faulted = filt.fault
        filt.process(measurements[k])
        estimates[k] = filt.state
        if filt.fault and not was_faulted:
            logger.warning("filter fault at t=%.2f s", measurements[k].t)
    return FilterRun(filt=filt, estimates=estimates)


def last_corrected_before(
    estimates: Sequence[Optional[FilterState]],
    measurements: Sequence[PoseMeasurement],
    t: float,
) -> Optional[int]:
    """Index of the last estimate at or before ``t`` that followed a valid sample."""
    best = None
    for k, (est, m) in enumerate(zip(estimates, measurements)):
        if m.t > t + 1e-9:
            break
        if est is not None and m.valid:
            best = k
    return best


def occlusion_predictions(
    scenario: Scenario,
    truth: Sequence[TruthState],
    measurements: Sequence[PoseMeasurement],
    estimates: Sequence[Optional[FilterState]],
) -> List[Dict[str, float]]:
    """Open-loop pose prediction across every occlusion window, checked against truth."""
    from .metrics import nees

    rows = []
    for start, end in scenario.occlusions:
        base = last_corrected_before(estimates, measurements, start)
        if base is None:
            continue
        state = estimates[base]
        for k, s in enumerate(truth):
            if not (start - 1e-9 <= s.t <= end + 1e-9):
                continue
            state = predict_ahead(state, s.t - state.t, scenario.orbit, scenario.filter_intensities, scenario.filter)
            r_hat, mu_hat = state.pose()
            r_true, mu_true = truth_pose(s, scenario)
            rows.append({
                "t": s.t,
                "window_start": start,
                "elapsed": s.t - estimates[base].t,
                "position_error_m": float(np.linalg.norm(r_hat - r_true)),
                "attitude_error_deg": math.degrees(angle_between(mu_true, mu_hat)),
                "nees": nees(s, scenario, state),
            })
    return rows


@dataclass
class RunResult:
    scenario: Scenario
    truth: List[TruthState]
    measurements: List[PoseMeasurement]
    estimates: List[Optional[FilterState]]
    nees: np.ndarray
    nis: List = field(default_factory=list)
    occlusion: List[Dict[str, float]] = field(default_factory=list)
    metrics: Dict[str, object] = field(default_factory=dict)
    fault: bool = False

    @property
    def times(self) -> np.ndarray:
        return np.array([m.t for m in self.measurements])


def run_scenario(scenario: Scenario) -> RunResult:
    from .metrics import compute_nees, summarize_run

    truth = simulate_truth(scenario)
    measurements = synthesize_measurements(truth, scenario)
    run = drive_filter(scenario, measurements, truth)
    result = RunResult(
        scenario=scenario,
        truth=truth,
        measurements=measurements,
        estimates=run.estimates,
        nees=compute_nees(truth, scenario, run.estimates),
        nis=list(run.filt.nis) if run.filt else [],
        occlusion=occlusion_predictions(scenario, truth, measurements, run.estimates),
        fault=bool(run.filt and run.filt.fault),
    )
    result.metrics = summarize_run(result, run.filt)
    logger.info(
        "run seed=%d: convergence %s s, capture error %s m",
        scenario.seed,
        result.metrics.get("convergence_time_s"),
        result.metrics.get("capture_position_error_m"),
    )
    return result
