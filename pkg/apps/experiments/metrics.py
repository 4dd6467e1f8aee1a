"""
Consistency and accuracy figures for one run or a batch of runs.
"""

from __future__ import annotations

import math
import warnings
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.stats import chi2

from apps.tracking.dynamics import DETA, DQ, OMEGA, P, R_O, RHO, STATE_DIM, V_O, TruthState, propagate_truth
from apps.tracking.ekf import FilterState, predict_pose
from apps.tracking.quaternion import angle_between, conj, error_quat, positive_scalar, quat_mul

from .scenario import Scenario
from .simulation import last_corrected_before, truth_pose

ATTITUDE_CONVERGED_DEG = 1.0
POSITION_CONVERGED_M = 0.01
CONVERGENCE_DEADLINE_S = 10.0
RHO_TOLERANCE_M = 0.01
P_RELATIVE_TOLERANCE = 0.10
P_ABSOLUTE_FLOOR = 0.05
CAPTURE_POSITION_TOLERANCE_M = 0.05
CAPTURE_ATTITUDE_TOLERANCE_DEG = 5.0
BAND_PROBABILITY = 0.95


def estimation_error(s: TruthState, scenario: Scenario, est: FilterState) -> np.ndarray:
    """Truth minus estimate in the 21-element error-state layout."""
    e = np.zeros(STATE_DIM)
    e[DQ] = error_quat(s.q, est.q)[:3]
    e[OMEGA] = s.omega - est.omega
    e[P] = scenario.ratios.p - est.p
    e[R_O] = s.r_o - est.r_o
    e[V_O] = s.v_o - est.v_o
    e[RHO] = scenario.rho_t - est.rho_t
    e[DETA] = positive_scalar(quat_mul(conj(est.eta), scenario.eta))[:3]
    return e


def nees(s: TruthState, scenario: Scenario, est: FilterState) -> float:
    """Normalized estimation error squared; NaN when the covariance is not positive definite."""
    e = estimation_error(s, scenario, est)
    try:
        return float(e @ scipy.linalg.cho_solve(scipy.linalg.cho_factor(est.P), e))
    except (np.linalg.LinAlgError, ValueError):
        return math.nan


def compute_nees(
    truth: Sequence[TruthState],
    scenario: Scenario,
    estimates: Sequence[Optional[FilterState]],
) -> np.ndarray:
    return np.array([math.nan if est is None else nees(s, scenario, est) for s, est in zip(truth, estimates)])


def nees_band(runs: int = 1, probability: float = BAND_PROBABILITY, dof: int = STATE_DIM):
    """Two-sided acceptance band for the NEES averaged over ``runs`` runs."""
    tail = 0.5 * (1.0 - probability)
    return (
        float(chi2.ppf(tail, runs * dof) / runs),
        float(chi2.ppf(1.0 - tail, runs * dof) / runs),
    )


def error_series(truth: Sequence[TruthState], scenario: Scenario, estimates: Sequence[Optional[FilterState]]):
    """
    Per-sample errors, NaN before the filter starts: body attitude and grapple-frame
    attitude (deg), grapple position (m), rate (rad/s), inertia ratios and grapple offset.
    """
    n = len(truth)
    att = np.full(n, math.nan)
    por_att = np.full(n, math.nan)
    pos = np.full(n, math.nan)
    rate = np.full(n, math.nan)
    ratio = np.full((n, 3), math.nan)
    rho = np.full((n, 3), math.nan)
    for k, (s, est) in enumerate(zip(truth, estimates)):
        if est is None:
            continue
        att[k] = math.degrees(angle_between(s.q, est.q))
        r_true, mu_true = truth_pose(s, scenario)
        r_hat, mu_hat = est.pose()
        por_att[k] = math.degrees(angle_between(mu_true, mu_hat))
        pos[k] = float(np.linalg.norm(r_hat - r_true))
        rate[k] = float(np.linalg.norm(s.omega - est.omega))
        ratio[k] = est.p - scenario.ratios.p
        rho[k] = est.rho_t - scenario.rho_t
    return {"attitude_deg": att, "por_attitude_deg": por_att, "position_m": pos, "rate_rads": rate, "ratio": ratio, "rho_m": rho}


def convergence_time(
    times: np.ndarray,
    attitude_deg: np.ndarray,
    position_m: np.ndarray,
    start: float,
    until: float = math.inf,
) -> Optional[float]:
    """
    Time after ``start`` from which both errors stay under their thresholds for every
    sample before ``until``; None if that never happens.
    """
    window = (times >= start - 1e-9) & (times < until - 1e-9) & np.isfinite(attitude_deg)
    idx = np.flatnonzero(window)
    if idx.size == 0:
        return None
    ok = (attitude_deg[idx] < ATTITUDE_CONVERGED_DEG) & (position_m[idx] < POSITION_CONVERGED_M)
    if not ok[-1]:
        return None
    bad = np.flatnonzero(~ok)
    first = idx[bad[-1] + 1] if bad.size else idx[0]
    return float(times[first] - start)


def rms(values: np.ndarray) -> float:
    values = values[np.isfinite(values)]
    return float(np.sqrt(np.mean(values**2))) if values.size else math.nan


def summarize_run(result, filt=None) -> Dict[str, object]:
    """Scalar figures written to ``metrics.json`` for one run."""
    scenario: Scenario = result.scenario
    times = result.times
    if times.size == 0:
        return {**filter_counts(result, filt), "convergence_time_s": None}

    series = error_series(result.truth, scenario, result.estimates)
    first_gap = min((start for start, _ in scenario.occlusions), default=math.inf)
    t_conv = convergence_time(times, series["por_attitude_deg"], series["position_m"], scenario.filter_start, first_gap)

    occluded = np.array([scenario.occluded(t) for t in times])
    settled = ~occluded & (times >= scenario.filter_start + (t_conv if t_conv is not None else 0.0) - 1e-9)
    band = nees_band(1)
    finite_nees = np.isfinite(result.nees) & settled

    metrics: Dict[str, object] = {
        "seed": scenario.seed,
        "convergence_time_s": t_conv,
        "converged_within_deadline": t_conv is not None and t_conv <= CONVERGENCE_DEADLINE_S,
        "rms_attitude_deg": rms(series["attitude_deg"][settled]),
        "rms_por_attitude_deg": rms(series["por_attitude_deg"][settled]),
        "rms_position_m": rms(series["position_m"][settled]),
        "rms_rate_rads": rms(series["rate_rads"][settled]),
        "rms_ratio_relative": rms(
            np.linalg.norm(series["ratio"][settled], axis=1) / max(float(np.linalg.norm(scenario.ratios.p)), 1e-12)
        ),
        "nees_series": result.nees,
        "nees_mean": float(np.mean(result.nees[finite_nees])) if finite_nees.any() else math.nan,
        "nees_band": list(band),
        "nees_in_band_fraction": (
            float(np.mean((result.nees[finite_nees] >= band[0]) & (result.nees[finite_nees] <= band[1])))
            if finite_nees.any()
            else math.nan
        ),
    }
    metrics.update(filter_counts(result, filt))
    metrics.update(parameter_check(result, series))
    metrics.update(capture_check(result))
    if result.occlusion:
        metrics["occlusion_max_position_error_m"] = max(row["position_error_m"] for row in result.occlusion)
        metrics["occlusion_max_attitude_error_deg"] = max(row["attitude_error_deg"] for row in result.occlusion)
        metrics["occlusion_series"] = result.occlusion
    return metrics


def filter_counts(result, filt=None) -> Dict[str, object]:
    """Figures that need no truth: sample and update counts, NIS and the fault flag."""
    return {
        "samples": len(result.measurements),
        "fault": result.fault,
        "nis_mean": float(np.mean([v for _, v in result.nis])) if result.nis else math.nan,
        "nis_series": [[t, v] for t, v in result.nis],
        "updates": filt.updates if filt else 0,
        "gated": filt.gated if filt else 0,
        "clamped": filt.clamped if filt else 0,
    }


def _sample_at(times: np.ndarray, t: float) -> Optional[int]:
    idx = np.flatnonzero(times <= t + 1e-9)
    return int(idx[-1]) if idx.size else None


def parameter_check(result, series) -> Dict[str, object]:
    scenario: Scenario = result.scenario
    k = _sample_at(result.times, scenario.param_check_time)
    if k is None or result.estimates[k] is None:
        return {"param_check_time_s": scenario.param_check_time, "params_within_tolerance": None}
    est = result.estimates[k]
    p_true = scenario.ratios.p
    p_err = np.abs(est.p - p_true)
    p_ok = bool(np.all(p_err <= np.maximum(P_RELATIVE_TOLERANCE * np.abs(p_true), P_ABSOLUTE_FLOOR)))
    rho_err = np.abs(series["rho_m"][k])
    rho_ok = bool(np.all(rho_err <= RHO_TOLERANCE_M))
    return {
        "param_check_time_s": float(result.times[k]),
        "p_estimate": est.p,
        "p_true": p_true,
        "p_abs_error": p_err,
        "rho_t_estimate_m": est.rho_t,
        "rho_t_abs_error_m": rho_err,
        "p_within_tolerance": p_ok,
        "rho_within_tolerance": rho_ok,
        "params_within_tolerance": p_ok and rho_ok,
    }


def capture_check(result) -> Dict[str, object]:
    """
    Pose predicted for the capture instant from the last corrected estimate, against truth.
    """
    scenario: Scenario = result.scenario
    t_cap = scenario.capture_time
    base = last_corrected_before(result.estimates, result.measurements, t_cap)
    k = _sample_at(result.times, t_cap)
    if base is None or k is None:
        return {"capture_time_s": t_cap, "capture_within_tolerance": None}

    s = result.truth[k]
    if t_cap - s.t > 1e-9:
        s = propagate_truth(s, scenario.ratios, scenario.orbit, t_cap - s.t)
    est = result.estimates[base]
    r_hat, mu_hat = predict_pose(est, t_cap - est.t, scenario.orbit, scenario.filter_intensities, scenario.filter)
    r_true, mu_true = truth_pose(s, scenario)
    pos = float(np.linalg.norm(r_hat - r_true))
    att = math.degrees(angle_between(mu_true, mu_hat))
    return {
        "capture_time_s": t_cap,
        "capture_horizon_s": float(t_cap - est.t),
        "capture_position_error_m": pos,
        "capture_attitude_error_deg": att,
        "capture_within_tolerance": pos <= CAPTURE_POSITION_TOLERANCE_M and att <= CAPTURE_ATTITUDE_TOLERANCE_DEG,
    }


def summarize_batch(members: List[Dict[str, object]], nees_runs: np.ndarray) -> Dict[str, object]:
    """Pass counts over a Monte-Carlo batch and the averaged NEES against its band."""
    runs = len(members)

    def count(key):
        return int(sum(1 for m in members if m.get(key) is True))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        avg = np.nanmean(nees_runs, axis=0) if runs else np.zeros(0)
    band = nees_band(runs) if runs else (math.nan, math.nan)
    finite = np.isfinite(avg)
    return {
        "runs": runs,
        "faults": int(sum(1 for m in members if m.get("fault"))),
        "converged_within_deadline": count("converged_within_deadline"),
        "params_within_tolerance": count("params_within_tolerance"),
        "capture_within_tolerance": count("capture_within_tolerance"),
        "nees_average_band": list(band),
        "nees_average_in_band_fraction": (
            float(np.mean((avg[finite] >= band[0]) & (avg[finite] <= band[1]))) if finite.any() else math.nan
        ),
        "members": members,
    }
