import logging
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pandas as pd
from django.core.exceptions import ValidationError

from apps.tracking.dynamics import STATE_LABELS, TruthState
from apps.tracking.ekf import PoseMeasurement

from cli.common import COMMON
from cli.h_files import dir_create, file_exists, json_save

from .metrics import compute_nees, filter_counts, summarize_batch, summarize_run
from .simulation import RunResult, drive_filter, occlusion_predictions, run_scenario, truth_pose

logger = logging.getLogger(__name__)

VEC = ("x", "y", "z")
QUAT = ("x", "y", "z", "w")


def _cols(name, parts):
    return [f"{name}_{p}" for p in parts]


TRUTH_STATE_COLUMNS = ["t"] + _cols("q", QUAT) + _cols("omega", VEC) + _cols("r_o", VEC) + _cols("v_o", VEC)
TRUTH_COLUMNS = TRUTH_STATE_COLUMNS + _cols("r_c", VEC) + _cols("mu", QUAT)
MEASUREMENT_COLUMNS = ["t"] + _cols("r_c", VEC) + _cols("mu", QUAT) + ["valid"]
ESTIMATE_COLUMNS = (
    ["t"] + _cols("q", QUAT) + _cols("omega", VEC) + _cols("p", VEC) + _cols("r_o", VEC) + _cols("v_o", VEC)
    + _cols("rho_t", VEC) + _cols("eta", QUAT) + ["trace_P"] + [f"std_{label}" for label in STATE_LABELS]
)

UNIT_TOL = 1e-6


# ----- Frames -----

def truth_frame(result):
    rows = []
    for s in result.truth:
        r_c, mu = truth_pose(s, result.scenario)
        rows.append(np.concatenate([[s.t], s.q, s.omega, s.r_o, s.v_o, r_c, mu]))
    return pd.DataFrame(rows, columns=TRUTH_COLUMNS)


def measurement_frame(measurements):
    rows = [np.concatenate([[m.t], m.r_c, m.mu]) for m in measurements]
    df = pd.DataFrame(rows, columns=MEASUREMENT_COLUMNS[:-1])
    df["valid"] = [int(m.valid) for m in measurements]
    return df


def estimate_frame(estimates):
    rows = [
        np.concatenate([
            [est.t], est.q, est.omega, est.p, est.r_o, est.v_o, est.rho_t, est.eta,
            [np.trace(est.P)], est.std(),
        ])
        for est in estimates
        if est is not None
    ]
    return pd.DataFrame(rows, columns=ESTIMATE_COLUMNS)


def _to_csv(df, path):
    df.to_csv(path, index=False, sep=COMMON.CSV_SEP, float_format=COMMON.FLOAT_FORMAT)
    return path


def export_run(result, out_dir, include_truth=True):
    """Write the run's CSV series and ``metrics.json``; returns the written paths by name."""
    dir_create(out_dir)
    paths = {
        "estimate": _to_csv(estimate_frame(result.estimates), os.path.join(out_dir, COMMON.FILE_ESTIMATE)),
    }
    if include_truth:
        paths["truth"] = _to_csv(truth_frame(result), os.path.join(out_dir, COMMON.FILE_TRUTH))
        paths["measurements"] = _to_csv(
            measurement_frame(result.measurements), os.path.join(out_dir, COMMON.FILE_MEASUREMENTS)
        )
    paths["metrics"] = os.path.join(out_dir, COMMON.FILE_METRICS)
    json_save(paths["metrics"], result.metrics)
    logger.info("results written to %s", out_dir)
    return paths


# ----- Logs -----

def _read_log(path, columns):
    if not file_exists(path):
        raise ValidationError(f"log file not found: {path}")
    try:
        df = pd.read_csv(path, sep=COMMON.CSV_SEP, float_precision="round_trip")
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=columns)
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise ValidationError(f"{path}: missing columns {', '.join(missing)}")
    return df


def _check_times(t, path):
    for i, value in enumerate(t):
        if not np.isfinite(value):
            raise ValidationError(f"{path}: row {i + 1}: timestamp is not a number")
        if i and value <= t[i - 1]:
            raise ValidationError(
                f"{path}: row {i + 1}: timestamp {value:g} s does not follow {t[i - 1]:g} s"
            )


def load_measurement_log(path):
    df = _read_log(path, MEASUREMENT_COLUMNS)
    t = df["t"].to_numpy(dtype=float)
    _check_times(t, path)
    r_c = df[_cols("r_c", VEC)].to_numpy(dtype=float)
    mu = df[_cols("mu", QUAT)].to_numpy(dtype=float)
    valid = df["valid"].to_numpy()

    out = []
    for i in range(len(df)):
        if valid[i] not in (0, 1):
            raise ValidationError(f"{path}: row {i + 1}: valid must be 0 or 1, got {valid[i]!r}")
        if valid[i]:
            if not np.all(np.isfinite(r_c[i])):
                raise ValidationError(f"{path}: row {i + 1}: position is not finite")
            if abs(np.linalg.norm(mu[i]) - 1.0) > UNIT_TOL:
                raise ValidationError(f"{path}: row {i + 1}: orientation quaternion is not unit norm")
        out.append(PoseMeasurement(t=float(t[i]), r_c=r_c[i].copy(), mu=mu[i].copy(), valid=bool(valid[i])))
    return out


def load_truth_log(path):
    df = _read_log(path, TRUTH_STATE_COLUMNS)
    t = df["t"].to_numpy(dtype=float)
    _check_times(t, path)
    q = df[_cols("q", QUAT)].to_numpy(dtype=float)
    omega = df[_cols("omega", VEC)].to_numpy(dtype=float)
    r_o = df[_cols("r_o", VEC)].to_numpy(dtype=float)
    v_o = df[_cols("v_o", VEC)].to_numpy(dtype=float)
    return [
        TruthState(q=q[i].copy(), omega=omega[i].copy(), r_o=r_o[i].copy(), v_o=v_o[i].copy(), t=float(t[i]))
        for i in range(len(df))
    ]


def align_truth(truth, measurements):
    if len(truth) != len(measurements):
        raise ValidationError(f"truth has {len(truth)} rows but the log has {len(measurements)}")
    for i, (s, m) in enumerate(zip(truth, measurements)):
        if abs(s.t - m.t) > 1e-9:
            raise ValidationError(f"row {i + 1}: truth time {s.t:g} s does not match log time {m.t:g} s")
    return truth


# ----- Runs -----

def replay(scenario, measurements, truth=None):
    """
    Drive the filter from logged measurements. With ``truth`` the full run metrics are
    computed; without it only the truth-free counts are reported.
    """
    if truth is not None:
        align_truth(truth, measurements)
    run = drive_filter(scenario, measurements, truth)
    result = RunResult(
        scenario=scenario,
        truth=list(truth or []),
        measurements=list(measurements),
        estimates=run.estimates,
        nees=compute_nees(truth, scenario, run.estimates) if truth is not None else np.zeros(0),
        nis=list(run.filt.nis) if run.filt else [],
        fault=bool(run.filt and run.filt.fault),
    )
    if truth is not None:
        result.occlusion = occlusion_predictions(scenario, truth, measurements, run.estimates)
        result.metrics = summarize_run(result, run.filt)
    else:
        result.metrics = filter_counts(result, run.filt)
    logger.info("replayed %d samples, %d updates", len(measurements), result.metrics["updates"])
    return result


SERIES_KEYS = ("nees_series", "nis_series", "occlusion_series")


def _batch_member(scenario):
    result = run_scenario(scenario)
    metrics = {k: v for k, v in result.metrics.items() if k not in SERIES_KEYS}
    return metrics, result.nees


def run_batch(scenario, runs, workers=1):
    """Monte-Carlo batch over seeds ``seed, seed + 1, ...`` in independent processes."""
    members = [scenario.with_seed(scenario.seed + i) for i in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_batch_member, members))
    else:
        outcomes = [_batch_member(member) for member in members]

    metrics = [m for m, _ in outcomes]
    nees = np.array([n for _, n in outcomes]) if outcomes else np.zeros((0, 0))
    summary = summarize_batch(metrics, nees)
    logger.info(
        "batch of %d: %d converged, %d parameter checks, %d capture checks passed",
        runs,
        summary["converged_within_deadline"],
        summary["params_within_tolerance"],
        summary["capture_within_tolerance"],
    )
    return summary
