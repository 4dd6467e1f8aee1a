import math

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from apps.experiments.metrics import (
    convergence_time,
    error_series,
    estimation_error,
    nees,
    nees_band,
    rms,
    summarize_batch,
)
from apps.tracking.dynamics import STATE_DIM, TruthState
from apps.tracking.ekf import FilterState
from apps.tracking.quaternion import conj, from_axis_angle, quat_mul

from .helpers import noise_free_scenario


def estimate_at_truth(scenario, s, P=None):
    return FilterState(
        q=s.q.copy(), eta=scenario.eta.copy(), omega=s.omega.copy(), p=scenario.ratios.p.copy(),
        r_o=s.r_o.copy(), v_o=s.v_o.copy(), rho_t=scenario.rho_t.copy(),
        P=np.eye(STATE_DIM) if P is None else P,
    )


class NeesTests(SimpleTestCase):
    def setUp(self):
        self.scenario = noise_free_scenario()
        self.truth = TruthState(
            q=from_axis_angle([1, 2, 3], 0.5), omega=np.array([0.1, 0.2, 0.15]),
            r_o=np.array([1.5, 0.0, 0.0]), v_o=np.zeros(3),
        )

    def test_zero_for_exact_estimate(self):
        est = estimate_at_truth(self.scenario, self.truth)
        assert_allclose(estimation_error(self.truth, self.scenario, est), 0.0, atol=1e-15)
        self.assertAlmostEqual(nees(self.truth, self.scenario, est), 0.0, places=20)

    def test_weighted_by_covariance(self):
        est = estimate_at_truth(self.scenario, self.truth, P=4.0 * np.eye(STATE_DIM))
        est.r_o = est.r_o + np.array([0.2, 0.0, 0.0])
        est.omega = est.omega - np.array([0.0, 0.4, 0.0])
        self.assertAlmostEqual(nees(self.truth, self.scenario, est), (0.04 + 0.16) / 4.0, places=12)

    def test_inflated_covariance_deflates_nees(self):
        est = estimate_at_truth(self.scenario, self.truth, P=np.diag(np.linspace(0.5, 2.0, STATE_DIM)))
        est.r_o = est.r_o + np.array([0.1, -0.05, 0.02])
        est.rho_t = est.rho_t + np.array([0.0, 0.03, 0.0])
        base = nees(self.truth, self.scenario, est)
        inflated = nees(self.truth, self.scenario, est.copy(P=100.0 * est.P))
        self.assertAlmostEqual(base / inflated, 100.0, places=9)

    def test_singular_covariance_gives_nan(self):
        est = estimate_at_truth(self.scenario, self.truth, P=np.zeros((STATE_DIM, STATE_DIM)))
        self.assertTrue(math.isnan(nees(self.truth, self.scenario, est)))

    def test_band(self):
        low, high = nees_band(1)
        self.assertAlmostEqual(low, 10.283, places=2)
        self.assertAlmostEqual(high, 35.479, places=2)
        low25, high25 = nees_band(25)
        self.assertTrue(low < low25 < 21.0 < high25 < high)


class ErrorSeriesTests(SimpleTestCase):
    def test_grapple_attitude_ignores_compensated_body_error(self):
        scenario = noise_free_scenario()
        s = TruthState(q=from_axis_angle([1, 2, 3], 0.5), omega=np.zeros(3), r_o=np.array([1.5, 0.0, 0.0]), v_o=np.zeros(3))
        turn = from_axis_angle([0.0, 0.0, 1.0], math.radians(3.0))
        est = estimate_at_truth(scenario, s)
        est.q = quat_mul(turn, s.q)
        est.eta = quat_mul(scenario.eta, conj(turn))
        series = error_series([s, s], scenario, [None, est])
        self.assertTrue(math.isnan(series["por_attitude_deg"][0]))
        self.assertAlmostEqual(series["attitude_deg"][1], 3.0, places=9)
        self.assertAlmostEqual(series["por_attitude_deg"][1], 0.0, places=6)


class ConvergenceTests(SimpleTestCase):
    def setUp(self):
        self.times = np.arange(11.0)
        self.pos = np.full(11, 0.001)

    def test_first_sample_of_lasting_convergence(self):
        att = np.array([5.0, 5.0, 0.5, 2.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5])
        self.assertEqual(convergence_time(self.times, att, self.pos, 0.0), 4.0)
        self.assertEqual(convergence_time(self.times, att, self.pos, 1.0), 3.0)

    def test_never_converged(self):
        att = np.full(11, 0.5)
        att[-1] = 3.0
        self.assertIsNone(convergence_time(self.times, att, self.pos, 0.0))

    def test_only_samples_before_cutoff_count(self):
        att = np.full(11, 0.5)
        att[8:] = 3.0
        self.assertEqual(convergence_time(self.times, att, self.pos, 0.0, until=8.0), 0.0)

    def test_position_threshold(self):
        pos = np.full(11, 0.05)
        self.assertIsNone(convergence_time(self.times, np.zeros(11), pos, 0.0))

    def test_rms_skips_nan(self):
        self.assertAlmostEqual(rms(np.array([3.0, math.nan, 4.0])), math.sqrt(12.5))
        self.assertTrue(math.isnan(rms(np.array([math.nan]))))


class BatchSummaryTests(SimpleTestCase):
    def test_counts_and_band(self):
        members = [
            {"fault": False, "converged_within_deadline": True, "params_within_tolerance": True, "capture_within_tolerance": None},
            {"fault": True, "converged_within_deadline": False, "params_within_tolerance": True, "capture_within_tolerance": True},
        ]
        nees_runs = np.array([[math.nan, 20.0, 22.0], [math.nan, 21.0, 500.0]])
        summary = summarize_batch(members, nees_runs)
        self.assertEqual(summary["runs"], 2)
        self.assertEqual(summary["faults"], 1)
        self.assertEqual(summary["converged_within_deadline"], 1)
        self.assertEqual(summary["params_within_tolerance"], 2)
        self.assertEqual(summary["capture_within_tolerance"], 1)
        self.assertEqual(summary["nees_average_in_band_fraction"], 0.5)
