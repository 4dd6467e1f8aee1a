import math

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from apps.tracking.dynamics import (
    DQ,
    P,
    STATE_DIM,
    InertiaRatios,
    NoiseIntensities,
    OrbitRate,
    TargetGeometry,
    TruthState,
    continuous_error_model,
    cw_accel,
    error_drift,
    euler_accel,
    integrate_motion,
    propagate_truth,
    rot_jacobians,
)
from apps.tracking.quaternion import body_to_camera, from_axis_angle, identity, quat_mul

PAPER_RATIOS = InertiaRatios.from_inertia([4.0, 8.0, 5.0])

ORBIT = OrbitRate(1.13e-3)


class InertiaRatioTests(SimpleTestCase):
    def test_ratios_from_principal_inertia(self):
        ratios = InertiaRatios.from_inertia([4.0, 8.0, 5.0])
        assert_allclose(ratios.p, [0.75, 0.125, -0.8], atol=1e-15)
        assert_allclose(np.diag(ratios.J), [1.0, 0.5, 0.8], atol=1e-15)

    def test_ratios_rebuild_normalized_inertia(self):
        ratios = InertiaRatios.from_ratios([0.75, 0.125, -0.8])
        assert_allclose(np.diag(ratios.J), [1.0, 0.5, 0.8], atol=1e-14)

    def test_unphysical_ratios_fall_back_to_unit_inertia(self):
        assert_allclose(InertiaRatios.from_ratios([-1.5, 0.0, 0.0]).J, np.eye(3))

    def test_non_positive_inertia_rejected(self):
        with self.assertRaises(ValueError):
            InertiaRatios.from_inertia([4.0, 0.0, 5.0])

    def test_negative_rates_rejected(self):
        with self.assertRaises(ValueError):
            OrbitRate(-1e-3)
        with self.assertRaises(ValueError):
            NoiseIntensities(-1.0, 0.0)


class TargetGeometryTests(SimpleTestCase):
    def test_grapple_pose(self):
        eta = from_axis_angle([1.0, 1.0, 1.0], 0.1)
        q = from_axis_angle([0.0, 1.0, 0.0], 0.4)
        geometry = TargetGeometry(rho_t=np.array([-0.15, 0.0, 0.0]), eta=eta)
        r_c, mu = geometry.pose(q, np.array([1.5, 0.0, 0.0]))
        assert_allclose(r_c, [1.5, 0.0, 0.0] + body_to_camera(q) @ [-0.15, 0.0, 0.0], atol=1e-15)
        assert_allclose(mu, quat_mul(eta, q), atol=0.0)


class EulerEquationTests(SimpleTestCase):
    def test_hand_evaluated_acceleration(self):
        assert_allclose(euler_accel([1.0, 2.0, 3.0], PAPER_RATIOS), [4.5, 0.375, -1.6], atol=1e-15)

    def test_hand_evaluated_parameter_jacobian(self):
        _, B = rot_jacobians([1.0, 2.0, 3.0], PAPER_RATIOS)
        assert_allclose(B, np.diag([6.0, 3.0, 2.0]), atol=0.0)

    def test_jacobians_match_finite_differences(self):
        rng = np.random.default_rng(5)
        h = 1e-6
        for _ in range(100):
            omega = rng.uniform(-0.5, 0.5, 3)
            ratios = InertiaRatios(p=rng.uniform(-0.9, 0.9, 3))
            A, B = rot_jacobians(omega, ratios)
            for j in range(3):
                d = np.zeros(3)
                d[j] = h
                fd_omega = (euler_accel(omega + d, ratios) - euler_accel(omega - d, ratios)) / (2 * h)
                fd_p = (
                    euler_accel(omega, InertiaRatios(p=ratios.p + d)) - euler_accel(omega, InertiaRatios(p=ratios.p - d))
                ) / (2 * h)
                assert_allclose(A[:, j], fd_omega, atol=1e-9)
                assert_allclose(B[:, j], fd_p, atol=1e-9)

    def test_principal_axis_spin_is_steady(self):
        ratios = InertiaRatios.from_inertia([4.0, 8.0, 5.0])
        assert_allclose(euler_accel([0.0, 0.0, 0.3], ratios), np.zeros(3))

    def test_steady_spin_attitude(self):
        ratios = InertiaRatios.from_inertia([4.0, 8.0, 5.0])
        s = TruthState(q=identity(), omega=np.array([0.0, 0.0, 0.3]), r_o=np.zeros(3), v_o=np.zeros(3))
        end = propagate_truth(s, ratios, OrbitRate(0.0), 2.0)
        assert_allclose(end.q, from_axis_angle([0, 0, 1], 0.6), atol=1e-12)
        self.assertAlmostEqual(end.t, 2.0)

    def test_bad_step_rejected(self):
        ratios = InertiaRatios.from_inertia([4.0, 8.0, 5.0])
        s = TruthState(q=identity(), omega=np.zeros(3), r_o=np.zeros(3), v_o=np.zeros(3))
        with self.assertRaises(ValueError):
            propagate_truth(s, ratios, ORBIT, 0.0)
        with self.assertRaises(ValueError):
            propagate_truth(TruthState(q=identity(), omega=np.array([math.nan, 0, 0]), r_o=np.zeros(3), v_o=np.zeros(3)), ratios, ORBIT, 0.5)


class RelativeOrbitTests(SimpleTestCase):
    def test_radial_offset_acceleration(self):
        assert_allclose(cw_accel([1000.0, 0.0, 0.0], np.zeros(3), ORBIT), [3.8307e-3, 0.0, 0.0], rtol=1e-12, atol=1e-15)

    def test_matches_closed_form_from_rest(self):
        n, t = ORBIT.n_z, 900.0
        x0, y0, z0 = 1.5, -0.4, 0.8
        motion = np.array([0.0, 0.0, 0.0, x0, y0, z0, 0.0, 0.0, 0.0])
        _, y = integrate_motion(identity(), motion, InertiaRatios(p=np.zeros(3)), ORBIT, t, max_substep=0.5)
        expected = [
            (4.0 - 3.0 * math.cos(n * t)) * x0,
            y0 + 6.0 * (math.sin(n * t) - n * t) * x0,
            z0 * math.cos(n * t),
        ]
        assert_allclose(y[3:6], expected, atol=1e-9)


class ErrorModelTests(SimpleTestCase):
    def setUp(self):
        self.omega = np.array([0.1, 0.2, 0.15])
        self.ratios = InertiaRatios.from_inertia([4.0, 8.0, 5.0])
        self.r = np.array([1.5, 0.1, -0.2])
        self.v = np.array([0.01, 0.0, 0.02])

    def test_jacobian_matches_drift(self):
        A, _ = continuous_error_model(self.omega, self.ratios, ORBIT)
        h = 1e-6
        fd = np.zeros((STATE_DIM, STATE_DIM))
        for j in range(STATE_DIM):
            d = np.zeros(STATE_DIM)
            d[j] = h
            fd[:, j] = (
                error_drift(d, self.omega, self.ratios.p, self.r, self.v, ORBIT)
                - error_drift(-d, self.omega, self.ratios.p, self.r, self.v, ORBIT)
            ) / (2 * h)
        assert_allclose(A, fd, atol=1e-7)

    def test_attitude_block_and_parameter_coupling(self):
        A, B = continuous_error_model(self.omega, self.ratios, ORBIT)
        assert_allclose(A[DQ, DQ] + A[DQ, DQ].T, np.zeros((3, 3)))
        assert_allclose(np.diag(A[3:6, P]), [0.2 * 0.15, 0.1 * 0.15, 0.1 * 0.2])
        assert_allclose(B[3:6, 0:3], self.ratios.J)
        self.assertEqual(B.shape, (STATE_DIM, 6))

    def test_drift_vanishes_at_zero_error(self):
        assert_allclose(error_drift(np.zeros(STATE_DIM), self.omega, self.ratios.p, self.r, self.v, ORBIT), 0.0)


class ConservationTests(SimpleTestCase):
    def test_torque_free_tumble_conserves_energy_and_momentum(self):
        I = np.diag([4.0, 8.0, 5.0])
        s = TruthState(q=identity(), omega=np.array([0.1, 0.2, 0.15]), r_o=np.zeros(3), v_o=np.zeros(3))
        end = propagate_truth(s, PAPER_RATIOS, OrbitRate(0.0), 120.0)
        energy = 0.5 * s.omega @ I @ s.omega
        self.assertLess(abs(0.5 * end.omega @ I @ end.omega - energy) / energy, 1e-9)
        h0 = np.linalg.norm(I @ s.omega)
        self.assertLess(abs(np.linalg.norm(I @ end.omega) - h0) / h0, 1e-9)

    def test_propagation_is_deterministic(self):
        s = TruthState(q=identity(), omega=np.array([0.1, 0.2, 0.15]), r_o=np.array([1.5, 0.0, 0.0]), v_o=np.zeros(3))
        a = propagate_truth(s, PAPER_RATIOS, ORBIT, 0.5, disturbance=[1e-3, 0, 0, 0, 1e-4, 0])
        b = propagate_truth(s, PAPER_RATIOS, ORBIT, 0.5, disturbance=[1e-3, 0, 0, 0, 1e-4, 0])
        np.testing.assert_array_equal(a.q, b.q)
        np.testing.assert_array_equal(a.motion(), b.motion())
