import numpy as np
from testML_BaseTestClass import TestML_BaseTestClass

from costate_fusion.config import AlarmConfig, DescentConfig, EkfConfig
from costate_fusion.ekf_baseline import (EkfBaseline, EkfState, ekf_predict, ekf_update, nis_alarm, nis_threshold,
                                         process_noise, transition_matrix)
from costate_fusion.errors import InvalidIntervalError
from costate_fusion.measurement_model import eval_h


class TestEkfSteps(TestML_BaseTestClass):

    def test_predict_covariance_blocks(self):
        dt = 0.5
        s = ekf_predict(EkfState(x_hat=np.array([0, 0, 100.0, 1, 2, -3]), P=np.eye(6)), dt, np.zeros((6, 6)))
        np.testing.assert_allclose(s.x_hat, [0.5, 1.0, 98.5, 1, 2, -3])
        np.testing.assert_allclose(s.P[:3, :3], (1 + dt ** 2) * np.eye(3))
        np.testing.assert_allclose(s.P[:3, 3:], dt * np.eye(3))
        np.testing.assert_allclose(s.P[3:, 3:], np.eye(3))
        F = transition_matrix(dt)
        np.testing.assert_allclose(s.P, F @ F.T)

    def test_predict_with_acceleration(self):
        s = ekf_predict(EkfState(x_hat=np.zeros(6), P=np.eye(6)), 2.0, np.zeros((6, 6)), accel=[0.0, 0.0, 1.0])
        np.testing.assert_allclose(s.x_hat, [0, 0, 2.0, 0, 0, 2.0])

    def test_predict_rejects_bad_interval(self):
        with self.assertRaises(InvalidIntervalError):
            ekf_predict(EkfState(x_hat=np.zeros(6), P=np.eye(6)), 0.0, np.zeros((6, 6)))

    def test_process_noise_is_positive_semidefinite(self):
        Q = process_noise(0.1, 0.3)
        np.testing.assert_allclose(Q, Q.T)
        self.assertGreaterEqual(np.linalg.eigvalsh(Q).min(), -1e-15)
        G = np.vstack([0.005 * np.eye(3), 0.1 * np.eye(3)])
        np.testing.assert_allclose(Q, G @ G.T * 0.09, atol=1e-18)

    def test_nadir_gains(self):
        P = np.diag([4.0, 4.0, 9.0, 1.0, 1.0, 0.25])
        R = np.diag([1.0, 4.0, 0.01])
        x = np.array([0.0, 0.0, 1000.0, 0.0, 0.0, -20.0])
        y = eval_h(x) + np.array([1.0, -2.0, 0.05])
        s, nu, nis = ekf_update(EkfState(x_hat=x, P=P), y, R)
        np.testing.assert_allclose(nu, [1.0, -2.0, 0.05], atol=1e-12)
        gain_vz = 0.25 / (0.25 + 0.01)
        self.assertAlmostEqual(s.x_hat[5] - x[5], gain_vz * 0.05, places=12)
        post_var = 1.0 / (1.0 / 9.0 + 1.0 / 1.0 + 1.0 / 4.0)
        self.assertAlmostEqual(s.x_hat[2] - x[2], post_var * (1.0 / 1.0 - 2.0 / 4.0), places=10)
        self.assertAlmostEqual(s.P[2, 2], post_var, places=10)
        self.assertAlmostEqual(s.P[5, 5], 0.25 * 0.01 / 0.26, places=12)
        S = np.array([[10.0, 9.0, 0.0], [9.0, 13.0, 0.0], [0.0, 0.0, 0.26]])
        self.assertAlmostEqual(nis, float(nu @ np.linalg.solve(S, nu)), places=10)
        self.assertFalse(s.jittered)

    def test_singular_innovation_covariance_is_jittered(self):
        s, _, nis = ekf_update(EkfState(x_hat=np.array([0, 0, 10.0, 0, 0, 0]), P=np.zeros((6, 6))),
                               np.array([10.0, 10.0, 0.0]), np.zeros((3, 3)))
        self.assertTrue(s.jittered)
        self.assertTrue(np.isfinite(nis))
        self.assertTrue(np.all(np.isfinite(s.P)))

    def test_nis_is_consistent_on_matched_model(self):
        dt, accel_std = 0.1, 0.5
        R = np.diag([1.0, 1.0, 0.01])
        Q = process_noise(dt, accel_std)
        P0 = np.diag([1.0] * 3 + [0.01] * 3)
        truth = np.array([500.0, 200.0, 2000.0, -5.0, 2.0, -2.0])
        s = EkfState(x_hat=truth + self.rng.multivariate_normal(np.zeros(6), P0), P=P0)
        F = transition_matrix(dt)
        G = np.vstack([0.5 * dt * dt * np.eye(3), dt * np.eye(3)])
        nis_values = []
        for _ in range(5000):
            truth = F @ truth + G @ self.rng.normal(0.0, accel_std, size=3)
            y = eval_h(truth) + self.rng.multivariate_normal(np.zeros(3), R)
            s, _, nis = ekf_update(ekf_predict(s, dt, Q), y, R)
            nis_values.append(nis)
        self.assertAlmostEqual(float(np.mean(nis_values)), 3.0, delta=0.15)


class TestNisAlarm(TestML_BaseTestClass):

    def test_threshold(self):
        self.assertAlmostEqual(nis_threshold(0.999, 3), 16.266, delta=1e-3)

    def test_alarm(self):
        self.assertEqual(nis_alarm([20.0] * 60), (True, 59.0))
        self.assertEqual(nis_alarm([3.0] * 600), (False, None))
        with self.assertRaises(ValueError):
            nis_alarm([1.0], window=0)

    def test_baseline_from_config(self):
        sim = DescentConfig(noise_std=[2.0, 2.0, 0.0])
        baseline = EkfBaseline.from_config(np.array([0, 0, 500.0, 0, 0, -10.0]), EkfConfig(), sim, AlarmConfig())
        np.testing.assert_allclose(np.diag(baseline.R), [4.0, 4.0, 1e-12])
        self.assertEqual(baseline.accel_std, sim.accel_noise_std)
        self.assertAlmostEqual(baseline.alarm.threshold, nis_threshold(0.999))
        other = baseline.copy()
        nu, nis = other.step(np.array([499.0, 499.0, -10.0]), dt=0.1)
        self.assertEqual(nu.shape, (3,))
        self.assertTrue(np.isfinite(nis))
        np.testing.assert_array_equal(baseline.state.x_hat, [0, 0, 500.0, 0, 0, -10.0])
        self.assertEqual(baseline.jitter_events, 0)
