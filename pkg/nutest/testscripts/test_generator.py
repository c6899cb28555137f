import numpy as np
from scipy.linalg import expm
from testML_BaseTestClass import TestML_BaseTestClass

from costate_fusion.errors import (DegenerateClusterError, DegenerateDwellError, InvalidIntervalError,
                                   UnreachableHazardError)
from costate_fusion.generator import (LabeledTrajectory, assemble_generator, bootstrap_ci, calibration_error,
                                      enforce_generator_validity, estimate_diffusion, estimate_drift,
                                      expm_generator, fit_generator, intercluster_distances, log_likelihood,
                                      mfpt, mle_generator, one_step_calibration, propagate_probabilities, restrict_to_observed,
                                      sample_hitting_times, simulate_ctmc, spectral_stability, transition_stats)


class TestTransitionStatistics(TestML_BaseTestClass):

    def test_transition_stats(self):
        traj = LabeledTrajectory(t=[0.0, 1.0, 1.5, 3.0, 4.0], modes=[0, 0, 1, 0, 1], K=2)
        stats = transition_stats(traj)
        np.testing.assert_array_equal(stats.N, [[0, 2], [1, 0]])
        np.testing.assert_allclose(stats.T, [1.0 + 0.5 + 1.0, 1.5])
        self.assertEqual(stats.index_sets[0][1], [1, 3])
        self.assertEqual(stats.index_sets[1][0], [2])
        self.assertEqual(stats.occupied, [0, 1])

    def test_trajectory_validation(self):
        with self.assertRaises(InvalidIntervalError):
            LabeledTrajectory(t=[0.0, 0.0], modes=[0, 1], K=2)
        with self.assertRaises(ValueError):
            LabeledTrajectory(t=[0.0, 1.0], modes=[0, 2], K=2)

    def test_intercluster_distances_match_pairwise_sum(self):
        x = np.array([[0.0, 1.0], [1.0, 3.0], [4.0, -1.0], [6.0, 0.0]])
        traj = LabeledTrajectory(t=[0.0, 1.0, 2.0, 3.0], modes=[0, 0, 1, 1], K=2, x=x)
        l_full, l_coord = intercluster_distances(traj)
        a, b = x[:2], x[2:]
        full = np.mean([np.linalg.norm(p - q) for p in a for q in b])
        coord = np.mean([np.abs(p - q) for p in a for q in b], axis=0)
        self.assertAlmostEqual(l_full[0, 1], full, places=12)
        self.assertAlmostEqual(l_full[1, 0], full, places=12)
        np.testing.assert_allclose(l_coord[0, 1], coord, rtol=1e-12)
        within = np.mean([np.linalg.norm(p - q) for p in a for q in a])
        self.assertAlmostEqual(l_full[0, 0], within, places=12)

    def test_intercluster_distances_require_members(self):
        traj = LabeledTrajectory(t=[0.0, 1.0], modes=[0, 0], K=2)
        with self.assertRaises(DegenerateClusterError):
            intercluster_distances(traj)

    def test_drift_and_diffusion_from_hand_data(self):
        # three 0 -> 1 jumps in one dimension
        t = np.array([0.0, 1.0, 2.0, 2.5, 4.0, 4.2])
        x = np.array([0.0, 2.0, 0.5, 1.5, 0.0, 3.0])
        modes = np.array([0, 1, 0, 1, 0, 1])
        traj = LabeledTrajectory(t=t, modes=modes, K=2, x=x)
        stats = transition_stats(traj)
        a_kl_q, a_bar_k_q, a_bar_kl = estimate_drift(traj, stats)
        rates = np.array([2.0 / 1.0, 1.0 / 0.5, 3.0 / 0.2])
        self.assertAlmostEqual(a_kl_q[0, 1, 0], rates.mean(), places=12)
        l01 = stats.l_coord[0, 1, 0]
        self.assertAlmostEqual(a_bar_kl[0, 1], rates.mean() / l01, places=12)
        self.assertAlmostEqual(a_bar_k_q[0, 0], rates.mean() / l01, places=12)
        sigma_pq, sigma_bar = estimate_diffusion(traj, stats, a_kl_q)
        dx = np.array([2.0, 1.0, 3.0])
        dt = np.array([1.0, 0.5, 0.2])
        dev = dx / np.sqrt(dt) - rates.mean() * np.sqrt(dt)
        self.assertAlmostEqual(sigma_pq[0, 1, 0, 0], float(dev @ dev) / 2, places=12)
        self.assertAlmostEqual(sigma_bar[0, 1], float(dev @ dev) / 2 / l01 ** 2, places=12)
        # the two 1 -> 0 jumps give a second pair
        self.assertGreater(a_kl_q[1, 0, 0], 0.0)

    def test_assembled_generator_is_made_valid(self):
        a_bar = np.array([[0.0, 2.0, 0.0], [0.5, 0.0, 1.0], [0.0, 0.3, 0.0]])
        sigma_bar = np.array([[0.0, 0.1, 0.0], [0.0, 0.0, 0.2], [0.4, 0.0, 0.0]])
        raw = assemble_generator(a_bar, sigma_bar)
        np.testing.assert_allclose(raw.sum(axis=0), 0.0, atol=1e-14)
        self.assertAlmostEqual(raw[1, 0], 2.0 - 0.5 + 0.05, places=14)
        L = enforce_generator_validity(raw)
        off = ~np.eye(3, dtype=bool)
        self.assertTrue(np.all(L[off] >= 0.0))
        np.testing.assert_allclose(L.sum(axis=0), 0.0, atol=1e-14)


class TestMatrixExponential(TestML_BaseTestClass):

    def test_matches_reference_exponential(self):
        L = self._random_generator(3)
        np.testing.assert_allclose(expm_generator(L * 0.7), expm(L * 0.7), rtol=1e-10, atol=1e-12)

    def test_stochastic_and_semigroup_for_random_generators(self):
        for _ in range(200):
            K = int(self.rng.integers(2, 6))
            L = self._random_generator(K)
            s, t = self.rng.uniform(0.01, 5.0, size=2)
            P_s, P_t, P_st = expm_generator(L * s), expm_generator(L * t), expm_generator(L * (s + t))
            np.testing.assert_allclose(P_s.sum(axis=0), 1.0, atol=1e-12)
            self.assertTrue(np.all(P_s >= -1e-12))
            np.testing.assert_allclose(P_s @ P_t, P_st, atol=1e-9)
            self.assertLessEqual(spectral_stability(L)[0], 1e-9)

    def test_valid_after_clipping_raw_generator(self):
        raw = self.rng.normal(size=(4, 4))
        L = enforce_generator_validity(raw)
        for dt in (0.1, 1.0, 10.0):
            P = expm_generator(L * dt)
            np.testing.assert_allclose(P.sum(axis=0), 1.0, atol=1e-12)
            self.assertTrue(np.all(P >= -1e-12))

    def test_propagate_probabilities(self):
        L = self._random_generator(3)
        p = propagate_probabilities(L, np.array([1.0, 0.0, 0.0]), 0.5)
        self.assertAlmostEqual(p.sum(), 1.0, places=12)
        self.assertTrue(np.all(p >= 0.0))
        np.testing.assert_allclose(propagate_probabilities(L, np.array([0.2, 0.3, 0.5]), 0.0), [0.2, 0.3, 0.5])
        with self.assertRaises(InvalidIntervalError):
            propagate_probabilities(L, np.array([1.0, 0.0, 0.0]), -1.0)


class TestHittingTimes(TestML_BaseTestClass):

    def test_chain_mfpt(self):
        L = np.array([[-1.0, 0.0, 0.0],
                      [1.0, -2.0, 0.0],
                      [0.0, 2.0, 0.0]])
        times = mfpt(L, [2])
        self.assertAlmostEqual(times[0], 1.5, places=12)
        self.assertAlmostEqual(times[1], 0.5, places=12)

    def test_two_state_mfpt_is_inverse_rate(self):
        for a in (0.1, 0.7, 3.0):
            L = np.array([[-a, 0.4], [a, -0.4]])
            self.assertAlmostEqual(mfpt(L, [1])[0], 1.0 / a, places=12)

    def test_unreachable_hazard(self):
        L = np.array([[-1.0, 0.0, 0.0],
                      [1.0, 0.0, 0.0],
                      [0.0, 0.0, 0.0]])
        with self.assertRaises(UnreachableHazardError) as ctx:
            mfpt(L, [2])
        self.assertEqual(ctx.exception.modes, [0, 1])

    def test_hazard_set_must_be_proper(self):
        with self.assertRaises(ValueError):
            mfpt(self._random_generator(2), [0, 1])
        with self.assertRaises(ValueError):
            mfpt(self._random_generator(2), [])

    def test_mfpt_agrees_with_monte_carlo(self):
        for _ in range(5):
            K = int(self.rng.integers(3, 5))
            L = self._random_generator(K)
            hazard = [K - 1]
            times = mfpt(L, hazard)
            for start in range(K - 1):
                hits = sample_hitting_times(L, start, hazard, 20000, self.rng)
                se = hits.std() / np.sqrt(hits.shape[0])
                self.assertLess(abs(hits.mean() - times[start]), 4.0 * se)


class TestMaximumLikelihood(TestML_BaseTestClass):

    def test_closed_form_rate(self):
        N = np.array([[0.0, 2.0], [0.0, 0.0]])
        T = np.array([4.0, 1.0])
        L = mle_generator(N, T)
        self.assertEqual(L[1, 0], 0.5)
        self.assertEqual(L[0, 0], -0.5)
        grid = np.linspace(0.05, 2.0, 400)
        best = grid[np.argmax([log_likelihood(np.array([[-r, 0.0], [r, 0.0]]), N, T) for r in grid])]
        self.assertAlmostEqual(best, 0.5, delta=grid[1] - grid[0])

    def test_degenerate_dwell(self):
        with self.assertRaises(DegenerateDwellError):
            mle_generator(np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([0.0, 1.0]))

    def test_recovers_simulated_rates(self):
        L_true = np.array([[-1.2, 0.4, 0.6],
                           [0.5, -0.9, 0.9],
                           [0.7, 0.5, -1.5]])
        traj = simulate_ctmc(L_true, 0, 20000.0, self.rng)
        stats = transition_stats(traj)
        L_hat = mle_generator(stats.N, stats.T)
        off = ~np.eye(3, dtype=bool)
        rel = np.abs(L_hat[off] - L_true[off]) / L_true[off]
        self.assertLess(rel.max(), 0.1)
        ci = bootstrap_ci(traj, B=100, hazard_set=[2], seed=1)
        inside = (ci["L_lower"][off] <= L_true[off]) & (L_true[off] <= ci["L_upper"][off])
        self.assertGreaterEqual(int(inside.sum()), 4)
        self.assertTrue(np.all(ci["L_lower"][off] <= ci["L_hat"][off]))
        self.assertTrue(np.all(ci["L_hat"][off] <= ci["L_upper"][off]))
        true_times = mfpt(L_true, [2])
        for k in (0, 1):
            self.assertLess(ci["mfpt_lower"][k], ci["mfpt_upper"][k])
            self.assertLess(abs(ci["mfpt_lower"][k] - true_times[k]), 0.5 * true_times[k])

    def test_bootstrap_interval_coverage(self):
        L_true = np.array([[-1.0, 2.0],
                           [1.0, -2.0]])
        covered = 0
        for trial in range(100):
            traj = simulate_ctmc(L_true, trial % 2, 600.0, self.rng)
            ci = bootstrap_ci(traj, B=200, seed=trial)
            for l, k in ((1, 0), (0, 1)):
                covered += int(ci["L_lower"][l, k] <= L_true[l, k] <= ci["L_upper"][l, k])
        self.assertGreaterEqual(covered, 180)

    def test_bootstrap_needs_enough_replicates(self):
        traj = LabeledTrajectory(t=[0.0, 1.0, 2.0], modes=[0, 1, 0], K=2)
        with self.assertRaises(ValueError):
            bootstrap_ci(traj, B=50)


class TestCalibration(TestML_BaseTestClass):

    def test_calibration_error_of_zero_generator(self):
        err = calibration_error(np.zeros((3, 3)), 0.3, np.array([1.0, 0.0, 0.0]), np.array([0.5, 0.25, 0.25]))
        self.assertAlmostEqual(err, 1.0, places=14)

    def test_calibration_error_matches_direct_evaluation(self):
        L = self._random_generator(3)
        p = np.array([0.2, 0.5, 0.3])
        hist = np.array([0.3, 0.3, 0.4])
        expected = np.abs(expm(L * 0.4) @ p - hist).sum()
        self.assertAlmostEqual(calibration_error(L, 0.4, p, hist), expected, places=10)

    def test_one_step_calibration_of_constant_path(self):
        traj = LabeledTrajectory(t=np.arange(10.0), modes=np.zeros(10, dtype=int), K=2)
        self.assertEqual(one_step_calibration(traj, np.zeros((2, 2))), 0.0)

    def test_fit_generator(self):
        traj = simulate_ctmc(self._random_generator(3), 0, 500.0, self.rng)
        x = self.rng.normal(size=(len(traj), 2)) + traj.modes[:, None]
        traj = LabeledTrajectory(t=traj.t, modes=traj.modes, K=3, x=x)
        fit = fit_generator(traj)
        self.assertEqual(fit.method, "mle")
        np.testing.assert_allclose(fit.L.sum(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(fit.L_moment.sum(axis=0), 0.0, atol=1e-12)
        self.assertTrue(np.all(fit.L_moment[~np.eye(3, dtype=bool)] >= 0.0))
        self.assertGreaterEqual(fit.log_likelihood, log_likelihood(fit.L_moment, fit.stats.N, fit.stats.T))
        self.assertGreaterEqual(fit.calibration_error, 0.0)
        moment_only = fit_generator(traj, refine=False)
        self.assertEqual(moment_only.method, "moment")
        np.testing.assert_array_equal(moment_only.L, fit.L_moment)

    def test_restrict_to_observed(self):
        L = self._random_generator(3)
        N = np.array([[0.0, 3.0, 0.0],
                      [2.0, 0.0, 0.0],
                      [0.0, 0.0, 0.0]])
        R = restrict_to_observed(L, N)
        self.assertEqual((R[1, 0], R[0, 1]), (L[1, 0], L[0, 1]))
        for l, k in ((2, 0), (2, 1), (0, 2), (1, 2)):
            self.assertEqual(R[l, k], 0.0)
        np.testing.assert_allclose(R.sum(axis=0), 0.0, atol=1e-12)
        self.assertEqual(R[2, 2], 0.0)
        self.assertGreater(L[2, 0], 0.0)

    def test_fit_generator_on_observed_support(self):
        modes = np.tile(np.repeat([0, 1, 2], 4), 5)
        x = self.rng.normal(size=(modes.shape[0], 2)) + 3.0 * modes[:, None]
        traj = LabeledTrajectory(t=0.5 * np.arange(modes.shape[0]), modes=modes, K=3, x=x)
        unseen = ((2, 0), (0, 1), (1, 2))
        moment = fit_generator(traj, refine=False, observed_only=True)
        self.assertEqual(moment.method, "moment")
        for l, k in unseen:
            self.assertEqual(moment.L[l, k], 0.0)
        np.testing.assert_allclose(moment.L.sum(axis=0), 0.0, atol=1e-12)
        mle = fit_generator(traj, observed_only=True, keep_moment=False)
        self.assertEqual(mle.method, "mle")
        self.assertIsNone(mle.L_moment)
        for l, k in unseen:
            self.assertEqual(mle.L[l, k], 0.0)
        self.assertGreater(mle.L[1, 0], 0.0)
