import numpy as np
from testML_BaseTestClass import TestML_BaseTestClass

from costate_fusion.config import DescentConfig, MpcConfig
from costate_fusion.descent_sim import reference_descent_rate
from costate_fusion.measurement_model import eval_jacobian
from costate_fusion.mpc import brute_force_mpc, rollout, run_mpc_demo, solve_mpc

X0 = np.array([100.0, -50.0, 500.0, -2.0, 1.0, -20.0])
LAM = np.array([0.1, -0.2, 0.05])


class TestRollout(TestML_BaseTestClass):

    def test_single_step(self):
        states = rollout(X0, [3.0], LAM[None, :], 1.0, 1.62, lateral=np.array([0.5, 0.0]))
        self.assertEqual(states.shape, (2, 6))
        corr = eval_jacobian(X0).T @ LAM
        np.testing.assert_allclose(states[1, :3], X0[:3] + X0[3:] + corr[:3])
        np.testing.assert_allclose(states[1, 3:], X0[3:] + [0.5, 0.0, 3.0 - 1.62] + corr[3:])


class TestSolveMpc(TestML_BaseTestClass):

    def setUp(self):
        super().setUp()
        self.descent = DescentConfig()
        # slow chain so the default risk bound holds over the horizon
        self.L = np.array([[-0.2, 0.1, 0.05],
                           [0.15, -0.2, 0.05],
                           [0.05, 0.1, -0.1]])

    def test_closed_form_single_step(self):
        cfg = MpcConfig(horizon=1, dt=1.0, q_velocity=1.0, q_altitude=0.0, r_control=0.1, gamma=0.0, rho=0.0,
                        u_min=None, u_max=None, iterations=200)
        result = solve_mpc(X0, np.array([1.0, 0.0, 0.0]), self.L, LAM, cfg, hazard_set=(), descent=self.descent)
        corr = eval_jacobian(X0).T @ LAM
        g, dt = self.descent.gravity, cfg.dt
        b = X0[5] - g * dt + corr[5] * dt
        h1 = X0[2] + X0[5] * dt + corr[2] * dt
        v_ref = reference_descent_rate(h1, self.descent)
        expected = (cfg.q_velocity * dt * (v_ref - b) + cfg.r_control * g) / (cfg.q_velocity * dt ** 2 + cfg.r_control)
        self.assertFalse(result.infeasible)
        self.assertAlmostEqual(result.controls[0], expected, delta=1e-5)

    def test_zero_costate_makes_penalty_inactive(self):
        p = np.array([0.6, 0.3, 0.1])
        base = solve_mpc(X0, p, self.L, np.zeros(3), MpcConfig(horizon=3, gamma=0.0), [2], self.descent)
        penalized = solve_mpc(X0, p, self.L, np.zeros(3), MpcConfig(horizon=3, gamma=5.0), [2], self.descent)
        np.testing.assert_array_equal(base.controls, penalized.controls)
        self.assertEqual(base.cost, penalized.cost)

    def test_cost_history_never_increases(self):
        result = solve_mpc(X0, np.array([0.6, 0.3, 0.1]), self.L, LAM, MpcConfig(horizon=5), [2], self.descent)
        self.assertTrue(np.all(np.diff(result.cost_history) <= 1e-12))
        self.assertGreaterEqual(result.iterations, 1)
        self.assertEqual(result.states.shape, (6, 6))
        self.assertEqual(result.probabilities.shape, (6, 3))
        self.assertTrue(np.all((result.controls >= 0.0) & (result.controls <= 5.0)))

    def test_matches_grid_search(self):
        cfg = MpcConfig(horizon=3)
        p = np.array([0.7, 0.2, 0.1])
        result = solve_mpc(X0, p, self.L, LAM, cfg, [2], self.descent)
        _, grid_cost = brute_force_mpc(X0, p, self.L, LAM, cfg, levels=np.linspace(0.0, 5.0, 5), hazard_set=[2],
                                       descent=self.descent)
        self.assertLessEqual(result.cost, grid_cost * 1.05 + 1e-9)

    def test_risk_violation_falls_back_to_braking(self):
        cfg = MpcConfig(horizon=4, u_max=4.0)
        result = solve_mpc(X0, np.array([0.0, 1.0]), np.zeros((2, 2)), LAM, cfg, [1], self.descent)
        self.assertTrue(result.infeasible)
        np.testing.assert_array_equal(result.controls, np.full(4, 4.0))
        self.assertEqual(result.risk[0], 1.0)
        self.assertIsNone(result.terminal_mfpt)
        unbounded = solve_mpc(X0, np.array([0.0, 1.0]), np.zeros((2, 2)), LAM, MpcConfig(horizon=2, u_max=None), [1],
                              self.descent)
        np.testing.assert_array_equal(unbounded.controls, np.full(2, self.descent.max_thrust_accel))

    def test_mfpt_weight(self):
        p = np.array([0.8, 0.15, 0.05])
        results = [solve_mpc(X0, p, self.L, LAM, MpcConfig(horizon=3, rho=rho), [2], self.descent)
                   for rho in (0.0, 1.0, 10.0)]
        costs = [r.cost for r in results]
        self.assertTrue(costs[0] < costs[1] < costs[2])
        self.assertIsNotNone(results[0].terminal_mfpt)
        self.assertEqual(len({r.terminal_mfpt for r in results}), 1)
        np.testing.assert_allclose(results[0].controls, results[2].controls, atol=1e-6)

    def test_risk_metric_must_be_psd(self):
        cfg = MpcConfig(horizon=2, risk_metric=[[1.0, 0.0], [0.0, -1.0]])
        with self.assertRaises(ValueError):
            solve_mpc(X0, np.array([0.5, 0.5]), np.zeros((2, 2)), LAM, cfg, [1], self.descent)

    def test_probabilities_must_be_on_simplex(self):
        with self.assertRaises(ValueError):
            solve_mpc(X0, np.array([0.5, 0.6, 0.0]), self.L, LAM, MpcConfig(horizon=2), [2], self.descent)


class TestMpcDemo(TestML_BaseTestClass):

    def test_closed_loop_demo(self):
        frame, summary = run_mpc_demo(self._small_config())
        self.assertGreater(len(frame), 0)
        self.assertEqual(frame["source"].iloc[0], "guidance")
        self.assertGreaterEqual(summary["solves"], 1)
        self.assertTrue(set(frame["source"]).issubset({"guidance", "mpc", "mpc_fallback"}))
        self.assertLessEqual(summary["infeasible_solves"], summary["solves"])
        self.assertEqual(summary["config_echo"]["mpc"]["horizon"], 3)
