import math

import numpy as np
from django.test import SimpleTestCase

from privacy_noise.dynamic import (
    TRAFFIC_A, TRAFFIC_C, build_psi, check_gramian, dynamic_mechanism, gramian_sum, loglog_slope,
    simulate, smoothing_estimate, stack_responses, traffic_model, traffic_report, traffic_scaling,
)
from privacy_noise.exceptions import DimensionMismatch, HorizonTooShort, InvalidParameter, SingularGramian
from privacy_noise.matcore import psd_sqrt


class ObservabilityTests(SimpleTestCase):

    def test_psi_blocks(self):
        psi = build_psi(TRAFFIC_A, TRAFFIC_C, 3)
        np.testing.assert_allclose(psi, [[1, 0], [1, 1], [1, 2], [1, 3]])

    def test_gramian_two_ways(self):
        a = np.array([[0.9, 0.2], [-0.1, 0.8]])
        c = np.array([[1.0, 0.5]])
        psi = build_psi(a, c, 6)
        np.testing.assert_allclose(psi.T @ psi, gramian_sum(a, c, 6), atol=1e-12)

    def test_unobservable_pair(self):
        ok, smallest = check_gramian(TRAFFIC_A, [[0.0, 1.0]], 5)
        self.assertFalse(ok)
        self.assertAlmostEqual(smallest, 0.0, places=10)

    def test_short_horizon_singular(self):
        with self.assertRaises(SingularGramian):
            dynamic_mechanism(TRAFFIC_A, TRAFFIC_C, 0, 1.0)

    def test_bad_shapes(self):
        with self.assertRaises(DimensionMismatch):
            build_psi(TRAFFIC_A, [[1.0, 0.0, 0.0]], 2)
        with self.assertRaises(InvalidParameter):
            dynamic_mechanism(TRAFFIC_A, TRAFFIC_C, 3, -1.0)


class MechanismTests(SimpleTestCase):

    def setUp(self):
        self.model = traffic_model(3, 1.0)

    def test_noise_covariance(self):
        expected = 2.0 * np.linalg.inv(psd_sqrt(self.model.gramian))
        np.testing.assert_allclose(self.model.sigma_z, expected, atol=1e-10)

    def test_simulate_without_noise_is_exact(self):
        responses = simulate(self.model, [10.0, 2.0], np.random.default_rng(0), z=[0.0, 0.0])
        self.assertEqual(len(responses), 4)
        y = stack_responses(responses)
        np.testing.assert_allclose(y, [10.0, 12.0, 14.0, 16.0])
        np.testing.assert_allclose(smoothing_estimate(self.model, y), [10.0, 2.0], atol=1e-12)

    def test_noise_is_correlated_in_time(self):
        cov = self.model.trajectory_covariance()
        self.assertEqual(cov.shape, (4, 4))
        self.assertGreater(abs(cov[0, 3]), 1e-6)
        self.assertAlmostEqual(float(np.trace(cov)), self.model.quality(), places=10)

    def test_fisher_inverse_is_sigma(self):
        np.testing.assert_allclose(np.linalg.inv(self.model.fisher()), self.model.sigma_z, atol=1e-10)

    def test_simulate_dimension(self):
        with self.assertRaises(DimensionMismatch):
            simulate(self.model, [1.0], np.random.default_rng(0))


class TrafficTests(SimpleTestCase):

    def test_horizon_three(self):
        report = traffic_report(3, 1.0)
        self.assertEqual(report.delta, 549.0)
        self.assertAlmostEqual(report.q_closed, 10.381, delta=1e-3)
        self.assertAlmostEqual(report.mse_closed, 2.3216, delta=5e-4)
        self.assertTrue(report.consistent(1e-6))

    def test_sweep_consistent(self):
        for horizon in (4, 10, 33, 64):
            for rho in (0.5, 1.0, 4.0):
                with self.subTest(horizon=horizon, rho=rho):
                    self.assertTrue(traffic_report(horizon, rho).consistent(1e-6))

    def test_short_horizon(self):
        with self.assertRaises(HorizonTooShort):
            traffic_report(2, 1.0)

    def test_scaling(self):
        slopes = traffic_scaling(64, 1.0)
        self.assertAlmostEqual(slopes['q_slope'], 1.5, delta=0.05)
        self.assertAlmostEqual(slopes['mse_slope'], -0.5, delta=0.05)

    def test_rho_scaling(self):
        self.assertAlmostEqual(traffic_report(5, 4.0).q_closed * 2, traffic_report(5, 1.0).q_closed, places=10)

    def test_loglog_slope(self):
        xs = np.arange(1, 20)
        self.assertAlmostEqual(loglog_slope(xs, 3 * xs ** 2.5), 2.5, places=10)
        self.assertAlmostEqual(loglog_slope(xs, np.full(19, math.e)), 0.0, places=10)
