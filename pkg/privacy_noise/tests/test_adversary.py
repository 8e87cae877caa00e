import math

import numpy as np
from django.test import SimpleTestCase

from privacy_noise.adversary import (
    ESTIMATORS, IdentityEstimator, LeastSquaresEstimator, McResult, SmoothingEstimator, ls_estimate,
    mc_crb_check, projection_residual, unbiased_identity_estimate, worst_case_entry_check,
)
from privacy_noise.densities import Interval
from privacy_noise.dynamic import traffic_model
from privacy_noise.exceptions import DimensionMismatch, InvalidParameter
from privacy_noise.fisher import fisher_matrix
from privacy_noise.mechanisms import (
    Theta, WeightedAverageQuery, optimal_bounded_identity, optimal_unbounded_linear,
)

TRIALS = 100_000


class EstimatorTests(SimpleTestCase):

    def test_unbiased_identity(self):
        np.testing.assert_allclose(unbiased_identity_estimate([3.7], [0.5]), [3.2])
        np.testing.assert_allclose(unbiased_identity_estimate([1.0, 2.0], [0.0, 0.0]), [1.0, 2.0])
        with self.assertRaises(DimensionMismatch):
            unbiased_identity_estimate([1.0, 2.0], [0.5])

    def test_least_squares(self):
        np.testing.assert_allclose(ls_estimate([[0.5, 0.5]], [3.0]), [3.0, 3.0])
        np.testing.assert_allclose(ls_estimate(np.eye(2), [1.0, -1.0]), [1.0, -1.0])

    def test_least_squares_bias(self):
        x = np.array([1.0, 0.0])
        expected = ls_estimate([[0.5, 0.5]], [0.5])
        np.testing.assert_allclose(expected - x, [-0.5, 0.5])
        self.assertAlmostEqual(projection_residual([[0.5, 0.5]], x), 0.5)

    def test_registry(self):
        self.assertIs(ESTIMATORS['smoothing'], SmoothingEstimator)


class MonteCarloTests(SimpleTestCase):

    def test_identity_cos_sq(self):
        mech = optimal_bounded_identity(1, Interval(0.0, 1.0))
        result = mc_crb_check(mech, IdentityEstimator(), [3.0], TRIALS, np.random.default_rng(101))
        self.assertTrue(result.passed)
        self.assertAlmostEqual(result.bound, 1 / (4 * math.pi ** 2), places=6)
        self.assertAlmostEqual(result.mse, 0.03267, delta=5 * result.stderr)
        self.assertLessEqual(result.bias_norm, 3 * result.bias_stderr + 1e-12)

    def test_identity_worst_case_entry(self):
        mech = optimal_bounded_identity(3, Interval(0.0, 1.0))
        x = [0.2, 0.4, 0.6]
        result = mc_crb_check(mech, IdentityEstimator(), x, 20_000, np.random.default_rng(5))
        report = fisher_matrix(mech.noise, np.eye(3))
        self.assertTrue(worst_case_entry_check(result, report))
        self.assertEqual(len(result.coordinate_mse), 3)

    def test_averaging_gaussian_least_squares(self):
        mech = optimal_unbounded_linear(WeightedAverageQuery.uniform(2), Theta(1.0))
        result = mc_crb_check(mech, LeastSquaresEstimator(), [1.0, 0.0], TRIALS, np.random.default_rng(202))
        self.assertAlmostEqual(result.bound, 2.5, places=10)
        self.assertAlmostEqual(result.mse, 2.5, delta=5 * result.stderr)

    def test_traffic_smoothing(self):
        model = traffic_model(3, 1.0)
        result = mc_crb_check(model, SmoothingEstimator(), [5.0, 1.0], TRIALS, np.random.default_rng(303))
        self.assertAlmostEqual(result.bound, 2.3214, delta=1e-3)
        self.assertAlmostEqual(result.mse, result.bound, delta=5 * result.stderr)
        self.assertLessEqual(result.bias_norm, 3 * result.bias_stderr + 1e-12)

    def test_too_few_trials(self):
        mech = optimal_bounded_identity(1, Interval(0.0, 1.0))
        with self.assertRaises(InvalidParameter):
            mc_crb_check(mech, IdentityEstimator(), [0.0], 100, np.random.default_rng(0))

    def test_identity_estimator_needs_identity_query(self):
        mech = optimal_unbounded_linear(WeightedAverageQuery.uniform(2), Theta(1.0))
        with self.assertRaises(InvalidParameter):
            mc_crb_check(mech, IdentityEstimator(), [0.0, 0.0], TRIALS, np.random.default_rng(0))

    def test_unknown_mechanism_type(self):
        with self.assertRaises(InvalidParameter):
            mc_crb_check(object(), IdentityEstimator(), [0.0], TRIALS, np.random.default_rng(0))

    def test_row(self):
        result = McResult('m', 'identity', 10, 1.0, 0.1, 0.0, 0.1, 0.5, True)
        self.assertEqual(result.to_row(), ['m', 'identity', 10, 1.0, 0.1, 0.5, True])
