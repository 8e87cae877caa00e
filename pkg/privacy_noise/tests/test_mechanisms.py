import dataclasses
import math

import numpy as np
from django.test import SimpleTestCase

from privacy_noise.densities import CosSqDensity, GaussianDensity, Interval, LaplaceDensity, gaussian_weight
from privacy_noise.exceptions import (
    ConfigError, DimensionMismatch, DomainViolation, InvalidParameter, NotScalar, RankDeficient, ZeroQuery,
)
from privacy_noise.mechanisms import (
    IdentityQuery, LinearQuery, Rho, ScalarNonlinearQuery, Theta, VarianceQuery, WeightedAverageQuery,
    build_mechanism, compatible, laplace_dp, laplace_epsilon_for_quality, mechanism_report,
    optimal_bounded_identity, optimal_bounded_output_set, optimal_bounded_scalar, optimal_bounded_weighted,
    optimal_unbounded_linear, query_from_config, respond, sensitivity,
)

CORNER_Q = (2 * math.pi ** 2 - 3) / (6 * math.pi ** 2)


class QueryTests(SimpleTestCase):

    def test_average(self):
        q = WeightedAverageQuery.uniform(2)
        self.assertAlmostEqual(q.evaluate([0.2, 0.9])[0], 0.55)
        np.testing.assert_allclose(q.jacobian(None), [[0.5, 0.5]])

    def test_average_weights_sum_to_one(self):
        with self.assertRaises(InvalidParameter):
            WeightedAverageQuery([0.5, 0.6])

    def test_variance(self):
        q = VarianceQuery(3)
        self.assertEqual(q.evaluate([0.0, 0.0, 0.0])[0], 0.0)
        self.assertAlmostEqual(q.evaluate([1.0, 2.0, 3.0])[0], 1.0)
        np.testing.assert_allclose(q.jacobian([1.0, 2.0, 3.0]), [[-1.0, 0.0, 1.0]])

    def test_linear_requires_full_rank(self):
        with self.assertRaises(ZeroQuery):
            LinearQuery([[0.0, 0.0]])
        with self.assertRaises(RankDeficient):
            LinearQuery([[1.0, 1.0], [2.0, 2.0]])

    def test_dimension_checked(self):
        with self.assertRaises(DimensionMismatch):
            IdentityQuery(2).evaluate([1.0, 2.0, 3.0])

    def test_nonlinear_fisher_uses_gradient(self):
        q = ScalarNonlinearQuery(2, lambda x: x[0] * x[1], lambda x: [x[1], x[0]], name='product')
        mech = optimal_bounded_scalar(q, Interval(0, 1))
        report = mechanism_report(mech, x=[1.0, 2.0])
        self.assertAlmostEqual(report.fisher.trace / (5 * 4 * math.pi ** 2), 1.0, places=6)
        self.assertIsNone(report.fisher.trace_inverse)

    def test_vanishing_nonlinear_query_rejected(self):
        """恒为零的非线性查询没有可保护的信息"""
        q = ScalarNonlinearQuery(2, lambda x: 0.0, lambda x: [0.0, 0.0], name='zero')
        with self.assertRaises(InvalidParameter):
            optimal_bounded_scalar(q, Interval(0, 1))

    def test_nonlinear_query_zero_at_origin_accepted(self):
        q = ScalarNonlinearQuery(2, lambda x: x[0] ** 2, lambda x: [2 * x[0], 0.0], name='square')
        self.assertEqual(optimal_bounded_scalar(q, Interval(0, 1)).noise.kind, 'cos_sq')

    def test_from_config(self):
        q = query_from_config({'type': 'average'}, n=4)
        self.assertEqual(q.n, 4)
        self.assertEqual(query_from_config({'type': 'linear', 'matrix': [[1, 2]]}).m, 1)
        with self.assertRaises(InvalidParameter):
            query_from_config({'type': 'identity'})


class BoundedMechanismTests(SimpleTestCase):

    def test_identity_noise_family(self):
        self.assertIsInstance(optimal_bounded_identity(1, Interval(0, 1)).noise, CosSqDensity)
        mech = optimal_bounded_identity(3, Interval(0, 1))
        self.assertEqual(mech.noise.dim, 3)

    def test_corner_quality_and_crb(self):
        report = mechanism_report(optimal_bounded_identity(1, Interval(0, 1)), x=[3.0])
        self.assertAlmostEqual(report.quality, CORNER_Q, places=8)
        self.assertAlmostEqual(report.fisher.trace_inverse * 4 * math.pi ** 2, 1.0, places=6)

    def test_quality_to_crb_ratio_constant(self):
        ratios = []
        for length in (0.5, 1.0, 2.0):
            report = mechanism_report(optimal_bounded_identity(1, Interval(0, length)), x=[0.0])
            ratios.append(report.quality / report.fisher.trace_inverse)
        self.assertAlmostEqual(ratios[0], ratios[1], delta=1e-6 * ratios[1])
        self.assertAlmostEqual(ratios[2], ratios[1], delta=1e-6 * ratios[1])

    def test_scalar_noise_ignores_query(self):
        variance = optimal_bounded_scalar(VarianceQuery(3), Interval(-1, 1))
        average = optimal_bounded_scalar([[0.2, 0.8]], Interval(-1, 1))
        self.assertEqual(variance.noise.to_config(), average.noise.to_config())
        with self.assertRaises(NotScalar):
            optimal_bounded_scalar(IdentityQuery(2), Interval(0, 1))
        with self.assertRaises(ZeroQuery):
            optimal_bounded_scalar([[0.0, 0.0]], Interval(0, 1))

    def test_responses_stay_in_support(self):
        mech = optimal_bounded_scalar(WeightedAverageQuery.uniform(2), Interval(0, 1))
        rng = np.random.default_rng(23)
        for _ in range(200):
            value = respond(mech, [0.2, 0.9], rng).value[0]
            self.assertTrue(0.55 <= value <= 1.55)

    def test_variance_of_constant_database_is_noise(self):
        mech = optimal_bounded_scalar(VarianceQuery(3), Interval(0, 1))
        value = respond(mech, [0.0, 0.0, 0.0], np.random.default_rng(1)).value[0]
        self.assertTrue(0.0 < value < 1.0)

    def test_timestamps_increase(self):
        mech = optimal_bounded_identity(1, Interval(0, 1))
        rng = np.random.default_rng(2)
        first, second = respond(mech, [0.0], rng), respond(mech, [0.0], rng)
        self.assertLess(first.timestamp, second.timestamp)

    def test_weighted_domain_enforced(self):
        mech = optimal_bounded_weighted(Interval(0, 1), gaussian_weight())
        rng = np.random.default_rng(4)
        self.assertTrue(0.0 <= respond(mech, [2.0], rng).value[0] - 2.0 <= 1.0)
        with self.assertRaises(DomainViolation) as ctx:
            respond(mech, [5.0], rng)
        self.assertEqual(ctx.exception.context['index'], 0)

    def test_weighted_report_grid(self):
        report = mechanism_report(optimal_bounded_weighted(Interval(0, 1), gaussian_weight()), grid_points=5)
        self.assertEqual(len(report.grid), 5)
        self.assertEqual(report.grid[0]['x'], 0.0)

    def test_output_set(self):
        mech = optimal_bounded_output_set(WeightedAverageQuery.uniform(2), Interval(0, 1))
        rng = np.random.default_rng(6)
        values = [respond(mech, [0.1, 0.3], rng).value[0] for _ in range(200)]
        self.assertTrue(Interval(0, 1).contains(values))


class UnboundedMechanismTests(SimpleTestCase):

    def test_rho_scalar(self):
        mech = optimal_unbounded_linear([[1.0]], Rho(4.0))
        np.testing.assert_allclose(mech.noise.covariance, [[1.0]])

    def test_theta_sets_quality(self):
        c = [[1.0, 0.0, 1.0], [0.0, 2.0, 0.0]]
        mech = optimal_unbounded_linear(c, Theta(3.0))
        self.assertAlmostEqual(float(np.trace(mech.noise.covariance)), 3.0, places=12)
        self.assertIsInstance(mech.noise, GaussianDensity)

    def test_requires_linear_budget(self):
        with self.assertRaises(InvalidParameter):
            optimal_unbounded_linear([[1.0]], Interval(0, 1))


class LaplaceMechanismTests(SimpleTestCase):

    def test_scale(self):
        mech = laplace_dp([[0.5, 0.25]], Interval(0, 2), 0.5)
        self.assertIsInstance(mech.noise, LaplaceDensity)
        self.assertAlmostEqual(mech.noise.scale, 2.0)
        self.assertAlmostEqual(sensitivity([[0.5, 0.25]], Interval(0, 2)), 1.0)

    def test_epsilon_for_quality(self):
        eps = laplace_epsilon_for_quality([[1.0]], Interval(0, 1), 2.0)
        self.assertAlmostEqual(eps, 1.0)


class BuildMechanismTests(SimpleTestCase):

    def test_budget_selects_constructor(self):
        cases = [
            ({'query': {'type': 'identity', 'n': 2}, 'budget': {'kind': 'bounded', 'support': [0, 1]}}, 'product_cos_sq'),
            ({'query': {'type': 'average', 'n': 2}, 'budget': {'kind': 'bounded', 'support': [0, 1]}}, 'cos_sq'),
            ({'query': {'type': 'average', 'n': 2}, 'budget': {'kind': 'theta', 'theta': 1.0}}, 'gaussian'),
            ({'query': {'type': 'average', 'n': 2},
              'budget': {'kind': 'epsilon', 'epsilon': 1.0, 'entry_domain': [0, 1]}}, 'laplace'),
        ]
        for config, kind in cases:
            with self.subTest(kind=kind):
                self.assertEqual(build_mechanism(config).noise.kind, kind)

    def test_explicit_noise_overrides(self):
        mech = build_mechanism({
            'query': {'type': 'average', 'n': 2},
            'noise': {'kind': 'laplace', 'scale': 3.0},
            'budget': {'kind': 'theta', 'theta': 1.0},
        }, mechanism_id='custom')
        self.assertEqual(mech.mechanism_id, 'custom')
        self.assertEqual(mech.noise.scale, 3.0)

    def test_explicit_noise_dimension_must_match_query(self):
        """恒等查询 n=3 配标量 cos² 噪声应在构造时拒绝"""
        config = {
            'query': {'type': 'identity', 'n': 3},
            'noise': {'kind': 'cos_sq', 'support': [0, 1]},
            'budget': {'kind': 'bounded', 'support': [0, 1]},
        }
        with self.assertRaises(ConfigError) as ctx:
            build_mechanism(config)
        self.assertEqual(ctx.exception.context, {'noise_dim': 1, 'm': 3})

    def test_bounded_budget_rejects_unbounded_noise(self):
        for noise in ({'kind': 'gaussian', 'covariance': [[1.0]]}, {'kind': 'laplace', 'scale': 1.0}):
            for budget in ({'kind': 'bounded', 'support': [0, 1]}, {'kind': 'output_set', 'support': [0, 1]}):
                with self.subTest(noise=noise['kind'], budget=budget['kind']):
                    with self.assertRaises(ConfigError):
                        build_mechanism({'query': {'type': 'average', 'n': 2}, 'noise': noise, 'budget': budget})

    def test_bounded_budget_accepts_bounded_noise(self):
        mech = build_mechanism({
            'query': {'type': 'average', 'n': 2},
            'noise': {'kind': 'cos_sq', 'support': [-1, 1]},
            'budget': {'kind': 'bounded', 'support': [-1, 1]},
        })
        y = respond(mech, [0.2, 0.4], np.random.default_rng(0)).value
        self.assertTrue(-0.7 <= y[0] <= 1.3)

    def test_weighted_needs_scalar_identity(self):
        config = {'query': {'type': 'average', 'n': 2},
                  'budget': {'kind': 'bounded', 'support': [0, 1], 'weight': 'gaussian'}}
        with self.assertRaises(InvalidParameter):
            build_mechanism(config)

    def test_compatible(self):
        mech = build_mechanism({'query': {'type': 'average', 'n': 2},
                                'budget': {'kind': 'bounded', 'support': [0, 1]}})
        self.assertTrue(compatible(mech, WeightedAverageQuery.uniform(2)))
        self.assertFalse(compatible(mech, WeightedAverageQuery([0.2, 0.8])))
        self.assertFalse(compatible(mech, WeightedAverageQuery.uniform(3)))
        self.assertFalse(compatible(mech, IdentityQuery(2)))

    def test_mechanism_is_immutable(self):
        mech = laplace_dp([[1.0]], Interval(0, 1), 1.0)
        with self.assertRaises(dataclasses.FrozenInstanceError):
            mech.noise = LaplaceDensity(2.0)
