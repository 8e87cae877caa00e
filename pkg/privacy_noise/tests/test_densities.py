import math

import numpy as np
from django.test import SimpleTestCase
from scipy import stats

from privacy_noise import densities
from privacy_noise.densities import (
    CosSqDensity, GaussianDensity, Interval, LaplaceDensity, ProductCosSqDensity,
    density_from_config, exponential_weight, gaussian_weight, tilted_from_tilt, tilted_new,
)
from privacy_noise.exceptions import ConfigError, DimensionMismatch, InvalidParameter, NotScalar, Singular

COS_SQ_VARIANCE = (math.pi ** 2 - 6) / (12 * math.pi ** 2)


class IntervalTests(SimpleTestCase):

    def test_helpers(self):
        interval = Interval(-1, 3)
        self.assertEqual(interval.length, 4.0)
        self.assertEqual(interval.midpoint, 1.0)
        self.assertTrue(interval.contains([-1.0, 3.0]))
        self.assertFalse(interval.contains(3.1))

    def test_empty_rejected(self):
        with self.assertRaises(InvalidParameter):
            Interval(1.0, 1.0)


class CosSqTests(SimpleTestCase):

    def setUp(self):
        self.d = CosSqDensity(Interval(0.0, 1.0))

    def test_peak_and_boundary(self):
        self.assertAlmostEqual(self.d.pdf(0.5), 2.0, places=12)
        self.assertEqual(self.d.pdf(0.0), 0.0)
        self.assertEqual(self.d.pdf(1.0), 0.0)
        self.assertEqual(self.d.pdf(1.5), 0.0)

    def test_scaled_support(self):
        d = CosSqDensity(Interval(-1.0, 1.0))
        self.assertAlmostEqual(d.pdf(0.0), 1.0, places=12)

    def test_cdf(self):
        self.assertAlmostEqual(densities.cdf_1d(self.d, 0.5), 0.5, places=12)
        self.assertEqual(densities.cdf_1d(self.d, -1.0), 0.0)
        self.assertEqual(densities.cdf_1d(self.d, 2.0), 1.0)

    def test_moments_and_quality(self):
        mean, cov = densities.moments(self.d)
        self.assertAlmostEqual(mean[0], 0.5, places=12)
        self.assertAlmostEqual(cov[0, 0], COS_SQ_VARIANCE, places=12)
        expected_q = (2 * math.pi ** 2 - 3) / (6 * math.pi ** 2)
        self.assertAlmostEqual(densities.quality(self.d), expected_q, places=10)
        self.assertAlmostEqual(expected_q, 0.28267, places=5)

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatch):
            densities.pdf(self.d, [0.2, 0.3])

    def test_samples_follow_cdf(self):
        rng = np.random.default_rng(7)
        draws = densities.sample(self.d, rng, 20_000)[:, 0]
        self.assertTrue(self.d.support.contains(draws))
        result = stats.kstest(draws, self.d.cdf_1d)
        self.assertGreater(result.pvalue, 1e-3)

    def test_sample_moments(self):
        rng = np.random.default_rng(11)
        draws = densities.sample(self.d, rng, 100_000)[:, 0]
        self.assertAlmostEqual(draws.mean(), 0.5, delta=4 * math.sqrt(COS_SQ_VARIANCE / 100_000))
        self.assertAlmostEqual(draws.var(), COS_SQ_VARIANCE, delta=2e-3)

    def test_acceptance_rate(self):
        rate = densities.rejection_acceptance_rate(self.d, np.random.default_rng(3), 100_000)
        self.assertAlmostEqual(rate, 0.5, delta=0.01)

    def test_entropy_by_quadrature(self):
        # H = log₂L + 1 - log₂e
        self.assertAlmostEqual(densities.entropy_bits(self.d), 1 - math.log2(math.e), places=8)
        wide = CosSqDensity(Interval(0.0, 4.0))
        self.assertAlmostEqual(densities.entropy_bits(wide), 3 - math.log2(math.e), places=8)


class ProductCosSqTests(SimpleTestCase):

    def setUp(self):
        self.d = ProductCosSqDensity([Interval(0.0, 1.0), Interval(-1.0, 1.0)])

    def test_pdf_is_product(self):
        self.assertAlmostEqual(self.d.pdf([0.5, 0.0]), 2.0, places=12)
        self.assertEqual(self.d.pdf([0.0, 0.0]), 0.0)

    def test_scalar_only_operations(self):
        with self.assertRaises(NotScalar):
            densities.cdf_1d(self.d, 0.3)
        with self.assertRaises(NotScalar):
            densities.entropy_bits(self.d)

    def test_samples_in_box(self):
        draws = densities.sample(self.d, np.random.default_rng(5), 1000)
        self.assertEqual(draws.shape, (1000, 2))
        self.assertTrue(Interval(-1.0, 1.0).contains(draws[:, 1]))

    def test_quality_sums_coordinates(self):
        expected = COS_SQ_VARIANCE + 0.25 + 4 * COS_SQ_VARIANCE
        self.assertAlmostEqual(densities.quality(self.d), expected, places=12)


class TiltedCosSqTests(SimpleTestCase):

    def test_uniform_tilt_is_cos_sq(self):
        tilted = tilted_from_tilt(Interval(0.0, 1.0), 0.0)
        plain = CosSqDensity(Interval(0.0, 1.0))
        grid = np.linspace(0.01, 0.99, 33)
        np.testing.assert_allclose(tilted.pdf_1d(grid), plain.pdf_1d(grid), rtol=1e-9)

    def test_small_tilt_close_to_cos_sq(self):
        grid = np.linspace(0.0, 1.0, 201)
        tilted = tilted_from_tilt(Interval(0.0, 1.0), 1e-6).pdf_1d(grid)
        plain = CosSqDensity(Interval(0.0, 1.0)).pdf_1d(grid)
        self.assertLess(float(np.max(np.abs(tilted - plain))), 1e-4)

    def test_partition_matches_closed_form(self):
        for tilt in (-8.0, -1.0, 0.5, 3.0):
            d = tilted_from_tilt(Interval(0.0, 1.0), tilt)
            self.assertAlmostEqual(d.partition / d.closed_form_partition(), 1.0, places=9)

    def test_cdf_endpoints_and_monotone(self):
        d = tilted_new(Interval(0.0, 1.0), gaussian_weight(), 2.0)
        values = d.cdf_1d(np.linspace(0.0, 1.0, 101))
        self.assertAlmostEqual(values[0], 0.0, places=12)
        self.assertAlmostEqual(values[-1], 1.0, places=12)
        self.assertTrue(np.all(np.diff(values) >= -1e-12))

    def test_exponential_weight_independent_of_x(self):
        grid = np.linspace(0.0, 1.0, 51)
        first = tilted_new(Interval(0.0, 1.0), exponential_weight(), 0.0).pdf_1d(grid)
        later = tilted_new(Interval(0.0, 1.0), exponential_weight(), 3.7).pdf_1d(grid)
        np.testing.assert_allclose(first, later, atol=1e-10)

    def test_gaussian_weight_shifts_mass(self):
        # p′/p = -2x < 0：x 越大密度越偏向支撑右端
        means = [tilted_new(Interval(0.0, 1.0), gaussian_weight(), x).moments()[0][0] for x in (0.0, 1.0, 2.0)]
        self.assertAlmostEqual(means[0], 0.5, places=9)
        self.assertLess(means[0], means[1])
        self.assertLess(means[1], means[2])

    def test_samples_follow_cdf(self):
        d = tilted_new(Interval(0.0, 1.0), gaussian_weight(), 1.5)
        draws = densities.sample(d, np.random.default_rng(13), 20_000)[:, 0]
        self.assertGreater(stats.kstest(draws, d.cdf_1d).pvalue, 1e-3)

    def test_config_round_trip(self):
        d = tilted_new(Interval(0.0, 1.0), gaussian_weight(), 1.0)
        again = density_from_config(d.to_config())
        self.assertAlmostEqual(again.tilt, -2.0)
        self.assertAlmostEqual(again.pdf(0.3), d.pdf(0.3), places=12)


class GaussianTests(SimpleTestCase):

    def test_pdf_peak(self):
        d = GaussianDensity([[4.0]])
        self.assertAlmostEqual(d.pdf(0.0), 1 / math.sqrt(2 * math.pi * 4.0), places=12)

    def test_entropy(self):
        self.assertAlmostEqual(GaussianDensity([[1.0]]).entropy_bits(), 2.0471, places=4)

    def test_samples_follow_cdf(self):
        d = GaussianDensity([[2.0]])
        draws = densities.sample(d, np.random.default_rng(23), 20_000)[:, 0]
        self.assertGreater(stats.kstest(draws, d.cdf_1d).pvalue, 1e-3)

    def test_correlated_samples(self):
        cov = np.array([[2.0, 0.6], [0.6, 1.0]])
        draws = densities.sample(GaussianDensity(cov), np.random.default_rng(17), 200_000)
        np.testing.assert_allclose(np.cov(draws.T), cov, atol=0.03)

    def test_singular_covariance_rejected(self):
        with self.assertRaises(Singular):
            GaussianDensity([[1.0, 1.0], [1.0, 1.0]])


class LaplaceTests(SimpleTestCase):

    def setUp(self):
        self.d = LaplaceDensity(0.5)

    def test_pdf_cdf(self):
        self.assertAlmostEqual(self.d.pdf(0.0), 1.0, places=12)
        self.assertAlmostEqual(self.d.cdf_1d(0.0), 0.5, places=12)
        self.assertAlmostEqual(self.d.cdf_1d(-0.5), 0.5 * math.exp(-1), places=12)

    def test_entropy_closed_form_matches_quadrature(self):
        numeric = densities.NoiseDensity.entropy_bits(self.d)
        self.assertAlmostEqual(numeric, self.d.entropy_bits(), places=6)

    def test_samples_follow_cdf(self):
        draws = densities.sample(self.d, np.random.default_rng(19), 20_000)[:, 0]
        self.assertGreater(stats.kstest(draws, self.d.cdf_1d).pvalue, 1e-3)

    def test_scale_must_be_positive(self):
        with self.assertRaises(InvalidParameter):
            LaplaceDensity(0.0)


class DensityConfigTests(SimpleTestCase):

    def test_each_kind(self):
        configs = [
            {'kind': 'cos_sq', 'support': [0, 1]},
            {'kind': 'product_cos_sq', 'support': [0, 1], 'dim': 3},
            {'kind': 'tilted_cos_sq', 'support': [0, 1], 'tilt': -1.0, 'x': 2.0},
            {'kind': 'gaussian', 'covariance': [[1.0, 0.0], [0.0, 2.0]]},
            {'kind': 'laplace', 'scale': 2.0},
        ]
        dims = [1, 3, 1, 2, 1]
        for config, dim in zip(configs, dims):
            with self.subTest(kind=config['kind']):
                d = density_from_config(config)
                self.assertEqual(d.kind, config['kind'])
                self.assertEqual(d.dim, dim)

    def test_invalid_config(self):
        with self.assertRaises(ConfigError):
            density_from_config({'kind': 'laplace'})
