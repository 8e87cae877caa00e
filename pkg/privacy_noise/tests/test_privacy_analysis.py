import dataclasses
import math

import numpy as np
from django.test import SimpleTestCase

from privacy_noise.densities import Interval, LaplaceDensity
from privacy_noise.exceptions import DeltaOutOfRange
from privacy_noise.mechanisms import laplace_dp
from privacy_noise.privacy_analysis import (
    check_eps_delta, density_log_ratio, entropy_compare, eps_delta_region, epsilon_dp_audit,
    fisher_compare, gaussian_min_theta, strength_factor,
)

UNIT = Interval(0.0, 1.0)


class EpsDeltaTests(SimpleTestCase):

    def test_boundary_value(self):
        certificate = check_eps_delta(3.0, UNIT, [[1.0]], 1.0, 0.1)
        self.assertAlmostEqual(certificate.binding_value, 2.5012, places=4)
        self.assertTrue(certificate.satisfied)
        self.assertFalse(check_eps_delta(2.0, UNIT, [[1.0]], 1.0, 0.1).satisfied)

    def test_half_delta(self):
        self.assertAlmostEqual(gaussian_min_theta(1.0, 2.0, 0.5), 0.5, places=12)

    def test_delta_out_of_range(self):
        with self.assertRaises(DeltaOutOfRange):
            check_eps_delta(1.0, UNIT, [[1.0]], 1.0, 0.6)

    def test_region_corners_and_monotonicity(self):
        region = eps_delta_region(1.0, UNIT, [[1.0]])
        self.assertTrue(region.satisfied_at(1.0, 0.5))
        self.assertFalse(region.satisfied_at(1e-3, 1e-3))
        # ε 或 δ 增大时不会从满足变为不满足
        self.assertTrue(np.all(np.diff(region.satisfied.astype(int), axis=0) >= 0))
        self.assertTrue(np.all(np.diff(region.satisfied.astype(int), axis=1) >= 0))

    def test_region_rows(self):
        region = eps_delta_region(1.0, UNIT, [[1.0]], eps_grid=[0.1, 1.0], delta_grid=[0.1, 0.6])
        rows = list(region.rows())
        self.assertEqual(len(rows), 4)
        self.assertEqual(rows[-1], (1.0, 0.6, False))


class ComparisonTests(SimpleTestCase):

    def test_entropy_values(self):
        result = entropy_compare(1.0)
        self.assertAlmostEqual(result.laplace_bits, 1.9427, places=4)
        self.assertAlmostEqual(result.gaussian_bits, 2.0471, places=4)
        self.assertTrue(result.gaussian_dominates)

    def test_entropy_gap_constant(self):
        gap = 0.5 * math.log2(math.pi / math.e)
        for theta in (0.01, 0.5, 1.0, math.e / 2, 100.0):
            with self.subTest(theta=theta):
                self.assertAlmostEqual(entropy_compare(theta).gap, gap, places=12)

    def test_fisher_pair(self):
        self.assertEqual(fisher_compare([[1.0]], 1.0), (2.0, 1.0))
        laplace, gaussian = fisher_compare([[0.5, 0.5]], 2.0)
        self.assertAlmostEqual(laplace / gaussian, 2.0, places=12)

    def test_fisher_quadrature(self):
        exact = fisher_compare([[1.0, 2.0]], 3.0)
        numeric = fisher_compare([[1.0, 2.0]], 3.0, quadrature=True)
        for a, b in zip(exact, numeric):
            self.assertAlmostEqual(b / a, 1.0, delta=1e-3)

    def test_strength_factor(self):
        self.assertAlmostEqual(strength_factor([[0.5, 0.5]], UNIT, 1.0), 1.8, places=9)
        self.assertAlmostEqual(strength_factor([[1.0]], UNIT, 1.0), 2.0, places=12)
        self.assertAlmostEqual(strength_factor([[0.5, 0.5]], UNIT, 1e12), 2.0, places=9)


class AuditTests(SimpleTestCase):

    def test_laplace_mechanism_passes(self):
        for epsilon in (0.1, 1.0, 3.0):
            mech = laplace_dp([[0.25, 0.5, 0.25]], UNIT, epsilon)
            with self.subTest(epsilon=epsilon):
                audit = epsilon_dp_audit(mech, UNIT, epsilon)
                self.assertTrue(audit)
                self.assertAlmostEqual(audit.sup_log_ratio, epsilon, delta=1e-6)

    def test_halved_scale_fails(self):
        mech = laplace_dp([[1.0]], UNIT, 1.0)
        noisier = dataclasses.replace(mech, noise=LaplaceDensity(mech.noise.scale / 2))
        audit = epsilon_dp_audit(noisier, UNIT, 1.0)
        self.assertFalse(audit.passed)
        self.assertAlmostEqual(audit.sup_log_ratio, 2.0, delta=1e-6)

    def test_same_database(self):
        ratio = density_log_ratio(LaplaceDensity(1.0), np.linspace(-5, 5, 11), 0.3, 0.3)
        np.testing.assert_allclose(ratio, 0.0)
