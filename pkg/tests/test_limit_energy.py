#!/usr/bin/env python3
"""
Tests for the limit density and the limit functional
"""

import unittest
import os
import sys

import numpy as np
import pandas as pd

# Add the parent directory to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ribbon.errors import ValidationError
from ribbon.frames import framed_curve_from
from ribbon.geometry import build_reference
from ribbon.limit_energy import (BRANCH_BOUNDARY, BRANCH_NEGATIVE, TRACE_COLUMNS, FrustrationField, limit_functional,
                                 qbar, qbar_arrays, qbar_grid_scan, sadowsky_density)
from ribbon.quadform import ISOTROPIC_K, RelaxedDensity


class TestQbar(unittest.TestCase):
    """Test the exact minimisation over gamma."""

    def setUp(self):
        self.rd = RelaxedDensity.isotropic()
        self.ref = build_reference({'type': 'flat', 'length': 1.0}, num_samples=33)
        self.zero = FrustrationField.zero()

    def test_pure_bending(self):
        value = qbar(self.rd, self.ref, self.zero, 0.5, 1.0, 0.0)
        self.assertAlmostEqual(value.value, 1.0, delta=1e-12)
        self.assertAlmostEqual(value.gamma_star, 0.0, delta=1e-12)

    def test_bending_and_twist(self):
        value = qbar(self.rd, self.ref, self.zero, 0.5, 1.0, 1.0)
        self.assertAlmostEqual(value.value, 4.0, delta=1e-12)
        self.assertAlmostEqual(value.gamma_star, 1.0, delta=1e-12)
        self.assertEqual(value.branch, BRANCH_BOUNDARY)

    def test_twist_dominated(self):
        """|mu| < |tau| lands on the corrected branch 4 tau^2."""
        value = qbar(self.rd, self.ref, self.zero, 0.5, 1.0, 2.0)
        self.assertAlmostEqual(value.value, 16.0, delta=1e-12)
        self.assertAlmostEqual(value.gamma_star, 1.0, delta=1e-12)
        self.assertEqual(value.branch, BRANCH_NEGATIVE)

    def test_point_outside_interval(self):
        with self.assertRaises(ValidationError):
            qbar(self.rd, self.ref, self.zero, 1.5, 1.0, 0.0)

    def test_sadowsky_branches(self):
        """Closed form on a 50 x 50 grid, cross-checked by a gamma scan."""
        mu, tau = np.meshgrid(np.linspace(-2.0, 2.0, 50), np.linspace(-2.0, 2.0, 50), indexing='ij')
        values, _, _ = qbar_arrays(self.rd, np.eye(2), np.zeros(3), mu, tau)
        np.testing.assert_allclose(values, sadowsky_density(mu, tau), rtol=1e-8, atol=1e-8)

        gammas = np.linspace(-10.0, 10.0, 20001)
        for i, j in ((3, 7), (20, 41), (49, 0), (25, 25)):
            scanned = qbar_grid_scan(self.rd, np.eye(2), np.zeros(3), mu[i, j], tau[i, j], gammas)
            self.assertGreaterEqual(scanned, values[i, j] - 1e-10)
            self.assertLess(scanned - values[i, j], 1e-2)

    def test_scan_refinement(self):
        """The scan oracle approaches the exact value from above as the step shrinks."""
        exact = qbar(self.rd, self.ref, self.zero, 0.0, 0.7, 0.3).value
        gaps = []
        for num in (101, 201, 401):
            gammas = np.linspace(-3.0, 3.0, num) + 0.0123
            gaps.append(qbar_grid_scan(self.rd, np.eye(2), np.zeros(3), 0.7, 0.3, gammas) - exact)
        self.assertTrue(all(g >= -1e-12 for g in gaps))
        self.assertLessEqual(gaps[2], gaps[0])

    def test_scaling(self):
        """K -> s K scales the density by s."""
        scaled = RelaxedDensity.from_matrix(3.0 * ISOTROPIC_K)
        base = qbar(self.rd, self.ref, self.zero, 0.2, 0.8, 0.5).value
        self.assertAlmostEqual(qbar(scaled, self.ref, self.zero, 0.2, 0.8, 0.5).value, 3.0 * base, places=10)

    def test_frustration_matched(self):
        """Pi0 = e1 x e1 is realised exactly by mu = 1, tau = 0."""
        frustration = FrustrationField.constant([[1.0, 0.0], [0.0, 0.0]])
        value = qbar(self.rd, self.ref, frustration, 0.3, 1.0, 0.0)
        self.assertAlmostEqual(value.value, 0.0, delta=1e-12)
        self.assertAlmostEqual(value.gamma_star, 0.0, delta=1e-12)


class TestLimitFunctional(unittest.TestCase):
    """Test quadrature of the density along framed curves."""

    def setUp(self):
        self.rd = RelaxedDensity.isotropic()
        self.ref = build_reference({'type': 'flat', 'length': 1.0}, num_samples=65)
        self.ones = np.ones(self.ref.num_samples)
        self.zeros = np.zeros(self.ref.num_samples)

    def test_straight_curve(self):
        fc = framed_curve_from(self.zeros, self.zeros, self.ref)
        self.assertEqual(limit_functional(self.rd, self.ref, FrustrationField.zero(), fc).value, 0.0)

    def test_helical_frame(self):
        fc = framed_curve_from(self.ones, self.ones, self.ref)
        result = limit_functional(self.rd, self.ref, FrustrationField.zero(), fc)

        self.assertAlmostEqual(result.value, 4.0, delta=1e-10)
        self.assertEqual(list(result.trace.columns), TRACE_COLUMNS)
        np.testing.assert_allclose(result.trace['gamma_star'], 1.0, atol=1e-12)

    def test_frustrated_bending(self):
        fc = framed_curve_from(self.ones, self.zeros, self.ref)
        frustration = FrustrationField.constant([[1.0, 0.0], [0.0, 0.0]])
        self.assertAlmostEqual(limit_functional(self.rd, self.ref, frustration, fc).value, 0.0, delta=1e-12)

    def test_grid_mismatch(self):
        coarse = build_reference({'type': 'flat', 'length': 1.0}, num_samples=33)
        fc = framed_curve_from(np.ones(33), np.zeros(33), coarse)
        with self.assertRaises(ValidationError):
            limit_functional(self.rd, self.ref, FrustrationField.zero(), fc)


class TestFrustrationField(unittest.TestCase):
    """Test frustration inputs."""

    def test_from_table_interpolates(self):
        table = pd.DataFrame({'t': [0.0, 1.0], 'M11': [0.0, 2.0], 'M12': [0.0, 1.0], 'M22': [1.0, 1.0]})
        field = FrustrationField.from_table(table)
        np.testing.assert_allclose(field.matrix_at(0.5), [[1.0, 0.5], [0.5, 1.0]])

    def test_from_table_rejects_bad_grid(self):
        table = pd.DataFrame({'t': [0.0, 0.0], 'M11': [0.0, 2.0], 'M12': [0.0, 1.0], 'M22': [1.0, 1.0]})
        with self.assertRaises(ValidationError):
            FrustrationField.from_table(table)

    def test_strip_family_converges(self):
        """A family Pi0 + eps x2 I approaches Pi0 in mean square."""
        def family(x1, x2, eps):
            return np.broadcast_to(np.eye(2), np.shape(x1) + (2, 2)) * (1.0 + eps * np.asarray(x2))[..., None, None]

        field = FrustrationField.from_function(lambda t: np.broadcast_to(np.eye(2), np.shape(t) + (2, 2)),
                                               family=family, num_samples=33)
        deviations = [field.strip_deviation(eps, 1.0, num_samples=33) for eps in (0.4, 0.2, 0.1)]
        self.assertFalse(field.is_zero)
        self.assertTrue(deviations[0] > deviations[1] > deviations[2])
        self.assertTrue(FrustrationField.zero().is_zero)


if __name__ == '__main__':
    unittest.main()
