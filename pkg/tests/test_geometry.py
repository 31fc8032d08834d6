#!/usr/bin/env python3
"""
Tests for the reference configuration and strip charts
"""

import unittest
import os
import sys

import numpy as np

# Add the parent directory to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ribbon.errors import GeometryError, ValidationError
from ribbon.numerics import derivative, piecewise_derivative, segment_bounds
from ribbon.geometry import (SAMPLE_COLUMNS, build_reference, curvature_consistency, dual_directors,
                             reference_samples_table, strip_chart)


class TestBuildReference(unittest.TestCase):
    """Test sampling of the planar midline."""

    def test_flat_rectangle(self):
        """Flat strip has zero curvature and identity directors."""
        ref = build_reference({'type': 'flat', 'length': 1.0}, num_samples=33)

        self.assertEqual(ref.num_samples, 33)
        self.assertTrue(ref.is_flat)
        np.testing.assert_allclose(ref.k, 0.0)
        np.testing.assert_allclose(ref.D, np.broadcast_to(np.eye(2), (33, 2, 2)))
        np.testing.assert_allclose(ref.detD, 1.0)
        np.testing.assert_allclose(ref.B[:, 0], ref.t)
        np.testing.assert_allclose(ref.N, np.broadcast_to([0.0, 1.0], (33, 2)))

    def test_circular_arc_curvature(self):
        """Arc of radius 2 has curvature 1/2 everywhere."""
        ref = build_reference({'type': 'arc', 'length': 1.0, 'parameters': {'radius': 2.0}}, num_samples=65)

        np.testing.assert_allclose(ref.k, 0.5, atol=1e-14)
        np.testing.assert_allclose(np.linalg.norm(ref.tangent, axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(np.sum(ref.tangent * ref.N, axis=1), 0.0, atol=1e-14)

    def test_spline_is_arc_length(self):
        """Spline midline is re-parametrised to unit speed."""
        spec = {'type': 'spline', 'parameters': {'points': [[0.0, 0.0], [0.5, 0.1], [1.0, 0.0]]}}
        ref = build_reference(spec, num_samples=257)

        self.assertLess(np.max(np.abs(np.linalg.norm(ref.tangent, axis=1) - 1.0)), 1e-10)
        speed = np.linalg.norm(derivative(ref.B, ref.h), axis=1)
        self.assertLess(np.max(np.abs(speed - 1.0)), 1e-3)
        np.testing.assert_allclose(ref.B[0], [0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(ref.tangent[0], [1.0, 0.0], atol=1e-10)
        self.assertGreater(ref.length, 1.0)

    def test_duality_on_samples(self):
        """D^a . D_b = delta_ab at every sample of a curved reference."""
        ref = build_reference({'type': 'arc', 'length': 1.0, 'parameters': {'radius': 2.0}}, num_samples=33)
        products = np.einsum('nai,nib->nab', ref.D_dual, ref.D)
        np.testing.assert_allclose(products, np.broadcast_to(np.eye(2), products.shape), atol=1e-10)

    def test_curvature_consistency(self):
        """Analytic curvature agrees with finite differences of the midline."""
        ref = build_reference({'type': 'arc', 'length': 1.0, 'parameters': {'radius': 2.0}}, num_samples=257)
        self.assertLess(curvature_consistency(ref), 1e-6)

    def test_unknown_curve_type(self):
        """Unknown kinds are rejected as validation errors."""
        with self.assertRaises(ValidationError):
            build_reference({'type': 'helix', 'length': 1.0})

    def test_closed_arc_rejected(self):
        """An arc longer than the full circle is not injective."""
        with self.assertRaises(GeometryError) as context:
            build_reference({'type': 'arc', 'length': 7.0, 'parameters': {'radius': 1.0}})
        self.assertIsNotNone(context.exception.location)

    def test_grid_size_checked(self):
        """Grids must have 2^k + 1 samples and at least 33."""
        with self.assertRaises(ValidationError):
            build_reference({'type': 'flat', 'length': 1.0}, num_samples=100)
        with self.assertRaises(ValidationError):
            build_reference({'type': 'flat', 'length': 1.0}, num_samples=17)

    def test_samples_table(self):
        """Export table carries the documented header."""
        ref = build_reference({'type': 'flat', 'length': 1.0}, num_samples=33)
        table = reference_samples_table(ref)

        self.assertEqual(list(table.columns), SAMPLE_COLUMNS)
        self.assertEqual(len(table), 33)


class TestDualDirectors(unittest.TestCase):
    """Test the dual director computation."""

    def test_identity(self):
        d1, d2 = dual_directors(np.eye(2))
        np.testing.assert_allclose(d1, [1.0, 0.0])
        np.testing.assert_allclose(d2, [0.0, 1.0])

    def test_diagonal(self):
        d1, d2 = dual_directors(np.diag([1.0, 2.0]))
        np.testing.assert_allclose(d1, [1.0, 0.0])
        np.testing.assert_allclose(d2, [0.0, 0.5])

    def test_shear(self):
        """Columns D_1 = (1, 0), D_2 = (1, 1) give D^1 = (1, -1), D^2 = (0, 1)."""
        D = np.array([[1.0, 1.0], [0.0, 1.0]])
        d1, d2 = dual_directors(D)
        np.testing.assert_allclose(d1, [1.0, -1.0])
        np.testing.assert_allclose(d2, [0.0, 1.0])
        np.testing.assert_allclose([d1 @ D[:, 0], d1 @ D[:, 1], d2 @ D[:, 1]], [1.0, 0.0, 1.0])

    def test_singular_rejected(self):
        with self.assertRaises(ValidationError):
            dual_directors(np.array([[1.0, 1.0], [1.0, 1.0]]))


class TestStripChart(unittest.TestCase):
    """Test the scaled strip charts."""

    def test_flat_scaling(self):
        ref = build_reference({'type': 'flat', 'length': 1.0}, num_samples=33)
        strip = strip_chart(ref, 0.1)

        np.testing.assert_allclose(strip.chi_eps(0.3, 0.5), [0.3, 0.05])
        np.testing.assert_allclose(strip.D_eps(0.3, 0.5), np.eye(2))

    def test_arc_jacobian(self):
        """det D_eps = 1 - eps x2 k on the arc of radius 2."""
        ref = build_reference({'type': 'arc', 'length': 1.0, 'parameters': {'radius': 2.0}}, num_samples=33)
        strip = strip_chart(ref, 0.1)

        np.testing.assert_allclose(strip.det_D_eps(0.4, 0.5), 0.975)
        np.testing.assert_allclose(strip.det_D_eps(0.4, -0.5), 1.025)
        np.testing.assert_allclose(np.linalg.det(strip.D_eps(0.4, 0.5)), 0.975)

    def test_chart_converges_to_directors(self):
        ref = build_reference({'type': 'arc', 'length': 1.0, 'parameters': {'radius': 2.0}}, num_samples=33)
        x1 = np.linspace(0.0, 1.0, 9)
        gaps = [np.max(np.abs(strip_chart(ref, eps).D_eps(x1, np.full_like(x1, 0.5)) - ref.basis_at(x1)))
                for eps in (0.2, 0.1, 0.05)]
        self.assertTrue(gaps[0] > gaps[1] > gaps[2])

    def test_width_beyond_tube_rejected(self):
        ref = build_reference({'type': 'arc', 'length': 1.0, 'parameters': {'radius': 2.0}}, num_samples=33)
        with self.assertRaises(GeometryError):
            strip_chart(ref, 5.0)

    def test_non_positive_width_rejected(self):
        ref = build_reference({'type': 'flat', 'length': 1.0}, num_samples=33)
        with self.assertRaises(ValidationError):
            strip_chart(ref, 0.0)


class TestPiecewiseDifferences(unittest.TestCase):
    """Test differences taken separately between breakpoints."""

    def setUp(self):
        self.t = np.linspace(0.0, 1.0, 65)
        self.h = self.t[1] - self.t[0]

    def test_node_on_break_opens_next_piece(self):
        bounds = segment_bounds(self.t, [0.5])
        self.assertEqual(bounds, [(0, 32), (32, 65)])

    def test_short_pieces_merge_left(self):
        bounds = segment_bounds(self.t, [0.5, 0.5 + 2.0 * self.h, 1.0])
        self.assertEqual(bounds, [(0, 32), (32, 65)])
        self.assertEqual(segment_bounds(self.t, None), [(0, 65)])

    def test_step_has_no_spike(self):
        values = np.where(self.t < 0.5, np.sin(self.t), 1.0 + np.cos(self.t))
        expected = np.where(self.t < 0.5, np.cos(self.t), -np.sin(self.t))

        piecewise = piecewise_derivative(values, self.h, segment_bounds(self.t, [0.5]))
        np.testing.assert_allclose(piecewise, expected, atol=1e-6)
        self.assertGreater(np.max(np.abs(derivative(values, self.h) - expected)), 1.0)

        second = piecewise_derivative(values, self.h, segment_bounds(self.t, [0.5]), order=2)
        np.testing.assert_allclose(second, np.where(self.t < 0.5, -np.sin(self.t), -np.cos(self.t)), atol=1e-4)


if __name__ == '__main__':
    unittest.main()
