#!/usr/bin/env python3
"""
Tests for the laminate construction of recovery fields
"""

import unittest
import os
import sys

import numpy as np

# Add the parent directory to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ribbon.energy import f_hat
from ribbon.errors import SolverError, UnsupportedCaseError, ValidationError
from ribbon.frames import SkewField, solve_frame
from ribbon.geometry import build_reference
from ribbon.numerics import bump, loglog_slope
from ribbon.quadform import RelaxedDensity, SymField2, det_vector, moving_basis
from ribbon.relaxation import (build_recovery, correction_basis, endpoint_correct, generator_from_profile,
                               pc_approx, pc_approx_sign, pin_level, profile_from_generator, split, weak_residuals)


class TestSplit(unittest.TestCase):
    """Test zero-determinant splits along kernel directions."""

    def setUp(self):
        self.rd = RelaxedDensity.isotropic()
        self.identity = np.array([1.0, 1.0, 0.0])

    def test_split_along_shear(self):
        """I = (1/2)(1,1,2) + (1/2)(1,1,-2) with both ends rank one."""
        laminate = split(self.rd, None, None, self.identity, [0.0, 0.0, 1.0])

        np.testing.assert_allclose(laminate.m1, [1.0, 1.0, 2.0], atol=1e-12)
        np.testing.assert_allclose(laminate.m2, [1.0, 1.0, -2.0], atol=1e-12)
        self.assertAlmostEqual(laminate.lam, 0.5)
        self.assertAlmostEqual(laminate.energy, 4.0)
        np.testing.assert_allclose(laminate.lam * laminate.m1 + (1.0 - laminate.lam) * laminate.m2, self.identity,
                                   atol=1e-12)
        self.assertAlmostEqual(float(det_vector(laminate.m1)), 0.0, delta=1e-12)
        self.assertAlmostEqual(laminate.lam * self.rd.q(laminate.m1) + (1.0 - laminate.lam) * self.rd.q(laminate.m2),
                               laminate.energy)

    def test_split_losing_pinning(self):
        """Along (1,-1,0)/sqrt2 one end of the split is e2 x e2, which has no A13 component."""
        s = 1.0 / np.sqrt(2.0)
        with self.assertRaises(ValidationError):
            split(self.rd, None, None, self.identity, [s, -s, 0.0])

    def test_split_needs_opposite_sign(self):
        s = 1.0 / np.sqrt(2.0)
        with self.assertRaises(ValidationError):
            split(self.rd, None, None, self.identity, [s, s, 0.0])

    def test_split_of_rank_one(self):
        with self.assertRaises(ValidationError):
            split(self.rd, None, None, [1.0, 0.0, 0.0], [0.0, 0.0, 1.0])

    def test_split_below_pinning_level(self):
        """diag(0.005, 1) along (1,-1,0)/sqrt2 leaves a phase with no A13; along e3 both keep 0.005."""
        m = np.array([0.005, 1.0, 0.0])
        s = 1.0 / np.sqrt(2.0)
        with self.assertRaises(ValidationError):
            split(self.rd, None, None, m, [s, -s, 0.0], pin=0.0025)
        with self.assertRaises(ValidationError):
            split(self.rd, None, None, m, [0.0, 0.0, 1.0], pin=0.01)

        laminate = split(self.rd, None, None, m, [0.0, 0.0, 1.0], pin=0.0025)
        self.assertAlmostEqual(laminate.pinning, 0.005)
        self.assertAlmostEqual(laminate.energy, 1.010025)

    def test_random_splits(self):
        """Averaging, zero determinant and the energy identity on random vectors and two materials."""
        rng = np.random.default_rng(11)
        materials = (self.rd, RelaxedDensity.from_engineering(2.0, 1.0, 0.5, 0.3))
        for trial in range(100):
            rd = materials[trial % 2]
            m = rng.normal(size=3)
            family = '+' if det_vector(m) > 0 else '-'
            valid = 0
            for v in rd.kernel(family):
                try:
                    laminate = split(rd, None, None, m, v)
                except ValidationError:
                    continue
                valid += 1
                with self.subTest(trial=trial, v=v.tolist()):
                    self.assertTrue(0.0 < laminate.lam < 1.0)
                    np.testing.assert_allclose(laminate.lam * laminate.m1 + (1.0 - laminate.lam) * laminate.m2, m,
                                               atol=1e-10)
                    scale = max(1.0, float(m @ m))
                    self.assertAlmostEqual(float(det_vector(laminate.m1)) / scale, 0.0, delta=1e-10)
                    self.assertAlmostEqual(float(det_vector(laminate.m2)) / scale, 0.0, delta=1e-10)
                    mixed = laminate.lam * rd.q(laminate.m1) + (1.0 - laminate.lam) * rd.q(laminate.m2)
                    self.assertAlmostEqual(float(mixed), float(rd.q_star_vec(m)), delta=1e-9 * scale)
            self.assertGreater(valid, 0, f"no valid split for m = {m}")

    def test_pin_level_shrinks_with_n(self):
        a13 = np.linspace(0.0, 2.0, 9)
        self.assertAlmostEqual(pin_level(a13, 16) / pin_level(a13, 64), 2.0)
        self.assertAlmostEqual(pin_level(a13, 16), 0.01 * 2.0 / 4.0)
        self.assertEqual(pin_level(np.full(5, 0.5), 1024), 0.5)


class TestPiecewiseConstant(unittest.TestCase):
    """Test cellwise approximations."""

    def test_pinned_approximation(self):
        cells = pc_approx_sign(lambda t: -0.5 - t, 0.25, 8)

        self.assertEqual(cells.num_cells, 8)
        self.assertEqual(cells.values[0], 0.0)
        self.assertEqual(cells.values[-1], 0.0)
        self.assertTrue(np.all(cells.values[1:-1] <= -0.5))
        self.assertAlmostEqual(float(cells(0.3)), -0.5 - 0.3125)

    def test_pinning_level_violated(self):
        with self.assertRaises(ValidationError):
            pc_approx_sign(lambda t: t - 0.5, 0.1, 8)
        with self.assertRaises(ValidationError):
            pc_approx_sign(lambda t: np.ones_like(t), 0.1, 2)

    def test_midpoint_values(self):
        cells = pc_approx(lambda t: t, 4)
        np.testing.assert_allclose(cells.values, [0.0, 0.375, 0.625, 0.0])

    def test_profile_round_trip(self):
        lam = np.array([0.5, 2.0, 3.0])
        theta = np.array([-1.0, 0.0, 1.2])
        again = profile_from_generator(*generator_from_profile(lam, theta))
        np.testing.assert_allclose(again[0], lam)
        np.testing.assert_allclose(again[1], theta)


class TestEndpointCorrection(unittest.TestCase):
    """Test the shooting correction of the frame endpoint."""

    def setUp(self):
        self.ref = build_reference({'type': 'flat', 'length': 1.0}, num_samples=129)
        self.t = self.ref.t

    def test_reaches_nearby_target(self):
        A = SkewField.from_reference(self.ref, a13=1.0)
        target_field = A.with_entries(1.0 + 0.1 * bump((self.t - 0.5) / 0.2), 0.05 * np.sin(np.pi * self.t))
        target_path = solve_frame(target_field)

        fix = endpoint_correct(A, (target_path.end, target_path.gamma), tol=1e-9)

        self.assertLessEqual(fix.residual, 1e-9)
        np.testing.assert_allclose(fix.path.end, target_path.end, atol=1e-8)
        np.testing.assert_allclose(fix.path.gamma, target_path.gamma, atol=1e-8)
        outside = (self.t < 0.25) | (self.t > 0.75)
        np.testing.assert_allclose(fix.skew.a13[outside], 1.0)

    def test_profile_mode(self):
        A = SkewField.from_reference(self.ref, a13=1.0, a23=0.2)
        lam, theta = profile_from_generator(A.a13, A.a23)
        shifted = solve_frame(A.with_entries(A.a13 * 1.02, A.a23))

        fix = endpoint_correct(A, (shifted.end, shifted.gamma), mode='profile', profile=(lam, theta), tol=1e-9)
        self.assertEqual(fix.mode, 'profile')
        self.assertLessEqual(fix.residual, 1e-9)

    def test_degenerate_window(self):
        A = SkewField.from_reference(self.ref)
        target = solve_frame(SkewField.from_reference(self.ref, a13=1.0))
        with self.assertRaises(SolverError):
            endpoint_correct(A, (target.end, target.gamma))

    def test_invalid_window(self):
        with self.assertRaises(ValidationError):
            correction_basis(1.0, window=(0.5, 1.5))


class TestBuildRecovery(unittest.TestCase):
    """Test rank-one recovery fields for constant targets."""

    def setUp(self):
        self.rd = RelaxedDensity.isotropic()
        self.ref = build_reference({'type': 'flat', 'length': 1.0}, num_samples=1025)
        self.basis = moving_basis(self.rd, self.ref)
        self.M = SymField2.constant(self.ref, np.eye(2))

    def recover(self, n, **kwargs):
        return build_recovery(self.rd, self.ref, self.basis, self.M, None, n, **kwargs)

    def test_fields_are_rank_one(self):
        recovery = self.recover(8)

        np.testing.assert_allclose(det_vector(recovery.M_n.m), 0.0, atol=1e-10)
        self.assertEqual(len(recovery.splits), 6)
        self.assertGreater(recovery.ctilde, 0.0)
        self.assertLessEqual(recovery.correction.residual, 1e-8)
        self.assertEqual(recovery.report()['n'], 8)

    def test_max_det_falls_back_to_shear(self):
        """(1,-1,0)/sqrt2 would leave a phase with A13 = 0, so the identity is split along e3."""
        recovery = self.recover(8)
        for laminate in recovery.splits:
            np.testing.assert_allclose(laminate.v, [0.0, 0.0, 1.0], atol=1e-12)
        report = recovery.report()
        self.assertGreaterEqual(report['split_pinning'], 0.5 * report['pin_level'])

    def test_convergence_rates(self):
        """Energy gap and weak moments decay like 1/n."""
        ns = np.array([16, 32, 64, 128])
        gaps, moments = [], []
        for n in ns:
            recovery = self.recover(int(n))
            gaps.append(abs(f_hat(self.rd, self.ref, recovery.field) - 4.0))
            moments.append(max(weak_residuals(recovery.field, self.M, self.ref.length).values()))

        self.assertGreaterEqual(-loglog_slope(ns, gaps), 0.9)
        self.assertGreaterEqual(-loglog_slope(ns, moments), 0.9)

    def test_diagonal_target_keeps_pinning(self):
        """diag(1/4, 1): every split keeps A13 = 1/4 and the energy gap shrinks with n."""
        target = SymField2.constant(self.ref, np.diag([0.25, 1.0]))
        exact = 0.0625 + 1.0 + 2.0 * 0.25
        gaps = []
        for n in (32, 64):
            recovery = build_recovery(self.rd, self.ref, self.basis, target, None, n)
            for laminate in recovery.splits:
                np.testing.assert_allclose(laminate.v, [0.0, 0.0, 1.0], atol=1e-12)
                self.assertAlmostEqual(laminate.pinning, 0.25)
            gaps.append(abs(f_hat(self.rd, self.ref, recovery.field) - exact))

        self.assertLess(gaps[0], 0.5)
        self.assertLess(gaps[1], gaps[0])

    def test_correction_scales_with_defect(self):
        """The endpoint correction is proportional to the endpoint defect it removes."""
        ref = build_reference({'type': 'flat', 'length': 1.0}, num_samples=129)
        A = SkewField.from_reference(ref, a13=1.0)
        norms = []
        for delta in (1e-3, 1e-2):
            target = solve_frame(A.with_entries(1.0 + delta * bump((ref.t - 0.5) / 0.2), A.a23))
            norms.append(endpoint_correct(A, (target.end, target.gamma), tol=1e-10).norm / delta)

        self.assertGreater(norms[0], 0.0)
        self.assertAlmostEqual(norms[1] / norms[0], 1.0, delta=0.25)

    def test_weak_convergence(self):
        """Mean deviation from the target shrinks as the oscillation index grows."""
        coarse = weak_residuals(self.recover(8).field, self.M, self.ref.length)
        fine = weak_residuals(self.recover(32).field, self.M, self.ref.length)
        self.assertLess(fine['1'], coarse['1'])
        self.assertLess(max(fine.values()), max(coarse.values()))

    def test_pinning_rule_prefers_shear(self):
        """The pinning rule splits the identity along e3 instead of (1,-1,0)/sqrt2."""
        recovery = self.recover(8, direction_rule='pinning')
        for laminate in recovery.splits:
            np.testing.assert_allclose(laminate.v, [0.0, 0.0, 1.0], atol=1e-12)
            np.testing.assert_allclose(laminate.m1, [1.0, 1.0, 2.0], atol=1e-12)

    def test_blended_profile(self):
        recovery = self.recover(8, blend=1.0)
        self.assertEqual(recovery.correction.mode, 'profile')
        self.assertFalse(np.all(recovery.field.pure_mask(self.ref.t)))

    def test_zero_target(self):
        zero = SymField2.constant(self.ref, np.zeros((2, 2)))
        recovery = build_recovery(self.rd, self.ref, self.basis, zero, None, 8)
        self.assertEqual(recovery.ctilde, 0.0)
        np.testing.assert_allclose(recovery.M_n.m, 0.0)

    def test_degenerate_target_unsupported(self):
        target = SymField2.constant(self.ref, np.diag([0.0, 1.0]))
        with self.assertRaises(UnsupportedCaseError):
            build_recovery(self.rd, self.ref, self.basis, target, None, 8)

    def test_invalid_arguments(self):
        with self.assertRaises(ValidationError):
            self.recover(3)
        with self.assertRaises(ValidationError):
            self.recover(8, direction_rule='random')
        with self.assertRaises(ValidationError):
            self.recover(8, correction='none')

    def test_weak_residuals_of_target(self):
        residuals = weak_residuals(self.M, self.M, self.ref.length)
        self.assertEqual(set(residuals), {'1', 't', 't2', 'sin'})
        self.assertTrue(all(value == 0.0 for value in residuals.values()))


if __name__ == '__main__':
    unittest.main()
