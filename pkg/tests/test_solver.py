#!/usr/bin/env python3
"""
Tests for the constrained minimisation of the limit functional
"""

import unittest
import os
import sys

import numpy as np

# Add the parent directory to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ribbon.errors import SolverError, ValidationError
from ribbon.frames import BoundaryData, boundary_from_curve, check_A0_membership, framed_curve_from
from ribbon.geometry import build_reference
from ribbon.limit_energy import FrustrationField
from ribbon.quadform import RelaxedDensity
from ribbon.solver import (DesignVector, PenaltySolver, SolveOptions, initial_design, minimize, moebius_preset,
                           objective, parameter_scan)


class TestObjective(unittest.TestCase):
    """Test the augmented Lagrangian and its gradient."""

    def setUp(self):
        self.rd = RelaxedDensity.isotropic()
        self.ref = build_reference({'type': 'flat', 'length': 1.0}, num_samples=33)
        t = self.ref.t
        self.dv = DesignVector(mu=1.0 + 0.2 * np.sin(3.0 * t), tau=0.3 * np.cos(2.0 * t), penalty=10.0,
                               multipliers=np.linspace(-0.5, 0.5, 12))

    def test_adjoint_matches_differences(self):
        bd = BoundaryData.moebius()
        adjoint = objective(self.rd, self.ref, None, self.dv, bd, mode='adjoint')
        numeric = objective(self.rd, self.ref, None, self.dv, bd, mode='fd')

        self.assertAlmostEqual(adjoint.value, numeric.value)
        np.testing.assert_allclose(adjoint.gradient, numeric.gradient, rtol=1e-5, atol=1e-6)

    def test_feasible_zero_design(self):
        result = objective(self.rd, self.ref, None, DesignVector.zeros(self.ref), BoundaryData.identity(self.ref))
        self.assertAlmostEqual(result.value, 0.0, places=12)
        self.assertLess(result.residual, 1e-12)
        np.testing.assert_allclose(result.gradient, 0.0, atol=1e-10)

    def test_sawtooth_costs_more_than_constant(self):
        """Alternating nodes with the same interval averages realise the same frame but cost more."""
        arc = framed_curve_from(0.5, 0.0, self.ref)
        bd = boundary_from_curve(arc, self.ref)
        n = self.ref.num_samples
        flat = DesignVector(mu=np.full(n, 0.5), tau=np.zeros(n), penalty=10.0, multipliers=np.zeros(12))
        saw = DesignVector(mu=0.5 + 0.3 * (-1.0) ** np.arange(n), tau=np.zeros(n), penalty=10.0,
                           multipliers=np.zeros(12))

        constant = objective(self.rd, self.ref, None, flat, bd)
        alternating = objective(self.rd, self.ref, None, saw, bd)
        self.assertAlmostEqual(constant.J, 0.25, places=12)
        self.assertAlmostEqual(alternating.residual, constant.residual, places=10)
        self.assertGreater(alternating.J, constant.J + 0.05)

    def test_unknown_mode(self):
        with self.assertRaises(ValidationError):
            objective(self.rd, self.ref, None, self.dv, BoundaryData.moebius(), mode='exact')


class TestPenaltySolver(unittest.TestCase):
    """Test convergence and failure reporting of the solver."""

    def setUp(self):
        self.rd = RelaxedDensity.isotropic()
        self.ref = build_reference({'type': 'flat', 'length': 1.0}, num_samples=33)

    def test_trivial_data(self):
        result = minimize(self.rd, self.ref, None, BoundaryData.identity(self.ref))
        self.assertTrue(result.converged)
        self.assertAlmostEqual(result.J, 0.0, places=10)
        self.assertEqual(result.seed, 'zero')

    def test_recovers_clamped_arc(self):
        """End data of the arc mu = 1/2 bring back the arc itself, with J = 1/4."""
        arc = framed_curve_from(0.5, 0.0, self.ref)
        bd = boundary_from_curve(arc, self.ref)
        options = SolveOptions(stages=6, gtol=1e-4, ctol=1e-5)
        result = PenaltySolver(self.rd, self.ref, None, bd, options).solve()

        self.assertTrue(result.converged)
        self.assertAlmostEqual(result.J, parameter_scan(self.rd, self.ref, None, [0.5])[0], delta=1e-3)
        self.assertGreater(result.J, 0.25 - 1e-4)
        self.assertLess(np.max(np.abs(result.design.mu - 0.5)), 1e-2)
        self.assertLess(np.max(np.abs(result.design.tau)), 1e-2)
        self.assertTrue(result.is_descent)
        report = check_A0_membership(result.framed_curve, self.ref, bd, tol=1e-4)
        self.assertTrue(report.passed, report.to_dict())

    def test_stage_reuses_last_evaluation(self):
        arc = framed_curve_from(0.5, 0.0, self.ref)
        options = SolveOptions(stages=1)
        result = PenaltySolver(self.rd, self.ref, None, boundary_from_curve(arc, self.ref), options).solve()

        stage = result.trace[0]
        self.assertLessEqual(stage['evaluations'], stage['nfev'] + 1)
        self.assertEqual(len(stage['values']), stage['iterations'] + 1)

    def test_stalled_solve(self):
        options = SolveOptions(stages=1, max_inner=1)
        solver = PenaltySolver(self.rd, self.ref, None, moebius_preset(self.ref), options)
        with self.assertRaises(SolverError) as context:
            solver.solve()
        self.assertGreater(context.exception.best_residual, 1e-6)

    def test_invalid_options(self):
        with self.assertRaises(ValidationError):
            SolveOptions(seeds=('spiral',)).validate()
        with self.assertRaises(ValidationError):
            SolveOptions(growth=1.0).validate()

    def test_boundary_validated(self):
        with self.assertRaises(ValidationError):
            PenaltySolver(self.rd, self.ref, None, BoundaryData(y_bar=[3.0, 0.0, 0.0], R_bar=np.eye(3)))


class TestDesigns(unittest.TestCase):
    """Test starting points and the one-parameter scan."""

    def setUp(self):
        self.ref = build_reference({'type': 'flat', 'length': 1.0}, num_samples=33)

    def test_named_starts(self):
        moebius = initial_design(self.ref, 'moebius')
        np.testing.assert_allclose(moebius.tau, np.pi)
        self.assertEqual(initial_design(self.ref, 'zero').as_array().shape, (66,))
        first = initial_design(self.ref, 'random', np.random.default_rng(5))
        second = initial_design(self.ref, 'random', np.random.default_rng(5))
        np.testing.assert_allclose(first.mu, second.mu)
        with self.assertRaises(ValidationError):
            initial_design(self.ref, 'spiral')

    def test_array_round_trip(self):
        dv = DesignVector(mu=np.arange(3.0), tau=-np.arange(3.0))
        again = DesignVector.from_array(dv.as_array())
        np.testing.assert_allclose(again.mu, dv.mu)
        np.testing.assert_allclose(again.tau, dv.tau)

    def test_parameter_scan(self):
        """J(mu) = mu^2 along the untwisted family."""
        values = parameter_scan(RelaxedDensity.isotropic(), self.ref, FrustrationField.zero(), [0.0, 0.5, 1.0, 2.0])
        np.testing.assert_allclose(values, [0.0, 0.25, 1.0, 4.0], atol=1e-12)


if __name__ == '__main__':
    unittest.main()
