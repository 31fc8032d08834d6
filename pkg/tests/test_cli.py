#!/usr/bin/env python3
"""
Tests for the ribbon_gamma command line
"""

import unittest
import io
import json
import os
import sys
import shutil
import tempfile
from contextlib import redirect_stdout

import pandas as pd

# Add the parent directory to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ribbon_gamma import EXIT_OK, EXIT_VALIDATION, run


class TestCommandLine(unittest.TestCase):
    """Test subcommands end to end through run()"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def invoke(self, *argv):
        buffer = io.StringIO()
        with redirect_stdout(buffer):
            code = run(list(argv) + ['--output-dir', self.test_dir])
        text = buffer.getvalue()
        return code, (json.loads(text) if text.strip() else None)

    def output(self, filename):
        return os.path.join(self.test_dir, filename)

    def test_alpha(self):
        code, report = self.invoke('alpha', '--isotropic')

        self.assertEqual(code, EXIT_OK)
        self.assertAlmostEqual(report['alpha_plus'], 2.0)
        self.assertAlmostEqual(report['alpha_minus'], 2.0)
        self.assertEqual(len(report['Vplus']), 2)
        self.assertEqual(len(report['Vminus']), 1)
        self.assertTrue(os.path.exists(self.output('alpha.json')))

    def test_qbar(self):
        code, report = self.invoke('qbar', '--mu', '1', '--tau', '2', '--grid', '33')

        self.assertEqual(code, EXIT_OK)
        self.assertAlmostEqual(report['value'], 16.0, places=8)
        self.assertAlmostEqual(report['gamma_star'], 1.0, places=8)

    def test_qbar_helical_point(self):
        code, report = self.invoke('qbar', '--mu', '1', '--tau', '1', '--isotropic', '--flat', '--grid', '33')

        self.assertEqual(code, EXIT_OK)
        self.assertAlmostEqual(report['value'], 4.0, places=8)
        self.assertAlmostEqual(report['gamma_star'], 1.0, places=8)

    def test_frame(self):
        """Constant (1, 1/2) has density (1 + 1/4)^2."""
        code, report = self.invoke('frame', '--mu', '1', '--tau', '0.5', '--grid', '33')

        self.assertEqual(code, EXIT_OK)
        self.assertAlmostEqual(report['J'], 1.5625, places=8)
        self.assertEqual(len(pd.read_csv(self.output('frame.csv'))), 33)
        self.assertTrue(os.path.exists(self.output('trace.csv')))

    def test_surface(self):
        code, report = self.invoke('surface', '--mu', '1', '--grid', '129', '--eps', '0.1', '--out', 'strip.vtk')

        self.assertEqual(code, EXIT_OK)
        self.assertAlmostEqual(report['J_eps'], 1.0, places=8)
        self.assertTrue(os.path.exists(self.output('strip.vtk')))

    def test_gamma_check_preset(self):
        code, report = self.invoke('gamma-check', '--preset', 'cylinder', '--grid', '129')

        self.assertEqual(code, EXIT_OK)
        self.assertAlmostEqual(report['J_limit'], 1.0, places=8)
        self.assertTrue(os.path.exists(self.output('gamma_check.csv')))

    def test_self_test(self):
        buffer = io.StringIO()
        with redirect_stdout(buffer):
            code = run(['--self-test'])

        self.assertEqual(code, EXIT_OK)
        self.assertTrue(json.loads(buffer.getvalue())['passed'])

    def test_invalid_inputs(self):
        self.assertEqual(self.invoke('alpha', '--grid', '100')[0], EXIT_VALIDATION)
        self.assertEqual(self.invoke('gamma-check', '--eps', '0.1,0.2', '--grid', '33')[0], EXIT_VALIDATION)
        self.assertEqual(self.invoke('minimize', '--grid', '33')[0], EXIT_VALIDATION)
        self.assertEqual(self.invoke('qbar', '--pi0', '1,2')[0], EXIT_VALIDATION)
        self.assertEqual(self.invoke('twist')[0], EXIT_VALIDATION)

    def test_no_command(self):
        self.assertEqual(run([]), EXIT_VALIDATION)


if __name__ == '__main__':
    unittest.main()
