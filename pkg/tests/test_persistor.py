#!/usr/bin/env python3
"""
Tests for result persistence, run configuration and input loaders
"""

import unittest
import json
import os
import sys
import shutil
import tempfile
from unittest.mock import patch

import meshio
import numpy as np
import pandas as pd

# Add the parent directory to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from ribbon.errors import ValidationError
from ribbon.geometry import build_reference
from utils.loaders import (load_boundary, load_frustration, load_material, material_from_dict, parse_list,
                           parse_matrix)
from utils.result_persistor import ResultPersistor, to_json
from utils.run_config import RunConfig, load_run_config


class TestResultPersistor(unittest.TestCase):
    """Test cases for ResultPersistor"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.persistor = ResultPersistor(os.path.join(self.test_dir, 'out'))
        self.table = pd.DataFrame({'eps': [0.2, 0.1], 'J_eps': [1.0 / 3.0, 0.25]})

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def test_creates_output_dir(self):
        self.assertTrue(os.path.isdir(os.path.join(self.test_dir, 'out')))

    def test_persist_table(self):
        filepath = self.persistor.persist_table(self.table, 'sweep.csv', column_order=['J_eps', 'eps'])
        again = pd.read_csv(filepath)

        self.assertEqual(list(again.columns), ['J_eps', 'eps'])
        self.assertAlmostEqual(again['J_eps'][0], 1.0 / 3.0, places=15)

    def test_persist_empty_table(self):
        self.assertEqual(self.persistor.persist_table(pd.DataFrame(), 'empty.csv'), "")
        self.assertFalse(os.path.exists(self.persistor.path('empty.csv')))

    def test_append_table(self):
        self.assertTrue(self.persistor.append_table(self.table, 'sweep.csv'))
        self.assertTrue(self.persistor.append_table(self.table, 'sweep.csv'))
        self.assertTrue(self.persistor.append_table(pd.DataFrame(), 'sweep.csv'))

        self.assertEqual(len(pd.read_csv(self.persistor.path('sweep.csv'))), 4)

    def test_persist_json(self):
        report = {'b': np.float64(0.5), 'a': np.arange(3), 'ok': np.bool_(True), 'n': np.int64(8)}
        filepath = self.persistor.persist_json(report, 'report.json')

        with open(filepath) as f:
            text = f.read()
        self.assertEqual(json.loads(text), {'a': [0, 1, 2], 'b': 0.5, 'n': 8, 'ok': True})
        self.assertLess(text.index('"a"'), text.index('"b"'))

    def test_unserialisable_value(self):
        with self.assertRaises(TypeError):
            to_json({'value': object()})

    def test_persist_mesh(self):
        points = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
        mesh = meshio.Mesh(points, [('quad', np.array([[0, 1, 2, 3]]))],
                           cell_data={'detPi': [np.array([0.0])]})

        for name in ('surface.vtk', 'surface.obj'):
            filepath = self.persistor.persist_mesh(mesh, name)
            self.assertTrue(os.path.getsize(filepath) > 0)
        with self.assertRaises(ValueError):
            self.persistor.persist_mesh(mesh, 'surface.stl')


class TestRunConfig(unittest.TestCase):
    """Test cases for RunConfig"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def write(self, name, text):
        path = os.path.join(self.test_dir, name)
        with open(path, 'w') as f:
            f.write(text)
        return path

    def test_defaults(self):
        config = RunConfig().validate()
        self.assertEqual(config.grid, 513)
        self.assertEqual(config.material, 'isotropic')
        self.assertIsNone(config.boundary)

    def test_environment(self):
        with patch.dict(os.environ, {'RIBBON_GRID': '129', 'RIBBON_SEED': '7'}):
            config = RunConfig.from_env()
        self.assertEqual((config.grid, config.seed), (129, 7))
        with patch.dict(os.environ, {'RIBBON_GRID': 'many'}):
            with self.assertRaises(ValidationError):
                RunConfig.from_env()

    def test_read_json_file(self):
        path = self.write('run.json', json.dumps({'grid': 257, 'BD': 'moebius', 'tol': 1e-6}))
        self.assertEqual(RunConfig.read_file(path), {'grid': 257, 'boundary': 'moebius', 'tol': 1e-6})

    def test_read_key_value_file(self):
        path = self.write('run.env', "GRID=65\nPI0=2,0,2\nSEED=3\n")
        config = RunConfig().merged(**RunConfig.read_file(path)).validate()

        self.assertEqual(config.grid, 65)
        self.assertEqual(config.seed, 3)
        self.assertEqual(config.frustration, '2,0,2')

    def test_unknown_key(self):
        path = self.write('run.json', json.dumps({'colour': 'red'}))
        with self.assertRaises(ValidationError):
            RunConfig.read_file(path)

    def test_missing_file(self):
        with self.assertRaises(ValidationError):
            RunConfig.read_file(os.path.join(self.test_dir, 'absent.json'))

    def test_overrides_take_precedence(self):
        path = self.write('run.json', json.dumps({'grid': 257}))
        with patch.dict(os.environ, {'RIBBON_GRID': '129'}):
            self.assertEqual(load_run_config(path).grid, 257)
            self.assertEqual(load_run_config(path, grid=33).grid, 33)

    def test_bad_values(self):
        with self.assertRaises(ValidationError):
            RunConfig().merged(grid='fine')
        with self.assertRaises(ValidationError):
            RunConfig(grid=100).validate()
        with self.assertRaises(ValidationError):
            RunConfig(tol=0.0).validate()
        with self.assertRaises(ValidationError):
            RunConfig(material=os.path.join(self.test_dir, 'absent.json')).validate()
        with self.assertRaises(ValidationError):
            RunConfig(frustration='2,0').validate()


class TestLoaders(unittest.TestCase):
    """Test cases for the input loaders"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()
        self.ref = build_reference({'type': 'flat', 'length': 1.0}, num_samples=33)

    def tearDown(self):
        shutil.rmtree(self.test_dir)

    def write_json(self, name, data):
        path = os.path.join(self.test_dir, name)
        with open(path, 'w') as f:
            json.dump(data, f)
        return path

    def test_parse_matrix(self):
        np.testing.assert_allclose(parse_matrix('1, 0.5, 2'), [[1.0, 0.5], [0.5, 2.0]])
        with self.assertRaises(ValidationError):
            parse_matrix('1,2')
        with self.assertRaises(ValidationError):
            parse_matrix('1,a,2')

    def test_parse_list(self):
        self.assertEqual(list(parse_list('0.2,0.1,')), [0.2, 0.1])
        with self.assertRaises(ValidationError):
            parse_list('')
        with self.assertRaises(ValidationError):
            parse_list('0.2,wide')

    def test_isotropic_material(self):
        self.assertAlmostEqual(load_material(None).alpha_plus, 2.0)
        self.assertAlmostEqual(material_from_dict({'isotropic': 3.0}).alpha_plus, 6.0)

    def test_material_matrix(self):
        rd = material_from_dict({'K': [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.125]]})
        self.assertAlmostEqual(rd.alpha_plus, 0.5)
        same = material_from_dict({'K': [1.0, 0.0, 0.0, 1.0, 0.0, 0.125]})
        self.assertAlmostEqual(same.alpha_plus, 0.5)
        with self.assertRaises(ValidationError):
            material_from_dict({'K': [[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.5]]})

    def test_engineering_material(self):
        path = self.write_json('material.json', {'engineering': {'E1': 2.0, 'E2': 1.0, 'G12': 0.5, 'nu12': 0.3}})
        rd = load_material(path)
        np.testing.assert_allclose(rd.K, rd.K.T)
        self.assertGreater(rd.alpha_plus, 0.0)
        with self.assertRaises(ValidationError):
            material_from_dict({'engineering': {'E1': 2.0, 'E2': 1.0}})
        with self.assertRaises(ValidationError):
            material_from_dict({'plastic': True})

    def test_frustration_sources(self):
        self.assertTrue(load_frustration(None).is_zero())
        np.testing.assert_allclose(load_frustration('2,0,2').matrix_at(0.5), 2.0 * np.eye(2))

        path = self.write_json('pi0.json', {'constant': [[1.0, 0.0], [0.0, -1.0]]})
        np.testing.assert_allclose(load_frustration(path).at(0.25), [1.0, -1.0, 0.0])

        table = os.path.join(self.test_dir, 'pi0.csv')
        pd.DataFrame({'t': [0.0, 1.0], 'M11': [0.0, 2.0], 'M12': [0.0, 0.0], 'M22': [1.0, 1.0]}).to_csv(table,
                                                                                                     index=False)
        np.testing.assert_allclose(load_frustration(table).at(0.5), [1.0, 1.0, 0.0])

        with self.assertRaises(ValidationError):
            load_frustration(self.write_json('bad.json', {'field': 1}))
        with self.assertRaises(ValidationError):
            load_frustration(os.path.join(self.test_dir, 'absent.csv'))

    def test_boundary_sources(self):
        np.testing.assert_allclose(load_boundary(None, self.ref).y_bar, [1.0, 0.0, 0.0])
        np.testing.assert_allclose(load_boundary('moebius', self.ref).R_bar, np.diag([1.0, -1.0, -1.0]))

        path = self.write_json('bd.json', {'y_bar': [0.5, 0.0, 0.0], 'R_bar': np.eye(3).tolist()})
        np.testing.assert_allclose(load_boundary(path, self.ref).y_bar, [0.5, 0.0, 0.0])

        far = self.write_json('far.json', {'y_bar': [2.0, 0.0, 0.0], 'R_bar': np.eye(3).tolist()})
        with self.assertRaises(ValidationError):
            load_boundary(far, self.ref)


if __name__ == '__main__':
    unittest.main()
