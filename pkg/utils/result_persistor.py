#!/usr/bin/env python3
"""
Result persistence for ribbon runs: CSV tables, JSON reports and surface meshes.
"""

import json
import logging
import os
from typing import Any, Dict, List, Optional

import meshio
import numpy as np
import pandas as pd

FLOAT_FORMAT = '%.17g'
MESH_FORMATS = {'obj': 'obj', 'vtk': 'vtk'}


def _to_builtin(value: Any):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if hasattr(value, 'to_dict'):
        return value.to_dict()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def to_json(data: Dict) -> str:
    return json.dumps(data, sort_keys=True, indent=2, default=_to_builtin)


class ResultPersistor:
    """Writes run results under one output directory."""

    def __init__(self, output_dir: str = ".", logger=None):
        self.output_dir = output_dir
        self.logger = logger or logging.getLogger(__name__)
        os.makedirs(output_dir, exist_ok=True)

    def path(self, filename: str) -> str:
        return os.path.join(self.output_dir, filename)

    def persist_table(self, df: pd.DataFrame, filename: str, column_order: Optional[List[str]] = None) -> str:
        """Write a table to CSV, overwriting any existing file."""
        if df.empty:
            self.logger.warning("No rows to persist.")
            return ""

        filepath = self.path(filename)
        df_export = df[column_order] if column_order else df
        df_export.to_csv(filepath, index=False, float_format=FLOAT_FORMAT)

        self.logger.info(f"Persisted {len(df_export)} rows to {filepath}")
        return filepath

    def append_table(self, df: pd.DataFrame, filename: str, column_order: Optional[List[str]] = None) -> bool:
        """Append rows to an existing CSV file, creating it when missing."""
        if df.empty:
            return True

        filepath = self.path(filename)

        if os.path.exists(filepath):
            try:
                existing_df = pd.read_csv(filepath)
                self.logger.info(f"Appending {len(df)} rows to existing file {filepath}")
            except Exception as e:
                self.logger.error(f"Error reading existing file {filepath}: {e}")
                return False
        else:
            existing_df = pd.DataFrame()
            self.logger.info(f"Creating new file {filepath} with {len(df)} rows")

        new_df = df[column_order] if column_order else df

        if not existing_df.empty:
            combined_df = pd.concat([existing_df, new_df], ignore_index=True)
        else:
            combined_df = new_df

        try:
            combined_df.to_csv(filepath, index=False, float_format=FLOAT_FORMAT)
            return True
        except Exception as e:
            self.logger.error(f"Error writing to file {filepath}: {e}")
            return False

    def persist_json(self, data: Dict, filename: str) -> str:
        """Write a report as JSON with sorted keys; floats keep their shortest round-trip repr."""
        filepath = self.path(filename)
        with open(filepath, 'w') as f:
            f.write(to_json(data) + '\n')
        self.logger.info(f"Persisted report to {filepath}")
        return filepath

    def persist_mesh(self, mesh: meshio.Mesh, filename: str) -> str:
        """Write a surface mesh; the format follows the extension (.obj or .vtk)."""
        extension = os.path.splitext(filename)[1].lstrip('.').lower()
        if extension not in MESH_FORMATS:
            raise ValueError(f"Unsupported mesh format: {extension or filename}")

        filepath = self.path(filename)
        if extension == 'vtk':
            meshio.write(filepath, mesh, file_format='vtk', binary=False)
        else:
            # obj carries geometry only
            plain = meshio.Mesh(mesh.points, mesh.cells)
            meshio.write(filepath, plain, file_format='obj')
        self.logger.info(f"Persisted mesh with {len(mesh.points)} points to {filepath}")
        return filepath
