#!/usr/bin/env python3
"""
Run configuration: environment defaults, JSON or KEY=VALUE files, CLI overrides.
"""

import json
import os
from dataclasses import asdict, dataclass, fields
from typing import Dict, Optional

from dotenv import dotenv_values

from ribbon.errors import ValidationError
from ribbon.numerics import check_grid_size

MATERIAL_KEYWORDS = ('isotropic',)
CURVE_KEYWORDS = ('flat',)
BOUNDARY_KEYWORDS = ('moebius', 'identity')

FILE_KEYS = {
    'MATERIAL': 'material',
    'CURVE': 'curve',
    'PI0': 'frustration',
    'FRUSTRATION': 'frustration',
    'BD': 'boundary',
    'BOUNDARY': 'boundary',
    'GRID': 'grid',
    'TOL': 'tol',
    'GTOL': 'gtol',
    'CTOL': 'ctol',
    'OUTPUT_DIR': 'output_dir',
    'SEED': 'seed',
}


def _is_matrix_literal(value: Optional[str]) -> bool:
    """True for an inline 'M11,M12,M22' frustration."""
    if value is None:
        return False
    parts = str(value).split(',')
    if len(parts) != 3:
        return False
    try:
        [float(p) for p in parts]
    except ValueError:
        return False
    return True


@dataclass
class RunConfig:
    """Inputs shared by all subcommands. References are file paths or preset keywords."""

    material: str = 'isotropic'
    curve: str = 'flat'
    frustration: Optional[str] = None
    boundary: Optional[str] = None
    grid: int = 513
    tol: float = 1e-8
    gtol: float = 1e-6
    ctol: float = 1e-6
    output_dir: str = '.'
    seed: int = 0

    @classmethod
    def from_env(cls) -> "RunConfig":
        try:
            return cls(grid=int(os.getenv('RIBBON_GRID', '513')),
                       seed=int(os.getenv('RIBBON_SEED', '0')),
                       output_dir=os.getenv('RIBBON_OUTPUT_DIR', '.'))
        except ValueError as e:
            raise ValidationError(f"Invalid environment setting: {e}") from e

    @staticmethod
    def read_file(path: str) -> Dict:
        """Read a JSON or KEY=VALUE config file into field names."""
        if not os.path.exists(path):
            raise ValidationError(f"Config file not found: {path}")
        if path.lower().endswith('.json'):
            with open(path) as f:
                try:
                    raw = json.load(f)
                except json.JSONDecodeError as e:
                    raise ValidationError(f"Invalid JSON in {path}: {e}") from e
        else:
            raw = dotenv_values(path)

        known = {f.name for f in fields(RunConfig)}
        values = {}
        for key, value in raw.items():
            name = FILE_KEYS.get(str(key).upper(), str(key).lower())
            if name not in known:
                raise ValidationError(f"Unknown config key in {path}: {key}")
            values[name] = value
        return values

    def merged(self, **overrides) -> "RunConfig":
        """Copy with the non-None overrides applied and types coerced."""
        data = asdict(self)
        data.update({k: v for k, v in overrides.items() if v is not None})
        try:
            data['grid'] = int(data['grid'])
            data['seed'] = int(data['seed'])
            for name in ('tol', 'gtol', 'ctol'):
                data[name] = float(data[name])
        except (TypeError, ValueError) as e:
            raise ValidationError(f"Invalid config value: {e}") from e
        return RunConfig(**data)

    def validate(self) -> "RunConfig":
        check_grid_size(self.grid)
        for name in ('tol', 'gtol', 'ctol'):
            if not getattr(self, name) > 0:
                raise ValidationError(f"Tolerance {name} must be positive, got {getattr(self, name)}")
        self._check_reference('material', self.material, MATERIAL_KEYWORDS)
        self._check_reference('curve', self.curve, CURVE_KEYWORDS)
        if not _is_matrix_literal(self.frustration):
            self._check_reference('frustration', self.frustration, ())
        self._check_reference('boundary', self.boundary, BOUNDARY_KEYWORDS)
        return self

    @staticmethod
    def _check_reference(name: str, value: Optional[str], keywords) -> None:
        if value is None or str(value).lower() in keywords:
            return
        if not os.path.exists(str(value)):
            raise ValidationError(f"{name} file not found: {value}")

    def to_dict(self) -> Dict:
        return asdict(self)


def load_run_config(path: Optional[str] = None, **overrides) -> RunConfig:
    """Environment, then the config file, then explicit overrides; validated."""
    config = RunConfig.from_env()
    if path:
        config = config.merged(**RunConfig.read_file(path))
    return config.merged(**overrides).validate()
