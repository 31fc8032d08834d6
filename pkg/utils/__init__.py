"""
Utils package for the ribbon Gamma-convergence toolkit
"""

from .result_persistor import ResultPersistor
from .run_config import RunConfig, load_run_config
from .loaders import (load_boundary, load_curve, load_field, load_framed_curve, load_frustration,
                      load_material)

__all__ = [
    'ResultPersistor',
    'RunConfig',
    'load_run_config',
    'load_boundary',
    'load_curve',
    'load_field',
    'load_framed_curve',
    'load_frustration',
    'load_material'
]
