"""
Planar midline curves for the ribbon reference configuration
"""

from .base_curve import PlanarCurve
from .flat_curve import FlatCurve
from .arc_curve import ArcCurve
from .spline_curve import SplineCurve
from .curve_factory import CurveFactory

__all__ = [
    'PlanarCurve',
    'FlatCurve',
    'ArcCurve',
    'SplineCurve',
    'CurveFactory'
]
