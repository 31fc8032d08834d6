#!/usr/bin/env python3
"""
Planar Curve Factory
"""

from typing import Dict

from .base_curve import PlanarCurve
from .flat_curve import FlatCurve
from .arc_curve import ArcCurve
from .spline_curve import SplineCurve


class CurveFactory:
    """Factory for creating midline curves from description dictionaries."""

    @staticmethod
    def create_curve(spec: Dict) -> PlanarCurve:
        """Create a curve from {type, length, parameters}."""
        curve_type = str(spec.get('type', '')).lower()
        parameters = spec.get('parameters', {}) or {}

        if curve_type in ('flat', 'flat-rectangle', 'rectangle'):
            return FlatCurve(float(spec.get('length', 1.0)))

        elif curve_type in ('arc', 'circular-arc'):
            if 'radius' not in parameters:
                raise ValueError("Circular arc needs parameters.radius")
            return ArcCurve(float(spec.get('length', 1.0)), float(parameters['radius']))

        elif curve_type == 'spline':
            if 'points' not in parameters:
                raise ValueError("Spline needs parameters.points")
            return SplineCurve(parameters['points'])

        else:
            raise ValueError(f"Unknown curve type: {spec.get('type')}")
