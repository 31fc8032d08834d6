#!/usr/bin/env python3
"""
Straight midline of the flat rectangle.
"""

from typing import Dict

import numpy as np

from ribbon.errors import GeometryError
from .base_curve import PlanarCurve


class FlatCurve(PlanarCurve):
    """B(t) = (t, 0)."""

    kind = "flat"

    def _position(self, t: np.ndarray) -> np.ndarray:
        return np.stack([t, np.zeros_like(t)], axis=-1)

    def _tangent(self, t: np.ndarray) -> np.ndarray:
        return np.stack([np.ones_like(t), np.zeros_like(t)], axis=-1)

    def _curvature(self, t: np.ndarray) -> np.ndarray:
        return np.zeros_like(t)

    def validate(self) -> None:
        if not np.isfinite(self.length) or self.length <= 0:
            raise GeometryError(f"Flat strip needs a positive length, got {self.length}")

    def describe(self) -> Dict:
        return {"type": self.kind, "length": self.length, "parameters": {}}
