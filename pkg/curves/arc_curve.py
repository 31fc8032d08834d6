#!/usr/bin/env python3
"""
Circular-arc midline, turning left with constant curvature 1/R.
"""

from typing import Dict

import numpy as np

from ribbon.errors import GeometryError
from .base_curve import PlanarCurve


class ArcCurve(PlanarCurve):
    """B(t) = R (sin(t/R), 1 - cos(t/R))."""

    kind = "arc"

    def __init__(self, length: float, radius: float):
        super().__init__(length)
        self.radius = float(radius)

    def _position(self, t: np.ndarray) -> np.ndarray:
        phi = t / self.radius
        return self.radius * np.stack([np.sin(phi), 1.0 - np.cos(phi)], axis=-1)

    def _tangent(self, t: np.ndarray) -> np.ndarray:
        phi = t / self.radius
        return np.stack([np.cos(phi), np.sin(phi)], axis=-1)

    def _curvature(self, t: np.ndarray) -> np.ndarray:
        return np.full_like(t, 1.0 / self.radius)

    def validate(self) -> None:
        if not np.isfinite(self.radius) or self.radius <= 0:
            raise GeometryError(f"Arc radius must be positive, got {self.radius}")
        if self.length <= 0:
            raise GeometryError(f"Arc length must be positive, got {self.length}")
        full_turn = 2.0 * np.pi * self.radius
        if self.length >= full_turn:
            raise GeometryError("Arc closes on itself; midline is not injective", location=full_turn)

    def describe(self) -> Dict:
        return {"type": self.kind, "length": self.length, "parameters": {"radius": self.radius}}
