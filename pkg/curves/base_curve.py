#!/usr/bin/env python3
"""
Base Planar Curve Interface
"""

from abc import ABC, abstractmethod
from typing import Dict, Tuple

import numpy as np


class PlanarCurve(ABC):
    """Abstract arc-length parametrised planar midline B: [0, l] -> R^2.

    Implementations start at the origin with unit tangent e1. Outside
    [0, l] every curve continues along its end tangent.
    """

    kind = "abstract"

    def __init__(self, length: float):
        self.length = float(length)

    @abstractmethod
    def _position(self, t: np.ndarray) -> np.ndarray:
        """Midline points for t in [0, l], shape (..., 2)."""
        pass

    @abstractmethod
    def _tangent(self, t: np.ndarray) -> np.ndarray:
        """Unit tangents B'(t) for t in [0, l], shape (..., 2)."""
        pass

    @abstractmethod
    def _curvature(self, t: np.ndarray) -> np.ndarray:
        """Signed curvature k = B''.N for t in [0, l]."""
        pass

    @abstractmethod
    def validate(self) -> None:
        """Raise GeometryError if the curve is degenerate or not injective."""
        pass

    @abstractmethod
    def describe(self) -> Dict:
        """Curve description {type, length, parameters}."""
        pass

    def _clamped(self, t) -> Tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)
        return t, np.clip(t, 0.0, self.length)

    def position(self, t) -> np.ndarray:
        t, tc = self._clamped(t)
        overshoot = (t - tc)[..., None]
        return self._position(tc) + overshoot * self._tangent(tc)

    def tangent(self, t) -> np.ndarray:
        _, tc = self._clamped(t)
        return self._tangent(tc)

    def normal(self, t) -> np.ndarray:
        tangent = self.tangent(t)
        return np.stack([-tangent[..., 1], tangent[..., 0]], axis=-1)

    def curvature(self, t) -> np.ndarray:
        t, tc = self._clamped(t)
        return np.where(t == tc, self._curvature(tc), 0.0)
