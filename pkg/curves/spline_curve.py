#!/usr/bin/env python3
"""
Cubic-spline midline through control points, re-parametrised by arc length.
"""

import logging
from typing import Dict, List, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline, PchipInterpolator

from ribbon.errors import GeometryError
from .base_curve import PlanarCurve

logger = logging.getLogger(__name__)

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(12)


class SplineCurve(PlanarCurve):
    """Natural cubic spline C(u) through the control points, rigidly moved so that
    C(0) = 0 and C'(0) is parallel to e1, then evaluated at arc length t."""

    kind = "spline"

    def __init__(self, points: Sequence[Sequence[float]], subdivisions: int = 64):
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2 or len(self.points) < 2:
            raise GeometryError("Spline needs at least two planar control points")
        chords = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        if np.any(chords < 1e-12):
            bad = int(np.argmin(chords))
            raise GeometryError(f"Control points {bad} and {bad + 1} coincide")
        knots = np.concatenate([[0.0], np.cumsum(chords)])

        shifted = self.points - self.points[0]
        start = CubicSpline(knots, shifted, bc_type="natural")(0.0, 1)
        angle = np.arctan2(start[1], start[0])
        c, s = np.cos(-angle), np.sin(-angle)
        aligned = shifted @ np.array([[c, s], [-s, c]])
        self._spline = CubicSpline(knots, aligned, bc_type="natural")
        self._velocity = self._spline.derivative(1)
        self._acceleration = self._spline.derivative(2)

        pieces = [np.linspace(knots[i], knots[i + 1], subdivisions + 1)[:-1] for i in range(len(knots) - 1)]
        self._u_table = np.concatenate(pieces + [knots[-1:]])
        increments = [quad(self._speed, a, b, epsabs=1e-15, epsrel=1e-14, limit=200)[0]
                      for a, b in zip(self._u_table[:-1], self._u_table[1:])]
        self._s_table = np.concatenate([[0.0], np.cumsum(increments)])
        self._guess = PchipInterpolator(self._s_table, self._u_table)
        super().__init__(self._s_table[-1])
        logger.debug(f"Spline through {len(self.points)} points has arc length {self.length:.12g}")

    def _speed(self, u) -> np.ndarray:
        return np.linalg.norm(self._velocity(u), axis=-1)

    def _arc_length(self, u: np.ndarray) -> np.ndarray:
        k = np.clip(np.searchsorted(self._u_table, u, side="right") - 1, 0, len(self._u_table) - 2)
        a = self._u_table[k]
        half = 0.5 * (u - a)
        nodes = a[..., None] + half[..., None] * (_GAUSS_NODES + 1.0)
        return self._s_table[k] + half * np.sum(_GAUSS_WEIGHTS * self._speed(nodes), axis=-1)

    def parameter_at(self, t: np.ndarray) -> np.ndarray:
        """Spline parameter u with arc length s(u) = t (Newton on the quadrature)."""
        t = np.asarray(t, dtype=float)
        u = np.asarray(self._guess(t), dtype=float)
        for _ in range(6):
            step = (self._arc_length(u) - t) / self._speed(u)
            u = np.clip(u - step, self._u_table[0], self._u_table[-1])
            if np.max(np.abs(step), initial=0.0) < 1e-15:
                break
        return u

    def _position(self, t: np.ndarray) -> np.ndarray:
        return self._spline(self.parameter_at(t))

    def _tangent(self, t: np.ndarray) -> np.ndarray:
        velocity = self._velocity(self.parameter_at(t))
        return velocity / np.linalg.norm(velocity, axis=-1, keepdims=True)

    def _curvature(self, t: np.ndarray) -> np.ndarray:
        u = self.parameter_at(t)
        v = self._velocity(u)
        a = self._acceleration(u)
        return (v[..., 0] * a[..., 1] - v[..., 1] * a[..., 0]) / np.linalg.norm(v, axis=-1) ** 3

    def validate(self, num_checks: int = 400) -> None:
        u = np.linspace(self._u_table[0], self._u_table[-1], 4 * num_checks + 1)
        speed = self._speed(u)
        if np.min(speed) < 1e-12:
            raise GeometryError("Spline tangent vanishes", location=float(self._arc_length(u[np.argmin(speed)])))

        t = np.linspace(0.0, self.length, num_checks + 1)
        polyline = self._position(t)
        crossing = _first_self_intersection(polyline)
        if crossing is not None:
            raise GeometryError("Spline midline intersects itself", location=float(t[crossing]))

    def describe(self) -> Dict:
        points: List[List[float]] = self.points.tolist()
        return {"type": self.kind, "length": self.length, "parameters": {"points": points}}


def _first_self_intersection(polyline: np.ndarray):
    """Index of the first segment crossing a non-adjacent segment, or None."""
    a = polyline[:-1]
    b = polyline[1:]

    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

    A, B = a[:, None], b[:, None]
    C, D = a[None, :], b[None, :]
    o1 = orient(A, B, C)
    o2 = orient(A, B, D)
    o3 = orient(C, D, A)
    o4 = orient(C, D, B)
    crossing = (o1 * o2 < 0) & (o3 * o4 < 0)
    i, j = np.indices(crossing.shape)
    crossing &= (j > i + 1)
    if not np.any(crossing):
        return None
    return int(np.argwhere(crossing)[0][0])
