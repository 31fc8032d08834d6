#!/usr/bin/env python3
"""
Planar reference configuration: midline samples, directors and the scaled strip charts.

The chart is the tubular map chi(x1, x2) = B(x1) + x2 N(x1), so D = (B' | N) along
the midline and chi_eps(x1, x2) = chi(x1, eps * x2) on the strip I x (-1/2, 1/2).
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from curves import CurveFactory, PlanarCurve
from .errors import GeometryError, ValidationError
from .numerics import check_grid_size, second_derivative

logger = logging.getLogger(__name__)

SAMPLE_COLUMNS = ['t', 'Bx', 'By', 'Nx', 'Ny', 'k', 'detD']


@dataclass(frozen=True)
class ReferenceCurve:
    """Sampled arc-length midline with normal, curvature and directors."""

    curve: PlanarCurve
    t: np.ndarray
    B: np.ndarray
    tangent: np.ndarray
    N: np.ndarray
    k: np.ndarray
    D: np.ndarray
    detD: np.ndarray
    D_dual: np.ndarray
    chart_bound: float
    det_bound: float = 1.0

    @property
    def length(self) -> float:
        return self.curve.length

    @property
    def h(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def num_samples(self) -> int:
        return len(self.t)

    @property
    def is_flat(self) -> bool:
        return bool(np.max(np.abs(self.k)) == 0.0)

    @property
    def epsilon_max(self) -> float:
        kmax = float(np.max(np.abs(self.k)))
        if kmax == 0.0:
            return self.chart_bound
        return min(0.5 / kmax, self.chart_bound)

    def basis(self) -> np.ndarray:
        """Moving basis (B' | N) per sample, shape (N, 2, 2)."""
        return self.D

    def basis_at(self, t) -> np.ndarray:
        tangent = self.curve.tangent(t)
        normal = self.curve.normal(t)
        return np.stack([tangent, normal], axis=-1)

    def frame3(self, index: int = -1) -> np.ndarray:
        """3x3 matrix (B' | N | e3) at a sample."""
        out = np.eye(3)
        out[:2, :2] = self.D[index]
        return out

    def check_grid(self, values: np.ndarray, name: str) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.num_samples:
            raise ValidationError(f"{name} has {values.shape[0]} samples, reference grid has {self.num_samples}")
        return values


@dataclass(frozen=True)
class StripChart:
    """chi_eps = chi o rho_eps on Omega = I x (-1/2, 1/2)."""

    reference: ReferenceCurve
    epsilon: float

    def chi_eps(self, x1, x2) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        return self.reference.curve.position(x1) + (self.epsilon * x2)[..., None] * self.reference.curve.normal(x1)

    def D_eps(self, x1, x2) -> np.ndarray:
        """(d1 chi_eps | d2 chi_eps / eps) = ((1 - eps x2 k) B' | N)."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        stretch = 1.0 - self.epsilon * x2 * self.reference.curve.curvature(x1)
        tangent = self.reference.curve.tangent(x1)
        normal = self.reference.curve.normal(x1)
        return np.stack([stretch[..., None] * tangent, normal], axis=-1)

    def det_D_eps(self, x1, x2) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        return 1.0 - self.epsilon * np.asarray(x2, dtype=float) * self.reference.curve.curvature(x1)


def dual_directors(D: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Columns of D^{-T}: D^a . D_b = delta_ab where D_b are the columns of D."""
    D = np.asarray(D, dtype=float)
    det = D[..., 0, 0] * D[..., 1, 1] - D[..., 0, 1] * D[..., 1, 0]
    if np.any(det <= 0):
        raise ValidationError("Director matrix must have positive determinant")
    inv_t = np.swapaxes(np.linalg.inv(D), -1, -2)
    return inv_t[..., :, 0], inv_t[..., :, 1]


def build_reference(spec: Union[Dict, PlanarCurve], num_samples: int = 513,
                    chart_bound: Optional[float] = None) -> ReferenceCurve:
    """Sample a curve description ({type, length, parameters} or a PlanarCurve) on a dyadic grid."""
    num_samples = check_grid_size(num_samples)
    if isinstance(spec, PlanarCurve):
        curve = spec
    else:
        try:
            curve = CurveFactory.create_curve(spec)
        except ValueError as e:
            raise ValidationError(str(e)) from e
    curve.validate()

    t = np.linspace(0.0, curve.length, num_samples)
    B = curve.position(t)
    tangent = curve.tangent(t)
    N = curve.normal(t)
    k = curve.curvature(t)

    speed_error = float(np.max(np.abs(np.linalg.norm(tangent, axis=1) - 1.0)))
    if speed_error > 1e-10:
        bad = int(np.argmax(np.abs(np.linalg.norm(tangent, axis=1) - 1.0)))
        raise GeometryError(f"Midline is not unit speed (error {speed_error:.2e})", location=float(t[bad]))
    if np.linalg.norm(B[0]) > 1e-12 or np.linalg.norm(tangent[0] - [1.0, 0.0]) > 1e-10:
        raise GeometryError("Midline must start at the origin with tangent e1", location=0.0)

    D = np.stack([tangent, N], axis=-1)
    detD = np.linalg.det(D)
    d1, d2 = dual_directors(D)
    D_dual = np.stack([d1, d2], axis=1)

    bound = float(chart_bound) if chart_bound is not None else curve.length
    reference = ReferenceCurve(curve=curve, t=t, B=B, tangent=tangent, N=N, k=k, D=D, detD=detD,
                               D_dual=D_dual, chart_bound=bound,
                               det_bound=float(min(np.min(detD), 1.0 / np.max(detD))))
    logger.debug(f"Built {curve.kind} reference: length {curve.length:.6g}, {num_samples} samples, "
                 f"max |k| {np.max(np.abs(k)):.6g}")
    return reference


def strip_chart(reference: ReferenceCurve, epsilon: float) -> StripChart:
    """Scaled chart of width epsilon; rejects widths beyond the tubular radius."""
    epsilon = float(epsilon)
    if not epsilon > 0:
        raise ValidationError(f"Strip width must be positive, got {epsilon}")
    if epsilon > reference.epsilon_max * (1.0 + 1e-12):
        kmax = np.abs(reference.k)
        location = float(reference.t[int(np.argmax(kmax))])
        raise GeometryError(f"Strip width {epsilon} exceeds the injectivity bound {reference.epsilon_max:.6g}; "
                            f"inner edge overlaps", location=location)
    return StripChart(reference=reference, epsilon=epsilon)


def curvature_consistency(reference: ReferenceCurve) -> float:
    """Max |k - B''.N| with B'' from fourth-order differences of the samples."""
    B2 = second_derivative(reference.B, reference.h, axis=0)
    k_fd = np.sum(B2 * reference.N, axis=1)
    return float(np.max(np.abs(k_fd - reference.k)))


def reference_samples_table(reference: ReferenceCurve) -> pd.DataFrame:
    """Sample table with columns t,Bx,By,Nx,Ny,k,detD."""
    return pd.DataFrame({
        't': reference.t,
        'Bx': reference.B[:, 0],
        'By': reference.B[:, 1],
        'Nx': reference.N[:, 0],
        'Ny': reference.N[:, 1],
        'k': reference.k,
        'detD': reference.detD,
    })[SAMPLE_COLUMNS]
