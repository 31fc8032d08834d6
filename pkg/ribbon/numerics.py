#!/usr/bin/env python3
"""
Shared numerical kernels: finite differences, quadrature, rotation exponentials.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy.integrate import simpson

from .errors import ValidationError

logger = logging.getLogger(__name__)

SMALL_ANGLE = 1e-4


def check_grid_size(num_samples: int, minimum: int = 33) -> int:
    """Validate a sample count of the form 2**k + 1."""
    num_samples = int(num_samples)
    if num_samples < minimum:
        raise ValidationError(f"Grid needs at least {minimum} samples, got {num_samples}")
    intervals = num_samples - 1
    if intervals & (intervals - 1):
        raise ValidationError(f"Grid size must be a power of two plus one, got {num_samples}")
    return num_samples


def derivative(values: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Fourth-order first derivative on a uniform grid (one-sided at the ends)."""
    f = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    if f.shape[0] < 5:
        raise ValidationError("Fourth-order differences need at least 5 samples")
    out = np.empty_like(f)
    out[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * h)
    out[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h)
    out[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * h)
    out[-1] = (25.0 * f[-1] - 48.0 * f[-2] + 36.0 * f[-3] - 16.0 * f[-4] + 3.0 * f[-5]) / (12.0 * h)
    out[-2] = (3.0 * f[-1] + 10.0 * f[-2] - 18.0 * f[-3] + 6.0 * f[-4] - f[-5]) / (12.0 * h)
    return np.moveaxis(out, 0, axis)


def second_derivative(values: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Fourth-order second derivative on a uniform grid (one-sided at the ends)."""
    f = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    if f.shape[0] < 6:
        raise ValidationError("Fourth-order second differences need at least 6 samples")
    h2 = 12.0 * h * h
    out = np.empty_like(f)
    out[2:-2] = (-f[:-4] + 16.0 * f[1:-3] - 30.0 * f[2:-2] + 16.0 * f[3:-1] - f[4:]) / h2
    out[0] = (45.0 * f[0] - 154.0 * f[1] + 214.0 * f[2] - 156.0 * f[3] + 61.0 * f[4] - 10.0 * f[5]) / h2
    out[1] = (10.0 * f[0] - 15.0 * f[1] - 4.0 * f[2] + 14.0 * f[3] - 6.0 * f[4] + f[5]) / h2
    out[-1] = (45.0 * f[-1] - 154.0 * f[-2] + 214.0 * f[-3] - 156.0 * f[-4] + 61.0 * f[-5] - 10.0 * f[-6]) / h2
    out[-2] = (10.0 * f[-1] - 15.0 * f[-2] - 4.0 * f[-3] + 14.0 * f[-4] - 6.0 * f[-5] + f[-6]) / h2
    return np.moveaxis(out, 0, axis)


def segment_bounds(t: np.ndarray, breaks: Optional[np.ndarray] = None, min_size: int = 6) -> List[Tuple[int, int]]:
    """
    Index ranges [start, stop) of the smooth pieces between breakpoints.

    A node on a breakpoint opens the next piece; pieces shorter than min_size are merged
    into their left neighbour.
    """
    t = np.asarray(t, dtype=float)
    if breaks is None or len(breaks) == 0:
        return [(0, len(t))]
    bounds = [0]
    for cut in np.unique(np.searchsorted(t, np.asarray(breaks, dtype=float), side='left')):
        if cut - bounds[-1] >= min_size and len(t) - cut >= min_size:
            bounds.append(int(cut))
    bounds.append(len(t))
    return list(zip(bounds[:-1], bounds[1:]))


def piecewise_derivative(values: np.ndarray, h: float, bounds: List[Tuple[int, int]], axis: int = 0,
                         order: int = 1) -> np.ndarray:
    """First or second fourth-order differences taken separately on each piece."""
    stencil = derivative if order == 1 else second_derivative
    f = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    out = np.empty_like(f)
    for start, stop in bounds:
        out[start:stop] = stencil(f[start:stop], h, axis=0)
    return np.moveaxis(out, 0, axis)


def integrate(values: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Composite Simpson rule on a uniform grid with an odd number of samples."""
    return simpson(np.asarray(values, dtype=float), dx=h, axis=axis)


def simpson_weights(num_samples: int, h: float) -> np.ndarray:
    """Weights w with sum(w * f) equal to the composite Simpson rule."""
    if num_samples % 2 == 0 or num_samples < 3:
        raise ValidationError(f"Simpson weights need an odd sample count, got {num_samples}")
    w = np.ones(num_samples)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * h / 3.0


def trapezoid_weights(num_samples: int, h: float) -> np.ndarray:
    """Weights of the composite trapezoid rule; sum(w * f) matches the Magnus step averages."""
    if num_samples < 2:
        raise ValidationError(f"Trapezoid weights need two samples, got {num_samples}")
    w = np.full(num_samples, h)
    w[[0, -1]] = 0.5 * h
    return w


def cumulative_hermite(values: np.ndarray, slopes: np.ndarray, h: float) -> np.ndarray:
    """Running integral from 0 using the end-corrected trapezoid rule (fourth order)."""
    f = np.asarray(values, dtype=float)
    df = np.asarray(slopes, dtype=float)
    steps = 0.5 * h * (f[:-1] + f[1:]) + (h * h / 12.0) * (df[:-1] - df[1:])
    out = np.zeros_like(f)
    out[1:] = np.cumsum(steps, axis=0)
    return out


def skew(vectors: np.ndarray) -> np.ndarray:
    """Cross-product matrices [v]x for one vector or a stack of vectors."""
    v = np.asarray(vectors, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def unskew(matrices: np.ndarray) -> np.ndarray:
    """Inverse of skew (reads the antisymmetric part)."""
    S = np.asarray(matrices, dtype=float)
    return 0.5 * np.stack([S[..., 2, 1] - S[..., 1, 2],
                           S[..., 0, 2] - S[..., 2, 0],
                           S[..., 1, 0] - S[..., 0, 1]], axis=-1)


def _rodrigues_coefficients(angle2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    angle = np.sqrt(angle2)
    small = angle < SMALL_ANGLE
    safe = np.where(small, 1.0, angle)
    safe2 = np.where(small, 1.0, angle2)
    k1 = np.where(small, 1.0 - angle2 / 6.0 + angle2 ** 2 / 120.0, np.sin(safe) / safe)
    k2 = np.where(small, 0.5 - angle2 / 24.0 + angle2 ** 2 / 720.0, (1.0 - np.cos(safe)) / safe2)
    return k1, k2


def rotation_exp(rotvec: np.ndarray) -> np.ndarray:
    """Rodrigues formula exp([v]x), vectorised over leading axes."""
    v = np.asarray(rotvec, dtype=float)
    K = skew(v)
    k1, k2 = _rodrigues_coefficients(np.sum(v * v, axis=-1))
    return np.eye(3) + k1[..., None, None] * K + k2[..., None, None] * (K @ K)


def rotation_exp_derivative(rotvec: np.ndarray) -> np.ndarray:
    """Partial derivatives dR/dv_i of exp([v]x); result has shape (..., 3, 3, 3), index i first."""
    v = np.asarray(rotvec, dtype=float)
    R = rotation_exp(v)
    angle2 = np.sum(v * v, axis=-1)
    eye = np.eye(3)
    out = np.empty(v.shape[:-1] + (3, 3, 3))
    small = angle2 < SMALL_ANGLE ** 2
    K = skew(v)
    for i in range(3):
        Ei = skew(eye[i])
        # series for small angles: d/dv_i of I + K + K^2/2
        series = Ei + 0.5 * (Ei @ K + K @ Ei)
        Ie_i = eye[i] - R[..., :, i]
        cross = np.cross(v, Ie_i)
        safe2 = np.where(small, 1.0, angle2)
        exact = (v[..., i, None, None] * K + skew(cross)) @ R / safe2[..., None, None]
        out[..., i, :, :] = np.where(small[..., None, None], series, exact)
    return out


def smoothstep(x: np.ndarray) -> np.ndarray:
    """C1 ramp from 0 (x <= 0) to 1 (x >= 1)."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def bump(x: np.ndarray) -> np.ndarray:
    """Smooth bump exp(1 - 1/(1 - x^2)) supported on (-1, 1), equal to 1 at 0."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1.0
    safe = np.where(inside, x, 0.0)
    return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe * safe)), 0.0)


def loglog_slope(x: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of log|y| against log|x|."""
    x = np.abs(np.asarray(x, dtype=float))
    y = np.abs(np.asarray(y, dtype=float))
    keep = (x > 0) & (y > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def piecewise_gauss(breakpoints: np.ndarray, order: int = 8, max_width: float = None) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on every interval between sorted breakpoints."""
    edges = np.unique(np.asarray(breakpoints, dtype=float))
    if max_width is not None and max_width > 0:
        pieces = []
        for a, b in zip(edges[:-1], edges[1:]):
            count = max(1, int(np.ceil((b - a) / max_width)))
            pieces.append(np.linspace(a, b, count + 1)[:-1])
        edges = np.append(np.concatenate(pieces), edges[-1])
    x, w = np.polynomial.legendre.leggauss(order)
    a = edges[:-1, None]
    half = 0.5 * np.diff(edges)[:, None]
    nodes = a + half * (x + 1.0)
    weights = half * w
    return nodes.ravel(), weights.ravel()
