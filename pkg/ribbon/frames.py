#!/usr/bin/env python3
"""
Frame ODE R' = A R on SO(3), framed curves, boundary data and admissibility checks.

The generator is A = [[0, k, a13], [-k, 0, a23], [-a13, -a23, 0]] with k the
reference curvature; in axis-vector form a = (-a23, a13, -k). Rows of R are the
directors d1, d2, d3.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.spatial.transform import Rotation

from .errors import FrameCollapseError, ValidationError
from .geometry import ReferenceCurve
from .numerics import (cumulative_hermite, derivative, integrate, rotation_exp,
                       rotation_exp_derivative, simpson_weights, skew)

logger = logging.getLogger(__name__)

FRAME_COLUMNS = ['t', 'y1', 'y2', 'y3',
                 'd1x', 'd1y', 'd1z', 'd2x', 'd2y', 'd2z', 'd3x', 'd3y', 'd3z',
                 'mu', 'tau']

SUPPORT_THRESHOLD = 1e-12


def planar_basis(angle: float) -> np.ndarray:
    """(B'|N|e3) for a tangent at the given angle."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class SkewField:
    """Generator samples: fixed A12 = k and the free entries A13, A23."""

    t: np.ndarray
    k: np.ndarray
    a13: np.ndarray
    a23: np.ndarray
    end_basis: np.ndarray
    k_slope: Optional[np.ndarray] = None

    @classmethod
    def from_reference(cls, ref: ReferenceCurve, a13=0.0, a23=0.0) -> "SkewField":
        n = ref.num_samples
        return cls(t=ref.t, k=ref.k,
                   a13=np.broadcast_to(np.asarray(a13, dtype=float), (n,)).copy(),
                   a23=np.broadcast_to(np.asarray(a23, dtype=float), (n,)).copy(),
                   end_basis=ref.frame3(-1),
                   k_slope=None if ref.is_flat else derivative(ref.k, ref.h))

    @classmethod
    def from_arrays(cls, t, k, a13, a23) -> "SkewField":
        """Generator on a bare grid; the end basis follows from the integrated curvature."""
        t = np.asarray(t, dtype=float)
        k = np.broadcast_to(np.asarray(k, dtype=float), t.shape).copy()
        angle = float(integrate(k, t[1] - t[0]))
        return cls(t=t, k=k,
                   a13=np.broadcast_to(np.asarray(a13, dtype=float), t.shape).copy(),
                   a23=np.broadcast_to(np.asarray(a23, dtype=float), t.shape).copy(),
                   end_basis=planar_basis(angle))

    @property
    def h(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def length(self) -> float:
        return float(self.t[-1] - self.t[0])

    @property
    def vectors(self) -> np.ndarray:
        return np.stack([-self.a23, self.a13, -self.k], axis=-1)

    def matrices(self) -> np.ndarray:
        return skew(self.vectors)

    def with_entries(self, a13, a23) -> "SkewField":
        return SkewField(t=self.t, k=self.k, a13=np.asarray(a13, dtype=float).copy(),
                         a23=np.asarray(a23, dtype=float).copy(),
                         end_basis=self.end_basis, k_slope=self.k_slope)

    def validate(self) -> None:
        for name in ('k', 'a13', 'a23'):
            values = getattr(self, name)
            if values.shape != self.t.shape:
                raise ValidationError(f"Generator entry {name} has shape {values.shape}, grid has {self.t.shape}")
            if not np.all(np.isfinite(values)):
                raise ValidationError(f"Generator entry {name} is not finite")


@dataclass(frozen=True)
class RotationPath:
    t: np.ndarray
    R: np.ndarray
    gamma: np.ndarray
    steps: np.ndarray

    @property
    def end(self) -> np.ndarray:
        return self.R[-1]

    def directors(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.R[:, 0, :], self.R[:, 1, :], self.R[:, 2, :]

    def orthogonality_drift(self) -> float:
        gram = np.einsum('nij,nkj->nik', self.R, self.R)
        return float(np.max(np.abs(gram - np.eye(3))))


def _step_vectors(A: SkewField) -> np.ndarray:
    """Magnus step h/2 (a_i + a_i+1) - h^2/12 a_i x a_i+1 per interval."""
    h = A.h
    a = A.vectors
    omega = 0.5 * h * (a[:-1] + a[1:]) - (h * h / 12.0) * np.cross(a[:-1], a[1:])
    if A.k_slope is not None:
        # end-corrected trapezoid for the smooth curvature entry
        omega[:, 2] -= (h * h / 12.0) * (A.k_slope[:-1] - A.k_slope[1:])
    return omega


def solve_frame(A: SkewField) -> RotationPath:
    """Integrate R' = A R, R(0) = I, with one rotation exponential per grid interval."""
    A.validate()
    steps = rotation_exp(_step_vectors(A))
    R = np.empty((len(A.t), 3, 3))
    R[0] = np.eye(3)
    for i, E in enumerate(steps):
        R[i + 1] = E @ R[i]
    gamma = integrate(R[:, 0, :], A.h, axis=0)
    return RotationPath(t=A.t, R=R, gamma=np.asarray(gamma), steps=steps)


def gamma_endpoint(path: RotationPath) -> np.ndarray:
    """Gamma = integral of R^T e1 over the interval."""
    return np.array(path.gamma, copy=True)


@dataclass(frozen=True)
class BoundaryData:
    """Endpoint data: y(l) = y_bar and R_bar^T = (d1bar | d2bar | d3bar)."""

    y_bar: np.ndarray
    R_bar: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'y_bar', np.asarray(self.y_bar, dtype=float).reshape(3))
        object.__setattr__(self, 'R_bar', np.asarray(self.R_bar, dtype=float).reshape(3, 3))

    @classmethod
    def identity(cls, ref: ReferenceCurve) -> "BoundaryData":
        """Data of the undeformed strip."""
        return cls(y_bar=np.append(ref.B[-1], 0.0), R_bar=np.eye(3))

    @classmethod
    def moebius(cls) -> "BoundaryData":
        """Half-twist gluing: y_bar = 0, d1bar = e1, d2bar = -e2."""
        return cls(y_bar=np.zeros(3), R_bar=np.diag([1.0, -1.0, -1.0]))

    @classmethod
    def from_dict(cls, data: Dict) -> "BoundaryData":
        try:
            return cls(y_bar=data['y_bar'], R_bar=data['R_bar'])
        except (KeyError, ValueError) as e:
            raise ValidationError(f"Invalid boundary data: {e}") from e

    @classmethod
    def from_json(cls, text: str) -> "BoundaryData":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> Dict:
        return {'y_bar': self.y_bar.tolist(), 'R_bar': self.R_bar.tolist()}

    @property
    def d_bar(self) -> np.ndarray:
        """Columns d1bar, d2bar, d3bar."""
        return self.R_bar.T

    def validate(self, length: float) -> "BoundaryData":
        if np.linalg.norm(self.y_bar) > length * (1.0 + 1e-12):
            raise ValidationError(f"|y_bar| = {np.linalg.norm(self.y_bar):.6g} exceeds the strip length {length:.6g}")
        if np.max(np.abs(self.R_bar @ self.R_bar.T - np.eye(3))) > 1e-9 or np.linalg.det(self.R_bar) < 0:
            raise ValidationError("R_bar must be a rotation matrix")
        return self

    def is_nondegenerate(self, ref: ReferenceCurve, tol: float = 1e-12) -> bool:
        """True unless the data are those of the undeformed strip."""
        trivial = BoundaryData.identity(ref)
        return bool(np.linalg.norm(self.y_bar - trivial.y_bar) > tol
                    or np.max(np.abs(self.R_bar - trivial.R_bar)) > tol)


@dataclass
class ResidualReport:
    """Named residuals compared against a tolerance."""

    residuals: Dict[str, float]
    tol: float
    details: Dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(value <= self.tol for value in self.residuals.values())

    @property
    def failures(self):
        return [name for name, value in self.residuals.items() if value > self.tol]

    def to_dict(self) -> Dict:
        return {'passed': self.passed, 'tol': self.tol, 'residuals': dict(self.residuals)}


def endpoint_residuals(path: RotationPath, A: SkewField, bd: BoundaryData) -> Tuple[float, float]:
    rotation = float(np.linalg.norm(path.end.T - bd.R_bar.T @ A.end_basis))
    translation = float(np.linalg.norm(path.gamma - bd.y_bar))
    return rotation, translation


def is_admissible(A: SkewField, bd: BoundaryData, tol: float = 1e-8,
                  path: Optional[RotationPath] = None) -> ResidualReport:
    """R_A(l)^T = R_bar^T (B'|N|e3)(l) and Gamma_A = y_bar."""
    path = path if path is not None else solve_frame(A)
    rotation, translation = endpoint_residuals(path, A, bd)
    return ResidualReport(residuals={'rotation': rotation, 'translation': translation}, tol=tol)


def is_nondegenerate(A: SkewField, window: Optional[Tuple[float, float]] = None) -> bool:
    """Support of (A13, A23) inside the window covers more than one grid cell."""
    lo, hi = window if window is not None else (A.t[0], A.t[-1])
    active = (np.abs(A.a13) > SUPPORT_THRESHOLD) | (np.abs(A.a23) > SUPPORT_THRESHOLD)
    inside = (A.t >= lo - 1e-12) & (A.t <= hi + 1e-12)
    cells = active[:-1] & active[1:] & inside[:-1] & inside[1:]
    return bool(np.count_nonzero(cells) > 1)


@dataclass(frozen=True)
class FramedCurve:
    t: np.ndarray
    y: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    mu: np.ndarray
    tau: np.ndarray
    boundary: Optional[BoundaryData] = None

    @property
    def frames(self) -> np.ndarray:
        """Matrices with rows d1, d2, d3."""
        return np.stack([self.d1, self.d2, self.d3], axis=1)

    def table(self) -> pd.DataFrame:
        return frame_table(self)


def _on_grid(values, ref: ReferenceCurve, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim == 0:
        return np.full(ref.t.shape, float(values))
    return ref.check_grid(values, name)


def framed_curve_from(mu, tau, ref: ReferenceCurve, bd: Optional[BoundaryData] = None,
                      path: Optional[RotationPath] = None) -> FramedCurve:
    """Framed curve with d1'.d3 = mu and d2'.d3 = tau on the reference grid.

    There is no orientation or sign flag: d3 is always d1 x d2 of the integrated frame, so the
    sign of (mu, tau) alone selects the side the ribbon bends to.
    """
    mu = _on_grid(mu, ref, 'mu')
    tau = _on_grid(tau, ref, 'tau')
    A = SkewField.from_reference(ref, mu, tau)
    if path is None:
        path = solve_frame(A)
    d1, d2, d3 = path.directors()
    y = cumulative_hermite(d1, ref.k[:, None] * d2 + A.a13[:, None] * d3, ref.h)

    normal = np.cross(d1, d2)
    size = np.linalg.norm(normal, axis=1)
    if np.min(size) < 1e-12:
        where = int(np.argmin(size))
        raise FrameCollapseError(f"Frame collapses at t = {ref.t[where]:.6g} (|d1 x d2| = {size[where]:.3e})")
    # d2 = (D1.D2) d1 + alpha d3 x d1 with an orthonormal reference basis reduces to the rows above
    d3 = normal / size[:, None]
    return FramedCurve(t=ref.t, y=y, d1=d1, d2=d2, d3=d3, mu=np.array(mu), tau=np.array(tau),
                       boundary=bd)


def boundary_from_curve(fc: FramedCurve, ref: ReferenceCurve) -> BoundaryData:
    """Endpoint data realised by a framed curve."""
    return BoundaryData(y_bar=fc.y[-1], R_bar=ref.frame3(-1) @ fc.frames[-1])


def check_A0_membership(fc: FramedCurve, ref: ReferenceCurve, bd: Optional[BoundaryData] = None,
                        tol: float = 1e-8) -> ResidualReport:
    """Itemised residuals of the limit-space constraints and the endpoint conditions."""
    bd = bd if bd is not None else fc.boundary
    if bd is None:
        raise ValidationError("Boundary data are required for the membership check")
    h = ref.h
    D3 = np.zeros((ref.num_samples, 3, 2))
    D3[:, :2, :] = ref.D
    d = np.stack([fc.d1, fc.d2], axis=-1)

    d1_slope = derivative(fc.d1, h)
    y_integral = cumulative_hermite(fc.d1, d1_slope, h)
    normal = np.cross(fc.d1, fc.d2)
    normal /= np.linalg.norm(normal, axis=1, keepdims=True)
    # realised minus prescribed generator, per interval: columns (-tau, mu, -k)
    frames = fc.frames
    realised = Rotation.from_matrix(frames[1:] @ np.swapaxes(frames[:-1], 1, 2)).as_rotvec()
    mismatch = (realised - _step_vectors(SkewField.from_reference(ref, fc.mu, fc.tau))) / h
    gram = np.einsum('nia,nib->nab', d, d) - np.einsum('nia,nib->nab', D3, D3)

    start = np.stack([fc.d1[0], fc.d2[0], fc.d3[0]], axis=-1)
    end = bd.d_bar[:, :2] @ ref.D[-1]
    residuals = {
        'tangent': float(np.max(np.abs(fc.y - fc.y[0] - y_integral))),
        'normal': float(np.max(np.abs(fc.d3 - normal))),
        'metric': float(np.max(np.abs(gram))),
        'geodesic_curvature': float(np.max(np.abs(mismatch[:, 2]))),
        'start_position': float(np.linalg.norm(fc.y[0])),
        'end_position': float(np.linalg.norm(fc.y[-1] - bd.y_bar)),
        'start_frame': float(np.max(np.abs(start - ref.frame3(0)))),
        'end_frame': float(np.max(np.abs(np.stack([fc.d1[-1], fc.d2[-1]], axis=-1) - end))),
    }
    details = {
        'mu_identity': float(np.max(np.abs(mismatch[:, 1]))),
        'tau_identity': float(np.max(np.abs(mismatch[:, 0]))),
    }
    report = ResidualReport(residuals=residuals, tol=tol, details=details)
    if not report.passed:
        logger.debug(f"Limit-space check failed on: {', '.join(report.failures)}")
    return report


@dataclass(frozen=True)
class EndpointJacobian:
    """Endpoint R(l) (flattened, 9) and Gamma (3) with derivatives w.r.t. nodal A13, A23."""

    R_end: np.ndarray
    gamma: np.ndarray
    jacobian: np.ndarray

    @property
    def d_a13(self) -> np.ndarray:
        return self.jacobian[:, 0, :]

    @property
    def d_a23(self) -> np.ndarray:
        return self.jacobian[:, 1, :]


def endpoint_map_gradient(A: SkewField, path: Optional[RotationPath] = None) -> EndpointJacobian:
    """Reverse-mode derivative of (R(l), Gamma) through the discrete Magnus steps."""
    path = path if path is not None else solve_frame(A)
    n = len(A.t)
    h = A.h
    R = path.R
    weights = simpson_weights(n, h)

    seeds_R = np.zeros((12, 3, 3))
    seeds_R[np.arange(9), np.repeat(np.arange(3), 3), np.tile(np.arange(3), 3)] = 1.0
    seeds_gamma = np.zeros((12, 3, 3))
    seeds_gamma[9 + np.arange(3), 0, np.arange(3)] = 1.0

    omega = _step_vectors(A)
    dE = rotation_exp_derivative(omega)
    adjoint = seeds_R + weights[-1] * seeds_gamma
    grad_omega = np.empty((n - 1, 12, 3))
    for i in range(n - 2, -1, -1):
        # adjoint holds d(out)/dR_{i+1}
        grad_omega[i] = np.einsum('oab,cab->oc', adjoint, dE[i] @ R[i])
        adjoint = np.einsum('ba,obc->oac', path.steps[i], adjoint) + weights[i] * seeds_gamma

    a = A.vectors
    left = 0.5 * h * np.eye(3) + (h * h / 12.0) * skew(a[1:])
    right = 0.5 * h * np.eye(3) - (h * h / 12.0) * skew(a[:-1])
    grad_a = np.zeros((n, 12, 3))
    grad_a[:-1] += np.einsum('noc,ncj->noj', grad_omega, left)
    grad_a[1:] += np.einsum('noc,ncj->noj', grad_omega, right)

    jacobian = np.stack([grad_a[:, :, 1], -grad_a[:, :, 0]], axis=0).transpose(2, 0, 1)
    return EndpointJacobian(R_end=R[-1].ravel(), gamma=np.array(path.gamma), jacobian=jacobian)


def rotation_residual_vector(R_end: np.ndarray, R_target: np.ndarray) -> np.ndarray:
    """Axis-angle of R_end R_target^T."""
    return Rotation.from_matrix(R_end @ R_target.T).as_rotvec()


def frame_table(fc: FramedCurve) -> pd.DataFrame:
    data = {'t': fc.t}
    for i in range(3):
        data[f'y{i + 1}'] = fc.y[:, i]
    for name, values in (('d1', fc.d1), ('d2', fc.d2), ('d3', fc.d3)):
        for j, axis in enumerate('xyz'):
            data[f'{name}{axis}'] = values[:, j]
    data['mu'] = fc.mu
    data['tau'] = fc.tau
    return pd.DataFrame(data)[FRAME_COLUMNS]


def framed_curve_from_table(table: pd.DataFrame, bd: Optional[BoundaryData] = None) -> FramedCurve:
    missing = [c for c in FRAME_COLUMNS if c not in table.columns]
    if missing:
        raise ValidationError(f"Frame table is missing columns: {missing}")

    def columns(*names):
        return table[list(names)].to_numpy(dtype=float)

    return FramedCurve(t=table['t'].to_numpy(dtype=float), y=columns('y1', 'y2', 'y3'),
                       d1=columns('d1x', 'd1y', 'd1z'), d2=columns('d2x', 'd2y', 'd2z'),
                       d3=columns('d3x', 'd3y', 'd3z'), mu=table['mu'].to_numpy(dtype=float),
                       tau=table['tau'].to_numpy(dtype=float), boundary=bd)
