#!/usr/bin/env python3
"""
Material quadratic form, determinant pencil and relaxed density.

Symmetric 2x2 matrices are handled in vector coordinates m = (M11, M22, 2 M12),
so that Q(M) = m.K.m and det(M) = m.Dmat.m.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, cholesky, eigh, solve_triangular

from .errors import ValidationError
from .geometry import ReferenceCurve
from .numerics import simpson_weights

logger = logging.getLogger(__name__)

DMAT = np.array([[0.0, 0.5, 0.0],
                 [0.5, 0.0, 0.0],
                 [0.0, 0.0, -0.25]])

ISOTROPIC_K = np.diag([1.0, 1.0, 0.5])

E2 = np.array([0.0, 1.0, 0.0])


def to_vector(M: np.ndarray) -> np.ndarray:
    """(..., 2, 2) symmetric matrices -> (..., 3) vectors (M11, M22, 2 M12)."""
    M = np.asarray(M, dtype=float)
    return np.stack([M[..., 0, 0], M[..., 1, 1], M[..., 0, 1] + M[..., 1, 0]], axis=-1)


def from_vector(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    off = 0.5 * m[..., 2]
    return np.stack([np.stack([m[..., 0], off], axis=-1),
                     np.stack([off, m[..., 1]], axis=-1)], axis=-2)


def det_vector(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return m[..., 0] * m[..., 1] - 0.25 * m[..., 2] ** 2


def plane_coefficients(v: np.ndarray) -> np.ndarray:
    """(alpha, beta) with span{e2, v} = {alpha x + beta z = 0}."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 2], v[..., 0]], axis=-1)


@dataclass(frozen=True)
class SymMat2:
    """Symmetric 2x2 matrix with its vector view."""

    m11: float
    m12: float
    m22: float

    @classmethod
    def from_matrix(cls, M: Sequence[Sequence[float]]) -> "SymMat2":
        M = np.asarray(M, dtype=float)
        if abs(M[0, 1] - M[1, 0]) > 1e-12 * max(1.0, np.abs(M).max()):
            raise ValidationError("Matrix is not symmetric")
        return cls(float(M[0, 0]), float(0.5 * (M[0, 1] + M[1, 0])), float(M[1, 1]))

    @classmethod
    def from_vec(cls, m: Sequence[float]) -> "SymMat2":
        return cls(float(m[0]), 0.5 * float(m[2]), float(m[1]))

    @property
    def vec(self) -> np.ndarray:
        return np.array([self.m11, self.m22, 2.0 * self.m12])

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m12, self.m22]])

    @property
    def det(self) -> float:
        return self.m11 * self.m22 - self.m12 ** 2


def _sign_value(sign: Union[str, int]) -> int:
    if sign in ('+', 1, '+1', 'plus'):
        return 1
    if sign in ('-', -1, '-1', 'minus'):
        return -1
    raise ValidationError(f"Sign must be '+' or '-', got {sign!r}")


def _checked_cholesky(K: np.ndarray) -> np.ndarray:
    K = np.asarray(K, dtype=float)
    if K.shape != (3, 3):
        raise ValidationError(f"Material tensor must be 3x3, got shape {K.shape}")
    if not np.allclose(K, K.T, atol=1e-12 * max(1.0, np.abs(K).max())):
        raise ValidationError("Material tensor must be symmetric")
    try:
        return cholesky(K, lower=True)
    except LinAlgError as e:
        raise ValidationError(f"Material tensor is not positive definite: {e}") from e


def compute_alpha(K: np.ndarray, sign: Union[str, int]) -> float:
    """Largest alpha with K + sign * alpha * Dmat positive semidefinite."""
    s = _sign_value(sign)
    L = _checked_cholesky(K)
    half = solve_triangular(L, s * DMAT, lower=True)
    whitened = solve_triangular(L, half.T, lower=True)
    smallest = float(np.min(np.linalg.eigvalsh(0.5 * (whitened + whitened.T))))
    return 1.0 / abs(smallest)


def alpha_scan(K: np.ndarray, sign: Union[str, int], step: float = 1e-4) -> float:
    """Grid scan for the largest alpha keeping K +/- alpha Dmat PSD."""
    s = _sign_value(sign)
    K = np.asarray(K, dtype=float)
    upper = 4.0 * float(np.max(np.linalg.eigvalsh(K)))
    alphas = np.arange(0.0, upper + step, step)
    smallest = np.linalg.eigvalsh(K[None] + s * alphas[:, None, None] * DMAT[None])[:, 0]
    tol = 1e-12 * max(1.0, upper)
    admissible = alphas[smallest >= -tol]
    return float(admissible.max())


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    lead = v[np.argmax(np.abs(v) > 1e-12)]
    return v if lead > 0 else -v


def zero_eigenspace(K: np.ndarray, alpha: float, sign: Union[str, int]) -> np.ndarray:
    """Orthonormal kernel basis of K +/- alpha Dmat, rows ordered by |det| (largest first)."""
    s = _sign_value(sign)
    K = np.asarray(K, dtype=float)
    pencil = K + s * alpha * DMAT
    values, vectors = eigh(pencil)
    threshold = 1e-8 * np.linalg.norm(K, 2)
    if values[0] > 1e-6:
        raise ValidationError(f"Kernel of the pencil is empty (smallest eigenvalue {values[0]:.3e}); "
                              f"alpha is inconsistent with K")
    kernel = vectors[:, values <= max(threshold, values[0] + threshold)]
    if kernel.shape[1] > 1:
        # diagonalise the determinant form on the kernel
        restricted = kernel.T @ DMAT @ kernel
        dets, rotation = np.linalg.eigh(0.5 * (restricted + restricted.T))
        kernel = kernel @ rotation[:, np.argsort(-np.abs(dets))]
    basis = np.array([_canonical_sign(col / np.linalg.norm(col)) for col in kernel.T])
    for v in basis:
        if abs(det_vector(v)) < 1e-12 or np.sign(det_vector(v)) != -s:
            raise ValidationError(f"Kernel vector {v} has determinant of the wrong sign")
        if np.linalg.norm(v - E2) < 1e-8 or np.linalg.norm(v + E2) < 1e-8:
            raise ValidationError("Kernel contains e2; plane construction undefined")
    return basis


@dataclass(frozen=True)
class RelaxedDensity:
    """Q, Dmat, alpha+-, V+- for a material tensor K in vector coordinates."""

    K: np.ndarray
    alpha_plus: float
    alpha_minus: float
    V_plus: np.ndarray
    V_minus: np.ndarray
    Dmat: np.ndarray = DMAT

    @classmethod
    def from_matrix(cls, K: np.ndarray) -> "RelaxedDensity":
        K = np.asarray(K, dtype=float)
        alpha_plus = compute_alpha(K, '+')
        alpha_minus = compute_alpha(K, '-')
        density = cls(K=K, alpha_plus=alpha_plus, alpha_minus=alpha_minus,
                      V_plus=zero_eigenspace(K, alpha_plus, '+'),
                      V_minus=zero_eigenspace(K, alpha_minus, '-'))
        logger.debug(f"Relaxed density: alpha+ = {alpha_plus:.12g} (dim {len(density.V_plus)}), "
                     f"alpha- = {alpha_minus:.12g} (dim {len(density.V_minus)})")
        return density

    @classmethod
    def isotropic(cls, scale: float = 1.0) -> "RelaxedDensity":
        """Q(M) = scale * |M|^2."""
        return cls.from_matrix(scale * ISOTROPIC_K)

    @classmethod
    def from_engineering(cls, E1: float, E2: float, G12: float, nu12: float) -> "RelaxedDensity":
        return cls.from_matrix(material_from_engineering(E1, E2, G12, nu12))

    @classmethod
    def from_entries(cls, entries: Sequence[float]) -> "RelaxedDensity":
        """Six independent entries K11, K12, K13, K22, K23, K33."""
        if len(entries) != 6:
            raise ValidationError(f"Expected 6 independent entries of K, got {len(entries)}")
        k11, k12, k13, k22, k23, k33 = (float(x) for x in entries)
        return cls.from_matrix(np.array([[k11, k12, k13], [k12, k22, k23], [k13, k23, k33]]))

    def alpha(self, sign: Union[str, int]) -> float:
        return self.alpha_plus if _sign_value(sign) > 0 else self.alpha_minus

    def kernel(self, sign: Union[str, int]) -> np.ndarray:
        return self.V_plus if _sign_value(sign) > 0 else self.V_minus

    def q(self, m: np.ndarray, K: Optional[np.ndarray] = None) -> np.ndarray:
        m = np.asarray(m, dtype=float)
        K = self.K if K is None else K
        return np.einsum('...i,...ij,...j->...', m, K, m)

    def q_star_vec(self, m: np.ndarray, K: Optional[np.ndarray] = None) -> np.ndarray:
        det = det_vector(m)
        return (self.q(m, K) + self.alpha_plus * np.maximum(det, 0.0)
                + self.alpha_minus * np.maximum(-det, 0.0))

    def describe(self) -> Dict:
        return {
            'alpha_plus': self.alpha_plus,
            'alpha_minus': self.alpha_minus,
            'Vplus': self.V_plus.tolist(),
            'Vminus': self.V_minus.tolist(),
        }


def material_from_engineering(E1: float, E2: float, G12: float, nu12: float) -> np.ndarray:
    """Orthotropic plate bending tensor (per unit h^3/12) in vector coordinates."""
    if min(E1, E2, G12) <= 0:
        raise ValidationError("Moduli must be positive")
    nu21 = nu12 * E2 / E1
    denom = 1.0 - nu12 * nu21
    if denom <= 0:
        raise ValidationError(f"Poisson ratios give a non-positive plate stiffness (1 - nu12 nu21 = {denom:.3g})")
    q11 = E1 / denom
    q22 = E2 / denom
    q12 = nu12 * E2 / denom
    return np.array([[q11, q12, 0.0], [q12, q22, 0.0], [0.0, 0.0, G12]])


def q_star(rd: RelaxedDensity, M: Union[SymMat2, np.ndarray]) -> float:
    """Q(M) + alpha+ (det M)+ + alpha- (det M)-."""
    m = M.vec if isinstance(M, SymMat2) else to_vector(M)
    return float(rd.q_star_vec(m))


def congruence_operator(basis: np.ndarray) -> np.ndarray:
    """Matrices T with to_vector(B C B^T) = T @ to_vector(C), shape (..., 3, 3)."""
    basis = np.asarray(basis, dtype=float)
    columns = []
    for e in np.eye(3):
        C = from_vector(e)
        columns.append(to_vector(basis @ C @ np.swapaxes(basis, -1, -2)))
    return np.stack(columns, axis=-1)


def _transport_kernels(T_inv: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    w = np.einsum('...ij,kj->...ki', T_inv, kernel)
    return w / np.linalg.norm(w, axis=-1, keepdims=True)


@dataclass(frozen=True)
class MovingBasis:
    """Basis (B'|N) along the midline with the transported tensor and kernels."""

    density: RelaxedDensity
    reference: ReferenceCurve
    T: np.ndarray
    T_inv: np.ndarray
    K_t: np.ndarray
    w_plus: np.ndarray
    w_minus: np.ndarray
    planes_plus: np.ndarray
    planes_minus: np.ndarray
    r: float

    @property
    def basis(self) -> np.ndarray:
        return self.reference.D

    def kernels(self, sign: Union[str, int]) -> np.ndarray:
        return self.w_plus if _sign_value(sign) > 0 else self.w_minus

    def planes(self, sign: Union[str, int]) -> np.ndarray:
        return self.planes_plus if _sign_value(sign) > 0 else self.planes_minus

    def to_basis(self, m: np.ndarray) -> np.ndarray:
        """Physical vectors (N, 3) -> coordinates in the moving basis."""
        return np.einsum('nij,nj->ni', self.T_inv, m)

    def from_basis(self, m_b: np.ndarray) -> np.ndarray:
        return np.einsum('nij,nj->ni', self.T, m_b)

    def q_star_t(self, m_b: np.ndarray, index=slice(None)) -> np.ndarray:
        return self.density.q_star_vec(m_b, self.K_t[index])

    def transport_at(self, t) -> Tuple[np.ndarray, np.ndarray]:
        """(T, T^-1) at arbitrary arc length, shape (..., 3, 3)."""
        T = congruence_operator(self.reference.basis_at(t))
        return T, np.linalg.inv(T)

    def K_at(self, t) -> np.ndarray:
        T, _ = self.transport_at(t)
        return np.swapaxes(T, -1, -2) @ self.density.K @ T

    def kernel_at(self, t, sign: Union[str, int], index: int = 0) -> np.ndarray:
        _, T_inv = self.transport_at(t)
        return _transport_kernels(T_inv, self.density.kernel(sign)[index:index + 1])[..., 0, :]

    def planes_at(self, t, sign: Union[str, int], index: int = 0) -> np.ndarray:
        return plane_coefficients(self.kernel_at(t, sign, index))

    def to_basis_at(self, t, m: np.ndarray) -> np.ndarray:
        _, T_inv = self.transport_at(t)
        return np.einsum('...ij,...j->...i', T_inv, m)

    def from_basis_at(self, t, m_b: np.ndarray) -> np.ndarray:
        T, _ = self.transport_at(t)
        return np.einsum('...ij,...j->...i', T, m_b)


def moving_basis(rd: RelaxedDensity, reference: ReferenceCurve) -> MovingBasis:
    """Transport K and the kernels V+- into the basis (B'(t)|N(t))."""
    T = congruence_operator(reference.D)
    T_inv = np.linalg.inv(T)
    K_t = np.swapaxes(T, -1, -2) @ rd.K @ T

    w_plus = _transport_kernels(T_inv, rd.V_plus)
    w_minus = _transport_kernels(T_inv, rd.V_minus)
    planes_plus = plane_coefficients(w_plus)
    planes_minus = plane_coefficients(w_minus)

    smallest = np.minimum(np.linalg.norm(planes_plus, axis=-1).min(axis=1),
                          np.linalg.norm(planes_minus, axis=-1).min(axis=1))
    r = float(smallest.min())
    if r < 1e-8:
        where = int(np.argmin(smallest))
        raise ValidationError(f"Degenerate avoidance plane at t = {reference.t[where]:.6g}: "
                              f"kernel direction aligned with e2")
    return MovingBasis(density=rd, reference=reference, T=T, T_inv=T_inv, K_t=K_t,
                       w_plus=w_plus, w_minus=w_minus, planes_plus=planes_plus,
                       planes_minus=planes_minus, r=r)


def kernel_direction_pairs(rd: RelaxedDensity) -> List[Tuple[str, int]]:
    """(sign, index) for every kernel basis vector."""
    return [('+', i) for i in range(len(rd.V_plus))] + [('-', i) for i in range(len(rd.V_minus))]


class SymField2:
    """Symmetric-matrix field on [0, l] in vector coordinates, sampled on a grid."""

    def __init__(self, t: np.ndarray, m: np.ndarray):
        self.t = np.asarray(t, dtype=float)
        self.m = np.asarray(m, dtype=float)
        if self.m.shape != (len(self.t), 3):
            raise ValidationError(f"Field values must have shape ({len(self.t)}, 3), got {self.m.shape}")

    @classmethod
    def constant(cls, ref: ReferenceCurve, M: Union[SymMat2, Sequence[Sequence[float]]]) -> "SymField2":
        m = M.vec if isinstance(M, SymMat2) else to_vector(np.asarray(M, dtype=float))
        return cls(ref.t, np.tile(m, (ref.num_samples, 1)))

    @classmethod
    def from_basis_coords(cls, basis: MovingBasis, m_b: np.ndarray) -> "SymField2":
        return cls(basis.reference.t, basis.from_basis(np.asarray(m_b, dtype=float)))

    @classmethod
    def from_table(cls, table) -> "SymField2":
        """Table with columns t, M11, M12, M22."""
        missing = [c for c in ('t', 'M11', 'M12', 'M22') if c not in table.columns]
        if missing:
            raise ValidationError(f"Field table is missing columns: {missing}")
        m = np.stack([table['M11'].to_numpy(dtype=float), table['M22'].to_numpy(dtype=float),
                      2.0 * table['M12'].to_numpy(dtype=float)], axis=-1)
        return cls(table['t'].to_numpy(dtype=float), m)

    @property
    def matrices(self) -> np.ndarray:
        return from_vector(self.m)

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.stack([np.interp(t, self.t, self.m[:, j]) for j in range(3)], axis=-1)

    def sample(self, t) -> np.ndarray:
        return self.at(t)

    def quadrature(self) -> Tuple[np.ndarray, np.ndarray]:
        """Nodes and weights integrating sampled quantities (Simpson on the grid)."""
        return self.t, simpson_weights(len(self.t), float(self.t[1] - self.t[0]))

    def on_grid(self, ref: ReferenceCurve) -> "SymField2":
        if len(self.t) == ref.num_samples and np.allclose(self.t, ref.t, atol=1e-12 * ref.length):
            return self
        return SymField2(ref.t, self.at(ref.t))

    def det(self) -> np.ndarray:
        return det_vector(self.m)

    def table(self):
        return pd.DataFrame({'t': self.t, 'M11': self.m[:, 0], 'M12': 0.5 * self.m[:, 2], 'M22': self.m[:, 1]})
