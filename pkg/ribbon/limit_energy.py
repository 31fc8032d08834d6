#!/usr/bin/env python3
"""
Limit density Qbar(x1, mu, tau) and the limit functional J on framed curves.

For fixed (mu, tau) the candidate second fundamental forms form the line
M(gamma) = mu D1xD1 + tau (D1xD2 + D2xD1) + gamma D2xD2. Along it Q is quadratic
and det M is affine, so the relaxed integrand is piecewise quadratic in gamma
and its minimum is found exactly.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .errors import ValidationError
from .geometry import ReferenceCurve, dual_directors
from .numerics import integrate
from .quadform import RelaxedDensity, SymMat2, from_vector, to_vector

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ['t', 'mu', 'tau', 'gamma_star', 'qbar']

BRANCH_INTERIOR = 'interior'
BRANCH_POSITIVE = 'det-positive'
BRANCH_NEGATIVE = 'det-negative'
BRANCH_BOUNDARY = 'boundary'
BRANCHES = (BRANCH_INTERIOR, BRANCH_POSITIVE, BRANCH_NEGATIVE, BRANCH_BOUNDARY)


@dataclass(frozen=True)
class FrustrationField:
    """Target curvature Pi0(x1), sampled in vector coordinates, with an optional strip family."""

    t: np.ndarray
    values: np.ndarray
    family: Optional[Callable] = None

    @classmethod
    def zero(cls, length: float = 1.0) -> "FrustrationField":
        return cls(t=np.array([0.0, length]), values=np.zeros((2, 3)))

    @classmethod
    def constant(cls, M: Union[SymMat2, Sequence[Sequence[float]]], length: float = 1.0) -> "FrustrationField":
        m = M.vec if isinstance(M, SymMat2) else to_vector(np.asarray(M, dtype=float))
        return cls(t=np.array([0.0, length]), values=np.tile(m, (2, 1)))

    @classmethod
    def from_table(cls, table: pd.DataFrame) -> "FrustrationField":
        """Table with columns t, M11, M12, M22 (linear interpolation in t)."""
        missing = [c for c in ('t', 'M11', 'M12', 'M22') if c not in table.columns]
        if missing:
            raise ValidationError(f"Frustration table is missing columns: {missing}")
        table = table.sort_values('t')
        t = table['t'].to_numpy(dtype=float)
        if len(t) < 2 or np.any(np.diff(t) <= 0):
            raise ValidationError("Frustration table needs at least two distinct, increasing t values")
        values = np.stack([table['M11'].to_numpy(dtype=float),
                           table['M22'].to_numpy(dtype=float),
                           2.0 * table['M12'].to_numpy(dtype=float)], axis=-1)
        return cls(t=t, values=values)

    @classmethod
    def from_function(cls, pi0: Callable, family: Optional[Callable] = None,
                      length: float = 1.0, num_samples: int = 1025) -> "FrustrationField":
        """pi0(t) -> (..., 2, 2); family(x1, x2, eps) -> (..., 2, 2) for the strip energy."""
        t = np.linspace(0.0, length, num_samples)
        return cls(t=t, values=to_vector(pi0(t)), family=family)

    @property
    def is_zero(self) -> bool:
        return self.family is None and not np.any(self.values)

    def at(self, x1) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        return np.stack([np.interp(x1, self.t, self.values[:, j]) for j in range(3)], axis=-1)

    def matrix_at(self, x1) -> np.ndarray:
        return from_vector(self.at(x1))

    def pi0_eps(self, x1, x2, epsilon: float) -> np.ndarray:
        """Pi0_eps on the strip as 2x2 matrices; defaults to Pi0(x1) for every x2."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if self.family is not None:
            return np.asarray(self.family(x1, x2, epsilon), dtype=float)
        shape = np.broadcast(x1, x2).shape
        return np.broadcast_to(self.matrix_at(x1), shape + (2, 2))

    def strip_deviation(self, epsilon: float, length: float, num_samples: int = 129) -> float:
        """Root-mean-square distance between Pi0_eps and Pi0 over the strip."""
        x1 = np.linspace(0.0, length, num_samples)
        x2 = np.linspace(-0.5, 0.5, num_samples)
        X1, X2 = np.meshgrid(x1, x2, indexing='ij')
        diff = self.pi0_eps(X1, X2, epsilon) - self.matrix_at(X1)
        return float(np.sqrt(np.mean(np.sum(diff ** 2, axis=(-1, -2)))))


@dataclass(frozen=True)
class LimitDensityValue:
    value: float
    gamma_star: float
    branch: str

    def to_dict(self):
        return {'value': self.value, 'gamma_star': self.gamma_star, 'branch': self.branch}


@dataclass(frozen=True)
class LimitFunctionalValue:
    value: float
    trace: pd.DataFrame


def _quadratic(K: np.ndarray, c: np.ndarray, b: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    v = c + gamma[..., None] * b
    return np.einsum('...i,ij,...j->...', v, K, v)


def qbar_arrays(rd: RelaxedDensity, D: np.ndarray, pi0: np.ndarray, mu, tau):
    """
    Vectorised exact minimisation over gamma.

    Args:
        D: director matrices (..., 2, 2)
        pi0: frustration in vector coordinates (..., 3)

    Returns:
        (value, gamma_star, branch index into BRANCHES)
    """
    mu = np.asarray(mu, dtype=float)
    tau = np.asarray(tau, dtype=float)
    D = np.asarray(D, dtype=float)
    d1, d2 = dual_directors(D)
    detD = D[..., 0, 0] * D[..., 1, 1] - D[..., 0, 1] * D[..., 1, 0]

    def outer(u, v):
        return u[..., :, None] * v[..., None, :]

    base = to_vector(mu[..., None, None] * outer(d1, d1) + tau[..., None, None] * (outer(d1, d2) + outer(d2, d1)))
    b = to_vector(outer(d2, d2))
    Dinv = np.linalg.inv(D)
    target = to_vector(np.swapaxes(Dinv, -1, -2) @ from_vector(pi0) @ Dinv)
    base, b, target, detD = np.broadcast_arrays(base, b, target, detD[..., None])
    detD = detD[..., 0]
    c = base - target

    K = rd.K
    bKb = np.einsum('...i,ij,...j->...', b, K, b)
    bKc = np.einsum('...i,ij,...j->...', b, K, c)
    # det M(gamma) = d0 + d1 gamma (det of the rank-one direction vanishes)
    d0 = base[..., 0] * base[..., 1] - 0.25 * base[..., 2] ** 2
    slope = base[..., 0] * b[..., 1] + base[..., 1] * b[..., 0] - 0.5 * base[..., 2] * b[..., 2]
    scale = np.maximum(1.0, np.abs(d0))
    flat = np.abs(slope) <= 1e-14 * scale

    def objective(gamma):
        det = d0 + slope * gamma
        return (_quadratic(K, c, b, gamma) + rd.alpha_plus * np.maximum(det, 0.0)
                + rd.alpha_minus * np.maximum(-det, 0.0))

    safe_slope = np.where(flat, 1.0, slope)
    breakpoint = np.where(flat, 0.0, -d0 / safe_slope)
    g_plus = -(2.0 * bKc + rd.alpha_plus * slope) / (2.0 * bKb)
    g_minus = -(2.0 * bKc - rd.alpha_minus * slope) / (2.0 * bKb)
    g_free = -bKc / bKb

    tol = 1e-12 * np.maximum(1.0, np.abs(breakpoint))
    plus_inside = ~flat & (slope * (g_plus - breakpoint) > tol * np.abs(slope))
    minus_inside = ~flat & (slope * (g_minus - breakpoint) < -tol * np.abs(slope))

    gamma = np.where(flat, g_free, breakpoint)
    branch = np.where(flat, 0, 3)
    value = objective(gamma)
    for inside, g, code in ((plus_inside, g_plus, 1), (minus_inside, g_minus, 2)):
        candidate = objective(g)
        better = inside & (candidate < value)
        gamma = np.where(better, g, gamma)
        value = np.where(better, candidate, value)
        branch = np.where(better, code, branch)
    return value * detD, gamma, branch


def qbar(rd: RelaxedDensity, ref: ReferenceCurve, frustration: FrustrationField,
         x1: float, mu: float, tau: float) -> LimitDensityValue:
    """Qbar(x1, mu, tau) with its minimising gamma and active branch."""
    x1 = float(x1)
    if x1 < -1e-12 or x1 > ref.length * (1.0 + 1e-12):
        raise ValidationError(f"x1 = {x1} lies outside [0, {ref.length}]")
    value, gamma, branch = qbar_arrays(rd, ref.basis_at(x1), frustration.at(x1), mu, tau)
    return LimitDensityValue(value=float(value), gamma_star=float(gamma), branch=BRANCHES[int(branch)])


def qbar_grid_scan(rd: RelaxedDensity, D: np.ndarray, pi0: np.ndarray, mu: float, tau: float,
                   gammas: np.ndarray) -> float:
    """Brute-force minimum of the gamma objective over the given samples."""
    d1, d2 = dual_directors(np.asarray(D, dtype=float))
    M = (mu * np.outer(d1, d1) + tau * (np.outer(d1, d2) + np.outer(d2, d1)))[None] \
        + gammas[:, None, None] * np.outer(d2, d2)[None]
    Dinv = np.linalg.inv(D)
    m = to_vector(M)
    shift = to_vector(Dinv.T @ from_vector(pi0) @ Dinv)
    det = m[:, 0] * m[:, 1] - 0.25 * m[:, 2] ** 2
    values = (rd.q(m - shift) + rd.alpha_plus * np.maximum(det, 0.0)
              + rd.alpha_minus * np.maximum(-det, 0.0)) * np.linalg.det(D)
    return float(values.min())


def sadowsky_density(mu, tau) -> np.ndarray:
    """Isotropic unfrustrated flat density: (mu^2+tau^2)^2/mu^2 if |mu| >= |tau|, else 4 tau^2."""
    mu = np.asarray(mu, dtype=float)
    tau = np.asarray(tau, dtype=float)
    classical = np.abs(mu) >= np.abs(tau)
    safe = np.where(classical & (mu != 0), mu, 1.0)
    return np.where(classical & (mu != 0), (mu ** 2 + tau ** 2) ** 2 / safe ** 2, 4.0 * tau ** 2)


def limit_functional(rd: RelaxedDensity, ref: ReferenceCurve, frustration: FrustrationField,
                     fc) -> LimitFunctionalValue:
    """Simpson quadrature of Qbar along a framed curve sampled on the reference grid."""
    mu = ref.check_grid(fc.mu, 'mu')
    tau = ref.check_grid(fc.tau, 'tau')
    t = getattr(fc, 't', None)
    if t is not None and (len(t) != ref.num_samples or np.max(np.abs(np.asarray(t) - ref.t)) > 1e-12 * ref.length):
        raise ValidationError("Framed curve is not sampled on the reference grid")

    values, gamma, _ = qbar_arrays(rd, ref.D, frustration.at(ref.t), mu, tau)
    total = float(integrate(values, ref.h))
    trace = pd.DataFrame({'t': ref.t, 'mu': mu, 'tau': tau, 'gamma_star': gamma, 'qbar': values})[TRACE_COLUMNS]
    logger.debug(f"Limit functional J = {total:.12g} on {ref.num_samples} samples")
    return LimitFunctionalValue(value=total, trace=trace)
