#!/usr/bin/env python3
"""
Constructive relaxation: rank-one recovery fields M_n = lambda_n p_n x p_n for a
target field M, with the same relaxed energy in the limit and admissible frames.

Pipeline (each stage's output is the next stage's hypothesis):
    pin A13 -> piecewise-constant approximation -> plane avoidance
    -> zero-determinant split per cell -> oscillation -> (lambda, theta) factorisation
    -> optional blending -> endpoint correction.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from .errors import SolverError, UnsupportedCaseError, ValidationError
from .frames import (BoundaryData, EndpointJacobian, RotationPath, SkewField, endpoint_map_gradient,
                     is_admissible, is_nondegenerate, solve_frame)
from .geometry import ReferenceCurve
from .numerics import bump, piecewise_gauss, smoothstep, unskew
from .quadform import MovingBasis, RelaxedDensity, SymField2, det_vector

logger = logging.getLogger(__name__)

DIRECTION_RULES = ('max_det', 'pinning')
CORRECTION_MODES = ('auto', 'generator', 'profile')
DET_TOLERANCE = 1e-12
PIN_SCALE = 1e-2
PIN_MARGIN = 0.5


@dataclass(frozen=True)
class LaminateSplit:
    """m = lam m1 + (1 - lam) m2 with det m1 = det m2 = 0 along direction v."""

    m: np.ndarray
    v: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    s1: float
    s2: float
    lam: float
    energy: float

    @property
    def c_inf(self) -> float:
        return float(max(np.linalg.norm(self.m1), np.linalg.norm(self.m2)))

    @property
    def pinning(self) -> float:
        """Smallest |first component| of the two endpoints."""
        return float(min(abs(self.m1[0]), abs(self.m2[0])))


def split_roots(m: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Positive and negative roots of det(m + s v) = 0 (det m and det v of opposite sign)."""
    m = np.asarray(m, dtype=float)
    v = np.asarray(v, dtype=float)
    a = det_vector(v)
    b = m[..., 1] * v[..., 0] + m[..., 0] * v[..., 1] - 0.5 * m[..., 2] * v[..., 2]
    c = det_vector(m)
    disc = np.sqrt(np.maximum(b * b - 4.0 * a * c, 0.0))
    q = -0.5 * (b + np.where(b >= 0, 1.0, -1.0) * disc)
    r1 = q / a
    r2 = c / q
    return np.maximum(r1, r2), np.minimum(r1, r2)


def split(rd: RelaxedDensity, basis: Optional[MovingBasis], t: Optional[float],
          m: Sequence[float], v: Sequence[float], pin: float = 0.0) -> LaminateSplit:
    """
    Zero-determinant split of m along a kernel direction v (basis coordinates at t).

    Both phases must keep |first component| >= pin. For m = (1, 1, 0) along (1, -1, 0)
    the phases are (2, 0, 0) and (0, 2, 0); the second lies in the plane {A13 = 0}, so that
    split raises ValidationError and the shear direction e3 has to be used instead.
    """
    m = np.asarray(m, dtype=float)
    v = np.asarray(v, dtype=float)
    K = rd.K if basis is None or t is None else basis.K_at(float(t))
    det_m = float(det_vector(m))
    det_v = float(det_vector(v))
    if abs(det_m) <= DET_TOLERANCE * max(1.0, float(m @ m)):
        raise ValidationError("Vector already has zero determinant; nothing to split")
    if det_m * det_v >= 0:
        raise ValidationError(f"Direction has det {det_v:.3g}, needs the sign opposite to det(m) = {det_m:.3g}")
    s1, s2 = (float(s) for s in split_roots(m, v))
    m1 = m + s1 * v
    m2 = m + s2 * v
    smallest = min(abs(m1[0]), abs(m2[0]))
    if smallest <= 1e-12 * max(1.0, float(np.linalg.norm(m))):
        raise ValidationError("Vector lies in the plane spanned by e2 and the split direction; "
                              "zero-determinant split hypothesis fails")
    if smallest < pin:
        raise ValidationError(f"Split phase has first component {smallest:.3g} below the pinning level {pin:.3g}")
    return LaminateSplit(m=m, v=v, m1=m1, m2=m2, s1=s1, s2=s2, lam=-s2 / (s1 - s2),
                         energy=float(rd.q_star_vec(m, K)))


def pin_level(a13: np.ndarray, n: int) -> float:
    """Level A13 is pinned to: its smallest magnitude, floored by a level shrinking like n^-1/2."""
    size = np.abs(np.asarray(a13, dtype=float))
    return float(max(size.min(), PIN_SCALE * max(1.0, size.max()) / np.sqrt(n)))


@dataclass(frozen=True)
class PiecewiseConstant:
    """Cell values on the mesh edges[0] < ... < edges[-1]."""

    edges: np.ndarray
    values: np.ndarray

    @property
    def num_cells(self) -> int:
        return len(self.values)

    def cell_index(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.clip(np.searchsorted(self.edges, t, side='right') - 1, 0, self.num_cells - 1)

    def __call__(self, t) -> np.ndarray:
        return self.values[self.cell_index(t)]


def _uniform_edges(length: float, n: int) -> np.ndarray:
    return np.linspace(0.0, length, n + 1)


def pc_approx_sign(u: Callable, c: float, n: int, length: float = 1.0,
                   check_samples: int = 4097) -> PiecewiseConstant:
    """Piecewise constant on n cells, zero on the end cells and |value| >= c inside."""
    if n < 3:
        raise ValidationError(f"Approximation needs at least 3 cells, got {n}")
    if c <= 0:
        raise ValidationError(f"Pinning level must be positive, got {c}")
    grid = np.linspace(0.0, length, check_samples)
    small = np.abs(u(grid)) < c * (1.0 - 1e-12)
    if np.count_nonzero(small) * length / (check_samples - 1) > 1e-6:
        where = float(grid[np.argmax(small)])
        raise ValidationError(f"Function drops below the pinning level {c:g} near t = {where:.6g}")
    edges = _uniform_edges(length, n)
    mids = 0.5 * (edges[:-1] + edges[1:])
    v = np.asarray(u(mids), dtype=float)
    values = np.where(v < 0, -1.0, 1.0) * np.maximum(np.abs(v), c)
    values[0] = values[-1] = 0.0
    return PiecewiseConstant(edges=edges, values=values)


def pc_approx(u: Callable, n: int, length: float = 1.0) -> PiecewiseConstant:
    """Midpoint values on n cells, zero on the end cells."""
    edges = _uniform_edges(length, n)
    values = np.asarray(u(0.5 * (edges[:-1] + edges[1:])), dtype=float).copy()
    values[0] = values[-1] = 0.0
    return PiecewiseConstant(edges=edges, values=values)


@dataclass(frozen=True)
class PiecewiseSkewField:
    """A13, A23 constant on mesh cells (A12 stays the reference curvature)."""

    edges: np.ndarray
    a13: np.ndarray
    a23: np.ndarray

    @property
    def num_cells(self) -> int:
        return len(self.a13)

    @property
    def active(self) -> np.ndarray:
        return (self.a13 != 0) | (self.a23 != 0)

    def sample(self, t) -> Tuple[np.ndarray, np.ndarray]:
        index = PiecewiseConstant(self.edges, self.a13).cell_index(t)
        return self.a13[index], self.a23[index]

    def to_skew(self, ref: ReferenceCurve) -> SkewField:
        a13, a23 = self.sample(ref.t)
        return SkewField.from_reference(ref, a13, a23)


def _cell_points(edges: np.ndarray, samples: int = 9) -> np.ndarray:
    fractions = np.linspace(0.0, 1.0, samples)
    return edges[:-1, None] + fractions[None, :] * np.diff(edges)[:, None]


def plane_margins(a13: np.ndarray, a23: np.ndarray, planes: np.ndarray) -> np.ndarray:
    """min over cell points of |alpha A13 + 2 beta A23|; planes has shape (cells, points, 2)."""
    values = planes[..., 0] * a13[:, None] + 2.0 * planes[..., 1] * a23[:, None]
    return np.min(np.abs(values), axis=1)


def _direction_index(directions, sign: str, cells: int) -> np.ndarray:
    if directions is None or sign not in directions:
        return np.zeros(cells, dtype=int)
    return np.broadcast_to(np.asarray(directions[sign], dtype=int), (cells,))


def _cell_planes(basis: MovingBasis, points: np.ndarray, sign: str, index: np.ndarray) -> np.ndarray:
    kernel_count = len(basis.density.kernel(sign))
    stacked = np.stack([basis.planes_at(points, sign, i) for i in range(kernel_count)], axis=0)
    return stacked[index, np.arange(points.shape[0])]


def avoid_planes(A: PiecewiseSkewField, basis: MovingBasis, c: float, n: int,
                 directions: Optional[Dict[str, Sequence[int]]] = None,
                 families: Optional[Dict[str, np.ndarray]] = None) -> PiecewiseSkewField:
    """
    Shift cell values so that |alpha A13 + 2 beta A23| >= 1/n for the moving planes
    of the split directions, keeping |A13| >= c/2.

    Args:
        directions: kernel index per cell for each sign family (default 0)
        families: boolean mask per cell for each sign family to enforce (default all)
    """
    r = basis.r
    if r < 1e-8:
        raise ValidationError("Plane coefficients below the recorded bound are unavailable")
    threshold = 1.0 / n
    points = _cell_points(A.edges)
    active = A.active
    a13 = A.a13.copy()
    a23 = A.a23.copy()
    enforce = {sign: active & (np.ones(A.num_cells, dtype=bool) if families is None
                               else np.asarray(families.get(sign, np.zeros(A.num_cells, dtype=bool)))) for sign in '+-'}
    planes = {sign: _cell_planes(basis, points, sign, _direction_index(directions, sign, A.num_cells))
              for sign in '+-'}

    for sign in '+-':
        margin = plane_margins(a13, a23, planes[sign])
        alpha_low = np.min(np.abs(planes[sign][..., 0]), axis=1) < 0.5 * r
        need = enforce[sign] & (margin < threshold)
        direction = np.where(a13 < 0, -1.0, 1.0)
        a13 = a13 + np.where(need & ~alpha_low, direction * 6.0 / (r * n), 0.0)
        a23 = a23 + np.where(need & alpha_low, 3.0 / (r * n), 0.0)

    def satisfied(x13, x23, cells):
        ok = np.ones(len(cells), dtype=bool)
        for sign in '+-':
            margin = plane_margins(x13, x23, planes[sign][cells])
            ok &= ~enforce[sign][cells] | (margin >= threshold)
        return ok & (np.abs(x13) >= 0.5 * c)

    failing = np.flatnonzero(active & ~satisfied(a13, a23, np.arange(A.num_cells)))
    for j in failing:
        a13[j], a23[j] = _search_shift(A.a13[j], A.a23[j], j, r, n, satisfied)
    shifted = int(np.count_nonzero((a13 != A.a13) | (a23 != A.a23)))
    if shifted:
        logger.debug(f"Plane avoidance shifted {shifted}/{A.num_cells} cells (n = {n}, r = {r:.4g})")
    return PiecewiseSkewField(edges=A.edges, a13=a13, a23=a23)


def _search_shift(a13: float, a23: float, cell: int, r: float, n: int, satisfied) -> Tuple[float, float]:
    direction = -1.0 if a13 < 0 else 1.0
    for scale in range(1, 7):
        d13 = direction * 6.0 * scale / (r * n)
        d23 = 3.0 * scale / (r * n)
        for s13, s23 in ((d13, 0.0), (0.0, d23), (0.0, -d23), (d13, d23), (d13, -d23)):
            x13 = np.array([a13 + s13])
            x23 = np.array([a23 + s23])
            if satisfied(x13, x23, np.array([cell]))[0]:
                return float(x13[0]), float(x23[0])
    raise ValidationError(f"No plane-avoiding shift found for cell {cell} (A13 = {a13:.4g}, A23 = {a23:.4g})")


@dataclass(frozen=True)
class LaminatePhase:
    """One piece of the oscillating field; phase 0 = unsplit target, -1 = zero field."""

    lo: float
    hi: float
    mbar: np.ndarray
    sign: int = 0
    index: int = 0
    phase: int = -1


def _factorise(m_b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Rank-one m^B = lam (cos^2, sin^2, 2 sin cos) from its first and off-diagonal entries."""
    a13 = m_b[..., 0]
    a23 = 0.5 * m_b[..., 2]
    safe = np.where(a13 == 0, 1.0, a13)
    lam = np.where(a13 == 0, 0.0, (a13 ** 2 + a23 ** 2) / safe)
    theta = np.where(a13 == 0, 0.0, np.arctan(a23 / safe))
    return lam, theta


def generator_from_profile(lam, theta) -> Tuple[np.ndarray, np.ndarray]:
    """(A13, A23) = lam cos(theta) (cos(theta), sin(theta))."""
    c = np.cos(theta)
    return lam * c * c, lam * c * np.sin(theta)


def profile_from_generator(a13, a23) -> Tuple[np.ndarray, np.ndarray]:
    return _factorise(np.stack([np.asarray(a13, dtype=float), np.zeros(np.shape(a13)),
                                2.0 * np.asarray(a23, dtype=float)], axis=-1))


@dataclass(frozen=True)
class CorrectionBasis:
    """Smooth bumps on interior knots of a window, two generator directions each."""

    window: Tuple[float, float]
    knots: np.ndarray
    width: float

    @property
    def size(self) -> int:
        return 2 * len(self.knots)

    def functions(self, t) -> np.ndarray:
        """Bump values, shape (knots, ...)."""
        t = np.asarray(t, dtype=float)
        return bump((t[None, ...] - self.knots.reshape((-1,) + (1,) * t.ndim)) / self.width)

    def combine(self, coefficients: np.ndarray, t) -> Tuple[np.ndarray, np.ndarray]:
        phi = self.functions(t)
        k = len(self.knots)
        return (np.tensordot(coefficients[:k], phi, axes=1), np.tensordot(coefficients[k:], phi, axes=1))


def correction_basis(length: float, window: Optional[Tuple[float, float]] = None,
                     num_knots: int = 6) -> CorrectionBasis:
    lo, hi = window if window is not None else (0.25 * length, 0.75 * length)
    if not 0.0 <= lo < hi <= length:
        raise ValidationError(f"Correction window ({lo}, {hi}) must lie inside [0, {length}]")
    spacing = (hi - lo) / (num_knots + 1)
    knots = lo + spacing * np.arange(1, num_knots + 1)
    return CorrectionBasis(window=(lo, hi), knots=knots, width=spacing)


@dataclass(frozen=True)
class EndpointCorrection:
    skew: SkewField
    path: RotationPath
    basis: CorrectionBasis
    coefficients: np.ndarray
    mode: str
    residual: float
    iterations: int

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))


def _endpoint_measure(path: RotationPath, R_target: np.ndarray, gamma_target: np.ndarray) -> float:
    return float(np.linalg.norm(path.end - R_target) + np.linalg.norm(path.gamma - gamma_target))


def _endpoint_residual(path: RotationPath, R_target: np.ndarray, gamma_target: np.ndarray) -> np.ndarray:
    """Axial vector of R(l) R_target^T and the Gamma mismatch; zero at the target."""
    return np.concatenate([unskew(path.end @ R_target.T), path.gamma - gamma_target])


def _corrected(A: SkewField, cb: CorrectionBasis, phi: np.ndarray, coefficients: np.ndarray,
               mode: str, profile) -> Tuple[SkewField, np.ndarray, np.ndarray]:
    """Corrected generator with d(A13)/dc and d(A23)/dc on the grid, shapes (N, size)."""
    k = len(cb.knots)
    first = coefficients[:k] @ phi
    second = coefficients[k:] @ phi
    zeros = np.zeros_like(phi.T)
    if mode == 'generator':
        skew = A.with_entries(A.a13 + first, A.a23 + second)
        return skew, np.hstack([phi.T, zeros]), np.hstack([zeros, phi.T])
    lam = profile[0] + first
    theta = profile[1] + second
    a13, a23 = generator_from_profile(lam, theta)
    c2, s2 = np.cos(2.0 * theta), np.sin(2.0 * theta)
    cos2 = np.cos(theta) ** 2
    d13 = np.hstack([cos2[:, None] * phi.T, (-lam * s2)[:, None] * phi.T])
    d23 = np.hstack([(0.5 * s2)[:, None] * phi.T, (lam * c2)[:, None] * phi.T])
    return A.with_entries(a13, a23), d13, d23


def endpoint_correct(A: SkewField, target: Tuple[np.ndarray, np.ndarray],
                     window: Optional[Tuple[float, float]] = None, mode: str = 'generator',
                     profile: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                     tol: float = 1e-8, max_iter: int = 100, num_knots: int = 6) -> EndpointCorrection:
    """
    Shooting on bump coefficients so that R(l) and Gamma hit the target.

    The six endpoint equations are solved by scipy's trust-region least squares from zero
    coefficients, so the correction stays close to the smallest one and scales linearly
    with the endpoint defect.

    Args:
        target: (R_target, Gamma_target); R_target is the frame matrix R(l)
        mode: 'generator' adds bumps to (A13, A23); 'profile' adds them to (lambda, theta)
        profile: (lambda, theta) on the grid, required for the profile mode
        max_iter: limit on residual evaluations
    """
    if mode not in ('generator', 'profile'):
        raise ValidationError(f"Unknown correction mode: {mode}")
    if mode == 'profile' and profile is None:
        raise ValidationError("Profile correction needs (lambda, theta) samples")
    R_target = np.asarray(target[0], dtype=float)
    gamma_target = np.asarray(target[1], dtype=float)
    cb = correction_basis(A.length, window, num_knots)
    phi = cb.functions(A.t)
    if profile is not None:
        profile = (np.asarray(profile[0], dtype=float), np.asarray(profile[1], dtype=float))

    state: Dict = {}

    def evaluate(x: np.ndarray) -> Dict:
        if state.get('x') is None or not np.array_equal(state['x'], x):
            skew, d13, d23 = _corrected(A, cb, phi, x, mode, profile)
            state.update(x=np.array(x, copy=True), skew=skew, d13=d13, d23=d23, path=solve_frame(skew))
        return state

    def residual(x: np.ndarray) -> np.ndarray:
        return _endpoint_residual(evaluate(x)['path'], R_target, gamma_target)

    def jacobian(x: np.ndarray) -> np.ndarray:
        current = evaluate(x)
        jac: EndpointJacobian = endpoint_map_gradient(current['skew'], current['path'])
        dR = jac.d_a13[:9] @ current['d13'] + jac.d_a23[:9] @ current['d23']
        dgamma = jac.d_a13[9:] @ current['d13'] + jac.d_a23[9:] @ current['d23']
        drot = unskew(dR.T.reshape(-1, 3, 3) @ R_target.T).T
        return np.vstack([drot, dgamma])

    start = np.zeros(cb.size)
    current = evaluate(start)
    measure = _endpoint_measure(current['path'], R_target, gamma_target)
    if measure <= tol:
        return EndpointCorrection(skew=current['skew'], path=current['path'], basis=cb, coefficients=start,
                                  mode=mode, residual=measure, iterations=0)
    if not is_nondegenerate(current['skew'], cb.window):
        raise SolverError("Generator is degenerate on the correction window; endpoint map cannot be corrected",
                          best_residual=measure)
    singular = np.linalg.svd(jacobian(start), compute_uv=False)
    if singular[0] < 1e-14 or singular[-1] < 1e-9 * singular[0]:
        raise SolverError(f"Endpoint Jacobian is rank deficient (singular values {singular[-1]:.3e} / "
                          f"{singular[0]:.3e})", best_residual=measure)

    outcome = least_squares(residual, start, jac=jacobian, method='trf', ftol=1e-15, xtol=1e-15, gtol=1e-15,
                            max_nfev=max_iter)
    current = evaluate(outcome.x)
    measure = _endpoint_measure(current['path'], R_target, gamma_target)
    if measure > tol:
        raise SolverError(f"Endpoint correction did not reach {tol:g} in {outcome.nfev} evaluations "
                          f"({outcome.message})", best_residual=measure)
    logger.debug(f"Endpoint correction converged in {outcome.nfev} evaluations "
                 f"(residual {measure:.3e}, |c| = {np.linalg.norm(outcome.x):.3e})")
    return EndpointCorrection(skew=current['skew'], path=current['path'], basis=cb,
                              coefficients=np.array(outcome.x), mode=mode, residual=measure,
                              iterations=int(outcome.nfev))


def target_from_boundary(bd: BoundaryData, ref: ReferenceCurve) -> Tuple[np.ndarray, np.ndarray]:
    """Frame matrix R(l) and Gamma required by the boundary data."""
    return ref.frame3(-1).T @ bd.R_bar, bd.y_bar.copy()


class LaminateField:
    """Rank-one field M_n = lam p x p evaluated at any arc length, with exact breakpoints."""

    def __init__(self, basis: MovingBasis, phases: List[LaminatePhase], blend: float = 0.0,
                 correction: Optional[EndpointCorrection] = None):
        self.basis = basis
        self.phases = [p for p in phases if p.hi > p.lo]
        self.edges = np.array([p.lo for p in self.phases] + [self.phases[-1].hi])
        widths = np.diff(self.edges)
        self.blend = float(min(blend, 0.25 * widths.min())) if blend > 0 else 0.0
        self.correction = correction

    @property
    def length(self) -> float:
        return float(self.edges[-1])

    def with_correction(self, correction: EndpointCorrection) -> "LaminateField":
        return LaminateField(self.basis, self.phases, self.blend, correction)

    def _phase_profile(self, phase: LaminatePhase, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if phase.phase < 0:
            return np.zeros_like(t), np.zeros_like(t)
        m = np.broadcast_to(phase.mbar, t.shape + (3,))
        if phase.phase > 0:
            w = self.basis.kernel_at(t, '+' if phase.sign > 0 else '-', phase.index)
            s1, s2 = split_roots(m, w)
            s = s1 if phase.phase == 1 else s2
            m = m + s[..., None] * w
        return _factorise(m)

    def base_profile(self, t) -> Tuple[np.ndarray, np.ndarray]:
        """(lambda, theta) before the endpoint correction."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        index = np.clip(np.searchsorted(self.edges, t, side='right') - 1, 0, len(self.phases) - 1)
        lam = np.zeros_like(t)
        theta = np.zeros_like(t)
        for j in np.unique(index):
            mask = index == j
            lam[mask], theta[mask] = self._phase_profile(self.phases[j], t[mask])
        if self.blend > 0:
            for j in range(1, len(self.phases)):
                x = self.edges[j]
                mask = np.abs(t - x) < self.blend
                if not np.any(mask):
                    continue
                left = self._phase_profile(self.phases[j - 1], t[mask])
                right = self._phase_profile(self.phases[j], t[mask])
                sigma = smoothstep((t[mask] - x + self.blend) / (2.0 * self.blend))
                lam[mask] = (1.0 - sigma) * left[0] + sigma * right[0]
                theta[mask] = (1.0 - sigma) * left[1] + sigma * right[1]
        return lam, theta

    def profile(self, t) -> Tuple[np.ndarray, np.ndarray]:
        lam, theta = self.base_profile(t)
        if self.correction is None:
            return lam, theta
        first, second = self.correction.basis.combine(self.correction.coefficients, np.atleast_1d(t))
        if self.correction.mode == 'profile':
            return lam + first, theta + second
        a13, a23 = generator_from_profile(lam, theta)
        return profile_from_generator(a13 + first, a23 + second)

    def pure_mask(self, t) -> np.ndarray:
        """True away from blending zones."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.blend == 0:
            return np.ones(t.shape, dtype=bool)
        distance = np.min(np.abs(t[:, None] - self.edges[None, 1:-1]), axis=1) if len(self.edges) > 2 \
            else np.full(t.shape, np.inf)
        return distance >= self.blend

    def generator(self, t) -> Tuple[np.ndarray, np.ndarray]:
        return generator_from_profile(*self.profile(t))

    def basis_coords(self, t) -> np.ndarray:
        lam, theta = self.profile(t)
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([lam * c * c, lam * s * s, 2.0 * lam * c * s], axis=-1)

    def direction(self, t) -> np.ndarray:
        """p_n = cos(theta) B' + sin(theta) N."""
        _, theta = self.profile(t)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        curve = self.basis.reference.curve
        return np.cos(theta)[:, None] * curve.tangent(t) + np.sin(theta)[:, None] * curve.normal(t)

    def at(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.basis.from_basis_at(t, self.basis_coords(t))

    def jumps(self) -> np.ndarray:
        """Points where the phase profile jumps or has a kink; the correction bumps are smooth."""
        points = [self.edges]
        if self.blend > 0:
            points += [self.edges[1:-1] - self.blend, self.edges[1:-1] + self.blend]
        merged = np.unique(np.concatenate(points))
        return merged[(merged >= 0.0) & (merged <= self.length)]

    def breakpoints(self) -> np.ndarray:
        points = [self.jumps()]
        if self.correction is not None:
            lo, hi = self.correction.basis.window
            points.append(np.array([lo, hi]))
            points.append(self.correction.basis.knots)
        merged = np.unique(np.concatenate(points))
        return merged[(merged >= 0.0) & (merged <= self.length)]

    def quadrature(self, order: int = 8) -> Tuple[np.ndarray, np.ndarray]:
        return piecewise_gauss(self.breakpoints(), order=order, max_width=self.length / 64.0)

    def sample(self, t) -> np.ndarray:
        return self.at(t)


@dataclass
class RecoveryFields:
    n: int
    field: LaminateField
    t: np.ndarray
    lambda_n: np.ndarray
    theta_n: np.ndarray
    p_n: np.ndarray
    M_n: SymField2
    support: Tuple[float, float]
    ctilde: float
    skew: SkewField
    path: RotationPath
    correction: Optional[EndpointCorrection] = None
    splits: List[LaminateSplit] = field(default_factory=list)
    pin_level: float = 0.0
    direction_rule: str = 'max_det'

    @property
    def sign_changes(self) -> int:
        signs = np.sign(self.lambda_n[self.lambda_n != 0])
        return int(np.count_nonzero(np.diff(signs)))

    def report(self) -> Dict:
        return {
            'n': self.n,
            'ctilde': self.ctilde,
            'support': list(self.support),
            'pin_level': self.pin_level,
            'split_pinning': min((s.pinning for s in self.splits), default=None),
            'direction_rule': self.direction_rule,
            'correction_norm': 0.0 if self.correction is None else self.correction.norm,
            'correction_residual': None if self.correction is None else self.correction.residual,
        }


def _nearest_sample(ref: ReferenceCurve, values: np.ndarray) -> Callable:
    def evaluate(t):
        index = np.clip(np.rint(np.asarray(t, dtype=float) / ref.h).astype(int), 0, ref.num_samples - 1)
        return values[index]
    return evaluate


def _choose_directions(rd: RelaxedDensity, basis: MovingBasis, edges: np.ndarray, mbar: np.ndarray,
                       signs: np.ndarray, rule: str, pin: float = 0.0) -> Dict[str, np.ndarray]:
    """
    Kernel index per cell whose split keeps both phases pinned.

    Kernels are ordered by |det| descending, so 'max_det' takes the first valid one and
    'pinning' the one with the largest smallest |first component|.
    """
    cells = len(signs)
    directions = {'+': np.zeros(cells, dtype=int), '-': np.zeros(cells, dtype=int)}
    mids = 0.5 * (edges[:-1] + edges[1:])
    for j in np.flatnonzero(signs != 0):
        family = '+' if signs[j] > 0 else '-'
        scores = []
        for i in range(len(rd.kernel(family))):
            w = basis.kernel_at(mids[j], family, i)
            try:
                scores.append((i, split(rd, basis, mids[j], mbar[j], w, pin=pin).pinning))
            except ValidationError:
                continue
        if not scores:
            raise UnsupportedCaseError(f"No kernel direction splits cell {j} (m = {np.round(mbar[j], 6).tolist()}) "
                                       f"with both phases above the pinning level {pin:.3g}")
        directions[family][j] = scores[0][0] if rule == 'max_det' else max(scores, key=lambda s: s[1])[0]
    return directions


def _cell_signs(mbar: np.ndarray, active: np.ndarray) -> np.ndarray:
    det = det_vector(mbar)
    scale = np.maximum(1.0, np.sum(mbar * mbar, axis=-1))
    signs = np.where(det > DET_TOLERANCE * scale, 1, np.where(det < -DET_TOLERANCE * scale, -1, 0))
    return np.where(active, signs, 0)


def build_recovery(rd: RelaxedDensity, ref: ReferenceCurve, basis: MovingBasis, M: SymField2,
                   bd: Optional[BoundaryData], n: int, direction_rule: str = 'max_det',
                   blend: float = 0.0, correction: str = 'auto', pin: Optional[float] = None,
                   window: Optional[Tuple[float, float]] = None, tol: float = 1e-8) -> RecoveryFields:
    """Rank-one, admissible recovery fields converging weakly to M with F(M_n) -> F(M)."""
    if direction_rule not in DIRECTION_RULES:
        raise ValidationError(f"Unknown direction rule: {direction_rule}")
    if correction not in CORRECTION_MODES:
        raise ValidationError(f"Unknown correction mode: {correction}")
    if n < 4:
        raise ValidationError(f"Oscillation index must be at least 4, got {n}")
    length = ref.length
    M = M.on_grid(ref)
    m_b = basis.to_basis(M.m)
    a13 = m_b[:, 0]
    a23 = 0.5 * m_b[:, 2]
    m22 = m_b[:, 1]
    base = SkewField.from_reference(ref, a13, a23)
    if bd is not None:
        target = target_from_boundary(bd, ref)
        report = is_admissible(base, bd, tol=1e-6)
        if not report.passed:
            logger.warning(f"Target field is not admissible for the boundary data "
                           f"(rotation {report.residuals['rotation']:.3e}, "
                           f"translation {report.residuals['translation']:.3e}); correcting towards the data")
    else:
        path = solve_frame(base)
        target = (path.end, path.gamma)

    support = (length / n, length - length / n)
    if not is_nondegenerate(base):
        if np.max(np.abs(M.m)) > 1e-12:
            raise UnsupportedCaseError("Target field has a degenerate generator but is not zero; "
                                       "no recovery construction is available")
        return _trivial_recovery(ref, basis, n, support, direction_rule)

    # pin A13 away from zero
    level = pin if pin is not None else pin_level(a13, n)
    floor = PIN_MARGIN * level
    pinned = np.where(np.abs(a13) < level, np.where(a13 < 0, -level, level), a13)

    cells13 = pc_approx_sign(_nearest_sample(ref, pinned), level, n, length)
    cells23 = pc_approx(_nearest_sample(ref, a23), n, length)
    cells22 = pc_approx(_nearest_sample(ref, m22), n, length)
    edges = cells13.edges
    active = np.zeros(n, dtype=bool)
    active[1:-1] = True

    pc = PiecewiseSkewField(edges=edges, a13=cells13.values, a23=cells23.values)
    mbar = np.stack([pc.a13, cells22.values, 2.0 * pc.a23], axis=-1)
    signs = _cell_signs(mbar, active)
    directions = _choose_directions(rd, basis, edges, mbar, signs, direction_rule, pin=floor)
    families = {'+': signs > 0, '-': signs < 0}
    shifted = avoid_planes(pc, basis, level, n, directions=directions, families=families)
    mbar = np.stack([shifted.a13, cells22.values, 2.0 * shifted.a23], axis=-1)
    new_signs = _cell_signs(mbar, active)
    if np.any(new_signs != signs):
        directions = _choose_directions(rd, basis, edges, mbar, new_signs, direction_rule, pin=floor)
        signs = new_signs

    phases: List[LaminatePhase] = [LaminatePhase(lo=edges[0], hi=edges[1], mbar=np.zeros(3))]
    splits: List[LaminateSplit] = []
    for j in range(1, n - 1):
        lo, hi = edges[j], edges[j + 1]
        if signs[j] == 0:
            phases.append(LaminatePhase(lo=lo, hi=hi, mbar=mbar[j], phase=0))
            continue
        family = '+' if signs[j] > 0 else '-'
        index = int(directions[family][j])
        mid = 0.5 * (lo + hi)
        laminate = split(rd, basis, mid, mbar[j], basis.kernel_at(mid, family, index), pin=floor)
        splits.append(laminate)
        cut = lo + laminate.lam * (hi - lo)
        phases.append(LaminatePhase(lo=lo, hi=cut, mbar=mbar[j], sign=int(signs[j]), index=index, phase=1))
        phases.append(LaminatePhase(lo=cut, hi=hi, mbar=mbar[j], sign=int(signs[j]), index=index, phase=2))
    phases.append(LaminatePhase(lo=edges[-2], hi=edges[-1], mbar=np.zeros(3)))

    blend_width = blend * length / n ** 2
    laminate_field = LaminateField(basis, phases, blend=blend_width)

    lam0, theta0 = laminate_field.base_profile(ref.t)
    uncorrected = SkewField.from_reference(ref, *generator_from_profile(lam0, theta0))
    mode = correction if correction != 'auto' else ('profile' if blend_width > 0 else 'generator')
    try:
        fix = endpoint_correct(uncorrected, target, window=window, mode=mode,
                               profile=(lam0, theta0) if mode == 'profile' else None, tol=tol)
    except SolverError as e:
        logger.error(f"Endpoint correction failed for n = {n}: {e}")
        raise
    laminate_field = laminate_field.with_correction(fix)

    lam, theta = laminate_field.profile(ref.t)
    p_n = laminate_field.direction(ref.t)
    M_n = SymField2(ref.t, laminate_field.at(ref.t))
    a13_n = fix.skew.a13
    inside = (ref.t > support[0]) & (ref.t < support[1]) & laminate_field.pure_mask(ref.t)
    ctilde = float(np.min(np.abs(a13_n[inside]))) if np.any(inside) else 0.0
    logger.debug(f"Recovery n = {n}: {len(splits)} split cells, ctilde = {ctilde:.4g}, "
                 f"correction |c| = {fix.norm:.3e}")
    return RecoveryFields(n=n, field=laminate_field, t=ref.t, lambda_n=lam, theta_n=theta, p_n=p_n,
                          M_n=M_n, support=support, ctilde=ctilde, skew=fix.skew, path=fix.path,
                          correction=fix, splits=splits, pin_level=level, direction_rule=direction_rule)


def _trivial_recovery(ref: ReferenceCurve, basis: MovingBasis, n: int, support, rule: str) -> RecoveryFields:
    laminate_field = LaminateField(basis, [LaminatePhase(lo=0.0, hi=ref.length, mbar=np.zeros(3))])
    skew = SkewField.from_reference(ref)
    zeros = np.zeros(ref.num_samples)
    return RecoveryFields(n=n, field=laminate_field, t=ref.t, lambda_n=zeros, theta_n=zeros.copy(),
                          p_n=ref.tangent.copy(), M_n=SymField2(ref.t, np.zeros((ref.num_samples, 3))),
                          support=support, ctilde=0.0, skew=skew, path=solve_frame(skew),
                          direction_rule=rule)


WEAK_TESTS = {
    '1': lambda t, length: np.ones_like(t),
    't': lambda t, length: t,
    't2': lambda t, length: t * t,
    'sin': lambda t, length: np.sin(2.0 * np.pi * t / length),
}


def weak_residuals(M_n, M: SymField2, length: float, tests: Optional[Dict[str, Callable]] = None) -> Dict[str, float]:
    """max over components of |integral (M_n - M) phi| for each test function phi."""
    tests = tests if tests is not None else WEAK_TESTS
    nodes, weights = M_n.quadrature() if hasattr(M_n, 'quadrature') else M.quadrature()
    difference = M_n.at(nodes) - M.at(nodes)
    out = {}
    for name, phi in tests.items():
        moments = np.sum((weights * phi(nodes, length))[:, None] * difference, axis=0)
        out[name] = float(np.max(np.abs(moments)))
    return out


def recovery_table(recovery: RecoveryFields):
    """Grid samples of M_n in the columns t, M11, M12, M22."""
    return recovery.M_n.table()
