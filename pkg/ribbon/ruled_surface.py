#!/usr/bin/env python3
"""
Developable isometric immersions built from a frame and a rank-one field.

The chart Phi(t, s) = B(t) + s p_perp(t) straightens the rulings; on it the
immersion is u = beta(t) + s (-sin(theta) d1 + cos(theta) d2) with
p = cos(theta) B' + sin(theta) N, so the gradient is d1 x B' + d2 x N along
every ruling and the second fundamental form is lam cos(theta) / J p x p.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import meshio
import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline, PchipInterpolator

from .errors import SurfaceError, ValidationError
from .frames import BoundaryData, FramedCurve, ResidualReport, RotationPath
from .geometry import ReferenceCurve, StripChart
from .numerics import cumulative_hermite, derivative, piecewise_derivative, second_derivative, segment_bounds

logger = logging.getLogger(__name__)

MAX_HALVINGS = 10
START_TRACE = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])


def _angles(ref: ReferenceCurve, p_n: np.ndarray) -> np.ndarray:
    p_n = ref.check_grid(np.asarray(p_n, dtype=float), 'p_n')
    return np.arctan2(np.sum(p_n * ref.N, axis=1), np.sum(p_n * ref.tangent, axis=1))


def _ruling_jacobian(ref: ReferenceCurve, theta: np.ndarray, s: np.ndarray) -> np.ndarray:
    """J(t, s) = det(d_t Phi, d_s Phi) = cos(theta) - s (theta' + k)."""
    turning = derivative(theta, ref.h) + ref.k
    return np.cos(theta)[:, None] - np.asarray(s)[None, :] * turning[:, None]


def chart_width(ref: ReferenceCurve, p_n: np.ndarray) -> float:
    """Half-width eta of the ruling chart, with det(grad Phi) >= c0/4 on the grid."""
    theta = _angles(ref, p_n)
    c0 = float(np.min(np.cos(theta)))
    if c0 <= 0:
        where = float(ref.t[int(np.argmin(np.cos(theta)))])
        raise ValidationError(f"Ruling direction is not transversal to the midline near t = {where:.6g}")
    slope = float(np.max(np.linalg.norm(derivative(np.asarray(p_n, dtype=float), ref.h), axis=1)))
    eta = 0.5 * c0 / max(1.0, slope + float(np.max(np.abs(ref.k))))
    for attempt in range(MAX_HALVINGS + 1):
        J = _ruling_jacobian(ref, theta, np.array([-eta, eta]))
        if np.min(J) >= 0.25 * c0:
            if attempt:
                logger.debug(f"Chart width halved {attempt} times to {eta:.4g}")
            return eta
        eta *= 0.5
    raise SurfaceError(f"Ruling chart Jacobian stays below {0.25 * c0:.3g} after {MAX_HALVINGS} halvings")


@dataclass(frozen=True)
class GridSurface:
    """Immersion sampled on a tensor grid (t, s) with an optional chart to the plane."""

    t: np.ndarray
    s: np.ndarray
    u: np.ndarray
    chart_jacobian: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.u.shape[0], self.u.shape[1]


@dataclass(frozen=True)
class FundamentalForms:
    first: np.ndarray
    second: np.ndarray
    normal: np.ndarray

    def isometry_residual(self) -> float:
        return float(np.max(np.abs(self.first - np.eye(2))))

    def gauss_residual(self) -> float:
        return float(np.max(np.abs(np.linalg.det(self.second))))


@dataclass(frozen=True)
class RuledSurface(GridSurface):
    eta: float = 0.0
    Phi: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None
    lam: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    rulings: Optional[np.ndarray] = None
    gradient: Optional[np.ndarray] = None
    second_form: Optional[np.ndarray] = None
    normal: Optional[np.ndarray] = None
    jacobian: Optional[np.ndarray] = None
    reference: Optional[ReferenceCurve] = None
    turning: Optional[np.ndarray] = None
    breaks: Optional[np.ndarray] = None

    @property
    def first_form(self) -> np.ndarray:
        return np.einsum('nij,nik->njk', self.gradient, self.gradient)

    @property
    def centerline_form(self) -> np.ndarray:
        return self.second_form[:, len(self.s) // 2]

    def forms(self) -> FundamentalForms:
        """Fundamental forms measured by differences of the sampled immersion."""
        return fundamental_forms(self)

    def isometry_residual(self) -> float:
        return self.forms().isometry_residual()

    def gauss_residual(self) -> float:
        return self.forms().gauss_residual()

    def closed_form_residuals(self) -> Dict[str, float]:
        """Residuals of the constructed gradient and second form, before any differencing."""
        return {'isometry': float(np.max(np.abs(self.first_form - np.eye(2)))),
                'gauss': float(np.max(np.abs(np.linalg.det(self.second_form))))}

    def straightness_residual(self) -> float:
        """Distance of u from the affine interpolant along each ruling."""
        weights = (self.s - self.s[0]) / (self.s[-1] - self.s[0])
        affine = self.u[:, :1] + weights[None, :, None] * (self.u[:, -1:] - self.u[:, :1])
        return float(np.max(np.abs(self.u - affine)))

    def report(self, tol: float = 1e-6) -> ResidualReport:
        forms = self.forms()
        closed = self.closed_form_residuals()
        return ResidualReport(
            residuals={'isometry': forms.isometry_residual(), 'gauss': forms.gauss_residual(),
                       'straightness': self.straightness_residual()},
            tol=tol, details={'eta': self.eta, 'closed_form_isometry': closed['isometry'],
                              'closed_form_gauss': closed['gauss']})

    def _splines(self):
        beta_spline = CubicHermiteSpline(self.t, self.beta, self.u_slopes[0], axis=0)
        ruling_spline = CubicHermiteSpline(self.t, self.rulings, self.u_slopes[1], axis=0)
        return beta_spline, ruling_spline

    @property
    def u_slopes(self) -> Tuple[np.ndarray, np.ndarray]:
        """beta' = d1 and ruling' = -(theta' + k) grad u p."""
        ref = self.reference
        p = np.cos(self.theta)[:, None] * ref.tangent + np.sin(self.theta)[:, None] * ref.N
        d1 = np.einsum('nij,nj->ni', self.gradient, ref.tangent)
        return d1, -self.turning[:, None] * np.einsum('nij,nj->ni', self.gradient, p)

    def evaluate(self, t, s) -> np.ndarray:
        """u(Phi(t, s)) at arbitrary chart coordinates."""
        beta_spline, ruling_spline = self._splines()
        t = np.asarray(t, dtype=float)
        return beta_spline(t) + np.asarray(s, dtype=float)[..., None] * ruling_spline(t)

    def gradient_at(self, t) -> np.ndarray:
        return CubicSpline(self.t, self.gradient, axis=0)(np.asarray(t, dtype=float))

    def profile_at(self, t) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(lam, theta, theta') at arbitrary t."""
        theta = PchipInterpolator(self.t, self.theta)
        lam = PchipInterpolator(self.t, self.lam)
        t = np.asarray(t, dtype=float)
        return lam(t), theta(t), theta.derivative()(t)

    def locate(self, points: np.ndarray, guess_t: Optional[np.ndarray] = None,
               guess_s: Optional[np.ndarray] = None, tol: float = 1e-12,
               max_iter: int = 50) -> Tuple[np.ndarray, np.ndarray]:
        """Chart coordinates (t, s) of planar points by Newton iteration."""
        points = np.asarray(points, dtype=float)
        curve = self.reference.curve
        length = self.reference.length
        t = np.zeros(points.shape[:-1]) if guess_t is None else np.array(guess_t, dtype=float)
        s = np.zeros(points.shape[:-1]) if guess_s is None else np.array(guess_s, dtype=float)
        theta_spline = PchipInterpolator(self.t, self.theta)
        dtheta = theta_spline.derivative()
        for _ in range(max_iter):
            theta = theta_spline(t)
            tangent, normal = curve.tangent(t), curve.normal(t)
            p = np.cos(theta)[..., None] * tangent + np.sin(theta)[..., None] * normal
            pperp = np.cos(theta)[..., None] * normal - np.sin(theta)[..., None] * tangent
            F = curve.position(t) + s[..., None] * pperp - points
            if np.max(np.abs(F)) <= tol * (1.0 + np.max(np.abs(points))):
                break
            dt = tangent - (s * (dtheta(t) + curve.curvature(t)))[..., None] * p
            det = dt[..., 0] * pperp[..., 1] - dt[..., 1] * pperp[..., 0]
            step_t = (F[..., 0] * pperp[..., 1] - F[..., 1] * pperp[..., 0]) / det
            step_s = (dt[..., 0] * F[..., 1] - dt[..., 1] * F[..., 0]) / det
            t = np.clip(t - step_t, 0.0, length)
            s = s - step_s
        else:
            raise SurfaceError("Point lookup in the ruling chart did not converge; strip leaves the chart")
        if np.max(np.abs(s)) > self.eta * (1.0 + 1e-9):
            raise SurfaceError(f"Strip leaves the ruling chart (|s| up to {np.max(np.abs(s)):.4g} > eta = "
                               f"{self.eta:.4g}); use a smaller strip width")
        return t, s

    def second_form_at(self, t, s) -> np.ndarray:
        lam, theta, dtheta = self.profile_at(t)
        k = self.reference.curve.curvature(np.asarray(t, dtype=float))
        J = np.cos(theta) - np.asarray(s) * (dtheta + k)
        p = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        basis = self.reference.basis_at(t)
        p = np.einsum('...ij,...j->...i', basis, p)
        return (lam * np.cos(theta) / J)[..., None, None] * p[..., :, None] * p[..., None, :]


def build_isometry(ref: ReferenceCurve, path: RotationPath, lambda_n: np.ndarray, p_n: np.ndarray,
                   num_s: int = 17, eta: Optional[float] = None,
                   breaks: Optional[np.ndarray] = None) -> RuledSurface:
    """
    Ruled isometric immersion whose centerline second fundamental form is lambda_n p_n x p_n.

    breaks are the arc lengths where the profile (lambda_n, p_n) may jump; the ruling turning
    rate and the difference checks are taken piece by piece between them.
    """
    if num_s < 7 or num_s % 2 == 0:
        raise ValidationError(f"Ruling samples must be odd and at least 7, got {num_s}")
    lam = ref.check_grid(np.asarray(lambda_n, dtype=float), 'lambda_n')
    if path.R.shape[0] != ref.num_samples:
        raise ValidationError("Frame path is not sampled on the reference grid")
    theta = _angles(ref, p_n)
    eta = chart_width(ref, p_n) if eta is None else float(eta)
    s = np.linspace(-eta, eta, num_s)

    d1, d2, d3 = path.directors()
    c, sn = np.cos(theta), np.sin(theta)
    a13 = lam * c * c
    beta = cumulative_hermite(d1, ref.k[:, None] * d2 + a13[:, None] * d3, ref.h)
    rulings = -sn[:, None] * d1 + c[:, None] * d2
    u = beta[:, None, :] + s[None, :, None] * rulings[:, None, :]

    p = c[:, None] * ref.tangent + sn[:, None] * ref.N
    pperp = c[:, None] * ref.N - sn[:, None] * ref.tangent
    Phi = ref.B[:, None, :] + s[None, :, None] * pperp[:, None, :]
    turning = piecewise_derivative(theta, ref.h, segment_bounds(ref.t, breaks)) + ref.k
    J = c[:, None] - s[None, :] * turning[:, None]
    if np.min(J) <= 0:
        raise SurfaceError(f"Ruling chart folds (min Jacobian {np.min(J):.3e})")
    d_t = ref.tangent[:, None, :] - (s[None, :, None] * turning[:, None, None]) * p[:, None, :]
    chart = np.stack([d_t, np.broadcast_to(pperp[:, None, :], d_t.shape)], axis=-1)

    gradient = d1[:, :, None] * ref.tangent[:, None, :] + d2[:, :, None] * ref.N[:, None, :]
    kappa = (lam * c)[:, None] / J
    second = kappa[..., None, None] * (p[:, None, :, None] * p[:, None, None, :])
    surface = RuledSurface(t=ref.t, s=s, u=u, chart_jacobian=chart, eta=eta, Phi=Phi, theta=theta, lam=lam,
                           beta=beta, rulings=rulings, gradient=gradient, second_form=second,
                           normal=np.broadcast_to(d3[:, None, :], u.shape).copy(), jacobian=J,
                           reference=ref, turning=turning,
                           breaks=None if breaks is None else np.asarray(breaks, dtype=float))
    if logger.isEnabledFor(logging.DEBUG):
        forms = surface.forms()
        logger.debug(f"Ruled surface on {len(ref.t)}x{num_s} grid, eta = {eta:.4g}, "
                     f"isometry {forms.isometry_residual():.2e}, gauss {forms.gauss_residual():.2e}")
    return surface


def surface_from_framed_curve(ref: ReferenceCurve, fc: FramedCurve, path: RotationPath,
                              num_s: int = 17) -> RuledSurface:
    """Surface of a framed curve whose bending field mu, tau is already rank one (gamma = tau^2/mu)."""
    mu = ref.check_grid(fc.mu, 'mu')
    tau = ref.check_grid(fc.tau, 'tau')
    safe = np.where(mu == 0, 1.0, mu)
    lam = np.where(mu == 0, 0.0, (mu * mu + tau * tau) / safe)
    theta = np.where(mu == 0, 0.0, np.arctan(tau / safe))
    p = np.cos(theta)[:, None] * ref.tangent + np.sin(theta)[:, None] * ref.N
    return build_isometry(ref, path, lam, p, num_s=num_s)


def fundamental_forms(surface: GridSurface) -> FundamentalForms:
    """First and second fundamental forms by fourth-order differences, in planar coordinates."""
    u = np.asarray(surface.u, dtype=float)
    ht = float(surface.t[1] - surface.t[0])
    hs = float(surface.s[1] - surface.s[0])
    pieces = segment_bounds(surface.t, getattr(surface, 'breaks', None))
    u_t = piecewise_derivative(u, ht, pieces, axis=0)
    u_s = derivative(u, hs, axis=1)
    u_tt = piecewise_derivative(u, ht, pieces, axis=0, order=2)
    u_ss = second_derivative(u, hs, axis=1)
    u_ts = derivative(u_t, hs, axis=1)

    cross = np.cross(u_t, u_s)
    size = np.linalg.norm(cross, axis=-1)
    if np.min(size) < 1e-12:
        i, j = np.unravel_index(np.argmin(size), size.shape)
        raise SurfaceError(f"Degenerate tangents at t = {surface.t[i]:.6g}, s = {surface.s[j]:.6g}")
    normal = cross / size[..., None]

    tangents = np.stack([u_t, u_s], axis=-1)
    first = np.einsum('...ki,...kj->...ij', tangents, tangents)
    second = np.empty(first.shape)
    second[..., 0, 0] = np.sum(normal * u_tt, axis=-1)
    second[..., 0, 1] = second[..., 1, 0] = np.sum(normal * u_ts, axis=-1)
    second[..., 1, 1] = np.sum(normal * u_ss, axis=-1)

    if surface.chart_jacobian is not None:
        inverse = np.linalg.inv(surface.chart_jacobian)
        first = np.swapaxes(inverse, -1, -2) @ first @ inverse
        second = np.swapaxes(inverse, -1, -2) @ second @ inverse
    return FundamentalForms(first=first, second=second, normal=normal)


def sphere_patch(radius: float = 1.0, half_angle: float = 0.3, num: int = 33) -> GridSurface:
    """Latitude-longitude patch of a sphere (non-developable)."""
    t = np.linspace(-half_angle, half_angle, num)
    s = np.linspace(-half_angle, half_angle, num)
    T, S = np.meshgrid(t, s, indexing='ij')
    u = radius * np.stack([np.cos(S) * np.cos(T), np.cos(S) * np.sin(T), np.sin(S)], axis=-1)
    return GridSurface(t=t, s=s, u=u)


def developability_report(forms: FundamentalForms, tol: float = 1e-6) -> ResidualReport:
    return ResidualReport(residuals={'isometry': forms.isometry_residual(), 'gauss': forms.gauss_residual()},
                          tol=tol)


@dataclass(frozen=True)
class StripForms:
    """Scaled second fundamental form on the strip grid x1 x x2."""

    x1: np.ndarray
    x2: np.ndarray
    values: np.ndarray
    t: np.ndarray
    s: np.ndarray


def _strip_points(surface: RuledSurface, strip: StripChart, x1: Optional[np.ndarray], x2: Optional[np.ndarray]):
    x1 = surface.t if x1 is None else np.asarray(x1, dtype=float)
    x2 = np.linspace(-0.5, 0.5, 9) if x2 is None else np.asarray(x2, dtype=float)
    X1, X2 = np.meshgrid(x1, x2, indexing='ij')
    points = strip.chi_eps(X1, X2)
    _, theta, _ = surface.profile_at(X1)
    t, s = surface.locate(points, guess_t=X1, guess_s=strip.epsilon * X2 / np.cos(theta))
    return x1, x2, X1, X2, t, s


def rescaled_forms(surface: RuledSurface, strip: StripChart, x1: Optional[np.ndarray] = None,
                   x2: Optional[np.ndarray] = None) -> StripForms:
    """Pi_{y,eps} = (D^eps)^T (Pi_u o chi_eps) D^eps for y = u o chi_eps."""
    x1, x2, X1, X2, t, s = _strip_points(surface, strip, x1, x2)
    D = strip.D_eps(X1, X2)
    values = np.swapaxes(D, -1, -2) @ surface.second_form_at(t, s) @ D
    return StripForms(x1=x1, x2=x2, values=values, t=t, s=s)


def rescaled_forms_fd(surface: RuledSurface, strip: StripChart, x1: Optional[np.ndarray] = None,
                      x2: Optional[np.ndarray] = None) -> StripForms:
    """Pi_{y,eps} from differences of y: nu.d11 y, nu.d12 y / eps, nu.d22 y / eps^2."""
    x1, x2, X1, X2, t, s = _strip_points(surface, strip, x1, x2)
    y = surface.evaluate(t, s)
    h1 = float(x1[1] - x1[0])
    h2 = float(x2[1] - x2[0])
    y1 = derivative(y, h1, axis=0)
    y2 = derivative(y, h2, axis=1)
    normal = np.cross(y1, y2)
    normal /= np.linalg.norm(normal, axis=-1)[..., None]
    eps = strip.epsilon
    values = np.empty(X1.shape + (2, 2))
    values[..., 0, 0] = np.sum(normal * second_derivative(y, h1, axis=0), axis=-1)
    values[..., 0, 1] = values[..., 1, 0] = np.sum(normal * derivative(y1, h2, axis=1), axis=-1) / eps
    values[..., 1, 1] = np.sum(normal * second_derivative(y, h2, axis=1), axis=-1) / eps ** 2
    return StripForms(x1=x1, x2=x2, values=values, t=t, s=s)


def check_boundary_conditions(surface: RuledSurface, strip: StripChart, bd: BoundaryData,
                              tol: float = 1e-8, samples: int = 9) -> ResidualReport:
    """Traces of grad u on the short sides against (e1|e2) and (d1bar|d2bar)."""
    ref = surface.reference
    x2 = np.linspace(-0.5, 0.5, samples)
    residuals = {}
    for name, x1, target in (('start_trace', 0.0, START_TRACE), ('end_trace', ref.length, bd.d_bar[:, :2])):
        X1 = np.full_like(x2, x1)
        _, theta, _ = surface.profile_at(X1)
        t, _ = surface.locate(strip.chi_eps(X1, x2), guess_t=X1, guess_s=strip.epsilon * x2 / np.cos(theta))
        residuals[name] = float(np.max(np.abs(surface.gradient_at(t) - target)))
    return ResidualReport(residuals=residuals, tol=tol)


def cell_quantities(surface: RuledSurface) -> Tuple[np.ndarray, np.ndarray]:
    """Per-quad isometry residual and |det Pi| from differences (max over the four corners)."""
    forms = surface.forms()
    isometry = np.max(np.abs(forms.first - np.eye(2)), axis=(-1, -2))
    det = np.abs(np.linalg.det(forms.second))

    def corners(values):
        return np.max(np.stack([values[:-1, :-1], values[1:, :-1], values[1:, 1:], values[:-1, 1:]]), axis=0)

    return corners(isometry).ravel(), corners(det).ravel()


def to_mesh(surface: RuledSurface) -> meshio.Mesh:
    """Quad mesh of the sampled immersion with per-cell residuals."""
    nt, ns = surface.shape
    index = np.arange(nt * ns).reshape(nt, ns)
    quads = np.stack([index[:-1, :-1], index[1:, :-1], index[1:, 1:], index[:-1, 1:]], axis=-1).reshape(-1, 4)
    isometry, det = cell_quantities(surface)
    return meshio.Mesh(points=surface.u.reshape(-1, 3), cells=[('quad', quads)],
                       cell_data={'isometry_residual': [isometry], 'detPi': [det]})
