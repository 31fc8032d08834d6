#!/usr/bin/env python3
"""
Strip energies J_eps of recovery surfaces and the Gamma-convergence sweep
comparing them with the limit value J.
"""

import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import UnsupportedCaseError, ValidationError
from .frames import (BoundaryData, FramedCurve, SkewField, boundary_from_curve, framed_curve_from,
                     is_nondegenerate, solve_frame)
from .geometry import ReferenceCurve, build_reference, strip_chart
from .limit_energy import FrustrationField, limit_functional
from .numerics import loglog_slope, simpson_weights
from .quadform import RelaxedDensity, SymField2, det_vector, from_vector, moving_basis, to_vector
from .relaxation import RecoveryFields, build_recovery, profile_from_generator
from .ruled_surface import RuledSurface, build_isometry, check_boundary_conditions, rescaled_forms

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ['eps', 'n', 'J_eps', 'J_limit', 'gap']
COUPLINGS = ('linear', 'diagonal')
RANK_ONE_TOLERANCE = 1e-8


@dataclass(frozen=True)
class InfiniteEnergy:
    """F_hat of a field that leaves the zero-determinant set."""

    max_det: float

    def __str__(self) -> str:
        return f"inf (max |det M| = {self.max_det:.3g})"


def _shift(ref: ReferenceCurve, frustration: Optional[FrustrationField], nodes: np.ndarray) -> np.ndarray:
    if frustration is None or frustration.is_zero:
        return np.zeros(nodes.shape + (3,))
    Dinv = np.linalg.inv(ref.basis_at(nodes))
    return to_vector(np.swapaxes(Dinv, -1, -2) @ frustration.matrix_at(nodes) @ Dinv)


def _field_samples(ref: ReferenceCurve, M, frustration: Optional[FrustrationField]):
    nodes, weights = M.quadrature()
    m = M.at(nodes)
    detD = np.linalg.det(ref.basis_at(nodes))
    return nodes, weights, m, m - _shift(ref, frustration, nodes), detD


def quadratic_part(rd: RelaxedDensity, ref: ReferenceCurve, M,
                   frustration: Optional[FrustrationField] = None) -> float:
    """integral of Q(M - D^-T Pi0 D^-1) det D."""
    _, weights, _, shifted, detD = _field_samples(ref, M, frustration)
    return float(np.sum(weights * rd.q(shifted) * detD))


def f_hat(rd: RelaxedDensity, ref: ReferenceCurve, M,
          frustration: Optional[FrustrationField] = None) -> Union[float, InfiniteEnergy]:
    """Energy restricted to rank-one fields; InfiniteEnergy when det M does not vanish."""
    _, weights, m, shifted, detD = _field_samples(ref, M, frustration)
    max_det = float(np.max(np.abs(det_vector(m))))
    if max_det > RANK_ONE_TOLERANCE:
        return InfiniteEnergy(max_det=max_det)
    return float(np.sum(weights * rd.q(shifted) * detD))


def f_relaxed(rd: RelaxedDensity, ref: ReferenceCurve, M,
              frustration: Optional[FrustrationField] = None) -> float:
    """integral of (Q(M - P) + alpha+ (det M)+ + alpha- (det M)-) det D."""
    _, weights, m, shifted, detD = _field_samples(ref, M, frustration)
    det = det_vector(m)
    density = rd.q(shifted) + rd.alpha_plus * np.maximum(det, 0.0) + rd.alpha_minus * np.maximum(-det, 0.0)
    return float(np.sum(weights * density * detD))


def strip_energy(rd: RelaxedDensity, surface: RuledSurface, strip, frustration: FrustrationField,
                 num_x2: int = 17) -> float:
    """Tensor Simpson rule for J_eps on Omega = I x (-1/2, 1/2)."""
    ref = surface.reference
    x2 = np.linspace(-0.5, 0.5, num_x2)
    forms = rescaled_forms(surface, strip, x1=ref.t, x2=x2)
    X1, X2 = np.meshgrid(ref.t, x2, indexing='ij')
    D = strip.D_eps(X1, X2)
    Dinv = np.linalg.inv(D)
    relative = np.swapaxes(Dinv, -1, -2) @ (forms.values - frustration.pi0_eps(X1, X2, strip.epsilon)) @ Dinv
    integrand = rd.q(to_vector(relative)) * strip.det_D_eps(X1, X2)
    weights = simpson_weights(len(ref.t), ref.h)[:, None] * simpson_weights(num_x2, x2[1] - x2[0])[None, :]
    return float(np.sum(weights * integrand))


def relaxed_target(ref: ReferenceCurve, trace: pd.DataFrame) -> SymField2:
    """M = mu D1xD1 + tau (D1xD2 + D2xD1) + gamma* D2xD2 from a limit-functional trace."""
    m_b = np.stack([trace['mu'].to_numpy(), trace['gamma_star'].to_numpy(), 2.0 * trace['tau'].to_numpy()], axis=-1)
    D = ref.D
    return SymField2(ref.t, to_vector(D @ from_vector(m_b) @ np.swapaxes(D, -1, -2)))


def _basis_coords(ref: ReferenceCurve, M: SymField2) -> np.ndarray:
    D = ref.D
    return to_vector(np.swapaxes(D, -1, -2) @ from_vector(M.m) @ D)


@dataclass
class SweepEntry:
    eps: float
    n: int
    J_eps: float
    J_limit: float
    boundary: Dict[str, float] = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return self.J_eps - self.J_limit

    def to_row(self) -> Dict:
        return {'eps': self.eps, 'n': self.n, 'J_eps': self.J_eps, 'J_limit': self.J_limit, 'gap': self.gap}


@dataclass
class EnergyReport:
    entries: List[SweepEntry]
    J_limit: float
    coupling: str = 'linear'

    @property
    def eps_list(self) -> List[float]:
        return [e.eps for e in self.entries]

    @property
    def J_eps(self) -> np.ndarray:
        return np.array([e.J_eps for e in self.entries])

    @property
    def gaps(self) -> np.ndarray:
        return np.array([e.gap for e in self.entries])

    @property
    def slope(self) -> Optional[float]:
        """log-log slope of |gap| against eps (None when gaps vanish)."""
        gaps = np.abs(self.gaps)
        if len(gaps) < 2 or np.any(gaps <= 1e-14):
            return None
        return loglog_slope(np.array(self.eps_list), gaps)

    def is_monotone(self, tol: float = 1e-10) -> bool:
        gaps = np.abs(self.gaps)
        return bool(np.all(np.diff(gaps) <= tol))

    def table(self) -> pd.DataFrame:
        return pd.DataFrame([e.to_row() for e in self.entries], columns=REPORT_COLUMNS)

    def to_dict(self) -> Dict:
        return {'J_limit': self.J_limit, 'coupling': self.coupling, 'slope': self.slope,
                'monotone': self.is_monotone(),
                'entries': [dict(e.to_row(), boundary=e.boundary) for e in self.entries]}


def coupled_index(eps: float, eps0: float, coupling: str = 'linear') -> int:
    """Oscillation index paired with a strip width."""
    if coupling == 'linear':
        return max(4, int(round(eps0 / eps)))
    if coupling == 'diagonal':
        return max(4, int(round(eps0 / np.sqrt(eps))))
    raise ValidationError(f"Unknown coupling: {coupling}")


def recovery_surface(rd: RelaxedDensity, ref: ReferenceCurve, M: SymField2, bd: Optional[BoundaryData], n: int,
                     num_s: int = 17, **options) -> Tuple[RuledSurface, Optional[RecoveryFields]]:
    """Surface realising M directly when it is rank one, otherwise through the laminate construction."""
    m_b = _basis_coords(ref, M)
    scale = max(1.0, float(np.max(np.abs(m_b))) ** 2)
    if np.max(np.abs(det_vector(m_b))) <= RANK_ONE_TOLERANCE * scale:
        a13, a23 = m_b[:, 0], 0.5 * m_b[:, 2]
        lam, theta = profile_from_generator(a13, a23)
        path = solve_frame(SkewField.from_reference(ref, a13, a23))
        p = np.cos(theta)[:, None] * ref.tangent + np.sin(theta)[:, None] * ref.N
        return build_isometry(ref, path, lam, p, num_s=num_s), None
    recovery = build_recovery(rd, ref, moving_basis(rd, ref), M, bd, n, **options)
    return build_isometry(ref, recovery.path, recovery.lambda_n, recovery.p_n, num_s=num_s,
                          breaks=recovery.field.jumps()), recovery


class GammaSweep:
    """Runs recovery constructions over strip widths and compares J_eps with J."""

    def __init__(self,
                 rd: RelaxedDensity,
                 ref: ReferenceCurve,
                 frustration: Optional[FrustrationField] = None,
                 persistor=None,
                 coupling: str = 'linear',
                 eps0: Optional[float] = None,
                 recovery_options: Optional[Dict] = None,
                 logger=None):
        if coupling not in COUPLINGS:
            raise ValidationError(f"Unknown coupling: {coupling}")
        self.rd = rd
        self.ref = ref
        self.frustration = frustration if frustration is not None else FrustrationField.zero(ref.length)
        self.persistor = persistor
        self.coupling = coupling
        self.eps0 = eps0
        self.recovery_options = dict(recovery_options or {})
        self.logger = logger or logging.getLogger(__name__)

        self.total_entries_processed = 0
        self.start_time = None
        self.last_entry = None

    def _reference_eps0(self, eps_list: Sequence[float]) -> float:
        if self.eps0 is not None:
            return self.eps0
        first = float(eps_list[0])
        return 8.0 * (first if self.coupling == 'linear' else np.sqrt(first))

    def _process_entry(self, M: SymField2, bd: BoundaryData, eps: float, n: int, J_limit: float,
                       surfaces: Dict[int, RuledSurface]) -> SweepEntry:
        if n not in surfaces:
            surfaces[n], _ = recovery_surface(self.rd, self.ref, M, bd, n, **self.recovery_options)
        surface = surfaces[n]
        strip = strip_chart(self.ref, eps)
        J_eps = strip_energy(self.rd, surface, strip, self.frustration)
        boundary = check_boundary_conditions(surface, strip, bd).residuals
        return SweepEntry(eps=float(eps), n=n, J_eps=J_eps, J_limit=J_limit, boundary=boundary)

    def run(self, fc: FramedCurve, bd: BoundaryData, eps_list: Sequence[float],
            output_filename: Optional[str] = None) -> EnergyReport:
        """Sweep the strip widths in the given order."""
        if not len(eps_list):
            raise ValidationError("Sweep needs at least one strip width")
        self.start_time = datetime.now()
        self.total_entries_processed = 0
        bd.validate(self.ref.length)

        limit = limit_functional(self.rd, self.ref, self.frustration, fc)
        M = relaxed_target(self.ref, limit.trace)
        A_M = SkewField.from_reference(self.ref, fc.mu, fc.tau)
        if not is_nondegenerate(A_M) and not self.frustration.is_zero:
            raise UnsupportedCaseError("Degenerate framed curve with nonzero frustration has no recovery construction")

        eps0 = self._reference_eps0(eps_list)
        total = len(eps_list)
        self.logger.info(f"Starting Gamma sweep over {total} strip widths ({self.coupling} coupling, eps0 = {eps0:.4g})")
        self.logger.info(f"Limit value J = {limit.value:.12g}")

        entries: List[SweepEntry] = []
        surfaces: Dict[int, RuledSurface] = {}
        try:
            for i, eps in enumerate(eps_list, 1):
                n = coupled_index(float(eps), eps0, self.coupling)
                self.logger.info(f"Processing entry {i}/{total}: eps = {eps:g}, n = {n}")
                entry = self._process_entry(M, bd, float(eps), n, limit.value, surfaces)
                entries.append(entry)
                if self.persistor is not None and output_filename:
                    if i == 1:
                        self.persistor.persist_table(pd.DataFrame([entry.to_row()]), output_filename, REPORT_COLUMNS)
                    else:
                        self.persistor.append_table(pd.DataFrame([entry.to_row()]), output_filename, REPORT_COLUMNS)
                self.logger.info(f"Entry {i}/{total} completed: J_eps = {entry.J_eps:.12g}, gap = {entry.gap:.3e}")
                self.total_entries_processed = i
                self.last_entry = entry
        except Exception as e:
            self.logger.error(f"Error during Gamma sweep: {e}")
            self._log_progress("ERROR")
            raise
        finally:
            self._log_final_summary(output_filename)

        return EnergyReport(entries=entries, J_limit=limit.value, coupling=self.coupling)

    def _log_progress(self, status: str):
        if self.last_entry is not None:
            self.logger.info(f"Sweep {status} - last eps processed: {self.last_entry.eps:g}")
            self.logger.info(f"Processed {self.total_entries_processed} entries")

    def _log_final_summary(self, output_filename: Optional[str]):
        end_time = datetime.now()
        duration = end_time - self.start_time if self.start_time else timedelta(0)

        self.logger.info("=" * 60)
        self.logger.info("GAMMA SWEEP SUMMARY")
        self.logger.info("=" * 60)
        self.logger.info(f"Start time: {self.start_time}")
        self.logger.info(f"End time: {end_time}")
        self.logger.info(f"Duration: {duration}")
        self.logger.info(f"Total entries processed: {self.total_entries_processed}")
        if self.last_entry is not None:
            self.logger.info(f"Final gap: {self.last_entry.gap:.6e}")
        self.logger.info(f"Output file: {output_filename}")
        self.logger.info("=" * 60)


def gamma_sweep(rd: RelaxedDensity, ref: ReferenceCurve, frustration: Optional[FrustrationField],
                fc: FramedCurve, bd: BoundaryData, eps_list: Sequence[float], coupling: str = 'linear',
                eps0: Optional[float] = None, **recovery_options) -> EnergyReport:
    sweep = GammaSweep(rd, ref, frustration, coupling=coupling, eps0=eps0, recovery_options=recovery_options)
    return sweep.run(fc, bd, eps_list)


@dataclass
class SweepPreset:
    name: str
    rd: RelaxedDensity
    ref: ReferenceCurve
    frustration: FrustrationField
    fc: FramedCurve
    bd: BoundaryData
    eps_list: List[float]
    coupling: str = 'linear'
    recovery_options: Dict = field(default_factory=dict)

    def sweep(self, persistor=None, logger=None) -> GammaSweep:
        return GammaSweep(self.rd, self.ref, self.frustration, persistor=persistor, coupling=self.coupling,
                          recovery_options=self.recovery_options, logger=logger)


SWEEP_PRESETS = ('straight', 'cylinder', 'laminate')


def sweep_preset(name: str, num_samples: Optional[int] = None) -> SweepPreset:
    """
    Fixtures on the flat unit rectangle with isotropic material.

    straight: undeformed strip; cylinder: mu = 1, tau = 0 (already rank one);
    laminate: mu = 1, tau = 0 under frustration 2I, whose optimal field is M = I (det M > 0).
    """
    if name not in SWEEP_PRESETS:
        raise ValidationError(f"Unknown sweep preset: {name}")
    rd = RelaxedDensity.isotropic()
    ref = build_reference({'type': 'flat', 'length': 1.0},
                          num_samples=num_samples or (2049 if name == 'laminate' else 513))
    mu = 0.0 if name == 'straight' else 1.0
    fc = framed_curve_from(np.full(ref.num_samples, mu), np.zeros(ref.num_samples), ref)
    bd = boundary_from_curve(fc, ref)
    if name == 'laminate':
        return SweepPreset(name=name, rd=rd, ref=ref, frustration=FrustrationField.constant(2.0 * np.eye(2)),
                           fc=fc, bd=bd, eps_list=[4e-3, 2e-3, 1e-3, 5e-4], coupling='diagonal',
                           recovery_options={'direction_rule': 'pinning', 'blend': 1.0})
    return SweepPreset(name=name, rd=rd, ref=ref, frustration=FrustrationField.zero(), fc=fc, bd=bd,
                       eps_list=[0.2, 0.1, 0.05])
