#!/usr/bin/env python3
"""
Equilibrium framed curves: minimise the limit functional J over nodal (mu, tau)
subject to the endpoint conditions, by an augmented Lagrangian with quadratic
penalty continuation and L-BFGS-B inner solves.
"""

import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from .errors import FrameCollapseError, SolverError, ValidationError
from .frames import (BoundaryData, FramedCurve, SkewField, endpoint_map_gradient, framed_curve_from,
                     solve_frame)
from .geometry import ReferenceCurve
from .limit_energy import FrustrationField, qbar_arrays
from .numerics import trapezoid_weights
from .quadform import RelaxedDensity

logger = logging.getLogger(__name__)

BARRIER_VALUE = 1e9
GRADIENT_MODES = ('fd', 'adjoint')
SEEDS = ('moebius', 'arc', 'zero', 'random')


@dataclass
class DesignVector:
    """Nodal bending and twist on the reference grid, with constraint weights."""

    mu: np.ndarray
    tau: np.ndarray
    penalty: float = 10.0
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(12))
    trace: List[Dict] = field(default_factory=list)

    @classmethod
    def zeros(cls, ref: ReferenceCurve, **kwargs) -> "DesignVector":
        return cls(mu=np.zeros(ref.num_samples), tau=np.zeros(ref.num_samples), **kwargs)

    @classmethod
    def from_array(cls, x: np.ndarray, **kwargs) -> "DesignVector":
        x = np.asarray(x, dtype=float)
        half = len(x) // 2
        return cls(mu=x[:half].copy(), tau=x[half:].copy(), **kwargs)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.mu, self.tau])

    def with_values(self, x: np.ndarray) -> "DesignVector":
        return DesignVector.from_array(x, penalty=self.penalty, multipliers=self.multipliers, trace=self.trace)

    def framed_curve(self, ref: ReferenceCurve, bd: Optional[BoundaryData] = None) -> FramedCurve:
        return framed_curve_from(self.mu, self.tau, ref, bd)


def endpoint_target(ref: ReferenceCurve, bd: BoundaryData) -> Tuple[np.ndarray, np.ndarray]:
    """R(l) = (B'|N|e3)(l)^T R_bar and Gamma = y_bar."""
    return ref.frame3(-1).T @ bd.R_bar, bd.y_bar


def constraint_residuals(path, ref: ReferenceCurve, bd: BoundaryData) -> np.ndarray:
    """Nine rotation entries and three translation entries of the endpoint mismatch."""
    R_target, y_target = endpoint_target(ref, bd)
    return np.concatenate([(path.end - R_target).ravel(), path.gamma - y_target])


@dataclass(frozen=True)
class ObjectiveValue:
    value: float
    gradient: np.ndarray
    J: float
    residual: float
    barrier: bool = False


def _limit_value(rd: RelaxedDensity, ref: ReferenceCurve, frustration: FrustrationField,
                 mu: np.ndarray, tau: np.ndarray) -> Tuple[float, np.ndarray]:
    """Trapezoid sum of Qbar; the weights pair with the cell averages of the frame steps."""
    values, _, _ = qbar_arrays(rd, ref.D, frustration.at(ref.t), mu, tau)
    return float(trapezoid_weights(ref.num_samples, ref.h) @ values), values


def _pointwise_slopes(rd: RelaxedDensity, ref: ReferenceCurve, frustration: FrustrationField,
                      mu: np.ndarray, tau: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """d Qbar / d mu and d Qbar / d tau per node by central differences."""
    pi0 = frustration.at(ref.t)
    step_mu = 1e-5 * np.maximum(1.0, np.abs(mu))
    step_tau = 1e-5 * np.maximum(1.0, np.abs(tau))

    def q(m, t):
        return qbar_arrays(rd, ref.D, pi0, m, t)[0]

    d_mu = (q(mu + step_mu, tau) - q(mu - step_mu, tau)) / (2.0 * step_mu)
    d_tau = (q(mu, tau + step_tau) - q(mu, tau - step_tau)) / (2.0 * step_tau)
    return d_mu, d_tau


def _lagrangian(J: float, c: np.ndarray, dv: DesignVector) -> float:
    return J - float(dv.multipliers @ c) + 0.5 * dv.penalty * float(c @ c)


def _evaluate(rd, ref, frustration, dv: DesignVector, bd: BoundaryData) -> Tuple[float, float, np.ndarray, object]:
    J, _ = _limit_value(rd, ref, frustration, dv.mu, dv.tau)
    path = solve_frame(SkewField.from_reference(ref, dv.mu, dv.tau))
    c = constraint_residuals(path, ref, bd)
    return _lagrangian(J, c, dv), J, c, path


def objective(rd: RelaxedDensity, ref: ReferenceCurve, frustration: Optional[FrustrationField],
              dv: DesignVector, bd: BoundaryData, mode: str = 'adjoint', fd_step: float = 1e-6) -> ObjectiveValue:
    """
    Augmented Lagrangian J - y.c + penalty/2 |c|^2 and its gradient in (mu, tau).

    mode 'fd' differentiates the whole value by central differences over nodal values;
    'adjoint' combines pointwise Qbar slopes with the reverse-mode endpoint Jacobian.
    """
    if mode not in GRADIENT_MODES:
        raise ValidationError(f"Unknown gradient mode: {mode}")
    frustration = frustration if frustration is not None else FrustrationField.zero(ref.length)
    ref.check_grid(dv.mu, 'mu')
    ref.check_grid(dv.tau, 'tau')
    try:
        value, J, c, path = _evaluate(rd, ref, frustration, dv, bd)
        if not np.isfinite(value):
            raise FrameCollapseError("Objective is not finite")
    except FrameCollapseError as e:
        logger.warning(f"Barrier value returned: {e}")
        return ObjectiveValue(value=BARRIER_VALUE, gradient=np.zeros(2 * ref.num_samples), J=np.inf,
                              residual=np.inf, barrier=True)

    if mode == 'adjoint':
        weights = trapezoid_weights(ref.num_samples, ref.h)
        d_mu, d_tau = _pointwise_slopes(rd, ref, frustration, dv.mu, dv.tau)
        jac = endpoint_map_gradient(SkewField.from_reference(ref, dv.mu, dv.tau), path)
        adjoint = dv.penalty * c - dv.multipliers
        gradient = np.concatenate([weights * d_mu + adjoint @ jac.d_a13, weights * d_tau + adjoint @ jac.d_a23])
    else:
        x = dv.as_array()
        gradient = np.empty_like(x)
        for i in range(len(x)):
            step = fd_step * max(1.0, abs(x[i]))
            plus, minus = x.copy(), x.copy()
            plus[i] += step
            minus[i] -= step
            forward = _evaluate(rd, ref, frustration, dv.with_values(plus), bd)[0]
            backward = _evaluate(rd, ref, frustration, dv.with_values(minus), bd)[0]
            gradient[i] = (forward - backward) / (2.0 * step)
    return ObjectiveValue(value=value, gradient=gradient, J=J, residual=float(np.linalg.norm(c)))


@dataclass(frozen=True)
class SolveOptions:
    penalty: float = 10.0
    growth: float = 10.0
    stages: int = 5
    max_inner: int = 500
    gtol: float = 1e-6
    ctol: float = 1e-6
    gradient: str = 'adjoint'
    seeds: Tuple[str, ...] = ('zero',)
    seed: int = 0

    def validate(self) -> "SolveOptions":
        if self.penalty <= 0 or self.growth <= 1 or self.stages < 1:
            raise ValidationError("Penalty must be positive, growth above 1 and at least one stage")
        if self.gtol <= 0 or self.ctol <= 0:
            raise ValidationError("Tolerances must be positive")
        unknown = [s for s in self.seeds if s not in SEEDS]
        if unknown:
            raise ValidationError(f"Unknown seeds: {unknown}")
        return self


@dataclass
class SolveResult:
    framed_curve: FramedCurve
    design: DesignVector
    J: float
    residual: float
    gradient_norm: float
    seed: str
    converged: bool
    history: List[float] = field(default_factory=list)
    trace: List[Dict] = field(default_factory=list)

    @property
    def is_descent(self) -> bool:
        """Objective non-increasing within every penalty stage."""
        for stage in self.trace:
            values = np.asarray(stage.get('values', []))
            if len(values) > 1 and np.any(np.diff(values) > 1e-10 * max(1.0, abs(values[0]))):
                return False
        return True

    def to_dict(self) -> Dict:
        return {'J': self.J, 'residual': self.residual, 'gradient_norm': self.gradient_norm, 'seed': self.seed,
                'converged': self.converged,
                'stages': [{k: v for k, v in stage.items() if k != 'values'} for stage in self.trace]}


def initial_design(ref: ReferenceCurve, seed: str, rng: Optional[np.random.Generator] = None) -> DesignVector:
    """Named starting points; 'moebius' twists by pi and bends with a small sinusoid."""
    length = ref.length
    t = ref.t
    if seed == 'zero':
        return DesignVector.zeros(ref)
    if seed == 'moebius':
        return DesignVector(mu=0.1 * np.sin(2.0 * np.pi * t / length), tau=np.full(t.shape, np.pi / length))
    if seed == 'arc':
        return DesignVector(mu=np.full(t.shape, 2.0 * np.pi / length), tau=np.full(t.shape, np.pi / length))
    if seed == 'random':
        rng = rng if rng is not None else np.random.default_rng(0)
        return DesignVector(mu=rng.normal(scale=0.5, size=t.shape), tau=rng.normal(scale=0.5, size=t.shape))
    raise ValidationError(f"Unknown seed: {seed}")


class PenaltySolver:
    """Penalty continuation with multiplier updates and L-BFGS-B inner solves."""

    def __init__(self, rd: RelaxedDensity, ref: ReferenceCurve, frustration: Optional[FrustrationField],
                 bd: BoundaryData, options: Optional[SolveOptions] = None, logger=None):
        self.rd = rd
        self.ref = ref
        self.frustration = frustration if frustration is not None else FrustrationField.zero(ref.length)
        self.bd = bd.validate(ref.length)
        self.options = (options or SolveOptions()).validate()
        self.logger = logger or logging.getLogger(__name__)
        self.start_time = None

    def _stage(self, dv: DesignVector) -> Tuple[DesignVector, Dict]:
        values: List[float] = []
        last: Dict = {}

        def fun(x):
            result = objective(self.rd, self.ref, self.frustration, dv.with_values(x), self.bd,
                               mode=self.options.gradient)
            last.update(x=np.array(x, copy=True), value=result.value, count=last.get('count', 0) + 1)
            return result.value, result.gradient

        def record(x):
            # L-BFGS-B reports the iterate it last evaluated
            if 'x' in last and np.array_equal(x, last['x']):
                values.append(last['value'])
            else:
                values.append(fun(x)[0])

        start = dv.as_array()
        values.append(fun(start)[0])
        outcome = scipy_minimize(fun, start, jac=True, method='L-BFGS-B', callback=record,
                                 options={'maxiter': self.options.max_inner, 'gtol': 0.1 * self.options.gtol,
                                          'ftol': 1e-15})
        dv = dv.with_values(outcome.x)
        final = objective(self.rd, self.ref, self.frustration, dv, self.bd, mode=self.options.gradient)
        return dv, {'penalty': dv.penalty, 'value': final.value, 'J': final.J, 'residual': final.residual,
                    'gradient_norm': float(np.linalg.norm(final.gradient, np.inf)),
                    'iterations': int(outcome.nit), 'evaluations': last['count'], 'nfev': int(outcome.nfev),
                    'message': str(outcome.message), 'values': values}

    def solve_from(self, dv: DesignVector, seed: str = 'custom') -> SolveResult:
        dv = DesignVector(mu=np.array(dv.mu, dtype=float), tau=np.array(dv.tau, dtype=float),
                          penalty=self.options.penalty, multipliers=np.zeros(12))
        trace: List[Dict] = []
        history: List[float] = []
        for stage in range(1, self.options.stages + 1):
            self.logger.info(f"Processing stage {stage}/{self.options.stages}: penalty = {dv.penalty:.3g}")
            dv, info = self._stage(dv)
            info['stage'] = stage
            trace.append(info)
            history.extend(info['values'])
            self.logger.info(f"Stage {stage}/{self.options.stages} completed: J = {info['J']:.10g}, "
                             f"residual = {info['residual']:.3e}, iterations = {info['iterations']}")
            if info['residual'] <= self.options.ctol and info['gradient_norm'] <= self.options.gtol:
                break
            c = constraint_residuals(solve_frame(SkewField.from_reference(self.ref, dv.mu, dv.tau)), self.ref, self.bd)
            dv = DesignVector(mu=dv.mu, tau=dv.tau, penalty=dv.penalty * self.options.growth,
                              multipliers=dv.multipliers - dv.penalty * c)

        last = trace[-1]
        converged = last['residual'] <= self.options.ctol and last['gradient_norm'] <= self.options.gtol
        return SolveResult(framed_curve=dv.framed_curve(self.ref, self.bd), design=dv, J=last['J'],
                           residual=last['residual'], gradient_norm=last['gradient_norm'], seed=seed,
                           converged=converged, history=history, trace=trace)

    def solve(self, init: Optional[DesignVector] = None) -> SolveResult:
        """Run every seed (or the given start) and keep the best feasible result."""
        self.start_time = datetime.now()
        rng = np.random.default_rng(self.options.seed)
        starts = [('custom', init)] if init is not None else [(s, initial_design(self.ref, s, rng))
                                                              for s in self.options.seeds]
        results: List[SolveResult] = []
        try:
            for i, (name, start) in enumerate(starts, 1):
                self.logger.info(f"Processing seed {i}/{len(starts)}: {name}")
                results.append(self.solve_from(start, seed=name))
        except Exception as e:
            self.logger.error(f"Error during minimisation: {e}")
            raise
        finally:
            self._log_final_summary(results)

        feasible = [r for r in results if r.converged]
        if not feasible:
            best = min(results, key=lambda r: r.residual)
            raise SolverError(f"Penalty continuation stalled: best endpoint residual {best.residual:.3e}, "
                              f"gradient {best.gradient_norm:.3e}", best_residual=best.residual, trace=best.trace)
        return min(feasible, key=lambda r: r.J)

    def _log_final_summary(self, results: List[SolveResult]):
        end_time = datetime.now()
        duration = end_time - self.start_time if self.start_time else timedelta(0)

        self.logger.info("=" * 60)
        self.logger.info("MINIMISATION SUMMARY")
        self.logger.info("=" * 60)
        self.logger.info(f"Start time: {self.start_time}")
        self.logger.info(f"End time: {end_time}")
        self.logger.info(f"Duration: {duration}")
        self.logger.info(f"Seeds processed: {len(results)}")
        for r in results:
            self.logger.info(f"Seed {r.seed}: J = {r.J:.10g}, residual = {r.residual:.3e}, converged = {r.converged}")
        self.logger.info("=" * 60)


def minimize(rd: RelaxedDensity, ref: ReferenceCurve, frustration: Optional[FrustrationField], bd: BoundaryData,
             init: Optional[DesignVector] = None, options: Optional[SolveOptions] = None) -> SolveResult:
    return PenaltySolver(rd, ref, frustration, bd, options).solve(init)


def moebius_preset(ref: ReferenceCurve) -> BoundaryData:
    """Half-twist data y_bar = 0, d1bar = e1, d2bar = -e2."""
    if not ref.is_flat:
        logger.warning("Moebius data are defined for the flat rectangle; reference is curved")
    bd = BoundaryData.moebius()
    logger.debug(f"Moebius data nondegenerate: {bd.is_nondegenerate(ref)}")
    return bd


def parameter_scan(rd: RelaxedDensity, ref: ReferenceCurve, frustration: Optional[FrustrationField],
                   curvatures: Sequence[float]) -> np.ndarray:
    """J along the family mu = const, tau = 0."""
    frustration = frustration if frustration is not None else FrustrationField.zero(ref.length)
    zeros = np.zeros(ref.num_samples)
    return np.array([_limit_value(rd, ref, frustration, np.full(ref.num_samples, c), zeros)[0] for c in curvatures])
