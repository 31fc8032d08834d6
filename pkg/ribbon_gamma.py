#!/usr/bin/env python3
"""
Ribbon Gamma-Convergence Toolkit

Computes relaxed bending densities, limit energies of framed curves, laminate
recovery fields and their ruled isometries, and checks J_eps -> J numerically.
JSON reports go to stdout and to the output directory; tables are CSV.

Usage:
    python ribbon_gamma.py <subcommand> [options]
    python ribbon_gamma.py --self-test

Examples:
    python ribbon_gamma.py alpha --isotropic
    python ribbon_gamma.py qbar --mu 1 --tau 1 --isotropic --flat
    python ribbon_gamma.py frame --mu 1 --tau 0.5 --grid 257
    python ribbon_gamma.py relax --field M.csv --n 16 --bd moebius
    python ribbon_gamma.py surface --mu 1 --tau 0 --n 8 --eps 0.05 --out surface.vtk
    python ribbon_gamma.py gamma-check --preset cylinder --eps 0.2,0.1,0.05
    python ribbon_gamma.py minimize --preset moebius --starts moebius,zero
"""

import argparse
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np
from dotenv import load_dotenv

from ribbon import __version__
from ribbon.energy import (COUPLINGS, InfiniteEnergy, SWEEP_PRESETS, GammaSweep, f_hat, f_relaxed,
                           recovery_surface, relaxed_target, strip_energy, sweep_preset)
from ribbon.errors import (FrameCollapseError, SolverError, SurfaceError, UnsupportedCaseError,
                           ValidationError)
from ribbon.frames import boundary_from_curve, check_A0_membership, frame_table, framed_curve_from
from ribbon.geometry import ReferenceCurve, build_reference, strip_chart
from ribbon.limit_energy import limit_functional, qbar
from ribbon.quadform import RelaxedDensity, moving_basis
from ribbon.relaxation import DIRECTION_RULES, CORRECTION_MODES, build_recovery, recovery_table, weak_residuals
from ribbon.ruled_surface import check_boundary_conditions, to_mesh
from ribbon.solver import GRADIENT_MODES, SEEDS, PenaltySolver, SolveOptions, moebius_preset
from utils.loaders import (load_boundary, load_curve, load_field, load_frustration, load_material, parse_list)
from utils.result_persistor import ResultPersistor, to_json
from utils.run_config import RunConfig, load_run_config

load_dotenv()

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_VALIDATION = 2
EXIT_SOLVER = 3


def setup_logging():
    """Setup logging with level from config."""
    log_level_str = os.getenv('LOG_LEVEL', 'INFO').upper()

    log_level = getattr(logging, log_level_str, None)
    if not isinstance(log_level, int):
        print(f"Invalid log level '{log_level_str}'. Using INFO instead.", file=sys.stderr)
        log_level = logging.INFO

    # stdout carries the JSON reports
    logging.basicConfig(
        level=log_level,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.StreamHandler(sys.stderr),
            logging.FileHandler(os.getenv('LOG_FILE', 'ribbon_gamma.log'))
        ]
    )

    logger = logging.getLogger(__name__)
    logger.debug(f"Logging level set to: {log_level_str}")
    return logger


logger = logging.getLogger(__name__)


class RibbonGammaTool:
    """Runs one subcommand against a validated RunConfig."""

    def __init__(self, config: RunConfig, persistor: Optional[ResultPersistor] = None, logger=None):
        self.config = config
        self.logger = logger or logging.getLogger(__name__)
        self.persistor = persistor or ResultPersistor(config.output_dir, self.logger)
        self._reference: Optional[ReferenceCurve] = None
        self._material: Optional[RelaxedDensity] = None

    @property
    def reference(self) -> ReferenceCurve:
        if self._reference is None:
            self._reference = load_curve(self.config.curve, self.config.grid)
        return self._reference

    @property
    def material(self) -> RelaxedDensity:
        if self._material is None:
            self._material = load_material(self.config.material)
        return self._material

    @property
    def frustration(self):
        return load_frustration(self.config.frustration, self.reference.length)

    def boundary(self, default=None):
        if self.config.boundary is None and default is not None:
            return default
        return load_boundary(self.config.boundary, self.reference)

    def validate_index(self, n: int) -> int:
        if n is None or int(n) < 4:
            raise ValidationError(f"Oscillation index n must be at least 4, got {n}")
        return int(n)

    def validate_eps_list(self, text: str) -> List[float]:
        eps_list = list(parse_list(text))
        if any(e <= 0 for e in eps_list):
            raise ValidationError(f"Strip widths must be positive: {text}")
        if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
            raise ValidationError(f"Strip widths must decrease: {text}")
        return eps_list

    def profile(self, mu: float, tau: float):
        """Constant (mu, tau) on the reference grid."""
        ref = self.reference
        return np.full(ref.num_samples, float(mu)), np.full(ref.num_samples, float(tau))

    def emit(self, report: Dict, filename: str) -> Dict:
        self.persistor.persist_json(report, filename)
        print(to_json(report))
        return report

    # subcommands

    def alpha(self, args) -> int:
        rd = self.material
        self.emit({'alpha_plus': rd.alpha_plus, 'alpha_minus': rd.alpha_minus,
                   'Vplus': rd.V_plus.tolist(), 'Vminus': rd.V_minus.tolist()}, 'alpha.json')
        return EXIT_OK

    def qbar(self, args) -> int:
        value = qbar(self.material, self.reference, self.frustration, args.x1, args.mu, args.tau)
        self.emit(value.to_dict(), 'qbar.json')
        return EXIT_OK

    def frame(self, args) -> int:
        ref = self.reference
        mu, tau = self.profile(args.mu, args.tau)
        fc = framed_curve_from(mu, tau, ref)
        bd = self.boundary(default=boundary_from_curve(fc, ref))
        limit = limit_functional(self.material, ref, self.frustration, fc)

        self.persistor.persist_table(frame_table(fc), 'frame.csv')
        self.persistor.persist_table(limit.trace, 'trace.csv')
        membership = check_A0_membership(fc, ref, bd, tol=self.config.tol)
        self.emit({'J': limit.value, 'endpoint': boundary_from_curve(fc, ref).to_dict(),
                   'membership': membership.to_dict()}, 'frame.json')
        return EXIT_OK

    def relax(self, args) -> int:
        ref = self.reference
        rd = self.material
        frustration = self.frustration
        M = load_field(args.field).on_grid(ref)
        bd = self.boundary() if self.config.boundary is not None else None
        n = self.validate_index(args.n)

        recovery = build_recovery(rd, ref, moving_basis(rd, ref), M, bd, n, direction_rule=args.direction_rule,
                                  blend=args.blend, correction=args.correction, tol=self.config.tol)
        energy_Mn = f_hat(rd, ref, recovery.field, frustration)
        if isinstance(energy_Mn, InfiniteEnergy):
            self.logger.warning(f"Recovery field left the rank-one set: {energy_Mn}")
            energy_Mn = float('inf')

        self.persistor.persist_table(recovery_table(recovery), 'relax_Mn.csv')
        report = {'energy_M': f_relaxed(rd, ref, M, frustration), 'energy_Mn': energy_Mn,
                  'weak_residuals': weak_residuals(recovery.field, M, ref.length), 'ctilde': recovery.ctilde}
        report.update({k: v for k, v in recovery.report().items() if k != 'ctilde'})
        self.emit(report, 'relax.json')
        return EXIT_OK

    def surface(self, args) -> int:
        ref = self.reference
        rd = self.material
        n = self.validate_index(args.n)
        if args.field:
            M = load_field(args.field).on_grid(ref)
            bd = self.boundary() if self.config.boundary is not None else None
        else:
            mu, tau = self.profile(args.mu, args.tau)
            fc = framed_curve_from(mu, tau, ref)
            M = relaxed_target(ref, limit_functional(rd, ref, self.frustration, fc).trace)
            bd = self.boundary(default=boundary_from_curve(fc, ref))

        surface, _ = recovery_surface(rd, ref, M, bd, n, num_s=args.num_s, direction_rule=args.direction_rule,
                                      blend=args.blend)
        report = {'eta': surface.eta, 'n': n, 'invariants': surface.report().to_dict()}
        if args.eps is not None:
            strip = strip_chart(ref, args.eps)
            report['eps'] = args.eps
            report['J_eps'] = strip_energy(rd, surface, strip, self.frustration)
            if bd is not None:
                report['boundary'] = check_boundary_conditions(surface, strip, bd).to_dict()
        if args.out:
            self.persistor.persist_mesh(to_mesh(surface), args.out)
        self.emit(report, 'surface.json')
        return EXIT_OK

    def gamma_check(self, args) -> int:
        if args.preset:
            preset = sweep_preset(args.preset, num_samples=args.grid)
            sweep = preset.sweep(persistor=self.persistor, logger=self.logger)
            fc, bd, eps_list = preset.fc, preset.bd, preset.eps_list
        else:
            ref = self.reference
            mu, tau = self.profile(args.mu, args.tau)
            fc = framed_curve_from(mu, tau, ref)
            bd = self.boundary(default=boundary_from_curve(fc, ref))
            sweep = GammaSweep(self.material, ref, self.frustration, persistor=self.persistor,
                               coupling=args.coupling, eps0=args.eps0,
                               recovery_options={'direction_rule': args.direction_rule, 'blend': args.blend},
                               logger=self.logger)
            eps_list = None
        if args.eps:
            eps_list = self.validate_eps_list(args.eps)
        if eps_list is None:
            raise ValidationError("gamma-check needs --eps or --preset")

        report = sweep.run(fc, bd, eps_list, output_filename='gamma_check.csv')
        self.emit(report.to_dict(), 'gamma_check.json')
        if not report.is_monotone(args.gap_tol):
            self.logger.error(f"Energy gaps are not monotone: {report.gaps.tolist()}")
            return EXIT_FAILURE
        return EXIT_OK

    def minimize(self, args) -> int:
        ref = self.reference
        rd = self.material
        frustration = self.frustration
        if args.preset == 'moebius':
            bd = moebius_preset(ref)
        elif self.config.boundary is not None:
            bd = self.boundary()
        else:
            raise ValidationError("minimize needs --bd or --preset moebius")

        starts = tuple(s.strip() for s in args.starts.split(',') if s.strip())
        if not starts:
            raise ValidationError("minimize needs at least one start in --starts")
        options = SolveOptions(stages=args.stages, max_inner=args.max_inner, gtol=self.config.gtol,
                               ctol=self.config.ctol, gradient=args.gradient, seeds=starts, seed=self.config.seed)
        result = PenaltySolver(rd, ref, frustration, bd, options, logger=self.logger).solve()

        self.persistor.persist_table(frame_table(result.framed_curve), 'minimize_frame.csv')
        report = result.to_dict()
        if args.mesh:
            M = relaxed_target(ref, limit_functional(rd, ref, frustration, result.framed_curve).trace)
            surface, _ = recovery_surface(rd, ref, M, bd, self.validate_index(args.n), blend=args.blend,
                                          direction_rule=args.direction_rule)
            self.persistor.persist_mesh(to_mesh(surface), args.mesh)
            report['surface'] = surface.report().to_dict()
        self.emit(report, 'minimize.json')
        return EXIT_OK


def run_self_test() -> List[Dict]:
    """Closed-form cases checked end to end on a coarse grid."""
    checks = []

    def check(name, value, expected, tol):
        passed = bool(abs(value - expected) <= tol)
        checks.append({'name': name, 'value': value, 'expected': expected, 'passed': passed})

    iso = RelaxedDensity.isotropic()
    check('alpha_plus isotropic', iso.alpha_plus, 2.0, 1e-10)
    check('alpha_minus isotropic', iso.alpha_minus, 2.0, 1e-10)
    soft = RelaxedDensity.from_matrix(np.diag([1.0, 1.0, 0.125]))
    check('alpha_plus soft shear', soft.alpha_plus, 0.5, 1e-10)

    ref = build_reference({'type': 'flat', 'length': 1.0}, num_samples=33)
    zero = load_frustration(None, ref.length)
    check('qbar (1, 1)', qbar(iso, ref, zero, 0.0, 1.0, 1.0).value, 4.0, 1e-8)
    check('qbar (1, 2)', qbar(iso, ref, zero, 0.0, 1.0, 2.0).value, 16.0, 1e-8)

    ones, zeros = np.ones(ref.num_samples), np.zeros(ref.num_samples)
    straight = framed_curve_from(zeros, zeros, ref)
    check('straight strip energy', limit_functional(iso, ref, zero, straight).value, 0.0, 1e-12)
    check('straight strip endpoint', float(np.linalg.norm(straight.y[-1] - [1.0, 0.0, 0.0])), 0.0, 1e-12)
    cylinder = framed_curve_from(ones, zeros, ref)
    check('cylinder energy', limit_functional(iso, ref, zero, cylinder).value, 1.0, 1e-10)
    return checks


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON or KEY=VALUE run config')
    common.add_argument('--material', help="material JSON file or 'isotropic'")
    common.add_argument('--isotropic', dest='material', action='store_const', const='isotropic')
    common.add_argument('--curve', help="curve JSON file or 'flat'")
    common.add_argument('--flat', dest='curve', action='store_const', const='flat')
    common.add_argument('--pi0', help="frustration: CSV/JSON file or 'M11,M12,M22'")
    common.add_argument('--bd', help="boundary data JSON, 'moebius' or 'identity'")
    common.add_argument('--grid', type=int, help='samples on [0, l] (2^k + 1)')
    common.add_argument('--tol', type=float)
    common.add_argument('--gtol', type=float)
    common.add_argument('--ctol', type=float)
    common.add_argument('--output-dir')
    common.add_argument('--seed', type=int, help='random seed')

    recovery = argparse.ArgumentParser(add_help=False)
    recovery.add_argument('--n', type=int, default=8, help='oscillation index')
    recovery.add_argument('--direction-rule', choices=DIRECTION_RULES, default='max_det')
    recovery.add_argument('--blend', type=float, default=0.0, help='transition width in units of l/n^2')

    curve_args = argparse.ArgumentParser(add_help=False)
    curve_args.add_argument('--mu', type=float, default=0.0)
    curve_args.add_argument('--tau', type=float, default=0.0)

    parser = argparse.ArgumentParser(prog='ribbon_gamma', description='Ribbon Gamma-convergence toolkit')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('--self-test', action='store_true', help='run the built-in closed-form checks')
    sub = parser.add_subparsers(dest='command')

    sub.add_parser('alpha', parents=[common], help='relaxation constants and kernels')

    p = sub.add_parser('qbar', parents=[common, curve_args], help='limit density at one point')
    p.add_argument('--x1', type=float, default=0.0)

    p = sub.add_parser('frame', parents=[common, curve_args], help='framed curve and limit energy')

    p = sub.add_parser('relax', parents=[common, recovery], help='laminate recovery fields')
    p.add_argument('--field', required=True, help='CSV t,M11,M12,M22')
    p.add_argument('--correction', choices=CORRECTION_MODES, default='auto')

    p = sub.add_parser('surface', parents=[common, recovery, curve_args], help='ruled recovery surface')
    p.add_argument('--field', help='CSV t,M11,M12,M22 (default: field of the framed curve)')
    p.add_argument('--eps', type=float)
    p.add_argument('--num-s', type=int, default=17)
    p.add_argument('--out', help='mesh file (.obj or .vtk)')

    p = sub.add_parser('gamma-check', parents=[common, recovery, curve_args], help='J_eps against J')
    p.add_argument('--preset', choices=SWEEP_PRESETS)
    p.add_argument('--eps', '--eps-list', dest='eps', help='comma separated, decreasing')
    p.add_argument('--coupling', choices=COUPLINGS, default='linear')
    p.add_argument('--eps0', type=float)
    p.add_argument('--gap-tol', type=float, default=1e-10)

    p = sub.add_parser('minimize', parents=[common, recovery], help='minimise J under boundary data')
    p.add_argument('--preset', choices=('moebius',))
    p.add_argument('--starts', default='zero', help=f"comma separated from {', '.join(SEEDS)}")
    p.add_argument('--gradient', choices=GRADIENT_MODES, default='adjoint')
    p.add_argument('--stages', type=int, default=5)
    p.add_argument('--max-inner', type=int, default=500)
    p.add_argument('--mesh', help='also write the recovery surface mesh (.obj or .vtk)')

    return parser


COMMANDS = {
    'alpha': RibbonGammaTool.alpha,
    'qbar': RibbonGammaTool.qbar,
    'frame': RibbonGammaTool.frame,
    'relax': RibbonGammaTool.relax,
    'surface': RibbonGammaTool.surface,
    'gamma-check': RibbonGammaTool.gamma_check,
    'minimize': RibbonGammaTool.minimize,
}


def run(argv: Sequence[str]) -> int:
    """Parse arguments and run one subcommand; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_VALIDATION

    if args.self_test:
        checks = run_self_test()
        print(to_json({'checks': checks, 'passed': all(c['passed'] for c in checks)}))
        return EXIT_OK if all(c['passed'] for c in checks) else EXIT_FAILURE

    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_VALIDATION

    try:
        config = load_run_config(args.config, material=args.material, curve=args.curve, frustration=args.pi0,
                                 boundary=args.bd, grid=args.grid, tol=args.tol, gtol=args.gtol, ctol=args.ctol,
                                 output_dir=args.output_dir, seed=args.seed)
        tool = RibbonGammaTool(config)
        logger.info(f"Running {args.command} (grid {config.grid}, output {config.output_dir})")
        return COMMANDS[args.command](tool, args)
    except ValidationError as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_VALIDATION
    except (SolverError, FrameCollapseError, SurfaceError, UnsupportedCaseError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_SOLVER
    except Exception as e:
        logger.error(f"Error running {args.command}: {e}")
        return EXIT_FAILURE


def main():
    """Main function to handle command line arguments and run the toolkit."""
    setup_logging()
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
