#!/usr/bin/env python3
"""
Exception hierarchy for the ribbon toolkit.
"""

from typing import List, Optional


class RibbonError(Exception):
    """Base class for every error raised by the toolkit."""


class ValidationError(RibbonError, ValueError):
    """Input violates a precondition (bad material, data, grid, ...)."""


class GeometryError(ValidationError):
    """Reference curve or strip chart is degenerate or not injective."""

    def __init__(self, message: str, location: Optional[float] = None):
        if location is not None:
            message = f"{message} (at t = {location:.6g})"
        super().__init__(message)
        self.location = location


class FrameCollapseError(RibbonError):
    """Directors d1, d2 became parallel."""


class SurfaceError(RibbonError):
    """Ruled chart or surface construction failed."""


class SolverError(RibbonError):
    """An iterative solve did not reach its tolerance."""

    def __init__(self, message: str, best_residual: Optional[float] = None,
                 trace: Optional[List[float]] = None):
        if best_residual is not None:
            message = f"{message} (best residual {best_residual:.3e})"
        super().__init__(message)
        self.best_residual = best_residual
        self.trace = trace or []


class UnsupportedCaseError(RibbonError):
    """Requested construction is outside what the toolkit can build."""
