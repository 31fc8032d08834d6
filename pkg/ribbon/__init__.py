"""
Ribbon Gamma-convergence toolkit: relaxed bending densities, framed curves,
laminate recovery fields, ruled isometries and limit-energy minimisation.

Submodules are imported explicitly (``from ribbon.frames import solve_frame``).
"""

__version__ = "1.0.0"
