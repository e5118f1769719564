"""Coupled particle-fluid / finite-element-structure simulator.

A weakly compressible SPH fluid solver and a nonlinear finite-element
structural solver, coupled through virtual boundary particles generated
behind closest-point projections onto the moving interface, driven by an
iterative Dirichlet-Neumann partitioned loop.
"""

from .backend import BACKEND_NAME, available_backends

__version__ = "0.1.0"

__all__ = ["BACKEND_NAME", "available_backends", "__version__"]
