"""Nonlinear Petrov-Galerkin finite elements for convection-diffusion in L^q.

The discrete solution minimises the residual in the dual norm of a
W^{1,q'}-type test space; see :func:`pgsolve.solver.solve_mixed`.
"""
from .duality import TestNormConfig
from .fem import FieldFunction, build_space, enrich_space, interpolate
from .mesh import (BoundaryTag, Mesh, build_corner_modified_mesh, build_interior_layer_mesh,
                   build_interval_mesh, build_unit_square_mesh, classify_boundary)
from .problems import ExampleId, make_example
from .solver import MixedSolution, SolverConfig, solve_mixed

__version__ = "0.1.0"
