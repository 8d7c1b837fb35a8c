"""Thin-plate-spline interpolation with hierarchical-matrix solvers."""

from .core import BACKEND
from .geometry import Domain, NodeSet, boundary_concentrated_nodes, uniform_nodes
from .kernel import TPS, Interpolant, KernelOrder, eval_interpolant, phi, poly_basis

__version__ = "0.1.0"
