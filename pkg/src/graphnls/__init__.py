"""Nonlinear Schrodinger ground and bound states on metric graphs.

Submodules: ``graph`` (metric graphs and finite elements), ``spectrum``,
``functional`` (energy and thresholds), ``gradient``, ``cones``, ``flow``,
``minmax``, ``bifurcation``, ``lab`` (finite-dimensional invariance checks)
and ``cli``.
"""

__version__ = "0.1.0"

from .bifurcation import BranchPoint, Verdict, bifurcation_verdict, sweep
from .cones import ConeClass, cone_classify, separation_delta
from .estimators import BifurcationBranch, BoundStateSolver
from .exceptions import GraphNLSError
from .flow import FlowParams, Mode, Termination, deformation_flow, descend
from .functional import (
    KEstimate,
    ProblemParams,
    ThresholdReport,
    compute_thresholds,
    energy,
    gn_estimate,
)
from .gradient import constrained_gradient, lagrange_multiplier, newton_polish
from .graph import Discretization, MetricGraph, assemble, build_graph, interval, load_graph, lollipop, loop, star
from .minmax import SolutionRecord, build_cap, find_sign_changing, positive_solution, solve_ladder
from .spectrum import SpectralData, eigenpairs, spectral_gap_indices

__all__ = [
    "__version__",
    "BifurcationBranch", "BoundStateSolver", "BranchPoint", "ConeClass", "Discretization",
    "FlowParams", "GraphNLSError", "KEstimate", "MetricGraph", "Mode", "ProblemParams",
    "SolutionRecord", "SpectralData", "Termination", "ThresholdReport", "Verdict",
    "assemble", "bifurcation_verdict", "build_cap", "build_graph", "compute_thresholds",
    "cone_classify", "constrained_gradient", "deformation_flow", "descend", "eigenpairs", "energy",
    "find_sign_changing", "gn_estimate", "interval", "lagrange_multiplier", "load_graph",
    "lollipop", "loop", "newton_polish", "positive_solution", "separation_delta",
    "solve_ladder", "spectral_gap_indices", "star", "sweep",
]
