"""Robust graph-based label propagation with novel-class discovery."""
from .core import (ConfigError, DataError, FeatureMatrix, GeoTime, Method, NumericalError,
                   PriorLabels, SimilarityGraph, SituError, SolverConfig, build_fitting_weights,
                   build_indicator, decode_indicator)
from .graph import build_graph, can_graph, gaussian_graph, laplacian, normalize, pairwise_sq_distances
from .solvers import (SolveResult, assign_labels, evaluate_objective, solve, solve_capped, solve_gss,
                      solve_l1, solve_reweighted_generic)

__version__ = "0.1.0"
from .harness import EvalReport, SyntheticSpec, evaluate, generate, grid_search, robustness_comparison
from .spacetime import Resolution, SituationSummary, SpaceTimeCell, aggregate, trend
from .dataio import Dataset, export, ingest
