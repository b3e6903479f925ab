"""Ridge-penalized beta-model fits for large sparse undirected networks.

The edge between nodes i and j occurs independently with probability
sigmoid(beta_i + beta_j); the fit maximizes the likelihood of the observed
degrees under a ridge penalty on deviations of beta from its mean.  Because
the maximizer is constant on classes of equal degree, the solver works in
the space of distinct degrees and scales to millions of nodes.
"""

from .analysis import GofStatistic, TopicRelevance, WabsResult, gof_statistic, wabs
from .estimator import BetaModel
from .graph_io import (
    DegreeHistogram,
    DegreeSequence,
    EdgeList,
    as_degree_histogram,
    build_histogram,
    degrees_of,
    read_degree_file,
    read_edge_list,
)
from .model import ClassParams, ModelDiagnostics, diagnostics, edge_prob
from .selection import SelectionConfig, SelectionResult, select
from .simulate import McReport, SimScenario, run_mc, sample_network
from .solver import (
    DegenerateGraphError,
    DivergedError,
    FitConfig,
    FitResult,
    check_stationarity,
    expand,
    fit,
)
from .tuning import TuneResult, aic, default_grid, tune

__version__ = "0.1.0"

__all__ = [
    "BetaModel",
    "ClassParams",
    "DegenerateGraphError",
    "DegreeHistogram",
    "DegreeSequence",
    "DivergedError",
    "EdgeList",
    "FitConfig",
    "FitResult",
    "GofStatistic",
    "McReport",
    "ModelDiagnostics",
    "SelectionConfig",
    "SelectionResult",
    "SimScenario",
    "TopicRelevance",
    "TuneResult",
    "WabsResult",
    "aic",
    "as_degree_histogram",
    "build_histogram",
    "check_stationarity",
    "default_grid",
    "degrees_of",
    "diagnostics",
    "edge_prob",
    "expand",
    "fit",
    "gof_statistic",
    "read_degree_file",
    "read_edge_list",
    "run_mc",
    "sample_network",
    "select",
    "tune",
    "wabs",
]
