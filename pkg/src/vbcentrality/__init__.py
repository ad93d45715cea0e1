"""Bayesian eigenvector centrality from noisy edge observations.

Variational inference for latent log-centralities (VBC), a sparse-GP
extension mapping node attributes to centralities (VBC-GP), classic
centrality measures, generators, an SIR simulator and the experiment
harness behind the command-line tool.
"""

from .centrality import (CentralityVector, degree_centrality, eigenvector_centrality,
                         katz_centrality)
from .errors import (ConvergenceError, DivergenceError, NotStronglyConnectedError,
                     NumericalError, ValidationError, VbcError)
from .graph import ObservationDataset, WeightedDigraph, average_observations
from .metrics import kendall_tau, pearson_r, spearman_rho, topk_overlap
from .sparse_gp import KernelConfig, SparseGpState
from .vbc import VbcPosterior, VbcPriors, fit_vbc, l2_bound
from .vbcgp import VbcGpPosterior, fit_vbcgp, l4_bound, predict_centrality

__version__ = "0.1.0"

__all__ = [
    "CentralityVector", "ConvergenceError", "DivergenceError", "KernelConfig",
    "NotStronglyConnectedError", "NumericalError", "ObservationDataset", "SparseGpState",
    "ValidationError", "VbcError", "VbcGpPosterior", "VbcPosterior", "VbcPriors",
    "WeightedDigraph", "average_observations", "degree_centrality", "eigenvector_centrality",
    "fit_vbc", "fit_vbcgp", "katz_centrality", "kendall_tau", "l2_bound", "l4_bound",
    "pearson_r", "predict_centrality", "spearman_rho", "topk_overlap",
]
