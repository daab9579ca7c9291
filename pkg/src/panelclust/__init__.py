"""Bayesian latent-group regression for spatial panel data.

Clusters spatial locations that share regression parameters, using a
mixture-of-finite-mixtures partition prior tilted by an exponential
within-cluster edge-count cost on a known adjacency graph, a Gaussian-process
temporal error model with conjugate regression updates, a two-step
auxiliary-variable Gibbs sampler, and prior-sampling marginal-likelihood
estimation for choosing the spatial smoothness weight.
"""

__version__ = "0.1.0"

from .data import PanelData, load_panel_csv, write_panel_csv
from .errors import (NumericalError, PanelclustError, ParseError,
                     ValidationError)
from .estimator import SpatialPanelClusterer
from .graph import SpatialGraph, load_adjacency
from .likelihood import (ClusterParams, ClusterSuffStats, Hyperparams,
                         cluster_suffstats, conditional_loglik,
                         correlation_matrix, draw_beta_sigma2,
                         integrated_loglik)
from .partition import Partition, iter_partitions
from .prior import (MfmPrior, MrfCohesion, conditional_log_weights,
                    conditional_weights, log_prior_score)
from .sampler import (ChainOutput, ChainState, McmcConfig, run_chain,
                      run_prior_chain)
from .selection import SelectionConfig, estimate_log_marginal, select_lambda
from .summary import (coclustering_matrix, dahl_estimate, rand_index,
                      stability_score, summarize_params)
from .simulate import builtin_dgp, grid_dgp, us48_graph, us48_scenario

__all__ = [
    "__version__",
    "PanelData", "load_panel_csv", "write_panel_csv",
    "PanelclustError", "ParseError", "ValidationError", "NumericalError",
    "SpatialPanelClusterer",
    "SpatialGraph", "load_adjacency",
    "ClusterParams", "ClusterSuffStats", "Hyperparams",
    "cluster_suffstats", "conditional_loglik", "correlation_matrix",
    "draw_beta_sigma2", "integrated_loglik",
    "Partition", "iter_partitions",
    "MfmPrior", "MrfCohesion", "conditional_log_weights",
    "conditional_weights", "log_prior_score",
    "ChainOutput", "ChainState", "McmcConfig", "run_chain", "run_prior_chain",
    "SelectionConfig", "estimate_log_marginal", "select_lambda",
    "coclustering_matrix", "dahl_estimate", "rand_index", "stability_score",
    "summarize_params",
    "builtin_dgp", "grid_dgp", "us48_graph", "us48_scenario",
]
