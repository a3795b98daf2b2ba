"""Prequential diagnostics for chain event graphs and discrete Bayesian networks."""
from .bn import (DiscreteBN, bn_global_monitor, bn_to_staged_tree, conditional_node_monitor,
                 marginal_node_monitor, node_monitors, parent_child_monitor)
from .data import Dataset, load_csv, order_by, sample_from_ceg
from .dirichlet import (BetaState, DirichletState, beta_binomial, bn_log_marginal_likelihood,
                        log_marginal_likelihood, observe, predictive, reference_prior)
from .kernels import BACKEND
from .modelio import dump_model, load_bn, load_model
from .monitors import (ceg_global_monitor, hasse_neighbors, loo_situation_monitor,
                       position_monitor_conditional, position_monitor_marginal, propagate_evidence,
                       situation_order_monitor, staging_monitor)
from .scoring import MonitorTrace, cumulative_z, score
from .search import ahc_search, score_merge
from .tree import (ChainEventGraph, EventTree, StagedTree, Staging, VariableSpec, build_event_tree,
                   compute_positions, edge_event_paths, to_ceg)

__version__ = "0.1.0"
