"""Version age over gossip networks: who subscribes, and how fast to sample.

A source process at the server advances by a random increment each slot.
Nodes either subscribe (sample the server at its committed rate) or free
ride on gossip from in-neighbors.  This package computes steady-state
version ages in closed form for line, tree, and star networks, estimates
them by Monte Carlo for arbitrary digraphs, checks age-ceiling stability
of subscription profiles, and finds the sampling rate that maximizes the
server's subscription revenue net of cost.
"""

from .analytic import (
    RegimeReport,
    StarRegime,
    StarThresholds,
    line_beta_star,
    line_fs,
    line_k_star,
    line_node_age,
    line_periodic_profile,
    profile_ages,
    star_profile,
    star_regime,
    star_thresholds,
    tree_cell_size,
    tree_fs,
    tree_level_profile,
)
from .core import (
    ConfigurationError,
    EnumerationCapError,
    ExtendedRate,
    InfeasibleSearchError,
    NoStableProfileError,
    SubscriptionProfile,
    SystemParams,
    Topology,
    UnsupportedTopologyError,
    ac_threshold,
    server_age,
    subscriber_age,
)
from .equilibrium import (
    AnalyticOracle,
    Candidate,
    CostFunction,
    EquilibriumReport,
    GeneralClass,
    LineClass,
    NodeStatus,
    SearchSpec,
    SimOracle,
    StabilityVerdict,
    StarClass,
    TreeClass,
    enumerate_stable_profiles,
    is_ac_stable,
    optimize_beta,
    server_preferred,
    server_utility,
)
from .sim import (
    AgeEstimate,
    SimConfig,
    SimState,
    alternate_age,
    estimate_ages,
    simulate_trajectories,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "AgeEstimate",
    "AnalyticOracle",
    "Candidate",
    "ConfigurationError",
    "CostFunction",
    "EnumerationCapError",
    "EquilibriumReport",
    "ExtendedRate",
    "GeneralClass",
    "InfeasibleSearchError",
    "LineClass",
    "NoStableProfileError",
    "NodeStatus",
    "RegimeReport",
    "SearchSpec",
    "SimConfig",
    "SimOracle",
    "SimState",
    "StabilityVerdict",
    "StarClass",
    "StarRegime",
    "StarThresholds",
    "SubscriptionProfile",
    "SystemParams",
    "Topology",
    "TreeClass",
    "UnsupportedTopologyError",
    "ac_threshold",
    "alternate_age",
    "enumerate_stable_profiles",
    "estimate_ages",
    "is_ac_stable",
    "line_beta_star",
    "line_fs",
    "line_k_star",
    "line_node_age",
    "line_periodic_profile",
    "optimize_beta",
    "profile_ages",
    "server_age",
    "server_preferred",
    "server_utility",
    "simulate_trajectories",
    "star_profile",
    "star_regime",
    "star_thresholds",
    "step",
    "subscriber_age",
    "tree_cell_size",
    "tree_fs",
    "tree_level_profile",
    "__version__",
]
