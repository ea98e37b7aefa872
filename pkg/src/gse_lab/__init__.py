"""Ground state energies of weighted graphs and step graphons.

Unconstrained, microcanonical and threshold-constrained energies, cut norms and
cut distances, the constructive transforms relating them, and the sampling
experiments built on top.
"""

from __future__ import annotations

from .core import (
    EnergyResult,
    InteractionMatrix,
    ProbabilityDistribution,
    SpinConfiguration,
    ThresholdSpec,
    WeightedGraph,
)
from .errors import (
    BudgetExceeded,
    ConsistencyError,
    CouplingError,
    DomainError,
    GseLabError,
    InvariantViolation,
    ParseError,
    ValidationError,
)
from .graph_energy import gse_exhaustive, gse_local_search, ltgse_graph, mgse
from .graphon import StepGraphon, block_diagonal, constant_graphon, graphon_from_graph
from .graphon_energy import FractionalProfile, energy_of_profile, grid_oracle, minimize_energy

__version__ = "0.1.0"

__all__ = [
    "BudgetExceeded",
    "ConsistencyError",
    "CouplingError",
    "DomainError",
    "EnergyResult",
    "FractionalProfile",
    "GseLabError",
    "InteractionMatrix",
    "InvariantViolation",
    "ParseError",
    "ProbabilityDistribution",
    "SpinConfiguration",
    "StepGraphon",
    "ThresholdSpec",
    "ValidationError",
    "WeightedGraph",
    "block_diagonal",
    "constant_graphon",
    "energy_of_profile",
    "graphon_from_graph",
    "grid_oracle",
    "gse_exhaustive",
    "gse_local_search",
    "ltgse_graph",
    "mgse",
    "minimize_energy",
]
