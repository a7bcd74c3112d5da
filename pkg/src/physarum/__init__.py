"""Capacity-constrained Physarum solver.

The core iteration alternates a grounded network Poisson solve with a
conductivity adaptation whose capacity cap keeps per-arc flow within
bounds; on top of it sit three applications: max flow (virtual-path
embedding), min-cost max flow (two-phase cost-length substitution), and
link-capacitated traffic assignment (per-origin subnetworks with
apportioned caps).  Each ships with an exact classical oracle.
"""

from .ctap import (
    CtapConfig,
    CtapResult,
    OdDemand,
    TrafficNetwork,
    cppa_ctap,
    rgap,
    traffic_network,
    travel_time,
)
from .engine import RunResult, SolverConfig, SolverState, adapt_conductivity, converged, run, step
from .generate import (
    GenSpec,
    grid_on_pipe,
    hearn_network,
    random_directed,
    random_directed_connected,
    three_path_fixture,
)
from .graph import (
    Arc,
    Graph,
    Mode,
    ViolationReport,
    build_graph,
    validate_capacity,
    validate_conservation,
)
from .laplacian import PoissonSystem, PressureVector, assemble, edge_flows, solve
from .maxflow import MaxFlowResult, cppa_maxflow, embed_virtual_path, oracle_maxflow
from .mincostflow import McmfResult, cost_lengths, cppa_mcmf, oracle_mcmf, total_cost

__version__ = "0.1.0"
