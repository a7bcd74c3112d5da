"""Min-cost max flow: two-phase capacitated-solver route plus exact oracle.

Phase 1 finds the max flow (virtual-path solver).  Phase 2 re-runs the
capacitated dynamics on the original graph with arc lengths replaced by
unit costs and the max flow injected; routing then settles on cheap
routes, so the converged flow is a minimum-cost max flow and
min_cost = sum |Q| * unit_cost.  The oracle is successive shortest paths
with a label-correcting (SPFA) search on the residual network.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .engine import RunResult, SolverConfig, run
from .errors import DimensionMismatchError
from .graph import Graph, Mode
from .maxflow import MaxFlowResult, cppa_maxflow, default_epsilon

# lengths must stay positive when substituting unit costs
COST_FLOOR = 1e-6


@dataclass(frozen=True)
class McmfResult:
    max_flow: float
    max_flow_rounded: int | None
    min_cost: float
    flows: np.ndarray
    phase1_iterations: int
    phase2_iterations: int
    converged: bool
    phase1: MaxFlowResult
    phase2: RunResult | None


def cost_lengths(graph: Graph, floor: float = COST_FLOOR) -> np.ndarray:
    """Per-arc lengths for the cost phase: the (floored) unit costs."""
    return np.maximum(graph.unit_cost, floor)


def total_cost(graph: Graph, flows) -> float:
    """sum |Q_a| * unit_cost_a over all arcs."""
    flows = np.asarray(flows, dtype=float)
    if flows.shape != (graph.arc_count,):
        raise DimensionMismatchError(
            f"flows: expected {graph.arc_count} entries, got {flows.shape}"
        )
    return float(np.abs(flows) @ graph.unit_cost)


def cppa_mcmf(
    graph: Graph,
    source: int,
    sink: int,
    config: SolverConfig | None = None,
    inject_rounded: bool | None = None,
    marginal_cost=None,
) -> McmfResult:
    """Two-phase solve.

    inject_rounded controls whether phase 2 injects the rounded or the raw
    phase-1 max flow; the default rounds exactly when all capacities are
    integral (injecting above the true max flow has no feasible fixed
    point).  marginal_cost, if given, is a callback flows -> per-arc
    lengths re-evaluated every phase-2 iteration (non-constant unit
    costs); the default is the constant-cost substitution.
    """
    if config is None:
        config = SolverConfig(epsilon=default_epsilon(graph.node_count))
    phase1 = cppa_maxflow(graph, source, sink, config)
    if inject_rounded is None:
        inject_rounded = phase1.max_flow_rounded is not None
    mf_inject = float(phase1.max_flow_rounded) if inject_rounded else phase1.max_flow

    if mf_inject <= 0.0:
        return McmfResult(
            max_flow=phase1.max_flow,
            max_flow_rounded=phase1.max_flow_rounded,
            min_cost=0.0,
            flows=np.zeros(graph.arc_count),
            phase1_iterations=phase1.iterations,
            phase2_iterations=0,
            converged=phase1.converged,
            phase1=phase1,
            phase2=None,
        )

    cost_graph = graph.with_lengths(cost_lengths(graph))
    injections = np.zeros(graph.node_count)
    injections[source] = mf_inject
    injections[sink] = -mf_inject
    if marginal_cost is None:
        lengths = cost_graph.length
    else:
        lengths = lambda state: np.asarray(marginal_cost(state.flow), dtype=float)
    phase2 = run(cost_graph, lengths, injections, config)
    flows = phase2.flow
    return McmfResult(
        max_flow=phase1.max_flow,
        max_flow_rounded=phase1.max_flow_rounded,
        min_cost=total_cost(graph, flows),
        flows=flows,
        phase1_iterations=phase1.iterations,
        phase2_iterations=phase2.iterations,
        converged=phase1.converged and phase2.converged,
        phase1=phase1,
        phase2=phase2,
    )


@dataclass(frozen=True)
class OracleMcmf:
    max_flow: float
    min_cost: float
    flows: np.ndarray


def oracle_mcmf(graph: Graph, source: int, sink: int, eps: float = 1e-12) -> OracleMcmf:
    """Exact min-cost max flow by successive shortest paths.

    Shortest paths on the residual network use a label-correcting (SPFA)
    relaxation; arcs are scanned in id order and only strict improvements
    relabel, so the result is deterministic.  Undirected edges are
    expanded into an arc pair sharing the base arc's capacity per
    direction; the reported base-arc flow is the net of the two.
    """
    darcs = []  # (tail, head, cap, cost, base_arc, sign)
    for a in graph.arcs:
        darcs.append((a.tail, a.head, a.capacity, a.unit_cost, a.id, 1.0))
        if graph.mode is Mode.UNDIRECTED:
            darcs.append((a.head, a.tail, a.capacity, a.unit_cost, a.id, -1.0))

    nd = len(darcs)
    to = np.empty(2 * nd, dtype=np.int64)
    cap = np.empty(2 * nd, dtype=float)
    cost = np.empty(2 * nd, dtype=float)
    adj: list[list[int]] = [[] for _ in range(graph.node_count)]
    for i, (t, h, c, w, _, _) in enumerate(darcs):
        to[2 * i], cap[2 * i], cost[2 * i] = h, c, w
        to[2 * i + 1], cap[2 * i + 1], cost[2 * i + 1] = t, 0.0, -w
        adj[t].append(2 * i)
        adj[h].append(2 * i + 1)

    n = graph.node_count
    total_flow = 0.0
    while True:
        dist = np.full(n, np.inf)
        parent = np.full(n, -1, dtype=np.int64)
        dist[source] = 0.0
        queue = deque([source])
        queued = np.zeros(n, dtype=bool)
        queued[source] = True
        while queue:
            u = queue.popleft()
            queued[u] = False
            du = dist[u]
            for e in adj[u]:
                if cap[e] > eps:
                    v = to[e]
                    nd_ = du + cost[e]
                    if nd_ < dist[v] - 1e-15:
                        dist[v] = nd_
                        parent[v] = e
                        if not queued[v]:
                            queued[v] = True
                            queue.append(v)
        if not np.isfinite(dist[sink]):
            break
        bottleneck = np.inf
        v = sink
        while v != source:
            e = parent[v]
            bottleneck = min(bottleneck, cap[e])
            v = to[e ^ 1]
        v = sink
        while v != source:
            e = parent[v]
            cap[e] -= bottleneck
            cap[e ^ 1] += bottleneck
            v = to[e ^ 1]
        total_flow += bottleneck

    flows = np.zeros(graph.arc_count)
    for i, (_, _, c, _, base, sign) in enumerate(darcs):
        pushed = c - cap[2 * i]
        flows[base] += sign * pushed
    return OracleMcmf(
        max_flow=float(total_flow),
        min_cost=total_cost(graph, flows),
        flows=flows,
    )
