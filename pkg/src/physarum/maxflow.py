"""Max flow via the capacitated Physarum solver, plus an exact oracle.

The solver route embeds a deliberately long, high-capacity virtual path
from source to sink, injects the virtual path's capacity as inflow, and
lets the capacity caps squeeze the real network to its maximum; the flow
left on the virtual path at convergence is the surplus, so
max_flow = inflow - virtual_flow.  The oracle route is plain
shortest-augmenting-path (Edmonds-Karp) and is exact on integer
capacities.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .engine import RunResult, SolverConfig, run
from .graph import Graph, Mode, build_graph

VIRTUAL_SCALE = 100.0

# stopping tolerance defaults by problem size
EPSILON_SMALL = 5e-5
EPSILON_LARGE = 1e-4
EPSILON_SIZE_CUTOFF = 400


@dataclass(frozen=True)
class AugmentedGraph:
    graph: Graph
    source: int
    sink: int
    base_arc_count: int
    virtual_arc_ids: tuple[int, ...]
    virtual_node: int | None
    virtual_length: float
    virtual_capacity: float


@dataclass(frozen=True)
class MaxFlowResult:
    max_flow: float
    max_flow_rounded: int | None
    flows: np.ndarray  # base arcs only
    virtual_flow: float
    inflow: float
    iterations: int
    converged: bool
    run: RunResult
    augmented: AugmentedGraph


def default_epsilon(node_count: int) -> float:
    return EPSILON_SMALL if node_count < EPSILON_SIZE_CUTOFF else EPSILON_LARGE


def embed_virtual_path(graph: Graph, source: int, sink: int) -> AugmentedGraph:
    """Append the virtual source-sink path.

    Its length is 100x the summed arc lengths and its capacity 100x the
    summed arc capacities, so it is longer and wider than any real path.
    If a direct source-sink arc exists, the virtual path detours through a
    fresh node so the graph gains no parallel arc pair.
    """
    if source == sink:
        raise ValueError("source and sink must differ")
    v_length = VIRTUAL_SCALE * float(graph.length.sum())
    v_capacity = VIRTUAL_SCALE * float(graph.capacity.sum())
    if graph.mode is Mode.DIRECTED:
        direct = any(a.tail == source and a.head == sink for a in graph.arcs)
    else:
        direct = any({a.tail, a.head} == {source, sink} for a in graph.arcs)

    arcs = [(a.tail, a.head, a.length, a.capacity, a.unit_cost) for a in graph.arcs]
    m = len(arcs)
    if direct:
        v_node = graph.node_count
        arcs.append((source, v_node, v_length / 2.0, v_capacity, 0.0))
        arcs.append((v_node, sink, v_length / 2.0, v_capacity, 0.0))
        node_count = graph.node_count + 1
        virtual_ids = (m, m + 1)
    else:
        v_node = None
        arcs.append((source, sink, v_length, v_capacity, 0.0))
        node_count = graph.node_count
        virtual_ids = (m,)
    augmented = build_graph(node_count, arcs, graph.mode, allow_parallel=True)
    return AugmentedGraph(
        graph=augmented,
        source=source,
        sink=sink,
        base_arc_count=m,
        virtual_arc_ids=virtual_ids,
        virtual_node=v_node,
        virtual_length=v_length,
        virtual_capacity=v_capacity,
    )


def cppa_maxflow(
    graph: Graph,
    source: int,
    sink: int,
    config: SolverConfig | None = None,
) -> MaxFlowResult:
    """Run the capacitated solver on the virtual-path augmentation.

    Base arc lengths are normalized to 1 (the max-flow convention); the
    inflow equals the virtual capacity.
    """
    unit = build_graph(
        graph.node_count,
        [(a.tail, a.head, 1.0, a.capacity, a.unit_cost) for a in graph.arcs],
        graph.mode,
        allow_parallel=True,
    )
    aug = embed_virtual_path(unit, source, sink)
    if config is None:
        config = SolverConfig(epsilon=default_epsilon(aug.graph.node_count))
    inflow = aug.virtual_capacity
    injections = np.zeros(aug.graph.node_count)
    injections[source] = inflow
    injections[sink] = -inflow
    result = run(aug.graph, aug.graph.length, injections, config)
    virtual_flow = float(result.flow[aug.virtual_arc_ids[0]])
    max_flow = inflow - virtual_flow
    rounded = None
    if np.all(graph.capacity == np.round(graph.capacity)):
        rounded = int(round(max_flow))
    return MaxFlowResult(
        max_flow=max_flow,
        max_flow_rounded=rounded,
        flows=result.flow[: aug.base_arc_count].copy(),
        virtual_flow=virtual_flow,
        inflow=inflow,
        iterations=result.iterations,
        converged=result.converged,
        run=result,
        augmented=aug,
    )


@dataclass(frozen=True)
class OracleMaxFlow:
    value: float
    flows: np.ndarray  # per base arc; signed in undirected mode
    source_side: frozenset


def _residual_arcs(graph: Graph):
    """Residual arc arrays: per base arc, a forward slot 2a and a reverse
    slot 2a+1 (undirected edges start with capacity on both slots)."""
    m = graph.arc_count
    to = np.empty(2 * m, dtype=np.int64)
    cap = np.empty(2 * m, dtype=float)
    to[0::2] = graph.head
    to[1::2] = graph.tail
    cap[0::2] = graph.capacity
    cap[1::2] = graph.capacity if graph.mode is Mode.UNDIRECTED else 0.0
    adj: list[list[int]] = [[] for _ in range(graph.node_count)]
    for a in range(m):
        adj[graph.tail[a]].append(2 * a)
        adj[graph.head[a]].append(2 * a + 1)
    return to, cap, adj


def oracle_maxflow(graph: Graph, source: int, sink: int, eps: float = 1e-12) -> OracleMaxFlow:
    """Exact max flow by shortest augmenting paths.

    Arcs are scanned in id order at every node, so ties break
    deterministically.  Exact for integer capacities.
    """
    to, cap, adj = _residual_arcs(graph)
    n = graph.node_count
    value = 0.0
    while True:
        parent = np.full(n, -1, dtype=np.int64)
        parent[source] = -2
        queue = deque([source])
        while queue and parent[sink] == -1:
            u = queue.popleft()
            for e in adj[u]:
                v = to[e]
                if parent[v] == -1 and cap[e] > eps:
                    parent[v] = e
                    queue.append(v)
        if parent[sink] == -1:
            break
        # bottleneck along the augmenting path
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
        value += bottleneck

    if graph.mode is Mode.UNDIRECTED:
        flows = (cap[1::2] - cap[0::2]) / 2.0
    else:
        flows = graph.capacity - cap[0::2]

    seen = np.zeros(n, dtype=bool)
    seen[source] = True
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for e in adj[u]:
            v = to[e]
            if not seen[v] and cap[e] > eps:
                seen[v] = True
                queue.append(v)
    return OracleMaxFlow(
        value=float(value),
        flows=flows,
        source_side=frozenset(np.flatnonzero(seen).tolist()),
    )


def cut_capacity(graph: Graph, source_side) -> float:
    """Capacity of the cut (source_side, rest)."""
    source_side = set(source_side)
    total = 0.0
    for a in graph.arcs:
        tail_in = a.tail in source_side
        head_in = a.head in source_side
        if tail_in == head_in:
            continue
        if graph.mode is Mode.UNDIRECTED or tail_in:
            total += a.capacity
    return total
