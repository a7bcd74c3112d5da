"""Link-capacitated traffic assignment on the capacitated Physarum core.

Each origin r owns a conductivity field D^r over the directed network.
Every iteration solves one grounded Poisson system per origin (grounded
at r, +total demand at r, -demand at each destination), clamps the
per-origin flows nonnegative, and adapts D^r with the capacity cap
apportioned by each origin's share of the aggregate link flow, so the
aggregate is what respects the physical capacity.  Link travel times
relax halfway toward the volume-delay value of the aggregate flow each
iteration, and convergence is declared on the relative gap.
"""

from __future__ import annotations

import heapq
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import laplacian
from .engine import CEILING_FACTOR, ZERO_DROP
from .errors import (
    DisconnectedInjectionError,
    DisconnectedOdPairError,
    NonPositiveDemandError,
    SingularSystemError,
    ZeroDenominatorError,
)
from .graph import Graph, Mode, max_relative_excess, validate_capacity

BPR_ALPHA = 0.15
BPR_BETA = 4.0

# aggregate flows below this make an origin's capacity share meaningless
MIN_SHARE_FLOW = 1e-12


@dataclass(frozen=True)
class TrafficNetwork:
    """Directed road network; the graph's arc lengths hold the free-flow
    travel times so the initial solve runs on them unchanged."""

    graph: Graph
    free_flow_time: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    @property
    def capacity(self) -> np.ndarray:
        return self.graph.capacity


def traffic_network(graph: Graph, alpha=None, beta=None) -> TrafficNetwork:
    if graph.mode is not Mode.DIRECTED:
        raise ValueError("traffic networks are directed")
    m = graph.arc_count
    alpha = np.full(m, BPR_ALPHA) if alpha is None else np.asarray(alpha, dtype=float)
    beta = np.full(m, BPR_BETA) if beta is None else np.asarray(beta, dtype=float)
    return TrafficNetwork(
        graph=graph,
        free_flow_time=graph.length.copy(),
        alpha=alpha,
        beta=beta,
    )


@dataclass(frozen=True)
class OdDemand:
    origin: int
    destination: int
    demand: float

    def __post_init__(self):
        if self.origin == self.destination:
            raise NonPositiveDemandError(
                f"demand from node {self.origin} to itself"
            )
        if not self.demand > 0:
            raise NonPositiveDemandError(
                f"demand {self.demand} for ({self.origin},{self.destination})"
            )


@dataclass(frozen=True)
class CtapConfig:
    """rgap_target is the convergence goal; when binding capacities make
    that gap unreachable (the gap is measured against unconstrained
    shortest paths), the loop instead stops once the aggregate flow is
    quiescent: L1 change below node_count * flow_quiescent_epsilon at
    quiet_checks consecutive sampled iterations."""

    k: float = 0.85
    rgap_target: float = 1e-4
    max_iterations: int = 50_000
    capacitated: bool = True
    initial_conductivity: float = 0.5
    rgap_stride: int | None = None  # None: every iteration up to 100 arcs, else every 10
    flow_quiescent_epsilon: float = 1e-6
    quiet_checks: int = 3

    def __post_init__(self):
        if not 0 < self.k <= 1:
            raise ValueError(f"k must be in (0, 1], got {self.k}")


def travel_time(t0, Q, C, alpha=BPR_ALPHA, beta=BPR_BETA):
    """Volume-delay curve t0 * (1 + alpha * (Q/C)^beta); non-decreasing in Q."""
    return t0 * (1.0 + alpha * (np.asarray(Q, dtype=float) / C) ** beta)


def link_times(network: TrafficNetwork, q_all) -> np.ndarray:
    return network.free_flow_time * (
        1.0 + network.alpha * (np.asarray(q_all, float) / network.capacity) ** network.beta
    )


def update_travel_times(current, network: TrafficNetwork, q_all) -> np.ndarray:
    """Relax halfway from the current times toward the volume-delay value."""
    return (np.asarray(current, dtype=float) + link_times(network, q_all)) / 2.0


def ctap_adapt(q_r, d_r, drop, L, C, k, q_all) -> float:
    """Per-origin adaptation with the capacity apportioned by flow share.

    share = q_r / q_all (1 when the link carries nothing); within
    k * share * C the averaging rule applies, above it the conductivity is
    re-regulated so this origin's next flow lands on its share of the
    capacity.  With a single origin this reduces to the plain rule.
    """
    share = q_r / q_all if q_all > MIN_SHARE_FLOW else 1.0
    cap_r = share * C
    if q_r <= k * cap_r:
        return (q_r + d_r) / 2.0
    absdrop = abs(drop)
    if absdrop < ZERO_DROP:
        return d_r
    return min(cap_r * L / absdrop, CEILING_FACTOR * cap_r * L)


def _ctap_adapt_array(q_r, d_r, drop, lengths, capacity, k, q_all):
    share = np.where(q_all > MIN_SHARE_FLOW, q_r / np.maximum(q_all, MIN_SHARE_FLOW), 1.0)
    cap_r = share * capacity
    averaged = (q_r + d_r) / 2.0
    absdrop = np.abs(drop)
    regulated = np.minimum(
        cap_r * lengths / np.maximum(absdrop, ZERO_DROP),
        CEILING_FACTOR * cap_r * lengths,
    )
    capped = np.where(absdrop < ZERO_DROP, d_r, regulated)
    return np.where(q_r <= k * cap_r, averaged, capped)


def group_demands(demands) -> dict[int, list[OdDemand]]:
    """Demands grouped by origin, origins in ascending node order."""
    groups: dict[int, list[OdDemand]] = {}
    for d in demands:
        groups.setdefault(d.origin, []).append(d)
    return {r: groups[r] for r in sorted(groups)}


def origin_injections(node_count: int, origin: int, origin_demands) -> np.ndarray:
    """+total demand at the origin, -demand at each destination."""
    inj = np.zeros(node_count)
    for d in origin_demands:
        inj[origin] += d.demand
        inj[d.destination] -= d.demand
    return inj


def origin_pressures(
    network: TrafficNetwork, travel_times, conductivity_r, origin: int, origin_demands
):
    """Grounded solve for one origin's subnetwork on current link times."""
    inj = origin_injections(network.graph.node_count, origin, origin_demands)
    system = laplacian.assemble(network.graph, conductivity_r, inj, origin, travel_times)
    return laplacian.solve(system, strict=False)


def origin_flows(network: TrafficNetwork, travel_times, conductivity_r, pressures) -> np.ndarray:
    """Clamped Poiseuille flux: max(0, (D/L) * drop) per arc."""
    return laplacian.edge_flows(
        network.graph, conductivity_r, travel_times, pressures, Mode.DIRECTED
    )


def _out_adjacency(graph: Graph) -> list[list[int]]:
    adj: list[list[int]] = [[] for _ in range(graph.node_count)]
    for a in graph.arcs:
        adj[a.tail].append(a.id)
    return adj


def shortest_path_times(graph: Graph, times, origin: int, out_adj=None) -> np.ndarray:
    """Dijkstra over directed arcs with nonnegative times; arcs relax in id
    order and only strict improvements update, so ties are deterministic."""
    times = np.asarray(times, dtype=float)
    out_adj = _out_adjacency(graph) if out_adj is None else out_adj
    dist = np.full(graph.node_count, np.inf)
    dist[origin] = 0.0
    done = np.zeros(graph.node_count, dtype=bool)
    heap = [(0.0, origin)]
    while heap:
        du, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for a in out_adj[u]:
            v = graph.head[a]
            nd = du + times[a]
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def rgap(network: TrafficNetwork, travel_times, flows, demands) -> float:
    """Relative gap: 1 - (demand-weighted shortest-path time) / (flow-weighted time).

    Zero exactly when every unit of flow rides a currently-shortest path.
    """
    travel_times = np.asarray(travel_times, dtype=float)
    denominator = float(np.asarray(flows, float) @ travel_times)
    if denominator <= 0.0:
        raise ZeroDenominatorError("total flow-weighted time is zero")
    out_adj = _out_adjacency(network.graph)
    numerator = 0.0
    for origin, group in group_demands(demands).items():
        dist = shortest_path_times(network.graph, travel_times, origin, out_adj)
        for d in group:
            if not np.isfinite(dist[d.destination]):
                raise DisconnectedOdPairError(
                    f"no route from {d.origin} to {d.destination}"
                )
            numerator += d.demand * dist[d.destination]
    return 1.0 - numerator / denominator


@dataclass
class CtapTrace:
    iterations: list = field(default_factory=list)
    l1_change: list = field(default_factory=list)
    max_rel_excess: list = field(default_factory=list)
    rgap: list = field(default_factory=list)

    def record(self, iteration, l1, excess, gap):
        self.iterations.append(int(iteration))
        self.l1_change.append(float(l1))
        self.max_rel_excess.append(float(excess))
        self.rgap.append(float(gap))

    def rows(self):
        return list(zip(self.iterations, self.l1_change, self.max_rel_excess, self.rgap))


@dataclass(frozen=True)
class CtapState:
    conductivity: dict
    origin_flow: dict
    q_all: np.ndarray
    travel_time: np.ndarray
    iteration: int
    rgap: float


@dataclass(frozen=True)
class CtapResult:
    flows: np.ndarray
    times: np.ndarray
    rgap: float
    iterations: int
    converged: bool
    non_converging: bool
    stop_reason: str
    violations: object
    trace: CtapTrace
    state: CtapState
    wall_time: float


def _check_connectivity(graph: Graph, demands):
    out_adj = _out_adjacency(graph)
    for origin, group in group_demands(demands).items():
        seen = np.zeros(graph.node_count, dtype=bool)
        seen[origin] = True
        queue = deque([origin])
        while queue:
            u = queue.popleft()
            for a in out_adj[u]:
                v = graph.head[a]
                if not seen[v]:
                    seen[v] = True
                    queue.append(v)
        for d in group:
            if not seen[d.destination]:
                raise DisconnectedOdPairError(
                    f"destination {d.destination} unreachable from origin {origin}"
                )


def cppa_ctap(network: TrafficNetwork, demands, config: CtapConfig | None = None) -> CtapResult:
    """Iterate per-origin solves until the relative gap meets the target.

    capacitated=False switches the adaptation to the plain averaging rule
    (no capacity control) for comparison runs.
    """
    config = CtapConfig() if config is None else config
    demands = [d if isinstance(d, OdDemand) else OdDemand(*d) for d in demands]
    if not demands:
        raise NonPositiveDemandError("at least one travel demand is required")
    graph = network.graph
    _check_connectivity(graph, demands)
    groups = group_demands(demands)
    origins = list(groups)
    m = graph.arc_count

    stride = config.rgap_stride
    if stride is None:
        stride = 1 if m <= 100 else 10

    conductivity = {r: np.full(m, config.initial_conductivity) for r in origins}
    injections = {r: origin_injections(graph.node_count, r, groups[r]) for r in origins}
    travel = network.free_flow_time.copy()
    q_all = np.zeros(m)
    trace = CtapTrace()
    gap = np.inf
    did_converge = False
    collapse = False
    quiet = 0
    stalled = False
    iterations = 0
    origin_flow = {r: np.zeros(m) for r in origins}
    quiet_level = graph.node_count * config.flow_quiescent_epsilon

    start = time.perf_counter()
    for it in range(1, config.max_iterations + 1):
        drops = {}
        try:
            for r in origins:
                system = laplacian.assemble(graph, conductivity[r], injections[r], r, travel)
                pv = laplacian.solve(system, strict=False)
                drop = pv.values[graph.tail] - pv.values[graph.head]
                drops[r] = drop
                origin_flow[r] = np.maximum(conductivity[r] / travel * drop, 0.0)
        except (DisconnectedInjectionError, SingularSystemError):
            if it == 1:
                raise
            collapse = True
            iterations = it
            break
        q_all_new = sum(origin_flow[r] for r in origins)
        for r in origins:
            if config.capacitated:
                conductivity[r] = _ctap_adapt_array(
                    origin_flow[r], conductivity[r], drops[r], travel,
                    graph.capacity, config.k, q_all_new,
                )
            else:
                conductivity[r] = (origin_flow[r] + conductivity[r]) / 2.0
        l1 = float(np.abs(q_all_new - q_all).sum())
        q_all = q_all_new
        travel = update_travel_times(travel, network, q_all)
        iterations = it

        if it % stride == 0 or it == config.max_iterations:
            gap = rgap(network, travel, q_all, demands)
            trace.record(it, l1, max_relative_excess(graph, q_all), gap)
            if gap <= config.rgap_target:
                did_converge = True
                break
            quiet = quiet + 1 if l1 < quiet_level else 0
            if quiet >= config.quiet_checks:
                stalled = True
                break

    wall = time.perf_counter() - start
    if did_converge:
        reason = "converged"
    elif collapse:
        reason = "conductivity_collapse"
    elif stalled:
        reason = "quiescent_above_target"
    else:
        reason = "max_iterations"
    state = CtapState(
        conductivity=conductivity,
        origin_flow=origin_flow,
        q_all=q_all,
        travel_time=travel,
        iteration=iterations,
        rgap=float(gap),
    )
    return CtapResult(
        flows=q_all,
        times=travel,
        rgap=float(gap),
        iterations=iterations,
        converged=did_converge,
        non_converging=collapse or stalled or (not did_converge),
        stop_reason=reason,
        violations=validate_capacity(graph, q_all, rel_tol=0.0),
        trace=trace,
        state=state,
        wall_time=wall,
    )
