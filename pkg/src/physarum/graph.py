"""Problem-instance graphs and flow-feasibility validators.

A Graph stores one record per arc.  In undirected mode each physical edge
is stored once and its flow is a signed quantity relative to the stored
(tail, head) orientation; in directed mode flows are constrained
nonnegative by the solver layer, not here.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    NegativeCostError,
    NonPositiveCapacityError,
    NonPositiveLengthError,
    OutOfRangeNodeError,
    ParallelArcError,
    SelfLoopError,
)


class Mode(str, enum.Enum):
    UNDIRECTED = "undirected"
    DIRECTED = "directed"


@dataclass(frozen=True)
class Arc:
    id: int
    tail: int
    head: int
    length: float
    capacity: float
    unit_cost: float = 0.0


_token_counter = itertools.count(1)


def _readonly(values, dtype=float) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Graph:
    node_count: int
    arcs: tuple[Arc, ...]
    mode: Mode
    adjacency: tuple[tuple[int, ...], ...]  # incident arc ids per node
    tail: np.ndarray = field(repr=False, default=None)
    head: np.ndarray = field(repr=False, default=None)
    length: np.ndarray = field(repr=False, default=None)
    capacity: np.ndarray = field(repr=False, default=None)
    unit_cost: np.ndarray = field(repr=False, default=None)
    # identity token for solver-side caches keyed on graph structure
    token: int = field(repr=False, default=0)

    @property
    def arc_count(self) -> int:
        return len(self.arcs)

    def with_lengths(self, lengths: Sequence[float]) -> "Graph":
        """Copy of this graph with per-arc lengths replaced."""
        lengths = np.asarray(lengths, dtype=float)
        if lengths.shape != (self.arc_count,):
            raise DimensionMismatchError(
                f"expected {self.arc_count} lengths, got {lengths.shape}"
            )
        arcs = [
            (a.tail, a.head, float(lengths[a.id]), a.capacity, a.unit_cost)
            for a in self.arcs
        ]
        return build_graph(self.node_count, arcs, self.mode, allow_parallel=True)


def build_graph(
    node_count: int,
    arcs: Iterable[Sequence[float]],
    mode: Mode = Mode.UNDIRECTED,
    allow_parallel: bool = False,
) -> Graph:
    """Validate arc records and build the immutable instance.

    Each record is (tail, head, length, capacity[, unit_cost]).  Arcs keep
    input order, so identical inputs produce identical adjacency ordering.
    Anti-parallel directed arcs (u, v) and (v, u) are always legal; true
    duplicates need allow_parallel=True.
    """
    mode = Mode(mode)
    if node_count < 1:
        raise OutOfRangeNodeError(f"node_count must be >= 1, got {node_count}")
    records: list[Arc] = []
    seen: set[tuple[int, int]] = set()
    for arc_id, rec in enumerate(arcs):
        if len(rec) == 4:
            tail, head, length, capacity = rec
            cost = 0.0
        else:
            tail, head, length, capacity, cost = rec
        tail, head = int(tail), int(head)
        if not (0 <= tail < node_count) or not (0 <= head < node_count):
            raise OutOfRangeNodeError(
                f"arc {arc_id}: endpoint ({tail},{head}) outside [0,{node_count})"
            )
        if tail == head:
            raise SelfLoopError(f"arc {arc_id}: self-loop at node {tail}")
        if not length > 0:
            raise NonPositiveLengthError(f"arc {arc_id}: length {length}")
        if not capacity > 0:
            raise NonPositiveCapacityError(f"arc {arc_id}: capacity {capacity}")
        if cost < 0:
            raise NegativeCostError(f"arc {arc_id}: unit cost {cost}")
        key = (tail, head) if mode is Mode.DIRECTED else (min(tail, head), max(tail, head))
        if not allow_parallel:
            if key in seen:
                raise ParallelArcError(f"arc {arc_id}: duplicate arc {tail}->{head}")
            seen.add(key)
        records.append(Arc(arc_id, tail, head, float(length), float(capacity), float(cost)))

    adjacency: list[list[int]] = [[] for _ in range(node_count)]
    for arc in records:
        adjacency[arc.tail].append(arc.id)
        adjacency[arc.head].append(arc.id)

    return Graph(
        node_count=node_count,
        arcs=tuple(records),
        mode=mode,
        adjacency=tuple(tuple(ids) for ids in adjacency),
        tail=_readonly([a.tail for a in records], dtype=np.int64),
        head=_readonly([a.head for a in records], dtype=np.int64),
        length=_readonly([a.length for a in records]),
        capacity=_readonly([a.capacity for a in records]),
        unit_cost=_readonly([a.unit_cost for a in records]),
        token=next(_token_counter),
    )


@dataclass(frozen=True)
class CapacityViolation:
    arc_id: int
    flow: float
    capacity: float
    rel_excess: float


@dataclass(frozen=True)
class ViolationReport:
    """Output of the feasibility validators.

    capacity_violations holds arcs with |flow| above capacity, worst
    first; node_residuals holds the signed conservation residual of every
    node, and flagged_nodes the (node, residual) pairs above tolerance.
    """

    capacity_violations: tuple[CapacityViolation, ...] = ()
    node_residuals: np.ndarray | None = None
    flagged_nodes: tuple[tuple[int, float], ...] = ()

    @property
    def ok(self) -> bool:
        return not self.capacity_violations and not self.flagged_nodes

    @property
    def max_rel_excess(self) -> float:
        if not self.capacity_violations:
            return 0.0
        return self.capacity_violations[0].rel_excess


def _check_arc_vector(graph: Graph, values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (graph.arc_count,):
        raise DimensionMismatchError(
            f"{name}: expected {graph.arc_count} entries, got shape {arr.shape}"
        )
    return arr


def node_residuals(graph: Graph, flow, injections) -> np.ndarray:
    """Signed conservation residual per node: injection + inflow - outflow."""
    flow = _check_arc_vector(graph, flow, "flow")
    injections = np.asarray(injections, dtype=float)
    if injections.shape != (graph.node_count,):
        raise DimensionMismatchError(
            f"injections: expected {graph.node_count} entries, got {injections.shape}"
        )
    residual = injections.copy()
    np.subtract.at(residual, graph.tail, flow)
    np.add.at(residual, graph.head, flow)
    return residual


def validate_conservation(graph: Graph, flow, injections, tol: float) -> ViolationReport:
    """Flag nodes whose conservation residual exceeds tol."""
    residual = node_residuals(graph, flow, injections)
    bad = np.flatnonzero(np.abs(residual) > tol)
    flagged = tuple((int(i), float(residual[i])) for i in bad)
    return ViolationReport(node_residuals=residual, flagged_nodes=flagged)


def relative_excess(graph: Graph, flow) -> np.ndarray:
    """Per-arc max(0, |flow|/capacity - 1)."""
    flow = _check_arc_vector(graph, flow, "flow")
    return np.maximum(0.0, np.abs(flow) / graph.capacity - 1.0)


def max_relative_excess(graph: Graph, flow) -> float:
    if graph.arc_count == 0:
        return 0.0
    return float(relative_excess(graph, flow).max())


def validate_capacity(graph: Graph, flow, rel_tol: float = 0.0) -> ViolationReport:
    """List arcs with |flow| > (1 + rel_tol) * capacity, worst first."""
    flow = _check_arc_vector(graph, flow, "flow")
    excess = relative_excess(graph, flow)
    bad = np.flatnonzero(excess > rel_tol)
    order = bad[np.argsort(-excess[bad], kind="stable")]
    violations = tuple(
        CapacityViolation(int(a), float(flow[a]), float(graph.capacity[a]), float(excess[a]))
        for a in order
    )
    return ViolationReport(capacity_violations=violations)
