"""Deterministic instance generators and the built-in benchmark fixtures.

All generators are pure functions of their parameters including the seed;
the RNG is numpy's PCG64 so streams are reproducible across platforms.
Draw order is documented per generator and must not change, or seeds stop
reproducing published instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ctap import OdDemand, TrafficNetwork, traffic_network
from .graph import Graph, Mode, build_graph
from .maxflow import oracle_maxflow


@dataclass(frozen=True)
class GenSpec:
    """Random directed-graph parameters.

    pair_convention "unordered" samples every node pair {i, j} once and,
    when connected (probability connect_probability), draws a uniform
    one-way direction; "ordered" samples each ordered pair (i, j)
    independently, which roughly doubles density and allows two-way pairs.
    """

    node_count: int
    seed: int
    connect_probability: float = 0.7
    capacity_range: tuple[int, int] = (1, 10)
    cost_range: tuple[int, int] = (1, 10)
    length_constant: float = 1.0
    pair_convention: str = "unordered"

    def __post_init__(self):
        if not 0.0 <= self.connect_probability <= 1.0:
            raise ValueError("connect_probability must be in [0, 1]")
        for lo, hi in (self.capacity_range, self.cost_range):
            if hi < lo:
                raise ValueError("empty range")
        if self.pair_convention not in ("unordered", "ordered"):
            raise ValueError(f"unknown pair convention {self.pair_convention!r}")


def random_directed(spec: GenSpec) -> Graph:
    """Seeded random directed graph; source is node 0, sink is the last node.

    Draw order per sampled pair (lexicographic): connectivity uniform,
    then direction (unordered convention only), then capacity, then cost.
    """
    if spec.node_count < 2:
        raise ValueError("need at least 2 nodes")
    rng = np.random.default_rng(np.random.PCG64(spec.seed))
    clo, chi = spec.capacity_range
    wlo, whi = spec.cost_range
    arcs = []
    n = spec.node_count
    for i in range(n):
        for j in range(i + 1, n):
            if spec.pair_convention == "unordered":
                if rng.random() >= spec.connect_probability:
                    continue
                tail, head = (i, j) if rng.integers(0, 2) == 0 else (j, i)
                cap = int(rng.integers(clo, chi + 1))
                cost = int(rng.integers(wlo, whi + 1))
                arcs.append((tail, head, spec.length_constant, float(cap), float(cost)))
            else:
                for tail, head in ((i, j), (j, i)):
                    if rng.random() >= spec.connect_probability:
                        continue
                    cap = int(rng.integers(clo, chi + 1))
                    cost = int(rng.integers(wlo, whi + 1))
                    arcs.append((tail, head, spec.length_constant, float(cap), float(cost)))
    return build_graph(n, arcs, Mode.DIRECTED)


def random_directed_connected(spec: GenSpec, max_retries: int = 16):
    """random_directed, regenerated with seed+1 while the source cannot
    reach the sink; returns (graph, spec_used, retries)."""
    retries = 0
    current = spec
    while True:
        g = random_directed(current)
        if oracle_maxflow(g, 0, g.node_count - 1).value > 0:
            return g, current, retries
        retries += 1
        if retries > max_retries:
            raise RuntimeError(f"no connected instance after {max_retries} retries")
        current = GenSpec(
            node_count=current.node_count,
            seed=current.seed + 1,
            connect_probability=current.connect_probability,
            capacity_range=current.capacity_range,
            cost_range=current.cost_range,
            length_constant=current.length_constant,
            pair_convention=current.pair_convention,
        )


def grid_on_pipe(
    width: int,
    depth: int,
    seed: int,
    cap_range: tuple[int, int] = (1, 10),
    mode: Mode = Mode.UNDIRECTED,
) -> Graph:
    """Stack of `depth` width-by-width lattice frames joined by random
    one-to-one links between consecutive frames (the inter-frame links are
    the bottleneck: in-frame edges get capacity cap_max * width^2).

    Source is node 0 (first frame), sink the last node (last frame).
    Draw order: one permutation then one capacity row per frame junction.
    """
    if width < 2 or depth < 2:
        raise ValueError("width and depth must be >= 2")
    rng = np.random.default_rng(np.random.PCG64(seed))
    clo, chi = cap_range
    frame = width * width
    in_frame_cap = float(chi * frame)
    arcs = []

    def node(f, r, c):
        return f * frame + r * width + c

    for f in range(depth):
        for r in range(width):
            for c in range(width):
                if c + 1 < width:
                    arcs.append((node(f, r, c), node(f, r, c + 1), 1.0, in_frame_cap, 0.0))
                if r + 1 < width:
                    arcs.append((node(f, r, c), node(f, r + 1, c), 1.0, in_frame_cap, 0.0))
    for f in range(depth - 1):
        perm = rng.permutation(frame)
        caps = rng.integers(clo, chi + 1, size=frame)
        for i in range(frame):
            arcs.append((f * frame + i, (f + 1) * frame + int(perm[i]), 1.0, float(caps[i]), 0.0))
    return build_graph(depth * frame, arcs, mode)


@dataclass(frozen=True)
class ThreePathFixture:
    """Demonstration graph: three source-sink routes of increasing length
    (1, 2, 3) and capacity (10, 20, 30), max flow 60, with the inflow
    schedule used to show the flow control kicking in."""

    graph: Graph
    source: int
    sink: int
    schedule: tuple[float, ...]
    path_arc_ids: tuple[tuple[int, ...], ...]

    @property
    def max_flow(self) -> float:
        return 60.0

    def path_flows(self, flows) -> tuple[float, ...]:
        flows = np.asarray(flows, dtype=float)
        return tuple(float(flows[list(ids)].mean()) for ids in self.path_arc_ids)


def three_path_fixture() -> ThreePathFixture:
    arcs = [
        (0, 2, 0.5, 10.0),
        (2, 1, 0.5, 10.0),
        (0, 3, 1.0, 20.0),
        (3, 1, 1.0, 20.0),
        (0, 4, 1.5, 30.0),
        (4, 1, 1.5, 30.0),
    ]
    return ThreePathFixture(
        graph=build_graph(5, arcs, Mode.UNDIRECTED),
        source=0,
        sink=1,
        schedule=(10.0, 20.0, 40.0, 80.0),
        path_arc_ids=((0, 1), (2, 3), (4, 5)),
    )


# Hearn road network: 9 nodes, 18 directed links, demands 10/20/30/40 for
# OD pairs (1,3), (1,4), (2,3), (2,4) in the customary 1-based labels.
# Free-flow times are a fixture convention (1 per link).
_HEARN_LINKS = [
    (1, 5, 12.02),
    (1, 6, 18.02),
    (2, 5, 43.59),
    (2, 6, 26.59),
    (5, 6, 50.0),
    (5, 7, 25.0),
    (5, 9, 35.0),
    (6, 5, 50.0),
    (6, 8, 25.0),
    (6, 9, 35.0),
    (7, 3, 25.0),
    (7, 4, 24.0),
    (7, 8, 50.0),
    (8, 3, 39.0),
    (8, 4, 43.0),
    (8, 7, 50.0),
    (9, 7, 35.0),
    (9, 8, 25.0),
]

_HEARN_DEMANDS = [(1, 3, 10.0), (1, 4, 20.0), (2, 3, 30.0), (2, 4, 40.0)]

HEARN_FREE_FLOW_TIME = 1.0


def hearn_network() -> tuple[TrafficNetwork, tuple[OdDemand, ...]]:
    """The 9-node benchmark road network (1-based labels shifted to 0-based)."""
    arcs = [
        (tail - 1, head - 1, HEARN_FREE_FLOW_TIME, cap, 0.0)
        for tail, head, cap in _HEARN_LINKS
    ]
    graph = build_graph(9, arcs, Mode.DIRECTED)
    demands = tuple(OdDemand(o - 1, d - 1, q) for o, d, q in _HEARN_DEMANDS)
    return traffic_network(graph), demands
