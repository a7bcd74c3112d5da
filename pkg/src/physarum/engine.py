"""Capacitated Physarum iteration engine.

One step is: solve the grounded Poisson system with the current
conductivities, evaluate Poiseuille flows, then adapt each arc's
conductivity.  The adaptation keeps the classic averaging rule
D' = (|Q| + D) / 2 while |Q| stays within k * capacity, and otherwise
re-regulates D' = C * L / |p_tail - p_head| so the next flow at the same
pressures lands exactly on the capacity.  The threshold k in (0, 1]
exists because the bare cap (k = 1) tends to oscillate instead of
converging.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import laplacian
from .errors import DisconnectedInjectionError, SingularSystemError
from .graph import Graph, Mode, max_relative_excess, node_residuals

# A capped update divides by the pressure drop; below this the drop is
# treated as zero and the conductivity is left unchanged.
ZERO_DROP = 1e-15

# The capped update acts as a proportional controller pushing an arc's
# flow to its capacity.  On arcs whose flow is structurally stuck below
# capacity (a wider cut limits it), that controller would grow D by a
# constant factor forever and eventually overflow the linear solve, so
# the capped value is clamped to CEILING_FACTOR * C * L: far beyond any
# conductivity a bounded pressure drop calls for, and inert at fixed
# points.
CEILING_FACTOR = 1e8


@dataclass(frozen=True)
class SolverConfig:
    """Iteration parameters.

    mode=None and ground=None inherit the graph's mode and the first
    positive-injection node.  A run is only accepted as converged when the
    L1 flow change drops below node_count * epsilon AND no capacity is
    exceeded by more than feasibility_rel_excess; an L1-quiet state that
    stays infeasible for stall_window iterations is flagged non-converging
    (demand above the graph's max flow has no feasible fixed point).
    """

    k: float = 0.85
    epsilon: float = 5e-5
    max_iterations: int = 100_000
    mode: Mode | None = None
    ground: int | None = None
    initial_conductivity: float = 0.5
    feasibility_rel_excess: float = 0.05
    stall_window: int = 500
    trace_stride: int = 1

    def __post_init__(self):
        if not 0 < self.k <= 1:
            raise ValueError(f"k must be in (0, 1], got {self.k}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class SolverState:
    """One iterate.  conductivity is the adapted value feeding the next
    solve; flow and pressure are from the solve that produced it."""

    conductivity: np.ndarray
    flow: np.ndarray
    pressure: np.ndarray
    iteration: int = 0
    last_change: float = np.inf


def initial_state(graph: Graph, config: SolverConfig) -> SolverState:
    return SolverState(
        conductivity=np.full(graph.arc_count, config.initial_conductivity),
        flow=np.zeros(graph.arc_count),
        pressure=np.zeros(graph.node_count),
        iteration=0,
        last_change=np.inf,
    )


def adapt_conductivity(
    Q: float, D: float, p_tail: float, p_head: float, L: float, C: float, k: float
) -> float:
    """Scalar adaptation rule for a single arc."""
    if abs(Q) <= k * C:
        return (abs(Q) + D) / 2.0
    drop = abs(p_tail - p_head)
    if drop < ZERO_DROP:
        return D
    return min(C * L / drop, CEILING_FACTOR * C * L)


def _adapt_array(q, d, drop, lengths, capacity, k):
    """Vectorized adapt_conductivity over all arcs."""
    absq = np.abs(q)
    averaged = (absq + d) / 2.0
    absdrop = np.abs(drop)
    safe = np.maximum(absdrop, ZERO_DROP)
    ceiling = CEILING_FACTOR * capacity * lengths
    capped = np.where(absdrop < ZERO_DROP, d, np.minimum(capacity * lengths / safe, ceiling))
    return np.where(absq <= k * capacity, averaged, capped)


def default_ground(injections) -> int:
    """First node with positive injection (the paper grounds the source)."""
    injections = np.asarray(injections, dtype=float)
    positive = np.flatnonzero(injections > 0)
    return int(positive[0]) if positive.size else 0


def step(
    graph: Graph,
    lengths,
    injections,
    state: SolverState,
    config: SolverConfig,
) -> SolverState:
    """Advance one iteration: pressures, flows, adapted conductivities."""
    lengths = graph.length if lengths is None else np.asarray(lengths, dtype=float)
    mode = graph.mode if config.mode is None else config.mode
    ground = default_ground(injections) if config.ground is None else config.ground
    system = laplacian.assemble(graph, state.conductivity, injections, ground, lengths)
    pv = laplacian.solve(system, strict=False)
    q = laplacian.edge_flows(graph, state.conductivity, lengths, pv.values, mode)
    last_change = float(np.abs(q - state.flow).sum())
    drop = pv.values[graph.tail] - pv.values[graph.head]
    d_next = _adapt_array(q, state.conductivity, drop, lengths, graph.capacity, config.k)
    return SolverState(
        conductivity=d_next,
        flow=q,
        pressure=pv.values,
        iteration=state.iteration + 1,
        last_change=last_change,
    )


def converged(state: SolverState, config: SolverConfig, node_count: int) -> bool:
    """L1 flow-change stopping rule: sum |Q_n - Q_{n-1}| < N * epsilon."""
    return state.last_change < node_count * config.epsilon


@dataclass
class ConvergenceTrace:
    """Sampled per-iteration diagnostics (always includes the last one)."""

    stride: int = 1
    iterations: list = field(default_factory=list)
    l1_change: list = field(default_factory=list)
    linf_change: list = field(default_factory=list)
    max_rel_excess: list = field(default_factory=list)
    conservation_residual: list = field(default_factory=list)

    def record(self, iteration, l1, linf, excess, residual):
        self.iterations.append(int(iteration))
        self.l1_change.append(float(l1))
        self.linf_change.append(float(linf))
        self.max_rel_excess.append(float(excess))
        self.conservation_residual.append(float(residual))

    def rows(self):
        return list(
            zip(
                self.iterations,
                self.l1_change,
                self.linf_change,
                self.max_rel_excess,
                self.conservation_residual,
            )
        )


@dataclass(frozen=True)
class RunResult:
    state: SolverState
    trace: ConvergenceTrace
    converged: bool
    non_converging: bool
    max_iterations_exceeded: bool
    stop_reason: str
    iterations: int
    wall_time: float

    @property
    def flow(self) -> np.ndarray:
        return self.state.flow


def run(
    graph: Graph,
    lengths,
    injections,
    config: SolverConfig,
    state: SolverState | None = None,
) -> RunResult:
    """Iterate until converged-and-feasible, stalled-infeasible, or the
    iteration cap.

    Never raises on non-convergence: the best state comes back with
    non_converging / max_iterations_exceeded flags set.  A mid-run
    conductivity collapse (injection nodes disconnected because all their
    tubes decayed) also counts as non-convergence; on the very first step
    it propagates as an error since the instance itself is disconnected.
    """
    injections = np.asarray(injections, dtype=float)
    if lengths is not None:
        static_lengths = None if callable(lengths) else np.asarray(lengths, dtype=float)
    else:
        static_lengths = graph.length
    state = initial_state(graph, config) if state is None else state
    trace = ConvergenceTrace(stride=config.trace_stride)

    best_change = np.inf
    best_iteration = 0
    did_converge = False
    stalled_exit = False
    collapse = False
    l1_ok = False
    start = time.perf_counter()
    steps_done = 0

    for n in range(1, config.max_iterations + 1):
        prev_flow = state.flow
        prev_conductivity = state.conductivity
        current_lengths = lengths(state) if callable(lengths) else static_lengths
        try:
            state = step(graph, current_lengths, injections, state, config)
        except (DisconnectedInjectionError, SingularSystemError):
            if n == 1:
                raise
            collapse = True
            break
        steps_done = n

        excess = max_relative_excess(graph, state.flow)
        l1_ok = converged(state, config, graph.node_count)
        feasible = excess <= config.feasibility_rel_excess

        if state.last_change < best_change:
            best_change = state.last_change
            best_iteration = n
        stalled = (n - best_iteration) >= config.stall_window

        if n % config.trace_stride == 0 or l1_ok or n == config.max_iterations:
            linf = float(np.abs(state.flow - prev_flow).max()) if graph.arc_count else 0.0
            # conservation is a property of the solve-implied (signed) flux;
            # the directed clamp is applied downstream of it
            q_raw = laplacian.edge_flows(
                graph, prev_conductivity, current_lengths, state.pressure, Mode.UNDIRECTED
            )
            residual = float(np.abs(node_residuals(graph, q_raw, injections)).max())
            trace.record(n, state.last_change, linf, excess, residual)

        if l1_ok and feasible:
            did_converge = True
            break
        if l1_ok and stalled:
            stalled_exit = True
            break

    wall = time.perf_counter() - start
    max_iter_hit = not did_converge and not stalled_exit and not collapse
    non_converging = stalled_exit or collapse or (max_iter_hit and l1_ok)
    if did_converge:
        reason = "converged"
    elif collapse:
        reason = "conductivity_collapse"
    elif stalled_exit:
        reason = "stalled_infeasible"
    else:
        reason = "max_iterations"
    return RunResult(
        state=state,
        trace=trace,
        converged=did_converge,
        non_converging=non_converging,
        max_iterations_exceeded=max_iter_hit,
        stop_reason=reason,
        iterations=steps_done,
        wall_time=wall,
    )
