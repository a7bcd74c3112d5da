"""Grounded network Poisson solve and the Poiseuille flow law.

The linear system is the weighted graph Laplacian L with per-arc
conductance g = D / length: L[i][j] -= g for each arc (i, j), diagonals
make rows sum to zero.  Grounding pins the grounded node's pressure to 0
and drops its row/column.  Anti-parallel directed arcs both add their
conductance into the same off-diagonal entry, which is exactly the
bidirectional coefficient the multi-origin assignment solver needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.csgraph
import scipy.sparse.linalg

from .errors import (
    DimensionMismatchError,
    DisconnectedInjectionError,
    NegativeConductivityError,
    SingularSystemError,
    UnbalancedInjectionsError,
)
from .graph import Graph, Mode

# Conductivities below this are dead tubes: excluded from the matrix and
# from connectivity so a decayed region cannot make the system singular.
MIN_CONDUCTIVITY = 1e-12

# Node counts up to this use a dense factorization; larger graphs go sparse.
DENSE_NODE_LIMIT = 400

RESIDUAL_RTOL = 1e-10
_REFINE_STEPS = 5


@dataclass(frozen=True)
class PoissonSystem:
    node_count: int
    tails: np.ndarray
    heads: np.ndarray
    weights: np.ndarray  # per-arc conductance D/L, zeroed where D is dead
    injections: np.ndarray
    grounded: int
    graph_token: int = 0


@dataclass(frozen=True)
class PressureVector:
    values: np.ndarray
    residual_norm: float


def assemble(
    graph: Graph,
    conductivity,
    injections,
    grounded: int,
    lengths=None,
) -> PoissonSystem:
    """Build the grounded Poisson system for the given conductivities.

    lengths overrides the graph's stored per-arc lengths (the assignment
    solver re-solves on evolving travel times without rebuilding graphs).
    """
    conductivity = np.asarray(conductivity, dtype=float)
    if conductivity.shape != (graph.arc_count,):
        raise DimensionMismatchError(
            f"conductivity: expected {graph.arc_count} entries, got {conductivity.shape}"
        )
    if np.any(conductivity < 0):
        raise NegativeConductivityError("conductivity must be nonnegative")
    injections = np.asarray(injections, dtype=float)
    if injections.shape != (graph.node_count,):
        raise DimensionMismatchError(
            f"injections: expected {graph.node_count} entries, got {injections.shape}"
        )
    total = np.abs(injections).sum()
    if abs(injections.sum()) > 1e-9 * max(1.0, total):
        raise UnbalancedInjectionsError(
            f"injections sum to {injections.sum():g} (total magnitude {total:g})"
        )
    if not (0 <= grounded < graph.node_count):
        raise DimensionMismatchError(f"grounded node {grounded} out of range")
    lengths = graph.length if lengths is None else np.asarray(lengths, dtype=float)
    if lengths.shape != (graph.arc_count,):
        raise DimensionMismatchError(
            f"lengths: expected {graph.arc_count} entries, got {lengths.shape}"
        )
    weights = np.where(conductivity >= MIN_CONDUCTIVITY, conductivity / lengths, 0.0)
    return PoissonSystem(
        node_count=graph.node_count,
        tails=graph.tail,
        heads=graph.head,
        weights=weights,
        injections=injections,
        grounded=int(grounded),
        graph_token=graph.token,
    )


# Single-slot memo for the live-component labels: the active-arc mask
# changes rarely between consecutive solver iterations.
_component_memo: dict = {}


def _component_labels(system: PoissonSystem, active: np.ndarray) -> np.ndarray:
    key = (system.graph_token, system.node_count)
    hit = _component_memo.get("key") == key and np.array_equal(
        _component_memo.get("mask"), active
    )
    if hit:
        return _component_memo["labels"]
    n = system.node_count
    data = np.ones(int(active.sum()))
    mat = scipy.sparse.csr_matrix(
        (data, (system.tails[active], system.heads[active])), shape=(n, n)
    )
    _, labels = scipy.sparse.csgraph.connected_components(mat, directed=False)
    _component_memo.update(key=key, mask=active.copy(), labels=labels)
    return labels


def solve(system: PoissonSystem, strict: bool = True) -> PressureVector:
    """Solve for node pressures with p[grounded] = 0.

    Nodes not connected to ground through live arcs get pressure 0; they
    must carry no injection, otherwise DisconnectedInjectionError.  With
    strict=True a residual above RESIDUAL_RTOL * max(1, ||b||) raises
    SingularSystemError; strict=False returns the best attempt with its
    residual recorded.
    """
    n = system.node_count
    b = system.injections
    active = system.weights > 0.0
    labels = _component_labels(system, active)
    home = labels[system.grounded]
    in_comp = labels == home

    inj_tol = 1e-12 * max(1.0, np.abs(b).sum())
    stranded = ~in_comp & (np.abs(b) > inj_tol)
    if np.any(stranded):
        raise DisconnectedInjectionError(
            f"nodes {np.flatnonzero(stranded).tolist()} carry injection but are "
            "not connected to the grounded node through live arcs"
        )

    keep = in_comp.copy()
    keep[system.grounded] = False
    idx = np.flatnonzero(keep)
    pressures = np.zeros(n)
    if idx.size == 0:
        return PressureVector(values=pressures, residual_norm=0.0)

    # position of each kept node in the reduced system, -1 elsewhere
    pos = np.full(n, -1, dtype=np.int64)
    pos[idx] = np.arange(idx.size)

    t = system.tails[active]
    h = system.heads[active]
    g = system.weights[active]
    pt, ph = pos[t], pos[h]
    b_red = b[idx]

    target = RESIDUAL_RTOL * max(1.0, float(np.linalg.norm(b)))

    if n <= DENSE_NODE_LIMIT:
        x, residual = _solve_dense(idx.size, pt, ph, g, b_red, target)
    else:
        x, residual = _solve_sparse(idx.size, pt, ph, g, b_red, target)

    if not np.isfinite(residual):
        raise SingularSystemError("solve produced non-finite pressures")
    if strict and residual > target:
        raise SingularSystemError(
            f"residual {residual:.3e} above target {target:.3e}"
        )
    pressures[idx] = x
    return PressureVector(values=pressures, residual_norm=float(residual))


def _solve_dense(m, pt, ph, g, b, target):
    lap = np.zeros((m, m))
    both = (pt >= 0) & (ph >= 0)
    np.subtract.at(lap, (pt[both], ph[both]), g[both])
    np.subtract.at(lap, (ph[both], pt[both]), g[both])
    diag = np.zeros(m)
    np.add.at(diag, pt[pt >= 0], g[pt >= 0])
    np.add.at(diag, ph[ph >= 0], g[ph >= 0])
    lap[np.diag_indices(m)] = diag
    try:
        try:
            factor = scipy.linalg.cho_factor(lap, check_finite=False)
            solve_once = lambda rhs: scipy.linalg.cho_solve(factor, rhs, check_finite=False)
        except scipy.linalg.LinAlgError:
            factor = scipy.linalg.lu_factor(lap, check_finite=False)
            solve_once = lambda rhs: scipy.linalg.lu_solve(factor, rhs, check_finite=False)
        x = solve_once(b)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(str(exc)) from exc
    residual = np.linalg.norm(b - lap @ x)
    for _ in range(_REFINE_STEPS):
        if residual <= target:
            break
        x = x + solve_once(b - lap @ x)
        residual = np.linalg.norm(b - lap @ x)
    return x, residual


def _solve_sparse(m, pt, ph, g, b, target):
    rows, cols, vals = [], [], []
    both = (pt >= 0) & (ph >= 0)
    rows.append(pt[both]); cols.append(ph[both]); vals.append(-g[both])
    rows.append(ph[both]); cols.append(pt[both]); vals.append(-g[both])
    tmask, hmask = pt >= 0, ph >= 0
    rows.append(pt[tmask]); cols.append(pt[tmask]); vals.append(g[tmask])
    rows.append(ph[hmask]); cols.append(ph[hmask]); vals.append(g[hmask])
    lap = scipy.sparse.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m, m),
    )
    try:
        lu = scipy.sparse.linalg.splu(lap)
        x = lu.solve(b)
    except RuntimeError as exc:
        raise SingularSystemError(str(exc)) from exc
    residual = np.linalg.norm(b - lap @ x)
    for _ in range(_REFINE_STEPS):
        if residual <= target:
            break
        x = x + lu.solve(b - lap @ x)
        residual = np.linalg.norm(b - lap @ x)
    return x, residual


def edge_flows(
    graph: Graph,
    conductivity,
    lengths,
    pressures,
    mode: Mode | None = None,
) -> np.ndarray:
    """Per-arc Poiseuille flux Q = (D/L) * (p_tail - p_head).

    Directed mode clamps negative values to zero (the one-way flow rule);
    undirected mode keeps the sign relative to the stored orientation.
    """
    conductivity = np.asarray(conductivity, dtype=float)
    lengths = graph.length if lengths is None else np.asarray(lengths, dtype=float)
    p = np.asarray(pressures, dtype=float)
    if conductivity.shape != (graph.arc_count,) or lengths.shape != (graph.arc_count,):
        raise DimensionMismatchError("conductivity/lengths must have one entry per arc")
    if p.shape != (graph.node_count,):
        raise DimensionMismatchError(
            f"pressures: expected {graph.node_count} entries, got {p.shape}"
        )
    drop = p[graph.tail] - p[graph.head]
    q = conductivity / lengths * drop
    mode = graph.mode if mode is None else Mode(mode)
    if mode is Mode.DIRECTED:
        q = np.maximum(q, 0.0)
    return q
