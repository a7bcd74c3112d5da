import numpy as np
import pytest

from physarum.errors import (
    DimensionMismatchError,
    NonPositiveCapacityError,
    NonPositiveLengthError,
    OutOfRangeNodeError,
    ParallelArcError,
    SelfLoopError,
)
from physarum.graph import (
    Mode,
    build_graph,
    max_relative_excess,
    validate_capacity,
    validate_conservation,
)


def test_smallest_valid_instance():
    g = build_graph(2, [(0, 1, 1.0, 5.0)])
    assert g.arc_count == 1
    assert g.adjacency == ((0,), (0,))
    assert g.arcs[0].capacity == 5.0
    assert g.mode is Mode.UNDIRECTED


def test_self_loop_rejected():
    with pytest.raises(SelfLoopError):
        build_graph(2, [(0, 0, 1.0, 1.0)])


def test_out_of_range_endpoint_rejected():
    with pytest.raises(OutOfRangeNodeError):
        build_graph(3, [(0, 5, 1.0, 1.0)])


def test_nonpositive_length_and_capacity_rejected():
    with pytest.raises(NonPositiveLengthError):
        build_graph(2, [(0, 1, 0.0, 1.0)])
    with pytest.raises(NonPositiveCapacityError):
        build_graph(2, [(0, 1, 1.0, -2.0)])


def test_parallel_arcs_need_flag():
    arcs = [(0, 1, 1.0, 1.0), (0, 1, 2.0, 2.0)]
    with pytest.raises(ParallelArcError):
        build_graph(2, arcs)
    g = build_graph(2, arcs, allow_parallel=True)
    assert g.arc_count == 2


def test_antiparallel_directed_arcs_are_legal():
    g = build_graph(2, [(0, 1, 1.0, 1.0), (1, 0, 1.0, 1.0)], Mode.DIRECTED)
    assert g.arc_count == 2
    # same pair stored once each way counts as parallel in undirected mode
    with pytest.raises(ParallelArcError):
        build_graph(2, [(0, 1, 1.0, 1.0), (1, 0, 1.0, 1.0)], Mode.UNDIRECTED)


def test_construction_is_deterministic():
    arcs = [(0, 1, 1.0, 2.0), (1, 2, 1.0, 3.0), (0, 2, 2.0, 1.0)]
    g1 = build_graph(3, arcs)
    g2 = build_graph(3, arcs)
    assert g1.adjacency == g2.adjacency
    assert [a.id for a in g1.arcs] == [a.id for a in g2.arcs]


class TestConservation:
    def test_single_path_conserves(self):
        g = build_graph(2, [(0, 1, 1.0, 10.0)])
        report = validate_conservation(g, [5.0], [5.0, -5.0], tol=1e-9)
        assert report.ok
        assert np.allclose(report.node_residuals, 0.0)

    def test_short_flow_flagged(self):
        g = build_graph(2, [(0, 1, 1.0, 10.0)])
        report = validate_conservation(g, [4.0], [5.0, -5.0], tol=1e-9)
        assert dict(report.flagged_nodes) == {0: 1.0, 1: -1.0}

    def test_dimension_mismatch(self):
        g = build_graph(2, [(0, 1, 1.0, 10.0)])
        with pytest.raises(DimensionMismatchError):
            validate_conservation(g, [1.0, 2.0], [5.0, -5.0], tol=1e-9)


class TestCapacity:
    def test_flow_at_capacity_is_fine(self):
        g = build_graph(2, [(0, 1, 1.0, 12.02)])
        assert validate_capacity(g, [12.02], rel_tol=0.0).ok

    def test_excess_ratio(self):
        g = build_graph(2, [(0, 1, 1.0, 25.0)])
        report = validate_capacity(g, [40.0], rel_tol=0.0)
        assert len(report.capacity_violations) == 1
        v = report.capacity_violations[0]
        assert v.rel_excess == pytest.approx(0.60)
        assert report.max_rel_excess == pytest.approx(0.60)

    def test_zero_flow_always_feasible(self):
        g = build_graph(3, [(0, 1, 1.0, 1.0), (1, 2, 1.0, 2.0)])
        assert validate_capacity(g, [0.0, 0.0], rel_tol=0.0).ok
        assert max_relative_excess(g, [0.0, 0.0]) == 0.0

    def test_sorted_by_excess_descending(self):
        g = build_graph(3, [(0, 1, 1.0, 10.0), (1, 2, 1.0, 10.0)])
        report = validate_capacity(g, [12.0, 18.0], rel_tol=0.0)
        ids = [v.arc_id for v in report.capacity_violations]
        assert ids == [1, 0]
