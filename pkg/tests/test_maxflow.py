import numpy as np
import pytest

from physarum.engine import SolverConfig
from physarum.graph import Mode, build_graph, validate_capacity, validate_conservation
from physarum.maxflow import (
    cppa_maxflow,
    cut_capacity,
    default_epsilon,
    embed_virtual_path,
    oracle_maxflow,
)


@pytest.fixture
def diamond():
    # two routes s->a->t and s->b->t with caps 3/2 and 2/3 => max flow 4
    return build_graph(
        4,
        [(0, 1, 1.0, 3.0), (1, 3, 1.0, 2.0), (0, 2, 1.0, 2.0), (2, 3, 1.0, 3.0)],
    )


class TestEmbedVirtualPath:
    def test_sizes_follow_the_hundredfold_rule(self):
        g = build_graph(3, [(0, 1, 1.0, 2.0), (1, 2, 1.0, 3.0)])
        aug = embed_virtual_path(g, 0, 2)
        assert aug.virtual_length == pytest.approx(200.0)
        assert aug.virtual_capacity == pytest.approx(500.0)
        assert aug.virtual_node is None
        assert aug.graph.arc_count == 3
        # strictly longer than every real path
        assert aug.virtual_length > g.length.sum()

    def test_direct_arc_forces_virtual_node(self):
        g = build_graph(2, [(0, 1, 1.0, 5.0)])
        aug = embed_virtual_path(g, 0, 1)
        assert aug.virtual_node == 2
        assert aug.graph.node_count == 3
        assert len(aug.virtual_arc_ids) == 2
        # two segments summing to the virtual length
        lengths = [aug.graph.arcs[i].length for i in aug.virtual_arc_ids]
        assert sum(lengths) == pytest.approx(aug.virtual_length)

    def test_diamond_capacity_rule(self, diamond):
        aug = embed_virtual_path(diamond, 0, 3)
        assert aug.virtual_capacity == pytest.approx(100.0 * 10.0)


class TestOracle:
    def test_diamond_value(self, diamond):
        res = oracle_maxflow(diamond, 0, 3)
        assert res.value == 4.0

    def test_single_arc(self):
        g = build_graph(2, [(0, 1, 1.0, 5.0)])
        assert oracle_maxflow(g, 0, 1).value == 5.0

    def test_disconnected_is_zero(self):
        g = build_graph(3, [(0, 1, 1.0, 5.0)])
        assert oracle_maxflow(g, 0, 2).value == 0.0

    def test_flow_is_feasible_and_conserving(self, diamond):
        res = oracle_maxflow(diamond, 0, 3)
        assert validate_capacity(diamond, res.flows, rel_tol=0.0).ok
        injections = np.zeros(4)
        injections[0] = res.value
        injections[3] = -res.value
        assert validate_conservation(diamond, res.flows, injections, tol=1e-9).ok

    def test_min_cut_agreement(self, diamond):
        res = oracle_maxflow(diamond, 0, 3)
        assert cut_capacity(diamond, res.source_side) == pytest.approx(res.value)

    def test_directed_mode(self):
        g = build_graph(
            4,
            [(0, 1, 1.0, 3.0), (1, 3, 1.0, 2.0), (0, 2, 1.0, 2.0), (2, 3, 1.0, 3.0)],
            Mode.DIRECTED,
        )
        res = oracle_maxflow(g, 0, 3)
        assert res.value == 4.0
        assert np.all(res.flows >= 0.0)

    def test_directed_reverse_arc_does_not_help(self):
        g = build_graph(2, [(1, 0, 1.0, 5.0)], Mode.DIRECTED)
        assert oracle_maxflow(g, 0, 1).value == 0.0

    @pytest.mark.parametrize("seed", range(6))
    def test_min_cut_agreement_random(self, seed):
        rng = np.random.default_rng(seed)
        n = 12
        arcs = []
        seen = set()
        for _ in range(40):
            u, v = rng.integers(0, n, size=2)
            key = (min(u, v), max(u, v))
            if u == v or key in seen:
                continue
            seen.add(key)
            arcs.append((int(u), int(v), 1.0, float(rng.integers(1, 11))))
        g = build_graph(n, arcs)
        res = oracle_maxflow(g, 0, n - 1)
        assert cut_capacity(g, res.source_side) == pytest.approx(res.value)


class TestCppaMaxflow:
    def test_single_arc(self):
        g = build_graph(2, [(0, 1, 1.0, 5.0)])
        res = cppa_maxflow(g, 0, 1)
        assert res.converged
        assert res.augmented.virtual_node is not None
        assert res.max_flow == pytest.approx(5.0, abs=0.05)
        assert res.max_flow_rounded == 5

    def test_diamond(self, diamond):
        res = cppa_maxflow(diamond, 0, 3)
        oracle = oracle_maxflow(diamond, 0, 3)
        assert res.converged
        assert abs(res.max_flow - oracle.value) < 0.5
        assert res.max_flow_rounded == 4
        assert res.virtual_flow >= -1e-6

    def test_two_disjoint_paths(self):
        g = build_graph(
            4,
            [(0, 1, 1.0, 1.0), (1, 3, 1.0, 1.0), (0, 2, 1.0, 2.0), (2, 3, 1.0, 2.0)],
        )
        res = cppa_maxflow(g, 0, 3)
        assert res.max_flow_rounded == 3

    def test_base_flows_feasible(self, diamond):
        res = cppa_maxflow(diamond, 0, 3)
        report = validate_capacity(diamond, res.flows, rel_tol=1e-2)
        assert report.ok

    def test_directed_random_matches_oracle(self):
        rng = np.random.default_rng(42)
        n = 15
        arcs = []
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < 0.7:
                    cap = float(rng.integers(1, 11))
                    if rng.integers(0, 2):
                        arcs.append((i, j, 1.0, cap))
                    else:
                        arcs.append((j, i, 1.0, cap))
        g = build_graph(n, arcs, Mode.DIRECTED)
        res = cppa_maxflow(g, 0, n - 1)
        oracle = oracle_maxflow(g, 0, n - 1)
        assert res.converged
        assert res.max_flow_rounded == int(oracle.value)


def test_default_epsilon_cutoff():
    assert default_epsilon(100) == 5e-5
    assert default_epsilon(500) == 1e-4
