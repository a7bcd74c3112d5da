import numpy as np
import pytest

from physarum.engine import (
    SolverConfig,
    SolverState,
    adapt_conductivity,
    converged,
    initial_state,
    run,
    step,
)
from physarum.graph import Mode, build_graph


def single_arc(capacity):
    return build_graph(2, [(0, 1, 1.0, capacity)])


class TestAdaptConductivity:
    def test_uncapped_average(self):
        assert adapt_conductivity(1.5, 0.5, 0.0, -3.0, 1.0, 10.0, 0.85) == pytest.approx(1.0)

    def test_capped_pins_next_flow_to_capacity(self):
        d_next = adapt_conductivity(12.0, 1.0, 2.0, 0.0, 1.0, 10.0, 0.85)
        assert d_next == pytest.approx(5.0)
        assert d_next * 2.0 / 1.0 == pytest.approx(10.0)  # next flow = capacity

    def test_zero_flow_decays(self):
        assert adapt_conductivity(0.0, 0.8, 1.0, 0.0, 1.0, 10.0, 0.85) == pytest.approx(0.4)

    def test_zero_pressure_drop_freezes(self):
        assert adapt_conductivity(12.0, 0.7, 1.0, 1.0, 1.0, 10.0, 0.85) == 0.7

    def test_negative_flow_uses_magnitude(self):
        assert adapt_conductivity(-1.5, 0.5, -3.0, 0.0, 1.0, 10.0, 0.85) == pytest.approx(1.0)


class TestConfigValidation:
    @pytest.mark.parametrize("k", [0.0, -0.1, 1.5])
    def test_bad_k(self, k):
        with pytest.raises(ValueError):
            SolverConfig(k=k)

    def test_bad_epsilon(self):
        with pytest.raises(ValueError):
            SolverConfig(epsilon=0.0)

    def test_k_of_one_is_legal(self):
        assert SolverConfig(k=1.0).k == 1.0


class TestStep:
    def test_single_arc_uncapped(self):
        g = single_arc(10.0)
        config = SolverConfig()
        state = step(g, g.length, [1.0, -1.0], initial_state(g, config), config)
        assert state.pressure == pytest.approx([0.0, -2.0])
        assert state.flow == pytest.approx([1.0])
        assert state.conductivity == pytest.approx([0.75])
        assert state.iteration == 1
        assert state.last_change == pytest.approx(1.0)

    def test_single_arc_capped(self):
        g = single_arc(0.5)
        config = SolverConfig()
        state = step(g, g.length, [1.0, -1.0], initial_state(g, config), config)
        assert state.flow == pytest.approx([1.0])
        assert state.conductivity == pytest.approx([0.25])

    def test_cap_exactness(self):
        # right after a capped update, D' * |drop| / L = C to machine precision
        g = single_arc(0.5)
        config = SolverConfig()
        state = step(g, g.length, [1.0, -1.0], initial_state(g, config), config)
        drop = abs(state.pressure[0] - state.pressure[1])
        assert state.conductivity[0] * drop / 1.0 == pytest.approx(0.5, rel=1e-14)

    def test_conductivity_stays_nonnegative(self):
        g = single_arc(10.0)
        config = SolverConfig()
        state = initial_state(g, config)
        for _ in range(20):
            state = step(g, g.length, [1.0, -1.0], state, config)
            assert np.all(state.conductivity >= 0.0)


class TestConverged:
    def _state(self, change):
        return SolverState(
            conductivity=np.ones(1),
            flow=np.zeros(1),
            pressure=np.zeros(2),
            iteration=3,
            last_change=change,
        )

    def test_exact_fixed_point(self):
        assert converged(self._state(0.0), SolverConfig(epsilon=1e-9), 2)

    def test_boundary_is_strict(self):
        config = SolverConfig(epsilon=1e-4)
        assert not converged(self._state(2 * 1e-4), config, 2)

    def test_inside_threshold(self):
        config = SolverConfig(epsilon=1e-4)
        assert converged(self._state(1e-4), config, 2)


class TestRun:
    def test_feasible_single_arc(self):
        g = single_arc(10.0)
        result = run(g, g.length, [5.0, -5.0], SolverConfig(epsilon=1e-6))
        assert result.converged
        assert result.flow == pytest.approx([5.0], abs=1e-6)
        assert result.stop_reason == "converged"
        assert not result.non_converging

    def test_infeasible_demand_is_flagged(self):
        # demand above the single arc's capacity has no feasible fixed point
        g = single_arc(3.0)
        result = run(g, g.length, [5.0, -5.0], SolverConfig(epsilon=1e-6, max_iterations=5000))
        assert not result.converged
        assert result.non_converging or result.max_iterations_exceeded

    def test_run_is_deterministic(self):
        g = build_graph(
            4,
            [(0, 1, 1.0, 3.0), (1, 3, 1.0, 3.0), (0, 2, 1.0, 2.0), (2, 3, 1.0, 2.0)],
        )
        config = SolverConfig(epsilon=1e-6)
        r1 = run(g, g.length, [4.0, 0.0, 0.0, -4.0], config)
        r2 = run(g, g.length, [4.0, 0.0, 0.0, -4.0], config)
        assert np.array_equal(r1.flow, r2.flow)
        assert r1.iterations == r2.iterations

    def test_uncapped_regression_finds_shortest_path(self):
        # with capacities slack, the dynamics reduce to the classic solver:
        # all flow ends on the shorter of two routes
        g = build_graph(
            3,
            [(0, 1, 1.0, 1e9), (0, 2, 1.0, 1e9), (2, 1, 1.0, 1e9)],
        )
        result = run(g, g.length, [1.0, -1.0, 0.0], SolverConfig(epsilon=1e-9))
        assert result.converged
        assert result.flow[0] == pytest.approx(1.0, abs=1e-6)
        assert abs(result.flow[1]) < 1e-6
        assert abs(result.flow[2]) < 1e-6

    def test_fixed_point_consistency(self):
        # at an uncapped fixed point, D matches |Q| on flow-carrying arcs
        g = build_graph(
            3,
            [(0, 1, 1.0, 1e9), (0, 2, 1.0, 1e9), (2, 1, 1.0, 1e9)],
        )
        result = run(g, g.length, [1.0, -1.0, 0.0], SolverConfig(epsilon=1e-10))
        carrying = np.abs(result.flow) > 1e-6
        assert np.allclose(
            result.state.conductivity[carrying],
            np.abs(result.flow)[carrying],
            rtol=1e-4,
        )

    def test_conservation_along_trace(self):
        g = build_graph(
            4,
            [(0, 1, 1.0, 3.0), (1, 3, 1.0, 3.0), (0, 2, 1.0, 2.0), (2, 3, 1.0, 2.0)],
        )
        result = run(g, g.length, [4.0, 0.0, 0.0, -4.0], SolverConfig(epsilon=1e-6))
        assert result.converged
        worst = max(result.trace.conservation_residual)
        assert worst <= 1e-8 * 4.0

    def test_directed_mode_clamps_flows(self):
        g = build_graph(
            3,
            [(0, 1, 1.0, 5.0), (1, 2, 1.0, 5.0), (2, 0, 1.0, 5.0)],
            Mode.DIRECTED,
        )
        result = run(g, g.length, [2.0, 0.0, -2.0], SolverConfig(epsilon=1e-8))
        assert result.converged
        assert np.all(result.flow >= 0.0)
        assert result.flow[0] == pytest.approx(2.0, abs=1e-5)
        assert result.flow[1] == pytest.approx(2.0, abs=1e-5)
