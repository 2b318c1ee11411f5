from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import (
    double_integrator_mode, graph_system, single_mode_double_integrator, static_mode, two_mode_double_integrator, var,
)
from occuplan.extract import value_functions
from occuplan.gmp import AssemblyError, Boundary, ConicProgram, HybridSystem, PsdBlock, assemble, solve, solve_hybrid
from occuplan.liouville import Mode
from occuplan.moments import SemialgebraicSet
from occuplan.sdpa import export_standard_form, read_sdpa, solve_sdpa_file
from occuplan.solvers import CvxpyAdapter
from oracles import brute_force_shortest, random_dag, shortest_path_lp, simulate_double_integrator

GOLDEN = Path(__file__).parent / "fixtures" / "single_mode_d1.dat-s"
TWO_ROUTES = [("s", "a"), ("s", "b"), ("a", "t"), ("b", "t")]
TWO_ROUTE_COSTS = {"s": 0.0, "a": 1.0, "b": 2.0}


def net_flow(sol, hs, node):
    out = sum(b.mu0.mass for e, b in sol.edge_blocks.items() if e[0] == node)
    inn = sum(b.muT.mass for e, b in sol.edge_blocks.items() if e[1] == node)
    return out - inn


def test_self_loop_equals_sink_formulation():
    hs = single_mode_double_integrator()
    loop = HybridSystem({"m": hs.modes["m"]}, [("m", "m")], "m", "m", hs.initial, hs.terminal, T_max=hs.T_max)
    assert solve_hybrid(loop, 2).objective_value == pytest.approx(solve_hybrid(hs, 2).objective_value, abs=1e-6)


def test_degree_zero_two_routes():
    sol = solve_hybrid(graph_system(TWO_ROUTES, "s", "t", TWO_ROUTE_COSTS), 0)
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(1.0, abs=1e-6)
    w = {e: TWO_ROUTE_COSTS[e[0]] for e in TWO_ROUTES}
    assert sol.objective_value == pytest.approx(shortest_path_lp(TWO_ROUTES, w, "s", "t"), abs=1e-6)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_degree_zero_matches_path_oracles(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 7))
    edges = random_dag(rng, n, 0.4)
    costs = {v: float(rng.integers(1, 4)) for v in range(n - 1)}
    w = {e: costs[e[0]] for e in edges}
    sol = solve_hybrid(graph_system(edges, 0, n - 1, costs), 0)
    bf = brute_force_shortest(edges, w, 0, n - 1)
    assert bf == pytest.approx(shortest_path_lp(edges, w, 0, n - 1), abs=1e-9)
    assert sol.objective_value == pytest.approx(bf, abs=1e-6)


def test_infeasible_program():
    prog = ConicProgram(1, np.array([1.0]), sp.csr_matrix(np.array([[1.0], [1.0]])), np.array([1.0, 2.0]), np.array([0]), [])
    assert solve(prog).status == "infeasible"


def test_unreachable_target_rejected():
    with pytest.raises(ValueError, match="unreachable"):
        graph_system([("s", "a"), ("b", "t")], "s", "t")


def test_degree_overflow_lists_polynomial():
    m = double_integrator_mode(-1, 1)
    u = var(2, 3)
    heavy = Mode(2, 1, m.X, m.U, m.f, u ** 4)
    hs = HybridSystem({"m": heavy}, [("m", "t")], "m", "t", Boundary.at([0, 0]), Boundary.at([0, 0]))
    with pytest.raises(AssemblyError, match="cost"):
        assemble(hs, 1)


def test_negative_degree_rejected():
    with pytest.raises(AssemblyError):
        assemble(single_mode_double_integrator(), -1)


def test_lower_bound_below_simulated_trajectory():
    # rest-to-rest from -0.5 to 0.5 with u = A sin(2 pi t / T)
    T, dt = 3.0, 1e-4
    A = 2 * np.pi / T ** 2
    xs, us, xN = simulate_double_integrator([-0.5, 0.0], lambda t, x: A * np.sin(2 * np.pi * t / T), T, dt)
    assert np.allclose(xN, [0.5, 0.0], atol=1e-3)
    assert np.all(np.abs(us) <= 1) and np.all(np.abs(xs) <= 1)
    traj_cost = float(np.sum(1.0 + us ** 2) * dt)
    sol = solve_hybrid(single_mode_double_integrator(), 2)
    assert sol.objective_value <= traj_cost


def test_flow_conservation_and_psd_at_optimum():
    hs = two_mode_double_integrator()
    sol = solve_hybrid(hs, 2)
    assert sol.status == "optimal"
    assert net_flow(sol, hs, "L") == pytest.approx(1.0, abs=1e-6)
    assert abs(net_flow(sol, hs, "R")) <= 1e-6
    assert sol.psd_min_eig >= -1e-6


def test_conservation_on_graph():
    sol = solve_hybrid(graph_system(TWO_ROUTES, "s", "t", TWO_ROUTE_COSTS), 0)
    for v in ("a", "b"):
        assert abs(sum(b.mu0.mass for e, b in sol.edge_blocks.items() if e[0] == v)
                   - sum(b.muT.mass for e, b in sol.edge_blocks.items() if e[1] == v)) <= 1e-6


def test_objective_is_cost_integral():
    hs = two_mode_double_integrator()
    sol = solve_hybrid(hs, 2)
    total = sum(b.mu.integrate(hs.modes[e[0]].c) for e, b in sol.edge_blocks.items())
    assert total == pytest.approx(sol.objective_value, abs=1e-6)


def test_free_terminal_set_relaxes_dirac():
    hs = single_mode_double_integrator()
    goal = SemialgebraicSet.box([0.4, -0.1], [0.6, 0.1], ball_radius=1.0)
    free = HybridSystem(hs.modes, hs.transitions, "m", "t", hs.initial, Boundary.on(goal), T_max=hs.T_max)
    s_free, s_pt = solve_hybrid(free, 2), solve_hybrid(hs, 2)
    assert s_free.status == "optimal"
    assert s_free.boundary["nuT"].mass == pytest.approx(1.0, abs=1e-6)
    assert s_free.objective_value <= s_pt.objective_value + 1e-6


def test_cvxpy_adapter_agrees_with_direct_clarabel():
    hs = single_mode_double_integrator()
    x0, xT = np.array([hs.initial.point]), np.array([hs.terminal.point])
    for adapter in (None, CvxpyAdapter("CLARABEL")):
        sol = solve_hybrid(hs, 1, adapter)
        V = value_functions(sol)[("m", "t")]
        assert sol.objective_value == pytest.approx(1.7547655, abs=1e-5)
        # the sign convention of the duals yields V(x0) - V(xT) = objective
        gap = V.evaluate(x0)[0] - V.evaluate(xT)[0]
        assert gap == pytest.approx(sol.objective_value, abs=1e-5)


def test_sdpa_trivial_program():
    prog = ConicProgram(1, np.array([1.0]), sp.csr_matrix(np.array([[1.0]])), np.array([1.0]),
                        np.array([], dtype=int), [PsdBlock(1, sp.csr_matrix(np.array([[1.0]])), ("x",))])
    assert solve(prog).objective_value == pytest.approx(1.0, abs=1e-6)


def test_sdpa_trivial_program_external(tmp_path):
    prog = ConicProgram(1, np.array([1.0]), sp.csr_matrix(np.array([[1.0]])), np.array([1.0]),
                        np.array([], dtype=int), [PsdBlock(1, sp.csr_matrix(np.array([[1.0]])), ("x",))])
    path = export_standard_form(prog, tmp_path / "one.dat-s")
    c, struct, entries = read_sdpa(path)
    assert c.tolist() == [1.0] and struct == [-3]
    status, value = solve_sdpa_file(path)
    assert status == "optimal" and value == pytest.approx(1.0, abs=1e-6)


def test_sdpa_two_route_cross_solver(tmp_path):
    prog = assemble(graph_system(TWO_ROUTES, "s", "t", TWO_ROUTE_COSTS), 0)
    path = export_standard_form(prog, tmp_path / "routes.dat-s")
    status, value = solve_sdpa_file(path, "CVXOPT")
    assert status == "optimal"
    assert value == pytest.approx(solve(prog).objective_value, abs=1e-6)


def test_sdpa_matrix_blocks_cross_solver(tmp_path):
    prog = assemble(single_mode_double_integrator(), 1)
    status, value = solve_sdpa_file(export_standard_form(prog, tmp_path / "sm.dat-s"), "CVXOPT")
    assert status == "optimal"
    assert value == pytest.approx(solve(prog).objective_value, abs=1e-5)


def test_sdpa_golden_file(tmp_path):
    path = export_standard_form(assemble(single_mode_double_integrator(), 1), tmp_path / "sm.dat-s")
    assert path.read_bytes() == GOLDEN.read_bytes()


def test_assembly_is_deterministic():
    a, b = assemble(two_mode_double_integrator(), 2), assemble(two_mode_double_integrator(), 2)
    assert (a.A != b.A).nnz == 0 and np.array_equal(a.b, b.b) and np.array_equal(a.c, b.c)
    assert a.eq_labels == b.eq_labels


def test_pairing_does_not_loosen_bound():
    hs = two_mode_double_integrator()
    paired = solve_hybrid(hs, 2, pair_bounds=True).objective_value
    plain = solve_hybrid(hs, 2, pair_bounds=False).objective_value
    assert paired >= plain - 1e-6


def test_static_dwell_counts_visits():
    sol = solve_hybrid(graph_system([("s", "t")], "s", "t", {"s": 2.5}), 0)
    assert sol.objective_value == pytest.approx(2.5, abs=1e-6)
    assert static_mode().dwell == (1.0, 1.0)
