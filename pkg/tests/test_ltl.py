import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import const, var
from occuplan.gmp import Boundary
from occuplan.ltl.automaton import STATE_CAP, alphabet, to_automaton, trace_check
from occuplan.ltl.product import TARGET, LabeledRegionSystem, ProductError, product
from occuplan.ltl.syntax import And, Atom, Finally, Globally, LtlSyntaxError, Not, Until, parse, to_string
from occuplan.moments import SemialgebraicSet
from oracles import ltl_eval, ltl_eval_batch, random_formula, simple_paths

# benchmark specifications, each cut down to at most three atoms
BENCHMARKS = [
    "F(red) & F(green) & G!(blue)",
    "F(yellow) & G!(blue) & G!(green)",
    "G!(wall) & (!door1 U key1)",
    "F(obs1 | obs2) & G(obs1 => F(trn))",
]


def all_traces(atoms, max_len):
    letters = alphabet(atoms)
    for n in range(max_len + 1):
        yield from itertools.product(letters, repeat=n)


def traces_by_length(atoms, max_len):
    letters = alphabet(atoms)
    for n in range(max_len + 1):
        yield list(itertools.product(letters, repeat=n))


def kinematic(lo, hi, regions, umax=1.0):
    n = len(lo)
    nz = 2 * n
    f = tuple(var(n + i, nz) for i in range(n))
    c = const(1.0, nz)
    U = SemialgebraicSet.box([-umax] * n, [umax] * n)
    return LabeledRegionSystem(n, n, f, c, U, SemialgebraicSet.box(lo, hi), regions)


def test_parse_benchmark_conjunction():
    assert parse("F(red) & F(green) & G!(blue)") == And(And(Finally(Atom("red")), Finally(Atom("green"))), Globally(Not(Atom("blue"))))


def test_parse_until():
    assert parse("!door1 U key1") == Until(Not(Atom("door1")), Atom("key1"))


def test_parse_atom():
    assert parse("a") == Atom("a")


def test_until_right_associative_and_precedence():
    assert parse("a U b U c") == Until(Atom("a"), Until(Atom("b"), Atom("c")))
    assert parse("a & b => c => d") == parse("(a & b) => (c => d)")
    assert parse("!a U b & c") == And(Until(Not(Atom("a")), Atom("b")), Atom("c"))
    assert parse("G a | b") == parse("(G a) | b")


def test_prefix_letters_split():
    assert parse("Fa") == Finally(Atom("a"))
    assert parse("GFa") == Globally(Finally(Atom("a")))


@pytest.mark.parametrize("src,pos", [("a &", 3), ("(a", 2), ("a b", 2), ("a # b", 2), ("", 0), ("a U", 3)])
def test_syntax_errors_carry_position(src, pos):
    with pytest.raises(LtlSyntaxError) as exc:
        parse(src)
    assert exc.value.pos == pos


def test_eventually_automaton():
    aut = to_automaton("Fa")
    assert len(aut.states) == 2
    q0 = aut.initial
    assert q0 not in aut.accepting
    assert aut.step(q0, set()) == q0
    q1 = aut.step(q0, {"a"})
    assert q1 in aut.accepting
    assert aut.step(q1, set()) == q1 == aut.step(q1, {"a"})


def test_safety_automaton():
    aut = to_automaton("G!b")
    assert len(aut.accepting) == 1 and aut.initial in aut.accepting
    assert aut.step(aut.initial, set()) == aut.initial
    trap = aut.step(aut.initial, {"b"})
    assert trap not in aut.accepting
    assert all(aut.step(trap, l) == trap for l in alphabet(["b"]))


def test_trace_check_examples():
    assert trace_check("Fa", [set(), {"a"}])
    assert not trace_check("G!b", [{"b"}])
    assert trace_check("(!d U k)", [set(), {"k"}, {"d"}])


@pytest.mark.parametrize("src", BENCHMARKS)
def test_benchmark_formulas_exhaustive(src):
    ast = parse(src)
    atoms = sorted(ast.atoms())
    assert len(atoms) <= 3
    aut = to_automaton(ast)
    for traces in traces_by_length(atoms, 6):
        want = ltl_eval_batch(ast, traces)
        got = np.array([aut.accepts(t) for t in traces])
        assert np.array_equal(got, want), (src, traces[int(np.argmax(got != want))])


@pytest.mark.parametrize("src", BENCHMARKS)
def test_trace_check_matches_oracle(src):
    ast = parse(src)
    for trace in all_traces(sorted(ast.atoms()), 4):
        assert trace_check(ast, trace) == ltl_eval(ast, trace)


def test_automaton_is_total_and_deterministic():
    aut = to_automaton(BENCHMARKS[0])
    letters = alphabet(aut.atoms)
    assert set(aut.transitions) == {(q, l) for q in aut.states for l in letters}
    assert aut.accepting <= set(aut.states)


def test_dot_export():
    text = to_automaton("Fa").to_dot()
    assert text.startswith("digraph") and "doublecircle" in text


def test_state_cap_constant():
    assert STATE_CAP == 10 ** 6


def test_parser_round_trip_thousand():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        f = random_formula(rng, ["a", "b", "c", "d_1"], 5)
        assert f.depth() <= 5
        assert parse(to_string(f)) == f


@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_random_formula_semantics(seed):
    rng = np.random.default_rng(seed)
    f = random_formula(rng, ["a", "b"], 4)
    aut = to_automaton(f, atoms=["a", "b"])
    for traces in traces_by_length(["a", "b"], 4):
        assert np.array_equal([aut.accepts(t) for t in traces], ltl_eval_batch(f, traces))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_minimized_matches_unminimized(seed):
    rng = np.random.default_rng(seed)
    f = random_formula(rng, ["a", "b"], 4)
    small, big = to_automaton(f, minimize=True), to_automaton(f, minimize=False)
    assert len(small.states) <= len(big.states)
    for trace in all_traces(sorted(f.atoms()), 4):
        assert small.accepts(trace) == big.accepts(trace)


# ---------------------------------------------------------------------------
# product


def test_safety_product_prunes_obstacle():
    b = SemialgebraicSet.box([-0.5, -0.5], [0.5, 0.5])
    sys = kinematic([-2, -2], [2, 2], {"b": b})
    hs = product(sys, to_automaton("G!b"), [-1.5, -1.5], Boundary.at([1.5, 1.5]))
    assert all("b" not in lab["label"] for lab in hs.labels.values())
    assert len(hs.modes) == 8
    for m in hs.modes.values():
        assert not m.X.contains(np.zeros((1, 2)), -1e-9)[0]


def test_trivial_automaton_recovers_adjacency_graph():
    regions = {"a": SemialgebraicSet.box([0.0], [1.0]), "b": SemialgebraicSet.box([2.0], [3.0])}
    sys = kinematic([0.0], [3.0], regions)
    hs = product(sys, to_automaton("true", atoms=["a", "b"]), [0.5], Boundary.at([2.5]))
    cells = {m: tuple(hs.labels[m]["label"]) for m in hs.modes}
    assert sorted(cells.values()) == [(), ("a",), ("b",)]
    by_label = {v: k for k, v in cells.items()}
    inner = {(cells[i], cells[j]) for i, j in hs.transitions if j != TARGET and i != j}
    assert inner == {(("a",), ()), ((), ("a",)), ((), ("b",)), (("b",), ())}
    assert (by_label[("b",)], TARGET) in hs.transitions
    assert all((m, m) in hs.transitions for m in hs.modes)


def test_eventually_product_paths_visit_region():
    red = SemialgebraicSet.box([0.5, 0.5], [1.0, 1.0])
    sys = kinematic([-1, -1], [1, 1], {"red": red})
    hs = product(sys, to_automaton("F red"), [-0.8, -0.8], Boundary.at([-0.8, 0.8]), self_loops=False)
    paths = simple_paths(hs.transitions, hs.source, TARGET)
    assert paths
    for p in paths:
        assert any("red" in hs.labels[e[0]]["label"] for e in p)


def test_start_in_obstacle_rejected():
    b = SemialgebraicSet.box([-0.5, -0.5], [0.5, 0.5])
    with pytest.raises(ProductError):
        product(kinematic([-2, -2], [2, 2], {"b": b}), to_automaton("G!b"), [0.0, 0.0], Boundary.at([1.5, 1.5]))


def test_start_outside_bounds_rejected():
    b = SemialgebraicSet.box([-0.5, -0.5], [0.5, 0.5])
    with pytest.raises(ProductError):
        product(kinematic([-2, -2], [2, 2], {"b": b}), to_automaton("G!b"), [3.0, 0.0], Boundary.at([1.5, 1.5]))


def test_missing_region_rejected():
    with pytest.raises(ProductError):
        product(kinematic([-2, -2], [2, 2], {}), to_automaton("G!b"), [0.0, 0.0], Boundary.at([1.5, 1.5]))


def test_facet_adjacency_drops_corner_contacts():
    b = SemialgebraicSet.box([-0.5, -0.5], [0.5, 0.5])
    sys = kinematic([-2, -2], [2, 2], {"b": b})
    args = (sys, to_automaton("G!b"), [-1.5, -1.5], Boundary.at([1.5, 1.5]))
    closure, facet = product(*args, self_loops=False), product(*args, adjacency="facet", self_loops=False)
    assert set(facet.transitions) < set(closure.transitions)
    # a ring of eight cells: each has two facet neighbours
    inner = [e for e in facet.transitions if e[1] != TARGET]
    assert len(inner) == 16


def test_nonaffine_region_sampled_deterministically():
    x, y = var(0, 2), var(1, 2)
    disc = SemialgebraicSet(2, (0.25 - x * x - y * y,))
    sys = kinematic([-1, -1], [1, 1], {"d": disc})
    a = product(sys, to_automaton("G!d"), [-0.9, -0.9], Boundary.at([0.9, 0.9]), seed=3)
    b = product(sys, to_automaton("G!d"), [-0.9, -0.9], Boundary.at([0.9, 0.9]), seed=3)
    assert a.transitions == b.transitions
    assert all("d" not in lab["label"] for lab in a.labels.values())


def _label_bounds(scn, xs, margin=1e-6):
    """Per sample: atoms held with margin to spare, and atoms held up to the margin."""
    regions = scn.regions()
    must = [frozenset(k for k, s in regions.items() if s.contains(x[None, :], -margin)[0]) for x in xs]
    may = [frozenset(k for k, s in regions.items() if s.contains(x[None, :], margin)[0]) for x in xs]
    return must, may


def _accepts_some_labeling(aut, must, may):
    # points within the margin of a region boundary may be labeled either way
    states = {aut.initial}
    for lo, hi in zip(must, may):
        free = sorted(hi - lo)
        letters = [lo | frozenset(c) for r in range(len(free) + 1) for c in itertools.combinations(free, r)]
        states = {aut.transitions[(q, L & frozenset(aut.atoms))] for q in states for L in letters}
    return bool(states & aut.accepting)


@pytest.mark.slow
@pytest.mark.parametrize("name", ["stlcg2_like", "doorpuzzle_like", "mutex_merge_like"])
def test_recovered_trajectory_satisfies_spec(run_bundled, name):
    res = run_bundled(name)
    assert res.recovered is not None
    scn = res.scenario
    must, may = _label_bounds(scn, res.recovered.x)
    assert _accepts_some_labeling(scn.automaton, must, may)


def test_boundary_labeling_is_existential():
    aut = to_automaton("F a & G !b")
    grazing = [frozenset(), frozenset()], [frozenset(), frozenset({"a"})]
    assert _accepts_some_labeling(aut, *grazing)
    assert not _accepts_some_labeling(aut, [frozenset(), frozenset({"b"})], [frozenset({"a"}), frozenset({"a", "b"})])
    assert not _accepts_some_labeling(aut, [frozenset()] * 2, [frozenset()] * 2)
