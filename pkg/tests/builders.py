"""Small hybrid systems shared by the tests."""
from __future__ import annotations

import numpy as np

from occuplan.gmp import Boundary, HybridSystem
from occuplan.liouville import Mode
from occuplan.moments import SemialgebraicSet
from occuplan.polyalg import Polynomial


def const(v, n):
    return Polynomial.constant(float(v), n)


def var(i, n):
    return Polynomial.variable(i, n)


def static_mode(cost=1.0, dwell=(1.0, 1.0)) -> Mode:
    """1-D state, 1-D input, no motion; cost accrues for a fixed dwell time."""
    X = SemialgebraicSet.box([-1.0], [1.0])
    U = SemialgebraicSet.box([-1.0], [1.0])
    return Mode(1, 1, X, U, (const(0.0, 2),), const(cost, 2), dwell)


def graph_system(edges, s, t, costs=None) -> HybridSystem:
    """One static mode per non-sink node; every visit costs that node's weight."""
    costs = costs or {}
    nodes = {v for e in edges for v in e} - {t}
    modes = {v: static_mode(costs.get(v, 1.0)) for v in nodes}
    return HybridSystem(modes, list(edges), s, t, Boundary.at([0.0]), Boundary.at([0.0]))


def double_integrator_mode(xlo, xhi, vmax=1.0, umax=1.0, cost_const=0.0, friction=0.0, ball=None) -> Mode:
    """x = (p, v), u scalar; f = (v, u - friction v); c = cost_const + u^2."""
    X = SemialgebraicSet.box([xlo, -vmax], [xhi, vmax], ball_radius=ball)
    U = SemialgebraicSet.box([-umax], [umax], ball_radius=ball)
    p, v, u = (var(i, 3) for i in range(3))
    f = (v, u - v * friction if friction else u)
    c = const(cost_const, 3) + u * u
    return Mode(2, 1, X, U, f, c)


def two_mode_double_integrator(T_max=10.0) -> HybridSystem:
    """Left half then right half of a line, rest to rest across the junction."""
    left = double_integrator_mode(-1.0, 0.0, cost_const=1.0)
    right = double_integrator_mode(0.0, 1.0, cost_const=1.0)
    return HybridSystem(
        {"L": left, "R": right}, [("L", "R"), ("R", "t")], "L", "t",
        Boundary.at([-0.8, 0.0]), Boundary.at([0.8, 0.0]), T_max=T_max,
    )


def single_mode_double_integrator(cost_const=1.0, x0=(-0.5, 0.0), xT=(0.5, 0.0), T_max=10.0) -> HybridSystem:
    m = double_integrator_mode(-1.0, 1.0, cost_const=cost_const)
    return HybridSystem({"m": m}, [("m", "t")], "m", "t", Boundary.at(x0), Boundary.at(xT), T_max=T_max)


def random_box(rng, n):
    lo = rng.uniform(-2, 0, n)
    return lo, lo + rng.uniform(0.5, 2, n)


def sample_box(rng, lo, hi, k):
    return rng.uniform(lo, hi, size=(k, len(lo)))




def terms(poly_dict):
    return [{"exps": list(e), "coef": float(c)} for e, c in poly_dict.items()]


def explicit_two_mode_scenario(name="two_mode_line", T_max=10.0):
    """Scenario-file form of :func:`two_mode_double_integrator`."""
    box = lambda lo, hi: {"box": {"lower": [lo, -1.0], "upper": [hi, 1.0]}, "ball_radius": 2.0}  # noqa: E731
    return {
        "schema": 1,
        "name": name,
        "variables": {"state": 2, "input": 1},
        "dynamics": [terms({(0, 1, 0): 1.0}), terms({(0, 0, 1): 1.0})],
        "cost": terms({(0, 0, 0): 1.0, (0, 0, 2): 1.0}),
        "input_set": {"box": {"lower": [-1.0], "upper": [1.0]}, "ball_radius": 2.0},
        "modes": {"L": {"set": box(-1.0, 0.0)}, "R": {"set": box(0.0, 1.0)}},
        "transitions": [["L", "R"], ["R", "t"]],
        "source": "L",
        "target": "t",
        "x0": [-0.8, 0.0],
        "terminal": {"point": [0.8, 0.0]},
        "options": {"T_max": T_max, "N": 15},
    }
