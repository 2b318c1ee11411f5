"""Product of a region-labeled continuous system with a specification automaton.

Cells are sign conditions on the hyperplanes (or polynomials) bounding the
regions.  Only cells reachable from the initial cell through closure
adjacency are built.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from ..gmp import Boundary, HybridSystem
from ..liouville import Mode
from ..moments import SemialgebraicSet
from ..polyalg import Polynomial
from .automaton import FiniteAutomaton

log = logging.getLogger(__name__)

CELL_CAP = 4096
TARGET = "target"
INTERIOR_TOL = 1e-7


class ProductError(ValueError):
    pass


@dataclass
class LabeledRegionSystem:
    """A single continuous system template plus labeled regions of its state space.

    ``overrides`` lists ``(atom, dynamics)`` pairs: cells inside the atom's
    region use that dynamics instead of ``f``.
    """

    state_dim: int
    input_dim: int
    f: tuple
    c: Polynomial
    U: SemialgebraicSet
    bounds: SemialgebraicSet
    regions: dict
    overrides: list = field(default_factory=list)


@dataclass(frozen=True)
class Cell:
    signs: tuple
    label: frozenset
    set: SemialgebraicSet
    center: np.ndarray | None = None


def _hyperplane(g: Polynomial) -> tuple[np.ndarray, float]:
    n = g.num_vars
    a = np.array([g.coefficient(tuple(int(k == i) for k in range(n))) for i in range(n)])
    return a, g.coefficient((0,) * n)


def _normalize(a, b):
    s = np.linalg.norm(a)
    a, b = a / s, b / s
    # canonical orientation: first nonzero coefficient positive
    k = np.flatnonzero(np.abs(a) > 1e-12)[0]
    if a[k] < 0:
        return -a, -b, -1
    return a, b, 1


class _Arrangement:
    def __init__(self, sys: LabeledRegionSystem):
        self.sys = sys
        self.n = sys.state_dim
        self.affine = all(s.is_affine() for s in sys.regions.values())
        self.planes: list = []  # (a, b) meaning h(x) = a.x + b
        self.poly: list = []  # the same as polynomials
        self.membership: dict = {}  # atom -> list of (plane index, orientation)
        for atom in sorted(sys.regions):
            reqs = []
            for g in sys.regions[atom].inequalities:
                if g.num_vars != self.n:
                    raise ProductError(f"region {atom!r} is not over the {self.n}-dim state space")
                if self.affine:
                    a, b = _hyperplane(g)
                    if not np.any(np.abs(a) > 1e-12):
                        continue
                    a, b, orient = _normalize(a, b)
                    k = self._plane_index(a, b)
                    reqs.append((k, orient))
                else:
                    k = self._poly_index(g)
                    reqs.append((k, 1))
            self.membership[atom] = reqs
        A, bvec = sys.bounds.affine_form()
        self.bound_A, self.bound_b = A, bvec
        lo, hi = sys.bounds.box_bounds()
        self.lo, self.hi = lo, hi

    def _plane_index(self, a, b):
        for k, (a2, b2) in enumerate(self.planes):
            if np.allclose(a, a2, atol=1e-12) and abs(b - b2) < 1e-12:
                return k
        self.planes.append((a, b))
        self.poly.append(Polynomial(self.n, {**{tuple(int(j == i) for j in range(self.n)): a[i] for i in range(self.n) if a[i] != 0}, (0,) * self.n: b}))
        return len(self.planes) - 1

    def _poly_index(self, g):
        for k, p in enumerate(self.poly):
            if p == g:
                return k
        self.poly.append(g)
        return len(self.poly) - 1

    @property
    def K(self) -> int:
        return len(self.poly)

    def signs_at(self, x) -> tuple:
        return tuple(1 if p(x) >= 0 else -1 for p in self.poly)

    def label(self, signs) -> frozenset:
        return frozenset(atom for atom, reqs in self.membership.items() if all(signs[k] == o for k, o in reqs))

    # --- LP helpers (affine arrangements) -------------------------------

    def _ub(self, signs, skip=()):
        # sign*(a.x + b) >= 0  <=>  -sign*a.x <= sign*b
        rows, rhs = [self.bound_A], [self.bound_b]
        for k, s in enumerate(signs):
            if k in skip:
                continue
            a, b = self.planes[k]
            rows.append(-s * a[None, :])
            rhs.append(np.array([s * b]))
        return np.vstack(rows), np.concatenate(rhs)

    def _bounds(self):
        return [(None if not np.isfinite(l) else l, None if not np.isfinite(h) else h) for l, h in zip(self.lo, self.hi)]

    def chebyshev(self, signs):
        """(radius, center) of the largest ball inside the cell, clipped at 1."""
        A, b = self._ub(signs)
        norms = np.linalg.norm(A, axis=1)
        Aext = np.hstack([A, norms[:, None]])
        c = np.zeros(self.n + 1)
        c[-1] = -1.0
        res = linprog(c, A_ub=Aext, b_ub=b, bounds=self._bounds() + [(0, 1.0)], method="highs")
        if res.status != 0:
            return 0.0, None
        return float(res.x[-1]), res.x[:-1]

    def face_feasible(self, signs, tight):
        A, b = self._ub(signs, skip=tight)
        if tight:
            Aeq = np.array([self.planes[k][0] for k in tight])
            beq = np.array([-self.planes[k][1] for k in tight])
        else:
            Aeq = beq = None
        res = linprog(np.zeros(self.n), A_ub=A, b_ub=b, A_eq=Aeq, b_eq=beq, bounds=self._bounds(), method="highs")
        return res.status == 0

    def redundant(self, signs, k):
        A, b = self._ub(signs, skip=(k,))
        a, bk = self.planes[k]
        s = signs[k]
        res = linprog(s * a, A_ub=A, b_ub=b, bounds=self._bounds(), method="highs")
        return res.status == 0 and res.fun + s * bk >= -1e-12

    def cell_set(self, signs) -> SemialgebraicSet:
        ineqs = []
        for k, s in enumerate(signs):
            if self.affine and self.redundant(signs, k):
                continue
            ineqs.append(self.poly[k] * float(s))
        return SemialgebraicSet(self.n, tuple(ineqs)) & self.sys.bounds

    # --- enumeration --------------------------------------------------------

    def facet_shared(self, signs, k) -> bool:
        """True when flipping plane ``k`` crosses an (n-1)-dimensional facet."""
        A, b = self._ub(signs, skip=(k,))
        a, bk = self.planes[k]
        # row norms projected onto the hyperplane: the ball lives inside it
        proj = np.linalg.norm(A - np.outer(A @ a, a), axis=1)
        Aext = np.hstack([A, proj[:, None]])
        Aeq = np.append(a, 0.0)[None, :]
        c = np.zeros(self.n + 1)
        c[-1] = -1.0
        res = linprog(c, A_ub=Aext, b_ub=b, A_eq=Aeq, b_eq=[-bk], bounds=self._bounds() + [(0, 1.0)], method="highs")
        return res.status == 0 and res.x[-1] > INTERIOR_TOL

    def neighbors_facet(self, signs):
        out = []
        for k in range(self.K):
            cand = tuple(-s if j == k else s for j, s in enumerate(signs))
            if self.chebyshev(cand)[0] > INTERIOR_TOL and self.facet_shared(signs, k):
                out.append(cand)
        return sorted(out)

    def neighbors_affine(self, signs):
        faces = []
        frontier = [()]
        while frontier:
            nxt = []
            for T in frontier:
                start = T[-1] + 1 if T else 0
                for k in range(start, self.K):
                    T2 = T + (k,)
                    if self.face_feasible(signs, T2):
                        faces.append(T2)
                        nxt.append(T2)
            frontier = nxt
        out = set()
        for T in faces:
            for r in range(1, len(T) + 1):
                for S in itertools.combinations(T, r):
                    cand = tuple(-s if k in S else s for k, s in enumerate(signs))
                    if cand in out:
                        continue
                    rad, _ = self.chebyshev(cand)
                    if rad > INTERIOR_TOL:
                        out.add(cand)
        return sorted(out)

    def sampled_cells(self, n_samples=10_000, seed=0):
        rng = np.random.default_rng(seed)
        if not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))):
            raise ProductError("state bounds must be a finite box for sampled arrangements")
        pts = rng.uniform(self.lo, self.hi, size=(n_samples, self.n))
        pts = pts[self.sys.bounds.contains(pts)]
        signs = np.array([[1 if v >= 0 else -1 for v in p.evaluate(pts)] for p in self.poly]).T.reshape(len(pts), -1)
        return pts, [tuple(int(v) for v in row) for row in signs]


def product(
    sys: LabeledRegionSystem,
    aut: FiniteAutomaton,
    x0,
    terminal: Boundary,
    T_max=np.inf,
    self_loops: bool = True,
    adjacency: str = "closure",
    cell_cap: int = CELL_CAP,
    seed: int = 0,
) -> HybridSystem:
    """Hybrid system over reachable (automaton state, cell) pairs plus a target sink.

    ``adjacency="closure"`` links cells whose closures meet (corners count);
    ``"facet"`` keeps only cells sharing an (n-1)-dimensional facet.  Pure
    self-loops ``(q, r) -> (q, r)`` are added only when ``self_loops`` is set.
    """
    if adjacency not in ("closure", "facet"):
        raise ProductError(f"unknown adjacency {adjacency!r}")
    missing = set(aut.atoms) - set(sys.regions)
    if missing:
        raise ProductError(f"atoms without regions: {sorted(missing)}")
    x0 = np.asarray(x0, float)
    arr = _Arrangement(sys)
    if not sys.bounds.contains(x0, 1e-9)[0]:
        raise ProductError("initial state lies outside the state bounds")

    cells: dict = {}
    graph: dict = {}
    if arr.affine:
        start = arr.signs_at(x0)
        if arr.chebyshev(start)[0] <= INTERIOR_TOL:
            # x0 on a boundary: move to a full-dimensional cell containing it
            for cand in sorted(arr.neighbors_affine(start)):
                if arr.cell_set(cand).contains(x0, 1e-9)[0]:
                    start = cand
                    break
        todo = [start]
        seen = {start}
        while todo:
            s = todo.pop(0)
            nbrs = arr.neighbors_affine(s) if adjacency == "closure" else arr.neighbors_facet(s)
            graph[s] = nbrs
            for t in nbrs:
                if t not in seen:
                    if len(seen) >= cell_cap:
                        raise ProductError(f"more than {cell_cap} cells")
                    seen.add(t)
                    todo.append(t)
        for s in seen:
            rad, center = arr.chebyshev(s)
            cells[s] = Cell(s, arr.label(s), arr.cell_set(s), center)
    else:
        pts, sg = arr.sampled_cells(seed=seed)
        start = arr.signs_at(x0)
        uniq = sorted(set(sg))
        if len(uniq) > cell_cap:
            raise ProductError(f"more than {cell_cap} cells")
        span = np.asarray(arr.hi) - np.asarray(arr.lo)
        radius = 2.0 * float(np.prod(span)) ** (1 / arr.n) / len(pts) ** (1 / arr.n)
        graph = {s: set() for s in uniq}
        from scipy.spatial import cKDTree

        tree = cKDTree(pts)
        for i, j in tree.query_pairs(radius):
            if sg[i] != sg[j]:
                graph[sg[i]].add(sg[j])
                graph[sg[j]].add(sg[i])
        graph = {s: sorted(v) for s, v in graph.items()}
        for s in uniq:
            members = pts[[k for k, t in enumerate(sg) if t == s]]
            cells[s] = Cell(s, arr.label(s), arr.cell_set(s), members.mean(axis=0))
        if start not in cells:
            raise ProductError("initial state is in no sampled cell")
        log.warning("non-affine regions: cell adjacency decided by sampling (may miss thin contacts)")

    cell_order = sorted(cells, key=lambda s: tuple(-v for v in s))
    cid = {s: k for k, s in enumerate(cell_order)}
    live = aut.live_states()

    def dyn_for(cell: Cell):
        for atom, f in sys.overrides:
            if atom in cell.label:
                return tuple(f)
        return tuple(sys.f)

    q_start = aut.step(aut.initial, cells[start].label & frozenset(aut.atoms))
    if q_start not in live:
        raise ProductError("initial state violates the specification (starts in a forbidden region)")

    def mode_id(q, s):
        return f"q{q}_c{cid[s]}"

    modes, transitions, labels = {}, set(), {}
    todo = [(q_start, start)]
    seen = {(q_start, start)}
    terminal_ok = {}
    while todo:
        q, s = todo.pop(0)
        mid = mode_id(q, s)
        cell = cells[s]
        modes[mid] = Mode(sys.state_dim, sys.input_dim, cell.set, sys.U, dyn_for(cell), sys.c)
        labels[mid] = {"q": q, "cell": cid[s], "label": sorted(cell.label), "center": None if cell.center is None else cell.center.tolist()}
        succs = [(aut.step(q, cells[t].label), t) for t in graph[s]]
        q_dwell = aut.step(q, cell.label)
        if q_dwell != q or self_loops:
            succs.append((q_dwell, s))
        for q2, t in succs:
            if q2 not in live:
                continue
            transitions.add((mid, mode_id(q2, t)))
            if (q2, t) not in seen:
                seen.add((q2, t))
                todo.append((q2, t))
        if q in aut.accepting:
            if s not in terminal_ok:
                terminal_ok[s] = _meets_terminal(arr, cell, terminal)
            if terminal_ok[s]:
                transitions.add((mid, TARGET))
    if not any(e[1] == TARGET for e in transitions):
        raise ProductError("no accepting product mode reaches the terminal set")
    hs = HybridSystem(
        modes=modes,
        transitions=sorted(transitions),
        source=mode_id(q_start, start),
        target=TARGET,
        initial=Boundary.at(x0),
        terminal=terminal,
        T_max=T_max,
        labels=labels,
    )
    hs.cells = {cid[s]: cells[s] for s in cells}  # for plotting and initialization
    return hs


def _meets_terminal(arr: _Arrangement, cell: Cell, terminal: Boundary) -> bool:
    if terminal.kind == "point":
        return bool(cell.set.contains(np.asarray(terminal.point), 1e-9)[0])
    both = cell.set & terminal.set
    if arr.affine and both.is_affine():
        A, b = both.affine_form()
        res = linprog(np.zeros(arr.n), A_ub=A, b_ub=b, bounds=arr._bounds(), method="highs")
        return res.status == 0
    rng = np.random.default_rng(0)
    pts = rng.uniform(arr.lo, arr.hi, size=(10_000, arr.n))
    return bool(both.contains(pts).any())
