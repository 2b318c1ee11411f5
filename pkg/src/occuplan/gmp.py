"""Graph-structured moment relaxation of hybrid optimal control.

Each transition ``(i, j)`` of a :class:`HybridSystem` carries an initial, an
occupation and a terminal measure.  Trajectory measures live on the joint
state-input space of mode ``i``; boundary measures live on its state space.
Mass is conserved moment-wise at every node, like flow in the shortest-path
linear program.
"""
from __future__ import annotations

import logging
import time
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Hashable

import numpy as np
import scipy.sparse as sp

from .liouville import LinearMomentConstraint, Mode, horizon_bounds, liouville_rows
from .moments import MomentVector, SemialgebraicSet, dirac_moments, localizing_layout, moment_matrix_layout
from .polyalg import Polynomial, basis_size

log = logging.getLogger(__name__)


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class Boundary:
    """Initial or terminal distribution: a fixed point or free on a set."""

    kind: str  # "point" | "set"
    point: tuple | None = None
    set: SemialgebraicSet | None = None

    @classmethod
    def at(cls, point) -> "Boundary":
        return cls("point", tuple(float(v) for v in point))

    @classmethod
    def on(cls, s: SemialgebraicSet) -> "Boundary":
        return cls("set", None, s)

    def __post_init__(self):
        if self.kind == "point" and self.point is None:
            raise ValueError("point boundary needs a point")
        if self.kind == "set" and self.set is None:
            raise ValueError("set boundary needs a set")
        if self.kind not in ("point", "set"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")


@dataclass
class HybridSystem:
    """Modes, transitions and boundary specifications.

    ``target`` may name a mode or a synthetic sink node that has no mode of
    its own; edges into a sink carry the dynamics of their source mode.
    """

    modes: dict
    transitions: list
    source: Hashable
    target: Hashable
    initial: Boundary
    terminal: Boundary
    T_max: float = np.inf
    flow_cap: bool = True
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.transitions = sorted({tuple(e) for e in self.transitions}, key=_edge_key)
        nodes = set(self.modes) | {self.target}
        for i, j in self.transitions:
            if i not in self.modes:
                raise ValueError(f"transition ({i!r}, {j!r}) leaves unknown mode {i!r}")
            if j not in nodes:
                raise ValueError(f"transition ({i!r}, {j!r}) enters unknown node {j!r}")
        if self.source not in self.modes:
            raise ValueError(f"source {self.source!r} is not a mode")
        dims = {(m.state_dim) for m in self.modes.values()}
        if len(dims) != 1:
            raise ValueError(f"modes disagree on state dimension: {sorted(dims)}")
        if not self.reachable():
            raise ValueError(f"target {self.target!r} is unreachable from source {self.source!r}")

    @property
    def state_dim(self) -> int:
        return next(iter(self.modes.values())).state_dim

    def successors(self) -> dict:
        out = defaultdict(list)
        for i, j in self.transitions:
            out[i].append(j)
        return out

    def reachable(self) -> bool:
        if self.source == self.target and (self.source, self.source) in self.transitions:
            return True
        succ = self.successors()
        seen, todo = {self.source}, deque([self.source])
        while todo:
            v = todo.popleft()
            for w in succ[v]:
                if w == self.target:
                    return True
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        return False

    def node_set(self, node) -> SemialgebraicSet | None:
        if node in self.modes:
            return self.modes[node].X
        if node == self.target and self.terminal.kind == "set":
            return self.terminal.set
        return None


def _edge_key(e):
    return (str(e[0]), str(e[1]))


@dataclass
class PsdBlock:
    """``mat(matrix @ z) >= 0``; rows are upper-triangle entries, column-major."""

    size: int
    matrix: sp.csr_matrix
    label: tuple


@dataclass
class ConicProgram:
    """``min c.z + c0`` s.t. ``A z = b``, ``z[nonneg] >= 0``, PSD blocks."""

    n_vars: int
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    nonneg: np.ndarray
    psd: list
    c0: float = 0.0
    measures: dict = field(default_factory=dict)  # id -> (start, num_vars, degree)
    eq_labels: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def check(self):
        assert self.A.shape == (len(self.b), self.n_vars)
        assert self.c.shape == (self.n_vars,)
        for blk in self.psd:
            assert blk.matrix.shape == (blk.size * (blk.size + 1) // 2, self.n_vars)
        if self.nonneg.size:
            assert 0 <= self.nonneg.min() and self.nonneg.max() < self.n_vars

    def measure_values(self, z: np.ndarray, mid) -> np.ndarray:
        start, nv, deg = self.measures[mid]
        return z[start : start + basis_size(nv, deg)]


@dataclass(frozen=True)
class EdgeMeasureBlock:
    edge: tuple
    mu0: MomentVector
    mu: MomentVector
    muT: MomentVector


@dataclass
class GmpSolution:
    status: str
    objective_value: float
    edge_blocks: dict
    dual_liouville: dict
    solver_stats: dict
    degree: int
    boundary: dict = field(default_factory=dict)
    psd_min_eig: float = np.nan
    z: np.ndarray | None = field(default=None, repr=False)
    program: ConicProgram | None = field(default=None, repr=False)


def triangle_positions(s: int) -> tuple[np.ndarray, np.ndarray]:
    """(row, col) of upper-triangle entries in column-major order."""
    ii, jj = [], []
    for j in range(s):
        for i in range(j + 1):
            ii.append(i)
            jj.append(j)
    return np.array(ii, dtype=np.int64), np.array(jj, dtype=np.int64)


class _Builder:
    def __init__(self):
        self.n = 0
        self.measures = {}
        self.eq_rows, self.eq_cols, self.eq_vals, self.b, self.eq_labels = [], [], [], [], []
        self.nonneg = []
        self.psd = []
        self.c: dict = defaultdict(float)

    def add_measure(self, mid, num_vars, degree):
        size = basis_size(num_vars, degree)
        self.measures[mid] = (self.n, num_vars, degree)
        self.n += size
        return self.n - size

    def add_scalar(self, nonneg=True):
        k = self.n
        self.n += 1
        if nonneg:
            self.nonneg.append(k)
        return k

    def var(self, mid, idx):
        return self.measures[mid][0] + idx

    def add_eq(self, cols_vals, rhs, label):
        r = len(self.b)
        for col, val in cols_vals:
            self.eq_rows.append(r)
            self.eq_cols.append(col)
            self.eq_vals.append(val)
        self.b.append(float(rhs))
        self.eq_labels.append(label)

    def add_constraint(self, con: LinearMomentConstraint, label):
        cv = []
        for mid, idx, coef in con.terms:
            cv.extend((self.var(mid, i), c) for i, c in zip(idx, coef))
        if con.sense == "ge":
            cv.append((self.add_scalar(), -1.0))
        elif con.sense == "le":
            cv.append((self.add_scalar(), 1.0))
        self.add_eq(cv, con.rhs, label)

    def add_psd_moment(self, mid, d, label):
        start, nv, _ = self.measures[mid]
        lay = moment_matrix_layout(nv, d)
        s = lay.size
        ii, jj = triangle_positions(s)
        cols = start + lay.entry_index[ii, jj]
        self.psd.append((s, np.arange(len(ii)), cols, np.ones(len(ii)), label))

    def add_psd_localizing(self, mid, g, d, label):
        start, nv, _ = self.measures[mid]
        lay = localizing_layout(g, nv, d)
        s = lay.size
        ii, jj = triangle_positions(s)
        sub = lay.matrix[ii * s + jj].tocoo()
        self.psd.append((s, sub.row, start + sub.col, sub.data, label))

    def build(self, info) -> ConicProgram:
        n = self.n
        A = sp.csr_matrix((self.eq_vals, (self.eq_rows, self.eq_cols)), shape=(len(self.b), n))
        A.sum_duplicates()
        c = np.zeros(n)
        for k, v in self.c.items():
            c[k] += v
        blocks = []
        for s, rows, cols, vals, label in self.psd:
            mat = sp.csr_matrix((vals, (rows, cols)), shape=(s * (s + 1) // 2, n))
            mat.sum_duplicates()
            blocks.append(PsdBlock(s, mat, label))
        prog = ConicProgram(
            n_vars=n,
            c=c,
            A=A,
            b=np.array(self.b),
            nonneg=np.array(sorted(self.nonneg), dtype=np.int64),
            psd=blocks,
            measures=dict(self.measures),
            eq_labels=list(self.eq_labels),
            info=info,
        )
        prog.check()
        return prog


def _pair_bounds(gs: list) -> list:
    """Replace each pair ``x - lo``, ``hi - x`` by ``(x - lo)(hi - x)``.

    Since ``(x-lo)^2 + (x-lo)(hi-x) = (hi-lo)(x-lo)``, every localizing row of
    the linear pair is implied by the product's, so the bound cannot get
    looser while the number of PSD blocks drops.
    """
    lin = [g for g in gs if g.degree() == 1]
    out, used = [], set()
    for a, ga in enumerate(lin):
        if a in used:
            continue
        for b in range(a + 1, len(lin)):
            if b in used:
                continue
            s = ga + lin[b]
            if s.degree() == 0 and s.coefficient((0,) * s.num_vars) > 0:
                out.append(ga * lin[b])
                used |= {a, b}
                break
        else:
            out.append(ga)
            used.add(a)
    return out + [g for g in gs if g.degree() != 1]


def _support_constraints(s: SemialgebraicSet | None, d: int, what: str, pair: bool = False):
    if s is None:
        return []
    out = []
    for g in s.inequalities:
        dg = g.degree()
        if dg <= 0:
            continue
        if dg > 2 * d:
            if d == 0:
                # degree-0 relaxations only carry masses
                continue
            raise AssemblyError(f"{what}: constraint {g!r} has degree {dg} > 2d = {2 * d}")
        out.append(g)
    return _pair_bounds(out) if pair and d >= 1 else out


def assemble(hybrid: HybridSystem, d: int = 2, pair_bounds: bool = True) -> ConicProgram:
    """Build the conic program of the moment relaxation at degree ``d``.

    ``pair_bounds`` localizes two-sided interval bounds through their product
    (same set, fewer and no weaker PSD blocks).
    """
    if d < 0:
        raise AssemblyError("relaxation degree must be nonnegative")
    t0 = time.perf_counter()
    B = _Builder()
    n = hybrid.state_dim
    D = 2 * d

    # degree checks up front so the error lists everything at once
    problems = []
    for q, mode in sorted(hybrid.modes.items(), key=lambda kv: str(kv[0])):
        if mode.c.degree() > D:
            problems.append(f"mode {q!r}: cost {mode.c!r} has degree {mode.c.degree()} > {D}")
        if d >= 1:
            for k, fk in enumerate(mode.f):
                if fk.degree() > D:
                    problems.append(f"mode {q!r}: dynamics component {k} {fk!r} has degree {fk.degree()} > {D}")
    if problems:
        raise AssemblyError("degree overflow:\n  " + "\n  ".join(problems))

    for e in hybrid.transitions:
        i, j = e
        mode: Mode = hybrid.modes[i]
        nz = mode.num_vars
        B.add_measure(("mu0", e), n, D)
        B.add_measure(("mu", e), nz, D)
        B.add_measure(("muT", e), n, D)

        xu = _support_constraints(mode.XU, d, f"mode {i!r} X*U", pair_bounds)
        x_i = _support_constraints(mode.X, d, f"mode {i!r} X", pair_bounds)
        guard = list(x_i)
        for g in _support_constraints(hybrid.node_set(j), d, f"node {j!r} X", pair_bounds):
            if g not in guard:
                guard.append(g)

        B.add_psd_moment(("mu", e), d, ("moment", "mu", e))
        for k, g in enumerate(xu):
            B.add_psd_localizing(("mu", e), g, d, ("localizing", "mu", e, k))
        B.add_psd_moment(("mu0", e), d, ("moment", "mu0", e))
        for k, g in enumerate(x_i):
            B.add_psd_localizing(("mu0", e), g, d, ("localizing", "mu0", e, k))
        B.add_psd_moment(("muT", e), d, ("moment", "muT", e))
        for k, g in enumerate(guard):
            B.add_psd_localizing(("muT", e), g, d, ("localizing", "muT", e, k))

        for r, con in enumerate(liouville_rows(mode, d, (("mu", e), ("mu0", e), ("muT", e)))):
            B.add_constraint(con, ("liouville", e, con.terms[-1][1][0]))

        if mode.dwell is not None:
            lo, hi = mode.dwell
            for con in horizon_bounds(("mu", e), lo, hi, per_unit_of=("mu0", e)):
                B.add_constraint(con, ("dwell", e, con.sense))
        if hybrid.flow_cap:
            B.add_constraint(LinearMomentConstraint(((("mu0", e), (0,), (1.0,)),), 1.0, "le"), ("flow_cap", e))

        idx, coef = mode.c.sparse_indices()
        for k, v in zip(idx, coef):
            B.c[B.var(("mu", e), int(k))] += float(v)

    # boundary measures
    rhs_src = np.zeros(basis_size(n, D))
    rhs_tgt = np.zeros(basis_size(n, D))
    for name, bnd in (("nu0", hybrid.initial), ("nuT", hybrid.terminal)):
        if bnd.kind == "point":
            if len(bnd.point) != n:
                raise AssemblyError(f"{name}: point has {len(bnd.point)} coordinates, expected {n}")
            vals = dirac_moments(bnd.point, D).values
            if name == "nu0":
                rhs_src = vals
            else:
                rhs_tgt = vals
        else:
            B.add_measure((name,), n, D)
            B.add_eq([(B.var((name,), 0), 1.0)], 1.0, ("mass", name))
            B.add_psd_moment((name,), d, ("moment", name))
            for k, g in enumerate(_support_constraints(bnd.set, d, name, pair_bounds)):
                B.add_psd_localizing((name,), g, d, ("localizing", name, k))

    # moment-wise conservation at every node
    out_edges, in_edges = defaultdict(list), defaultdict(list)
    for e in hybrid.transitions:
        out_edges[e[0]].append(e)
        in_edges[e[1]].append(e)
    nodes = sorted(set(out_edges) | set(in_edges) | {hybrid.source, hybrid.target}, key=str)
    for v in nodes:
        for a in range(basis_size(n, D)):
            cv = [(B.var(("mu0", e), a), 1.0) for e in out_edges[v]]
            cv += [(B.var(("muT", e), a), -1.0) for e in in_edges[v]]
            rhs = 0.0
            if v == hybrid.source:
                if hybrid.initial.kind == "point":
                    rhs += rhs_src[a]
                else:
                    cv.append((B.var(("nu0",), a), -1.0))
            if v == hybrid.target:
                if hybrid.terminal.kind == "point":
                    rhs -= rhs_tgt[a]
                else:
                    cv.append((B.var(("nuT",), a), 1.0))
            if not cv:
                if abs(rhs) > 0:
                    raise AssemblyError(f"node {v!r} has boundary mass but no edges")
                continue
            B.add_eq(cv, rhs, ("flow", v, a))

    if np.isfinite(hybrid.T_max):
        ids = [("mu", e) for e in hybrid.transitions]
        for con in horizon_bounds(ids, 0.0, hybrid.T_max):
            B.add_constraint(con, ("horizon",))

    prog = B.build({"degree": d, "assembly_time": time.perf_counter() - t0, "edges": list(hybrid.transitions)})
    log.info(
        "assembled degree-%d program: %d vars, %d equalities, %d PSD blocks in %.2fs",
        d, prog.n_vars, prog.A.shape[0], len(prog.psd), prog.info["assembly_time"],
    )
    return prog


def solve(program: ConicProgram, adapter=None) -> GmpSolution:
    """Solve an assembled program and map results back to measures and duals."""
    from .solvers import get_adapter

    adapter = get_adapter(adapter)
    res = adapter.solve(program)
    d = program.info.get("degree", 0)
    z = res.x
    blocks, duals = {}, {}
    edges = program.info.get("edges", [])
    if z is not None:
        for e in edges:
            vals = {}
            for name in ("mu0", "mu", "muT"):
                start, nv, deg = program.measures[(name, e)]
                vals[name] = MomentVector(nv, deg, z[start : start + basis_size(nv, deg)])
            blocks[e] = EdgeMeasureBlock(e, vals["mu0"], vals["mu"], vals["muT"])
    if res.y is not None and edges:
        n = program.measures[("mu0", edges[0])][1]
        for e in edges:
            duals[e] = np.zeros(basis_size(n, 2 * d))
        for r, lab in enumerate(program.eq_labels):
            if lab[0] == "liouville":
                # value function V = -sum_r y_r phi_r gives grad V.f + c >= 0
                duals[lab[1]][lab[2]] = -res.y[r]
    boundary = {}
    for name in ("nu0", "nuT"):
        if (name,) in program.measures and z is not None:
            start, nv, deg = program.measures[(name,)]
            boundary[name] = MomentVector(nv, deg, z[start : start + basis_size(nv, deg)])
    min_eig = np.nan
    if z is not None and program.psd:
        min_eig = min(_block_min_eig(blk, z) for blk in program.psd)
    obj = float(program.c @ z + program.c0) if z is not None else np.nan
    return GmpSolution(
        status=res.status,
        objective_value=obj,
        edge_blocks=blocks,
        dual_liouville=duals if res.y is not None else {},
        solver_stats={"iterations": res.iterations, "solve_time": res.solve_time, "solver": adapter.name, "raw_status": res.raw_status},
        degree=d,
        boundary=boundary,
        psd_min_eig=min_eig,
        z=z,
        program=program,
    )


def _block_min_eig(blk: PsdBlock, z: np.ndarray) -> float:
    vals = blk.matrix @ z
    ii, jj = triangle_positions(blk.size)
    M = np.zeros((blk.size, blk.size))
    M[ii, jj] = vals
    M[jj, ii] = vals
    return float(np.linalg.eigvalsh(M).min())


def solve_hybrid(hybrid: HybridSystem, d: int = 2, adapter=None, pair_bounds: bool = True) -> GmpSolution:
    return solve(assemble(hybrid, d, pair_bounds), adapter)
