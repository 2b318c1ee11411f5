"""Trajectory recovery along a fixed mode sequence.

Each segment of the sequence is transcribed with ``N`` explicit Euler steps
of a segment-wide step size ``h``.  For fixed step sizes the problem in the
states and inputs is a convex QP (affine dynamics, convex quadratic cost);
the step sizes are then improved one segment at a time by a bounded scalar
search over the QP optimum.  The derivative of that optimum with respect to
``h`` (read off the QP duals) lets the search skip step sizes that are
already optimal.  Every accepted step lowers the cost, so the recorded cost history is
non-increasing.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog, minimize_scalar

from .extract import ModeSequence, Trajectory
from .gmp import HybridSystem
from .liouville import Mode
from .moments import SemialgebraicSet
from .polyalg import Polynomial, poly_diff

log = logging.getLogger(__name__)

H_MIN = 1e-3
H_MAX = 1.0
H_INIT = 0.1
REL_TOL = 1e-8
MAX_ITER = 100
QP_TOL = 1e-10
KKT_TOL = 1e-7  # relative tolerance for skipping stationary step sizes
WINDOW = 4.0  # later sweeps search h within [h / WINDOW, h * WINDOW]
XATOL = 1e-5  # step-size resolution of the scalar search
TRUST_RADIUS = 1.0
FEAS_TOL = 1e-6


class RecoveryError(RuntimeError):
    pass


class SubproblemInfeasible(RecoveryError):
    def __init__(self, msg: str, violated: list):
        super().__init__(msg + (": " + ", ".join(violated) if violated else ""))
        self.violated = violated


# --------------------------------------------------------------------------
# polynomial -> matrix helpers


def _unit(n, i):
    return tuple(int(j == i) for j in range(n))


def affine_parts(p: Polynomial) -> tuple[np.ndarray, float]:
    """Gradient and constant of an affine polynomial."""
    n = p.num_vars
    return np.array([p.coefficient(_unit(n, i)) for i in range(n)]), p.coefficient((0,) * n)


def quadratic_parts(p: Polynomial) -> tuple[np.ndarray, np.ndarray, float]:
    """``(Q, q, r)`` with ``p(z) = z'Qz/2 + q'z + r``; requires degree <= 2."""
    if p.degree() > 2:
        raise RecoveryError(f"polynomial {p!r} is not quadratic")
    n = p.num_vars
    Q = np.zeros((n, n))
    q = np.zeros(n)
    for exps, c in p.items():
        nz = [i for i, e in enumerate(exps) if e]
        if sum(exps) == 1:
            q[nz[0]] = c
        elif sum(exps) == 2:
            if len(nz) == 1:
                Q[nz[0], nz[0]] = 2 * c
            else:
                Q[nz[0], nz[1]] = Q[nz[1], nz[0]] = c
    return Q, q, p.coefficient((0,) * n)


def _psd_factor(Q: np.ndarray, tol: float = 1e-10) -> np.ndarray | None:
    """``L`` with ``Q = L L'``, or None when ``Q`` is not PSD."""
    w, V = np.linalg.eigh(0.5 * (Q + Q.T))
    if w.min(initial=0.0) < -tol * max(1.0, np.abs(w).max(initial=0.0)):
        return None
    keep = w > tol * max(1.0, np.abs(w).max(initial=0.0))
    return V[:, keep] * np.sqrt(w[keep])


def _classify(g: Polynomial):
    """('affine', a, b) | ('soc', L, p, p0) for concave quadratic g | ('other',)."""
    if g.degree() <= 1:
        a, b = affine_parts(g)
        return ("affine", a, b)
    if g.degree() == 2:
        Q, q, r = quadratic_parts(-g)  # -g = z'Qz/2 + q'z + r <= 0
        L = _psd_factor(Q)
        if L is not None:
            return ("soc", L, q, r)
    return ("other",)


# --------------------------------------------------------------------------
# geometry


def _cheb_lp(A, b, eq, bounds, n):
    """Largest ball (clipped at radius 1) inside ``A z <= b`` within the hull of the ``eq`` rows."""
    Aeq, beq = A[eq], b[eq]
    if eq.any():
        rank = np.linalg.matrix_rank(Aeq)
        basis = np.linalg.svd(Aeq)[2][rank:].T  # directions inside the hull
        norms = np.linalg.norm(A[~eq] @ basis, axis=1)
    else:
        norms = np.linalg.norm(A, axis=1)
    c = np.zeros(n + 1)
    c[-1] = -1.0
    return linprog(
        c,
        A_ub=np.hstack([A[~eq], norms[:, None]]),
        b_ub=b[~eq],
        A_eq=np.hstack([Aeq, np.zeros((len(beq), 1))]) if eq.any() else None,
        b_eq=beq if eq.any() else None,
        bounds=bounds + [(0, 1.0)],
        method="highs",
    )


def center(s: SemialgebraicSet) -> np.ndarray:
    """Chebyshev center of the affine part of ``s``, relative to its affine hull."""
    A, b = s.affine_form()
    n = s.num_vars
    if A.shape[0] == 0:
        return np.zeros(n)
    lo, hi = s.box_bounds()
    bounds = [(None if not np.isfinite(l) else l, None if not np.isfinite(h) else h) for l, h in zip(lo, hi)]
    eq = np.zeros(A.shape[0], bool)
    res = _cheb_lp(A, b, eq, bounds, n)
    if res.status != 0:
        raise RecoveryError("set is empty; cannot place a waypoint")
    if res.x[-1] > 1e-9:
        return res.x[:-1]
    # flat set: rows tight at every point are equalities of the affine hull
    for i in range(A.shape[0]):
        r2 = linprog(A[i], A_ub=A, b_ub=b, bounds=bounds, method="highs")
        eq[i] = r2.status == 0 and b[i] - A[i] @ r2.x <= 1e-9
    res = _cheb_lp(A, b, eq, bounds, n)
    if res.status != 0:
        raise RecoveryError("could not center a waypoint in a flat set")
    return res.x[:-1]


# --------------------------------------------------------------------------
# problem data


@dataclass
class Segment:
    edge: tuple
    mode: Mode
    N: int


@dataclass
class TranscriptionProblem:
    """Fixed-sequence transcription: variables per segment and boundary data."""

    segments: list
    initial: object  # Boundary
    terminal: object  # Boundary
    h_min: float = H_MIN
    h_max: float = H_MAX
    x_init: list = field(default_factory=list)  # per segment (N+1, n)
    u_init: list = field(default_factory=list)  # per segment (N, m)
    h_init: np.ndarray | None = None

    @property
    def state_dim(self) -> int:
        return self.segments[0].mode.state_dim

    @property
    def input_dim(self) -> int:
        return self.segments[0].mode.input_dim

    @property
    def affine(self) -> bool:
        return all(s.mode.is_affine() for s in self.segments)


def build_transcription(hybrid: HybridSystem, sequence: ModeSequence, N: int = 20, init: str = "chebyshev", h0: float = H_INIT) -> TranscriptionProblem:
    """Transcription of ``sequence`` with ``N`` Euler steps per segment."""
    if not sequence.edges:
        raise RecoveryError("empty mode sequence")
    if N < 1:
        raise RecoveryError("N must be at least 1")
    segs = []
    for e in sequence.edges:
        if e[0] not in hybrid.modes:
            raise RecoveryError(f"edge {e!r} does not start in a mode")
        segs.append(Segment(e, hybrid.modes[e[0]], N))
    for a, b in zip(sequence.edges, sequence.edges[1:]):
        if a[1] != b[0]:
            raise RecoveryError(f"edges {a!r} and {b!r} do not chain")
    prob = TranscriptionProblem(segs, hybrid.initial, hybrid.terminal)
    if init != "chebyshev":
        raise RecoveryError(f"unknown init strategy {init!r}")
    n, m = prob.state_dim, prob.input_dim
    way = []
    first, last = segs[0].mode.X, segs[-1].mode.X
    way.append(np.asarray(hybrid.initial.point, float) if hybrid.initial.kind == "point" else center(hybrid.initial.set & first))
    for a, b in zip(segs, segs[1:]):
        way.append(center(a.mode.X & b.mode.X))
    way.append(np.asarray(hybrid.terminal.point, float) if hybrid.terminal.kind == "point" else center(hybrid.terminal.set & last))
    for k, s in enumerate(segs):
        frac = np.linspace(0.0, 1.0, s.N + 1)[:, None]
        prob.x_init.append(way[k] + frac * (way[k + 1] - way[k]))
        prob.u_init.append(np.zeros((s.N, m)))
    prob.h_init = np.full(len(segs), float(h0))
    return prob


# --------------------------------------------------------------------------
# convex subproblem in (x, u) for fixed step sizes


class _Layout:
    def __init__(self, prob: TranscriptionProblem):
        n, m = prob.state_dim, prob.input_dim
        self.xi, self.ui = [], []
        off = 0
        for s in prob.segments:
            self.xi.append(off + np.arange((s.N + 1) * n).reshape(s.N + 1, n))
            off += (s.N + 1) * n
            self.ui.append(off + np.arange(s.N * m).reshape(s.N, m))
            off += s.N * m
        self.size = off

    def split(self, w):
        return [w[x] for x in self.xi], [w[u] for u in self.ui]


class _Rows:
    """Accumulates affine rows ``A w (=|<=) b`` and second-order cones."""

    def __init__(self, nvar):
        self.nvar = nvar
        self.eq, self.ineq, self.soc = [], [], []

    def _mat(self, rows, cols, vals, nrows):
        return sp.csr_matrix((vals, (rows, cols)), shape=(nrows, self.nvar))

    def add_eq(self, M, b, label):
        self.eq.append((sp.csr_matrix(M), np.asarray(b, float), label))

    def add_le(self, M, b, label):
        self.ineq.append((sp.csr_matrix(M), np.asarray(b, float), label))

    def add_soc(self, M, b, label, size=None):
        # membership of consecutive chunks of b - M w in cones of ``size`` rows
        M = sp.csr_matrix(M)
        self.soc.append((M, np.asarray(b, float), label, size or M.shape[0]))

    def extend(self, other: "_Rows"):
        self.eq += other.eq
        self.ineq += other.ineq
        self.soc += other.soc


def _select(nvar, idx):
    idx = np.asarray(idx).ravel()
    return sp.csr_matrix((np.ones(len(idx)), (np.arange(len(idx)), idx)), shape=(len(idx), nvar))


def _membership_rows(rows: _Rows, g: Polynomial, idx: np.ndarray, ref: np.ndarray | None, label):
    """Rows enforcing ``g(w[idx_k]) >= 0`` for each point ``k`` (``idx`` is (K, d))."""
    K, dz = idx.shape
    kind = _classify(g)
    if kind[0] == "affine":
        a, b = kind[1], kind[2]
        cols = idx.ravel()
        M = sp.csr_matrix((np.tile(-a, K), (np.repeat(np.arange(K), dz), cols)), shape=(K, rows.nvar))
        rows.add_le(M, np.full(K, b), label)
    elif kind[0] == "soc":
        L, q, r = kind[1], kind[2], kind[3]
        # ||L'z||^2 <= 2t with t = -r - q'z, as ((2t+1)/2, (2t-1)/2, L'z) in SOC
        k = L.shape[1]
        coef = np.vstack([q, q, -L.T])  # (k+2, dz): b - M w gives t-terms and L'z
        b = np.concatenate([[-r + 0.5, -r - 0.5], np.zeros(k)])
        rr = (np.arange(K)[:, None, None] * (k + 2) + np.arange(k + 2)[None, :, None]).repeat(dz, axis=2)
        cc = np.broadcast_to(idx[:, None, :], (K, k + 2, dz))
        vv = np.broadcast_to(coef[None], (K, k + 2, dz))
        M = sp.csr_matrix((vv.ravel(), (rr.ravel(), cc.ravel())), shape=(K * (k + 2), rows.nvar))
        rows.add_soc(M, np.tile(b, K), label, k + 2)
    else:
        if ref is None:
            raise RecoveryError(f"constraint {g!r} needs a reference point for linearization")
        grads = [poly_diff(g, i) for i in range(dz)]
        for p in range(K):
            z0 = ref[p]
            a = np.array([gi(z0) for gi in grads])
            b0 = g(z0) - a @ z0
            M = sp.csr_matrix((-a, (np.zeros(dz, int), idx[p])), shape=(1, rows.nvar))
            rows.add_le(M, [b0], label)


def _solve_rows(P, q, rows: _Rows, nvar):
    import clarabel

    blocks, rhs, cones, labels = [], [], [], []
    if rows.eq:
        E = sp.vstack([r[0] for r in rows.eq])
        blocks.append(E)
        rhs.append(np.concatenate([r[1] for r in rows.eq]))
        cones.append(clarabel.ZeroConeT(E.shape[0]))
        labels += [lab for M, _, lab in rows.eq for _ in range(M.shape[0])]
    if rows.ineq:
        G = sp.vstack([r[0] for r in rows.ineq])
        blocks.append(G)
        rhs.append(np.concatenate([r[1] for r in rows.ineq]))
        cones.append(clarabel.NonnegativeConeT(G.shape[0]))
        labels += [lab for M, _, lab in rows.ineq for _ in range(M.shape[0])]
    for M, b, lab, size in rows.soc:
        blocks.append(M)
        rhs.append(b)
        cones += [clarabel.SecondOrderConeT(size)] * (M.shape[0] // size)
        labels += [lab] * M.shape[0]
    A = sp.vstack(blocks).tocsc()
    b = np.concatenate(rhs)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = settings.tol_gap_rel = QP_TOL
    settings.tol_feas = QP_TOL
    sol = clarabel.DefaultSolver(sp.triu(P).tocsc(), q, A, b, cones, settings).solve()
    return str(sol.status).split(".")[-1], np.array(sol.x), np.array(sol.z), labels


def _diagnose(rows: _Rows, nvar) -> list:
    """Labels of constraint groups that an elastic LP cannot satisfy."""
    mats, rhs, labels, kinds = [], [], [], []
    for M, b, lab in rows.eq:
        mats.append(M)
        rhs.append(b)
        labels += [lab] * M.shape[0]
        kinds += [0] * M.shape[0]
    for M, b, lab in rows.ineq:
        mats.append(M)
        rhs.append(b)
        labels += [lab] * M.shape[0]
        kinds += [1] * M.shape[0]
    if not mats:
        return []
    A = sp.vstack(mats).tocsr()
    b = np.concatenate(rhs)
    kinds = np.array(kinds)
    r = A.shape[0]
    # A w + s_plus - s_minus (=|<=) b with slack penalties
    eye = sp.identity(r, format="csr")
    Aeq = sp.hstack([A[kinds == 0], eye[kinds == 0], -eye[kinds == 0]])
    Aub = sp.hstack([A[kinds == 1], -eye[kinds == 1], sp.csr_matrix(((kinds == 1).sum(), r))])
    c = np.concatenate([np.zeros(nvar), np.ones(2 * r)])
    res = linprog(
        c,
        A_ub=Aub if Aub.shape[0] else None,
        b_ub=b[kinds == 1] if Aub.shape[0] else None,
        A_eq=Aeq if Aeq.shape[0] else None,
        b_eq=b[kinds == 0] if Aeq.shape[0] else None,
        bounds=[(None, None)] * nvar + [(0, None)] * (2 * r),
        method="highs",
    )
    if res.status != 0:
        return []
    slack = res.x[nvar : nvar + r] + res.x[nvar + r :]
    bad = sorted({str(labels[i]) for i in np.flatnonzero(slack > 1e-7)})
    return bad


@dataclass
class _Iterate:
    cost: float
    xs: list
    us: list
    grad: np.ndarray | None = None


class _Solver:
    def __init__(self, prob: TranscriptionProblem):
        self.prob = prob
        self.lay = _Layout(prob)
        self.costs = []
        for s in prob.segments:
            Q, q, r = quadratic_parts(s.mode.c)
            if _psd_factor(Q) is None:
                raise RecoveryError(f"cost of mode for edge {s.edge!r} is not convex quadratic")
            self.costs.append((Q, q, r))
        self.affine = prob.affine
        self.evals = 0
        self._static = None

    # cost terms -------------------------------------------------------------

    def _cost(self, h):
        nv = self.lay.size
        rows, cols, vals = [], [], []
        q = np.zeros(nv)
        const = 0.0
        n = self.prob.state_dim
        for s, seg in enumerate(self.prob.segments):
            Q, qv, r = self.costs[s]
            z = np.hstack([self.lay.xi[s][:-1], self.lay.ui[s]])  # (N, n+m)
            nz = np.nonzero(Q)
            for a, b in zip(*nz):
                rows.append(z[:, a])
                cols.append(z[:, b])
                vals.append(np.full(seg.N, h[s] * Q[a, b]))
            np.add.at(q, z.ravel(), np.tile(h[s] * qv, seg.N))
            const += h[s] * r * seg.N
        if rows:
            P = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nv, nv))
        else:
            P = sp.csr_matrix((nv, nv))
        return P, q, const

    def true_cost(self, xs, us, h) -> float:
        total = 0.0
        for s, seg in enumerate(self.prob.segments):
            z = np.hstack([xs[s][:-1], us[s]])
            total += h[s] * float(np.sum(seg.mode.c.evaluate(z)))
        return total

    # rows ---------------------------------------------------------------------

    def _dynamics_rows(self, h, ref_x=None, ref_u=None) -> _Rows:
        """Euler rows ``x_{k+1} - x_k - h (A_k z_k + e_k) = 0`` per segment."""
        prob, lay = self.prob, self.lay
        n, m = prob.state_dim, prob.input_dim
        rows = _Rows(lay.size)
        for s, seg in enumerate(prob.segments):
            N = seg.N
            X, U = lay.xi[s], lay.ui[s]
            fz = seg.mode.f
            if self.affine:
                Af = np.zeros((n, n + m))
                ef = np.zeros(n)
                for i, fi in enumerate(fz):
                    Af[i], ef[i] = affine_parts(fi)
                Ak = np.repeat(Af[None], N, axis=0)
                ek = np.repeat(ef[None], N, axis=0)
            else:
                # linearization about the reference iterate
                zref = np.hstack([ref_x[s][:-1], ref_u[s]])
                Ak = np.stack([np.array([poly_diff(fi, j).evaluate(zref) for j in range(n + m)]).T for fi in fz], axis=1)
                fref = np.stack([fi.evaluate(zref) for fi in fz], axis=1)
                ek = fref - np.einsum("kij,kj->ki", Ak, zref)
            base = np.arange(N)[:, None] * n + np.arange(n)[None, :]
            zcols = np.hstack([X[:-1], U])
            r_idx = [base.ravel(), base.ravel(), np.repeat(base[:, :, None], n + m, axis=2).ravel()]
            c_idx = [X[1:].ravel(), X[:-1].ravel(), np.repeat(zcols[:, None, :], n, axis=1).ravel()]
            vals = [np.ones(N * n), -np.ones(N * n), (-h[s] * Ak).ravel()]
            M = sp.csr_matrix((np.concatenate(vals), (np.concatenate(r_idx), np.concatenate(c_idx))), shape=(N * n, lay.size))
            rows.add_eq(M, (h[s] * ek).ravel(), ("dynamics", s))
        return rows

    def _static_rows(self, ref_x=None, ref_u=None, radius=None) -> _Rows:
        """Set membership, continuity and boundary rows (independent of ``h``)."""
        prob, lay = self.prob, self.lay
        n = prob.state_dim
        rows = _Rows(lay.size)
        for s, seg in enumerate(prob.segments):
            X, U = lay.xi[s], lay.ui[s]
            xref = ref_x[s] if ref_x is not None else prob.x_init[s]
            uref = ref_u[s] if ref_u is not None else prob.u_init[s]
            for g in seg.mode.X.inequalities:
                _membership_rows(rows, g, X, xref, ("X", s))
            for g in seg.mode.U.inequalities:
                _membership_rows(rows, g, U, uref, ("U", s))
            if radius is not None:
                sel = _select(lay.size, np.concatenate([X.ravel(), U.ravel()]))
                ref = np.concatenate([xref.ravel(), uref.ravel()])
                rows.add_le(sel, ref + radius, ("trust", s))
                rows.add_le(-sel, -(ref - radius), ("trust", s))
            if s + 1 < len(prob.segments):
                rows.add_eq(_select(lay.size, X[-1]) - _select(lay.size, lay.xi[s + 1][0]), np.zeros(n), ("continuity", s))
        X0, XN = lay.xi[0][0], lay.xi[-1][-1]
        for which, bnd, idx, ref in (("initial", prob.initial, X0, prob.x_init[0][0]), ("terminal", prob.terminal, XN, prob.x_init[-1][-1])):
            if bnd.kind == "point":
                rows.add_eq(_select(lay.size, idx), np.asarray(bnd.point, float), (which,))
            else:
                for g in bnd.set.inequalities:
                    _membership_rows(rows, g, idx[None, :], ref[None, :], (which,))
        return rows

    def _rows(self, h, ref_x=None, ref_u=None, radius=None) -> _Rows:
        if ref_x is None and radius is None:
            if self._static is None:
                self._static = self._static_rows()
            static = self._static
        else:
            static = self._static_rows(ref_x, ref_u, radius)
        rows = self._dynamics_rows(h, ref_x, ref_u)
        rows.extend(static)
        return rows

    def solve_fixed_h(self, h, ref=None, radius=None) -> _Iterate:
        """Optimal states and inputs for step sizes ``h`` (raises when infeasible)."""
        self.evals += 1
        P, q, const = self._cost(h)
        rx, ru = (ref.xs, ref.us) if ref is not None else (None, None)
        rows = self._rows(h, rx, ru, radius)
        status, w, z, _ = _solve_rows(P, q, rows, self.lay.size)
        if status not in ("Solved", "AlmostSolved"):
            raise SubproblemInfeasible(f"subproblem with h={np.round(h, 6).tolist()} is {status}", _diagnose(rows, self.lay.size))
        xs, us = self.lay.split(w)
        return _Iterate(self.true_cost(xs, us, h), xs, us, self._h_gradient(rows, z, xs, us))

    def _h_gradient(self, rows: _Rows, z, xs, us) -> np.ndarray:
        """Derivative of the optimal subproblem cost with respect to each step size.

        With duals ``z`` of ``A w + s = b``, the value's derivative is the
        partial derivative of the Lagrangian ``J + z'(A w - b)``.  Only the
        cost and the dynamics rows depend on ``h``; a dynamics row's
        derivative is ``-f(x_k, u_k)``.
        """
        grad = np.zeros(len(self.prob.segments))
        off = 0
        fvals = {}
        for M, _, lab in rows.eq:
            k = M.shape[0]
            if lab[0] == "dynamics":
                s = lab[1]
                seg = self.prob.segments[s]
                zz = np.hstack([xs[s][:-1], us[s]])
                f = np.stack([fi.evaluate(zz) for fi in seg.mode.f], axis=1).ravel()
                fvals[s] = float(np.sum(seg.mode.c.evaluate(zz)))
                grad[s] -= float(z[off : off + k] @ f)
            off += k
        for s, c in fvals.items():
            grad[s] += c
        return grad

    def residual(self, it: _Iterate, h) -> float:
        worst = 0.0
        for s, seg in enumerate(self.prob.segments):
            z = np.hstack([it.xs[s][:-1], it.us[s]])
            fz = np.stack([fi.evaluate(z) for fi in seg.mode.f], axis=1)
            worst = max(worst, float(np.abs(it.xs[s][1:] - it.xs[s][:-1] - h[s] * fz).max()))
        return worst

    def solve_h(self, h, start: _Iterate | None = None) -> _Iterate:
        """Subproblem A; sequential convexification for non-affine dynamics."""
        if self.affine:
            return self.solve_fixed_h(h)
        ref = start or _Iterate(np.inf, list(self.prob.x_init), list(self.prob.u_init))
        radius = TRUST_RADIUS
        best = None
        for _ in range(50):
            cand = self.solve_fixed_h(h, ref, radius)
            res = self.residual(cand, h)
            merit = cand.cost + 1e3 * res
            if best is None or merit < best[0]:
                step = max(float(np.abs(np.concatenate([a.ravel() for a in cand.xs]) - np.concatenate([a.ravel() for a in ref.xs])).max(initial=0.0)), 0.0)
                best = (merit, cand, res)
                ref = cand
                if res <= FEAS_TOL and step <= 1e-7:
                    break
            else:
                radius *= 0.5
                if radius < 1e-8:
                    break
        merit, cand, res = best
        if res > FEAS_TOL:
            raise SubproblemInfeasible(f"linearized dynamics did not converge (residual {res:.2e})", [])
        return cand


# --------------------------------------------------------------------------
# results


@dataclass
class RecoveredTrajectory:
    t: np.ndarray
    mode: list
    x: np.ndarray
    u: np.ndarray
    h: np.ndarray
    total_cost: float
    converged: bool
    iterations: int
    history: list
    dynamics_residual: float
    solve_time: float = 0.0
    segments: list = field(default_factory=list)  # (edge, xs, us) per segment

    def to_trajectory(self) -> Trajectory:
        return Trajectory(self.t, list(self.mode), self.x, self.u, "recovered")

    def to_csv(self, path) -> Path:
        return self.to_trajectory().to_csv(path)

    def report(self, gmp_objective: float | None = None) -> dict:
        gap = None
        if gmp_objective is not None and np.isfinite(gmp_objective):
            gap = float(self.total_cost - gmp_objective)
        return {"cost": float(self.total_cost), "iterations": int(self.iterations), "converged": bool(self.converged), "gap_vs_gmp": gap}

    def write_report(self, path, gmp_objective: float | None = None) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.report(gmp_objective), indent=2) + "\n")
        return path


def _assemble_result(prob, it: _Iterate, h, history, converged, iterations, residual, elapsed) -> RecoveredTrajectory:
    ts, modes, xs, us = [], [], [], []
    t0 = 0.0
    m = prob.input_dim
    for s, seg in enumerate(prob.segments):
        for k in range(seg.N):
            ts.append(t0 + k * h[s])
            modes.append(str(seg.edge[0]))
            xs.append(it.xs[s][k])
            us.append(it.us[s][k])
        t0 += seg.N * h[s]
    ts.append(t0)
    modes.append(str(prob.segments[-1].edge[0]))
    xs.append(it.xs[-1][-1])
    us.append(np.full(m, np.nan))
    return RecoveredTrajectory(
        t=np.array(ts),
        mode=modes,
        x=np.array(xs),
        u=np.array(us).reshape(len(us), m),
        h=np.array(h, float),
        total_cost=float(it.cost),
        converged=converged,
        iterations=iterations,
        history=list(history),
        dynamics_residual=residual,
        solve_time=elapsed,
        segments=[(seg.edge, it.xs[k], it.us[k]) for k, seg in enumerate(prob.segments)],
    )


def _stationary(g: float, h: float, lo: float, hi: float, scale: float) -> bool:
    """First-order optimality of one step size inside ``[lo, hi]``."""
    tol = KKT_TOL * scale
    if h <= lo * (1 + 1e-9):
        return g * h >= -tol
    if h >= hi * (1 - 1e-9):
        return g * h <= tol
    return abs(g) * h <= tol


def _h_sweep(solver: _Solver, h, it: _Iterate, first: bool):
    """One pass of bounded scalar searches over the per-segment step sizes.

    Segments whose dual-based derivative already satisfies the optimality
    conditions are skipped.  Only improvements are accepted.
    """
    prob = solver.prob
    cache = {}

    def value(hs):
        key = tuple(np.round(hs, 12))
        if key not in cache:
            try:
                cache[key] = solver.solve_h(hs, it)
            except SubproblemInfeasible:
                cache[key] = None
        return cache[key]

    for s in range(len(prob.segments)):
        if it.grad is not None and _stationary(it.grad[s], h[s], prob.h_min, prob.h_max, max(1.0, abs(it.cost))):
            continue
        if first:
            lo, hi = prob.h_min, prob.h_max
        else:
            lo, hi = max(prob.h_min, h[s] / WINDOW), min(prob.h_max, h[s] * WINDOW)

        def f(v, s=s):
            hs = h.copy()
            hs[s] = v
            got = value(hs)
            return 1e30 if got is None else got.cost

        res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": XATOL, "maxiter": 40})
        best_h, best = res.x, res.fun
        # the bounded search never lands exactly on an endpoint
        for edge in (lo, hi):
            if abs(res.x - edge) <= 10 * XATOL:
                val = f(edge)
                if val < best:
                    best_h, best = edge, val
        if best < it.cost:
            hs = h.copy()
            hs[s] = best_h
            cand = value(hs)
            if cand is not None and cand.cost < it.cost:
                h, it = hs, cand
        cache.clear()
    return h, it


def alternate_solve(prob: TranscriptionProblem, max_iter: int = MAX_ITER, rel_tol: float = REL_TOL) -> RecoveredTrajectory:
    """Alternate between the convex (x, u) problem and the step sizes ``h``."""
    t_start = time.perf_counter()
    solver = _Solver(prob)
    h = np.clip(np.array(prob.h_init if prob.h_init is not None else np.full(len(prob.segments), H_INIT), float), prob.h_min, prob.h_max)

    # find a feasible starting step size by growing h geometrically
    it = None
    last_err = None
    trial = h.copy()
    while True:
        try:
            it = solver.solve_h(trial)
            h = trial
            break
        except SubproblemInfeasible as exc:
            last_err = exc
            if np.all(trial >= prob.h_max):
                break
            trial = np.minimum(trial * 2.0, prob.h_max)
    if it is None:
        raise last_err

    history = [it.cost]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        h, it = _h_sweep(solver, h, it, first=iterations == 1)
        history.append(it.cost)
        prev = history[-2]
        if prev - it.cost <= rel_tol * max(1.0, abs(prev)):
            converged = True
            break
    residual = solver.residual(it, h)
    log.info("recovery: cost %.6g after %d iterations (%d QP solves)", it.cost, iterations, solver.evals)
    return _assemble_result(prob, it, h, history, converged, iterations, residual, time.perf_counter() - t_start)


def recover(hybrid: HybridSystem, sequence: ModeSequence, N: int = 20, **kwargs) -> RecoveredTrajectory:
    return alternate_solve(build_transcription(hybrid, sequence, N), **kwargs)


def constraint_violation(hybrid: HybridSystem, traj: RecoveredTrajectory) -> float:
    """Largest violation of state/input set constraints along a recovered trajectory."""
    worst = 0.0
    for edge, xs, us in traj.segments:
        mode = hybrid.modes[edge[0]]
        for g in mode.X.inequalities:
            worst = max(worst, float(-g.evaluate(xs).min()))
        for g in mode.U.inequalities:
            worst = max(worst, float(-g.evaluate(us).min()))
    return worst
