"""Solver adapters for :class:`~occuplan.gmp.ConicProgram`.

An adapter takes a program and returns primal ``x``, equality duals ``y``
(with ``c - A^T y`` in the dual cone), PSD dual matrices and a status, in
one synchronous call.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

SQRT2 = np.sqrt(2.0)


@dataclass
class AdapterResult:
    status: str  # optimal | inaccurate | infeasible | unbounded | error
    x: np.ndarray | None
    y: np.ndarray | None
    psd_duals: list = field(default_factory=list)
    iterations: int = 0
    solve_time: float = 0.0
    raw_status: str = ""


def _svec_scale(size: int) -> np.ndarray:
    from .gmp import triangle_positions

    ii, jj = triangle_positions(size)
    return np.where(ii == jj, 1.0, SQRT2)


def _smat(size: int, v: np.ndarray) -> np.ndarray:
    from .gmp import triangle_positions

    ii, jj = triangle_positions(size)
    M = np.zeros((size, size))
    M[ii, jj] = v
    M[jj, ii] = v
    return M


class ClarabelAdapter:
    name = "clarabel"

    def __init__(self, **settings):
        self.settings = {"verbose": False, "max_iter": 400, "tol_gap_abs": 1e-7, "tol_gap_rel": 1e-7, "tol_feas": 1e-7}
        self.settings.update(settings)

    def solve(self, prog) -> AdapterResult:
        import clarabel

        n = prog.n_vars
        cones = []
        blocks = [prog.A]
        rhs = [prog.b]
        if prog.A.shape[0]:
            cones.append(clarabel.ZeroConeT(prog.A.shape[0]))
        scalar_rows = []  # 1x1 PSD blocks become nonnegativity rows
        if prog.nonneg.size:
            scalar_rows.append(sp.csr_matrix((np.ones(prog.nonneg.size), (np.arange(prog.nonneg.size), prog.nonneg)), shape=(prog.nonneg.size, n)))
        big = []
        for blk in prog.psd:
            if blk.size == 1:
                scalar_rows.append(blk.matrix)
            else:
                big.append(blk)
        n_scalar = sum(m.shape[0] for m in scalar_rows)
        if n_scalar:
            blocks.append(-sp.vstack(scalar_rows))
            rhs.append(np.zeros(n_scalar))
            cones.append(clarabel.NonnegativeConeT(n_scalar))
        for blk in big:
            blocks.append(-sp.diags(_svec_scale(blk.size)) @ blk.matrix)
            rhs.append(np.zeros(blk.matrix.shape[0]))
            cones.append(clarabel.PSDTriangleConeT(blk.size))
        A = sp.vstack(blocks).tocsc()
        b = np.concatenate(rhs)
        P = sp.csc_matrix((n, n))
        settings = clarabel.DefaultSettings()
        for k, v in self.settings.items():
            setattr(settings, k, v)
        t0 = time.perf_counter()
        sol = clarabel.DefaultSolver(P, np.asarray(prog.c, float), A, b, cones, settings).solve()
        elapsed = time.perf_counter() - t0
        raw = str(sol.status)
        status = _map_clarabel_status(raw)
        x = np.array(sol.x) if status in ("optimal", "inaccurate") else None
        z = np.array(sol.z)
        m = prog.A.shape[0]
        y = -z[:m] if x is not None else None
        psd_duals = []
        if x is not None:
            off = m + n_scalar
            for blk in big:
                k = blk.matrix.shape[0]
                psd_duals.append(_smat(blk.size, z[off : off + k] / _svec_scale(blk.size)))
                off += k
        return AdapterResult(status, x, y, psd_duals, int(sol.iterations), elapsed, raw)


def _map_clarabel_status(raw: str) -> str:
    raw = raw.split(".")[-1]
    if raw == "Solved":
        return "optimal"
    if raw in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return "infeasible"
    if raw in ("DualInfeasible", "AlmostDualInfeasible"):
        return "unbounded"
    if raw == "AlmostSolved":
        return "inaccurate"
    return "error"  # iteration/time limits, numerical trouble


class CvxpyAdapter:
    """Generic route through cvxpy (SCS, CVXOPT, ...)."""

    def __init__(self, solver: str = "SCS", **kwargs):
        self.solver = solver.upper()
        self.kwargs = kwargs
        self.name = f"cvxpy-{self.solver.lower()}"

    def solve(self, prog) -> AdapterResult:
        import cvxpy as cp
        from .gmp import triangle_positions

        z = cp.Variable(prog.n_vars)
        cons = []
        eq = prog.A @ z == prog.b if prog.A.shape[0] else None
        if eq is not None:
            cons.append(eq)
        if prog.nonneg.size:
            cons.append(z[prog.nonneg] >= 0)
        psd_cons = []
        for blk in prog.psd:
            ii, jj = triangle_positions(blk.size)
            vec = blk.matrix @ z
            if blk.size == 1:
                c = vec >= 0
            else:
                # symmetric matrix from its upper triangle
                S = np.zeros((blk.size * blk.size, len(ii)))
                S[ii * blk.size + jj, np.arange(len(ii))] = 1.0
                S[jj * blk.size + ii, np.arange(len(ii))] = 1.0
                M = cp.reshape(S @ vec, (blk.size, blk.size), order="C")
                c = 0.5 * (M + M.T) >> 0
            psd_cons.append(c)
        cons += psd_cons
        problem = cp.Problem(cp.Minimize(prog.c @ z + prog.c0), cons)
        t0 = time.perf_counter()
        try:
            problem.solve(solver=self.solver, **self.kwargs)
        except cp.SolverError as exc:
            return AdapterResult("error", None, None, raw_status=str(exc), solve_time=time.perf_counter() - t0)
        elapsed = time.perf_counter() - t0
        raw = problem.status
        status = {
            "optimal": "optimal",
            "optimal_inaccurate": "inaccurate",
            "infeasible": "infeasible",
            "infeasible_inaccurate": "infeasible",
            "unbounded": "unbounded",
            "unbounded_inaccurate": "unbounded",
        }.get(raw, "error")
        x = np.array(z.value) if z.value is not None and status in ("optimal", "inaccurate") else None
        y = None
        if x is not None and eq is not None and eq.dual_value is not None:
            # cvxpy's equality dual enters the Lagrangian with a + sign
            y = -np.asarray(eq.dual_value)
        iters = problem.solver_stats.num_iters if problem.solver_stats else 0
        return AdapterResult(status, x, y, [], int(iters or 0), elapsed, raw)


def get_adapter(spec=None):
    if spec is None:
        return ClarabelAdapter()
    if not isinstance(spec, str):
        return spec
    key = spec.lower()
    if key == "clarabel":
        return ClarabelAdapter()
    if key in ("scs", "cvxopt"):
        return CvxpyAdapter(key.upper())
    raise ValueError(f"unknown solver {spec!r}; choose clarabel, scs or cvxopt")
