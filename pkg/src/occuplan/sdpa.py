"""SDPA sparse (``.dat-s``) export and an independent reader/solver.

The exported problem is SDPA's free-variable form::

    minimize    sum_i c_i z_i
    subject to  sum_i F_i z_i - F_0  >= 0   (block diagonal, PSD)

PSD blocks of the program map to matrix blocks.  Nonnegative scalars,
1x1 PSD blocks and each equality (as a pair ``a.z - b >= 0``,
``b - a.z >= 0``) go to one trailing diagonal block.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def export_standard_form(program, path) -> Path:
    from .gmp import triangle_positions

    path = Path(path)
    n = program.n_vars
    entries = []  # (matno, blkno, i, j, value), 1-based
    struct = []
    lp_rows = []  # list of (sparse row over z, constant term)
    blk_no = 0
    for blk in program.psd:
        if blk.size == 1:
            lp_rows.append((blk.matrix[0], 0.0))
            continue
        blk_no += 1
        struct.append(blk.size)
        ii, jj = triangle_positions(blk.size)
        coo = blk.matrix.tocoo()
        for r, c, v in zip(coo.row, coo.col, coo.data):
            if v != 0.0:
                entries.append((int(c) + 1, blk_no, int(ii[r]) + 1, int(jj[r]) + 1, float(v)))
    for k in program.nonneg:
        lp_rows.append((sp.csr_matrix(([1.0], ([0], [int(k)])), shape=(1, n)), 0.0))
    A = program.A.tocsr()
    for r in range(A.shape[0]):
        row = A[r]
        lp_rows.append((row, float(program.b[r])))
        lp_rows.append((-row, -float(program.b[r])))
    if lp_rows:
        blk_no += 1
        struct.append(-len(lp_rows))
        for pos, (row, const) in enumerate(lp_rows, start=1):
            row = sp.csr_matrix(row)
            for c, v in zip(row.indices, row.data):
                if v != 0.0:
                    entries.append((int(c) + 1, blk_no, pos, pos, float(v)))
            if const != 0.0:
                entries.append((0, blk_no, pos, pos, const))
    entries.sort()
    lines = [
        f'"occuplan conic program: {n} variables, objective constant {_fmt(program.c0)}"',
        str(n),
        str(len(struct)),
        " ".join(str(s) for s in struct),
        " ".join(_fmt(v) for v in program.c),
    ]
    lines += [f"{m} {b} {i} {j} {_fmt(v)}" for m, b, i, j, v in entries]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_sdpa(path):
    """Parse a ``.dat-s`` file into ``(c, struct, entries)``."""
    raw = Path(path).read_text().splitlines()
    body = [ln for ln in raw if ln.strip() and not ln.lstrip().startswith(('"', "*"))]
    m = int(body[0].split()[0])
    nblocks = int(body[1].split()[0])
    struct = [int(float(s)) for s in body[2].replace(",", " ").replace("{", " ").replace("}", " ").split()[:nblocks]]
    c = np.array([float(s) for s in body[3].replace(",", " ").replace("{", " ").replace("}", " ").split()[:m]])
    entries = []
    for ln in body[4:]:
        parts = ln.split()
        entries.append((int(parts[0]), int(parts[1]), int(parts[2]), int(parts[3]), float(parts[4])))
    return c, struct, entries


def solve_sdpa_file(path, solver: str = "CVXOPT") -> tuple[str, float]:
    """Solve an SDPA sparse file with cvxpy; returns ``(status, value)``."""
    import cvxpy as cp

    c, struct, entries = read_sdpa(path)
    m = len(c)
    x = cp.Variable(m)
    by_block: dict = {}
    for matno, blk, i, j, v in entries:
        by_block.setdefault(blk, []).append((matno, i - 1, j - 1, v))
    cons = []
    for b, size in enumerate(struct, start=1):
        items = by_block.get(b, [])
        if size < 0:
            k = -size
            rows, cols, vals = [], [], []
            const = np.zeros(k)
            for matno, i, j, v in items:
                if matno == 0:
                    const[i] += v
                else:
                    rows.append(i)
                    cols.append(matno - 1)
                    vals.append(v)
            G = sp.csr_matrix((vals, (rows, cols)), shape=(k, m))
            cons.append(G @ x - const >= 0)
        else:
            s2 = size * size
            rows, cols, vals = [], [], []
            const = np.zeros((size, size))
            for matno, i, j, v in items:
                if matno == 0:
                    const[i, j] = const[j, i] = v
                    continue
                rows.append(i * size + j)
                cols.append(matno - 1)
                vals.append(v)
                if i != j:
                    rows.append(j * size + i)
                    cols.append(matno - 1)
                    vals.append(v)
            G = sp.csr_matrix((vals, (rows, cols)), shape=(s2, m))
            M = cp.reshape(G @ x, (size, size), order="C") - const
            cons.append(0.5 * (M + M.T) >> 0)
    prob = cp.Problem(cp.Minimize(c @ x), cons)
    prob.solve(solver=solver)
    return prob.status, float(prob.value) if prob.value is not None else float("nan")
