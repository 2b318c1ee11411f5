"""Mode sequences, value functions and Bellman policies from a GMP solution."""
from __future__ import annotations

import csv
import heapq
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Hashable, Sequence

import numpy as np

from .gmp import GmpSolution, HybridSystem
from .liouville import Mode
from .moments import SemialgebraicSet
from .polyalg import Polynomial, basis_exponents, gradient, poly_diff

MASS_EPS = 1e-9


class ExtractionError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModeSequence:
    edges: tuple
    likelihood: float

    @property
    def modes(self) -> list:
        if not self.edges:
            return []
        return [self.edges[0][0]] + [e[1] for e in self.edges]

    def __len__(self):
        return len(self.edges)


def edge_masses(sol: GmpSolution, eps: float = MASS_EPS) -> dict:
    """Transition probabilities: mass of each edge's initial measure, clamped to [eps, 1]."""
    if sol.status not in ("optimal", "inaccurate"):
        raise ExtractionError(f"no primal solution (status {sol.status})")
    return {e: float(np.clip(blk.mu0.mass, eps, 1.0)) for e, blk in sol.edge_blocks.items()}


def _key(node) -> str:
    return str(node)


def mode_sequence(masses: dict, graph: Sequence[tuple], s: Hashable, t: Hashable) -> ModeSequence:
    """Maximum-likelihood s-t path: shortest path under weights ``-log(mass)``.

    Ties go to the lexicographically smallest edge sequence (by string form).
    When ``s == t`` the path must use at least one edge.
    """
    succ: dict = {}
    for e in sorted(graph, key=lambda e: (_key(e[0]), _key(e[1]))):
        succ.setdefault(e[0], []).append(e)
    w = {e: -np.log(min(max(masses.get(e, MASS_EPS), MASS_EPS), 1.0)) for e in graph}
    tick = itertools.count()
    heap = [(0.0, (), next(tick), s, ())]
    settled = set()
    while heap:
        dist, keys, _, v, path = heapq.heappop(heap)
        if path and v == t:
            like = float(np.prod([min(masses.get(e, MASS_EPS), 1.0) for e in path]))
            return ModeSequence(path, like)
        if path:
            if v in settled:
                continue
            settled.add(v)
        for e in succ.get(v, []):
            if e[1] in settled and e[1] != t:
                continue
            heapq.heappush(heap, (dist + w[e], keys + ((_key(e[0]), _key(e[1])),), next(tick), e[1], path + (e,)))
    raise ExtractionError(f"no path from {s!r} to {t!r}")


def value_functions(sol: GmpSolution) -> dict:
    """Per-edge value function polynomials over the state variables."""
    if not sol.dual_liouville:
        raise ExtractionError("solution carries no dual multipliers")
    out = {}
    for e, coef in sol.dual_liouville.items():
        n = sol.edge_blocks[e].mu0.num_vars if e in sol.edge_blocks else None
        if n is None:
            raise ExtractionError(f"edge {e!r} missing from primal blocks")
        exps = basis_exponents(n, sol.degree * 2)
        out[e] = Polynomial(n, {tuple(exps[k]): float(c) for k, c in enumerate(coef) if c != 0.0 and np.isfinite(c)})
    return out


def hjb_residual(V: Polynomial, mode: Mode) -> Polynomial:
    """``grad V . f + c`` over the joint variables; nonnegative for a valid certificate."""
    Vz = V.embed(mode.num_vars)
    out = mode.c
    for i, fi in enumerate(mode.f):
        out = out + poly_diff(Vz, i) * fi
    return out


def sample_set(s: SemialgebraicSet, n: int, rng: np.random.Generator, box=None, max_rounds: int = 200) -> np.ndarray:
    """Uniform rejection samples from a bounded set."""
    lo, hi = s.box_bounds() if box is None else box
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("set is not box-bounded; cannot sample uniformly")
    got = []
    count = 0
    for _ in range(max_rounds):
        pts = rng.uniform(lo, hi, size=(max(4 * n, 256), len(lo)))
        pts = pts[s.contains(pts)]
        got.append(pts)
        count += len(pts)
        if count >= n:
            break
    pts = np.vstack(got)
    if len(pts) < n:
        raise ValueError("set too thin to sample")
    return pts[:n]


# --------------------------------------------------------------------------
# Bellman policy


class PolicyError(ValueError):
    pass


@dataclass
class BellmanPolicy:
    mode: Mode
    V: Polynomial
    grid_points: int = 41
    closed_form: bool = field(init=False)

    def __post_init__(self):
        m = self.mode
        n, k = m.state_dim, m.input_dim
        inputs = list(range(n, n + k))
        self._gradV = [g.embed(m.num_vars) for g in gradient(self.V)]
        self._lo, self._hi = m.U.box_bounds()
        affine = all(fi.degree_in(inputs) <= 1 for fi in m.f)
        quad = m.c.degree_in(inputs) <= 2
        H = np.zeros((k, k))
        const_hess = True
        for a, b in itertools.product(range(k), range(k)):
            h = poly_diff(poly_diff(m.c, n + a), n + b)
            if h.degree() > 0:
                const_hess = False
            H[a, b] = h.coefficient((0,) * m.num_vars)
        self._H = H
        pd = const_hess and k > 0 and np.all(np.linalg.eigvalsh(H) > 1e-12)
        box_only = len(m.U.inequalities) == sum(np.isfinite(self._lo)) + sum(np.isfinite(self._hi)) + int(m.U.has_ball())
        diag = np.allclose(H, np.diag(np.diag(H)))
        self.closed_form = bool(affine and quad and pd and diag and box_only)
        if not self.closed_form:
            if not (np.all(np.isfinite(self._lo)) and np.all(np.isfinite(self._hi))):
                raise PolicyError("argmin may be unbounded: give the mode finite input bounds")
            axes = [np.linspace(l, h, self.grid_points) for l, h in zip(self._lo, self._hi)]
            grid = np.array(list(itertools.product(*axes)))
            self._grid = grid[m.U.contains(grid)]
        self._G = [[poly_diff(fi, n + j) for j in range(k)] for fi in m.f]
        self._r = [poly_diff(m.c, n + j) for j in range(k)]

    def __call__(self, x) -> np.ndarray:
        m = self.mode
        x = np.asarray(x, float)
        k = m.input_dim
        z0 = np.concatenate([x, np.zeros(k)])
        if self.closed_form:
            gv = np.array([g(z0) for g in self._gradV])
            G = np.array([[gij(z0) for gij in row] for row in self._G]).reshape(m.state_dim, k)
            r = np.array([rj(z0) for rj in self._r])
            u = -np.linalg.solve(self._H, r + G.T @ gv)
            return np.clip(u, self._lo, self._hi)
        pts = np.hstack([np.repeat(x[None, :], len(self._grid), axis=0), self._grid])
        val = m.c.evaluate(pts)
        for i, fi in enumerate(m.f):
            val = val + self._gradV[i].evaluate(pts) * fi.evaluate(pts)
        return self._grid[int(np.argmin(val))].copy()


def bellman_policy(V: Polynomial, mode: Mode, grid_points: int = 41) -> BellmanPolicy:
    return BellmanPolicy(mode, V, grid_points)


# --------------------------------------------------------------------------
# rollout


@dataclass
class Trajectory:
    t: np.ndarray
    mode: list
    x: np.ndarray
    u: np.ndarray
    status: str = "timeout"  # reached | timeout | left_mode

    def to_csv(self, path) -> Path:
        path = Path(path)
        n, m = self.x.shape[1], self.u.shape[1]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mode"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)])
            for k in range(len(self.t)):
                w.writerow([f"{self.t[k]:.9g}", str(self.mode[k])] + [f"{v:.9g}" for v in self.x[k]] + [f"{v:.9g}" for v in self.u[k]])
        return path

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with Path(path).open() as fh:
            rows = list(csv.reader(fh))
        head = rows[0]
        n = sum(1 for h in head if h.startswith("x"))
        data = rows[1:]
        t = np.array([float(r[0]) for r in data])
        modes = [r[1] for r in data]
        x = np.array([[float(v) for v in r[2 : 2 + n]] for r in data]).reshape(len(data), n)
        u = np.array([[float(v) for v in r[2 + n :]] for r in data]).reshape(len(data), -1)
        return cls(t, modes, x, u, "loaded")


def _eval_f(f, z):
    return np.array([fi(z) for fi in f])


def rollout(controller: Callable, mode: Mode, x0, dt: float, t_max: float, stop: Callable | None = None) -> Trajectory:
    """Explicit Euler rollout of one mode under a feedback controller."""
    return hybrid_rollout([(controller, mode, None)], x0, dt, t_max, stop)


def hybrid_rollout(segments, x0, dt: float, t_max: float, stop: Callable | None = None, tol: float = 1e-6, labels=None) -> Trajectory:
    """Roll out a chain of ``(controller, mode, next_set)`` segments.

    The active segment advances when the state enters ``next_set``.  The run
    halts with status ``left_mode`` as soon as the state leaves the active
    mode's state set without entering the next one; states are never clipped.
    """
    x = np.asarray(x0, float).copy()
    k = 0
    ts, xs, us, ms = [], [], [], []
    t = 0.0
    status = "timeout"
    labels = labels or [str(i) for i in range(len(segments))]
    steps = int(np.ceil(t_max / dt))
    for _ in range(steps + 1):
        while k + 1 < len(segments) and segments[k][2] is not None and segments[k][2].contains(x, tol)[0]:
            k += 1
        ctrl, mode, _ = segments[k]
        if not mode.X.contains(x, tol)[0]:
            status = "left_mode"
            break
        u = np.asarray(ctrl(x), float).reshape(-1)
        ts.append(t)
        xs.append(x.copy())
        us.append(u)
        ms.append(labels[k])
        if stop is not None and stop(x):
            status = "reached"
            break
        if t >= t_max:
            break
        x = x + dt * _eval_f(mode.f, np.concatenate([x, u]))
        t += dt
    m = segments[0][1].input_dim
    return Trajectory(np.array(ts), ms, np.array(xs).reshape(-1, len(x0)), np.array(us).reshape(-1, m), status)


def policy_rollout(hybrid: HybridSystem, seq: ModeSequence, V: dict, x0, dt: float, t_max: float, stop=None, grid_points=41) -> Trajectory:
    """Per-edge Bellman policies along an extracted mode sequence."""
    segs = []
    for idx, e in enumerate(seq.edges):
        mode = hybrid.modes[e[0]]
        nxt = hybrid.node_set(e[1]) if e[1] in hybrid.modes else None
        if idx == len(seq.edges) - 1:
            nxt = None
        segs.append((bellman_policy(V[e], mode, grid_points), mode, nxt))
    labels = [str(e[0]) for e in seq.edges]
    return hybrid_rollout(segs, x0, dt, t_max, stop, labels=labels)
