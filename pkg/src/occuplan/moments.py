"""Truncated moment sequences, moment matrices and localizing matrices."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from math import ceil
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .polyalg import Polynomial, basis_exponents, basis_size, monomial_basis

PSD_TOL = 1e-7


@dataclass(frozen=True)
class SemialgebraicSet:
    """``{z : g(z) >= 0 for every g in inequalities}``."""

    num_vars: int
    inequalities: tuple = ()

    def __post_init__(self):
        ineqs = tuple(self.inequalities)
        for g in ineqs:
            if g.num_vars != self.num_vars:
                raise ValueError(f"inequality over {g.num_vars} vars in a {self.num_vars}-var set")
        object.__setattr__(self, "inequalities", ineqs)

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float], ball_radius: float | None = None):
        n = len(lower)
        ineqs = []
        for i, (lo, hi) in enumerate(zip(lower, upper)):
            xi = Polynomial.variable(i, n)
            if np.isfinite(lo):
                ineqs.append(xi - lo)
            if np.isfinite(hi):
                ineqs.append(hi - xi)
        s = cls(n, tuple(ineqs))
        return s.with_ball(ball_radius) if ball_radius is not None else s

    @classmethod
    def ball(cls, num_vars: int, radius: float, center: Sequence[float] | None = None):
        center = np.zeros(num_vars) if center is None else np.asarray(center, float)
        g = Polynomial.constant(radius**2, num_vars)
        for i in range(num_vars):
            d = Polynomial.variable(i, num_vars) - float(center[i])
            g = g - d * d
        return cls(num_vars, (g,))

    def with_ball(self, radius: float) -> "SemialgebraicSet":
        if self.has_ball():
            return self
        return self & SemialgebraicSet.ball(self.num_vars, radius)

    def has_ball(self) -> bool:
        return any(_is_origin_ball(g) for g in self.inequalities)

    def __and__(self, other: "SemialgebraicSet") -> "SemialgebraicSet":
        if other.num_vars != self.num_vars:
            raise ValueError("cannot intersect sets of different dimension")
        seen = list(self.inequalities)
        for g in other.inequalities:
            if g not in seen:
                seen.append(g)
        return SemialgebraicSet(self.num_vars, tuple(seen))

    def embed(self, num_vars: int, offset: int = 0) -> "SemialgebraicSet":
        return SemialgebraicSet(num_vars, tuple(g.embed(num_vars, offset) for g in self.inequalities))

    def product(self, other: "SemialgebraicSet") -> "SemialgebraicSet":
        n = self.num_vars + other.num_vars
        return self.embed(n, 0) & other.embed(n, self.num_vars)

    def contains(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, float))
        ok = np.ones(points.shape[0], dtype=bool)
        for g in self.inequalities:
            ok &= g.evaluate(points) >= -tol
        return ok

    def is_affine(self) -> bool:
        return all(g.degree() <= 1 for g in self.inequalities)

    def affine_form(self) -> tuple[np.ndarray, np.ndarray]:
        """Rows ``(A, b)`` with the set's affine inequalities as ``A z <= b``."""
        rows, rhs = [], []
        for g in self.inequalities:
            if g.degree() > 1:
                continue
            a = np.array([-g.coefficient(_unit(i, self.num_vars)) for i in range(self.num_vars)])
            rows.append(a)
            rhs.append(g.coefficient((0,) * self.num_vars))
        return np.array(rows).reshape(-1, self.num_vars), np.array(rhs)

    def box_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-coordinate bounds implied by single-variable affine constraints."""
        lo = np.full(self.num_vars, -np.inf)
        hi = np.full(self.num_vars, np.inf)
        A, b = self.affine_form()
        for a, bi in zip(A, b):
            nz = np.flatnonzero(a)
            if len(nz) != 1:
                continue
            i = nz[0]
            if a[i] > 0:
                hi[i] = min(hi[i], bi / a[i])
            else:
                lo[i] = max(lo[i], bi / a[i])
        return lo, hi

    def to_json(self) -> dict:
        return {"inequalities": [g.to_json() for g in self.inequalities]}

    @classmethod
    def from_json(cls, data: dict, num_vars: int, default_ball: float | None = None) -> "SemialgebraicSet":
        ineqs = tuple(Polynomial.from_json(t, num_vars) for t in data.get("inequalities", []))
        s = cls(num_vars, ineqs)
        if "box" in data:
            lo = [-np.inf if v is None else float(v) for v in data["box"]["lower"]]
            hi = [np.inf if v is None else float(v) for v in data["box"]["upper"]]
            s = s & cls.box(lo, hi)
        if "ball_radius" in data:
            s = s.with_ball(float(data["ball_radius"]))
        elif default_ball is not None and not s.has_ball():
            warnings.warn(f"set has no ball constraint; adding radius {default_ball}", stacklevel=2)
            s = s.with_ball(default_ball)
        return s


def _unit(i: int, n: int) -> tuple:
    e = [0] * n
    e[i] = 1
    return tuple(e)


def _is_origin_ball(g: Polynomial) -> bool:
    n = g.num_vars
    if g.degree() != 2 or g.coefficient((0,) * n) <= 0:
        return False
    for e, c in g.items():
        s = sum(e)
        if s == 0:
            continue
        if s != 2 or max(e) != 2 or c != -1.0:
            return False
    return len(g.terms) == n + 1


@dataclass(frozen=True)
class MomentVector:
    num_vars: int
    degree: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (basis_size(self.num_vars, self.degree),):
            raise ValueError(f"expected {basis_size(self.num_vars, self.degree)} moments, got {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def mass(self) -> float:
        return float(self.values[0])

    def integrate(self, p: Polynomial) -> float:
        idx, coef = p.sparse_indices()
        if idx.size and idx.max() >= self.values.size:
            raise ValueError("polynomial degree exceeds the moment truncation")
        return float(coef @ self.values[idx])

    def moment_matrix(self, d: int | None = None) -> np.ndarray:
        d = self.degree // 2 if d is None else d
        lay = moment_matrix_layout(self.num_vars, d)
        return self.values[lay.entry_index]

    def localizing_matrix(self, g: Polynomial, d: int | None = None) -> np.ndarray:
        d = self.degree // 2 if d is None else d
        lay = localizing_layout(g, self.num_vars, d)
        return lay.apply(self.values)

    def truncate(self, degree: int) -> "MomentVector":
        return MomentVector(self.num_vars, degree, self.values[: basis_size(self.num_vars, degree)])

    def __add__(self, other):
        return MomentVector(self.num_vars, self.degree, self.values + other.values)

    def __mul__(self, a):
        return MomentVector(self.num_vars, self.degree, self.values * float(a))

    __rmul__ = __mul__


@dataclass(frozen=True)
class MomentMatrixLayout:
    row_basis: tuple
    entry_index: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.row_basis)


@lru_cache(maxsize=None)
def moment_matrix_layout(num_vars: int, d: int) -> MomentMatrixLayout:
    if d < 0:
        raise ValueError("d must be nonnegative")
    rows = basis_exponents(num_vars, d)
    s = rows.shape[0]
    sums = (rows[:, None, :] + rows[None, :, :]).reshape(s * s, num_vars)
    idx = _kernels.glex_rank(sums).reshape(s, s)
    idx.setflags(write=False)
    return MomentMatrixLayout(monomial_basis(num_vars, d), idx)


@dataclass(frozen=True)
class LocalizingLayout:
    """Localizing matrix as a sparse map ``vec(M) = L @ moments``."""

    row_basis: tuple
    matrix: sp.csr_matrix = field(repr=False)  # shape (s*s, n_moments)

    @property
    def size(self) -> int:
        return len(self.row_basis)

    def apply(self, values: np.ndarray) -> np.ndarray:
        n = self.matrix.shape[1]
        return (self.matrix @ np.asarray(values)[:n]).reshape(self.size, self.size)


def localizing_layout(g: Polynomial, num_vars: int, d: int) -> LocalizingLayout:
    if g.num_vars != num_vars:
        raise ValueError("g does not match num_vars")
    return _localizing_layout_cached(g, num_vars, d)


@lru_cache(maxsize=4096)
def _localizing_layout_cached(g: Polynomial, num_vars: int, d: int) -> LocalizingLayout:
    dg = g.degree()
    if dg > 2 * d:
        raise ValueError(f"constraint of degree {dg} cannot be localized at relaxation degree {d}")
    d_loc = d - ceil(max(dg, 0) / 2)
    rows = basis_exponents(num_vars, d_loc)
    s = rows.shape[0]
    n_mom = basis_size(num_vars, 2 * d)
    g_exps = np.array(list(g.terms.keys()), dtype=np.int64).reshape(-1, num_vars)
    g_coef = np.array(list(g.terms.values()))
    pair = (rows[:, None, :] + rows[None, :, :]).reshape(s * s, 1, num_vars)
    full = (pair + g_exps[None, :, :]).reshape(-1, num_vars)
    cols = _kernels.glex_rank(full)
    row_ids = np.repeat(np.arange(s * s), len(g_coef))
    vals = np.tile(g_coef, s * s)
    mat = sp.csr_matrix((vals, (row_ids, cols)), shape=(s * s, n_mom))
    mat.sum_duplicates()
    return LocalizingLayout(monomial_basis(num_vars, d_loc), mat)


def dirac_moments(point: Sequence[float], degree: int) -> MomentVector:
    point = np.atleast_1d(np.asarray(point, dtype=float))
    n = point.size
    vals = _kernels.monomial_eval(point[None, :], basis_exponents(n, degree))[0]
    return MomentVector(n, degree, vals)


def empirical_moments(samples, weights, degree: int) -> MomentVector:
    """Moments of ``sum_k w_k delta(samples_k)``."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    weights = np.asarray(weights, dtype=float).ravel()
    if samples.shape[0] != weights.size:
        raise ValueError(f"{samples.shape[0]} samples but {weights.size} weights")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    n = samples.shape[1]
    vals = _kernels.weighted_moments(samples, weights, basis_exponents(n, degree))
    return MomentVector(n, degree, vals)


def is_psd(mat: np.ndarray, tol: float | None = None) -> bool:
    mat = np.asarray(mat, float)
    lam = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    tol = PSD_TOL * (1.0 + abs(np.trace(mat))) if tol is None else tol
    return bool(lam.min() >= -tol)
