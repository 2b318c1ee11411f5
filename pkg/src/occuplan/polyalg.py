"""Sparse multivariate polynomials over a graded-lex monomial basis."""
from __future__ import annotations

import itertools
from functools import lru_cache
from math import comb
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _kernels

Monomial = tuple  # tuple of nonnegative ints, one per variable


def basis_size(num_vars: int, max_degree: int) -> int:
    """Number of monomials in ``num_vars`` variables of degree <= ``max_degree``."""
    if max_degree < 0:
        return 0
    return comb(num_vars + max_degree, max_degree)


def _compositions(total: int, parts: int):
    """Exponent tuples summing to ``total``, lex-descending."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def monomial_basis(num_vars: int, max_degree: int) -> tuple[Monomial, ...]:
    """All monomials of degree <= max_degree in graded-lex order."""
    out = []
    for k in range(max_degree + 1):
        out.extend(_compositions(k, num_vars))
    return tuple(out)


@lru_cache(maxsize=None)
def basis_exponents(num_vars: int, max_degree: int) -> np.ndarray:
    arr = np.array(monomial_basis(num_vars, max_degree), dtype=np.int64)
    arr.setflags(write=False)
    return arr.reshape(-1, num_vars)


def monomial_index(m: Sequence[int], num_vars: int | None = None) -> int:
    """Graded-lex index of a monomial; the constant monomial has index 0."""
    m = tuple(int(e) for e in m)
    if num_vars is not None and len(m) != num_vars:
        raise ValueError(f"monomial {m} does not have {num_vars} variables")
    if any(e < 0 for e in m):
        raise ValueError(f"negative exponent in {m}")
    return int(_kernels.glex_rank(np.array([m], dtype=np.int64))[0])


def monomial_at(index: int, num_vars: int, max_degree: int) -> Monomial:
    """Inverse of :func:`monomial_index` restricted to degree <= max_degree."""
    if not 0 <= index < basis_size(num_vars, max_degree):
        raise IndexError(f"index {index} out of range for {num_vars} vars, degree <= {max_degree}")
    return monomial_basis(num_vars, max_degree)[index]


class Polynomial:
    """Immutable sparse polynomial ``{exponents: coefficient}``.

    Zero coefficients are never stored.  Arithmetic is exact in floating
    point; no epsilon pruning happens here.
    """

    __slots__ = ("num_vars", "_terms", "_hash")

    def __init__(self, num_vars: int, terms: Mapping[Sequence[int], float] | None = None):
        self.num_vars = int(num_vars)
        clean = {}
        for exps, coef in (terms or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.num_vars:
                raise ValueError(f"term {exps} does not match num_vars={self.num_vars}")
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            coef = float(coef)
            if coef != 0.0:
                clean[exps] = clean.get(exps, 0.0) + coef
                if clean[exps] == 0.0:
                    del clean[exps]
        self._terms = clean
        self._hash = None

    # construction helpers -------------------------------------------------

    @classmethod
    def constant(cls, value: float, num_vars: int) -> "Polynomial":
        return cls(num_vars, {(0,) * num_vars: value})

    @classmethod
    def variable(cls, index: int, num_vars: int) -> "Polynomial":
        exps = [0] * num_vars
        exps[index] = 1
        return cls(num_vars, {tuple(exps): 1.0})

    @classmethod
    def from_dense(cls, coeffs: Sequence[float], num_vars: int) -> "Polynomial":
        coeffs = np.asarray(coeffs, dtype=float)
        deg = 0
        while basis_size(num_vars, deg) < len(coeffs):
            deg += 1
        basis = monomial_basis(num_vars, deg)
        return cls(num_vars, {basis[i]: c for i, c in enumerate(coeffs) if c != 0.0})

    # accessors ------------------------------------------------------------

    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def coefficient(self, exps: Sequence[int]) -> float:
        return self._terms.get(tuple(exps), 0.0)

    def is_zero(self) -> bool:
        return not self._terms

    def degree(self) -> int:
        """Total degree; the zero polynomial has degree -1."""
        return max((sum(e) for e in self._terms), default=-1)

    def degree_in(self, variables: Iterable[int]) -> int:
        variables = list(variables)
        return max((sum(e[v] for v in variables) for e in self._terms), default=-1)

    def to_dense(self, max_degree: int) -> np.ndarray:
        if self.degree() > max_degree:
            raise ValueError(f"degree {self.degree()} exceeds {max_degree}")
        out = np.zeros(basis_size(self.num_vars, max_degree))
        for exps, coef in self._terms.items():
            out[monomial_index(exps)] = coef
        return out

    def sparse_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """(monomial indices, coefficients) of the stored terms."""
        if not self._terms:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        exps = np.array(list(self._terms.keys()), dtype=np.int64).reshape(-1, self.num_vars)
        return _kernels.glex_rank(exps), np.array(list(self._terms.values()))

    # arithmetic -----------------------------------------------------------

    def _check(self, other: "Polynomial"):
        if self.num_vars != other.num_vars:
            raise ValueError(f"num_vars mismatch: {self.num_vars} vs {other.num_vars}")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(float(other), self.num_vars)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms = dict(self._terms)
        for e, c in other._terms.items():
            terms[e] = terms.get(e, 0.0) + c
        return Polynomial(self.num_vars, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.num_vars, {e: -c for e, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial(self.num_vars, {e: c * other for e, c in self._terms.items()})
        if not isinstance(other, Polynomial):
            return NotImplemented
        return poly_mul(self, other)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = Polynomial.constant(1.0, self.num_vars)
        for _ in range(int(k)):
            out = out * self
        return out

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.num_vars == other.num_vars and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.num_vars, frozenset(self._terms.items())))
        return self._hash

    def __repr__(self):
        if not self._terms:
            return "Polynomial(0)"
        parts = []
        for e in sorted(self._terms, key=monomial_index):
            mono = "*".join(f"x{v + 1}^{k}" if k > 1 else f"x{v + 1}" for v, k in enumerate(e) if k)
            parts.append(f"{self._terms[e]:+g}" + (f"*{mono}" if mono else ""))
        return "Polynomial(" + " ".join(parts) + ")"

    # evaluation and variable maps ------------------------------------------

    def __call__(self, point):
        return self.evaluate(np.asarray(point, dtype=float)[None, :])[0]

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at each row of ``points`` (shape ``(P, num_vars)``)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.num_vars:
            raise ValueError(f"points have {points.shape[1]} columns, expected {self.num_vars}")
        if not self._terms:
            return np.zeros(points.shape[0])
        exps = np.array(list(self._terms.keys()), dtype=np.int64).reshape(-1, self.num_vars)
        coefs = np.array(list(self._terms.values()))
        return _kernels.monomial_eval(points, exps) @ coefs

    def embed(self, num_vars: int, offset: int = 0) -> "Polynomial":
        """Re-express over ``num_vars`` variables, placing ours at ``offset``."""
        if offset + self.num_vars > num_vars:
            raise ValueError("embedding does not fit")
        pad_l, pad_r = (0,) * offset, (0,) * (num_vars - offset - self.num_vars)
        return Polynomial(num_vars, {pad_l + e + pad_r: c for e, c in self._terms.items()})

    def restrict(self, variables: Sequence[int]) -> "Polynomial":
        """Drop to the listed variables; fails if others appear."""
        variables = list(variables)
        others = [v for v in range(self.num_vars) if v not in variables]
        out = {}
        for e, c in self._terms.items():
            if any(e[v] for v in others):
                raise ValueError("polynomial depends on variables outside the restriction")
            out[tuple(e[v] for v in variables)] = c
        return Polynomial(len(variables), out)

    def substitute_prefix(self, values: Sequence[float]) -> "Polynomial":
        """Fix the first ``len(values)`` variables, returning a polynomial in the rest."""
        k = len(values)
        out: dict = {}
        for e, c in self._terms.items():
            scale = c
            for v in range(k):
                if e[v]:
                    scale *= values[v] ** e[v]
            key = e[k:]
            out[key] = out.get(key, 0.0) + scale
        return Polynomial(self.num_vars - k, out)

    # serialization ----------------------------------------------------------

    def to_json(self) -> list:
        return [{"exps": list(e), "coef": c} for e, c in sorted(self._terms.items(), key=lambda t: monomial_index(t[0]))]

    @classmethod
    def from_json(cls, data: list, num_vars: int | None = None) -> "Polynomial":
        if num_vars is None:
            if not data:
                raise ValueError("cannot infer num_vars from an empty term list")
            num_vars = len(data[0]["exps"])
        return cls(num_vars, {tuple(t["exps"]): t["coef"] for t in data})


PolynomialVector = tuple  # tuple[Polynomial, ...] sharing num_vars


def poly_mul(p: Polynomial, q: Polynomial) -> Polynomial:
    if p.num_vars != q.num_vars:
        raise ValueError(f"num_vars mismatch: {p.num_vars} vs {q.num_vars}")
    out: dict = {}
    for (ea, ca), (eb, cb) in itertools.product(p.items(), q.items()):
        e = tuple(a + b for a, b in zip(ea, eb))
        out[e] = out.get(e, 0.0) + ca * cb
    return Polynomial(p.num_vars, out)


def poly_diff(p: Polynomial, var: int) -> Polynomial:
    if not 0 <= var < p.num_vars:
        raise ValueError(f"variable {var} out of range for {p.num_vars} variables")
    out = {}
    for e, c in p.items():
        if e[var]:
            ne = list(e)
            ne[var] -= 1
            out[tuple(ne)] = c * e[var]
    return Polynomial(p.num_vars, out)


def gradient(p: Polynomial, variables: Iterable[int] | None = None) -> list[Polynomial]:
    variables = range(p.num_vars) if variables is None else variables
    return [poly_diff(p, v) for v in variables]


def koopman_apply(phi: Polynomial, f: Sequence[Polynomial]) -> Polynomial:
    """Lie derivative ``grad(phi) . f`` of a state test function along ``f``.

    ``f`` has one component per state variable, each over the joint
    ``(x, u)`` variables.  ``phi`` may be given over the joint variables (and
    must then not depend on inputs) or over the states alone, in which case it
    is embedded first.
    """
    if not f:
        raise ValueError("empty dynamics")
    nx = len(f)
    nz = f[0].num_vars
    if any(fi.num_vars != nz for fi in f):
        raise ValueError("dynamics components disagree on num_vars")
    if nz < nx:
        raise ValueError(f"dynamics over {nz} variables cannot drive {nx} states")
    if phi.num_vars == nx and nz != nx:
        phi = phi.embed(nz)
    elif phi.num_vars != nz:
        raise ValueError(f"phi has {phi.num_vars} variables; expected {nx} or {nz}")
    if phi.degree_in(range(nx, nz)) > 0:
        raise ValueError("test function depends on input variables")
    out = Polynomial(nz)
    for i, fi in enumerate(f):
        d = poly_diff(phi, i)
        if not d.is_zero():
            out = out + d * fi
    return out


def polyvec_from_json(data: list, num_vars: int) -> PolynomialVector:
    return tuple(Polynomial.from_json(c, num_vars) for c in data)
