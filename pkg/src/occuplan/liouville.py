"""Weak Liouville constraints linking occupation and boundary measures."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .moments import SemialgebraicSet
from .polyalg import Polynomial, koopman_apply, monomial_basis


@dataclass(frozen=True)
class Mode:
    """One discrete mode: state/input sets, dynamics and stage cost.

    ``f`` and ``c`` are over the joint variables ``(x..., u...)``.  ``dwell``
    optionally bounds the time spent in the mode per unit of flow through it.
    """

    state_dim: int
    input_dim: int
    X: SemialgebraicSet
    U: SemialgebraicSet
    f: tuple
    c: Polynomial
    dwell: tuple | None = None

    def __post_init__(self):
        nz = self.state_dim + self.input_dim
        object.__setattr__(self, "f", tuple(self.f))
        if len(self.f) != self.state_dim:
            raise ValueError(f"dynamics has {len(self.f)} components, expected {self.state_dim}")
        if any(fi.num_vars != nz for fi in self.f) or self.c.num_vars != nz:
            raise ValueError("dynamics and cost must be over the joint (x, u) variables")
        if self.X.num_vars != self.state_dim or self.U.num_vars != self.input_dim:
            raise ValueError("state/input set dimensions do not match the mode")

    @property
    def num_vars(self) -> int:
        return self.state_dim + self.input_dim

    @property
    def XU(self) -> SemialgebraicSet:
        return self.X.product(self.U)

    def is_affine(self) -> bool:
        return all(fi.degree() <= 1 for fi in self.f)


@dataclass(frozen=True)
class LinearMomentConstraint:
    """``sum_k <coefs_k, moments of measure_k> (sense) rhs``.

    Each term is ``(measure_id, indices, coefs)``; ``sense`` is one of
    ``"eq"``, ``"ge"``, ``"le"``.
    """

    terms: tuple
    rhs: float = 0.0
    sense: str = "eq"

    def __post_init__(self):
        if not self.terms:
            raise ValueError("constraint has no terms")
        if self.sense not in ("eq", "ge", "le"):
            raise ValueError(f"unknown sense {self.sense!r}")
        for _, idx, coef in self.terms:
            if len(idx) != len(coef) or not np.all(np.isfinite(coef)):
                raise ValueError("malformed constraint term")

    def residual(self, values: dict) -> float:
        """``lhs - rhs`` given a map ``measure_id -> moment array``."""
        lhs = sum(float(np.dot(coef, values[mid][np.asarray(idx, dtype=int)])) for mid, idx, coef in self.terms)
        return lhs - self.rhs

    def relabel(self, mapping: dict) -> "LinearMomentConstraint":
        terms = tuple((mapping.get(mid, mid), idx, coef) for mid, idx, coef in self.terms)
        return LinearMomentConstraint(terms, self.rhs, self.sense)


def admissible_test_functions(mode: Mode, d: int) -> list[tuple[int, tuple, Polynomial]]:
    """Admissible state test monomials as ``(moment index, exponents, L phi)``.

    Keeps every phi with deg(phi) <= 2d and deg(L phi) <= 2d.  The index is
    the position in the state-space graded-lex basis.
    """
    out = []
    nz = mode.num_vars
    for pos, m in enumerate(monomial_basis(mode.state_dim, 2 * d)):
        phi = Polynomial(nz, {m + (0,) * mode.input_dim: 1.0})
        lphi = koopman_apply(phi, mode.f)
        if lphi.degree() <= 2 * d:
            out.append((pos, m, lphi))
    return out


def liouville_rows(mode: Mode, d: int, ids: Sequence[Hashable]) -> list[LinearMomentConstraint]:
    """One row ``<L phi, mu> - <phi, mu_T> + <phi, mu_0> = 0`` per test monomial.

    ``ids`` is ``(mu, mu0, muT)``; ``mu`` carries joint moments, the boundary
    measures carry state moments.
    """
    mu, mu0, muT = ids
    rows = []
    for pos, _, lphi in admissible_test_functions(mode, d):
        idx, coef = lphi.sparse_indices()
        terms = []
        if idx.size:
            terms.append((mu, tuple(int(i) for i in idx), tuple(float(c) for c in coef)))
        terms.append((muT, (pos,), (-1.0,)))
        terms.append((mu0, (pos,), (1.0,)))
        rows.append(LinearMomentConstraint(tuple(terms), 0.0, "eq"))
    return rows


def horizon_bounds(mu_id, T_min: float = 0.0, T_max: float = np.inf, per_unit_of=None) -> list[LinearMomentConstraint]:
    """``T_min <= mass(mu) <= T_max``.

    ``mu_id`` may be a list of ids, bounding the summed mass.  With
    ``per_unit_of`` (a measure id) the bounds scale with that measure's mass,
    i.e. ``T_min * mass(nu) <= mass(mu) <= T_max * mass(nu)``.
    """
    if T_min < 0 or T_min > T_max:
        raise ValueError(f"invalid horizon bounds [{T_min}, {T_max}]")
    ids = list(mu_id) if isinstance(mu_id, list) else [mu_id]
    base = tuple((i, (0,), (1.0,)) for i in ids)

    def row(bound, sense):
        if per_unit_of is None:
            return LinearMomentConstraint(base, float(bound), sense)
        return LinearMomentConstraint(base + ((per_unit_of, (0,), (-float(bound),)),), 0.0, sense)

    if T_min == T_max:
        return [row(T_min, "eq")]
    out = []
    if T_min > 0:
        out.append(row(T_min, "ge"))
    if np.isfinite(T_max):
        out.append(row(T_max, "le"))
    return out
