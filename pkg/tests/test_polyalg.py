import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occuplan.polyalg import (
    Polynomial, basis_size, koopman_apply, monomial_at, monomial_basis, monomial_index, poly_diff, poly_mul,
)

X1, X2, U = (Polynomial.variable(i, 3) for i in range(3))


def random_poly(rng, n, deg, terms=6):
    basis = monomial_basis(n, deg)
    picks = rng.choice(len(basis), size=min(terms, len(basis)), replace=False)
    return Polynomial(n, {basis[k]: rng.normal() for k in picks})


def test_constant_monomial_first():
    assert monomial_index([0, 0]) == 0


def test_grade_one_block():
    assert monomial_index([1, 0], 2) == 1
    assert monomial_index([0, 1], 2) == 2


def test_round_trip_three_vars_degree_four():
    for k in range(basis_size(3, 4)):
        m = monomial_at(k, 3, 4)
        assert monomial_index(m, 3) == k


def test_index_out_of_range():
    with pytest.raises(IndexError):
        monomial_at(basis_size(2, 2), 2, 2)


def test_negative_exponent_rejected():
    with pytest.raises(ValueError):
        monomial_index([1, -1])


@pytest.mark.parametrize("n,D", [(n, D) for n in range(1, 5) for D in range(0, 7)])
def test_graded_lex_bijection(n, D):
    basis = monomial_basis(n, D)
    assert len(basis) == basis_size(n, D) == len(set(basis))
    assert [monomial_index(m) for m in basis] == list(range(len(basis)))
    # graded: degrees never decrease along the basis
    degs = [sum(m) for m in basis]
    assert degs == sorted(degs)
    expected = {m for m in itertools.product(range(D + 1), repeat=n) if sum(m) <= D}
    assert set(basis) == expected


def test_mul_difference_of_squares():
    x = Polynomial.variable(0, 1)
    assert poly_mul(x + 1, x - 1) == x * x - 1


def test_mul_by_zero():
    p = Polynomial.variable(0, 2) + 3.0
    assert poly_mul(p, Polynomial(2)).is_zero()


def test_mul_mismatched_vars():
    with pytest.raises(ValueError):
        poly_mul(Polynomial.variable(0, 1), Polynomial.variable(0, 2))


def test_mul_pointwise_oracle():
    rng = np.random.default_rng(1)
    p, q = random_poly(rng, 3, 3), random_poly(rng, 3, 3)
    pts = rng.uniform(-1, 1, (10, 3))
    assert np.max(np.abs(poly_mul(p, q).evaluate(pts) - p.evaluate(pts) * q.evaluate(pts))) <= 1e-9


def test_diff_examples():
    x1, x2 = Polynomial.variable(0, 2), Polynomial.variable(1, 2)
    assert poly_diff(x1 * x1 * x2, 0) == 2 * x1 * x2
    assert poly_diff(x1, 1).is_zero()


def test_diff_finite_difference_oracle():
    rng = np.random.default_rng(2)
    p = random_poly(rng, 3, 4, terms=10)
    pts = rng.uniform(-1, 1, (10, 3))
    h = 1e-5
    for var in range(3):
        e = np.zeros(3)
        e[var] = h
        fd = (p.evaluate(pts + e) - p.evaluate(pts - e)) / (2 * h)
        assert np.max(np.abs(poly_diff(p, var).evaluate(pts) - fd)) <= 1e-6


def test_koopman_double_integrator():
    f = (X2, U)
    assert koopman_apply(X1, f) == X2
    assert koopman_apply(X1 * X1, f) == 2 * X1 * X2
    assert koopman_apply(X1 * X2, f) == X2 * X2 + X1 * U


def test_koopman_state_only_phi_is_embedded():
    phi = Polynomial.variable(0, 2) * Polynomial.variable(1, 2)
    assert koopman_apply(phi, (X2, U)) == X2 * X2 + X1 * U


def test_koopman_rejects_input_dependence():
    with pytest.raises(ValueError):
        koopman_apply(U, (X2, U))


def test_koopman_dimension_mismatch():
    with pytest.raises(ValueError):
        koopman_apply(Polynomial.variable(0, 4), (X2, U))


coef = st.floats(-3, 3, allow_nan=False)
seed = st.integers(0, 2**32 - 1)


@settings(max_examples=50, deadline=None)
@given(seed=seed, deg=st.integers(0, 3))
def test_koopman_degree_bound(seed, deg):
    rng = np.random.default_rng(seed)
    phi = random_poly(rng, 2, deg).embed(3)
    f = (random_poly(rng, 3, 2), random_poly(rng, 3, 2))
    out = koopman_apply(phi, f)
    assert out.degree() <= max(phi.degree() - 1, 0) + 2


@settings(max_examples=50, deadline=None)
@given(seed=seed)
def test_koopman_matches_chain_rule(seed):
    rng = np.random.default_rng(seed)
    phi = random_poly(rng, 2, 3).embed(3)
    f = (random_poly(rng, 3, 2), random_poly(rng, 3, 2))
    z = rng.uniform(-1, 1, (5, 3))
    grad = np.column_stack([poly_diff(phi, i).evaluate(z) for i in range(2)])
    fz = np.column_stack([fi.evaluate(z) for fi in f])
    assert np.allclose(koopman_apply(phi, f).evaluate(z), np.sum(grad * fz, axis=1), atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(seed=seed, a=coef, b=coef)
def test_ring_axioms(seed, a, b):
    rng = np.random.default_rng(seed)
    p, q, r = (random_poly(rng, 2, 2) for _ in range(3))
    z = rng.uniform(-1, 1, (6, 2))
    lhs = poly_mul(p, q + r).evaluate(z)
    rhs = (poly_mul(p, q) + poly_mul(p, r)).evaluate(z)
    assert np.allclose(lhs, rhs, atol=1e-9)
    assert np.allclose((a * p + b * q).evaluate(z), a * p.evaluate(z) + b * q.evaluate(z), atol=1e-9)
    assert poly_mul(p, q) == poly_mul(q, p) or np.allclose(poly_mul(p, q).evaluate(z), poly_mul(q, p).evaluate(z))


@settings(max_examples=30, deadline=None)
@given(seed=seed)
def test_dense_round_trip(seed):
    rng = np.random.default_rng(seed)
    p = random_poly(rng, 3, 3)
    assert Polynomial.from_dense(p.to_dense(3), 3) == p


@settings(max_examples=30, deadline=None)
@given(seed=seed)
def test_json_round_trip(seed):
    rng = np.random.default_rng(seed)
    p = random_poly(rng, 2, 4)
    assert Polynomial.from_json(p.to_json(), 2) == p
