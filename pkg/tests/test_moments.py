import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occuplan.moments import (
    MomentVector, SemialgebraicSet, dirac_moments, empirical_moments, is_psd, localizing_layout, moment_matrix_layout,
)
from occuplan.polyalg import Polynomial, monomial_index

seed = st.integers(0, 2**32 - 1)


def test_hankel_one_var():
    lay = moment_matrix_layout(1, 2)
    assert lay.entry_index.tolist() == [[0, 1, 2], [1, 2, 3], [2, 3, 4]]


def test_mass_only_layout():
    assert moment_matrix_layout(2, 0).entry_index.tolist() == [[0]]


def test_cross_entry_two_vars():
    lay = moment_matrix_layout(2, 1)
    assert lay.entry_index.shape == (3, 3)
    # rows are 1, x1, x2
    assert lay.entry_index[1, 2] == monomial_index((1, 1))


def test_localizing_one_minus_x_squared():
    x = Polynomial.variable(0, 1)
    mu = MomentVector(1, 2, [1.0, 0.3, 0.2])
    m = mu.localizing_matrix(1 - x * x, 1)
    assert m.shape == (1, 1)
    assert m[0, 0] == pytest.approx(1.0 - 0.2)


def test_localizing_linear():
    x = Polynomial.variable(0, 1)
    lay = localizing_layout(x, 1, 1)
    assert lay.size == 1
    assert lay.apply(np.array([1.0, 0.7, 0.4]))[0, 0] == pytest.approx(0.7)


def test_localizing_disc_entry():
    x1, x2 = Polynomial.variable(0, 2), Polynomial.variable(1, 2)
    g = 4 - x1 * x1 - x2 * x2
    lay = localizing_layout(g, 2, 2)
    assert lay.size == 3
    vals = np.random.default_rng(0).normal(size=15)
    ent = lay.apply(vals)[1, 1]
    # row x1, column x1: 4 mu[x1^2] - mu[x1^4] - mu[x1^2 x2^2]
    want = 4 * vals[monomial_index((2, 0))] - vals[monomial_index((4, 0))] - vals[monomial_index((2, 2))]
    assert ent == pytest.approx(want)
    ent00 = lay.apply(vals)[0, 0]
    assert ent00 == pytest.approx(4 * vals[0] - vals[monomial_index((2, 0))] - vals[monomial_index((0, 2))])


def test_localizing_degree_too_high():
    x = Polynomial.variable(0, 1)
    with pytest.raises(ValueError):
        localizing_layout(x ** 3, 1, 1)


def test_dirac_at_origin():
    v = dirac_moments([0.0, 0.0], 4).values
    assert v[0] == 1.0 and np.all(v[1:] == 0.0)


def test_dirac_powers_and_rank_one():
    mu = dirac_moments([2.0], 4)
    assert mu.values.tolist() == [1, 2, 4, 8, 16]
    M = mu.moment_matrix(2)
    assert M.tolist() == [[1, 2, 4], [2, 4, 8], [4, 8, 16]]
    lam = np.linalg.eigvalsh(M)
    assert lam[-2] <= 1e-9 * np.trace(M)
    assert is_psd(M)


def test_empirical_single_sample_is_dirac():
    p = [0.3, -1.2]
    assert np.allclose(empirical_moments([p], [1.0], 4).values, dirac_moments(p, 4).values)


def test_empirical_symmetric_pair():
    mu = empirical_moments([[1.0], [-1.0]], [1.0, 1.0], 2)
    assert mu.values.tolist() == [2.0, 0.0, 2.0]


def test_empirical_uniform_unit_interval():
    pts = np.random.default_rng(3).uniform(0, 1, (1000, 1))
    mu = empirical_moments(pts, np.full(1000, 1e-3), 4)
    assert np.max(np.abs(mu.values - [1, 1 / 2, 1 / 3, 1 / 4, 1 / 5])) <= 0.05


def test_empirical_length_mismatch():
    with pytest.raises(ValueError):
        empirical_moments([[0.0], [1.0]], [1.0], 2)


def test_empirical_negative_weight():
    with pytest.raises(ValueError):
        empirical_moments([[0.0]], [-1.0], 2)


def test_box_set_membership_and_bounds():
    s = SemialgebraicSet.box([-1, 0], [1, 2], ball_radius=3)
    assert s.has_ball()
    lo, hi = s.box_bounds()
    assert lo.tolist() == [-1, 0] and hi.tolist() == [1, 2]
    assert s.contains(np.array([[0, 1], [2, 1]])).tolist() == [True, False]


def test_json_null_bounds_are_infinite():
    s = SemialgebraicSet.from_json({"box": {"lower": [None, 0], "upper": [1, None]}}, 2)
    lo, hi = s.box_bounds()
    assert lo[0] == -np.inf and hi[1] == np.inf


@settings(max_examples=40, deadline=None)
@given(seed=seed, n=st.integers(1, 3), d=st.integers(1, 2))
def test_empirical_matrices_psd(seed, n, d):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-2, 0, n)
    hi = lo + rng.uniform(0.5, 2, n)
    s = SemialgebraicSet.box(lo, hi, ball_radius=float(np.linalg.norm(np.maximum(abs(lo), abs(hi)))) + 0.1)
    k = int(rng.integers(1, 30))
    pts = rng.uniform(lo, hi, (k, n))
    mu = empirical_moments(pts, rng.uniform(0, 1, k), 2 * d)
    assert np.linalg.eigvalsh(mu.moment_matrix(d)).min() >= -1e-9
    for g in s.inequalities:
        assert np.linalg.eigvalsh(mu.localizing_matrix(g, d)).min() >= -1e-9


@settings(max_examples=40, deadline=None)
@given(seed=seed, a=st.floats(-2, 2), b=st.floats(-2, 2))
def test_localizing_linearity(seed, a, b):
    rng = np.random.default_rng(seed)
    x1, x2 = Polynomial.variable(0, 2), Polynomial.variable(1, 2)
    g = rng.normal() + rng.normal() * x1 + rng.normal() * x2 * x2
    lay = localizing_layout(g, 2, 2)
    mu, nu = rng.normal(size=15), rng.normal(size=15)
    assert np.allclose(lay.apply(a * mu + b * nu), a * lay.apply(mu) + b * lay.apply(nu), atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(seed=seed, n=st.integers(1, 3))
def test_dirac_rank_one(seed, n):
    p = np.random.default_rng(seed).uniform(-1.5, 1.5, n)
    M = dirac_moments(p, 4).moment_matrix(2)
    lam = np.linalg.eigvalsh(M)
    assert lam[-2] <= 1e-9 * np.trace(M)


@settings(max_examples=30, deadline=None)
@given(seed=seed)
def test_integrate_matches_sum(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1, 1, (8, 2))
    w = rng.uniform(0, 1, 8)
    x1, x2 = Polynomial.variable(0, 2), Polynomial.variable(1, 2)
    p = 1.5 * x1 * x2 - x2 ** 3 + 0.25
    assert empirical_moments(pts, w, 3).integrate(p) == pytest.approx(float(w @ p.evaluate(pts)), abs=1e-10)
