"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``OCCUPLAN_NUMBA=0`` in the environment to force the numpy path.  Both
implementations are always importable as :data:`numpy_impl` and
:data:`numba_impl` (the latter is ``None`` when numba is missing) so tests and
the benchmark can compare them directly.
"""
from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _binom_table(n_max: int) -> np.ndarray:
    t = np.zeros((n_max + 1, n_max + 1), dtype=np.int64)
    for n in range(n_max + 1):
        t[n, 0] = 1
        for k in range(1, n + 1):
            t[n, k] = t[n - 1, k - 1] + t[n - 1, k]
    return t


# large enough for 16 variables at degree 16
BINOM = _binom_table(40)


# --------------------------------------------------------------------------
# numpy implementations


def _glex_rank_np(exps: np.ndarray) -> np.ndarray:
    exps = np.asarray(exps, dtype=np.int64)
    m, n = exps.shape
    deg = exps.sum(axis=1)
    # monomials of degree < k in n variables: C(n + k - 1, n)
    rank = np.where(deg > 0, BINOM[n + deg - 1, n], 0)
    rem = deg.copy()
    for v in range(n - 1):
        a = exps[:, v]
        # lex-descending inside a grade: larger leading exponent comes first
        # count = sum_{e=a+1}^{rem} C(rem - e + n - v - 2, n - v - 2)
        #       = C(rem - a - 1 + n - v - 1, n - v - 1)
        k = n - v - 1
        top = rem - a - 1 + k
        rank = rank + np.where(rem - a > 0, BINOM[np.maximum(top, 0), k], 0)
        rem = rem - a
    return rank


def _monomial_eval_np(points: np.ndarray, exps: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    exps = np.asarray(exps, dtype=np.int64)
    out = np.ones((points.shape[0], exps.shape[0]))
    for v in range(exps.shape[1]):
        col = exps[:, v]
        if not col.any():
            continue
        powers = points[:, v : v + 1] ** np.arange(col.max() + 1)
        out *= powers[:, col]
    return out


def _weighted_moments_np(points, weights, exps):
    return np.asarray(weights, dtype=np.float64) @ _monomial_eval_np(points, exps)


numpy_impl = SimpleNamespace(
    glex_rank=_glex_rank_np,
    monomial_eval=_monomial_eval_np,
    weighted_moments=_weighted_moments_np,
)


# --------------------------------------------------------------------------
# numba implementations

numba_impl = None

if numba is not None:

    @numba.njit(cache=True)
    def _glex_rank_nb(exps, binom):
        m, n = exps.shape
        out = np.empty(m, dtype=np.int64)
        for r in range(m):
            deg = 0
            for v in range(n):
                deg += exps[r, v]
            rank = 0
            if deg > 0:
                rank = binom[n + deg - 1, n]
            rem = deg
            for v in range(n - 1):
                a = exps[r, v]
                k = n - v - 1
                if rem - a > 0:
                    rank += binom[rem - a - 1 + k, k]
                rem -= a
            out[r] = rank
        return out

    @numba.njit(cache=True)
    def _monomial_eval_nb(points, exps):
        npts, n = points.shape
        nm = exps.shape[0]
        out = np.empty((npts, nm))
        for p in range(npts):
            for j in range(nm):
                acc = 1.0
                for v in range(n):
                    e = exps[j, v]
                    x = points[p, v]
                    for _ in range(e):
                        acc *= x
                out[p, j] = acc
        return out

    @numba.njit(cache=True)
    def _weighted_moments_nb(points, weights, exps):
        npts, n = points.shape
        nm = exps.shape[0]
        out = np.zeros(nm)
        for p in range(npts):
            w = weights[p]
            for j in range(nm):
                acc = w
                for v in range(n):
                    e = exps[j, v]
                    x = points[p, v]
                    for _ in range(e):
                        acc *= x
                out[j] += acc
        return out

    def _glex_rank_nb_wrap(exps):
        return _glex_rank_nb(np.ascontiguousarray(exps, dtype=np.int64), BINOM)

    def _monomial_eval_nb_wrap(points, exps):
        return _monomial_eval_nb(
            np.ascontiguousarray(points, dtype=np.float64),
            np.ascontiguousarray(exps, dtype=np.int64),
        )

    def _weighted_moments_nb_wrap(points, weights, exps):
        return _weighted_moments_nb(
            np.ascontiguousarray(points, dtype=np.float64),
            np.ascontiguousarray(weights, dtype=np.float64),
            np.ascontiguousarray(exps, dtype=np.int64),
        )

    numba_impl = SimpleNamespace(
        glex_rank=_glex_rank_nb_wrap,
        monomial_eval=_monomial_eval_nb_wrap,
        weighted_moments=_weighted_moments_nb_wrap,
    )


def use_numba() -> bool:
    return numba_impl is not None and os.environ.get("OCCUPLAN_NUMBA", "1") != "0"


def _impl():
    return numba_impl if use_numba() else numpy_impl


def glex_rank(exps: np.ndarray) -> np.ndarray:
    """Graded-lex rank of each row of an integer exponent matrix."""
    exps = np.atleast_2d(np.asarray(exps, dtype=np.int64))
    if exps.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return _impl().glex_rank(exps)


def monomial_eval(points: np.ndarray, exps: np.ndarray) -> np.ndarray:
    """Matrix ``out[p, j] = prod_v points[p, v] ** exps[j, v]``."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return _impl().monomial_eval(points, np.atleast_2d(exps))


def weighted_moments(points: np.ndarray, weights: np.ndarray, exps: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return _impl().weighted_moments(points, np.asarray(weights, dtype=np.float64), np.atleast_2d(exps))
