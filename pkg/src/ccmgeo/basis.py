"""Shifted Chebyshev machinery on [0,1]: CGL nodes, Clenshaw-Curtis weights,
and basis/derivative tables.

All curves are parametrized as gamma_i(s) = sum_j c_ij T*_j(s) with
T*_j(s) = T_j(2s-1) the Chebyshev polynomials of the first kind shifted to
the unit interval. Collocation happens at the Chebyshev-Gauss-Lobatto nodes
s_k = (1 - cos(k pi / N)) / 2 and integrals use the matching Clenshaw-Curtis
weights, which integrate polynomials of degree <= N exactly.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "ChebyshevGrid",
    "BasisTable",
    "cgl_nodes",
    "ccq_weights",
    "chebyshev_grid",
    "basis_table",
    "eval_curve",
]


def cgl_nodes(N):
    """Chebyshev-Gauss-Lobatto nodes on [0,1], ascending: s_0=0, s_N=1."""
    if N < 1:
        raise ValueError("node index N must be >= 1 (got %r)" % (N,))
    k = np.arange(N + 1)
    return (1.0 - np.cos(k * np.pi / N)) / 2.0


def ccq_weights(N):
    """Clenshaw-Curtis quadrature weights for the CGL nodes on [0,1].

    Classical cosine-sum formula on [-1,1], halved for the unit interval.
    Exact for polynomials of degree <= N; O(N^2) assembly is negligible at
    the small N used here.
    """
    if N < 1:
        raise ValueError("node index N must be >= 1 (got %r)" % (N,))
    w = np.zeros(N + 1)
    for k in range(N + 1):
        ck = 1.0 if k in (0, N) else 2.0
        acc = 1.0
        for j in range(1, N // 2 + 1):
            bj = 1.0 if 2 * j == N else 2.0
            acc -= bj / (4.0 * j * j - 1.0) * np.cos(2.0 * j * k * np.pi / N)
        w[k] = ck / N * acc
    return w / 2.0


@dataclass(frozen=True)
class ChebyshevGrid:
    """CGL nodes and CC weights for a given node index N (N+1 points)."""

    N: int
    nodes: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class BasisTable:
    """T*_j(s_k) and dT*_j/ds(s_k) tables, shape (N+1, D+1)."""

    D: int
    values: np.ndarray
    derivs: np.ndarray


def _basis_arrays(D, s):
    """Three-term recurrence for T*_j and its s-derivative at points s."""
    s = np.asarray(s, dtype=float)
    m = len(s)
    V = np.zeros((m, D + 1))
    Vd = np.zeros((m, D + 1))
    V[:, 0] = 1.0
    if D >= 1:
        u = 2.0 * s - 1.0
        V[:, 1] = u
        Vd[:, 1] = 2.0
        for j in range(1, D):
            V[:, j + 1] = 2.0 * u * V[:, j] - V[:, j - 1]
            Vd[:, j + 1] = 4.0 * V[:, j] + 2.0 * u * Vd[:, j] - Vd[:, j - 1]
    return V, Vd


@lru_cache(maxsize=256)
def _cached_grid(N):
    nodes = cgl_nodes(N)
    weights = ccq_weights(N)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return ChebyshevGrid(N=N, nodes=nodes, weights=weights)


@lru_cache(maxsize=256)
def _cached_table(D, N):
    V, Vd = _basis_arrays(D, _cached_grid(N).nodes)
    V.setflags(write=False)
    Vd.setflags(write=False)
    return BasisTable(D=D, values=V, derivs=Vd)


def chebyshev_grid(N):
    """Grid for node index N, cached: the hot loop only does table lookups."""
    return _cached_grid(int(N))


def basis_table(D, grid):
    """Basis/derivative table for degree D on `grid` (a ChebyshevGrid or an
    array of points). Cached for grids made by chebyshev_grid."""
    if isinstance(grid, ChebyshevGrid):
        return _cached_table(int(D), grid.N)
    V, Vd = _basis_arrays(int(D), np.asarray(grid, dtype=float))
    return BasisTable(D=int(D), values=V, derivs=Vd)


def eval_curve(c, grid, table):
    """Evaluate the curve and its derivative at all grid nodes.

    c is the flat coefficient vector (length n*(D+1), state-major) or the
    (n, D+1) coefficient array. Returns (gamma, gamma_s), each (N+1, n).
    """
    c = np.asarray(c, dtype=float)
    Dp1 = table.D + 1
    if c.ndim == 1:
        if c.size % Dp1 != 0:
            raise ValueError(
                "coefficient vector length %d is not a multiple of D+1=%d"
                % (c.size, Dp1))
        C = c.reshape(-1, Dp1)
    else:
        if c.shape[1] != Dp1:
            raise ValueError(
                "coefficient array has %d columns, expected D+1=%d"
                % (c.shape[1], Dp1))
        C = c
    return table.values @ C.T, table.derivs @ C.T
