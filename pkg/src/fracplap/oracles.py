"""Independent reference computations used by ``--verify`` and the tests.

Nothing here calls the closed forms in :mod:`fracplap.grid`; the weights are
rebuilt from their defining integrals by numerical quadrature.
"""
from __future__ import annotations

import math

import mpmath
import numpy as np
from scipy import integrate, linalg

from .eigen import WeightFunction
from .energy import Operator, stiffness_matrix
from .grid import DiscreteFunction, Grid1D

__all__ = [
    "quad_offset_weight",
    "quad_pair_weight_2d",
    "quad_tail_weights",
    "quad_kernel",
    "dense_first_eigenvalue",
    "direct_dirichlet_p2",
    "p_laplacian_first_eigenvalue",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(40)
_DIRECT_TERMS = 100_000


def _alpha(s: float, p: float) -> float:
    return p - 1.0 - s * p


def quad_offset_weight(k: int, s: float, p: float) -> float:
    """omega(k) on unit cells by adaptive quadrature of the triangle-reduced integral.

    int_{C_0} int_{C_k} |x - y|^a dx dy = int_{k-1}^{k+1} (1 - |r - k|) r^a dr,
    plus half the same-cell integral for k = 1.
    """
    a = _alpha(s, p)
    if k == 1:
        left, _ = integrate.quad(lambda r: 1.0, 0.0, 1.0, weight="alg", wvar=(a + 1.0, 0.0), epsabs=0, epsrel=1e-13)
        self_half, _ = integrate.quad(lambda z: 1.0 - z, 0.0, 1.0, weight="alg", wvar=(a, 0.0), epsabs=0, epsrel=1e-13)
    else:
        left, _ = integrate.quad(lambda r: (r - k + 1.0) * r**a, k - 1.0, k, epsabs=0, epsrel=1e-13)
        self_half = 0.0
    right, _ = integrate.quad(lambda r: (k + 1.0 - r) * r**a, k, k + 1.0, epsabs=0, epsrel=1e-13)
    return (left + right) / k**p + self_half


def quad_pair_weight_2d(grid: Grid1D, i: int, j: int, s: float, p: float) -> float:
    """Nested 2-D quadrature over C_i x C_j (non-adjacent cells only)."""
    if abs(i - j) < 2:
        raise ValueError("2-D spot checks need |i - j| >= 2")
    a = _alpha(s, p)
    h = grid.cell_width
    xi, xj = grid.cell_bounds(i), grid.cell_bounds(j)
    val, _ = integrate.dblquad(lambda y, x: abs(x - y) ** a, xi[0], xi[1], xj[0], xj[1], epsabs=0, epsrel=1e-13)
    return val / (abs(i - j) * h) ** p


def _gl_offset_weights(k: np.ndarray, s: float, p: float) -> np.ndarray:
    """Gauss-Legendre on both halves of the triangle; accurate for k >= 2."""
    a = _alpha(s, p)
    z = 0.5 * (_GL_NODES + 1.0)  # nodes on [0, 1]
    wz = 0.5 * _GL_WEIGHTS
    kk = k[:, None]
    tri = (1.0 - z)[None, :]
    inner = (tri * ((kk + z) ** a + (kk - z) ** a)) @ wz
    return inner / k**p


def quad_tail_weights(N: int, s: float, p: float) -> np.ndarray:
    """T(m) = sum_{k >= m} omega(k) for m = 1..N.

    Direct summation of quadrature values up to 1e5 offsets; the remainder uses
    the two-term expansion omega(k) ~ k^(-1-sp) (1 + a(a-1)/12 k^-2), summed
    with mpmath's Hurwitz zeta.
    """
    a = _alpha(s, p)
    head = np.array([quad_offset_weight(k, s, p) for k in range(1, 8)])
    bulk = _gl_offset_weights(np.arange(8, _DIRECT_TERMS + 1, dtype=float), s, p)
    terms = np.concatenate([head, bulk])
    c2 = a * (a - 1.0) / 12.0
    start = _DIRECT_TERMS + 1
    with mpmath.workdps(30):
        rest = float(mpmath.zeta(1 + s * p, start) + c2 * mpmath.zeta(3 + s * p, start))
    acc = math.fsum(terms[N:]) + rest
    out = np.empty(N)
    for m in range(N, 0, -1):
        acc += terms[m - 1]
        out[m - 1] = acc
    return out


def quad_kernel(grid: Grid1D, s: float, p: float) -> tuple[np.ndarray, np.ndarray]:
    """(interior, exterior) rebuilt from quadrature."""
    N = grid.N
    scale = grid.cell_width ** (1.0 - s * p)
    per = np.zeros(N)
    per[1:] = [quad_offset_weight(k, s, p) for k in range(1, N)]
    interior = scale * per[np.abs(np.subtract.outer(np.arange(N), np.arange(N)))]
    tails = quad_tail_weights(N, s, p)
    idx = np.arange(N)
    exterior = scale * (tails[idx] + tails[N - 1 - idx])
    return interior, exterior


def dense_first_eigenvalue(w: Operator, h: WeightFunction) -> float:
    """Smallest generalized eigenvalue of (bbm * L, cell * diag h) at p = 2."""
    A = w.bbm_factor * stiffness_matrix(w)
    B = np.diag(w.grid.cell_measure * np.asarray(h.values.values, dtype=float))
    return float(linalg.eigh(A, B, eigvals_only=True, subset_by_index=[0, 0])[0])


def direct_dirichlet_p2(w: Operator, rhs: DiscreteFunction) -> np.ndarray:
    """Solution of the p = 2 Euler-Lagrange system by a dense linear solve."""
    A = w.bbm_factor * stiffness_matrix(w)
    return linalg.solve(A, w.grid.cell_measure * np.asarray(rhs.values, dtype=float), assume_a="pos")


def p_laplacian_first_eigenvalue(p: float, length: float = 1.0) -> float:
    """(p-1) (pi_p / L)^p for the 1-D local p-Laplacian, pi_p = 2 pi / (p sin(pi/p))."""
    pi_p = 2.0 * math.pi / (p * math.sin(math.pi / p))
    return (p - 1.0) * (pi_p / length) ** p
