"""Uniform 1-D meshes and the nonlocal kernel weights of the fractional p-Laplacian.

Cell values are piecewise constant.  A pair of cells ``(C_i, C_j)`` interacts
through the model integrand

    |u(x) - u(y)|^p  ~  |u_i - u_j|^p * (|x - y| / |x_i - x_j|)^p,

i.e. ``u`` is read as varying linearly between the two cell centres.  The
resulting weight

    w_ij = |x_i - x_j|^{-p} * int_{C_i} int_{C_j} |x - y|^{p - 1 - sp} dx dy

is finite for every ``0 < s < 1`` (the exponent ``p(1-s) - 1`` is above -1),
whereas the raw kernel integral over touching cells diverges once ``sp >= 1``.
The same-cell interaction, invisible to piecewise-constant values, is lumped
half onto each neighbour.  The exterior is tiled by ghost cells carrying the
zero datum, so ``zeta_i`` is the sum of the same pair weights over all ghost
cells; the infinite tail is summed exactly with Hurwitz zeta functions.

On a uniform grid every weight is ``h^{1-sp} * omega(|i-j|)`` with ``omega``
depending only on the integer offset and on ``(s, p)``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

__all__ = [
    "DomainError",
    "Grid1D",
    "DiscreteFunction",
    "KernelWeights",
    "build_grid",
    "offset_weight",
    "tail_weight",
    "cell_pair_weight",
    "exterior_weight",
    "assemble_kernel",
]

# offsets at or above this use the binomial series instead of the second difference
_SERIES_FROM = 8
_SERIES_TERMS = 14


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


@dataclass(frozen=True)
class Grid1D:
    a: float
    b: float
    N: int

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or self.a >= self.b:
            raise DomainError(f"need a < b, got a={self.a}, b={self.b}")
        if int(self.N) != self.N or self.N < 2:
            raise DomainError(f"need an integer N >= 2, got {self.N}")

    @property
    def cell_width(self) -> float:
        return (self.b - self.a) / self.N

    @property
    def cell_measure(self) -> float:
        return self.cell_width

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def cell_centers(self) -> np.ndarray:
        return self.a + (np.arange(self.N) + 0.5) * self.cell_width

    def cell_bounds(self, i: int) -> tuple[float, float]:
        """Endpoints of cell ``i``; negative or ``>= N`` indices give ghost cells."""
        h = self.cell_width
        return self.a + i * h, self.a + (i + 1) * h


def build_grid(a: float, b: float, N: int) -> Grid1D:
    return Grid1D(float(a), float(b), int(N))


@dataclass(frozen=True, eq=False)
class DiscreteFunction:
    """Cell values on a grid; the function is zero outside ``[a, b]``."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.N,):
            raise DomainError(f"expected {self.grid.N} values, got shape {vals.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        g = self.grid
        idx = np.floor((x - g.a) / g.cell_width).astype(int)
        inside = (x >= g.a) & (x <= g.b)
        idx = np.clip(idx, 0, g.N - 1)
        return np.where(inside, self.values[idx], 0.0)

    def __neg__(self):
        return DiscreteFunction(self.grid, -self.values)

    def scaled(self, c: float) -> "DiscreteFunction":
        return DiscreteFunction(self.grid, c * self.values)

    def reflect(self) -> "DiscreteFunction":
        """Mirror image about the midpoint of the domain."""
        return DiscreteFunction(self.grid, self.values[::-1])

    def lp_norm(self, p: float) -> float:
        return float((self.grid.cell_measure * np.sum(np.abs(self.values) ** p)) ** (1.0 / p))

    @classmethod
    def from_callable(cls, grid: Grid1D, fn) -> "DiscreteFunction":
        return cls(grid, np.asarray(fn(grid.cell_centers), dtype=float))


def _check_sp(s: float, p: float) -> None:
    if not 0.0 < s < 1.0:
        raise DomainError(f"need 0 < s < 1, got s={s}")
    if not 1.0 < p < np.inf:
        raise DomainError(f"need 1 < p < inf, got p={p}")


def _second_antiderivative(r, beta):
    # of r -> r^(beta-2), with beta - 1 = p(1-s) > 0
    return r**beta / (beta * (beta - 1.0))


def _series_coefficients(beta: float, terms: int = _SERIES_TERMS) -> np.ndarray:
    """c_j with  k^-p F(k) = sum_j c_j k^(1 - sp - 2j)  for k > 1."""
    c = np.empty(terms)
    prod = 1.0
    for j in range(1, terms + 1):
        if j > 1:
            prod *= (beta - (2 * j - 2)) * (beta - (2 * j - 1))
        c[j - 1] = 2.0 * prod / special.factorial(2 * j)
    return c


def offset_weight(k, s: float, p: float) -> np.ndarray:
    """Dimensionless pair weight ``omega(k)`` for integer offsets ``k >= 1``.

    ``w_ij = h^{1-sp} * omega(|i - j|)``.  ``omega(1)`` includes the lumped
    same-cell interaction.
    """
    _check_sp(s, p)
    k = np.atleast_1d(np.asarray(k, dtype=float))
    if np.any(k < 1) or np.any(k != np.floor(k)):
        raise DomainError("offsets must be integers >= 1")
    beta = p + 1.0 - s * p
    out = np.empty_like(k)
    near = k < _SERIES_FROM
    kn = k[near]
    F = (
        _second_antiderivative(kn + 1.0, beta)
        - 2.0 * _second_antiderivative(kn, beta)
        + _second_antiderivative(kn - 1.0, beta)
    )
    out[near] = kn ** (-p) * F
    kf = k[~near]
    if kf.size:
        c = _series_coefficients(beta)
        powers = 1.0 - s * p - 2.0 * np.arange(1, c.size + 1)
        out[~near] = (c[None, :] * kf[:, None] ** powers[None, :]).sum(axis=1)
    out[k == 1] += _second_antiderivative(1.0, beta)
    return out


def tail_weight(m: int, s: float, p: float) -> float:
    """``sum_{k >= m} omega(k)`` in closed form (finite sum plus Hurwitz zeta tail)."""
    _check_sp(s, p)
    if m < 1:
        raise DomainError("tail must start at offset >= 1")
    start = max(int(m), _SERIES_FROM)
    head = offset_weight(np.arange(m, start), s, p).sum() if start > m else 0.0
    c = _series_coefficients(p + 1.0 - s * p)
    orders = 2.0 * np.arange(1, c.size + 1) - 1.0 + s * p
    tail = float(np.sum(c * special.zeta(orders, start)))
    return float(head + tail)


def cell_pair_weight(grid: Grid1D, i: int, j: int, s: float, p: float) -> float:
    _check_sp(s, p)
    if i == j:
        raise DomainError("cell_pair_weight is undefined on the diagonal")
    for idx in (i, j):
        if not 0 <= idx < grid.N:
            raise DomainError(f"cell index {idx} outside 0..{grid.N - 1}")
    h = grid.cell_width
    return float(h ** (1.0 - s * p) * offset_weight(abs(i - j), s, p)[0])


def exterior_weight(grid: Grid1D, i: int, s: float, p: float) -> float:
    """Total pair weight between cell ``i`` and every ghost cell of the exterior."""
    _check_sp(s, p)
    if not 0 <= i < grid.N:
        raise DomainError(f"cell index {i} outside 0..{grid.N - 1}")
    h = grid.cell_width
    return float(h ** (1.0 - s * p) * (tail_weight(i + 1, s, p) + tail_weight(grid.N - i, s, p)))


@dataclass(frozen=True, eq=False)
class KernelWeights:
    grid: Grid1D
    s: float
    p: float
    interior: np.ndarray
    exterior: np.ndarray
    bbm_constant: float
    bbm_factor: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "bbm_factor", float(self.bbm_constant) * (1.0 - self.s))
        for name in ("interior", "exterior"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def assemble_kernel(
    grid: Grid1D, s: float, p: float, bbm_constant: float, threads: int = 1
) -> KernelWeights:
    """Assemble interior and exterior weights.

    The interior matrix is Toeplitz; each entry is written from the same
    per-offset value, so symmetry is exact and the result does not depend on
    ``threads``.
    """
    _check_sp(s, p)
    if not np.isfinite(bbm_constant) or bbm_constant <= 0:
        raise DomainError(f"bbm_constant must be positive, got {bbm_constant}")
    N = grid.N
    scale = grid.cell_width ** (1.0 - s * p)
    per_offset = np.zeros(N)
    per_offset[1:] = scale * offset_weight(np.arange(1, N), s, p)
    offsets = np.abs(np.subtract.outer(np.arange(N), np.arange(N)))
    interior = per_offset[offsets]

    # tails[m] = sum_{k >= m} omega(k) for m = 1..N
    def tail(m):
        return tail_weight(m, s, p)

    ms = range(1, N + 1)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            tails = np.array(list(pool.map(tail, ms)))
    else:
        tails = np.array([tail(m) for m in ms])
    idx = np.arange(N)
    exterior = scale * (tails[idx] + tails[N - 1 - idx])
    return KernelWeights(grid, float(s), float(p), interior, exterior, float(bbm_constant))
