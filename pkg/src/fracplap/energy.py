"""Gagliardo energy, its derivatives, the local p-energy and the BBM constant.

Everything here works on raw cell-value arrays internally; the public
functions accept :class:`DiscreteFunction` objects.  An *operator* is either a
:class:`~fracplap.grid.KernelWeights` (``0 < s < 1``) or a
:class:`LocalOperator` (``s = 1``); both expose ``grid``, ``s``, ``p`` and
``bbm_factor`` so that downstream solvers treat ``s in (0, 1]`` uniformly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .grid import DiscreteFunction, DomainError, Grid1D, KernelWeights, assemble_kernel

__all__ = [
    "LocalOperator",
    "Operator",
    "SobolevExponents",
    "EnergyReport",
    "BBMEstimate",
    "BBMDiagnosticError",
    "psi",
    "psi_derivative",
    "make_operator",
    "seminorm",
    "seminorm_gradient",
    "seminorm_increment",
    "seminorm_hessian",
    "stiffness_matrix",
    "gagliardo_energy",
    "energy_gradient",
    "local_energy",
    "estimate_bbm_constant",
    "default_bbm_probes",
    "sobolev_exponents",
]


@dataclass(frozen=True)
class LocalOperator:
    """The ``s = 1`` case: first-order interface differences against a zero exterior."""

    grid: Grid1D
    p: float
    s: float = 1.0
    bbm_factor: float = 1.0

    def __post_init__(self):
        if not 1.0 < self.p < np.inf:
            raise DomainError(f"need 1 < p < inf, got p={self.p}")


Operator = Union[KernelWeights, LocalOperator]


def psi(t, p: float):
    """|t|^(p-2) t, with psi(0) = 0 for every p > 1."""
    t = np.asarray(t, dtype=float)
    if p == 2:
        return t.copy()
    return np.sign(t) * np.abs(t) ** (p - 1.0)


def psi_derivative(t, p: float, eps: float = 0.0):
    """(p-1)|t|^(p-2), optionally smoothed as (p-1)(t^2+eps^2)^((p-2)/2).

    The smoothing is only ever used for curvature (Hessians); with ``eps = 0``
    and ``p < 2`` the value at ``t = 0`` is infinite.
    """
    t = np.asarray(t, dtype=float)
    if p == 2:
        return np.ones_like(t)
    if eps > 0:
        return (p - 1.0) * (t * t + eps * eps) ** ((p - 2.0) / 2.0)
    with np.errstate(divide="ignore"):
        return (p - 1.0) * np.abs(t) ** (p - 2.0)


def make_operator(grid: Grid1D, s: float, p: float, bbm_constant: float = 1.0, threads: int = 1) -> Operator:
    if s == 1.0:
        return LocalOperator(grid, float(p))
    return assemble_kernel(grid, s, p, bbm_constant, threads=threads)


def _interfaces(values: np.ndarray) -> np.ndarray:
    return np.diff(np.concatenate(([0.0], values, [0.0])))


def seminorm(op: Operator, values: np.ndarray) -> float:
    """``[u]^p`` over R x R (nonlocal) or the local p-energy (s = 1)."""
    u = np.asarray(values, dtype=float)
    p = op.p
    if isinstance(op, LocalOperator):
        h = op.grid.cell_width
        return float(h ** (1.0 - p) * np.sum(np.abs(_interfaces(u)) ** p))
    diff = np.abs(u[:, None] - u[None, :])
    return float(np.sum(op.interior * diff**p) + 2.0 * np.sum(op.exterior * np.abs(u) ** p))


def _power_increment(a: np.ndarray, c: np.ndarray, p: float) -> np.ndarray:
    """|a + c|^p - |a|^p without cancellation when |c| << |a|."""
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    out = np.abs(a + c) ** p - np.abs(a) ** p
    small = np.abs(c) < 0.5 * np.abs(a)
    if np.any(small):
        aa, cc = a[small], c[small]
        out[small] = np.abs(aa) ** p * np.expm1(p * np.log1p(cc / aa))
    return out


def seminorm_increment(op: Operator, values: np.ndarray, step: np.ndarray) -> float:
    """``[u + step]^p - [u]^p`` accurate relative to the increment itself."""
    u = np.asarray(values, dtype=float)
    d = np.asarray(step, dtype=float)
    p = op.p
    if isinstance(op, LocalOperator):
        h = op.grid.cell_width
        return float(h ** (1.0 - p) * np.sum(_power_increment(_interfaces(u), _interfaces(d), p)))
    inc = _power_increment(u[:, None] - u[None, :], d[:, None] - d[None, :], p)
    return float(np.sum(op.interior * inc) + 2.0 * np.sum(op.exterior * _power_increment(u, d, p)))


def seminorm_gradient(op: Operator, values: np.ndarray) -> np.ndarray:
    u = np.asarray(values, dtype=float)
    p = op.p
    if isinstance(op, LocalOperator):
        h = op.grid.cell_width
        flux = psi(_interfaces(u), p)
        return p * h ** (1.0 - p) * (flux[:-1] - flux[1:])
    # each unordered pair appears twice in the ordered double sum
    inner = np.sum(op.interior * psi(u[:, None] - u[None, :], p), axis=1)
    return 2.0 * p * (inner + op.exterior * psi(u, p))


def seminorm_hessian(op: Operator, values: np.ndarray, eps: float = 0.0) -> np.ndarray:
    """Hessian of :func:`seminorm`; ``eps`` smooths |t|^(p-2) for p != 2."""
    u = np.asarray(values, dtype=float)
    p = op.p
    N = u.size
    if isinstance(op, LocalOperator):
        h = op.grid.cell_width
        c = p * h ** (1.0 - p) * psi_derivative(_interfaces(u), p, eps)
        H = np.diag(c[:-1] + c[1:])
        off = -c[1:-1]
        H[np.arange(N - 1), np.arange(1, N)] = off
        H[np.arange(1, N), np.arange(N - 1)] = off
        return H
    with np.errstate(invalid="ignore"):
        # the zero diagonal meets |0|^(p-2) = inf when p < 2 and eps = 0
        C = op.interior * psi_derivative(u[:, None] - u[None, :], p, eps)
    np.fill_diagonal(C, 0.0)
    H = -2.0 * p * C
    diag = 2.0 * p * (C.sum(axis=1) + op.exterior * psi_derivative(u, p, eps))
    H[np.diag_indices(N)] = diag
    return H


def stiffness_matrix(op: Operator) -> np.ndarray:
    """Symmetric ``L`` with ``[u]^2 = u^T L u`` (only meaningful at p = 2)."""
    N = op.grid.N
    if isinstance(op, LocalOperator):
        h = op.grid.cell_width
        L = 2.0 * np.eye(N) - np.eye(N, k=1) - np.eye(N, k=-1)
        return L / h
    W = np.array(op.interior)
    L = -2.0 * W
    L[np.diag_indices(N)] = 2.0 * (W.sum(axis=1) + op.exterior)
    return L


@dataclass(frozen=True)
class SobolevExponents:
    s: float
    p: float
    n: int = 1

    @property
    def p_star(self) -> float:
        sp = self.s * self.p
        return self.n * self.p / (self.n - sp) if sp < self.n else math.inf


def sobolev_exponents(s: float, p: float, n: int = 1) -> SobolevExponents:
    if not 0 < s <= 1 or not p > 1:
        raise DomainError(f"need 0 < s <= 1 and p > 1, got s={s}, p={p}")
    return SobolevExponents(float(s), float(p), int(n))


@dataclass(frozen=True)
class EnergyReport:
    seminorm_p: float
    normalized: float
    lp_norm_p: float
    exterior_share: float


def _same_grid(u: DiscreteFunction, op: Operator) -> None:
    if u.grid != op.grid:
        raise DomainError("function and operator live on different grids")


def gagliardo_energy(u: DiscreteFunction, w: Operator) -> EnergyReport:
    _same_grid(u, w)
    vals = u.values
    total = seminorm(w, vals)
    if isinstance(w, LocalOperator):
        boundary = w.grid.cell_width ** (1.0 - w.p) * (abs(vals[0]) ** w.p + abs(vals[-1]) ** w.p)
    else:
        boundary = 2.0 * float(np.sum(w.exterior * np.abs(vals) ** w.p))
    share = boundary / total if total > 0 else 0.0
    lp = u.grid.cell_measure * float(np.sum(np.abs(vals) ** w.p))
    return EnergyReport(total, w.bbm_factor * total, lp, share)


def energy_gradient(u: DiscreteFunction, w: Operator) -> DiscreteFunction:
    _same_grid(u, w)
    return DiscreteFunction(u.grid, seminorm_gradient(w, u.values))


def local_energy(u: DiscreteFunction, p: float) -> float:
    """First-order discretization of int |u'|^p for u vanishing outside the domain."""
    return seminorm(LocalOperator(u.grid, float(p)), u.values)


class BBMDiagnosticError(RuntimeError):
    """Probe estimates of the BBM constant disagree; the mesh is probably too coarse."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


@dataclass(frozen=True)
class BBMEstimate:
    value: float
    per_probe: tuple
    spread: float


def default_bbm_probes(grid: Grid1D) -> list[DiscreteFunction]:
    z = (grid.cell_centers - grid.a) / grid.length
    return [
        DiscreteFunction(grid, np.sin(np.pi * z)),
        DiscreteFunction(grid, 4.0 * z * (1.0 - z)),
        DiscreteFunction(grid, np.sin(np.pi * z) ** 2 * (1.0 + 0.5 * z)),
    ]


def _extrapolate_to_zero(x: Sequence[float], y: Sequence[float]) -> float:
    # polynomial through all points (Richardson), evaluated at 0 via Neville
    x = list(map(float, x))
    P = list(map(float, y))
    n = len(x)
    for m in range(1, n):
        for i in range(n - m):
            P[i] = (x[i + m] * P[i] - x[i] * P[i + 1]) / (x[i + m] - x[i])
    return P[0]


def estimate_bbm_constant(
    p: float,
    probes: Sequence[DiscreteFunction] | None = None,
    s_values: Sequence[float] = (0.99, 0.995, 0.999),
    grid: Grid1D | None = None,
    max_spread: float = 0.05,
) -> BBMEstimate:
    """Estimate K with lim_{s->1} K (1-s) [u]^p = |u|^p_{W^{1,p}}.

    ``(1-s)[u]^p`` is extrapolated to ``s = 1`` through the given ``s_values``
    for each probe, and K is the ratio to the local energy, averaged over
    probes.
    """
    if probes is None:
        if grid is None:
            raise DomainError("either probes or grid must be given")
        probes = default_bbm_probes(grid)
    if not probes:
        raise DomainError("need at least one probe")
    s_values = [float(s) for s in s_values]
    if len(s_values) < 2 or any(b <= a for a, b in zip(s_values, s_values[1:])) or s_values[-1] >= 1:
        raise DomainError("s_values must increase strictly toward (but below) 1")
    ests = []
    kernels: dict = {}
    for u in probes:
        target = local_energy(u, p)
        if not target > 0:
            raise DomainError("degenerate probe (zero local energy)")
        samples = []
        for s in s_values:
            key = (u.grid, s)
            if key not in kernels:
                kernels[key] = assemble_kernel(u.grid, s, p, 1.0)
            samples.append((1.0 - s) * seminorm(kernels[key], u.values))
        limit = _extrapolate_to_zero([1.0 - s for s in s_values], samples)
        ests.append(target / limit)
    mean = float(np.mean(ests))
    spread = float((max(ests) - min(ests)) / mean)
    est = BBMEstimate(mean, tuple(float(e) for e in ests), spread)
    if spread > max_spread:
        raise BBMDiagnosticError(
            f"probe spread {spread:.3%} exceeds {max_spread:.0%}; refine the mesh", est
        )
    return est
