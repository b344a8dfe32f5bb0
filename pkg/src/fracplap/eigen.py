"""First eigenpair with weight, the p = 2 spectrum, and eigenfunction diagnostics."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .dirichlet import ConvergenceError, SolverOptions, minimize_functional
from .energy import Operator, make_operator, psi, seminorm, seminorm_gradient, stiffness_matrix
from .grid import DiscreteFunction, DomainError, Grid1D

__all__ = [
    "WeightFunction",
    "EigenPair",
    "SpectrumP2",
    "SolverFault",
    "UnsupportedOperation",
    "CurvePoint",
    "first_eigenpair",
    "rayleigh_quotient",
    "eigen_residual",
    "full_spectrum_p2",
    "lambda1_curve",
    "positivity_check",
    "nodal_measure",
    "isolation_gap",
    "min_isolation_gap",
    "sign_normalize",
]


class SolverFault(RuntimeError):
    """The inverse-power iteration lost its monotone descent."""


class UnsupportedOperation(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class WeightFunction:
    values: DiscreteFunction

    def __post_init__(self):
        v = self.values.values
        if not np.all(np.isfinite(v)):
            raise DomainError("weight must be bounded")
        if not np.any(v > 0):
            raise DomainError("weight must be positive on a set of positive measure")

    @property
    def grid(self) -> Grid1D:
        return self.values.grid

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values.values)))

    @property
    def positive_measure(self) -> float:
        return float(np.count_nonzero(self.values.values > 0) * self.grid.cell_measure)

    @classmethod
    def constant(cls, grid: Grid1D, c: float = 1.0) -> "WeightFunction":
        return cls(DiscreteFunction(grid, np.full(grid.N, float(c))))


@dataclass(frozen=True, eq=False)
class EigenPair:
    lam: float
    u: DiscreteFunction
    normalization: float
    residual: float
    iterations: int = 0
    history: tuple = field(default=(), repr=False)


def sign_normalize(values: np.ndarray) -> np.ndarray:
    """Flip so that the cell sum is positive (first clearly nonzero entry for odd modes)."""
    v = np.asarray(values, dtype=float)
    total = v.sum()
    if abs(total) <= 1e-8 * np.sum(np.abs(v)):
        nz = np.flatnonzero(np.abs(v) > 1e-8 * np.max(np.abs(v))) if v.any() else []
        return -v if len(nz) and v[nz[0]] < 0 else v.copy()
    return -v if total < 0 else v.copy()


def _weighted_lp(values: np.ndarray, h: WeightFunction, p: float) -> float:
    return h.grid.cell_measure * float(np.sum(h.values.values * np.abs(values) ** p))


def rayleigh_quotient(u: DiscreteFunction, w: Operator, h: WeightFunction) -> float:
    denom = _weighted_lp(u.values, h, w.p)
    if not denom > 0:
        raise DomainError("Rayleigh quotient needs int h|u|^p > 0")
    return w.bbm_factor * seminorm(w, u.values) / denom


def eigen_residual(w: Operator, h: WeightFunction, lam: float, values: np.ndarray) -> float:
    """Relative max-norm residual of the discrete weak form."""
    cell = w.grid.cell_measure
    rhs = lam * cell * h.values.values * psi(values, w.p)
    lhs = (w.bbm_factor / w.p) * seminorm_gradient(w, values)
    scale = float(np.max(np.abs(rhs)))
    return float(np.max(np.abs(lhs - rhs))) / (scale if scale > 0 else 1.0)


def _normalize(values: np.ndarray, h: WeightFunction, p: float) -> np.ndarray:
    return values / _weighted_lp(values, h, p) ** (1.0 / p)


def first_eigenpair(
    w: Operator,
    h: WeightFunction,
    opts: SolverOptions = SolverOptions(),
    start: DiscreteFunction | np.ndarray | None = None,
    monotone_tol: float = 1e-9,
) -> EigenPair:
    """Inverse-power iteration u_{k+1} ~ R(lam_k h psi(u_k)).

    Starts from the positive constant unless ``start`` is given.  Each
    resolvent solve is warm-started from the current iterate.  The Rayleigh
    quotients must not increase (up to ``monotone_tol``, relative).
    """
    if h.grid != w.grid:
        raise DomainError("weight and operator live on different grids")
    p = w.p
    if start is None:
        u = np.ones(w.grid.N)
        if _weighted_lp(u, h, p) <= 0:
            u = np.where(h.values.values > 0, 1.0, 1e-3)
    else:
        u = np.array(start.values if isinstance(start, DiscreteFunction) else start, dtype=float)
    if not _weighted_lp(u, h, p) > 0:
        raise DomainError("start must satisfy int h|u|^p > 0")
    u = _normalize(u, h, p)
    lam = w.bbm_factor * seminorm(w, u)
    history = [lam]
    hv = h.values.values
    res = np.inf
    for it in range(1, opts.eig_max_iter + 1):
        try:
            sol = minimize_functional(w, lam * hv * psi(u, p), opts, initial=u)
        except ConvergenceError as exc:
            raise ConvergenceError(
                f"resolvent failed at inverse-power step {it}: {exc}", exc.last_iterate, exc.residual, it
            ) from exc
        v = sol.values
        if not _weighted_lp(v, h, p) > 0:
            raise SolverFault("iterate left the admissible set")
        v = _normalize(v, h, p)
        new_lam = w.bbm_factor * seminorm(w, v)
        if new_lam > lam * (1.0 + monotone_tol) + 1e-300:
            raise SolverFault(f"Rayleigh quotient increased at step {it}: {lam!r} -> {new_lam!r}")
        history.append(new_lam)
        step = abs(lam - new_lam)
        u, lam = v, new_lam
        res = eigen_residual(w, h, lam, u)
        if step <= opts.eig_tol * lam and res <= max(1e3 * opts.eig_tol, _residual_floor(w, u, lam, h)):
            break
    else:
        raise ConvergenceError(
            f"inverse-power iteration did not converge in {opts.eig_max_iter} steps", u, res, opts.eig_max_iter
        )
    u = sign_normalize(u)
    norm = _weighted_lp(u, h, p)
    return EigenPair(lam, DiscreteFunction(w.grid, u), norm, res, it, tuple(history))


def _residual_floor(w: Operator, u: np.ndarray, lam: float, h: WeightFunction) -> float:
    from .dirichlet import _rounding_floor

    cell = w.grid.cell_measure
    scale = lam * cell * float(np.max(np.abs(h.values.values * psi(u, w.p))))
    return 10.0 * _rounding_floor(w, u) / scale if scale > 0 else 0.0


@dataclass(frozen=True, eq=False)
class SpectrumP2:
    eigenvalues: np.ndarray
    eigenvectors: tuple

    @property
    def gap(self) -> float:
        return float(self.eigenvalues[1] - self.eigenvalues[0])


def full_spectrum_p2(w: Operator, h: WeightFunction, count: int | None = None) -> SpectrumP2:
    """Lowest ``count`` eigenpairs of bbm*L phi = lam * cell * diag(h) phi.

    Eigenvectors are normalized to int h phi^2 = 1 and sign-normalized.
    """
    if w.p != 2:
        raise UnsupportedOperation("the full spectrum is only available at p = 2")
    if h.grid != w.grid:
        raise DomainError("weight and operator live on different grids")
    N = w.grid.N
    count = N if count is None else int(count)
    if not 1 <= count <= N:
        raise DomainError(f"count must lie in 1..{N}")
    A = w.bbm_factor * stiffness_matrix(w)
    hv = h.values.values
    B = w.grid.cell_measure * np.diag(hv)
    if np.all(hv > 0):
        lam, vec = linalg.eigh(A, B, subset_by_index=[0, count - 1])
    else:
        # indefinite weight: mu B phi = ... solved against the SPD stiffness
        mu, vec = linalg.eigh(B, A)
        keep = np.flatnonzero(mu > 0)[::-1]
        if keep.size < count:
            raise DomainError(f"only {keep.size} positive eigenvalues exist for this weight")
        keep = keep[:count]
        lam, vec = 1.0 / mu[keep], vec[:, keep]
    vecs = []
    for k in range(count):
        phi = vec[:, k]
        phi = phi / np.sqrt(phi @ B @ phi)
        vecs.append(DiscreteFunction(w.grid, sign_normalize(phi)))
    return SpectrumP2(np.asarray(lam, dtype=float), tuple(vecs))


@dataclass(frozen=True)
class CurvePoint:
    s: float
    lambda1: float
    residual: float
    iterations: int
    lambda2: float | None = None
    gap: float | None = None
    error: str | None = None


def lambda1_curve(
    s_values: Sequence[float],
    p: float,
    h: WeightFunction,
    grid: Grid1D,
    K: float,
    opts: SolverOptions = SolverOptions(),
    threads: int = 1,
) -> list[CurvePoint]:
    """lambda_1 for each s on a shared mesh; failures are recorded per point."""
    s_values = [float(s) for s in s_values]
    if any(b <= a for a, b in zip(s_values, s_values[1:])):
        raise DomainError("s_values must be sorted increasingly")
    if any(not 0 < s <= 1 for s in s_values):
        raise DomainError("s_values must lie in (0, 1]")

    def one(s):
        try:
            op = make_operator(grid, s, p, K)
            pair = first_eigenpair(op, h, opts)
            lam2 = gap = None
            if p == 2:
                spec = full_spectrum_p2(op, h, 2)
                lam2, gap = float(spec.eigenvalues[1]), spec.gap
            return CurvePoint(s, pair.lam, pair.residual, pair.iterations, lam2, gap)
        except (ConvergenceError, SolverFault, DomainError) as exc:
            return CurvePoint(s, float("nan"), float("nan"), 0, error=str(exc))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, s_values))
    return [one(s) for s in s_values]


def positivity_check(u: DiscreteFunction) -> bool:
    v = sign_normalize(u.values)
    return bool(v.size and np.min(v) > 0)


def nodal_measure(u: DiscreteFunction) -> tuple[float, float]:
    cell = u.grid.cell_measure
    v = u.values
    return float(np.count_nonzero(v > 0) * cell), float(np.count_nonzero(v < 0) * cell)


def isolation_gap(w: Operator, h: WeightFunction) -> float:
    if w.p != 2:
        raise UnsupportedOperation("isolation gap is only certified at p = 2")
    return full_spectrum_p2(w, h, 2).gap


def min_isolation_gap(
    s_values: Sequence[float], grid: Grid1D, h: WeightFunction, K: float = 1.0
) -> tuple[float, list[tuple[float, float, float]]]:
    """Minimum of lambda_2 - lambda_1 over the sampled s (p = 2).

    Returns the minimum and per-s rows ``(s, lambda1, gap)``.
    """
    rows = []
    for s in s_values:
        spec = full_spectrum_p2(make_operator(grid, s, 2.0, K), h, 2)
        rows.append((float(s), float(spec.eigenvalues[0]), spec.gap))
    return min(r[2] for r in rows), rows
