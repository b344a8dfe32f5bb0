"""Resolvent of the (fractional) p-Laplacian by strictly convex minimization.

The discrete functional is

    J(v) = (bbm_factor / p) [v]^p - cell_measure * <rhs, v>,

whose unique minimizer is the weak solution with zero exterior datum.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .energy import (
    _interfaces,
    Operator,
    make_operator,
    seminorm,
    seminorm_gradient,
    seminorm_hessian,
    seminorm_increment,
)
from .grid import DiscreteFunction, DomainError, Grid1D, KernelWeights

__all__ = [
    "SolverOptions",
    "ConvergenceError",
    "MinimizationResult",
    "minimize_functional",
    "solve_dirichlet",
    "dirichlet_residual",
    "resolvent",
]


@dataclass(frozen=True)
class SolverOptions:
    grad_tol: float = 1e-11
    max_iter: int = 200
    epsilon_reg: float = 1e-13
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4
    max_backtracks: int = 50
    # inverse-power iteration (eigen module)
    eig_tol: float = 1e-12
    eig_max_iter: int = 500
    method: str = "newton"

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise DomainError("grad_tol must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")
        if self.epsilon_reg < 0:
            raise DomainError("epsilon_reg must be >= 0")
        if not 0 < self.shrink < 1 or not 0 < self.sufficient_decrease < 1:
            raise DomainError("line search parameters must lie in (0, 1)")
        if self.method not in ("newton", "gradient"):
            raise DomainError(f"unknown method {self.method!r}")


class ConvergenceError(RuntimeError):
    def __init__(self, message, last_iterate=None, residual=None, iterations=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class MinimizationResult:
    values: np.ndarray
    iterations: int
    residual: float
    tolerance: float


def _rounding_floor(op: Operator, u: np.ndarray) -> float:
    """Smallest gradient residual resolvable in floating point.

    For p < 2 the map t -> |t|^(p-2) t is only Hoelder at 0: a rounding error
    e in a difference t moves psi(t) by up to min(e^(p-1), (p-1)|t|^(p-2) e).
    Summing that bound over each row gives the floor; it is zero for p >= 2.
    """
    p = op.p
    if p >= 2:
        return 0.0
    scale = float(np.max(np.abs(u)))
    if scale == 0:
        return 0.0
    e = 64.0 * np.finfo(float).eps * scale

    def m(t):
        with np.errstate(divide="ignore"):
            return np.minimum(e ** (p - 1.0), (p - 1.0) * np.abs(t) ** (p - 2.0) * e)

    if isinstance(op, KernelWeights):
        rows = (op.interior * m(u[:, None] - u[None, :])).sum(axis=1) + op.exterior * m(u)
    else:
        c = m(_interfaces(u))
        rows = op.grid.cell_width ** (1.0 - p) * (c[:-1] + c[1:])
    return op.bbm_factor / p * 2.0 * p * float(np.max(rows))


def _newton_direction(H: np.ndarray, g: np.ndarray) -> np.ndarray | None:
    try:
        c = linalg.cho_factor(H, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError):
        return None
    return -linalg.cho_solve(c, g)


def minimize_functional(
    op: Operator,
    rhs: np.ndarray,
    opts: SolverOptions = SolverOptions(),
    initial: np.ndarray | None = None,
) -> MinimizationResult:
    """Minimize J for the cell-value right-hand side ``rhs``.

    Newton steps on the curvature-smoothed Hessian with Armijo backtracking;
    a gradient step is taken whenever the Newton direction is unavailable or
    fails to decrease J.  ``opts.method='gradient'`` forces gradient descent.
    """
    p = op.p
    cell = op.grid.cell_measure
    rhs = np.asarray(rhs, dtype=float)
    factor = op.bbm_factor / p
    load = cell * rhs
    tol = opts.grad_tol * max(1.0, float(np.max(np.abs(rhs))) * cell)

    def J(v):
        return factor * seminorm(op, v) - float(load @ v)

    def dJ(v, step):
        return factor * seminorm_increment(op, v, step) - float(load @ step)

    def grad(v):
        return factor * seminorm_gradient(op, v) - load

    u = np.zeros(op.grid.N) if initial is None else np.array(initial, dtype=float)
    gu = grad(u)
    res = float(np.max(np.abs(gu)))
    step_scale = 1.0
    for it in range(opts.max_iter + 1):
        if res <= max(tol, _rounding_floor(op, u)):
            return MinimizationResult(u, it, res, tol)
        if it == opts.max_iter:
            break
        d = None
        if opts.method == "newton":
            eps = opts.epsilon_reg * max(float(np.max(np.abs(u))), 1.0 if not u.any() else 0.0)
            d = _newton_direction(factor * seminorm_hessian(op, u, eps), gu)
        t = 1.0
        gradient_step = d is None or float(gu @ d) >= 0
        if gradient_step:
            d = -gu
            t = step_scale
        slope = float(gu @ d)
        for _ in range(opts.max_backtracks):
            if dJ(u, t * d) <= opts.sufficient_decrease * t * slope:
                break
            t *= opts.shrink
        else:
            raise ConvergenceError("line search failed", u, res, it)
        if gradient_step:
            step_scale = min(2.0 * t, 1e8)
        u_new = u + t * d
        gu = grad(u_new)
        res_new = float(np.max(np.abs(gu)))
        if p < 2 and not gradient_step:
            # a full Newton step maps a pair difference near the |t|^p cusp to
            # its negative; the step scaled by p - 1 lands on the cusp instead.
            # J cannot tell them apart there, so compare residuals.
            t2 = (p - 1.0) * t
            if dJ(u, t2 * d) <= opts.sufficient_decrease * t2 * slope:
                u_alt = u + t2 * d
                g_alt = grad(u_alt)
                r_alt = float(np.max(np.abs(g_alt)))
                if r_alt < res_new:
                    u_new, gu, res_new = u_alt, g_alt, r_alt
        u, res = u_new, res_new
    raise ConvergenceError(
        f"no convergence in {opts.max_iter} iterations (residual {res:.3e} > {tol:.3e})",
        u,
        res,
        opts.max_iter,
    )


def solve_dirichlet(
    w: Operator,
    h: DiscreteFunction,
    opts: SolverOptions = SolverOptions(),
    initial: DiscreteFunction | np.ndarray | None = None,
) -> DiscreteFunction:
    if h.grid != w.grid:
        raise DomainError("right-hand side and operator live on different grids")
    if isinstance(initial, DiscreteFunction):
        initial = initial.values
    result = minimize_functional(w, h.values, opts, initial)
    return DiscreteFunction(w.grid, result.values)


def dirichlet_residual(w: Operator, h: DiscreteFunction, u: DiscreteFunction) -> float:
    """Max-norm of the gradient of J at ``u``."""
    cell = w.grid.cell_measure
    g = (w.bbm_factor / w.p) * seminorm_gradient(w, u.values) - cell * h.values
    return float(np.max(np.abs(g)))


def resolvent(
    s: float,
    p: float,
    h: DiscreteFunction,
    grid: Grid1D,
    K: float,
    opts: SolverOptions = SolverOptions(),
    initial=None,
) -> DiscreteFunction:
    """u = R_{s,p}(h); ``s = 1`` dispatches to the local p-Laplacian."""
    if not 0 < s <= 1:
        raise DomainError(f"need 0 < s <= 1, got {s}")
    if h.grid != grid:
        raise DomainError("right-hand side lives on a different grid")
    return solve_dirichlet(make_operator(grid, s, p, K), h, opts, initial)
