"""Branches of nontrivial solutions bifurcating from (lambda_1, 0).

The discrete problem is  G(u, lam) = 0  with

    G_i = bbm_factor * (grad [u]^p / p)_i - cell * (lam psi(u_i) + f(x_i, u_i, lam)).

Branches are traced by pseudo-arclength continuation in the weighted inner
product  <(u, a), (v, b)> = cell * u.v + lambda_weight * a b.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from .eigen import EigenPair, SpectrumP2, WeightFunction, first_eigenpair, full_spectrum_p2
from .energy import Operator, make_operator, psi, psi_derivative, seminorm_gradient, seminorm_hessian
from .grid import DiscreteFunction, DomainError, Grid1D

__all__ = [
    "Nonlinearity",
    "ContinuationOptions",
    "BranchPoint",
    "Branch",
    "SignScan",
    "DegenerateIndexError",
    "residual_map",
    "relative_residual",
    "jacobian",
    "sign_class",
    "continue_branch",
    "branch_sign_scan",
    "extrapolate_intercept",
    "leray_schauder_index_p2",
    "index_along_homotopy",
]


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """Perturbation f(x, t, lam), vectorized over x and t."""

    fn: Callable
    kind: str = "custom"
    params: tuple = ()
    growth_exponent: float | None = None

    def __call__(self, x, t, lam):
        return np.asarray(self.fn(np.asarray(x, dtype=float), np.asarray(t, dtype=float), lam), dtype=float)

    @classmethod
    def zero(cls) -> "Nonlinearity":
        return cls(lambda x, t, lam: np.zeros(np.broadcast(x, t).shape), "zero")

    @classmethod
    def cubic(cls, coef: float = 1.0) -> "Nonlinearity":
        """f = -coef * t^3."""
        return cls(lambda x, t, lam: -coef * t**3 + 0.0 * x, "cubic", (coef,), 4.0)

    @classmethod
    def odd_power(cls, coef: float, q: float) -> "Nonlinearity":
        """f = coef * |t|^(q-2) t."""
        return cls(lambda x, t, lam: coef * psi(t, q) + 0.0 * x, "odd_power", (coef, q), q)

    @classmethod
    def from_expression(cls, src: str) -> "Nonlinearity":
        from .expr import compile_function

        g = compile_function(src)
        return cls(lambda x, t, lam: g(t, x, lam), "expression", (g.source,))

    def validate(self, p: float, xs: Sequence[float] = (0.1, 0.5, 0.9), lams: Sequence[float] = (-10.0, 0.0, 10.0)):
        """f(x, 0, lam) = 0 and |f|/|t|^(p-1) decreasing along t = 1e-3, 1e-4, 1e-5."""
        xs = np.asarray(xs, dtype=float)
        for lam in lams:
            if np.any(self(xs, np.zeros_like(xs), lam) != 0):
                raise DomainError("f(x, 0, lambda) must vanish")
            for sgn in (1.0, -1.0):
                ratios = [
                    float(np.max(np.abs(self(xs, np.full_like(xs, sgn * t), lam)))) / t ** (p - 1.0)
                    for t in (1e-3, 1e-4, 1e-5)
                ]
                if not (ratios[2] <= ratios[1] <= ratios[0]) or ratios[2] > 1e-2 * max(1.0, abs(lam)):
                    raise DomainError(f"f is not o(|t|^(p-1)) at 0 (ratios {ratios})")
        return self


@dataclass(frozen=True)
class ContinuationOptions:
    ds: float = 0.05
    ds_min: float = 1e-8
    ds_max: float = 0.5
    max_steps: int = 60
    newton_tol: float = 1e-9
    newton_max_iter: int = 15
    max_halvings: int = 5
    max_amplitude: float = np.inf
    lambda_min: float = -np.inf
    lambda_max: float = np.inf
    t0: float = 1e-3
    fd_step: float = 1e-6
    epsilon_reg: float = 1e-13
    lambda_weight: float = 1.0

    def __post_init__(self):
        if not self.ds > 0 or not self.ds_max >= self.ds:
            raise DomainError("need 0 < ds <= ds_max")
        if not self.t0 > 0:
            raise DomainError("t0 must be positive")
        if not self.fd_step > 0:
            raise DomainError("fd_step must be positive")


@dataclass(frozen=True, eq=False)
class BranchPoint:
    lam: float
    u: DiscreteFunction
    amplitude: float
    residual: float
    sign_class: str
    step: int = 0


@dataclass(frozen=True, eq=False)
class Branch:
    points: tuple
    start: tuple
    termination: str
    direction: int = 1
    eigenpair: EigenPair | None = field(default=None, repr=False)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([pt.lam for pt in self.points])

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([pt.amplitude for pt in self.points])


def _f_values(f: Nonlinearity, grid: Grid1D, u: np.ndarray, lam: float) -> np.ndarray:
    return np.broadcast_to(f(grid.cell_centers, u, lam), u.shape).astype(float)


def _residual(u: np.ndarray, lam: float, w: Operator, f: Nonlinearity) -> np.ndarray:
    cell = w.grid.cell_measure
    return (w.bbm_factor / w.p) * seminorm_gradient(w, u) - cell * (lam * psi(u, w.p) + _f_values(f, w.grid, u, lam))


def residual_map(u: DiscreteFunction, lam: float, w: Operator, f: Nonlinearity) -> DiscreteFunction:
    if u.grid != w.grid:
        raise DomainError("function and operator live on different grids")
    return DiscreteFunction(u.grid, _residual(u.values, float(lam), w, f))


def relative_residual(u: np.ndarray, lam: float, w: Operator, f: Nonlinearity) -> float:
    """max|G| scaled by the size of the right-hand side cell*(lam psi(u) + f)."""
    u = np.asarray(u, dtype=float)
    G = _residual(u, lam, w, f)
    cell = w.grid.cell_measure
    scale = cell * max(
        float(np.max(np.abs(lam * psi(u, w.p) + _f_values(f, w.grid, u, lam)))),
        float(np.max(np.abs(psi(u, w.p)))),
    )
    num = float(np.max(np.abs(G)))
    return num / scale if scale > 0 else num


def jacobian(
    u,
    lam: float,
    w: Operator,
    f: Nonlinearity,
    fd_step: float = 1e-6,
    epsilon_reg: float = 0.0,
) -> np.ndarray:
    """[dG/du | dG/dlam] as an N x (N+1) array.

    The operator part is analytic; f-derivatives use central differences with
    step ``fd_step * max(1, max|u|)``.
    """
    u = np.asarray(u.values if isinstance(u, DiscreteFunction) else u, dtype=float)
    grid = w.grid
    cell = grid.cell_measure
    p = w.p
    scale = float(np.max(np.abs(u))) if u.size else 0.0
    eps = epsilon_reg * scale if p != 2 else 0.0
    dt = fd_step * max(1.0, scale)
    x = grid.cell_centers
    df_dt = (f(x, u + dt, lam) - f(x, u - dt, lam)) / (2.0 * dt)
    dl = fd_step * max(1.0, abs(lam))
    df_dl = (f(x, u, lam + dl) - f(x, u, lam - dl)) / (2.0 * dl)
    Gu = (w.bbm_factor / p) * seminorm_hessian(w, u, eps)
    Gu[np.diag_indices(grid.N)] -= cell * (lam * psi_derivative(u, p, eps) + np.broadcast_to(df_dt, u.shape))
    Glam = -cell * (psi(u, p) + np.broadcast_to(df_dl, u.shape))
    return np.column_stack([Gu, Glam])


def sign_class(values: np.ndarray) -> str:
    v = np.asarray(values, dtype=float)
    if np.all(v == 0):
        return "zero"
    if np.all(v > 0):
        return "positive"
    if np.all(v < 0):
        return "negative"
    return "sign-changing"


def _amplitude(u: np.ndarray, grid: Grid1D, p: float) -> float:
    norm = (grid.cell_measure * np.sum(np.abs(u) ** p)) ** (1.0 / p)
    return float(np.sign(u.sum()) * norm)


def _solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        x = linalg.solve(A, b, check_finite=True)
        if np.all(np.isfinite(x)) and np.linalg.cond(A) < 1e14:
            return x
    except (linalg.LinAlgError, ValueError):
        pass
    # singular to working precision: least-squares step
    return linalg.lstsq(A, b)[0]


class _Tracker:
    def __init__(self, w: Operator, f: Nonlinearity, opts: ContinuationOptions):
        self.w, self.f, self.opts = w, f, opts
        self.cell = w.grid.cell_measure
        self.N = w.grid.N

    def weighted(self, tau: np.ndarray) -> np.ndarray:
        out = tau.copy()
        out[: self.N] *= self.cell
        out[self.N] *= self.opts.lambda_weight
        return out

    def norm(self, tau: np.ndarray) -> float:
        return float(np.sqrt(tau @ self.weighted(tau)))

    def jac(self, X: np.ndarray) -> np.ndarray:
        return jacobian(X[: self.N], X[self.N], self.w, self.f, self.opts.fd_step, self.opts.epsilon_reg)

    def G(self, X: np.ndarray) -> np.ndarray:
        return _residual(X[: self.N], X[self.N], self.w, self.f)

    def rel(self, X: np.ndarray) -> float:
        return relative_residual(X[: self.N], X[self.N], self.w, self.f)

    def tol(self, X: np.ndarray) -> float:
        """newton_tol, raised to the rounding floor when p < 2."""
        from .dirichlet import _rounding_floor

        u, lam = X[: self.N], X[self.N]
        scale = self.cell * max(abs(lam), 1.0) * float(np.max(np.abs(psi(u, self.w.p))))
        floor = 10.0 * _rounding_floor(self.w, u) / scale if scale > 0 else 0.0
        return max(self.opts.newton_tol, floor)

    def newton(self, X: np.ndarray, constraint_row: np.ndarray, constraint_rhs: float):
        """Solve [G(X); row.X - rhs] = 0 from X; returns (X, iterations) or None."""
        for it in range(1, self.opts.newton_max_iter + 1):
            F = np.append(self.G(X), constraint_row @ X - constraint_rhs)
            A = np.vstack([self.jac(X), constraint_row])
            dX = _solve(A, -F)
            if not np.all(np.isfinite(dX)):
                return None
            X_full = X + dX
            X = X_full
            if self.w.p < 2:
                # see minimize_functional: the step scaled by p - 1 settles
                # pair differences sitting on the |t|^p cusp
                X_alt = X_full - (2.0 - self.w.p) * dX
                if self.rel(X_alt) < self.rel(X_full):
                    X = X_alt
            small = self.norm(dX) <= 1e-12 * max(1.0, self.norm(X))
            tol = self.tol(X)
            if self.rel(X) <= tol and (small or it > 1 or self.rel(X) <= 1e-3 * tol):
                return X, it
        return (X, self.opts.newton_max_iter) if self.rel(X) <= self.tol(X) else None

    def tangent(self, X: np.ndarray, previous: np.ndarray) -> np.ndarray:
        A = np.vstack([self.jac(X), self.weighted(previous)])
        rhs = np.zeros(self.N + 1)
        rhs[-1] = 1.0
        tau = _solve(A, rhs)
        tau /= self.norm(tau)
        if tau @ self.weighted(previous) < 0:
            tau = -tau
        return tau


def continue_branch(
    w: Operator,
    f: Nonlinearity,
    start_direction: int = 1,
    opts: ContinuationOptions = ContinuationOptions(),
    eigenpair: EigenPair | None = None,
) -> Branch:
    """Trace the branch leaving (lambda_1, 0) in the direction ``sign * phi_1``."""
    if start_direction not in (1, -1):
        raise DomainError("start_direction must be +1 or -1")
    grid, p = w.grid, w.p
    if eigenpair is None:
        eigenpair = first_eigenpair(w, WeightFunction.constant(grid))
    lam1 = eigenpair.lam
    phi = eigenpair.u.values
    tr = _Tracker(w, f, opts)
    N = grid.N

    points = [BranchPoint(lam1, DiscreteFunction(grid, np.zeros(N)), 0.0, 0.0, "zero", 0)]

    # seed: anchor the projection on phi_1 at t0, then correct
    anchor = np.append(tr.cell * phi, 0.0)
    target = start_direction * opts.t0 * float(tr.cell * phi @ phi)
    X0 = np.append(start_direction * opts.t0 * phi, lam1)
    seeded = tr.newton(X0, anchor, target)
    if seeded is None:
        return Branch(tuple(points), (lam1, 0.0), "newton_failure", start_direction, eigenpair)
    X = seeded[0]

    def record(X, step):
        u = X[:N].copy()
        points.append(
            BranchPoint(float(X[N]), DiscreteFunction(grid, u), _amplitude(u, grid, p), tr.rel(X), sign_class(u), step)
        )

    record(X, 1)
    tau = tr.tangent(X, np.append(start_direction * phi, 0.0))
    ds = opts.ds
    termination = "max_steps"
    step = 1
    while step < opts.max_steps:
        halvings = 0
        while True:
            pred = X + ds * tau
            row = tr.weighted(tau)
            out = tr.newton(pred, row, float(row @ X) + ds)
            if out is not None:
                break
            halvings += 1
            ds *= 0.5
            if halvings > opts.max_halvings or ds < opts.ds_min:
                return Branch(tuple(points), (lam1, 0.0), "newton_failure", start_direction, eigenpair)
        X_new, its = out
        step += 1
        record(X_new, step)
        tau = tr.tangent(X_new, tau)
        X = X_new
        if its <= 3 and halvings == 0:
            ds = min(1.5 * ds, opts.ds_max)
        if abs(points[-1].amplitude) >= opts.max_amplitude:
            termination = "max_amplitude"
            break
        if not opts.lambda_min <= X[N] <= opts.lambda_max:
            termination = "lambda_bound"
            break
    return Branch(tuple(points), (lam1, 0.0), termination, start_direction, eigenpair)


@dataclass(frozen=True)
class SignScan:
    classes: tuple
    violations: tuple
    checked: int

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def first_violation(self) -> int | None:
        return self.violations[0] if self.violations else None


def branch_sign_scan(branch: Branch) -> SignScan:
    """Every nontrivial point must be one-signed; the trivial start is skipped."""
    if not branch.points:
        raise DomainError("empty branch")
    classes = tuple(sign_class(pt.u.values) for pt in branch.points)
    checked = [i for i, c in enumerate(classes) if c != "zero"]
    violations = tuple(i for i in checked if classes[i] == "sign-changing")
    return SignScan(classes, violations, len(checked))


def extrapolate_intercept(branch: Branch, npoints: int = 5) -> float:
    """lambda at amplitude -> 0 from a quadratic fit of lambda against amplitude^2."""
    pts = [pt for pt in branch.points if pt.sign_class != "zero"][:npoints]
    if len(pts) < 3:
        raise DomainError("need at least three nontrivial branch points")
    a2 = np.array([pt.amplitude**2 for pt in pts])
    lam = np.array([pt.lam for pt in pts])
    coeffs = np.polyfit(a2, lam, 2)
    return float(coeffs[-1])


class DegenerateIndexError(DomainError):
    pass


def leray_schauder_index_p2(lam: float, spectrum: SpectrumP2, separation: float = 1e-9) -> int:
    """(-1)^(number of eigenvalues below lam) for the linear problem at p = 2."""
    ev = np.asarray(spectrum.eigenvalues, dtype=float)
    if np.min(np.abs(ev - lam)) <= separation * max(1.0, abs(lam)):
        raise DegenerateIndexError(f"lambda={lam} is an eigenvalue (within {separation:g})")
    if lam > ev[-1] and len(ev) < len(spectrum.eigenvectors[0].values):
        raise DomainError("lambda lies above the computed part of the spectrum")
    return -1 if int(np.count_nonzero(ev < lam)) % 2 else 1


def index_along_homotopy(
    s_values: Sequence[float], grid: Grid1D, K: float = 1.0, selector: str = "midpoint"
) -> list[tuple[float, float, int]]:
    """Index at rho(s) for each s (p = 2).

    ``selector='midpoint'`` uses rho = (lambda_1 + lambda_2)/2, ``'below'``
    uses lambda_1 / 2.
    """
    h = None
    rows = []
    for s in s_values:
        op = make_operator(grid, s, 2.0, K)
        h = h or WeightFunction.constant(grid)
        spec = full_spectrum_p2(op, h, 3)
        l1, l2 = spec.eigenvalues[:2]
        rho = 0.5 * (l1 + l2) if selector == "midpoint" else 0.5 * l1
        rows.append((float(s), float(rho), leray_schauder_index_p2(rho, spec)))
    return rows
