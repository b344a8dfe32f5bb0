"""Constant-sign solutions of L u = g(u) for g crossing the first eigenvalue.

With lambda_under = lim_{t->0} g(t)/psi(t) the problem is rewritten as

    L u = lambda psi(u) + f(u),   f = g - lambda_under psi,

and the branch leaving (lambda_1, 0) is followed until it reaches
lambda = lambda_under, where u solves the original equation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from .bifurcation import Branch, ContinuationOptions, Nonlinearity, continue_branch
from .eigen import EigenPair, positivity_check
from .energy import Operator, psi, seminorm_gradient
from .expr import compile_function
from .grid import DiscreteFunction, DomainError

__all__ = [
    "CrossingError",
    "A1Violation",
    "A2Violation",
    "TwoSidedLimitError",
    "ExistenceNotDemonstrated",
    "CrossingNonlinearity",
    "CrossingSolution",
    "catalog_crossing",
    "validate_crossing",
    "solve_crossing",
    "crossing_residual",
]


class CrossingError(DomainError):
    pass


class A1Violation(CrossingError):
    """g(t)/psi(t) is not bounded."""


class A2Violation(CrossingError):
    """lambda_under < lambda_1 < lambda_over fails."""


class TwoSidedLimitError(CrossingError):
    """The limit of g(t)/psi(t) at 0 differs from the two sides."""


class ExistenceNotDemonstrated(RuntimeError):
    def __init__(self, message: str, branch: Branch):
        super().__init__(message)
        self.branch = branch


def catalog_crossing(a: float, b: float, p: float) -> str:
    """Ratio moving from a at 0 to b at infinity."""
    return f"psi(t, {p!r})*({a!r} + ({b!r} - {a!r})*t^2/(1 + t^2))"


@dataclass(frozen=True, eq=False)
class CrossingNonlinearity:
    g: Callable
    source: str
    p: float
    lambda_under: float
    lambda_over_probe: float
    bound: float
    lambda1: float
    probe_window: tuple
    flags: tuple = ()

    def ratio(self, t):
        t = np.asarray(t, dtype=float)
        return self.g(t) / psi(t, self.p)

    def remainder(self, x, t, lam=0.0):
        """f = g - lambda_under psi, the part that is o(|t|^(p-1))."""
        t = np.asarray(t, dtype=float)
        return self.g(t, x) - self.lambda_under * psi(t, self.p)

    def nonlinearity(self) -> Nonlinearity:
        return Nonlinearity(lambda x, t, lam: self.remainder(x, t, lam), "crossing", (self.source,))


def _ratio_at(g, p: float, t: np.ndarray) -> np.ndarray:
    return np.asarray(g(t), dtype=float) / psi(t, p)


def _limit_at_zero(g, p: float, sign: float) -> float:
    ts = sign * np.array([1e-3, 1e-4, 1e-5])
    r = _ratio_at(g, p, ts)
    if not np.all(np.isfinite(r)):
        raise A1Violation("g(t)/psi(t) is not finite near 0")
    # quadratic extrapolation in t to t = 0
    return float(np.polyval(np.polyfit(ts, r, 2), 0.0))


def _log_slope(t: np.ndarray, r: np.ndarray) -> float:
    return float(np.polyfit(np.log(t), np.log(np.abs(r) + 1e-300), 1)[0])


def validate_crossing(
    g,
    p: float,
    lambda1: float,
    T: float = 1e3,
    samples: int = 241,
    agreement: float = 1e-3,
    growth_slope: float = 0.05,
) -> CrossingNonlinearity:
    """Numerical check of boundedness (A1) and the crossing order (A2)."""
    if not p > 1:
        raise DomainError("p must exceed 1")
    fn = g if callable(g) else compile_function(g)
    source = getattr(fn, "source", repr(g))
    if np.any(np.asarray(fn(np.array([0.0, -0.0]))) != 0):
        raise DomainError("g(0) must be 0")

    left, right = _limit_at_zero(fn, p, -1.0), _limit_at_zero(fn, p, 1.0)
    lam_under = 0.5 * (left + right)
    if abs(left - right) > agreement * max(1.0, abs(lam_under)):
        raise TwoSidedLimitError(f"one-sided limits at 0 disagree: {left:.6g} vs {right:.6g}")

    mags = np.logspace(-6, 6, samples)
    with np.errstate(over="ignore", invalid="ignore"):
        r_pos, r_neg = _ratio_at(fn, p, mags), _ratio_at(fn, p, -mags)
    if not (np.all(np.isfinite(r_pos)) and np.all(np.isfinite(r_neg))):
        raise A1Violation("g(t)/psi(t) is not finite on [1e-6, 1e6]")
    tail = mags >= 1e4
    head = mags <= 1e-4
    for r in (r_pos, r_neg):
        grows_out = _log_slope(mags[tail], r[tail]) > growth_slope and abs(r[-1]) > abs(r[tail][0])
        grows_in = _log_slope(mags[head], r[head]) < -growth_slope and abs(r[0]) > abs(r[head][-1])
        if grows_out or grows_in:
            raise A1Violation("g(t)/psi(t) grows without bound")
    bound = float(max(np.max(np.abs(r_pos)), np.max(np.abs(r_neg))))

    window = np.logspace(np.log10(T), np.log10(10 * T), 41)
    w_ratio = np.concatenate([_ratio_at(fn, p, window), _ratio_at(fn, p, -window)])
    lam_over = float(np.min(w_ratio))
    flags = []
    if np.ptp(w_ratio) > 1e-2 * max(1.0, abs(lam_over)):
        flags.append("ratio varies by more than 1% across the probe window; liminf proxy may be unreliable")

    if not lam_under < lambda1:
        raise A2Violation(f"lambda_under={lam_under:.6g} is not below lambda_1={lambda1:.6g}")
    if not lambda1 < lam_over:
        raise A2Violation(f"probe {lam_over:.6g} on [{T:g}, {10 * T:g}] is not above lambda_1={lambda1:.6g}")
    return CrossingNonlinearity(
        fn, source, float(p), lam_under, lam_over, bound, float(lambda1), (float(T), float(10 * T)), tuple(flags)
    )


def crossing_residual(u: DiscreteFunction, w: Operator, g: CrossingNonlinearity) -> float:
    """max|L u - g(u)| relative to cell*max|g(u)|, evaluated from g directly."""
    cell = w.grid.cell_measure
    gu = np.asarray(g.g(u.values, w.grid.cell_centers), dtype=float)
    r = (w.bbm_factor / w.p) * seminorm_gradient(w, u.values) - cell * gu
    scale = cell * float(np.max(np.abs(gu)))
    return float(np.max(np.abs(r))) / scale if scale > 0 else float(np.max(np.abs(r)))


@dataclass(frozen=True, eq=False)
class CrossingSolution:
    u: DiscreteFunction
    residual: float
    branch: Branch
    lambda_max: float
    bracket: tuple
    polish_iterations: int
    flags: tuple = field(default=())


def _polish(u: np.ndarray, lam: float, w: Operator, f: Nonlinearity, opts: ContinuationOptions, tol: float):
    from .bifurcation import _residual, jacobian, relative_residual

    for it in range(1, 2 * opts.newton_max_iter + 1):
        J = jacobian(u, lam, w, f, opts.fd_step, opts.epsilon_reg)[:, :-1]
        try:
            du = linalg.solve(J, -_residual(u, lam, w, f))
        except linalg.LinAlgError:
            du = linalg.lstsq(J, -_residual(u, lam, w, f))[0]
        u_full = u + du
        u = u_full
        if w.p < 2:
            # same cusp safeguard as the continuation corrector
            u_alt = u_full - (2.0 - w.p) * du
            if relative_residual(u_alt, lam, w, f) < relative_residual(u_full, lam, w, f):
                u = u_alt
        if relative_residual(u, lam, w, f) <= tol and np.max(np.abs(du)) <= 1e-10 * np.max(np.abs(u)):
            return u, it
    return u, it


def solve_crossing(
    g: CrossingNonlinearity,
    w: Operator,
    opts: ContinuationOptions = ContinuationOptions(max_steps=200),
    direction: int = 1,
    eigenpair: EigenPair | None = None,
    tol: float = 1e-6,
) -> CrossingSolution:
    """Follow the branch from (lambda_1, 0) down to lambda_under and polish there."""
    if w.p != g.p:
        raise DomainError("operator and nonlinearity use different p")
    f = g.nonlinearity()
    lam_under = g.lambda_under
    run_opts = ContinuationOptions(**{**opts.__dict__, "lambda_min": lam_under})
    branch = continue_branch(w, f, direction, run_opts, eigenpair)
    lams = branch.lambdas
    if branch.termination != "lambda_bound" or lams[-1] > lam_under:
        raise ExistenceNotDemonstrated(
            f"branch ended ({branch.termination}) at lambda={lams[-1]:.6g} before reaching {lam_under:.6g}", branch
        )
    a, b = branch.points[-2], branch.points[-1]
    theta = (a.lam - lam_under) / (a.lam - b.lam)
    u0 = (1.0 - theta) * a.u.values + theta * b.u.values
    u, its = _polish(u0, lam_under, w, f, run_opts, 1e-3 * tol)
    sol = DiscreteFunction(w.grid, u)
    res = crossing_residual(sol, w, g)
    if not np.all(np.isfinite(u)) or res > tol:
        raise ExistenceNotDemonstrated(f"polish at lambda_under left residual {res:.3g}", branch)
    if not np.any(u) or not positivity_check(sol):
        raise ExistenceNotDemonstrated("polished solution is trivial or changes sign", branch)
    return CrossingSolution(sol, res, branch, float(np.max(lams)), (a.lam, b.lam), its, g.flags)
