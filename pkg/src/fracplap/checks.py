"""Executable property suites shared by the ``check`` command and the tests."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bifurcation import Nonlinearity, _residual, jacobian, leray_schauder_index_p2
from .eigen import WeightFunction, first_eigenpair, full_spectrum_p2, positivity_check
from .energy import estimate_bbm_constant, local_energy, make_operator, seminorm, seminorm_gradient
from .grid import DiscreteFunction, Grid1D, KernelWeights, assemble_kernel
from .inequalities import ASSERTED, inequality_suite

__all__ = [
    "PropertyRow",
    "gradient_fd_error",
    "jacobian_fd_error",
    "run_property_suite",
]


@dataclass(frozen=True)
class PropertyRow:
    suite: str
    name: str
    value: float
    threshold: float
    passed: bool


def _row(suite: str, name: str, value: float, threshold: float, ok: Callable[[float, float], bool] | None = None):
    passed = bool(np.isfinite(value) and (ok(value, threshold) if ok else value <= threshold))
    return PropertyRow(suite, name, float(value), float(threshold), passed)


def gradient_fd_error(op, u: np.ndarray, d: np.ndarray, rel_step: float = 1e-5) -> float:
    """Relative gap between <grad [u]^p, d> and a central difference of [u]^p."""
    eps = rel_step * max(1.0, float(np.max(np.abs(u))))
    fd = (seminorm(op, u + eps * d) - seminorm(op, u - eps * d)) / (2.0 * eps)
    exact = float(seminorm_gradient(op, u) @ d)
    return abs(fd - exact) / max(abs(exact), np.finfo(float).tiny)


def jacobian_fd_error(op, f: Nonlinearity, u: np.ndarray, lam: float, delta: float = 1e-6) -> float:
    """Worst column-wise relative gap between jacobian() and central differences of G."""
    J = jacobian(u, lam, op, f, fd_step=1e-7, epsilon_reg=0.0)
    N = u.size
    worst = 0.0
    for j in range(N + 1):
        if j < N:
            e = np.zeros(N)
            e[j] = delta
            col = (_residual(u + e, lam, op, f) - _residual(u - e, lam, op, f)) / (2 * delta)
        else:
            col = (_residual(u, lam + delta, op, f) - _residual(u, lam - delta, op, f)) / (2 * delta)
        worst = max(worst, float(np.max(np.abs(col - J[:, j])) / max(np.max(np.abs(J[:, j])), 1e-300)))
    return worst


def _kernel_rows(w: KernelWeights) -> list[PropertyRow]:
    W = w.interior
    N = w.grid.N
    off = ~np.eye(N, dtype=bool)
    first_row = W[0, 1:]
    return [
        _row("grid", "kernel_symmetry_max_abs", float(np.max(np.abs(W - W.T))), 0.0),
        _row("grid", "kernel_min_weight", float(min(W[off].min(), w.exterior.min())), 0.0, lambda v, t: v > t),
        _row("grid", "kernel_monotone_steps_violated", float(np.count_nonzero(np.diff(first_row) >= 0)), 0.0),
        _row("grid", "exterior_mirror_max_abs", float(np.max(np.abs(w.exterior - w.exterior[::-1]))), 1e-15 * w.exterior.max()),
    ]


def run_property_suite(
    grid: Grid1D,
    s: float,
    p: float,
    K: float,
    seed: int = 0,
    samples: int = 200,
    ineq_s: tuple = (0.3, 0.7),
    threads: int = 1,
    bbm_scale: float = 1.0,
) -> tuple[list[PropertyRow], object]:
    """All property checks for one mesh; returns rows and the inequality suite.

    ``bbm_scale`` multiplies the normalisation of nonlocal operators only and
    exists to exercise the harness (a wrong factor must be caught).
    """
    rng = np.random.default_rng(seed)
    s_nl = s if s < 1 else 0.5
    K_used = K * bbm_scale
    rows: list[PropertyRow] = []
    w = assemble_kernel(grid, s_nl, p, K_used, threads)
    rows += _kernel_rows(w)

    # energy
    u = rng.standard_normal(grid.N)
    E = seminorm(w, u)
    for c in (-2.0, 0.5):
        rows.append(_row("energy", f"homogeneity_c={c:g}", abs(seminorm(w, c * u) - abs(c) ** p * E) / E, 1e-12))
    v = rng.standard_normal(grid.N)
    mid = seminorm(w, 0.5 * (u + v))
    rows.append(_row("energy", "midpoint_convexity_excess", mid - 0.5 * (E + seminorm(w, v)), 0.0))
    for q in (1.5, 2.0, 3.0):
        wq = assemble_kernel(grid, s_nl, q, 1.0, threads)
        rows.append(_row("energy", f"gradient_fd_p={q:g}", gradient_fd_error(wq, u, v), 1e-6))

    # BBM normalisation: K (1-s) [u]^p against the local energy near s = 1
    z = (grid.cell_centers - grid.a) / grid.length
    probe = DiscreteFunction(grid, np.sin(np.pi * z))
    w_near = assemble_kernel(grid, 0.999, p, K_used, threads)
    target = local_energy(probe, p)
    rows.append(_row("energy", "bbm_consistency_s=0.999", abs(w_near.bbm_factor * seminorm(w_near, probe.values) - target) / target, 1e-2))
    est = estimate_bbm_constant(p, grid=grid)
    rows.append(_row("energy", "bbm_estimate_vs_p/2", abs(est.value - p / 2.0) / (p / 2.0), 1e-3))

    # eigen: positivity and continuity up to the local operator
    hw = WeightFunction.constant(grid)
    op = make_operator(grid, s_nl, p, K_used, threads)
    pair = first_eigenpair(op, hw)
    rows.append(_row("eigen", "first_eigenfunction_one_signed", float(positivity_check(pair.u)), 1.0, lambda v, t: v >= t))
    lam_near = first_eigenpair(make_operator(grid, 0.99, p, K_used, threads), hw).lam
    lam_loc = first_eigenpair(make_operator(grid, 1.0, p), hw).lam
    rows.append(_row("eigen", "lambda1_s=0.99_vs_local_rel", abs(lam_near - lam_loc) / lam_loc, 0.05))

    # bifurcation: trivial line, Jacobian, index values at p = 2
    cubic = Nonlinearity.cubic()
    rows.append(_row("bifurcation", "trivial_line_residual", float(np.max(np.abs(_residual(np.zeros(grid.N), 3.7, w, cubic)))), 0.0))
    for q in (1.5, 2.0, 3.0):
        wq = assemble_kernel(grid, s_nl, q, K_used, threads)
        rows.append(_row("bifurcation", f"jacobian_fd_p={q:g}", jacobian_fd_error(wq, cubic, 0.3 * u, 5.0), 1e-5))
    w2 = make_operator(grid, s_nl, 2.0, K_used, threads)
    spec = full_spectrum_p2(w2, hw, 3)
    l1, l2 = spec.eigenvalues[:2]
    rows.append(_row("bifurcation", "index_below_lambda1", leray_schauder_index_p2(0.5 * l1, spec), 1, lambda v, t: v == t))
    rows.append(_row("bifurcation", "index_between_lambda1_lambda2", leray_schauder_index_p2(0.5 * (l1 + l2), spec), -1, lambda v, t: v == t))

    ineq = inequality_suite(grid, ineq_s[0], ineq_s[1], p, samples=samples, seed=seed, threads=threads)
    for name in ASSERTED:
        rows.append(_row("inequalities", f"{name}_violations", ineq.violations(name), 0))
    return rows, ineq
