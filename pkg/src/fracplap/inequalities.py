"""Functional inequalities for the discrete seminorm, checked on random samples.

Four inequalities are tested, each written as ``lhs <= rhs``:

``poincare``
    ||u||_p^p <= s p |Omega|^{sp} / (2 omega^{sp+1}) [u]_s^p with omega = 2,
    the measure of the unit sphere of R read as {-1, +1}.  The reading
    omega = 2 pi is reported as ``poincare_alt`` for comparison only.
``diameter_scaling``
    (1-s) [u]_{s,Omega}^p <= 2^{(1-s)p} diam^{(s'-s)p} (1-s') [u]_{s'}^p,
    interior part on the left, full seminorm on the right.
``s_monotonicity``
    [u]_s^p <= [u]_{s'}^p + C (1/(sp) - 1/(s'p)) ||u||_p^p.
``fractional_sobolev``
    ||u||_{p*}^p <= C s(1-s) / (1-sp)^{p-1} [u]_s^p, only when sp < 1.

The last two carry an unknown constant C(p); it is calibrated on a training
sample (random functions plus a few fixed smooth bumps, where the ratios
peak) and asserted, inflated by 1.5, on a disjoint test sample.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .energy import seminorm, sobolev_exponents
from .grid import DiscreteFunction, DomainError, Grid1D, KernelWeights

__all__ = [
    "OMEGA_1",
    "OMEGA_1_ALT",
    "InequalityRow",
    "InequalitySuite",
    "poincare_constant",
    "check_inequalities",
    "random_functions",
    "low_mode_probes",
    "calibrate_constants",
    "inequality_suite",
    "write_inequality_csv",
]

OMEGA_1 = 2.0
OMEGA_1_ALT = 2.0 * math.pi
ASSERTED = ("poincare", "diameter_scaling", "s_monotonicity", "fractional_sobolev")
_REL_TOL = 1e-12


@dataclass(frozen=True)
class InequalityRow:
    sample: int
    inequality: str
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.margin >= -_REL_TOL * max(abs(self.lhs), abs(self.rhs))


def poincare_constant(s: float, p: float, measure: float, omega: float = OMEGA_1) -> float:
    sp = s * p
    return sp * measure**sp / (2.0 * omega ** (sp + 1.0))


def _interior_part(w: KernelWeights, u: np.ndarray) -> float:
    d = np.abs(np.subtract.outer(u, u)) ** w.p
    return float(np.sum(w.interior * d))


def _lp_p(u: np.ndarray, grid: Grid1D, q: float) -> float:
    return grid.cell_measure * float(np.sum(np.abs(u) ** q))


def _terms(u: np.ndarray, w: KernelWeights, w_prime: KernelWeights) -> dict:
    s, sp_, p = w.s, w_prime.s, w.p
    grid = w.grid
    full_s, full_sp = seminorm(w, u), seminorm(w_prime, u)
    out = {
        "full_s": full_s,
        "full_sprime": full_sp,
        "interior_s": _interior_part(w, u),
        "lp": _lp_p(u, grid, p),
        "sp_gap": 1.0 / (s * p) - 1.0 / (sp_ * p),
    }
    exps = sobolev_exponents(s, p)
    if math.isfinite(exps.p_star):
        out["lpstar"] = _lp_p(u, grid, exps.p_star) ** (p / exps.p_star)
        out["sobolev_factor"] = s * (1.0 - s) / (1.0 - s * p) ** (p - 1.0)
    return out


def check_inequalities(
    u: DiscreteFunction,
    w: KernelWeights,
    w_prime: KernelWeights,
    constants: Mapping[str, float] | None = None,
    sample: int = 0,
) -> list[InequalityRow]:
    """Rows for one function; calibrated inequalities need ``constants``."""
    if not isinstance(w, KernelWeights) or not isinstance(w_prime, KernelWeights):
        raise DomainError("inequalities need nonlocal kernels (0 < s < 1)")
    if w.grid != w_prime.grid or u.grid != w.grid or w.p != w_prime.p:
        raise DomainError("u, w and w_prime must share grid and p")
    if not w.s < w_prime.s:
        raise DomainError("need s < s'")
    grid, s, sp_, p = w.grid, w.s, w_prime.s, w.p
    t = _terms(u.values, w, w_prime)
    rows = [
        InequalityRow(sample, "poincare", t["lp"], poincare_constant(s, p, grid.length) * t["full_s"]),
        InequalityRow(sample, "poincare_alt", t["lp"], poincare_constant(s, p, grid.length, OMEGA_1_ALT) * t["full_s"]),
        InequalityRow(
            sample,
            "diameter_scaling",
            (1.0 - s) * t["interior_s"],
            2.0 ** ((1.0 - s) * p) * grid.length ** ((sp_ - s) * p) * (1.0 - sp_) * t["full_sprime"],
        ),
    ]
    constants = constants or {}
    if "s_monotonicity" in constants:
        C = constants["s_monotonicity"]
        rows.append(InequalityRow(sample, "s_monotonicity", t["full_s"], t["full_sprime"] + C * t["sp_gap"] * t["lp"]))
    if "fractional_sobolev" in constants and "lpstar" in t:
        C = constants["fractional_sobolev"]
        rows.append(InequalityRow(sample, "fractional_sobolev", t["lpstar"], C * t["sobolev_factor"] * t["full_s"]))
    return rows


def random_functions(grid: Grid1D, count: int, rng: np.random.Generator) -> list[DiscreteFunction]:
    """Alternating rough (white noise) and smooth (random sine series) samples."""
    z = (grid.cell_centers - grid.a) / grid.length
    modes = np.arange(1, 9)
    basis = np.sin(np.pi * np.outer(z, modes))
    out = []
    for i in range(count):
        if i % 2 == 0:
            v = rng.standard_normal(grid.N)
        else:
            v = basis @ (rng.standard_normal(modes.size) / modes)
        out.append(DiscreteFunction(grid, v * np.exp(rng.uniform(-2.0, 2.0))))
    return out


def low_mode_probes(grid: Grid1D) -> list[DiscreteFunction]:
    """Smooth one-bump shapes; the calibrated ratios peak near these."""
    z = (grid.cell_centers - grid.a) / grid.length
    bump = np.sin(np.pi * z)
    shapes = [bump**q for q in (0.25, 0.5, 1.0, 2.0)] + [np.ones(grid.N), np.sin(2 * np.pi * z)]
    return [DiscreteFunction(grid, v) for v in shapes]


def _inflate(c: float, factor: float = 1.5) -> float:
    # move a calibrated constant in the loose direction
    return c * factor if c >= 0 else c / factor


def calibrate_constants(samples: Sequence[DiscreteFunction], w: KernelWeights, w_prime: KernelWeights) -> dict:
    """Smallest constants making the calibrated inequalities hold on ``samples``, inflated by 1.5."""
    mono, sob = [], []
    for u in samples:
        if not np.any(u.values):
            continue
        t = _terms(u.values, w, w_prime)
        mono.append((t["full_s"] - t["full_sprime"]) / (t["sp_gap"] * t["lp"]))
        if "lpstar" in t:
            sob.append(t["lpstar"] / (t["sobolev_factor"] * t["full_s"]))
    out = {"s_monotonicity": _inflate(max(mono))}
    if sob:
        out["fractional_sobolev"] = _inflate(max(sob))
    return out


@dataclass(frozen=True)
class InequalitySuite:
    rows: tuple
    constants: dict

    def violations(self, name: str | None = None) -> int:
        names = ASSERTED if name is None else (name,)
        return sum(1 for r in self.rows if r.inequality in names and not r.passed)

    @property
    def ok(self) -> bool:
        return self.violations() == 0


def inequality_suite(
    grid: Grid1D,
    s: float,
    s_prime: float,
    p: float,
    samples: int = 200,
    seed: int = 0,
    threads: int = 1,
    bbm_constant: float = 1.0,
) -> InequalitySuite:
    from .grid import assemble_kernel

    w = assemble_kernel(grid, s, p, bbm_constant, threads)
    w_prime = assemble_kernel(grid, s_prime, p, bbm_constant, threads)
    rng = np.random.default_rng(seed)
    train = low_mode_probes(grid) + random_functions(grid, samples, rng)
    test = random_functions(grid, samples, rng)
    constants = calibrate_constants(train, w, w_prime)
    rows = []
    for k, u in enumerate(test):
        rows.extend(check_inequalities(u, w, w_prime, constants, sample=k))
    return InequalitySuite(tuple(rows), constants)


def write_inequality_csv(path, rows: Sequence[InequalityRow]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["sample", "inequality", "lhs", "rhs", "margin", "pass"])
        for r in rows:
            out.writerow([r.sample, r.inequality, f"{r.lhs:.17g}", f"{r.rhs:.17g}", f"{r.margin:.17g}", int(r.passed)])
