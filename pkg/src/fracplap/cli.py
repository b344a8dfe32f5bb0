"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 property
violation.  Every run writes ``manifest.json`` next to its CSV outputs.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time
from importlib import metadata
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .application import (
    CrossingError,
    ExistenceNotDemonstrated,
    solve_crossing,
    validate_crossing,
)
from .bifurcation import (
    Branch,
    Nonlinearity,
    branch_sign_scan,
    continue_branch,
    extrapolate_intercept,
)
from .checks import run_property_suite
from .config import ConfigError, RunConfig, load_config
from .dirichlet import ConvergenceError, dirichlet_residual, solve_dirichlet
from .eigen import (
    SolverFault,
    UnsupportedOperation,
    WeightFunction,
    first_eigenpair,
    full_spectrum_p2,
    lambda1_curve,
    positivity_check,
)
from .energy import estimate_bbm_constant, make_operator
from .expr import ExprError, compile_function
from .grid import DiscreteFunction, DomainError, build_grid
from .inequalities import write_inequality_csv

log = logging.getLogger("fracplap")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PROPERTY = 0, 2, 3, 4


class PropertyViolation(RuntimeError):
    pass


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


class Run:
    """Output directory, written files and summary of one invocation."""

    def __init__(self, cfg: RunConfig, args: argparse.Namespace):
        self.cfg = cfg
        self.args = args
        self.out = Path(args.out or cfg.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []
        self.summary: dict = {}
        self.threads = max(1, int(args.threads))
        self.grid = build_grid(cfg.a, cfg.b, cfg.N)
        self._K: dict = {}

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        path = self.out / name
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(header)
            for row in rows:
                out.writerow([fmt(v) for v in row])
        self.files.append(path)
        return path

    def K(self, p: float) -> float:
        if self.cfg.K is not None:
            return self.cfg.K
        if p not in self._K:
            self._K[p] = estimate_bbm_constant(p, grid=self.grid).value
            self.summary.setdefault("K_estimated", {})[fmt(p)] = self._K[p]
        return self._K[p]

    def operator(self, s: float, p: float | None = None):
        p = self.cfg.p if p is None else p
        return make_operator(self.grid, s, p, self.K(p) * self.args.bbm_scale, self.threads)

    def cell_function(self, src: str) -> DiscreteFunction:
        x = self.grid.cell_centers
        return DiscreteFunction(self.grid, compile_function(src)(x, x))

    def weight(self) -> WeightFunction:
        try:
            return WeightFunction(self.cell_function(self.cfg.h))
        except DomainError as exc:
            raise ConfigError(f"weight h: {exc}") from exc


def _function_rows(u: DiscreteFunction):
    return ((i, x, v) for i, (x, v) in enumerate(zip(u.grid.cell_centers, u.values)))


def _write_branch(run: Run, branch: Branch, stem: str = "branch") -> None:
    run.write_csv(
        f"{stem}.csv",
        ["step", "lambda", "amplitude", "residual", "sign_class"],
        ((pt.step, pt.lam, pt.amplitude, pt.residual, pt.sign_class) for pt in branch.points),
    )
    run.write_csv(
        f"{stem}_u.csv",
        ["step"] + [f"u_{i}" for i in range(run.grid.N)],
        ([pt.step, *pt.u.values] for pt in branch.points),
    )


def cmd_assemble(run: Run) -> None:
    from .oracles import quad_kernel

    rows = []
    worst = 0.0
    for s in run.cfg.s:
        if s == 1:
            log.info("s = 1 uses the local operator; no kernel to assemble")
            continue
        w = run.operator(s)
        W = w.interior
        off = ~np.eye(run.grid.N, dtype=bool)
        err = None
        if run.args.verify:
            I, E = quad_kernel(run.grid, s, run.cfg.p)
            err = float(max(np.max(np.abs(W[off] / I[off] - 1)), np.max(np.abs(w.exterior / E - 1))))
            worst = max(worst, err)
        rows.append(
            (
                s, run.cfg.p, run.grid.N, w.bbm_factor, W[off].min(), W[off].max(),
                w.exterior.min(), w.exterior.max(), bool(np.array_equal(W, W.T)), err,
            )
        )
    run.write_csv(
        "kernel.csv",
        ["s", "p", "N", "bbm_factor", "interior_min", "interior_max", "exterior_min", "exterior_max", "symmetric", "oracle_max_rel_error"],
        rows,
    )
    if run.args.verify and worst > 1e-9:
        raise PropertyViolation(f"kernel differs from quadrature oracle by {worst:.3g}")


def cmd_dirichlet(run: Run) -> None:
    cfg = run.cfg
    w = run.operator(cfg.s_single)
    rhs = run.cell_function(cfg.rhs)
    u = solve_dirichlet(w, rhs, cfg.solver)
    res = dirichlet_residual(w, rhs, u)
    err = None
    if run.args.verify and cfg.p == 2:
        from .oracles import direct_dirichlet_p2

        ref = direct_dirichlet_p2(w, rhs)
        err = float(np.max(np.abs(u.values - ref)) / max(np.max(np.abs(ref)), 1e-300))
    run.write_csv("dirichlet.csv", ["cell", "x", "u"], _function_rows(u))
    run.write_csv(
        "dirichlet_summary.csv",
        ["s", "p", "N", "K", "residual", "max_abs_u", "oracle_rel_error"],
        [(cfg.s_single, cfg.p, cfg.N, run.K(cfg.p), res, float(np.max(np.abs(u.values))), err)],
    )
    run.summary.update(residual=res, oracle_rel_error=err)
    if err is not None and err > 1e-8:
        raise PropertyViolation(f"Dirichlet solution differs from direct solve by {err:.3g}")


def cmd_eigen(run: Run) -> None:
    cfg = run.cfg
    w = run.operator(cfg.s_single)
    h = run.weight()
    pair = first_eigenpair(w, h, cfg.solver)
    ref = err = None
    if run.args.verify and cfg.p == 2:
        from .oracles import dense_first_eigenvalue

        ref = dense_first_eigenvalue(w, h)
        err = abs(pair.lam - ref) / abs(ref)
    positive = positivity_check(pair.u)
    run.write_csv(
        "eigen.csv",
        ["s", "p", "N", "K", "lambda1", "residual", "iterations", "positive", "oracle_lambda1", "oracle_rel_error"],
        [(cfg.s_single, cfg.p, cfg.N, run.K(cfg.p), pair.lam, pair.residual, pair.iterations, positive, ref, err)],
    )
    run.write_csv("eigenfunction.csv", ["cell", "x", "u"], _function_rows(pair.u))
    if run.args.full_spectrum:
        if cfg.p != 2:
            raise ConfigError("--full-spectrum requires p = 2")
        spec = full_spectrum_p2(w, h, min(cfg.spectrum_count, cfg.N))
        run.write_csv("spectrum.csv", ["k", "lambda"], ((k + 1, lam) for k, lam in enumerate(spec.eigenvalues)))
    run.summary.update(lambda1=pair.lam, residual=pair.residual, oracle_rel_error=err)
    if err is not None and err > 1e-8:
        raise PropertyViolation(f"lambda1 differs from dense eigensolve by {err:.3g}")
    if not positive:
        raise PropertyViolation("first eigenfunction changes sign")


def cmd_sweep(run: Run) -> None:
    cfg = run.cfg
    s_values = sorted(set(cfg.s) | {1.0})
    curve = lambda1_curve(s_values, cfg.p, run.weight(), run.grid, run.K(cfg.p) * run.args.bbm_scale, cfg.solver, run.threads)
    run.write_csv(
        "sweep.csv",
        ["s", "lambda1", "residual", "iterations", "lambda2", "gap", "error"],
        ((c.s, c.lambda1, c.residual, c.iterations, c.lambda2, c.gap, c.error or "") for c in curve),
    )
    failed = [c.s for c in curve if c.error]
    if failed:
        raise ConvergenceError(f"lambda1 failed at s={failed}", None, float("nan"), 0)


def cmd_branch(run: Run) -> None:
    cfg = run.cfg
    w = run.operator(cfg.s_single)
    try:
        f = Nonlinearity.from_expression(cfg.f).validate(cfg.p)
    except (DomainError, ExprError) as exc:
        raise ConfigError(f"f: {exc}") from exc
    branch = continue_branch(w, f, cfg.direction, cfg.continuation)
    _write_branch(run, branch)
    scan = branch_sign_scan(branch)
    try:
        intercept = extrapolate_intercept(branch)
    except DomainError:
        intercept = None
    run.write_csv(
        "branch_summary.csv",
        ["s", "p", "N", "direction", "termination", "points", "lambda1", "intercept", "sign_violations"],
        [(cfg.s_single, cfg.p, cfg.N, cfg.direction, branch.termination, len(branch.points), branch.start[0], intercept, len(scan.violations))],
    )
    run.summary.update(termination=branch.termination, points=len(branch.points), intercept=intercept)
    if not scan.ok:
        raise PropertyViolation(f"sign-changing branch point at index {scan.first_violation}")
    if branch.termination == "newton_failure":
        raise ConvergenceError("continuation corrector failed", None, float("nan"), len(branch.points))


def cmd_apply(run: Run) -> None:
    cfg = run.cfg
    w = run.operator(cfg.s_single)
    pair = first_eigenpair(w, WeightFunction.constant(run.grid), cfg.solver)
    try:
        g = validate_crossing(cfg.g, cfg.p, pair.lam, T=cfg.probe_T)
    except (CrossingError, ExprError) as exc:
        raise ConfigError(f"g: {exc}") from exc
    try:
        sol = solve_crossing(g, w, cfg.continuation, cfg.direction, pair)
    except ExistenceNotDemonstrated as exc:
        _write_branch(run, exc.branch)
        raise
    _write_branch(run, sol.branch)
    run.write_csv("solution.csv", ["cell", "x", "u"], _function_rows(sol.u))
    run.write_csv(
        "apply_summary.csv",
        ["s", "p", "N", "lambda_under", "lambda_over_probe", "bound", "lambda1", "residual", "lambda_max", "flags"],
        [(cfg.s_single, cfg.p, cfg.N, g.lambda_under, g.lambda_over_probe, g.bound, pair.lam, sol.residual, sol.lambda_max, "; ".join(sol.flags))],
    )
    run.summary.update(lambda_under=g.lambda_under, lambda_over_probe=g.lambda_over_probe, lambda1=pair.lam, residual=sol.residual)


def cmd_check(run: Run) -> None:
    cfg = run.cfg
    rows, ineq = run_property_suite(
        run.grid, cfg.s_single, cfg.p, run.K(cfg.p), cfg.seed, cfg.samples,
        (cfg.ineq_s, cfg.ineq_s_prime), run.threads, run.args.bbm_scale,
    )
    run.write_csv("check.csv", ["suite", "property", "value", "threshold", "pass"], ((r.suite, r.name, r.value, r.threshold, r.passed) for r in rows))
    path = run.out / "inequalities.csv"
    write_inequality_csv(path, ineq.rows)
    run.files.append(path)
    failed = [r.name for r in rows if not r.passed]
    run.summary.update(properties=len(rows), failed=failed, constants=ineq.constants)
    if failed:
        raise PropertyViolation(f"property violations: {', '.join(failed)}")


HANDLERS = {
    "assemble": cmd_assemble,
    "dirichlet": cmd_dirichlet,
    "eigen": cmd_eigen,
    "sweep-s": cmd_sweep,
    "branch": cmd_branch,
    "apply": cmd_apply,
    "check": cmd_check,
}


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "mpmath"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def _jsonable(v):
    # strict JSON has no inf/nan; spell them as strings
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (float, np.floating)) and not np.isfinite(v):
        return str(float(v))
    if isinstance(v, np.generic):
        return v.item()
    return v


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(run: Run, command: str, status: int, message: str, elapsed: float) -> None:
    manifest = {
        "command": command,
        "exit_code": status,
        "message": message,
        "config": run.cfg.echo(),
        "flags": {"verify": run.args.verify, "threads": run.threads, "full_spectrum": getattr(run.args, "full_spectrum", False)},
        "versions": _versions(),
        "timings": {"total_seconds": elapsed},
        "summary": run.summary,
        "outputs": [{"file": p.name, "sha256": _sha256(p), "bytes": p.stat().st_size} for p in run.files],
    }
    path = run.out / "manifest.json"
    path.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True, allow_nan=False) + "\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI-style run configuration")
    common.add_argument("--verify", action="store_true", help="cross-check against independent oracles")
    common.add_argument("--threads", type=int, default=1, metavar="K", help="worker threads (output is identical for any K)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides [run] output_dir)")
    common.add_argument("-v", "--verbose", action="store_true")
    # harness self-test: scale the nonlocal normalisation to provoke a property failure
    common.add_argument("--inject-bbm-scale", dest="bbm_scale", type=float, default=1.0, help=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="fracplap", description="Fractional p-Laplacian experiments on an interval.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("assemble", parents=[common], help="kernel statistics")
    sub.add_parser("dirichlet", parents=[common], help="solve L u = rhs")
    eig = sub.add_parser("eigen", parents=[common], help="first eigenpair")
    eig.add_argument("--full-spectrum", action="store_true", help="also write the p = 2 spectrum")
    sub.add_parser("sweep-s", parents=[common], help="lambda_1 over the configured s values and s = 1")
    sub.add_parser("branch", parents=[common], help="bifurcation branch from (lambda_1, 0)")
    sub.add_parser("apply", parents=[common], help="constant-sign solution of L u = g(u)")
    sub.add_parser("check", parents=[common], help="property and inequality suites")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config)
        run = Run(cfg, args)
    except (ConfigError, DomainError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    status, message = EXIT_OK, "ok"
    try:
        HANDLERS[args.command](run)
    except (ConfigError, DomainError, UnsupportedOperation, ExprError) as exc:
        status, message = EXIT_CONFIG, f"config error: {exc}"
    except (ConvergenceError, SolverFault, ExistenceNotDemonstrated) as exc:
        status, message = EXIT_SOLVER, f"solver failure: {exc}"
    except PropertyViolation as exc:
        status, message = EXIT_PROPERTY, f"property violation: {exc}"
    elapsed = time.perf_counter() - t0
    _write_manifest(run, args.command, status, message, elapsed)
    if status:
        log.error(message)
    for key, val in run.summary.items():
        print(f"{key} = {fmt(val) if not isinstance(val, (list, dict)) else json.dumps(val, default=fmt)}")
    print(f"outputs written to {os.fspath(run.out)}")
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
