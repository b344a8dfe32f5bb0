"""Run configuration: INI-style sections with ``key = value`` lines.

Example::

    [domain]
    a = 0
    b = 1
    N = 64

    [problem]
    s = 0.3, 0.5, 1.0
    p = 2
    K = auto
    h = "1"
    f = "-t^3"
    g = "psi(t, 2)*(2 + 28*t^2/(1 + t^2))"

    [solver]
    grad_tol = 1e-11

    [continuation]
    ds = 0.05
    direction = 1

    [run]
    seed = 0
    output_dir = out
"""
from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from typing import Any

from .bifurcation import ContinuationOptions
from .dirichlet import SolverOptions
from .expr import ExprError, parse_scalar_function
from .grid import DomainError

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    pass


def _unquote(v: str) -> str:
    v = v.strip()
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "\"'":
        return v[1:-1]
    return v


@dataclass(frozen=True)
class RunConfig:
    a: float = 0.0
    b: float = 1.0
    N: int = 64
    s: tuple = (0.5,)
    p: float = 2.0
    K: float | None = None  # None: estimate from the mesh
    h: str = "1"
    rhs: str = "1"
    f: str = "-t^3"
    g: str = "psi(t, 2)*(2 + 28*t^2/(1 + t^2))"
    probe_T: float = 1e3
    solver: SolverOptions = field(default_factory=SolverOptions)
    continuation: ContinuationOptions = field(default_factory=ContinuationOptions)
    direction: int = 1
    spectrum_count: int = 10
    seed: int = 0
    samples: int = 200
    ineq_s: float = 0.3
    ineq_s_prime: float = 0.7
    output_dir: str = "out"

    @property
    def s_single(self) -> float:
        return self.s[0]

    def echo(self) -> dict:
        out = dataclasses.asdict(self)
        out["s"] = list(self.s)
        return out


_DOMAIN = {"a": float, "b": float, "n": int}
_PROBLEM = {"s": "s", "p": float, "k": "K", "h": str, "rhs": str, "f": str, "g": str, "probe_t": float}
_RUN = {"seed": int, "samples": int, "ineq_s": float, "ineq_s_prime": float, "output_dir": str, "spectrum_count": int}


def _convert(kind, raw: str, key: str) -> Any:
    try:
        if kind is str:
            return _unquote(raw)
        if kind is int:
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


def _options(cls, section: dict, extra: tuple = ()) -> tuple[Any, dict]:
    fields = {f.name: f.type for f in dataclasses.fields(cls)}
    kwargs, rest = {}, {}
    for key, raw in section.items():
        if key in extra:
            rest[key] = raw
            continue
        if key not in fields:
            raise ConfigError(f"unknown option {key!r} for {cls.__name__}")
        default = getattr(cls(), key)
        kind = type(default) if not isinstance(default, bool) else bool
        kwargs[key] = _convert(str if kind is str else (int if kind is int else float), raw, key)
    try:
        return cls(**kwargs), rest
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str.lower
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    known = {"domain", "problem", "solver", "continuation", "run"}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    kw: dict = {}
    sec = dict(parser["domain"]) if parser.has_section("domain") else {}
    for key, raw in sec.items():
        if key not in _DOMAIN:
            raise ConfigError(f"unknown option {key!r} in [domain]")
        kw["N" if key == "n" else key] = _convert(_DOMAIN[key], raw, key)
    sec = dict(parser["problem"]) if parser.has_section("problem") else {}
    for key, raw in sec.items():
        if key not in _PROBLEM:
            raise ConfigError(f"unknown option {key!r} in [problem]")
        if key == "s":
            try:
                kw["s"] = tuple(float(v) for v in _unquote(raw).split(",") if v.strip())
            except ValueError as exc:
                raise ConfigError(f"bad s list {raw!r}") from exc
        elif key == "k":
            v = _unquote(raw).lower()
            kw["K"] = None if v == "auto" else _convert(float, v, "K")
        else:
            kw["probe_T" if key == "probe_t" else key] = _convert(_PROBLEM[key], raw, key)
    sec = dict(parser["run"]) if parser.has_section("run") else {}
    for key, raw in sec.items():
        if key not in _RUN:
            raise ConfigError(f"unknown option {key!r} in [run]")
        kw[key] = _convert(_RUN[key], raw, key)
    if parser.has_section("solver"):
        kw["solver"], _ = _options(SolverOptions, dict(parser["solver"]))
    if parser.has_section("continuation"):
        cont, rest = _options(ContinuationOptions, dict(parser["continuation"]), extra=("direction",))
        kw["continuation"] = cont
        if "direction" in rest:
            kw["direction"] = _convert(int, rest["direction"], "direction")
    cfg = RunConfig(**kw)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if not cfg.a < cfg.b:
        raise ConfigError("need a < b")
    if cfg.N < 2:
        raise ConfigError("need N >= 2")
    if not cfg.s or any(not 0 < s <= 1 for s in cfg.s):
        raise ConfigError("every s must lie in (0, 1]")
    if not cfg.p > 1:
        raise ConfigError("need p > 1")
    if cfg.K is not None and not cfg.K > 0:
        raise ConfigError("K must be positive or 'auto'")
    if cfg.direction not in (1, -1):
        raise ConfigError("direction must be 1 or -1")
    if not 0 < cfg.ineq_s < cfg.ineq_s_prime < 1:
        raise ConfigError("need 0 < ineq_s < ineq_s_prime < 1")
    if cfg.samples < 1 or cfg.spectrum_count < 2:
        raise ConfigError("samples >= 1 and spectrum_count >= 2 required")
    for key in ("h", "rhs", "f", "g"):
        src = getattr(cfg, key)
        try:
            parse_scalar_function(src)
        except ExprError as exc:
            raise ConfigError(f"{key}: {exc}") from exc


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text)
