"""A tiny scalar expression language for user-supplied nonlinearities.

Grammar (``^`` is right-associative; unary minus binds tighter than ``^``)::

    expr    := term (('+' | '-') term)*
    term    := factor (('*' | '/') factor)*
    factor  := unary ('^' factor)?
    unary   := ('-')* primary
    primary := number | ident | ident '(' args ')' | '(' expr ')'

Variables are ``t``, ``x`` and ``lambda``.  Error positions are 1-based
columns; the end of input is reported at ``len(src) + 1``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

__all__ = [
    "ExprError",
    "ExprSyntaxError",
    "UnknownIdentifier",
    "ArityError",
    "EvaluationError",
    "Num",
    "Var",
    "Neg",
    "Call",
    "BinOp",
    "Node",
    "parse_scalar_function",
    "to_source",
    "evaluate",
    "compile_function",
    "VARIABLES",
    "FUNCTIONS",
]

VARIABLES = ("t", "x", "lambda")
FUNCTIONS = {
    "abs": 1,
    "sign": 1,
    "sin": 1,
    "cos": 1,
    "exp": 1,
    "log": 1,
    "sqrt": 1,
    "psi": 2,
}


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownIdentifier(ExprSyntaxError):
    pass


class ArityError(ExprSyntaxError):
    pass


class EvaluationError(ExprError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


Node = Union[Num, Var, Neg, Call, BinOp]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while True:
        while pos < len(src) and src[pos].isspace():
            pos += 1
        if pos >= len(src):
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", pos + 1)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start + 1))
        pos = m.end()
    tokens.append(("end", "", len(src) + 1))
    return tokens


class _Parser:
    def __init__(self, src: str):
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.take()
        if text != value or kind != "op":
            what = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {what}", pos)

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        base = self.unary()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return BinOp("^", base, self.factor())
        return base

    def unary(self) -> Node:
        count = 0
        while self.peek()[:2] == ("op", "-"):
            self.take()
            count += 1
        node = self.primary()
        for _ in range(count):
            node = Neg(node)
        return node

    def primary(self) -> Node:
        kind, text, pos = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            if self.peek()[:2] == ("op", "("):
                if text not in FUNCTIONS:
                    raise UnknownIdentifier(f"unknown function {text!r}", pos)
                self.take()
                args = [self.expr()]
                while self.peek()[:2] == ("op", ","):
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[text]:
                    raise ArityError(f"{text} takes {FUNCTIONS[text]} argument(s), got {len(args)}", pos)
                return Call(text, tuple(args))
            if text in FUNCTIONS:
                raise ArityError(f"function {text!r} needs arguments", pos)
            if text not in VARIABLES:
                raise UnknownIdentifier(f"unknown identifier {text!r}", pos)
            return Var(text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {what}", pos)


def parse_scalar_function(src: str) -> Node:
    if not isinstance(src, str) or not src.strip():
        raise ExprSyntaxError("empty expression", 1)
    parser = _Parser(src)
    node = parser.expr()
    kind, text, pos = parser.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected {text!r}", pos)
    return node


def _format_number(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


# precedence levels: sum 1, product 2, power 3, unary 4, atom 5
def _level(node: Node) -> int:
    if isinstance(node, BinOp):
        return {"+": 1, "-": 1, "*": 2, "/": 2, "^": 3}[node.op]
    if isinstance(node, Neg):
        return 4
    return 5


def to_source(node: Node) -> str:
    """Canonical text of an AST; ``parse_scalar_function(to_source(a)) == a``."""

    def wrap(child: Node, min_level: int) -> str:
        text = to_source(child)
        return f"({text})" if _level(child) < min_level else text

    if isinstance(node, Num):
        return _format_number(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    if isinstance(node, Neg):
        return "-" + wrap(node.operand, 4)
    if isinstance(node, BinOp):
        if node.op in "+-":
            return f"{wrap(node.left, 1)} {node.op} {wrap(node.right, 2)}"
        if node.op in "*/":
            return f"{wrap(node.left, 2)}{node.op}{wrap(node.right, 3)}"
        return f"{wrap(node.left, 4)}^{wrap(node.right, 3)}"
    raise TypeError(f"not an expression node: {node!r}")


def _psi(t, p):
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(p <= 1):
        raise EvaluationError("psi(t, p) needs p > 1")
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(t == 0, 0.0, np.sign(t) * np.abs(t) ** (p - 1.0))


def _checked(name: str, arg, ok) -> None:
    if not np.all(ok):
        raise EvaluationError(f"{name} outside its domain")


def evaluate(node: Node, env: Mapping[str, object]):
    """Evaluate with numpy broadcasting; domain violations raise EvaluationError."""
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Var):
        if node.name not in env:
            raise EvaluationError(f"variable {node.name!r} is not bound")
        return np.asarray(env[node.name], dtype=float)
    if isinstance(node, Neg):
        return -evaluate(node.operand, env)
    if isinstance(node, Call):
        args = [evaluate(a, env) for a in node.args]
        if node.name == "psi":
            return _psi(*args)
        (a,) = args
        if node.name == "log":
            _checked("log", a, a > 0)
            return np.log(a)
        if node.name == "sqrt":
            _checked("sqrt", a, a >= 0)
            return np.sqrt(a)
        with np.errstate(over="ignore"):
            return {"abs": np.abs, "sign": np.sign, "sin": np.sin, "cos": np.cos, "exp": np.exp}[node.name](a)
    if isinstance(node, BinOp):
        a = evaluate(node.left, env)
        b = evaluate(node.right, env)
        with np.errstate(all="ignore"):
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            if node.op == "/":
                _checked("division", b, b != 0)
                return a / b
            _checked("power", (a, b), ~((a == 0) & (b < 0)))
            out = np.power(a, b)
            _checked("power", (a, b), ~(np.isnan(out) & ~np.isnan(a) & ~np.isnan(b)))
            return out
    raise TypeError(f"not an expression node: {node!r}")


def compile_function(src_or_node, defaults: Mapping[str, float] | None = None):
    """Callable ``fn(t, x=0.0, lam=0.0)`` broadcasting over numpy arrays."""
    node = parse_scalar_function(src_or_node) if isinstance(src_or_node, str) else src_or_node
    base = dict(defaults or {})

    def fn(t, x=0.0, lam=0.0):
        env = {"t": t, "x": x, "lambda": lam, **base}
        t_arr = np.asarray(t, dtype=float)
        val = np.asarray(evaluate(node, env), dtype=float)
        return np.broadcast_to(val, np.broadcast(t_arr, np.asarray(x), val).shape).astype(float)

    fn.ast = node
    fn.source = to_source(node)
    return fn

