"""Arithmetic expressions used to define problem data.

Problem files describe dynamics, jump maps and costs as plain text
expressions over a declared set of variables (``t``, ``x1..xm``,
``tau1..taup``, ``xi1..xiq``).  This module parses that text into an
immutable AST and evaluates it, either on scalars or elementwise on
numpy arrays.

Grammar (precedence climbing, loosest to tightest):

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | power
    power  := atom ('^' factor)?          # right associative, binds
                                          # tighter than unary minus
    atom   := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')'
            | '(' expr ')'

Numeric literals are decimal with an optional fraction and exponent.
Builtin calls are ``abs``, ``exp``, ``sqrt``, ``sin``, ``cos`` (one
argument) and ``min``, ``max`` (two arguments).  Division by zero and
roots of negative numbers raise an error rather than producing NaN.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ExprError",
    "ExprSyntaxError",
    "ExprNameError",
    "ExprEvalError",
    "ExprAst",
    "Const",
    "Var",
    "Neg",
    "Bin",
    "Call",
    "parse",
    "evaluate",
    "evaluate_array",
    "free_vars",
]

UNARY_BUILTINS = ("abs", "exp", "sqrt", "sin", "cos")
BINARY_BUILTINS = ("min", "max")
BUILTINS = UNARY_BUILTINS + BINARY_BUILTINS


class ExprError(Exception):
    """Base class for expression errors; ``offset`` is a byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class ExprSyntaxError(ExprError):
    pass


class ExprNameError(ExprError):
    """Identifier outside the declared variable set."""

    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier '{name}'", offset)
        self.name = name


class ExprEvalError(ExprError):
    """Domain error (division by zero, sqrt of a negative) or unbound variable."""


@dataclass(frozen=True)
class ExprAst:
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Const(ExprAst):
    value: float = 0.0

    def __str__(self) -> str:
        return repr(self.value)


@dataclass(frozen=True)
class Var(ExprAst):
    name: str = ""

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Neg(ExprAst):
    child: ExprAst = None  # type: ignore[assignment]

    def __str__(self) -> str:
        return f"-({self.child})"


@dataclass(frozen=True)
class Bin(ExprAst):
    op: str = "+"
    lhs: ExprAst = None  # type: ignore[assignment]
    rhs: ExprAst = None  # type: ignore[assignment]

    def __str__(self) -> str:
        return f"({self.lhs} {self.op} {self.rhs})"


@dataclass(frozen=True)
class Call(ExprAst):
    fn: str = ""
    args: tuple[ExprAst, ...] = ()

    def __str__(self) -> str:
        return f"{self.fn}({', '.join(str(a) for a in self.args)})"


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            stripped = source[pos:].lstrip()
            if not stripped:
                break
            raise ExprSyntaxError(
                f"unexpected character {stripped[0]!r}", len(source) - len(stripped)
            )
        kind = m.lastgroup
        text = m.group(kind)
        tokens.append((kind, text, m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


_ADD_BP = 10
_MUL_BP = 20
_NEG_BP = 25
_POW_BP = 30


class _Parser:
    def __init__(self, source: str, allowed_vars: frozenset[str]):
        self.source = source
        self.allowed = allowed_vars
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> tuple[str, str, int]:
        kind, got, off = self.peek()
        if got != text:
            shown = got if kind != "end" else "end of input"
            raise ExprSyntaxError(f"expected {text!r}, found {shown}", off)
        return self.advance()

    def parse_expr(self, min_bp: int) -> ExprAst:
        node = self.parse_prefix()
        while True:
            kind, text, off = self.peek()
            if kind != "op" or text not in "+-*/^":
                break
            lbp = {"+": _ADD_BP, "-": _ADD_BP, "*": _MUL_BP, "/": _MUL_BP, "^": _POW_BP}[text]
            if lbp < min_bp:
                break
            self.advance()
            # '^' is right associative: allow equal binding power on the right
            rbp = lbp if text == "^" else lbp + 1
            rhs = self.parse_expr(rbp)
            node = Bin(offset=off, op=text, lhs=node, rhs=rhs)
        return node

    def parse_prefix(self) -> ExprAst:
        kind, text, off = self.peek()
        if kind == "num":
            self.advance()
            return Const(offset=off, value=float(text))
        if kind == "ident":
            self.advance()
            nxt_kind, nxt_text, _ = self.peek()
            if nxt_kind == "op" and nxt_text == "(":
                return self.parse_call(text, off)
            if text not in self.allowed:
                raise ExprNameError(text, off)
            return Var(offset=off, name=text)
        if kind == "op" and text == "-":
            self.advance()
            child = self.parse_expr(_NEG_BP)
            return Neg(offset=off, child=child)
        if kind == "op" and text == "(":
            self.advance()
            node = self.parse_expr(0)
            self.expect(")")
            return node
        shown = text if kind != "end" else "end of input"
        raise ExprSyntaxError(f"expected a value, found {shown!r}", off)

    def parse_call(self, fn: str, off: int) -> ExprAst:
        if fn not in BUILTINS:
            raise ExprNameError(fn, off)
        self.expect("(")
        args = [self.parse_expr(0)]
        while self.peek()[1] == ",":
            self.advance()
            args.append(self.parse_expr(0))
        self.expect(")")
        want = 2 if fn in BINARY_BUILTINS else 1
        if len(args) != want:
            raise ExprSyntaxError(
                f"{fn}() takes exactly {want} argument{'s' if want > 1 else ''},"
                f" got {len(args)}",
                off,
            )
        return Call(offset=off, fn=fn, args=tuple(args))


def parse(source: str, allowed_vars) -> ExprAst:
    """Parse ``source`` into an AST; identifiers must be in ``allowed_vars``."""
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 0)
    parser = _Parser(source, frozenset(allowed_vars))
    node = parser.parse_expr(0)
    kind, text, off = parser.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected trailing input {text!r}", off)
    return node


def free_vars(ast: ExprAst) -> frozenset[str]:
    """Exact set of variable names appearing in the tree."""
    out: set[str] = set()
    stack = [ast]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, Neg):
            stack.append(node.child)
        elif isinstance(node, Bin):
            stack.append(node.lhs)
            stack.append(node.rhs)
        elif isinstance(node, Call):
            stack.extend(node.args)
    return frozenset(out)


def evaluate_array(ast: ExprAst, env: dict) -> np.ndarray:
    """Evaluate elementwise over numpy arrays (scalars broadcast).

    Every free variable must be bound in ``env``.  Domain violations
    raise :class:`ExprEvalError` carrying the offending node's offset.
    """
    if isinstance(ast, Const):
        return np.float64(ast.value)
    if isinstance(ast, Var):
        try:
            return np.asarray(env[ast.name], dtype=np.float64)
        except KeyError:
            raise ExprEvalError(f"unbound variable '{ast.name}'", ast.offset) from None
    if isinstance(ast, Neg):
        return -evaluate_array(ast.child, env)
    if isinstance(ast, Bin):
        lhs = evaluate_array(ast.lhs, env)
        rhs = evaluate_array(ast.rhs, env)
        if ast.op == "+":
            return lhs + rhs
        if ast.op == "-":
            return lhs - rhs
        if ast.op == "*":
            return lhs * rhs
        if ast.op == "/":
            if np.any(rhs == 0.0):
                raise ExprEvalError("division by zero", ast.offset)
            return lhs / rhs
        # power: reject negative base with fractional exponent and 0^negative
        if np.any((lhs < 0.0) & (rhs != np.floor(rhs))):
            raise ExprEvalError("fractional power of a negative number", ast.offset)
        if np.any((lhs == 0.0) & (rhs < 0.0)):
            raise ExprEvalError("zero raised to a negative power", ast.offset)
        with np.errstate(over="ignore"):
            # overflow to inf is caught downstream by finiteness checks
            return np.power(lhs, rhs)
    if isinstance(ast, Call):
        args = [evaluate_array(a, env) for a in ast.args]
        if ast.fn == "abs":
            return np.abs(args[0])
        if ast.fn == "exp":
            with np.errstate(over="ignore"):
                return np.exp(args[0])
        if ast.fn == "sqrt":
            if np.any(args[0] < 0.0):
                raise ExprEvalError("sqrt of a negative number", ast.offset)
            return np.sqrt(args[0])
        if ast.fn == "sin":
            return np.sin(args[0])
        if ast.fn == "cos":
            return np.cos(args[0])
        if ast.fn == "min":
            return np.minimum(args[0], args[1])
        return np.maximum(args[0], args[1])
    raise TypeError(f"not an expression node: {ast!r}")


def evaluate(ast: ExprAst, env: dict) -> float:
    """Evaluate to a single float under a scalar binding."""
    return float(evaluate_array(ast, env))
