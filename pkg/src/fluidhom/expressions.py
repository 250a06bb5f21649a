"""Tiny analytic-expression language for scenario files.

Grammar (recursive descent, usual precedence):

    expr    :=  term (("+" | "-") term)*
    term    :=  unary (("*" | "/") unary)*
    unary   :=  ("+" | "-") unary | power
    power   :=  atom ("^" unary)?          # right associative
    atom    :=  NUMBER | NAME | NAME "(" expr ("," expr)* ")" | "(" expr ")"

Variables are t, x, y, z.  Functions: sin, cos, exp, sqrt, atan2.
Any other NAME must be bound as a named constant at evaluation time.
Expressions evaluate vectorized over numpy arrays and can be
differentiated symbolically with respect to a variable, which is how
scenario fields obtain analytic partial derivatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

VARIABLES = ("t", "x", "y", "z")
FUNCTIONS = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "exp": (1, np.exp),
    "sqrt": (1, np.sqrt),
    "atan2": (2, np.arctan2),
}


class ExpressionError(ValueError):
    """Raised for lexing, parsing, or evaluation problems."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at column {position + 1})"
        super().__init__(message)
        self.position = position


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Name:
    ident: str


@dataclass(frozen=True)
class Unary:
    op: str  # "-"
    arg: object


@dataclass(frozen=True)
class Binary:
    op: str  # + - * / ^
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 3}


def unparse(node) -> str:
    """Render an AST back to grammar-conforming source text."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Name):
        return node.ident
    if isinstance(node, Unary):
        inner = unparse(node.arg)
        if isinstance(node.arg, Binary):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(unparse(a) for a in node.args)})"
    if isinstance(node, Binary):
        lhs, rhs = unparse(node.left), unparse(node.right)
        prec = _PRECEDENCE[node.op]
        if isinstance(node.left, (Binary, Unary)):
            lp = _PRECEDENCE[node.left.op] if isinstance(node.left, Binary) else 0
            if lp < prec or (node.op == "^" and lp <= prec):
                lhs = f"({lhs})"
        if isinstance(node.right, (Binary, Unary)):
            rp = _PRECEDENCE[node.right.op] if isinstance(node.right, Binary) else 0
            # -, /, ^ do not associate with equal-precedence right children
            if rp < prec or (rp == prec and node.op in ("-", "/")):
                rhs = f"({rhs})"
        return f"{lhs} {node.op} {rhs}"
    raise TypeError(f"not an expression node: {node!r}")


def pretty(node, indent: str = "") -> str:
    """Indented tree rendering of an AST, one node per line."""
    if isinstance(node, Num):
        return f"{indent}num {node.value!r}"
    if isinstance(node, Name):
        return f"{indent}name {node.ident}"
    if isinstance(node, Unary):
        return f"{indent}neg\n" + pretty(node.arg, indent + "  ")
    if isinstance(node, Call):
        lines = [f"{indent}call {node.func}"]
        lines += [pretty(a, indent + "  ") for a in node.args]
        return "\n".join(lines)
    if isinstance(node, Binary):
        return "\n".join(
            [f"{indent}op {node.op}", pretty(node.left, indent + "  "),
             pretty(node.right, indent + "  ")]
        )
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------------------
# Lexer / parser
# ---------------------------------------------------------------------------

_OPS = set("+-*/^(),")


def _tokenize(text: str):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in _OPS:
            tokens.append((c, c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            try:
                value = float(text[i:j])
            except ValueError:
                raise ExpressionError(f"bad number {text[i:j]!r}", i) from None
            tokens.append(("num", value, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("name", text[i:j], i))
            i = j
            continue
        raise ExpressionError(f"unexpected character {c!r}", i)
    tokens.append(("end", None, n))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def take(self, kind=None):
        tok = self.tokens[self.pos]
        if kind is not None and tok[0] != kind:
            raise ExpressionError(f"expected {kind!r}, found {tok[1]!r}", tok[2])
        self.pos += 1
        return tok

    def parse_expr(self):
        node = self.parse_term()
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            node = Binary(op, node, self.parse_term())
        return node

    def parse_term(self):
        node = self.parse_unary()
        while self.peek()[0] in ("*", "/"):
            op = self.take()[0]
            node = Binary(op, node, self.parse_unary())
        return node

    def parse_unary(self):
        if self.peek()[0] == "-":
            self.take()
            return Unary("-", self.parse_unary())
        if self.peek()[0] == "+":
            self.take()
            return self.parse_unary()
        return self.parse_power()

    def parse_power(self):
        base = self.parse_atom()
        if self.peek()[0] == "^":
            self.take()
            return Binary("^", base, self.parse_unary())
        return base

    def parse_atom(self):
        kind, value, pos = self.peek()
        if kind == "num":
            self.take()
            return Num(float(value))
        if kind == "name":
            self.take()
            if self.peek()[0] == "(":
                self.take()
                args = [self.parse_expr()]
                while self.peek()[0] == ",":
                    self.take()
                    args.append(self.parse_expr())
                self.take(")")
                if value not in FUNCTIONS:
                    raise ExpressionError(f"unknown function {value!r}", pos)
                arity = FUNCTIONS[value][0]
                if len(args) != arity:
                    raise ExpressionError(
                        f"{value} takes {arity} argument(s), got {len(args)}", pos)
                return Call(value, tuple(args))
            return Name(value)
        if kind == "(":
            self.take()
            node = self.parse_expr()
            self.take(")")
            return node
        raise ExpressionError(f"unexpected token {value!r}", pos)


def parse(text: str):
    """Parse source text into an AST."""
    parser = _Parser(_tokenize(text))
    node = parser.parse_expr()
    parser.take("end")
    return node


# ---------------------------------------------------------------------------
# Evaluation and differentiation
# ---------------------------------------------------------------------------

_BUILTIN_CONSTANTS = {"pi": math.pi, "e": math.e}


def evaluate(node, env: dict):
    """Evaluate an AST in an environment mapping names to arrays/scalars.

    All numpy broadcasting applies; the caller binds t, x, y, z and any
    named constants.
    """
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Name):
        if node.ident in env:
            return env[node.ident]
        if node.ident in _BUILTIN_CONSTANTS:
            return _BUILTIN_CONSTANTS[node.ident]
        raise ExpressionError(f"unbound name {node.ident!r}")
    if isinstance(node, Unary):
        return -evaluate(node.arg, env)
    if isinstance(node, Call):
        fn = FUNCTIONS[node.func][1]
        return fn(*(evaluate(a, env) for a in node.args))
    if isinstance(node, Binary):
        a = evaluate(node.left, env)
        b = evaluate(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            return a / b
        if node.op == "^":
            return a ** b
    raise TypeError(f"not an expression node: {node!r}")


def _is_zero(node):
    return isinstance(node, Num) and node.value == 0.0


def _is_one(node):
    return isinstance(node, Num) and node.value == 1.0


def _add(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return Binary("+", a, b)


def _sub(a, b):
    if _is_zero(b):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if _is_zero(a):
        return Unary("-", b)
    return Binary("-", a, b)


def _mul(a, b):
    if _is_zero(a) or _is_zero(b):
        return Num(0.0)
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return Binary("*", a, b)


def _div(a, b):
    if _is_zero(a):
        return Num(0.0)
    if _is_one(b):
        return a
    return Binary("/", a, b)


def differentiate(node, var: str):
    """Symbolic derivative of an AST with respect to a variable name.

    Exponentiation is differentiated only for constant exponents, which
    covers the whole scenario grammar (there is no log).
    """
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Name):
        return Num(1.0) if node.ident == var else Num(0.0)
    if isinstance(node, Unary):
        d = differentiate(node.arg, var)
        return Num(0.0) if _is_zero(d) else Unary("-", d)
    if isinstance(node, Call):
        u = node.args[0]
        du = differentiate(u, var)
        if node.func == "sin":
            return _mul(Call("cos", (u,)), du)
        if node.func == "cos":
            return _mul(Unary("-", Call("sin", (u,))), du)
        if node.func == "exp":
            return _mul(node, du)
        if node.func == "sqrt":
            return _div(du, _mul(Num(2.0), node))
        if node.func == "atan2":
            y, x = node.args
            dy = differentiate(y, var)
            dx = differentiate(x, var)
            denom = _add(_mul(x, x), _mul(y, y))
            return _div(_sub(_mul(x, dy), _mul(y, dx)), denom)
    if isinstance(node, Binary):
        da = differentiate(node.left, var)
        db = differentiate(node.right, var)
        if node.op == "+":
            return _add(da, db)
        if node.op == "-":
            return _sub(da, db)
        if node.op == "*":
            return _add(_mul(da, node.right), _mul(node.left, db))
        if node.op == "/":
            num = _sub(_mul(da, node.right), _mul(node.left, db))
            return _div(num, _mul(node.right, node.right))
        if node.op == "^":
            if not isinstance(node.right, Num):
                raise ExpressionError(
                    "can only differentiate powers with constant exponents")
            c = node.right.value
            return _mul(_mul(Num(c), Binary("^", node.left, Num(c - 1.0))), da)
    raise TypeError(f"not an expression node: {node!r}")


def free_names(node) -> set:
    """All names appearing in an AST (variables and constants alike)."""
    if isinstance(node, Num):
        return set()
    if isinstance(node, Name):
        return {node.ident}
    if isinstance(node, Unary):
        return free_names(node.arg)
    if isinstance(node, Call):
        out = set()
        for a in node.args:
            out |= free_names(a)
        return out
    if isinstance(node, Binary):
        return free_names(node.left) | free_names(node.right)
    raise TypeError(f"not an expression node: {node!r}")


class CompiledField:
    """A parsed scalar expression bound to named constants.

    Callable as f(t, X) with X of shape (..., n); evaluates vectorized
    and broadcasts the result to X's leading shape.  Analytic partial
    derivatives come from symbolic differentiation of the AST.
    """

    def __init__(self, source: str, constants: dict | None = None):
        self.source = source
        self.ast = parse(source)
        self.constants = dict(constants or {})
        unknown = free_names(self.ast) - set(VARIABLES) \
            - set(self.constants) - set(_BUILTIN_CONSTANTS)
        if unknown:
            raise ExpressionError(
                f"unbound name(s) in {source!r}: {', '.join(sorted(unknown))}")

    def _env(self, t, X):
        X = np.asarray(X, dtype=float)
        env = dict(self.constants)
        env["t"] = t
        for axis, name in enumerate(("x", "y", "z")):
            if axis < X.shape[-1]:
                env[name] = X[..., axis]
            else:
                env[name] = 0.0
        return env, X

    def __call__(self, t, X):
        env, X = self._env(t, X)
        value = evaluate(self.ast, env)
        return np.broadcast_to(np.asarray(value, dtype=float), X.shape[:-1]).copy()

    def derivative(self, var: str) -> "CompiledField":
        d = differentiate(self.ast, var)
        out = CompiledField.__new__(CompiledField)
        out.source = unparse(d)
        out.ast = d
        out.constants = dict(self.constants)
        return out
