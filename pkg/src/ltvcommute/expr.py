"""Closed-form scalar expressions of time with exact symbolic differentiation.

Coefficient formulas such as ``0.5*t^2`` or ``1/(2*t^2)`` are parsed into an
immutable tree. Trees evaluate on floats or numpy arrays and differentiate
symbolically, so the commutativity conditions never need finite differences.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := '-' factor | base ('^' ['-'] integer)?
    base   := number | 't' | '(' expr ')' | func '(' expr ')'
    func   := 'sqrt' | 'sin' | 'cos' | 'exp'
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "Expression",
    "Const",
    "Var",
    "Neg",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Func",
    "T",
    "DomainError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "as_expr",
    "parse_expr",
    "eval_expr",
    "diff_expr",
    "eval_derivative",
]

Number = Union[int, float]

FUNCTIONS = ("sqrt", "sin", "cos", "exp")


class DomainError(ValueError):
    """Evaluation left the domain of an expression (x/0, sqrt(-x), overflow)."""


class ExprSyntaxError(ValueError):
    """Malformed expression text."""

    def __init__(self, message, text="", position=0):
        self.text = text
        self.position = position
        if text:
            message = f"{message} at position {position}: {text!r}"
        super().__init__(message)


class UnknownIdentifierError(ExprSyntaxError):
    pass


# precedence levels used by the printer
_P_SUM, _P_PROD, _P_UNARY, _P_POW, _P_ATOM = 1, 2, 3, 4, 5


class Expression:
    """Base class of all expression nodes.

    Arithmetic operators build new trees with light constant folding
    (``e*1 -> e``, ``e+0 -> e``, numeric sub-trees collapse). Nodes are
    frozen dataclasses and safe to share.
    """

    precedence = _P_ATOM

    def evaluate(self, t):
        """Evaluate at ``t`` (float or array); raises `DomainError`."""
        with np.errstate(all="ignore"):
            value = self._eval(t)
        if np.ndim(value) == 0:
            value = float(value)
            if not math.isfinite(value):
                raise DomainError(f"{self} is not finite at t={t!r}")
        else:
            value = np.broadcast_to(value, np.shape(t)).astype(float)
            if not np.all(np.isfinite(value)):
                bad = np.asarray(t)[~np.isfinite(value)]
                raise DomainError(f"{self} is not finite at t={bad[0]!r}")
        return value

    __call__ = evaluate

    def diff(self) -> "Expression":
        raise NotImplementedError

    def _eval(self, t):
        raise NotImplementedError

    def _text(self) -> str:
        raise NotImplementedError

    def __str__(self):
        return self._text()

    def _wrap(self, child: "Expression", min_prec: int) -> str:
        text = child._text()
        return f"({text})" if child.precedence < min_prec else text

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n):
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
            raise TypeError("only integer powers are supported; use sqrt()")
        return power(self, int(n))

    @property
    def is_constant(self) -> bool:
        return isinstance(self, Const)


@dataclass(frozen=True)
class Const(Expression):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))

    @property
    def precedence(self):
        # a negative literal prints with a leading '-'
        return _P_UNARY if self.value < 0 or str(self.value)[0] == "-" else _P_ATOM

    def _eval(self, t):
        return self.value if np.ndim(t) == 0 else np.full(np.shape(t), self.value)

    def diff(self):
        return ZERO

    def _text(self):
        return repr(self.value)


@dataclass(frozen=True)
class Var(Expression):
    def _eval(self, t):
        return np.asarray(t, dtype=float) if np.ndim(t) else float(t)

    def diff(self):
        return ONE

    def _text(self):
        return "t"


@dataclass(frozen=True)
class Neg(Expression):
    arg: Expression
    precedence = _P_UNARY

    def _eval(self, t):
        return -self.arg._eval(t)

    def diff(self):
        return neg(self.arg.diff())

    def _text(self):
        return "-" + self._wrap(self.arg, _P_POW)


@dataclass(frozen=True)
class Add(Expression):
    left: Expression
    right: Expression
    precedence = _P_SUM

    def _eval(self, t):
        return self.left._eval(t) + self.right._eval(t)

    def diff(self):
        return add(self.left.diff(), self.right.diff())

    def _text(self):
        return f"{self._wrap(self.left, _P_SUM)} + {self._wrap(self.right, _P_PROD)}"


@dataclass(frozen=True)
class Sub(Expression):
    left: Expression
    right: Expression
    precedence = _P_SUM

    def _eval(self, t):
        return self.left._eval(t) - self.right._eval(t)

    def diff(self):
        return sub(self.left.diff(), self.right.diff())

    def _text(self):
        return f"{self._wrap(self.left, _P_SUM)} - {self._wrap(self.right, _P_PROD)}"


@dataclass(frozen=True)
class Mul(Expression):
    left: Expression
    right: Expression
    precedence = _P_PROD

    def _eval(self, t):
        return self.left._eval(t) * self.right._eval(t)

    def diff(self):
        u, v = self.left, self.right
        return add(mul(u.diff(), v), mul(u, v.diff()))

    def _text(self):
        return f"{self._wrap(self.left, _P_PROD)}*{self._wrap(self.right, _P_UNARY)}"


@dataclass(frozen=True)
class Div(Expression):
    left: Expression
    right: Expression
    precedence = _P_PROD

    def _eval(self, t):
        den = self.right._eval(t)
        if np.any(np.asarray(den) == 0):
            raise DomainError(f"division by zero in {self} at t={t!r}")
        return self.left._eval(t) / den

    def diff(self):
        u, v = self.left, self.right
        return div(sub(mul(u.diff(), v), mul(u, v.diff())), power(v, 2))

    def _text(self):
        return f"{self._wrap(self.left, _P_PROD)}/{self._wrap(self.right, _P_UNARY)}"


@dataclass(frozen=True)
class Pow(Expression):
    base: Expression
    exponent: int
    precedence = _P_POW

    def _eval(self, t):
        b = self.base._eval(t)
        if self.exponent < 0:
            if np.any(np.asarray(b) == 0):
                raise DomainError(f"zero to a negative power in {self} at t={t!r}")
            return 1.0 / b ** (-self.exponent)
        return b**self.exponent

    def diff(self):
        n = self.exponent
        return mul(mul(Const(n), power(self.base, n - 1)), self.base.diff())

    def _text(self):
        return f"{self._wrap(self.base, _P_ATOM)}^{self.exponent}"


_NUMPY_FUNCS = {"sqrt": np.sqrt, "sin": np.sin, "cos": np.cos, "exp": np.exp}


@dataclass(frozen=True)
class Func(Expression):
    name: str
    arg: Expression

    def __post_init__(self):
        if self.name not in _NUMPY_FUNCS:
            raise UnknownIdentifierError(f"unknown function {self.name!r}")

    def _eval(self, t):
        x = self.arg._eval(t)
        if self.name == "sqrt" and np.any(np.asarray(x) < 0):
            raise DomainError(f"negative radicand in {self} at t={t!r}")
        return _NUMPY_FUNCS[self.name](x)

    def diff(self):
        u, du = self.arg, self.arg.diff()
        if self.name == "sqrt":
            return div(du, mul(Const(2.0), self))
        if self.name == "sin":
            return mul(func("cos", u), du)
        if self.name == "cos":
            return neg(mul(func("sin", u), du))
        return mul(self, du)

    def _text(self):
        return f"{self.name}({self.arg._text()})"


ZERO = Const(0.0)
ONE = Const(1.0)
T = Var()


def as_expr(value) -> Expression:
    """Coerce numbers and grammar strings to an `Expression`."""
    if isinstance(value, Expression):
        return value
    if isinstance(value, str):
        return parse_expr(value)
    if isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool):
        return Const(float(value))
    raise TypeError(f"cannot build an expression from {value!r}")


# -- smart constructors -----------------------------------------------------

def _is(e, v):
    return isinstance(e, Const) and e.value == v


def neg(u):
    if isinstance(u, Const):
        return Const(-u.value)
    if isinstance(u, Neg):
        return u.arg
    return Neg(u)


def add(u, v):
    if isinstance(u, Const) and isinstance(v, Const):
        return Const(u.value + v.value)
    if _is(u, 0):
        return v
    if _is(v, 0):
        return u
    if isinstance(v, Neg):
        return Sub(u, v.arg)
    return Add(u, v)


def sub(u, v):
    if isinstance(u, Const) and isinstance(v, Const):
        return Const(u.value - v.value)
    if _is(v, 0):
        return u
    if _is(u, 0):
        return neg(v)
    return Sub(u, v)


def mul(u, v):
    if isinstance(u, Const) and isinstance(v, Const):
        return Const(u.value * v.value)
    if _is(u, 0) or _is(v, 0):
        return ZERO
    if _is(u, 1):
        return v
    if _is(v, 1):
        return u
    if _is(u, -1):
        return neg(v)
    if _is(v, -1):
        return neg(u)
    if isinstance(v, Const):
        u, v = v, u
    if isinstance(u, Const) and isinstance(v, Mul) and isinstance(v.left, Const):
        return mul(Const(u.value * v.left.value), v.right)
    return Mul(u, v)


def div(u, v):
    if _is(v, 1):
        return u
    if _is(u, 0) and not _is(v, 0):
        return ZERO
    if isinstance(u, Const) and isinstance(v, Const) and v.value != 0:
        return Const(u.value / v.value)
    return Div(u, v)


def power(u, n):
    if n == 0:
        return ONE
    if n == 1:
        return u
    if isinstance(u, Const) and not (u.value == 0 and n < 0):
        return Const(u.value**n)
    return Pow(u, n)


def func(name, u):
    if isinstance(u, Const):
        if name != "sqrt" or u.value >= 0:
            return Const(float(_NUMPY_FUNCS[name](u.value)))
    return Func(name, u)


def sqrt(u) -> Expression:
    return func("sqrt", as_expr(u))


# -- parser -----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            stripped = len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[pos + stripped]!r}", text, pos + stripped)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value:
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", self.text, pos)

    def parse(self):
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {val!r}", self.text, pos)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self):
        e = self.factor()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.factor()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def factor(self):
        if self.peek()[1] == "-":
            self.take()
            return Neg(self.factor())
        b = self.base()
        if self.peek()[1] == "^":
            self.take()
            sign = 1
            if self.peek()[1] == "-":
                self.take()
                sign = -1
            kind, val, pos = self.take()
            if kind != "num" or not val.isdigit():
                raise ExprSyntaxError("exponent must be an integer", self.text, pos)
            return Pow(b, sign * int(val))
        return b

    def base(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            if val == "t":
                return T
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(val, arg)
            raise UnknownIdentifierError(f"unknown identifier {val!r}", self.text, pos)
        if val == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {found}", self.text, pos)


def parse_expr(text: str) -> Expression:
    """Parse grammar text into an expression tree.

    >>> parse_expr("0.5*t^2")
    Mul(left=Const(value=0.5), right=Pow(base=Var(), exponent=2))
    """
    return _Parser(text).parse()


def eval_expr(e: Expression, t):
    return as_expr(e).evaluate(t)


def diff_expr(e: Expression) -> Expression:
    return as_expr(e).diff()


def eval_derivative(e: Expression, order: int, t):
    """Evaluate the ``order``-th symbolic derivative (0, 1 or 2) at ``t``."""
    if order not in (0, 1, 2):
        raise ValueError(f"derivative order must be 0, 1 or 2, got {order!r}")
    e = as_expr(e)
    for _ in range(order):
        e = e.diff()
    return e.evaluate(t)
