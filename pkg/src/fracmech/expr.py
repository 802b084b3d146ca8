"""Scalar expression trees: parsing, printing, evaluation, differentiation.

Grammar (``^`` is right-associative and binds tighter than unary minus, so
``-x^2`` is ``-(x^2)``)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | power
    power  := atom ('^' factor)?
    atom   := number | name | fn '(' expr ')' | '(' expr ')'

Exponents must be constant. Only a handful of rewrites are applied when
trees are built (``x+0``, ``x*1``, ``x*0``, ``x^0``, ``x^1``, constant
folding, ``--x``, constant factors moved to the front and merged); there is
no general simplifier, so compare expressions
numerically unless structural identity is really what you mean.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

import numpy as np

from .errors import FracMechError

FUNCTIONS = ("sin", "cos", "exp", "ln")


class ExprSyntaxError(FracMechError, ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class UndeclaredVariableError(FracMechError, ValueError):
    def __init__(self, name: str, position: int | None = None, context: str | None = None):
        where = "" if position is None else f" at offset {position}"
        within = "" if context is None else f" in {context}"
        super().__init__(f"undeclared variable {name!r}{where}{within}")
        self.name = name
        self.position = position


class EvaluationError(FracMechError, ArithmeticError):
    def __init__(self, message: str, node: "Expr"):
        super().__init__(f"{message} in '{to_text(node)}'")
        self.node = node


# -- nodes -------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Add:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Sub:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Mul:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Div:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: float


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Expr"


Expr = Union[Const, Var, Add, Sub, Mul, Div, Pow, Neg, Call]

ZERO = Const(0.0)
ONE = Const(1.0)


def const(value: float) -> Const:
    return Const(float(value))


def is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


# -- simplifying constructors ---------------------------------------------------


def add(a: Expr, b: Expr) -> Expr:
    if is_const(a) and is_const(b):
        return Const(a.value + b.value)
    if is_const(a, 0.0):
        return b
    if is_const(b, 0.0):
        return a
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if is_const(a) and is_const(b):
        return Const(a.value - b.value)
    if is_const(b, 0.0):
        return a
    if is_const(a, 0.0):
        return neg(b)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if is_const(a) and is_const(b):
        return Const(a.value * b.value)
    if is_const(a, 0.0) or is_const(b, 0.0):
        return ZERO
    if is_const(a, 1.0):
        return b
    if is_const(b, 1.0):
        return a
    if is_const(b):
        a, b = b, a
    if is_const(a, -1.0):
        return neg(b)
    if is_const(a) and isinstance(b, Mul) and is_const(b.left):
        return mul(Const(a.value * b.left.value), b.right)
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if is_const(a) and is_const(b) and b.value != 0.0:
        return Const(a.value / b.value)
    if is_const(b, 1.0):
        return a
    if is_const(a, 0.0) and not is_const(b, 0.0):
        return ZERO
    return Div(a, b)


def power(base: Expr, exponent: float) -> Expr:
    exponent = float(exponent)
    if exponent == 0.0:
        return ONE
    if exponent == 1.0:
        return base
    if is_const(base):
        with np.errstate(all="ignore"):
            value = np.float64(base.value) ** exponent
        if np.isfinite(value):
            return Const(float(value))
    return Pow(base, exponent)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def call(fn: str, arg: Expr) -> Expr:
    if fn not in FUNCTIONS:
        raise ValueError(f"unknown function {fn!r}")
    if isinstance(arg, Const):
        value = _apply_fn(fn, np.float64(arg.value))
        if value is not None and np.isfinite(value):
            return Const(float(value))
    return Call(fn, arg)


def _apply_fn(fn, x):
    with np.errstate(all="ignore"):
        if fn == "sin":
            return np.sin(x)
        if fn == "cos":
            return np.cos(x)
        if fn == "exp":
            return np.exp(x)
        if np.all(x > 0):
            return np.log(x)
    return None


def total(terms: Iterable[Expr]) -> Expr:
    out: Expr = ZERO
    for term in terms:
        out = add(out, term)
    return out


# -- parsing ---------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, declared):
        self.tokens = _tokenize(text)
        self.i = 0
        self.declared = declared

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value or kind != "op":
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", pos)

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.factor()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def factor(self) -> Expr:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            inner = self.factor()
            return Const(-inner.value) if isinstance(inner, Const) else Neg(inner)
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            pos = self.take()[2]
            exponent = self.factor()
            if free_vars(exponent):
                raise ExprSyntaxError("exponent must be a constant", pos + 1)
            value = evaluate(exponent, {})
            return Pow(base, float(value))
        return base

    def atom(self) -> Expr:
        kind, text, pos = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if self.declared is not None and text not in self.declared:
                raise UndeclaredVariableError(text, pos)
            return Var(text)
        if kind == "op" and text == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        found = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {found}", pos)


def parse(text: str, declared: Iterable[str] | None = None) -> Expr:
    """Parse ``text``; names outside ``declared`` are rejected (``None`` allows any)."""
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    parser = _Parser(text, None if declared is None else frozenset(declared))
    node = parser.expr()
    kind, tok, pos = parser.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected {tok!r}", pos)
    return node


# -- printing ------------------------------------------------------------------

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _prec(e: Expr) -> int:
    if isinstance(e, Const) and e.value < 0:
        return 5  # printed with its own parentheses
    return _PREC.get(type(e), 5)


def _number(value: float) -> str:
    if not math.isfinite(value):
        raise ValueError(f"cannot print non-finite constant {value}")
    if value == int(value) and abs(value) < 1e15:
        text = str(int(value))
    else:
        text = repr(value)
    return text


def to_text(e: Expr) -> str:
    """Render with the minimum parentheses needed for ``parse`` to rebuild ``e``."""
    if isinstance(e, Const):
        if e.value < 0:
            return f"(-{_number(-e.value)})"
        return _number(abs(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({to_text(e.arg)})"
    if isinstance(e, Neg):
        inner = to_text(e.arg)
        return f"-{inner}" if _prec(e.arg) >= 3 else f"-({inner})"
    if isinstance(e, Pow):
        base = to_text(e.base)
        if _prec(e.base) <= 4:
            base = f"({base})"
        exp = _number(e.exponent) if e.exponent >= 0 else f"(-{_number(-e.exponent)})"
        return f"{base}^{exp}"
    op = {Add: " + ", Sub: " - ", Mul: " * ", Div: " / "}[type(e)]
    p = _PREC[type(e)]
    lhs = to_text(e.left)
    rhs = to_text(e.right)
    if _prec(e.left) < p:
        lhs = f"({lhs})"
    if _prec(e.right) <= p:
        rhs = f"({rhs})"
    return lhs + op + rhs


# -- queries and evaluation ------------------------------------------------------------


def free_vars(e: Expr) -> frozenset[str]:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, (Neg, Call)):
        return free_vars(e.arg)
    if isinstance(e, Pow):
        return free_vars(e.base)
    return free_vars(e.left) | free_vars(e.right)


Binding = Mapping[str, Union[float, np.ndarray]]


def evaluate(e: Expr, binding: Binding):
    """Evaluate in IEEE double precision.

    Bound values may be numpy arrays; they broadcast, and any offending
    element (zero divisor, non-positive log argument, overflowing power or
    function) raises :class:`EvaluationError`, as does an unbound name.
    """
    value = _eval(e, binding)
    if np.ndim(value) == 0:
        return float(value)
    return value


def _eval(e: Expr, b: Binding):
    if isinstance(e, Const):
        return np.float64(e.value)
    if isinstance(e, Var):
        try:
            return b[e.name]
        except KeyError:
            raise EvaluationError(f"no value bound for {e.name!r}", e) from None
    if isinstance(e, Add):
        return _eval(e.left, b) + _eval(e.right, b)
    if isinstance(e, Sub):
        return _eval(e.left, b) - _eval(e.right, b)
    if isinstance(e, Mul):
        return _eval(e.left, b) * _eval(e.right, b)
    if isinstance(e, Div):
        num = _eval(e.left, b)
        den = _eval(e.right, b)
        if np.any(den == 0):
            raise EvaluationError("division by zero", e)
        return num / den
    if isinstance(e, Neg):
        return -_eval(e.arg, b)
    if isinstance(e, Pow):
        base = _eval(e.base, b)
        if e.exponent == 2.0:
            return base * base
        with np.errstate(all="ignore"):
            out = np.power(base, e.exponent)
        if not np.all(np.isfinite(out)) and np.all(np.isfinite(base)):
            raise EvaluationError("power is undefined for this base", e)
        return out
    if isinstance(e, Call):
        x = _eval(e.arg, b)
        if e.fn == "ln" and np.any(x <= 0):
            raise EvaluationError("ln of a non-positive value", e)
        out = _apply_fn(e.fn, x)
        if not np.all(np.isfinite(out)) and np.all(np.isfinite(x)):
            raise EvaluationError(f"{e.fn} overflows", e)
        return out
    raise TypeError(f"not an expression node: {e!r}")


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables and re-simplify on the way up."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Neg):
        return neg(substitute(e.arg, mapping))
    if isinstance(e, Call):
        return call(e.fn, substitute(e.arg, mapping))
    if isinstance(e, Pow):
        return power(substitute(e.base, mapping), e.exponent)
    build = {Add: add, Sub: sub, Mul: mul, Div: div}[type(e)]
    return build(substitute(e.left, mapping), substitute(e.right, mapping))


def rename(e: Expr, names: Mapping[str, str]) -> Expr:
    return substitute(e, {old: Var(new) for old, new in names.items()})


def diff(e: Expr, var: str) -> Expr:
    """Exact partial derivative with respect to ``var``."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if var not in free_vars(e):
        return ZERO
    if isinstance(e, Add):
        return add(diff(e.left, var), diff(e.right, var))
    if isinstance(e, Sub):
        return sub(diff(e.left, var), diff(e.right, var))
    if isinstance(e, Mul):
        return add(mul(diff(e.left, var), e.right), mul(e.left, diff(e.right, var)))
    if isinstance(e, Div):
        da = diff(e.left, var)
        db = diff(e.right, var)
        return sub(div(da, e.right), div(mul(e.left, db), power(e.right, 2)))
    if isinstance(e, Neg):
        return neg(diff(e.arg, var))
    if isinstance(e, Pow):
        outer = mul(const(e.exponent), power(e.base, e.exponent - 1.0))
        return mul(outer, diff(e.base, var))
    if isinstance(e, Call):
        u = e.arg
        du = diff(u, var)
        if e.fn == "sin":
            return mul(call("cos", u), du)
        if e.fn == "cos":
            return mul(neg(call("sin", u)), du)
        if e.fn == "exp":
            return mul(call("exp", u), du)
        return div(du, u)
    raise TypeError(f"not an expression node: {e!r}")


def simplify(e: Expr) -> Expr:
    """Rebuild bottom-up through the simplifying constructors."""
    return substitute(e, {})
