"""Closed-form coefficient expressions in one variable ``x``.

Grammar (EBNF)::

    expr    = term , { ("+" | "-") , term } ;
    term    = unary , { ("*" | "/") , unary } ;
    unary   = ("+" | "-") , unary | power ;
    power   = atom , [ ("^" | "**") , unary ] ;
    atom    = number | "x" | "pi" | func , "(" , expr , ")" | "(" , expr , ")" ;
    func    = "exp" | "log" ;
    number  = digits , [ "." , digits ] , [ ("e" | "E") , [ "+" | "-" ] , digits ] , [ "j" ] ;

Exponents must evaluate to integer constants.  A trailing ``j`` makes a
number imaginary, so ``2j`` is ``2i`` and complex constants are written
``1+2j``.  Power binds tighter than unary minus: ``-x^2 = -(x^2)``.

Expressions evaluate on complex scalars, numpy arrays and
:class:`~borelsum.taylor.Jet` objects, and have an exact symbolic
derivative.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .taylor import jexp, jlog


class Node:
    def eval(self, x):
        raise NotImplementedError

    def diff(self) -> "Node":
        raise NotImplementedError

    def is_const(self) -> bool:
        return False


@dataclass(frozen=True)
class Const(Node):
    value: complex

    def eval(self, x):
        return self.value

    def diff(self):
        return ZERO

    def is_const(self):
        return True

    def __str__(self):
        v = complex(self.value)
        if v.imag == 0:
            return repr(v.real)
        sign = "+" if v.imag >= 0 else "-"
        return f"({v.real!r}{sign}{abs(v.imag)!r}j)" if v.real else f"{v.imag!r}j"


ZERO = Const(0.0)
ONE = Const(1.0)


@dataclass(frozen=True)
class Var(Node):
    def eval(self, x):
        return x

    def diff(self):
        return ONE

    def __str__(self):
        return "x"


def _c(node: Node):
    return complex(node.value) if isinstance(node, Const) else None


def add(a: Node, b: Node) -> Node:
    ca, cb = _c(a), _c(b)
    if ca is not None and cb is not None:
        return Const(ca + cb)
    if ca == 0:
        return b
    if cb == 0:
        return a
    return Add(a, b)


def sub(a: Node, b: Node) -> Node:
    ca, cb = _c(a), _c(b)
    if ca is not None and cb is not None:
        return Const(ca - cb)
    if cb == 0:
        return a
    if ca == 0:
        return neg(b)
    return Sub(a, b)


def mul(a: Node, b: Node) -> Node:
    ca, cb = _c(a), _c(b)
    if ca is not None and cb is not None:
        return Const(ca * cb)
    if ca == 0 or cb == 0:
        return ZERO
    if ca == 1:
        return b
    if cb == 1:
        return a
    return Mul(a, b)


def div(a: Node, b: Node) -> Node:
    ca, cb = _c(a), _c(b)
    if cb == 0:
        raise ValidationError("division by the constant zero")
    if ca is not None and cb is not None:
        return Const(ca / cb)
    if ca == 0:
        return ZERO
    if cb == 1:
        return a
    return Div(a, b)


def neg(a: Node) -> Node:
    ca = _c(a)
    if ca is not None:
        return Const(-ca)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def power(a: Node, p: int) -> Node:
    if p == 0:
        return ONE
    if p == 1:
        return a
    ca = _c(a)
    if ca is not None:
        if ca == 0 and p < 0:
            raise ValidationError("negative power of zero")
        return Const(ca ** p)
    return Pow(a, p)


@dataclass(frozen=True)
class Add(Node):
    a: Node
    b: Node

    def eval(self, x):
        return self.a.eval(x) + self.b.eval(x)

    def diff(self):
        return add(self.a.diff(), self.b.diff())

    def __str__(self):
        return f"({self.a} + {self.b})"


@dataclass(frozen=True)
class Sub(Node):
    a: Node
    b: Node

    def eval(self, x):
        return self.a.eval(x) - self.b.eval(x)

    def diff(self):
        return sub(self.a.diff(), self.b.diff())

    def __str__(self):
        return f"({self.a} - {self.b})"


@dataclass(frozen=True)
class Mul(Node):
    a: Node
    b: Node

    def eval(self, x):
        return self.a.eval(x) * self.b.eval(x)

    def diff(self):
        return add(mul(self.a.diff(), self.b), mul(self.a, self.b.diff()))

    def __str__(self):
        return f"({self.a} * {self.b})"


@dataclass(frozen=True)
class Div(Node):
    a: Node
    b: Node

    def eval(self, x):
        return self.a.eval(x) / self.b.eval(x)

    def diff(self):
        num = sub(mul(self.a.diff(), self.b), mul(self.a, self.b.diff()))
        return div(num, power(self.b, 2))

    def __str__(self):
        return f"({self.a} / {self.b})"


@dataclass(frozen=True)
class Neg(Node):
    a: Node

    def eval(self, x):
        return -self.a.eval(x)

    def diff(self):
        return neg(self.a.diff())

    def __str__(self):
        return f"(-{self.a})"


@dataclass(frozen=True)
class Pow(Node):
    a: Node
    p: int

    def eval(self, x):
        v = self.a.eval(x)
        if self.p < 0:
            return 1.0 / (v ** (-self.p))
        return v ** self.p

    def diff(self):
        return mul(mul(Const(float(self.p)), power(self.a, self.p - 1)), self.a.diff())

    def __str__(self):
        return f"({self.a})^{self.p}"


@dataclass(frozen=True)
class Exp(Node):
    a: Node

    def eval(self, x):
        return jexp(self.a.eval(x))

    def diff(self):
        return mul(self, self.a.diff())

    def __str__(self):
        return f"exp({self.a})"


@dataclass(frozen=True)
class Log(Node):
    a: Node

    def eval(self, x):
        return jlog(self.a.eval(x))

    def diff(self):
        return div(self.a.diff(), self.a)

    def __str__(self):
        return f"log({self.a})"


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"""
    \s*(?:
      (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?j?)
    | (?P<name>[A-Za-z_]\w*)
    | (?P<op>\*\*|[-+*/^()])
    )""", re.VERBOSE)


def _tokenize(text: str):
    pos = 0
    tokens = []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValidationError(f"unexpected character {text[pos:].strip()[:1]!r} "
                                  f"at position {pos} in {text!r}")
        kind = m.lastgroup
        tokens.append((kind, m.group(kind)))
        pos = m.end()
    tokens.append(("end", ""))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, value=None):
        tok = self.tokens[self.i]
        if value is not None and tok[1] != value:
            raise ValidationError(f"expected {value!r}, found {tok[1] or 'end'!r} in {self.text!r}")
        self.i += 1
        return tok

    def parse(self) -> Node:
        node = self.expr()
        if self.peek()[0] != "end":
            raise ValidationError(f"trailing input {self.peek()[1]!r} in {self.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            node = add(node, rhs) if op == "+" else sub(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            node = mul(node, rhs) if op == "*" else div(node, rhs)
        return node

    def unary(self):
        if self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = self.unary()
            return node if op == "+" else neg(node)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] in ("^", "**"):
            self.take()
            expo = self.unary()
            if not expo.is_const():
                raise ValidationError(f"exponent must be a constant in {self.text!r}")
            p = complex(expo.value)
            if p.imag != 0 or p.real != round(p.real):
                raise ValidationError(f"exponent must be an integer in {self.text!r}")
            return power(base, int(round(p.real)))
        return base

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            return Const(complex(val) if val.endswith("j") else float(val))
        if kind == "name":
            if val == "x":
                return Var()
            if val == "pi":
                return Const(math.pi)
            if val in ("exp", "log"):
                self.take("(")
                arg = self.expr()
                self.take(")")
                if arg.is_const():
                    c = complex(arg.value)
                    if val == "log" and c == 0:
                        raise ValidationError("log(0)")
                    return Const(complex(np.exp(c) if val == "exp" else np.log(c)))
                return Exp(arg) if val == "exp" else Log(arg)
            raise ValidationError(f"unknown name {val!r} in {self.text!r}")
        if val == "(":
            node = self.expr()
            self.take(")")
            return node
        raise ValidationError(f"unexpected {val or 'end of input'!r} in {self.text!r}")


def parse_expression(text: str) -> Node:
    """Parse ``text`` according to the grammar in the module docstring."""
    if not text or not text.strip():
        raise ValidationError("empty expression")
    return _Parser(text).parse()


class CoefficientFunction:
    """A parsed closed-form function of ``x`` with exact derivatives."""

    def __init__(self, source, node: Node | None = None):
        if isinstance(source, (int, float, complex)):
            node = Const(complex(source))
            source = str(source)
        self.source = str(source)
        self.node = node if node is not None else parse_expression(self.source)

    def __call__(self, x):
        v = self.node.eval(x)
        if np.isscalar(v) or isinstance(v, complex):
            if isinstance(x, np.ndarray):
                return np.full(x.shape, v, dtype=complex)
            return complex(v)
        return v

    def derivative(self, order: int = 1) -> "CoefficientFunction":
        node = self.node
        for _ in range(order):
            node = node.diff()
        return CoefficientFunction(str(node), node)

    def jet(self, points, order: int):
        """Taylor jet of length ``order`` around ``points``."""
        from .taylor import Jet
        xj = Jet.variable(points, order)
        v = self.node.eval(xj)
        if not isinstance(v, Jet):
            return Jet.constant(v, np.shape(points), order)
        return v

    @property
    def is_zero(self) -> bool:
        return self.node.is_const() and complex(self.node.value) == 0

    def __repr__(self):
        return f"CoefficientFunction({self.source!r})"
