"""Small arithmetic expression language for closed-form data.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("+" | "-") unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | IDENT | FUNC "(" expr ")" | "(" expr ")"

Identifiers are ``t``, ``x``, ``y`` and the constants ``pi`` and ``L`` (the
half width of the computational rectangle, bound at evaluation time).
Functions are ``sin``, ``cos`` and ``exp``.  ``^`` is right associative and
binds tighter than unary minus, so ``-x^2`` is ``-(x^2)``.
"""

from __future__ import annotations

import re

import numpy as np
import sympy as sp

from .errors import EvaluationError, ExpressionSyntaxError

__all__ = ["ClosedForm", "parse", "T_SYM", "X_SYM", "Y_SYM", "L_SYM"]

T_SYM, X_SYM, Y_SYM, L_SYM = sp.symbols("t x y L", real=True)
_NAMES = {"t": T_SYM, "x": X_SYM, "y": Y_SYM, "L": L_SYM, "pi": sp.pi}
_FUNCS = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp}
_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(.))")


def _tokenize(text: str):
    pos = 0
    out = []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExpressionSyntaxError(f"cannot tokenize {text[pos:]!r}")
        num, ident, op = m.groups()
        if num is not None:
            out.append(("num", num))
        elif ident is not None:
            out.append(("id", ident))
        else:
            if op not in "+-*/^()":
                raise ExpressionSyntaxError(f"unexpected character {op!r} in {text!r}")
            out.append(("op", op))
        pos = m.end()
    out.append(("end", ""))
    return out


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        tok = self.toks[self.i]
        if (kind and tok[0] != kind) or (value and tok[1] != value):
            raise ExpressionSyntaxError(f"expected {value or kind!r} at token {self.i} in {self.text!r}, got {tok[1]!r}")
        self.i += 1
        return tok

    def parse(self):
        e = self.expr()
        self.take("end")
        return e

    def expr(self):
        e = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self):
        e = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            rhs = self.unary()
            e = e * rhs if op == "*" else e / rhs
        return e

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return -self.unary()
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            return base ** self.unary()
        return base

    def atom(self):
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return sp.Rational(val) if re.fullmatch(r"\d+", val) else sp.Float(val)
        if kind == "id":
            self.take()
            if val in _FUNCS:
                self.take("op", "(")
                arg = self.expr()
                self.take("op", ")")
                return _FUNCS[val](arg)
            if val in _NAMES:
                return _NAMES[val]
            raise ExpressionSyntaxError(f"unknown identifier {val!r} in {self.text!r}")
        if (kind, val) == ("op", "("):
            self.take()
            e = self.expr()
            self.take("op", ")")
            return e
        raise ExpressionSyntaxError(f"unexpected token {val!r} in {self.text!r}")


def parse(text: str) -> sp.Expr:
    return _Parser(str(text)).parse()


class ClosedForm:
    """A parsed expression in ``(t, x, y)`` with numpy evaluation."""

    def __init__(self, source):
        if isinstance(source, ClosedForm):
            source = source.expr
        if isinstance(source, sp.Expr):
            self.expr = source
            self.text = str(source)
        elif isinstance(source, (int, float)):
            self.expr = sp.Float(source) if isinstance(source, float) else sp.Integer(source)
            self.text = str(source)
        else:
            self.text = str(source)
            self.expr = parse(self.text)
        if self.expr.has(sp.zoo, sp.nan, sp.oo, -sp.oo):
            # e.g. 1/0 folded by sympy; evaluation reports it
            self._fn = lambda t, x, y, L: np.nan
        else:
            self._fn = sp.lambdify((T_SYM, X_SYM, Y_SYM, L_SYM), self.expr, "numpy")

    def __repr__(self):
        return f"ClosedForm({self.text!r})"

    @property
    def time_dependent(self) -> bool:
        return T_SYM in self.expr.free_symbols

    @property
    def is_zero(self) -> bool:
        return self.expr == 0

    def diff(self, var: str) -> "ClosedForm":
        return ClosedForm(sp.diff(self.expr, _NAMES[var]))

    def __call__(self, t, x, y, L):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        t = np.asarray(t, dtype=float)
        shape = np.broadcast_shapes(t.shape, x.shape, y.shape)
        with np.errstate(all="ignore"):
            out = np.broadcast_to(np.asarray(self._fn(t, x, y, float(L)), dtype=float), shape)
        if not np.all(np.isfinite(out)):
            raise EvaluationError(f"non-finite values evaluating {self.text!r}")
        return np.array(out)
