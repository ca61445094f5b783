import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glory.errors import EvaluationError, ExpressionSyntaxError
from glory.expr import ClosedForm


@pytest.mark.parametrize(
    "text, value",
    [
        ("1 + 2*3", 7.0),
        ("2^3^2", 512.0),
        ("-2^2", -4.0),
        ("(-2)^2", 4.0),
        ("8/4/2", 1.0),
        ("1 - 2 - 3", -4.0),
        ("sin(pi/2)", 1.0),
        ("exp(0) + cos(0)", 2.0),
        ("1.5e1 + .5", 15.5),
        ("L", 4.0),
    ],
)
def test_precedence_and_literals(text, value):
    assert ClosedForm(text)(0.0, 0.0, 0.0, 4.0) == pytest.approx(value, rel=1e-15)


def test_variables_and_broadcast():
    f = ClosedForm("t + 10*x + 100*y")
    x = np.linspace(0, 1, 5)
    out = f(2.0, x[:, None], x[None, :], 1.0)
    assert out.shape == (5, 5)
    assert out[4, 4] == pytest.approx(2 + 10 + 100)


def test_constant_broadcasts():
    out = ClosedForm("3")(0.0, np.zeros((3, 2)), 0.0, 1.0)
    assert out.shape == (3, 2) and np.all(out == 3.0)


@pytest.mark.parametrize("bad", ["1 +", "sin 1", "foo(x)", "x $ y", "(x", "2 ** 3", "z"])
def test_syntax_errors(bad):
    with pytest.raises(ExpressionSyntaxError):
        ClosedForm(bad)


def test_non_finite_raises():
    with pytest.raises(EvaluationError):
        ClosedForm("1/x")(0.0, np.array([0.0, 1.0]), 0.5, 1.0)


def test_properties():
    assert ClosedForm("exp(-t)*x").time_dependent
    assert not ClosedForm("sin(pi*y)").time_dependent
    assert ClosedForm("0").is_zero and ClosedForm("x - x").is_zero
    d = ClosedForm("x^3*sin(y)").diff("x")
    assert d(0.0, 2.0, math.pi / 2, 1.0) == pytest.approx(12.0)


@settings(max_examples=100, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), x=st.floats(-3, 3), y=st.floats(0, 1))
def test_matches_python_arithmetic(a, b, x, y):
    f = ClosedForm(f"({a!r})*x^2 - ({b!r})*sin(pi*y) + exp(-x*y)/2")
    ref = a * x ** 2 - b * math.sin(math.pi * y) + math.exp(-x * y) / 2
    assert f(0.0, x, y, 1.0) == pytest.approx(ref, rel=1e-12, abs=1e-12)
