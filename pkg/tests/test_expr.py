"""Expression parser and evaluator."""
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from spectralgap import ExprDomainError, ExprSyntaxError, UnknownIdentifierError, compile_expr, eval_expr, parse_expr, to_text
from spectralgap.expr import FUNCTION_ARITY, BinOp, Call, Const, Lit, Neg, Var

# -- examples -------------------------------------------------------------------


def test_power_tree():
    assert parse_expr("x^2") == BinOp("^", Var("x"), Lit(2.0))


def test_negated_product_evaluates_like_negated_literal():
    f = compile_expr("-2*x")
    for x in (-1.5, 0.0, 0.25, 3.0):
        assert f(x) == -2.0 * x
        assert f(x) == eval_expr(parse_expr("-(2*x)"), x)


def test_gaussian_over_two_at_zero():
    assert eval_expr(parse_expr("exp(-x^2)/2"), 0.0) == 0.5


def test_square_at_three():
    assert eval_expr(parse_expr("x*x"), 3.0) == 9.0


def test_sine_half_pi():
    assert abs(eval_expr(parse_expr("sin(pi*x)"), 0.5) - 1.0) <= 1e-15


def test_division_by_zero_is_a_domain_error():
    with pytest.raises(ExprDomainError):
        eval_expr(parse_expr("1/x"), 0.0)


@pytest.mark.parametrize("text,x", [("log(x)", 0.0), ("log(x)", -1.0), ("sqrt(x)", -0.5), ("x/0", 1.0)])
def test_other_domain_errors(text, x):
    with pytest.raises(ExprDomainError):
        eval_expr(parse_expr(text), x)


def test_domain_error_on_arrays():
    with pytest.raises(ExprDomainError):
        eval_expr(parse_expr("1/x"), np.array([1.0, 0.0, 2.0]))


def test_array_evaluation_keeps_shape():
    x = np.linspace(-1, 1, 7).reshape(7, 1)
    out = eval_expr(parse_expr("1"), x)
    assert out.shape == x.shape and np.all(out == 1.0)


def test_syntax_error_reports_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse_expr("x + * 2")
    assert info.value.offset == 4


@pytest.mark.parametrize("text", ["", "x +", "(x", "x)", "sin()", "pow(x)", "min(x, 1, 2)", "2 3", "x $ 1"])
def test_malformed_input(text):
    with pytest.raises(ExprSyntaxError):
        parse_expr(text)


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError) as info:
        parse_expr("y + 1")
    assert info.value.name == "y"


def test_unknown_function():
    with pytest.raises(UnknownIdentifierError):
        parse_expr("tanh(x)")


def test_constants():
    assert eval_expr(parse_expr("pi"), 0.0) == math.pi
    assert eval_expr(parse_expr("e"), 0.0) == math.e


# -- precedence -----------------------------------------------------------------

safe = st.floats(min_value=0.1, max_value=3.0)


@settings(max_examples=200, deadline=None)
@given(safe, safe, safe)
def test_precedence_cases(a, b, c):
    env = {"a": repr(a), "b": repr(b), "c": repr(c)}

    def ev(t):
        return eval_expr(parse_expr(t.format(**env)), 0.0)

    # references use the evaluator's own (numpy) primitives, so equality is exact
    assert ev("{a}+{b}*{c}") == np.add(a, np.multiply(b, c))
    assert ev("{a}^{b}^{c}") == np.power(a, np.power(b, c))
    assert ev("-{a}^{b}") == -np.power(a, b)
    assert ev("{a}+{b}*{c}") == ev("{a}+({b}*{c})")
    assert ev("{a}^{b}^{c}") == ev("{a}^({b}^{c})")
    assert ev("-{a}^{b}") == ev("-({a}^{b})")


def test_precedence_trees():
    x = Var("x")
    assert parse_expr("x+x*x") == BinOp("+", x, BinOp("*", x, x))
    assert parse_expr("x^x^x") == BinOp("^", x, BinOp("^", x, x))
    assert parse_expr("-x^x") == Neg(BinOp("^", x, x))
    assert parse_expr("x-x-x") == BinOp("-", BinOp("-", x, x), x)


# -- round-trip corpus ----------------------------------------------------------

literals = st.one_of(
    st.integers(min_value=0, max_value=20).map(float),
    st.floats(min_value=0.0, max_value=10.0, allow_nan=False, allow_infinity=False),
    st.floats(min_value=0.0, max_value=1e300, allow_nan=False, allow_infinity=False),
).map(Lit)
leaves = st.one_of(literals, st.just(Var("x")), st.sampled_from([Const("pi"), Const("e")]))


def _extend(children):
    calls = [
        st.tuples(*([children] * arity)).map(lambda args, name=name: Call(name, tuple(args)))
        for name, arity in FUNCTION_ARITY.items()
    ]
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda t: BinOp(*t)),
        *calls,
    )


trees = st.recursive(leaves, _extend, max_leaves=12)


def _outcome(ast, x):
    try:
        return ("ok", eval_expr(ast, x))
    except ExprDomainError:
        return ("domain", None)


def _same(u, v):
    if u[0] != v[0]:
        return False
    if u[0] == "domain":
        return True
    return np.float64(u[1]).tobytes() == np.float64(v[1]).tobytes()


@settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(trees, st.integers(min_value=0, max_value=2**32 - 1))
def test_round_trip_corpus(tree, seed):
    text = to_text(tree)
    first = parse_expr(text)
    assert first == tree
    second = parse_expr(to_text(first))
    assert second == first
    xs = np.random.default_rng(seed).uniform(-5.0, 5.0, 100)
    for x in xs:
        assert _same(_outcome(first, x), _outcome(second, x))
        assert _same(_outcome(tree, x), _outcome(second, x))


@pytest.mark.parametrize("text", ["x^2", "-2*x", "exp(-x^2)/2", "1 + 0.3*sin(2*pi*x)", "max(x, 1e-3)", "--x",
                                  "pow(x, 2)/(1+abs(x))", "2.5e-3*x^-2", "-(x-1)^2", "x/(x/(x/2))"])
def test_round_trip_examples(text):
    ast = parse_expr(text)
    assert parse_expr(to_text(ast)) == ast
