import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fefferlab.exprlang import (
    BinOp,
    Call,
    ExprEvaluationError,
    ExprSyntaxError,
    Num,
    Pow,
    UnknownIdentifierError,
    Var,
    eval_complex,
    eval_jet,
    parse,
    pretty,
)
from fefferlab.jets import SingularInputError, jet_extract

COORDS = ("x", "y", "u", "phi")


def test_pow_ast():
    ast = parse("cos(phi)^2").ast
    assert ast == Pow(Call("cos", Var("phi", 4), 0), 2, ast.offset)


def test_syntax_error_offset():
    with pytest.raises(ExprSyntaxError) as exc:
        parse("x + * y")
    assert exc.value.offset == 4
    assert exc.value.expected


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError):
        parse("x + w")


def test_modulus_identity():
    pts = np.random.default_rng(0).normal(size=(4, 20))
    got = eval_complex(parse("(x+i*y)*conj(x+i*y)"), pts)
    assert np.allclose(got, pts[0] ** 2 + pts[1] ** 2, rtol=0, atol=1e-14)


def test_eval_jet_examples():
    j = eval_jet(parse("u"), [0, 0, 5, 0], 1)
    assert j.value == 5 and jet_extract(j, (0, 0, 1, 0)) == 1
    j = eval_jet(parse("exp(x*y)"), [0, 0, 0.3, 0.1], 2)
    assert abs(jet_extract(j, (1, 1, 0, 0)) - 1) < 1e-15


def test_sqrt_branch_point():
    with pytest.raises(SingularInputError) as exc:
        eval_jet(parse("1 + sqrt(x)"), [0, 0, 0, 0], 2)
    assert isinstance(exc.value, ExprEvaluationError)
    assert "sqrt" in str(exc.value)


def test_precedence_and_associativity():
    pts = np.array([[0.7], [0.2], [-0.4], [1.1]])
    assert np.allclose(eval_complex(parse("-x^2"), pts), -(0.7**2))
    assert np.allclose(eval_complex(parse("2^3^2"), pts), 2**9)
    assert np.allclose(eval_complex(parse("x - y - u"), pts), 0.7 - 0.2 + 0.4)
    assert np.allclose(eval_complex(parse("x / y / u"), pts), 0.7 / 0.2 / -0.4)
    assert np.allclose(eval_complex(parse("pi*i"), pts), np.pi * 1j)


def test_conj_of_jets():
    j = eval_jet(parse("conj(x+i*y)^2"), [0.3, 0.4, 0, 0], 2)
    assert abs(jet_extract(j, (0, 1, 0, 0)) - 2 * (0.3 - 0.4j) * -1j) < 1e-14


# -- random expressions ------------------------------------------------------

leaf = st.one_of(
    st.sampled_from(COORDS).map(Var),
    st.integers(1, 9).map(lambda n: Num(float(n))),
    st.sampled_from([0.5, 0.25, 1.5]).map(Num),
)


def _extend(children):
    return st.one_of(
        st.tuples(st.sampled_from("+-*"), children, children).map(lambda t: BinOp(t[0], t[1], t[2])),
        st.tuples(st.sampled_from(["sin", "cos", "exp"]), children).map(lambda t: Call(t[0], t[1])),
        st.tuples(children, st.integers(1, 3)).map(lambda t: Pow(t[0], t[1])),
    )


asts = st.recursive(leaf, _extend, max_leaves=8)


@settings(max_examples=100, deadline=None)
@given(asts)
def test_pretty_round_trip(ast):
    once = pretty(ast)
    twice = pretty(parse(once).ast)
    assert once == twice


@settings(max_examples=40, deadline=None)
@given(asts)
def test_jet_value_matches_direct_evaluation(ast):
    pts = np.random.default_rng(3).uniform(-0.5, 0.5, (4, 1000))
    e = parse(pretty(ast))
    direct = eval_complex(e, pts)
    via_jet = eval_jet(e, pts, 0).value
    assert np.array_equal(direct, via_jet) or np.allclose(direct, via_jet, rtol=1e-15, atol=0)


def derivative(node, var):
    """Syntactic derivative over {+, -, *, ^, sin, cos, exp} (test oracle)."""
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0 if node.name == var else 0.0)
    if isinstance(node, BinOp):
        dl, dr = derivative(node.left, var), derivative(node.right, var)
        if node.op in "+-":
            return BinOp(node.op, dl, dr)
        return BinOp("+", BinOp("*", dl, node.right), BinOp("*", node.left, dr))
    if isinstance(node, Pow):
        inner = derivative(node.base, var)
        lower = Pow(node.base, node.exponent - 1) if node.exponent > 1 else Num(1.0)
        return BinOp("*", BinOp("*", Num(float(node.exponent)), lower), inner)
    if isinstance(node, Call):
        inner = derivative(node.arg, var)
        outer = {
            "sin": Call("cos", node.arg),
            "cos": BinOp("-", Num(0.0), Call("sin", node.arg)),
            "exp": node,
        }[node.func]
        return BinOp("*", outer, inner)
    raise TypeError(node)


@settings(max_examples=60, deadline=None)
@given(asts, st.sampled_from(range(4)))
def test_syntactic_derivative_matches_jet(ast, var):
    p = np.array([0.31, -0.22, 0.17, 0.4])
    e = parse(pretty(ast))
    d = parse(pretty(derivative(e.ast, COORDS[var])))
    idx = [0, 0, 0, 0]
    idx[var] = 1
    want = eval_complex(d, p[:, None])[0]
    got = jet_extract(eval_jet(e, p[:, None], 1), idx)[0]
    assert abs(got - want) <= 1e-10 * max(1.0, abs(want))
