import math

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from noether_dt import dual
from noether_dt.errors import (
    DomainError,
    ExprSyntaxError,
    ModelError,
    UnboundVariableError,
    UnknownFunctionError,
)
from noether_dt.expr import (
    BinOp,
    Call,
    Neg,
    Num,
    Var,
    check_vocabulary,
    compile_expr,
    evaluate,
    free_vars,
    linear_combination,
    parse,
    rename,
    substitute,
    to_text,
)

ENV = {"x1": 0.7, "x2": -1.3, "u1": 2.0, "k": 3.0, "s1": 0.25}

leaves = st.one_of(
    st.floats(0, 100, allow_nan=False, allow_infinity=False).map(Num),
    st.sampled_from(sorted(ENV)).map(Var),
)


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda t: BinOp(*t)),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "ln", "sqrt", "abs"]), children).map(
            lambda t: Call(*t)
        ),
    )


trees = st.recursive(leaves, _extend, max_leaves=12)


@pytest.mark.parametrize(
    "text, value",
    [
        ("1 + 2*3", 7.0),
        ("2^3^2", 512.0),
        ("-2^2", -4.0),
        ("(1 + 2)*3", 9.0),
        ("8/4/2", 1.0),
        ("2^-1", 0.5),
        ("abs(-3)", 3.0),
        ("sqrt(16) + ln(exp(2))", 6.0),
        ("1e2 + .5", 100.5),
        ("x1*u1 - k", 0.7 * 2.0 - 3.0),
    ],
)
def test_evaluation(text, value):
    assert evaluate(parse(text), ENV) == pytest.approx(value)


@pytest.mark.parametrize(
    "text, offset",
    [("1 +", 3), ("2x", 1), ("(1 + 2", 6), ("1 $ 2", 2), ("sin x", 4), ("* 2", 0), ("", 0)],
)
def test_syntax_errors_report_offset(text, offset):
    with pytest.raises(ExprSyntaxError) as info:
        parse(text)
    assert info.value.offset == offset
    assert f"offset {offset}" in str(info.value)


def test_non_ascii_character_is_rejected_with_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse("1 + é")
    assert info.value.offset == 4
    assert "é" in info.value.message


def test_unknown_function():
    with pytest.raises(UnknownFunctionError) as info:
        parse("1 + tan(x1)")
    assert info.value.offset == 4


def test_unbound_variable():
    with pytest.raises(UnboundVariableError) as info:
        evaluate(parse("x1 + y"), ENV)
    assert info.value.name == "y"
    with pytest.raises(UnboundVariableError):
        compile_expr(parse("y"))({})


@pytest.mark.parametrize("text", ["ln(0)", "1/(x1 - x1)", "sqrt(-1)", "(-8)^(1/3)"])
def test_domain_errors(text):
    with pytest.raises(DomainError):
        evaluate(parse(text), ENV)


def test_free_vars_substitute_rename():
    e = parse("x1*u1 + sin(k)")
    assert free_vars(e) == {"x1", "u1", "k"}
    assert evaluate(substitute(e, {"u1": parse("2*x1")}), ENV) == pytest.approx(
        2 * 0.7**2 + math.sin(3.0)
    )
    assert free_vars(rename(e, {"u1": "xp1"})) == {"x1", "xp1", "k"}


def test_check_vocabulary():
    check_vocabulary(parse("x1 + k"), ["x1", "k"], "ctx")
    with pytest.raises(ModelError, match="u1"):
        check_vocabulary(parse("x1 + u1"), ["x1"], "ctx")


def test_linear_combination():
    e = linear_combination([(2.0, Var("x1")), (-1.0, Num(1.0)), (0.0, Var("u1")), (-3.0, Var("k"))])
    assert evaluate(e, ENV) == pytest.approx(2 * 0.7 - 1 - 9)
    assert to_text(linear_combination([])) == "0"


def test_printer_is_minimal():
    assert to_text(parse("(a + b)*c - (d - e)")) == "(a + b)*c - (d - e)"
    assert to_text(parse("a - b - c")) == "a - b - c"
    assert to_text(parse("a^(b^c)")) == "a^b^c"
    assert to_text(parse("(a^b)^c")) == "(a^b)^c"
    assert to_text(parse("-(a + b)")) == "-(a + b)"


def test_non_finite_literal_cannot_print():
    with pytest.raises(ValueError):
        to_text(Num(float("inf")))


@settings(max_examples=300, deadline=None)
@given(trees)
def test_print_parse_round_trip(tree):
    assert parse(to_text(tree)) == tree


@settings(max_examples=300, deadline=None)
@given(trees)
def test_compiled_matches_tree_walk(tree):
    try:
        expected = evaluate(tree, ENV)
    except (DomainError, OverflowError, ZeroDivisionError) as exc:
        with pytest.raises(type(exc)):
            compile_expr(tree)(ENV)
        return
    got = compile_expr(tree)(ENV)
    assume(not isinstance(expected, complex))
    assert got == expected or (math.isnan(got) and math.isnan(expected))


@settings(max_examples=100, deadline=None)
@given(trees)
def test_dual_evaluation_keeps_primal(tree):
    try:
        plain = evaluate(tree, ENV)
        tag = dual.new_tag()
        env = dict(ENV, x1=dual.Dual(ENV["x1"], 1.0, tag))
        d = evaluate(tree, env)
    except (DomainError, OverflowError, ZeroDivisionError):
        return
    assert dual.primal(d) == plain or (math.isnan(plain) and math.isnan(dual.primal(d)))
