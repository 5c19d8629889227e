import math

import pytest
from hypothesis import given, settings, strategies as st

from semdeg import constraints as cx
from semdeg.constraints import (
    BinOp, Bool, DivisionByZero, Environment, EvalTypeError, Evaluator, ExprSyntaxError, Neg, Not,
    Num, Path, UnboundPath, environment_from, evaluate, parse, to_text, validate_bindings,
)
from semdeg.units import Quantity, UnitMismatch, temperature_registry

REG = temperature_registry()


def test_parse_examples():
    assert parse("ConNO > THREA") == BinOp(">", Path(("ConNO",)), Path(("THREA",)))
    assert parse("true") == Bool(True)
    assert parse("Weight * NoOfParts") == BinOp("*", Path(("Weight",)), Path(("NoOfParts",)))
    assert parse("80 [Fahrenheit]") == Num(80.0, "Fahrenheit")
    assert parse("Product.CommonParameter.Weight").parts == ("Product", "CommonParameter", "Weight")


def test_precedence():
    assert to_text(parse("a or b and not c")) == "a or b and not c"
    assert parse("a or b and c") == BinOp("or", Path(("a",)), BinOp("and", Path(("b",)), Path(("c",))))
    assert parse("1 + 2 * 3 < 4") == BinOp("<", BinOp("+", Num(1.0), BinOp("*", Num(2.0), Num(3.0))), Num(4.0))
    assert parse("(1 + 2) * 3") == BinOp("*", BinOp("+", Num(1.0), Num(2.0)), Num(3.0))
    assert parse("a - b - c") == BinOp("-", BinOp("-", Path(("a",)), Path(("b",))), Path(("c",)))
    assert parse("-a * b") == BinOp("*", Neg(Path(("a",))), Path(("b",)))


def test_unicode_operators():
    assert parse("a ≤ b × c") == parse("a <= b * c")
    assert parse("a ≠ b") == parse("a != b")


@pytest.mark.parametrize("text,offset", [
    ("", 0), ("a >", 3), ("a > b > c", 6), ("(a + b", 6), ("a $ b", 2), ("°C > 1", 0),
    ("x ≥ ) ", 6), ("1 []", 2),
])
def test_syntax_error_offsets(text, offset):
    with pytest.raises(ExprSyntaxError) as info:
        parse(text)
    assert info.value.offset == offset


def test_evaluate_examples():
    env = environment_from({"ConNO": 0.4, "THREA": 0.3})
    assert evaluate("ConNO > THREA", env) is True
    env = Environment().bind("temp", Quantity(30.0, "Celsius"))
    assert evaluate("temp > 80 [Fahrenheit]", env, REG) is True
    assert evaluate("temp < 87 [Fahrenheit]", env, REG) is True
    assert evaluate("temp = 86 [Fahrenheit]", env, REG) is True
    with pytest.raises(UnitMismatch):
        evaluate("temp + 5 [Kilogram]", env, REG)


def test_arithmetic_rules():
    env = Environment().bind("w", Quantity(50.0, "Gram")).bind("n", 20)
    r = evaluate("w * n", env)
    assert r == Quantity(1000.0, "Gram")
    assert evaluate("w / 2", env) == Quantity(25.0, "Gram")
    assert evaluate("w - 10 [Gram]", env) == Quantity(40.0, "Gram")
    with pytest.raises(UnitMismatch):
        evaluate("w * w", env)
    with pytest.raises(UnitMismatch):
        evaluate("w + 1", env)
    with pytest.raises(UnitMismatch):
        evaluate("w > 1", env)
    with pytest.raises(DivisionByZero):
        evaluate("w / 0", env)


def test_type_errors_and_unbound():
    env = environment_from({"x": 1.0, "flag": True})
    with pytest.raises(EvalTypeError):
        evaluate("flag + 1", env)
    with pytest.raises(EvalTypeError):
        evaluate("not x", env)
    with pytest.raises(EvalTypeError):
        evaluate("flag < true", env)
    assert evaluate("flag = true", env) is True
    with pytest.raises(UnboundPath, match="unbound path y.z"):
        evaluate("y.z > 1", env)


def test_short_circuit():
    env = environment_from({"x": 1.0})
    assert evaluate("x > 2 and missing > 0", env) is False
    assert evaluate("x < 2 or missing > 0", env) is True


def test_tolerant_equality():
    env = environment_from({"x": 0.1 + 0.2})
    assert evaluate("x = 0.3", env) is True
    assert evaluate("x <= 0.3", env) is True
    assert evaluate("x > 0.3", env) is False


def test_validate_bindings():
    env = Environment()
    env.bind("a", Quantity(1.0, "Fahrenheit")).bind("b", Quantity(1.0, "Celsius"))
    env.bind("c", Quantity(1.0, "Kilogram")).bind("d", 3.0)
    env.expected_units.update(a="Celsius", b="Celsius", c="Celsius", d="Celsius", e="Celsius")
    got = {v.path: v.reason for v in validate_bindings(env, REG)}
    assert got == {"c": "no conversion path", "d": "dimensionless value", "e": "unbound"}


def test_environment_round_trip():
    text = "BIND\tP.w\t50\tGram\nBIND\tP.n\t20\t-\nBIND\tok\ttrue\t-\nEXPECT\tP.w\tGram\n"
    env = cx.loads_environment(text)
    assert env.bindings["P.w"] == Quantity(50.0, "Gram")
    assert env.bindings["ok"] is True
    assert cx.loads_environment(cx.dumps_environment(env)) == env
    with pytest.raises(ValueError, match="duplicate"):
        cx.loads_environment("BIND\tx\t1\nBIND\tx\t2\n")


# ---------------------------------------------------------------------------
# Random expressions

NAMES = st.sampled_from(["a", "b", "Product.Weight", "x1", "T.temp"])
leaves = st.one_of(
    st.builds(Num, st.floats(0, 1e6, allow_nan=False), st.sampled_from([None, "Celsius", "Gram"])),
    st.builds(Bool, st.booleans()),
    st.builds(lambda n: Path(tuple(n.split("."))), NAMES),
)
OPS = ["or", "and", *cx.COMPARISONS, "+", "-", "*", "/"]


def _extend(children):
    return st.one_of(
        st.builds(Neg, children),
        st.builds(Not, children),
        st.builds(BinOp, st.sampled_from(OPS), children, children),
    )


exprs = st.recursive(leaves, _extend, max_leaves=30)


@given(exprs)
def test_print_parse_round_trip(e):
    assert parse(to_text(e)) == e


@given(exprs, st.fixed_dictionaries({
    "a": st.floats(-100, 100), "b": st.booleans(), "Product.Weight": st.floats(0, 10),
    "x1": st.just(Quantity(3.0, "Celsius")), "T.temp": st.just(Quantity(50.0, "Fahrenheit")),
}))
@settings(max_examples=300)
def test_evaluation_total_and_bounded(e, values):
    ev = Evaluator(environment_from(values), REG)
    try:
        ev(e)
    except (cx.ConstraintError, UnitMismatch):
        pass
    assert ev.visits <= cx.size(e)


@given(st.floats(-500, 500), st.floats(-500, 500))
def test_converted_comparison_is_order_consistent(x, y):
    env = Environment().bind("a", Quantity(x, "Celsius")).bind("b", Quantity(y, "Fahrenheit"))
    in_a = evaluate("a < b", env, REG)
    in_b = not evaluate("b <= a", env, REG)
    assert in_a == in_b


def test_paths_and_size():
    e = parse("Product.CommonParameter.Weight * Product.CommonParameter.NoOfParts > 1 [Gram]")
    assert cx.paths(e) == ["Product.CommonParameter.NoOfParts", "Product.CommonParameter.Weight"]
    assert cx.size(e) == 5
    assert math.isfinite(cx.size(parse("true")))
