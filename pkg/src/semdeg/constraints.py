"""Predicate language over tagged, unit-carrying data points.

Grammar, loosest binding first::

    expr    := or
    or      := and ("or" and)*
    and     := cmp ("and" cmp)*
    cmp     := sum (CMPOP sum)?            # comparisons do not chain
    sum     := product (("+" | "-") product)*
    product := unary (("*" | "/") unary)*
    unary   := ("-" | "not") unary | atom
    atom    := NUMBER ["[" UNIT "]"] | "true" | "false" | PATH | "(" expr ")"

Evaluation is one bottom-up pass over a finite tree, so it always terminates
and visits each node at most once.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

from semdeg.units import (
    ConverterRegistry,
    NoConverterPath,
    Quantity,
    UnitMismatch,
    close,
)


class ConstraintError(Exception):
    pass


class ExprSyntaxError(ConstraintError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


class UnboundPath(ConstraintError):
    def __init__(self, path: str):
        super().__init__(f"unbound path {path}")
        self.path = path


class DivisionByZero(ConstraintError):
    pass


class EvalTypeError(ConstraintError):
    pass


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float
    unit: Optional[str] = None


@dataclass(frozen=True)
class Bool:
    value: bool


@dataclass(frozen=True)
class Path:
    parts: tuple[str, ...]

    @property
    def dotted(self) -> str:
        return ".".join(self.parts)


@dataclass(frozen=True)
class Neg:
    operand: Expr


@dataclass(frozen=True)
class Not:
    operand: Expr


@dataclass(frozen=True)
class BinOp:
    op: str
    left: Expr
    right: Expr


Expr = Union[Num, Bool, Path, Neg, Not, BinOp]

COMPARISONS = ("<", "<=", "=", ">=", ">", "!=")
_PREC = {"or": 1, "and": 2, **{c: 3 for c in COMPARISONS}, "+": 4, "-": 4, "*": 5, "/": 5}
_UNARY_PREC = 6
_ALIASES = {"≤": "<=", "≥": ">=", "≠": "!=", "==": "=", "×": "*", "·": "*", "÷": "/", "−": "-"}

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<unit>\[[^\[\]]*\])
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*)
  | (?P<op><=|>=|!=|==|[<>=+\-*/()≤≥≠×·÷−])
""", re.VERBOSE)

_KEYWORDS = {"and", "or", "not", "true", "false"}


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int  # character offset


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    i = 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if not m:
            raise ExprSyntaxError(f"unexpected character {text[i]!r}", _byte_offset(text, i))
        kind = m.lastgroup
        value = m.group()
        if kind == "name" and value in _KEYWORDS:
            kind = "kw"
        elif kind == "op":
            value = _ALIASES.get(value, value)
        if kind != "ws":
            toks.append(_Tok(kind, value, i))
        i = m.end()
    toks.append(_Tok("eof", "", len(text)))
    return toks


def _byte_offset(text: str, char_index: int) -> int:
    return len(text[:char_index].encode("utf-8"))


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def error(self, message: str, tok: Optional[_Tok] = None) -> ExprSyntaxError:
        tok = tok or self.peek()
        return ExprSyntaxError(message, _byte_offset(self.text, tok.pos))

    def binop_of(self, tok: _Tok) -> Optional[str]:
        if tok.kind == "op" and tok.text in _PREC:
            return tok.text
        if tok.kind == "kw" and tok.text in ("and", "or"):
            return tok.text
        return None

    def parse(self) -> Expr:
        if self.peek().kind == "eof":
            raise self.error("empty expression")
        expr = self.expr(1)
        if self.peek().kind != "eof":
            raise self.error(f"unexpected {self.peek().text!r}")
        return expr

    def expr(self, min_prec: int) -> Expr:
        left = self.unary()
        while True:
            tok = self.peek()
            op = self.binop_of(tok)
            if op is None or _PREC[op] < min_prec:
                return left
            self.advance()
            prec = _PREC[op]
            right = self.expr(prec + 1)
            if op in COMPARISONS:
                nxt = self.binop_of(self.peek())
                if nxt in COMPARISONS:
                    raise self.error("comparisons cannot be chained")
            left = BinOp(op, left, right)

    def unary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            return Neg(self.unary())
        if tok.kind == "kw" and tok.text == "not":
            self.advance()
            return Not(self.unary())
        return self.atom()

    def atom(self) -> Expr:
        tok = self.advance()
        if tok.kind == "num":
            unit = None
            if self.peek().kind == "unit":
                utok = self.advance()
                unit = utok.text[1:-1].strip()
                if not unit:
                    raise self.error("empty unit annotation", utok)
            return Num(float(tok.text), unit)
        if tok.kind == "kw" and tok.text in ("true", "false"):
            return Bool(tok.text == "true")
        if tok.kind == "name":
            return Path(tuple(tok.text.split(".")))
        if tok.kind == "op" and tok.text == "(":
            inner = self.expr(1)
            if self.peek().text != ")":
                raise self.error("expected ')'")
            self.advance()
            return inner
        if tok.kind == "eof":
            raise self.error("unexpected end of expression", tok)
        raise self.error(f"unexpected {tok.text!r}", tok)


def parse(text: str) -> Expr:
    return _Parser(text).parse()


def to_text(expr: Expr) -> str:
    """Render ``expr`` with the minimum parentheses needed to reparse it."""
    return _render(expr, 0)


def _render(e: Expr, ctx: int) -> str:
    if isinstance(e, Num):
        # The parser only yields non-negative literals; "-" becomes Neg.
        s = repr(float(e.value))
        if e.unit:
            s = f"{s} [{e.unit}]"
        return s
    if isinstance(e, Bool):
        return "true" if e.value else "false"
    if isinstance(e, Path):
        return e.dotted
    if isinstance(e, (Neg, Not)):
        prefix = "-" if isinstance(e, Neg) else "not "
        s = prefix + _render(e.operand, _UNARY_PREC)
        return f"({s})" if ctx > _UNARY_PREC else s
    prec = _PREC[e.op]
    # Left-associative: the right operand needs parentheses at equal precedence.
    # Comparisons are non-associative: both sides do.
    left_ctx = prec + 1 if e.op in COMPARISONS else prec
    s = f"{_render(e.left, left_ctx)} {e.op} {_render(e.right, prec + 1)}"
    return f"({s})" if prec < ctx else s


def size(expr: Expr) -> int:
    if isinstance(expr, (Neg, Not)):
        return 1 + size(expr.operand)
    if isinstance(expr, BinOp):
        return 1 + size(expr.left) + size(expr.right)
    return 1


def paths(expr: Expr) -> list[str]:
    out: list[str] = []

    def walk(e: Expr) -> None:
        if isinstance(e, Path):
            out.append(e.dotted)
        elif isinstance(e, (Neg, Not)):
            walk(e.operand)
        elif isinstance(e, BinOp):
            walk(e.left)
            walk(e.right)

    walk(expr)
    return sorted(set(out))


# ---------------------------------------------------------------------------
# Evaluation

Value = Union[bool, Quantity]


@dataclass
class Environment:
    bindings: dict[str, Value] = field(default_factory=dict)
    expected_units: dict[str, str] = field(default_factory=dict)

    def bind(self, path: str, value: Union[Value, float, int]) -> Environment:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = Quantity(float(value))
        self.bindings[path] = value
        return self


class Evaluator:
    """Single-pass evaluator; ``visits`` counts AST nodes evaluated."""

    def __init__(self, env: Environment, registry: Optional[ConverterRegistry] = None, kb=None):
        self.env = env
        self.registry = registry
        self.kb = kb
        self.visits = 0

    def __call__(self, expr: Expr) -> Value:
        self.visits += 1
        if isinstance(expr, Num):
            return Quantity(expr.value, expr.unit)
        if isinstance(expr, Bool):
            return expr.value
        if isinstance(expr, Path):
            try:
                return self.env.bindings[expr.dotted]
            except KeyError:
                raise UnboundPath(expr.dotted) from None
        if isinstance(expr, Neg):
            v = self._number(self(expr.operand), "-")
            return Quantity(-v.magnitude, v.unit)
        if isinstance(expr, Not):
            return not self._bool(self(expr.operand), "not")
        op = expr.op
        if op in ("and", "or"):
            left = self._bool(self(expr.left), op)
            if (op == "and" and not left) or (op == "or" and left):
                return left
            return self._bool(self(expr.right), op)
        left, right = self(expr.left), self(expr.right)
        if op in COMPARISONS:
            return self._compare(op, left, right)
        return self._arith(op, self._number(left, op), self._number(right, op))

    def _bool(self, v: Value, op: str) -> bool:
        if not isinstance(v, bool):
            raise EvalTypeError(f"'{op}' needs a boolean, got {v}")
        return v

    def _number(self, v: Value, op: str) -> Quantity:
        if not isinstance(v, Quantity):
            raise EvalTypeError(f"'{op}' needs a number, got {v}")
        return v

    def _canon(self, unit: Optional[str]) -> Optional[str]:
        if unit is not None and self.kb is not None and self.kb.has_term(unit):
            return self.kb.canonicalize(unit)
        return unit

    def _to_unit(self, q: Quantity, unit: Optional[str]) -> Quantity:
        if self._canon(q.unit) == self._canon(unit):
            return Quantity(q.magnitude, unit)
        if q.unit is None or unit is None or self.registry is None:
            raise UnitMismatch(f"cannot compare {q.unit or 'dimensionless'} with {unit or 'dimensionless'}")
        try:
            chain = self.registry.find_chain(q.unit, unit)
        except NoConverterPath as exc:
            raise UnitMismatch(str(exc)) from None
        scale, offset = chain.composed
        return Quantity(scale * q.magnitude + offset, unit)

    def _compare(self, op: str, left: Value, right: Value) -> bool:
        if isinstance(left, bool) or isinstance(right, bool):
            if not (isinstance(left, bool) and isinstance(right, bool)) or op not in ("=", "!="):
                raise EvalTypeError(f"'{op}' cannot compare {left} and {right}")
            return (left == right) if op == "=" else (left != right)
        a = left.magnitude
        b = self._to_unit(right, left.unit).magnitude
        eq = close(a, b)
        if op == "=":
            return eq
        if op == "!=":
            return not eq
        if op == "<":
            return a < b and not eq
        if op == "<=":
            return a < b or eq
        if op == ">":
            return a > b and not eq
        return a > b or eq

    def _arith(self, op: str, a: Quantity, b: Quantity) -> Quantity:
        if op in ("+", "-"):
            if self._canon(a.unit) != self._canon(b.unit):
                raise UnitMismatch(
                    f"'{op}' across units {a.unit or 'dimensionless'} and {b.unit or 'dimensionless'}")
            m = a.magnitude + b.magnitude if op == "+" else a.magnitude - b.magnitude
            return Quantity(m, a.unit)
        if a.unit is not None and b.unit is not None:
            raise UnitMismatch(f"'{op}' of two unit-carrying values ({a.unit}, {b.unit})")
        unit = a.unit if a.unit is not None else b.unit
        if op == "*":
            return Quantity(a.magnitude * b.magnitude, unit)
        if b.magnitude == 0:
            raise DivisionByZero("division by zero")
        if b.unit is not None:
            raise UnitMismatch(f"division by a unit-carrying value ({b.unit})")
        return Quantity(a.magnitude / b.magnitude, unit)


def evaluate(expr: Union[Expr, str], env: Environment,
             registry: Optional[ConverterRegistry] = None, kb=None) -> Value:
    if isinstance(expr, str):
        expr = parse(expr)
    return Evaluator(env, registry, kb)(expr)


@dataclass(frozen=True)
class Violation:
    path: str
    expected: str
    actual: Optional[str]
    reason: str


def validate_bindings(env: Environment, registry: Optional[ConverterRegistry] = None) -> list[Violation]:
    violations = []
    for path in sorted(env.expected_units):
        expected = env.expected_units[path]
        if path not in env.bindings:
            violations.append(Violation(path, expected, None, "unbound"))
            continue
        value = env.bindings[path]
        if isinstance(value, bool):
            violations.append(Violation(path, expected, None, "boolean where quantity expected"))
            continue
        if value.unit == expected:
            continue
        if value.unit is None:
            violations.append(Violation(path, expected, None, "dimensionless value"))
        elif registry is None or not (registry.known(value.unit) and registry.known(expected)) \
                or not registry.reachable(value.unit, expected):
            violations.append(Violation(path, expected, value.unit, "no conversion path"))
    return violations


# ---------------------------------------------------------------------------
# BIND<TAB>path<TAB>magnitude<TAB>unit and EXPECT<TAB>path<TAB>unit records


def loads_environment(text: str) -> Environment:
    env = Environment()
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        cols = raw.split("\t")
        if cols[0] == "BIND" and len(cols) in (3, 4):
            path, mag = cols[1], cols[2].strip()
            unit = cols[3].strip() if len(cols) == 4 and cols[3].strip() not in ("", "-") else None
            if mag in ("true", "false"):
                if unit is not None:
                    raise ValueError(f"line {lineno}: boolean binding cannot carry a unit")
                value: Value = mag == "true"
            else:
                try:
                    value = Quantity(float(mag), unit)
                except ValueError:
                    raise ValueError(f"line {lineno}: bad magnitude {mag!r}") from None
            if path in env.bindings:
                raise ValueError(f"line {lineno}: duplicate path {path}")
            env.bindings[path] = value
        elif cols[0] == "EXPECT" and len(cols) == 3:
            env.expected_units[cols[1]] = cols[2].strip()
        else:
            raise ValueError(f"line {lineno}: malformed record {raw!r}")
    return env


def dumps_environment(env: Environment) -> str:
    lines = []
    for path in sorted(env.bindings):
        v = env.bindings[path]
        if isinstance(v, bool):
            lines.append(f"BIND\t{path}\t{'true' if v else 'false'}\t-")
        else:
            lines.append(f"BIND\t{path}\t{v.magnitude!r}\t{v.unit or '-'}")
    for path in sorted(env.expected_units):
        lines.append(f"EXPECT\t{path}\t{env.expected_units[path]}")
    return "\n".join(lines) + "\n"


def environment_from(values: Mapping[str, Union[Value, float]]) -> Environment:
    env = Environment()
    for k, v in values.items():
        env.bind(k, v)
    return env
