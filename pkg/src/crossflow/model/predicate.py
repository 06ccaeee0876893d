"""Predicate / scalar expression mini-language over dataset columns.

Grammar (1-based positions in error reports):

    expr      := or_expr
    or_expr   := and_expr ("or" and_expr)*
    and_expr  := unary ("and" unary)*
    unary     := "not" unary | comparison
    comparison:= arith (("<"|"<="|"="|"!="|">="|">") arith)?
    arith     := term (("+"|"-") term)*
    term      := factor (("*"|"/") factor)*
    factor    := "-" factor | "(" expr ")" | literal | column

Literals: integers, floats, single/double-quoted strings, true, false.
Expressions are type-checked against a schema at parse time; a predicate
must type to bool. Comparing a timestamp column against an ISO-8601
string literal coerces the literal to a timestamp.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

from ..errors import PredicateSyntaxError, PredicateTypeError, UnknownColumn
from .schema import Schema

_CMP_OPS = ("<=", ">=", "!=", "<", ">", "=")
_NUMERIC = ("int64", "float64")


@dataclass(frozen=True)
class Token:
    kind: str  # num, str, ident, op, lparen, rparen, end
    text: str
    pos: int  # 1-based character position


def _tokenize(text: str) -> list[Token]:
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        pos = i + 1
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (text[j].isdigit() or (text[j] == "." and not seen_dot)):
                seen_dot = seen_dot or text[j] == "."
                j += 1
            tokens.append(Token("num", text[i:j], pos))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(Token("ident", text[i:j], pos))
            i = j
            continue
        if c in ("'", '"'):
            j = i + 1
            while j < n and text[j] != c:
                j += 1
            if j >= n:
                raise PredicateSyntaxError(f"unterminated string at position {pos}")
            tokens.append(Token("str", text[i + 1 : j], pos))
            i = j + 1
            continue
        if c == "(":
            tokens.append(Token("lparen", c, pos))
            i += 1
            continue
        if c == ")":
            tokens.append(Token("rparen", c, pos))
            i += 1
            continue
        two = text[i : i + 2]
        if two in ("<=", ">=", "!="):
            tokens.append(Token("op", two, pos))
            i += 2
            continue
        if c in "<>=+-*/":
            tokens.append(Token("op", c, pos))
            i += 1
            continue
        raise PredicateSyntaxError(f"unexpected character {c!r} at position {pos}")
    tokens.append(Token("end", "", n + 1))
    return tokens


@dataclass(frozen=True)
class Expr:
    """Base expression node; `type` is one of the schema attribute types or 'bool'."""

    type: str

    def columns(self) -> set[str]:
        return set()


@dataclass(frozen=True)
class ColumnRef(Expr):
    name: str

    def columns(self) -> set[str]:
        return {self.name}


@dataclass(frozen=True)
class Literal(Expr):
    value: object


@dataclass(frozen=True)
class Arith(Expr):
    op: str
    left: Expr
    right: Expr

    def columns(self) -> set[str]:
        return self.left.columns() | self.right.columns()


@dataclass(frozen=True)
class Negate(Expr):
    operand: Expr

    def columns(self) -> set[str]:
        return self.operand.columns()


@dataclass(frozen=True)
class Compare(Expr):
    op: str
    left: Expr
    right: Expr

    def columns(self) -> set[str]:
        return self.left.columns() | self.right.columns()


@dataclass(frozen=True)
class BoolOp(Expr):
    op: str  # "and" | "or"
    left: Expr
    right: Expr

    def columns(self) -> set[str]:
        return self.left.columns() | self.right.columns()


@dataclass(frozen=True)
class NotOp(Expr):
    operand: Expr

    def columns(self) -> set[str]:
        return self.operand.columns()


class _Parser:
    def __init__(self, tokens: list[Token], schema: Schema):
        self.tokens = tokens
        self.i = 0
        self.schema = schema

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_kind(self, kind: str, what: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            raise PredicateSyntaxError(f"expected {what} at position {tok.pos}")
        return self.next()

    def parse(self) -> Expr:
        expr = self.or_expr()
        tok = self.peek()
        if tok.kind != "end":
            raise PredicateSyntaxError(f"unexpected {tok.text!r} at position {tok.pos}")
        return expr

    def or_expr(self) -> Expr:
        left = self.and_expr()
        while self.peek().kind == "ident" and self.peek().text == "or":
            tok = self.next()
            right = self.and_expr()
            self._require_bool(left, tok)
            self._require_bool(right, tok)
            left = BoolOp("bool", "or", left, right)
        return left

    def and_expr(self) -> Expr:
        left = self.unary()
        while self.peek().kind == "ident" and self.peek().text == "and":
            tok = self.next()
            right = self.unary()
            self._require_bool(left, tok)
            self._require_bool(right, tok)
            left = BoolOp("bool", "and", left, right)
        return left

    def unary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "ident" and tok.text == "not":
            self.next()
            operand = self.unary()
            self._require_bool(operand, tok)
            return NotOp("bool", operand)
        return self.comparison()

    def comparison(self) -> Expr:
        left = self.arith()
        tok = self.peek()
        if tok.kind == "op" and tok.text in _CMP_OPS:
            self.next()
            right = self.arith()
            return self._make_compare(tok, left, right)
        return left

    def arith(self) -> Expr:
        left = self.term()
        while self.peek().kind == "op" and self.peek().text in ("+", "-"):
            tok = self.next()
            right = self.term()
            left = self._make_arith(tok, left, right)
        return left

    def term(self) -> Expr:
        left = self.factor()
        while self.peek().kind == "op" and self.peek().text in ("*", "/"):
            tok = self.next()
            right = self.factor()
            left = self._make_arith(tok, left, right)
        return left

    def factor(self) -> Expr:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.next()
            operand = self.factor()
            if operand.type not in _NUMERIC:
                raise PredicateTypeError(f"unary - needs a numeric operand at position {tok.pos}")
            return Negate(operand.type, operand)
        if tok.kind == "lparen":
            self.next()
            inner = self.or_expr()
            self.expect_kind("rparen", "')'")
            return inner
        if tok.kind == "num":
            self.next()
            if "." in tok.text:
                return Literal("float64", float(tok.text))
            return Literal("int64", int(tok.text))
        if tok.kind == "str":
            self.next()
            return Literal("string", tok.text)
        if tok.kind == "ident":
            self.next()
            if tok.text == "true":
                return Literal("bool", True)
            if tok.text == "false":
                return Literal("bool", False)
            if tok.text in ("and", "or", "not"):
                raise PredicateSyntaxError(f"unexpected {tok.text!r} at position {tok.pos}")
            if not self.schema.has(tok.text):
                raise UnknownColumn(f"column {tok.text!r} not in schema")
            return ColumnRef(self.schema.type_of(tok.text), tok.text)
        raise PredicateSyntaxError(f"expected an operand at position {tok.pos}")

    def _make_arith(self, tok: Token, left: Expr, right: Expr) -> Expr:
        for side in (left, right):
            if side.type not in _NUMERIC:
                raise PredicateTypeError(
                    f"arithmetic {tok.text!r} needs numeric operands, got {side.type} at position {tok.pos}"
                )
        if tok.text == "/" or "float64" in (left.type, right.type):
            result = "float64"
        else:
            result = "int64"
        return Arith(result, tok.text, left, right)

    def _make_compare(self, tok: Token, left: Expr, right: Expr) -> Expr:
        left, right = _coerce_timestamp(left, right, tok)
        lt, rt = left.type, right.type
        compatible = (
            (lt in _NUMERIC and rt in _NUMERIC)
            or lt == rt
        )
        if not compatible:
            raise PredicateTypeError(
                f"cannot compare {lt} with {rt} at position {tok.pos}"
            )
        if lt == "bool" and tok.text not in ("=", "!="):
            raise PredicateTypeError(f"bool supports only = and != at position {tok.pos}")
        return Compare("bool", tok.text, left, right)

    def _require_bool(self, expr: Expr, tok: Token):
        if expr.type != "bool":
            raise PredicateTypeError(
                f"{tok.text!r} needs boolean operands, got {expr.type} at position {tok.pos}"
            )


def _coerce_timestamp(left: Expr, right: Expr, tok: Token) -> tuple[Expr, Expr]:
    def coerce(lit: Expr) -> Expr:
        assert isinstance(lit, Literal)
        try:
            return Literal("timestamp", datetime.fromisoformat(str(lit.value)))
        except ValueError:
            raise PredicateTypeError(
                f"string literal {lit.value!r} is not an ISO-8601 timestamp at position {tok.pos}"
            )

    if left.type == "timestamp" and isinstance(right, Literal) and right.type == "string":
        return left, coerce(right)
    if right.type == "timestamp" and isinstance(left, Literal) and left.type == "string":
        return coerce(left), right
    return left, right


def parse_expression(text: str, schema: Schema) -> Expr:
    """Parse a scalar expression (any result type) against `schema`."""
    return _Parser(_tokenize(text), schema).parse()


def parse_predicate(text: str, schema: Schema) -> Expr:
    """Parse a predicate; the expression must type-check to bool."""
    expr = parse_expression(text, schema)
    if expr.type != "bool":
        raise PredicateTypeError(f"predicate must be boolean, got {expr.type}")
    return expr


def compile_expr(expr: Expr, schema: Schema):
    """Compile an expression to a callable over row tuples of `schema`.

    Column references are resolved to tuple indices at compile time, so
    per-row evaluation is a chain of closures with no dict lookups.
    """
    if isinstance(expr, ColumnRef):
        idx = schema.index_of(expr.name)
        return lambda row: row[idx]
    if isinstance(expr, Literal):
        value = expr.value
        return lambda row: value
    if isinstance(expr, Negate):
        inner = compile_expr(expr.operand, schema)
        return lambda row: -inner(row)
    if isinstance(expr, Arith):
        left = compile_expr(expr.left, schema)
        right = compile_expr(expr.right, schema)
        op = expr.op
        if op == "+":
            return lambda row: left(row) + right(row)
        if op == "-":
            return lambda row: left(row) - right(row)
        if op == "*":
            return lambda row: left(row) * right(row)
        return lambda row: left(row) / right(row)
    if isinstance(expr, Compare):
        left = compile_expr(expr.left, schema)
        right = compile_expr(expr.right, schema)
        op = expr.op
        if op == "<":
            return lambda row: left(row) < right(row)
        if op == "<=":
            return lambda row: left(row) <= right(row)
        if op == "=":
            return lambda row: left(row) == right(row)
        if op == "!=":
            return lambda row: left(row) != right(row)
        if op == ">=":
            return lambda row: left(row) >= right(row)
        return lambda row: left(row) > right(row)
    if isinstance(expr, BoolOp):
        left = compile_expr(expr.left, schema)
        right = compile_expr(expr.right, schema)
        if expr.op == "and":
            return lambda row: left(row) and right(row)
        return lambda row: left(row) or right(row)
    if isinstance(expr, NotOp):
        inner = compile_expr(expr.operand, schema)
        return lambda row: not inner(row)
    raise TypeError(f"unknown expression node {expr!r}")
