"""Parser and evaluator for scalar coefficient expressions.

Grammar (plain ASCII, standard precedence)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?          # right-associative
    atom   := NUMBER | NAME | NAME "(" expr ")" | "(" expr ")"

Functions are limited to sin, cos, exp, log; every other name must be a
coordinate of the chart the source is parsed against, so an expression is
smooth wherever it is defined. Evaluation is generic over the scalar type:
feeding ``Dual`` seeds yields exact gradients in one sweep, ``HyperDual``
seeds yield exact second derivatives one (row, column) pair at a time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from . import dual
from .chart import ChartSpec
from .dual import Dual, HyperDual
from .errors import EvaluationDomainError, UnknownIdentifierError

__all__ = [
    "Expression",
    "parse",
    "evaluate",
    "eval_with_gradient",
    "hessian_block",
]

FUNCTIONS = {"sin": dual.sin, "cos": dual.cos, "exp": dual.exp, "log": dual.log}


# --- AST ---------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    operand: "Node"


Node = Union[Num, Var, Neg, BinOp, Call]


@dataclass(frozen=True)
class Expression:
    """Parsed expression bound to a chart.

    Immutable after construction; evaluation is a pure function of the
    bindings, so expressions are safe to share across workers.
    """

    root: Node
    chart: ChartSpec
    names: frozenset

    def to_source(self) -> str:
        return to_source(self.root)

    def rebind(self, chart: ChartSpec) -> "Expression":
        """Attach the same AST to a larger chart (e.g. after thickening)."""
        unknown = self.names - set(chart.coords)
        if unknown:
            raise UnknownIdentifierError(sorted(unknown)[0])
        return Expression(self.root, chart, self.names)

    def __str__(self):
        return self.to_source()


# --- tokenizer / parser -------------------------------------------------


@dataclass(frozen=True)
class _Token:
    kind: str  # "number" | "name" | "op" | "end"
    text: str
    position: int


def _tokenize(source: str):
    if not source.isascii():
        raise SyntaxError(f"non-ASCII input: {source!r}")
    tokens = []
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or ch == ".":
            j = i
            seen_dot = False
            while j < n and (source[j].isdigit() or (source[j] == "." and not seen_dot)):
                seen_dot = seen_dot or source[j] == "."
                j += 1
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k].isdigit():
                    j = k
                    while j < n and source[j].isdigit():
                        j += 1
            text = source[i:j]
            try:
                float(text)
            except ValueError:
                raise SyntaxError(f"bad number {text!r} at position {i}") from None
            tokens.append(_Token("number", text, i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(_Token("name", source[i:j], i))
            i = j
            continue
        if ch in "+-*/^()":
            tokens.append(_Token("op", ch, i))
            i += 1
            continue
        raise SyntaxError(f"unexpected character {ch!r} at position {i}")
    tokens.append(_Token("end", "", n))
    return tokens


class _Parser:
    def __init__(self, tokens, chart):
        self.tokens = tokens
        self.pos = 0
        self.chart = chart
        self.names = set()

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, text):
        tok = self.peek()
        if tok.kind != "op" or tok.text != text:
            raise SyntaxError(
                f"expected {text!r} at position {tok.position}, found {tok.text or 'end of input'!r}"
            )
        return self.advance()

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise SyntaxError(
                f"expected end of input at position {tok.position}, found {tok.text!r}"
            )
        return node

    def expr(self):
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek().kind == "op" and self.peek().text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.advance()
            node = BinOp("^", node, self.unary())
        return node

    def atom(self):
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "name":
            self.advance()
            if self.peek().kind == "op" and self.peek().text == "(":
                if tok.text not in FUNCTIONS:
                    raise SyntaxError(
                        f"unknown function {tok.text!r} at position {tok.position}"
                    )
                self.advance()
                inner = self.expr()
                self.expect_op(")")
                return Call(tok.text, inner)
            if tok.text not in self.chart.index:
                raise UnknownIdentifierError(tok.text, tok.position)
            self.names.add(tok.text)
            return Var(tok.text)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            inner = self.expr()
            self.expect_op(")")
            return inner
        raise SyntaxError(
            f"expected a value at position {tok.position}, found {tok.text or 'end of input'!r}"
        )


def parse(source: str, chart: ChartSpec) -> Expression:
    parser = _Parser(_tokenize(source), chart)
    root = parser.parse()
    return Expression(root, chart, frozenset(parser.names))


# --- evaluation ---------------------------------------------------------


def _constant_of(node):
    """Value of a literal (possibly negated) constant node, else None."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Neg):
        inner = _constant_of(node.operand)
        return None if inner is None else -inner
    return None


def _eval(node, bindings):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return bindings[node.name]
    if isinstance(node, Neg):
        return -_eval(node.operand, bindings)
    if isinstance(node, Call):
        arg = _eval(node.operand, bindings)
        try:
            return FUNCTIONS[node.func](arg)
        except ValueError as err:
            raise EvaluationDomainError(to_source(node), str(err)) from None
    op = node.op
    left = _eval(node.left, bindings)
    if op == "^":
        exponent = _constant_of(node.right)
        try:
            if exponent is not None:
                return dual.power(left, exponent)
            # General exponent: a^b = exp(b log a), positive base required.
            return dual.exp(_eval(node.right, bindings) * dual.log(left))
        except (ValueError, ZeroDivisionError) as err:
            raise EvaluationDomainError(to_source(node), str(err)) from None
    right = _eval(node.right, bindings)
    if op == "+":
        return left + right
    if op == "-":
        return left - right
    if op == "*":
        return left * right
    try:
        return left / right
    except ZeroDivisionError:
        raise EvaluationDomainError(to_source(node), "division by zero") from None


def _as_bindings(expr, point):
    if isinstance(point, dict):
        return point
    return expr.chart.bindings(point)


def evaluate(expr: Expression, point) -> float:
    """Evaluate at a point given as {name: value} or an array in chart order."""
    return float(_eval(expr.root, _as_bindings(expr, point)))


def evaluate_scalars(expr: Expression, bindings) -> object:
    """Evaluate with caller-provided scalars (floats, Dual, HyperDual)."""
    return _eval(expr.root, bindings)


def eval_with_gradient(expr: Expression, point, order=None):
    """Value and gradient in one dual-number sweep.

    `order` selects and orders the differentiation coordinates; it defaults
    to the full chart order.
    """
    bindings = _as_bindings(expr, point)
    names = tuple(order) if order is not None else expr.chart.coords
    width = len(names)
    slot = {name: i for i, name in enumerate(names)}
    seeded = {}
    for name in expr.names:
        value = bindings[name]
        if name in slot:
            seeded[name] = Dual.seed(value, slot[name], width)
        else:
            seeded[name] = Dual.constant(value, width)
    out = _eval(expr.root, seeded)
    if isinstance(out, Dual):
        return float(out.value), np.asarray(out.partials, dtype=float)
    return float(out), np.zeros(width)


def hessian_block(expr: Expression, point, rows, cols) -> np.ndarray:
    """Matrix of second partials d^2 expr / d rows_i d cols_j via nested duals.

    When rows == cols the result is symmetrized; the two evaluation orders
    are arithmetically identical, so the applied correction is zero and the
    block is exactly symmetric.
    """
    bindings = _as_bindings(expr, point)
    rows = tuple(rows)
    cols = tuple(cols)
    out = np.zeros((len(rows), len(cols)))
    symmetric = rows == cols

    def entry(a, b):
        seeded = {}
        for name in expr.names:
            value = bindings[name]
            seeded[name] = HyperDual(
                value, 1.0 if name == a else 0.0, 1.0 if name == b else 0.0, 0.0
            )
        result = _eval(expr.root, seeded)
        return result.d12 if isinstance(result, HyperDual) else 0.0

    for i, a in enumerate(rows):
        j_start = i if symmetric else 0
        for j in range(j_start, len(cols)):
            out[i, j] = entry(a, cols[j])
            if symmetric and j != i:
                out[j, i] = out[i, j]
    if symmetric:
        out = 0.5 * (out + out.T)
    return out


# --- printing -----------------------------------------------------------

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _num_text(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def _prec(node):
    if isinstance(node, BinOp):
        return _PRECEDENCE[node.op]
    if isinstance(node, Neg):
        return 3
    return 5


def to_source(node) -> str:
    """Render an AST back to grammar source (round-trips through parse)."""
    if isinstance(node, Num):
        return _num_text(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.operand)})"
    if isinstance(node, Neg):
        inner = to_source(node.operand)
        if _prec(node.operand) < 3:
            inner = f"({inner})"
        return f"-{inner}"
    prec = _PRECEDENCE[node.op]
    left = to_source(node.left)
    right = to_source(node.right)
    # '-' and '/' do not associate on the right; '^' associates only on the right.
    if _prec(node.left) < prec or (node.op == "^" and _prec(node.left) == prec):
        left = f"({left})"
    if _prec(node.right) < prec or (
        node.op in ("-", "/") and _prec(node.right) == prec
    ):
        right = f"({right})"
    if node.op in ("+", "-"):
        return f"{left} {node.op} {right}"
    return f"{left}{node.op}{right}"


# --- node builders (used to assemble Lagrangians symbolically) ----------


def node_num(value) -> Node:
    return Num(float(value))


def node_var(name) -> Node:
    return Var(name)


def is_zero(node) -> bool:
    return isinstance(node, Num) and node.value == 0.0


def node_add(a, b) -> Node:
    if is_zero(a):
        return b
    if is_zero(b):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return BinOp("+", a, b)


def node_sub(a, b) -> Node:
    if is_zero(b):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if is_zero(a):
        return Neg(b)
    return BinOp("-", a, b)


def node_mul(a, b) -> Node:
    if is_zero(a) or is_zero(b):
        return Num(0.0)
    if isinstance(a, Num) and a.value == 1.0:
        return b
    if isinstance(b, Num) and b.value == 1.0:
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return BinOp("*", a, b)


def node_sum(nodes) -> Node:
    out = Num(0.0)
    for node in nodes:
        out = node_add(out, node)
    return out


def collect_names(node) -> frozenset:
    if isinstance(node, Var):
        return frozenset({node.name})
    if isinstance(node, Neg):
        return collect_names(node.operand)
    if isinstance(node, Call):
        return collect_names(node.operand)
    if isinstance(node, BinOp):
        return collect_names(node.left) | collect_names(node.right)
    return frozenset()


def expression_from_node(node: Node, chart: ChartSpec) -> Expression:
    names = collect_names(node)
    unknown = names - set(chart.coords)
    if unknown:
        raise UnknownIdentifierError(sorted(unknown)[0])
    return Expression(node, chart, names)
