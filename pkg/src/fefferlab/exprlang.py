"""A small expression language for complex scalar fields on the chart.

Grammar (whitespace insignificant)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := atom ('^' int)?
    atom   := number | 'i' | 'pi' | ident | func '(' expr ')' | '(' expr ')' | '-' atom

Identifiers are the chart coordinates ``x, y, u, phi`` plus the constants
``i`` and ``pi``; functions are ``sin cos tan exp log sqrt conj``.  Unary
minus binds looser than ``^`` (``-x^2`` is ``-(x^2)``) and exponents are
integers, optionally signed, with ``^`` chaining to the right.

Parsed trees evaluate either to plain complex arrays or to :class:`Jet`
objects.  Errors carry the byte offset into the source text.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .jets import Jet, SingularInputError, coordinate_seeds, jet_apply

COORDINATES = ("x", "y", "u", "phi")
CONSTANTS = ("i", "pi")
FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "conj")
MAX_EXPONENT = 64


class ExprSyntaxError(ValueError):
    """Syntax error with the byte offset of the offending token."""

    def __init__(self, message: str, offset: int, expected: frozenset[str] = frozenset()):
        self.offset = offset
        self.expected = expected
        detail = f" (expected one of: {', '.join(sorted(expected))})" if expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class UnknownIdentifierError(ExprSyntaxError):
    pass


class ExprEvaluationError(SingularInputError):
    """A domain error raised while evaluating a subexpression."""

    def __init__(self, message: str, offset: int, snippet: str):
        self.offset = offset
        self.snippet = snippet
        super().__init__(f"{message} in '{snippet}' at offset {offset}")


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float
    offset: int = 0


@dataclass(frozen=True)
class Const:
    name: str  # "i" or "pi"
    offset: int = 0


@dataclass(frozen=True)
class Var:
    name: str
    offset: int = 0


@dataclass(frozen=True)
class Neg:
    arg: "Node"
    offset: int = 0


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"
    offset: int = 0


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int
    offset: int = 0


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"
    offset: int = 0


Node = Union[Num, Const, Var, Neg, BinOp, Pow, Call]


@dataclass(frozen=True)
class ScalarFieldExpr:
    """A parsed expression together with its source text."""

    ast: Node
    source: str

    @property
    def uses_conj(self) -> bool:
        return _contains_conj(self.ast)

    def __str__(self) -> str:
        return pretty(self.ast)


def _contains_conj(node: Node) -> bool:
    if isinstance(node, Call):
        return node.func == "conj" or _contains_conj(node.arg)
    if isinstance(node, BinOp):
        return _contains_conj(node.left) or _contains_conj(node.right)
    if isinstance(node, (Neg,)):
        return _contains_conj(node.arg)
    if isinstance(node, Pow):
        return _contains_conj(node.base)
    return False


# ---------------------------------------------------------------------------
# Tokenizer and recursive-descent parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # num, ident, op, end
    text: str
    offset: int


def _tokenize(source: str) -> list[_Tok]:
    encoded_offsets = _byte_offsets(source)
    tokens: list[_Tok] = []
    pos = 0
    while True:
        while pos < len(source) and source[pos].isspace():
            pos += 1
        if pos >= len(source):
            tokens.append(_Tok("end", "", encoded_offsets[len(source)]))
            return tokens
        m = _TOKEN.match(source, pos)
        if not m or m.end() == pos:
            raise ExprSyntaxError(
                f"unexpected character {source[pos]!r}", encoded_offsets[pos]
            )
        kind = m.lastgroup or "op"
        start = m.start(kind)
        tokens.append(_Tok(kind, m.group(kind), encoded_offsets[start]))
        pos = m.end()


def _byte_offsets(source: str) -> list[int]:
    out = [0]
    for ch in source:
        out.append(out[-1] + len(ch.encode("utf-8")))
    return out


_ATOM_START = frozenset({"number", "identifier", "(", "-"})


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.pos = 0

    @property
    def tok(self) -> _Tok:
        return self.tokens[self.pos]

    def advance(self) -> _Tok:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str) -> _Tok:
        if self.tok.kind == "op" and self.tok.text == op:
            return self.advance()
        raise ExprSyntaxError(f"unexpected {self._describe()}", self.tok.offset, frozenset({op}))

    def _describe(self) -> str:
        return "end of input" if self.tok.kind == "end" else f"token {self.tok.text!r}"

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            raise ExprSyntaxError(
                f"unexpected {self._describe()}",
                self.tok.offset,
                frozenset({"+", "-", "*", "/", "^", "end of input"}),
            )
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance()
            node = BinOp(op.text, node, self.term(), op.offset)
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance()
            node = BinOp(op.text, node, self.factor(), op.offset)
        return node

    def factor(self) -> Node:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            op = self.advance()
            return Pow(base, self.exponent(), op.offset)
        return base

    def exponent(self) -> int:
        sign = 1
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            sign = -1
        tok = self.tok
        if tok.kind != "num" or not tok.text.isdigit():
            raise ExprSyntaxError(
                f"unexpected {self._describe()}", tok.offset, frozenset({"integer exponent"})
            )
        self.advance()
        value = int(tok.text)
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            inner = self.exponent()
            if inner < 0 or abs(value) > MAX_EXPONENT and inner > 1:
                raise ExprSyntaxError("exponent out of range", tok.offset)
            value = value**inner
        value *= sign
        if abs(value) > MAX_EXPONENT:
            raise ExprSyntaxError(f"exponent {value} exceeds {MAX_EXPONENT}", tok.offset)
        return value

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text), tok.offset)
        if tok.kind == "ident":
            self.advance()
            name = tok.text
            if name in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(name, arg, tok.offset)
            if name in CONSTANTS:
                return Const(name, tok.offset)
            if name in COORDINATES:
                return Var(name, tok.offset)
            raise UnknownIdentifierError(
                f"unknown identifier {name!r}",
                tok.offset,
                frozenset(COORDINATES + CONSTANTS + FUNCTIONS),
            )
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expr()
            self.expect_op(")")
            return node
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            # unary minus binds looser than '^'
            return Neg(self.factor(), tok.offset)
        raise ExprSyntaxError(f"unexpected {self._describe()}", tok.offset, _ATOM_START)


def parse(source: str) -> ScalarFieldExpr:
    """Parse ``source`` into a :class:`ScalarFieldExpr`."""
    return ScalarFieldExpr(_Parser(source).parse(), source)


# ---------------------------------------------------------------------------
# Pretty printing
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def pretty(node: Node) -> str:
    """Render an AST with the minimal parentheses needed to re-parse it."""
    return _pp(node, 0)


def _format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _pp(node: Node, ctx: int) -> str:
    if isinstance(node, Num):
        return _format_number(node.value)
    if isinstance(node, (Const, Var)):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({_pp(node.arg, 0)})"
    if isinstance(node, Pow):
        base = _pp(node.base, 4)
        text = f"{base}^{node.exponent}"
        # a power used as a base needs parentheses: ``^`` is right-associative
        return f"({text})" if ctx > 3 else text
    if isinstance(node, Neg):
        text = "-" + _pp(node.arg, 3)
        return f"({text})" if ctx > 2 else text
    if isinstance(node, BinOp):
        prec = _PREC[node.op]
        left = _pp(node.left, prec)
        right = _pp(node.right, prec + 1)
        text = f"{left} {node.op} {right}"
        return f"({text})" if prec < ctx else text
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


class _ArrayOps:
    """Direct complex evaluation mirroring the order-0 jet arithmetic."""

    @staticmethod
    def const(value, like):
        return np.full(like.shape, value, dtype=complex)

    @staticmethod
    def apply(fn: str, a, extra=None):
        with np.errstate(divide="ignore", invalid="ignore"):
            if fn in ("recip", "log", "sqrt") and np.any(np.abs(a) <= 1e-300):
                raise SingularInputError(f"{fn} evaluated at a zero value")
            if fn == "recip":
                return 1.0 / a
            if fn == "pow_int":
                p = int(extra)
                if p >= 0:
                    return _repeated_square(a, p, np.ones_like(a))
                if np.any(np.abs(a) <= 1e-300):
                    raise SingularInputError("pow_int evaluated at a zero value")
                return 1.0 / a ** (-p)
            if fn == "tan":
                return np.sin(a) * (1.0 / np.cos(a))
            return getattr(np, fn)(a)


def _repeated_square(base, p: int, one):
    result = one
    while p:
        if p & 1:
            result = result * base
        p >>= 1
        if p:
            base = base * base
    return result


def _walk(node: Node, leaves: dict[str, object], ops, source: str):
    if isinstance(node, Num):
        return complex(node.value)
    if isinstance(node, Const):
        return 1j if node.name == "i" else complex(math.pi)
    if isinstance(node, Var):
        return leaves[node.name]
    if isinstance(node, Neg):
        return -_walk(node.arg, leaves, ops, source)
    if isinstance(node, BinOp):
        a = _walk(node.left, leaves, ops, source)
        b = _walk(node.right, leaves, ops, source)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return _guarded(lambda: a * ops.apply("recip", _lift(b, leaves)), node, source)
    if isinstance(node, Pow):
        base = _walk(node.base, leaves, ops, source)
        return _guarded(lambda: ops.apply("pow_int", _lift(base, leaves), node.exponent), node, source)
    if isinstance(node, Call):
        arg = _walk(node.arg, leaves, ops, source)
        if node.func == "conj":
            return arg.conj() if isinstance(arg, (Jet, np.ndarray)) else np.conj(arg)
        return _guarded(lambda: ops.apply(node.func, _lift(arg, leaves)), node, source)
    raise TypeError(f"not an expression node: {node!r}")


def _lift(value, leaves):
    """Promote a bare complex constant to the evaluation type of the leaves."""
    if isinstance(value, (Jet, np.ndarray)):
        return value
    like = leaves["x"]
    if isinstance(like, Jet):
        return Jet.constant(np.full(like.shape, value, dtype=complex), like.order)
    return np.full(np.shape(like), value, dtype=complex)


def _guarded(thunk: Callable[[], object], node: Node, source: str):
    try:
        return thunk()
    except ExprEvaluationError:
        raise
    except SingularInputError as exc:
        raise ExprEvaluationError(str(exc), node.offset, _snippet(node)) from None


def _snippet(node: Node) -> str:
    return pretty(node)


class _JetOps:
    @staticmethod
    def apply(fn: str, a, extra=None):
        return jet_apply(fn, a, extra)


def eval_jet(expr: ScalarFieldExpr, point, order: int) -> Jet:
    """Jet of ``expr`` at ``point`` (shape (4,) or (4, *batch))."""
    point = np.asarray(point, dtype=float)
    if order == 0:
        seeds = coordinate_seeds(point, 1)
        seeds = tuple(s.truncate(0) for s in seeds)
    else:
        seeds = coordinate_seeds(point, order)
    leaves = dict(zip(COORDINATES, seeds))
    out = _walk(expr.ast, leaves, _JetOps, expr.source)
    if not isinstance(out, Jet):
        out = Jet.constant(np.full(point.shape[1:], out, dtype=complex), order)
    return out


def eval_complex(expr: ScalarFieldExpr, point) -> np.ndarray:
    """Direct complex evaluation at ``point`` without derivatives."""
    point = np.asarray(point, dtype=float)
    leaves = {name: point[k].astype(complex) for k, name in enumerate(COORDINATES)}
    out = _walk(expr.ast, leaves, _ArrayOps, expr.source)
    if not isinstance(out, np.ndarray):
        out = np.full(point.shape[1:], out, dtype=complex)
    return out
