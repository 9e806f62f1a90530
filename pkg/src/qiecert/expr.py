"""Arithmetic expression language for coefficients and control functions.

Grammar::

    expr    := term (('+' | '-') term)*
    term    := factor (('*' | '/') factor)*
    factor  := unary ('^' factor)?
    unary   := '-' unary | primary
    primary := number | ident | ident '(' args ')' | '(' expr ')'

``^`` is right-associative and unary minus binds tighter than the base of
``^``, so ``-2^2`` is ``(-2)^2``.  Evaluation uses numpy ufuncs, so the same
tree evaluates scalars and broadcast arrays alike.  Every intermediate value
must be finite; NaN or infinity raises :class:`ExpressionDomainError`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Ast",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "ParseError",
    "ExpressionDomainError",
    "FUNCTIONS",
    "parse",
    "evaluate",
    "evaluate_on",
    "to_source",
    "variables",
]


class ParseError(ValueError):
    """Located parse failure.

    ``offset`` is a 0-based byte offset into the UTF-8 source; end of input
    is ``len(source)``.
    """

    def __init__(self, source: str, offset: int, expected: str, found: str):
        self.source = source
        self.offset = offset
        self.expected = expected
        self.found = found
        super().__init__(
            f"at offset {offset} (column {offset + 1}): expected {expected}, found {found}"
        )


class ExpressionDomainError(ArithmeticError):
    """An intermediate value of an expression was NaN or infinite."""

    def __init__(self, subexpression: str, bindings: Mapping[str, float], value: float):
        self.subexpression = subexpression
        self.bindings = dict(bindings)
        self.value = value
        at = ", ".join(f"{k}={v!r}" for k, v in sorted(self.bindings.items()))
        super().__init__(f"{subexpression} evaluates to {value!r} at ({at})")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Ast"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Ast"
    right: "Ast"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Ast = Union[Num, Var, Neg, BinOp, Call]

# name -> (arity, ufunc)
FUNCTIONS = {
    "exp": (1, np.exp),
    "ln": (1, np.log),
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "abs": (1, np.abs),
    "sqrt": (1, np.sqrt),
    "atan": (1, np.arctan),
    "tanh": (1, np.tanh),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
}

_BINARY = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
    "^": np.power,
}

# these map finite inputs to finite outputs; skip the finiteness scan
_ALWAYS_FINITE = {"sin", "cos", "abs", "atan", "tanh", "min", "max"}

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # num | ident | op | end
    text: str
    offset: int


def _describe(tok: _Tok) -> str:
    return "end of input" if tok.kind == "end" else repr(tok.text)


def _tokenize(source: str) -> list[_Tok]:
    toks = []
    pos = 0
    byte_off = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ParseError(source, byte_off, "a number, identifier or operator",
                             repr(source[pos]))
        kind = m.lastgroup
        text = m.group()
        if kind != "ws":
            toks.append(_Tok(kind, text, byte_off))
        byte_off += len(text.encode("utf-8"))
        pos = m.end()
    toks.append(_Tok("end", "", byte_off))
    return toks


class _Parser:
    def __init__(self, source: str, allowed: frozenset):
        self.source = source
        self.allowed = allowed
        self.toks = _tokenize(source)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def fail(self, expected: str, tok: _Tok | None = None):
        tok = tok or self.tok
        raise ParseError(self.source, tok.offset, expected, _describe(tok))

    def accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str):
        if not self.accept(text):
            self.fail(repr(text))

    def parse(self) -> Ast:
        if self.tok.kind == "end":
            self.fail("an expression")
        node = self.expr()
        if self.tok.kind != "end":
            self.fail("an operator or end of input")
        return node

    def expr(self) -> Ast:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Ast:
        node = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Ast:
        base = self.unary()
        if self.accept("^"):
            return BinOp("^", base, self.factor())
        return base

    def unary(self) -> Ast:
        if self.accept("-"):
            return Neg(self.unary())
        return self.primary()

    def primary(self) -> Ast:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "ident":
            self.i += 1
            if self.accept("("):
                if tok.text not in FUNCTIONS:
                    raise ParseError(self.source, tok.offset, "a known function",
                                     repr(tok.text))
                args = [self.expr()]
                while self.accept(","):
                    args.append(self.expr())
                self.expect(")")
                arity = FUNCTIONS[tok.text][0]
                if len(args) != arity:
                    raise ParseError(self.source, tok.offset,
                                     f"{arity} argument(s) to {tok.text}",
                                     f"{len(args)}")
                return Call(tok.text, tuple(args))
            if tok.text not in self.allowed:
                allowed = ", ".join(sorted(self.allowed)) or "none"
                raise ParseError(self.source, tok.offset,
                                 f"a variable in {{{allowed}}}", repr(tok.text))
            return Var(tok.text)
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        self.fail("a number, variable, function call or '('")


def parse(source: str, allowed_vars: Iterable[str] = ()) -> Ast:
    """Parse ``source`` into an immutable tree over ``allowed_vars``."""
    return _Parser(source, frozenset(allowed_vars)).parse()


def to_source(node: Ast) -> str:
    """Fully parenthesized source text; ``parse(to_source(a))`` evaluates bit-equal to ``a``."""
    if isinstance(node, Num):
        text = repr(float(node.value))
        return f"({text})" if text.startswith("-") else text
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


def variables(node: Ast) -> frozenset:
    if isinstance(node, Var):
        return frozenset([node.name])
    if isinstance(node, Num):
        return frozenset()
    if isinstance(node, Neg):
        return variables(node.operand)
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    return frozenset().union(*(variables(a) for a in node.args))


def _locate(value, bindings) -> tuple[dict, float]:
    arr = np.asarray(value)
    if arr.ndim == 0:
        return {k: float(np.asarray(v)) for k, v in bindings.items()}, float(arr)
    idx = tuple(int(i[0]) for i in np.nonzero(~np.isfinite(arr)))
    at = {}
    for k, v in bindings.items():
        v = np.asarray(v)
        if v.ndim == 0:
            at[k] = float(v)
        else:
            at[k] = float(np.broadcast_to(v, arr.shape)[idx])
    return at, float(arr[idx])


def _eval(node, bindings):
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Var):
        return bindings[node.name]
    if isinstance(node, Neg):
        return np.negative(_eval(node.operand, bindings))
    if isinstance(node, BinOp):
        out = _BINARY[node.op](_eval(node.left, bindings), _eval(node.right, bindings))
    else:
        fn = FUNCTIONS[node.name][1]
        out = fn(*(_eval(a, bindings) for a in node.args))
        if node.name in _ALWAYS_FINITE:
            return out
    if not np.all(np.isfinite(out)):
        at, bad = _locate(out, bindings)
        raise ExpressionDomainError(to_source(node), at, bad)
    return out


def evaluate(node: Ast, bindings: Mapping[str, object]):
    """Evaluate ``node`` in IEEE double precision.

    Bindings may be floats or numpy arrays (broadcast together).  A float is
    returned when every binding is scalar.
    """
    missing = variables(node) - set(bindings)
    if missing:
        raise KeyError(f"unbound variable(s): {', '.join(sorted(missing))}")
    vals = {}
    for k, v in bindings.items():
        v = np.asarray(v, dtype=np.float64)
        vals[k] = v if v.ndim else np.float64(v)
    with np.errstate(all="ignore"):
        out = _eval(node, vals)
    if np.ndim(out) == 0:
        return float(out)
    return out


def evaluate_on(node: Ast, shape: Sequence[int], bindings: Mapping[str, object]) -> np.ndarray:
    """Like :func:`evaluate` but always returns an array of ``shape``."""
    out = evaluate(node, bindings)
    return np.broadcast_to(np.asarray(out, dtype=np.float64), tuple(shape))
