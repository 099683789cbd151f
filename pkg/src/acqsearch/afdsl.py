"""A small expression language for acquisition functions.

Grammar (EBNF)::

    program   = { "let" NAME "=" expr "in" } reduction ;
    reduction = ( "argmax" | "argmin" ) "(" expr ")" ;
    expr      = term { ( "+" | "-" ) term } ;
    term      = unary { ( "*" | "/" ) unary } ;
    unary     = "-" unary | power ;
    power     = atom [ "**" unary ] ;
    atom      = NUMBER | VARIABLE | NAME | FUNC "(" expr { "," expr } ")"
              | "(" expr ")" ;
    VARIABLE  = "MEAN" | "VAR" | "INCUMBENT" | "BETA" | "N_POINTS" ;
    FUNC      = "abs" | "sqrt" | "exp" | "log" | "normcdf" | "normpdf"     (1 arg)
              | "min" | "max" | "pow" | "normcdf_loc" | "zero_prefix"     (2 args)
              | "truncnormcdf" | "set_at" ;                               (3 args)

``MEAN`` and ``VAR`` are vectors over the evaluation grid, the other
variables are scalars; arithmetic broadcasts.  ``a ** b`` is read as
``pow(a, b)``.  ``normcdf_loc(x, loc)`` is the normal CDF centred at ``loc``,
``truncnormcdf(x, lo, hi)`` the CDF of a standard normal truncated to
``[lo, hi]``.  ``set_at(v, i, x)`` returns ``v`` with entry ``floor(i)``
replaced by ``x``; ``zero_prefix(v, k)`` zeroes the first ``floor(k)``
entries.  Literals are non-negative; a leading minus is a negation node.

Invalid arithmetic (log of a negative number, 0/0, ...) yields NaN, which
never wins a reduction.  A program whose selected entry is not finite is an
invalid program.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .acquisition import AfInput, InvalidProgramError, nan_argmax, nan_argmin, norm_cdf, norm_pdf

MAX_DEPTH = 40
MAX_NODES = 500

VARIABLES = ("MEAN", "VAR", "INCUMBENT", "BETA", "N_POINTS")
FUNCS = {
    "abs": 1, "sqrt": 1, "exp": 1, "log": 1, "normcdf": 1, "normpdf": 1,
    "min": 2, "max": 2, "pow": 2, "normcdf_loc": 2, "zero_prefix": 2,
    "truncnormcdf": 3, "set_at": 3,
}
KEYWORDS = ("let", "in", "argmax", "argmin")


class DslError(ValueError):
    """Parse-time failure; carries the 1-based line/column when known."""

    def __init__(self, message, line=None, col=None):
        where = f" at line {line}, column {col}" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Lit:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Name:
    id: str


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple


@dataclass(frozen=True)
class Reduce:
    kind: str  # argmax | argmin
    arg: "Expr"


@dataclass(frozen=True)
class Let:
    name: str
    value: "Expr"
    body: "Node"


Expr = Union[Lit, Var, Name, Neg, BinOp, Call]
Node = Union[Let, Reduce]


def children(node) -> tuple:
    if isinstance(node, (Neg, Reduce)):
        return (node.arg,)
    if isinstance(node, BinOp):
        return (node.left, node.right)
    if isinstance(node, Call):
        return node.args
    if isinstance(node, Let):
        return (node.value, node.body)
    return ()


def count_nodes(node) -> int:
    return 1 + sum(count_nodes(c) for c in children(node))


def depth(node) -> int:
    kids = children(node)
    return 1 + (max(depth(c) for c in kids) if kids else 0)


def validate(ast) -> None:
    """Check structural invariants of a hand-built or mutated AST."""
    if not isinstance(ast, (Let, Reduce)):
        raise DslError("a program must end in argmax(...) or argmin(...)")
    if depth(ast) > MAX_DEPTH:
        raise DslError(f"program deeper than {MAX_DEPTH}")
    if count_nodes(ast) > MAX_NODES:
        raise DslError(f"program larger than {MAX_NODES} nodes")

    def check_expr(e, scope):
        if isinstance(e, Lit):
            if not (math.isfinite(e.value) and e.value >= 0):
                raise DslError(f"literal {e.value} must be finite and non-negative")
        elif isinstance(e, Var):
            if e.name not in VARIABLES:
                raise DslError(f"unknown variable {e.name}")
        elif isinstance(e, Name):
            if e.id not in scope:
                raise DslError(f"unbound identifier {e.id!r}")
        elif isinstance(e, Neg):
            check_expr(e.arg, scope)
        elif isinstance(e, BinOp):
            if e.op not in "+-*/":
                raise DslError(f"unknown operator {e.op}")
            check_expr(e.left, scope)
            check_expr(e.right, scope)
        elif isinstance(e, Call):
            if FUNCS.get(e.fn) != len(e.args):
                raise DslError(f"{e.fn} takes {FUNCS.get(e.fn)} arguments, got {len(e.args)}")
            for a in e.args:
                check_expr(a, scope)
        else:
            raise DslError(f"unexpected node {type(e).__name__}")

    scope: set = set()
    node = ast
    while isinstance(node, Let):
        _check_let_name(node.name, scope)
        check_expr(node.value, scope)
        scope = scope | {node.name}
        node = node.body
    if not isinstance(node, Reduce) or node.kind not in ("argmax", "argmin"):
        raise DslError("a program must end in argmax(...) or argmin(...)")
    check_expr(node.arg, scope)


def _check_let_name(name, scope, line=None, col=None):
    if not re.fullmatch(r"[a-z_][a-z0-9_]*", name) or name in FUNCS or name in KEYWORDS:
        raise DslError(f"invalid binding name {name!r}", line, col)
    if name in scope:
        raise DslError(f"name {name!r} is already bound", line, col)


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+|\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\*\*|[-+*/(),=])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks, pos, line, line_start = [], 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise DslError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind != "ws":
            toks.append(_Tok(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0
        self.scope: set = set()

    @property
    def tok(self):
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return DslError(msg, tok.line, tok.col)

    def eat(self, text=None, kind=None):
        tok = self.tok
        if (text is not None and tok.text != text) or (kind is not None and tok.kind != kind):
            want = text or kind
            raise self.error(f"expected {want!r}, found {tok.text or 'end of input'!r}")
        self.i += 1
        return tok

    def program(self):
        if self.tok.text == "let":
            self.eat("let")
            name_tok = self.eat(kind="ident")
            _check_let_name(name_tok.text, self.scope, name_tok.line, name_tok.col)
            self.eat("=")
            value = self.expr()
            self.eat("in")
            self.scope = self.scope | {name_tok.text}
            return Let(name_tok.text, value, self.program())
        if self.tok.text in ("argmax", "argmin"):
            kind = self.eat().text
            self.eat("(")
            arg = self.expr()
            self.eat(")")
            if self.tok.kind != "eof":
                raise self.error("unexpected input after the final reduction")
            return Reduce(kind, arg)
        raise self.error("expected 'let', 'argmax' or 'argmin'")

    def expr(self):
        node = self.term()
        while self.tok.text in ("+", "-"):
            op = self.eat().text
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok.text in ("*", "/"):
            op = self.eat().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.tok.text == "-":
            self.eat()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.text == "**":
            self.eat()
            return Call("pow", (base, self.unary()))
        return base

    def atom(self):
        tok = self.tok
        if tok.kind == "num":
            self.eat()
            value = float(tok.text)
            if not math.isfinite(value):
                raise self.error("literal out of range", tok)
            return Lit(value)
        if tok.text == "(":
            self.eat()
            node = self.expr()
            self.eat(")")
            return node
        if tok.kind == "ident":
            self.eat()
            if tok.text in VARIABLES:
                return Var(tok.text)
            if tok.text in FUNCS:
                self.eat("(")
                args = [self.expr()]
                while self.tok.text == ",":
                    self.eat()
                    args.append(self.expr())
                self.eat(")")
                if len(args) != FUNCS[tok.text]:
                    raise self.error(
                        f"{tok.text} takes {FUNCS[tok.text]} arguments, got {len(args)}", tok)
                return Call(tok.text, tuple(args))
            if tok.text in ("argmax", "argmin"):
                raise self.error("argmax/argmin may only appear as the final reduction", tok)
            if tok.text in self.scope:
                return Name(tok.text)
            raise self.error(f"unbound identifier {tok.text!r}", tok)
        raise self.error(f"unexpected {tok.text or 'end of input'!r}", tok)


def parse(text: str):
    """Parse program text into an AST; raises :class:`DslError`."""
    ast = _Parser(text).program()
    if depth(ast) > MAX_DEPTH:
        raise DslError(f"program deeper than {MAX_DEPTH}")
    if count_nodes(ast) > MAX_NODES:
        raise DslError(f"program larger than {MAX_NODES} nodes")
    return ast


# ---------------------------------------------------------------------------
# renderer

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    return 4


def _render_expr(e) -> str:
    if isinstance(e, Lit):
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Name):
        return e.id
    if isinstance(e, Neg):
        inner = _render_expr(e.arg)
        return "-" + (inner if _prec(e.arg) >= 3 else f"({inner})")
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        left = _render_expr(e.left)
        right = _render_expr(e.right)
        if _prec(e.left) < p:
            left = f"({left})"
        if _prec(e.right) <= p:
            right = f"({right})"
        return f"{left} {e.op} {right}"
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(_render_expr(a) for a in e.args)})"
    raise TypeError(f"not an expression: {e!r}")


def render(ast) -> str:
    lines = []
    node = ast
    while isinstance(node, Let):
        lines.append(f"let {node.name} = {_render_expr(node.value)} in")
        node = node.body
    lines.append(f"{node.kind}({_render_expr(node.arg)})")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# evaluator


def _truncnorm_cdf(x, lo, hi):
    plo, phi = norm_cdf(lo), norm_cdf(hi)
    out = (norm_cdf(np.clip(x, lo, hi)) - plo) / (phi - plo)
    return np.where(np.asarray(lo) < np.asarray(hi), out, np.nan)


def _scalar(v, what):
    arr = np.asarray(v, dtype=float)
    if arr.size != 1:
        # a vector index is only meaningful when all entries agree
        if arr.size == 0 or not np.all(arr == arr.flat[0]):
            raise InvalidProgramError(f"{what} must be a scalar")
    x = float(arr.flat[0])
    if not math.isfinite(x):
        raise InvalidProgramError(f"{what} is {x}")
    return math.floor(x)


def _as_vector(v, n):
    return np.array(np.broadcast_to(np.asarray(v, dtype=float), (n,)))


_UNARY = {
    "abs": np.abs, "sqrt": np.sqrt, "exp": np.exp, "log": np.log,
    "normcdf": norm_cdf, "normpdf": norm_pdf,
}


def _eval(e, env, n):
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, Name):
        return env[e.id]
    if isinstance(e, Neg):
        return -_eval(e.arg, env, n)
    if isinstance(e, BinOp):
        a, b = _eval(e.left, env, n), _eval(e.right, env, n)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        return np.divide(a, b)
    fn = e.fn
    args = [_eval(a, env, n) for a in e.args]
    if fn in _UNARY:
        return _UNARY[fn](args[0])
    if fn == "min":
        return np.minimum(args[0], args[1])
    if fn == "max":
        return np.maximum(args[0], args[1])
    if fn == "pow":
        return np.power(np.asarray(args[0], dtype=float), args[1])
    if fn == "normcdf_loc":
        return norm_cdf(np.subtract(args[0], args[1]))
    if fn == "truncnormcdf":
        return _truncnorm_cdf(*args)
    if fn == "set_at":
        vec = _as_vector(args[0], n)
        i = _scalar(args[1], "set_at index")
        if not 0 <= i < n:
            raise InvalidProgramError(f"set_at index {i} outside [0, {n})")
        value = np.asarray(args[2], dtype=float)
        vec[i] = value if value.ndim == 0 else _as_vector(value, n)[i]
        return vec
    if fn == "zero_prefix":
        vec = _as_vector(args[0], n)
        k = _scalar(args[1], "zero_prefix count")
        if not 0 <= k <= n:
            raise InvalidProgramError(f"zero_prefix count {k} outside [0, {n}]")
        vec[:k] = 0.0
        return vec
    raise InvalidProgramError(f"unknown function {fn}")


def evaluate(ast, inp: AfInput) -> int:
    """Grid index selected by the program on the given posterior."""
    n = inp.n_points
    env = {"MEAN": inp.mean, "VAR": inp.variance, "INCUMBENT": inp.incumbent,
           "BETA": inp.beta, "N_POINTS": float(n)}
    with np.errstate(all="ignore"):
        node = ast
        while isinstance(node, Let):
            env[node.name] = _eval(node.value, env, n)
            node = node.body
        vals = _as_vector(_eval(node.arg, env, n), n)
    return nan_argmax(vals) if node.kind == "argmax" else nan_argmin(vals)


# ---------------------------------------------------------------------------
# programs


@dataclass(frozen=True, eq=False)
class Program:
    """A parsed program together with its canonical text."""

    ast: object
    text: str

    @classmethod
    def from_text(cls, text: str) -> "Program":
        ast = parse(text)
        return cls(ast, render(ast))

    @classmethod
    def from_ast(cls, ast) -> "Program":
        validate(ast)
        return cls(ast, render(ast))

    @property
    def length(self) -> int:
        return len(self.text)

    @property
    def id(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()[:16]

    def select(self, inp: AfInput) -> int:
        return evaluate(self.ast, inp)

    def __eq__(self, other):
        return isinstance(other, Program) and self.text == other.text

    def __hash__(self):
        return hash(self.text)


# ---------------------------------------------------------------------------
# random programs (tests and mutation)


def random_expr(rng: np.random.Generator, max_depth: int, names=()):
    if max_depth <= 1 or rng.random() < 0.25:
        r = rng.random()
        if names and r < 0.2:
            return Name(names[rng.integers(len(names))])
        if r < 0.6:
            return Var(VARIABLES[rng.integers(len(VARIABLES))])
        return Lit(float(np.round(rng.uniform(0, 5), int(rng.integers(0, 4)))))
    r = rng.random()
    sub = lambda: random_expr(rng, max_depth - 1, names)  # noqa: E731
    if r < 0.1:
        return Neg(sub())
    if r < 0.5:
        return BinOp("+-*/"[rng.integers(4)], sub(), sub())
    fn = list(FUNCS)[rng.integers(len(FUNCS))]
    return Call(fn, tuple(sub() for _ in range(FUNCS[fn])))


def random_ast(rng: np.random.Generator, max_depth: int = 6, max_lets: int = 2):
    names: list[str] = []
    bindings = []
    for k in range(int(rng.integers(0, max_lets + 1))):
        bindings.append((f"t{k}", random_expr(rng, max_depth, tuple(names))))
        names.append(f"t{k}")
    node = Reduce("argmax" if rng.random() < 0.5 else "argmin",
                  random_expr(rng, max_depth, tuple(names)))
    for name, value in reversed(bindings):
        node = Let(name, value, node)
    return node
