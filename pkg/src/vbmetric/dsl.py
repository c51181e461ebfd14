"""A small expression language for scalar and matrix fields.

Grammar (whitespace and newlines are insignificant)::

    field   := matrix | expr
    matrix  := '[' row (',' row)* ']'          row := '[' expr (',' expr)* ']'
    expr    := term (('+' | '-') term)*
    term    := power (('*' | '/') power)*
    power   := unary ('^' power)?              (right associative)
    unary   := ('-' | '+') unary | atom
    atom    := NUMBER | NUMBER'i' | 'i' | 'pi' | variable | call | '(' expr ')'
    variable:= 'z'k | 'w'k | 'Z'k | ('z'|'w'|'Z') '[' index ']'
    index   := INT | NAME | NAME ('+'|'-') INT
    call    := fname '(' expr (',' expr)* ')'
             | 'sum' '(' NAME ',' bound ',' bound ',' expr ')'
    bound   := INT | 'n' | 'r'

Unary minus binds tighter than ``^``, so ``-x^2`` is ``(-x)^2``.  Base
coordinates are ``z1..zn``, fiber chart coordinates ``w1..wr`` (the affine
coordinates ``Z*_alpha / Z*_A`` for ``alpha != A`` in increasing order) and
homogeneous fiber coordinates ``Z0..Zr``.  Conjugation enters only through
``abs2`` and ``conj``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DomainError, InputError, ParseError
from .jet import Jet, jconj, jcos, jexp, jlog, jsin, jsqrt, value_of

FUNCTIONS = {
    "exp": 1,
    "log": 1,
    "pow": 2,
    "abs2": 1,
    "conj": 1,
    "sqrt": 1,
    "sin": 1,
    "cos": 1,
}
VAR_KINDS = ("z", "w", "Z")


# --------------------------------------------------------------------------- tree


@dataclass(frozen=True)
class Num:
    value: complex


@dataclass(frozen=True)
class Index:
    name: str
    offset: int = 0


@dataclass(frozen=True)
class Var:
    kind: str
    index: Union[int, Index]


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


@dataclass(frozen=True)
class Sum:
    var: str
    lo: Union[int, str]
    hi: Union[int, str]
    body: "Node"


@dataclass(frozen=True)
class Matrix:
    rows: tuple


Node = Union[Num, Var, Unary, BinOp, Call, Sum, Matrix]


# -------------------------------------------------------------------------- lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?[ij]?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),\[\]])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(source: str) -> list[_Tok]:
    toks = []
    pos, line, col = 0, 1, 1
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if not m:
            raise ParseError("unexpected character", line, col, source[pos])
        kind = m.lastgroup
        text = m.group()
        if kind == "nl":
            line, col = line + 1, 1
        else:
            if kind != "ws":
                toks.append(_Tok(kind, text, line, col))
            col += len(text)
        pos = m.end()
    toks.append(_Tok("eof", "", line, col))
    return toks


# ------------------------------------------------------------------------- parser


class _Parser:
    def __init__(self, source: str):
        self.toks = _tokenize(source)
        self.pos = 0
        self.bound: list[str] = []

    @property
    def tok(self) -> _Tok:
        return self.toks[self.pos]

    def advance(self) -> _Tok:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect(self, text: str) -> _Tok:
        t = self.tok
        if t.text != text:
            raise ParseError(f"expected {text!r}", t.line, t.col, t.text or "<end>")
        return self.advance()

    def error(self, msg: str, t: _Tok | None = None):
        t = t or self.tok
        return ParseError(msg, t.line, t.col, t.text or "<end>")

    def parse_field(self) -> Node:
        if self.tok.text == "[":
            node = self.parse_matrix()
        else:
            node = self.parse_expr()
        if self.tok.kind != "eof":
            raise self.error("unexpected trailing input")
        return node

    def parse_matrix(self) -> Matrix:
        self.expect("[")
        rows = [self.parse_row()]
        while self.tok.text == ",":
            self.advance()
            rows.append(self.parse_row())
        self.expect("]")
        width = len(rows[0])
        for row in rows:
            if len(row) != width:
                raise self.error("ragged matrix literal")
        return Matrix(tuple(rows))

    def parse_row(self) -> tuple:
        self.expect("[")
        items = [self.parse_expr()]
        while self.tok.text == ",":
            self.advance()
            items.append(self.parse_expr())
        self.expect("]")
        return tuple(items)

    def parse_expr(self) -> Node:
        node = self.parse_term()
        while self.tok.text in ("+", "-"):
            op = self.advance().text
            node = BinOp(op, node, self.parse_term())
        return node

    def parse_term(self) -> Node:
        node = self.parse_power()
        while self.tok.text in ("*", "/"):
            op = self.advance().text
            node = BinOp(op, node, self.parse_power())
        return node

    def parse_power(self) -> Node:
        base = self.parse_unary()
        if self.tok.text == "^":
            self.advance()
            return BinOp("^", base, self.parse_power())
        return base

    def parse_unary(self) -> Node:
        if self.tok.text in ("-", "+"):
            op = self.advance().text
            return Unary(op, self.parse_unary())
        return self.parse_atom()

    def parse_atom(self) -> Node:
        t = self.tok
        if t.kind == "num":
            self.advance()
            if t.text[-1] in "ij":
                return Num(complex(0.0, float(t.text[:-1])))
            return Num(complex(float(t.text)))
        if t.text == "(":
            self.advance()
            node = self.parse_expr()
            self.expect(")")
            return node
        if t.text == "[":
            raise self.error("matrix literal only allowed at top level")
        if t.kind == "name":
            return self.parse_name()
        raise self.error("unexpected token")

    def parse_name(self) -> Node:
        t = self.advance()
        name = t.text
        if name in ("i", "I"):
            return Num(1j)
        if name == "pi":
            return Num(complex(math.pi))
        if name == "sum":
            return self.parse_sum(t)
        if name in FUNCTIONS:
            if self.tok.text != "(":
                raise self.error(f"function {name!r} needs arguments")
            self.advance()
            args = [self.parse_expr()]
            while self.tok.text == ",":
                self.advance()
                args.append(self.parse_expr())
            self.expect(")")
            if len(args) != FUNCTIONS[name]:
                raise ParseError(
                    f"function {name!r} takes {FUNCTIONS[name]} argument(s), got {len(args)}",
                    t.line,
                    t.col,
                    name,
                )
            return Call(name, tuple(args))
        m = re.fullmatch(r"([zwZ])(\d+)", name)
        if m:
            return Var(m.group(1), int(m.group(2)))
        if name in VAR_KINDS and self.tok.text == "[":
            self.advance()
            idx = self.parse_index()
            self.expect("]")
            return Var(name, idx)
        raise ParseError("unknown identifier", t.line, t.col, name)

    def parse_index(self) -> Union[int, Index]:
        t = self.advance()
        if t.kind == "num" and t.text.isdigit():
            return int(t.text)
        if t.kind != "name" or t.text not in self.bound:
            raise ParseError("index must be an integer or a bound summation variable", t.line, t.col, t.text)
        offset = 0
        if self.tok.text in ("+", "-"):
            sign = 1 if self.advance().text == "+" else -1
            k = self.advance()
            if k.kind != "num" or not k.text.isdigit():
                raise ParseError("index offset must be an integer", k.line, k.col, k.text)
            offset = sign * int(k.text)
        return Index(t.text, offset)

    def parse_bound(self) -> Union[int, str]:
        t = self.advance()
        if t.kind == "num" and t.text.isdigit():
            return int(t.text)
        if t.text in ("n", "r"):
            return t.text
        raise ParseError("summation bound must be an integer, 'n' or 'r'", t.line, t.col, t.text)

    def parse_sum(self, head: _Tok) -> Sum:
        self.expect("(")
        v = self.advance()
        if v.kind != "name" or v.text in FUNCTIONS or re.fullmatch(r"[zwZ]\d*", v.text):
            raise ParseError("summation variable must be a fresh name", v.line, v.col, v.text)
        self.expect(",")
        lo = self.parse_bound()
        self.expect(",")
        hi = self.parse_bound()
        self.expect(",")
        self.bound.append(v.text)
        body = self.parse_expr()
        self.bound.pop()
        self.expect(")")
        return Sum(v.text, lo, hi, body)


def parse_field(source: str) -> Node:
    """Parse field source text into an expression tree."""
    if not isinstance(source, str) or not source.strip():
        raise ParseError("empty field expression", 1, 1, "")
    return _Parser(source).parse_field()


# ------------------------------------------------------------------------ printer

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 3}


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Unary):
        return 4
    if isinstance(node, Num) and node.value.real != 0 and node.value.imag != 0:
        return 0
    return 5


def _fmt_real(x: float) -> str:
    s = repr(float(x))
    if s in ("inf", "-inf", "nan"):
        raise InputError(f"cannot print non-finite literal {s}")
    return s


def to_source(node: Node) -> str:
    """Print a tree back to source text; ``parse_field(to_source(t)) == t``."""
    if isinstance(node, Matrix):
        return "[" + ", ".join("[" + ", ".join(to_source(e) for e in row) + "]" for row in node.rows) + "]"
    if isinstance(node, Num):
        v = node.value
        if v == 1j:
            return "i"
        if v.imag == 0:
            return _fmt_real(v.real)
        if v.real == 0:
            return _fmt_real(v.imag) + "i"
        return f"({_fmt_real(v.real)}+{_fmt_real(v.imag)}i)"
    if isinstance(node, Var):
        if isinstance(node.index, int):
            return f"{node.kind}{node.index}"
        idx = node.index
        off = "" if idx.offset == 0 else (f"+{idx.offset}" if idx.offset > 0 else str(idx.offset))
        return f"{node.kind}[{idx.name}{off}]"
    if isinstance(node, Call):
        return f"{node.func}(" + ", ".join(to_source(a) for a in node.args) + ")"
    if isinstance(node, Sum):
        return f"sum({node.var}, {node.lo}, {node.hi}, {to_source(node.body)})"
    if isinstance(node, Unary):
        inner = to_source(node.operand)
        if _prec(node.operand) < 4:
            inner = f"({inner})"
        return node.op + inner
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        left, right = to_source(node.left), to_source(node.right)
        if node.op == "^":
            if _prec(node.left) <= p:
                left = f"({left})"
            if _prec(node.right) < p:
                right = f"({right})"
            return f"{left}^{right}"
        if _prec(node.left) < p:
            left = f"({left})"
        if _prec(node.right) <= p:
            right = f"({right})"
        return f"{left} {node.op} {right}"
    raise InputError(f"not an expression node: {node!r}")


# --------------------------------------------------------------------- validation


def _resolve_bound(b, n: int, r: int) -> int:
    return {"n": n, "r": r}.get(b, b) if isinstance(b, str) else b


def validate(node: Node, n: int, r: int) -> None:
    """Check every variable index lies within the declared ``(n, r)``."""

    def walk(t, env):
        if isinstance(t, Var):
            if isinstance(t.index, int):
                candidates = [t.index]
            else:
                candidates = [v + t.index.offset for v in env[t.index.name]]
            lo, hi = {"z": (1, n), "w": (1, r), "Z": (0, r)}[t.kind]
            for k in candidates:
                if not lo <= k <= hi:
                    raise InputError(f"variable {to_source(t)} index {k} outside {lo}..{hi}")
        elif isinstance(t, Sum):
            lo, hi = _resolve_bound(t.lo, n, r), _resolve_bound(t.hi, n, r)
            env = dict(env)
            env[t.var] = list(range(lo, hi + 1)) or []
            walk(t.body, env)
        elif isinstance(t, Unary):
            walk(t.operand, env)
        elif isinstance(t, BinOp):
            walk(t.left, env)
            walk(t.right, env)
        elif isinstance(t, Call):
            for a in t.args:
                walk(a, env)
        elif isinstance(t, Matrix):
            for row in t.rows:
                for e in row:
                    walk(e, env)

    # summation variables carry their full index range while validating
    walk(node, {})


def variables(node: Node) -> set:
    """Set of ``(kind, index)`` pairs for literal-indexed variables; kinds for indexed ones."""
    out = set()

    def walk(t):
        if isinstance(t, Var):
            out.add((t.kind, t.index if isinstance(t.index, int) else None))
        elif isinstance(t, Sum):
            walk(t.body)
        elif isinstance(t, Unary):
            walk(t.operand)
        elif isinstance(t, BinOp):
            walk(t.left)
            walk(t.right)
        elif isinstance(t, Call):
            for a in t.args:
                walk(a)
        elif isinstance(t, Matrix):
            for row in t.rows:
                for e in row:
                    walk(e)

    walk(node)
    return out


def contains_abs2_of_zero(node: Node, env: dict) -> bool:
    """True if some ``abs2`` argument vanishes at the (numeric) point ``env``."""
    hit = False

    def walk(t, idx_env):
        nonlocal hit
        if isinstance(t, Call):
            if t.func == "abs2":
                v = np.asarray(value_of(_eval(t.args[0], env, idx_env)))
                if np.any(v == 0):
                    hit = True
            for a in t.args:
                walk(a, idx_env)
        elif isinstance(t, Sum):
            n, r = env.get("_n", 0), env.get("_r", 0)
            for k in range(_resolve_bound(t.lo, n, r), _resolve_bound(t.hi, n, r) + 1):
                walk(t.body, {**idx_env, t.var: k})
        elif isinstance(t, Unary):
            walk(t.operand, idx_env)
        elif isinstance(t, BinOp):
            walk(t.left, idx_env)
            walk(t.right, idx_env)

    walk(node, {})
    return hit


# --------------------------------------------------------------------- evaluation


def _domain_fail(msg, node, mask):
    bad = np.flatnonzero(np.asarray(mask).ravel())
    where = f"element {int(bad[0])}" if bad.size and np.ndim(mask) else None
    raise DomainError(msg, to_source(node), where)


def _check_log(arg, node):
    v = np.asarray(value_of(arg))
    bad = (v == 0) | ((np.imag(v) == 0) & (np.real(v) < 0))
    if np.any(bad):
        _domain_fail("log of a non-positive value", node, bad)


def _eval(t: Node, env: dict, idx_env: dict):
    if isinstance(t, Num):
        return t.value
    if isinstance(t, Var):
        k = t.index if isinstance(t.index, int) else idx_env[t.index.name] + t.index.offset
        seq = env.get(t.kind)
        offset = 0 if t.kind == "Z" else 1
        if seq is None or not 0 <= k - offset < len(seq):
            raise InputError(f"variable {to_source(t)} is not bound")
        return seq[k - offset]
    if isinstance(t, Unary):
        v = _eval(t.operand, env, idx_env)
        return -v if t.op == "-" else v
    if isinstance(t, BinOp):
        a = _eval(t.left, env, idx_env)
        b = _eval(t.right, env, idx_env)
        if t.op == "+":
            return a + b
        if t.op == "-":
            return a - b
        if t.op == "*":
            return a * b
        if t.op == "/":
            bv = np.asarray(value_of(b))
            if np.any(bv == 0):
                _domain_fail("division by zero", t, bv == 0)
            return a / b
        return _power(a, b, t)
    if isinstance(t, Call):
        args = [_eval(a, env, idx_env) for a in t.args]
        f = t.func
        if f == "exp":
            return jexp(args[0])
        if f == "log":
            _check_log(args[0], t)
            return jlog(args[0])
        if f == "pow":
            return _power(args[0], args[1], t)
        if f == "abs2":
            return args[0] * jconj(args[0])
        if f == "conj":
            return jconj(args[0])
        if f == "sqrt":
            return jsqrt(args[0])
        if f == "sin":
            return jsin(args[0])
        if f == "cos":
            return jcos(args[0])
        raise InputError(f"unknown function {f!r}")  # pragma: no cover
    if isinstance(t, Sum):
        n, r = env.get("_n", 0), env.get("_r", 0)
        total = 0.0
        for k in range(_resolve_bound(t.lo, n, r), _resolve_bound(t.hi, n, r) + 1):
            total = total + _eval(t.body, env, {**idx_env, t.var: k})
        return total
    if isinstance(t, Matrix):
        rows = [[_eval(e, env, idx_env) for e in row] for row in t.rows]
        if any(isinstance(e, Jet) for row in rows for e in row):
            return rows
        shape = np.broadcast_shapes(*[np.shape(e) for row in rows for e in row])
        out = np.empty(shape + (len(rows), len(rows[0])), dtype=complex)
        for a, row in enumerate(rows):
            for b, e in enumerate(row):
                out[..., a, b] = e
        return out
    raise InputError(f"not an expression node: {t!r}")


def _power(a, b, node):
    if isinstance(b, Jet):
        return a**b if isinstance(a, Jet) else b.__rpow__(a)
    bv = complex(np.asarray(b).ravel()[0]) if np.ndim(b) == 0 or np.size(b) == 1 else None
    if bv is not None and bv.imag == 0:
        p = bv.real
        av = np.asarray(value_of(a))
        if p < 0 and np.any(av == 0):
            _domain_fail("zero raised to a negative power", node, av == 0)
        if float(p).is_integer() and not isinstance(a, Jet):
            return np.asarray(a, dtype=complex) ** int(p)
        return a**p
    return np.asarray(a, dtype=complex) ** b


def eval_field(node: Node, z=(), w=(), Z=(), n: int | None = None, r: int | None = None):
    """Evaluate a tree with bound variables.

    ``z``, ``w`` and ``Z`` are sequences whose entries are complex scalars,
    arrays (evaluation broadcasts over them) or :class:`~vbmetric.jet.Jet`
    objects.  Matrix literals evaluate entrywise to an array of shape
    ``batch + (rows, cols)``.
    """
    env = {
        "z": list(z),
        "w": list(w),
        "Z": list(Z),
        "_n": len(z) if n is None else n,
        "_r": (len(w) if w else max(len(Z) - 1, 0)) if r is None else r,
    }
    out = _eval(node, env, {})
    if isinstance(out, (complex, float, int)):
        return complex(out)
    return out


@dataclass(frozen=True)
class Field:
    """A parsed field bound to declared dimensions ``n`` (base) and ``r`` (fiber)."""

    expr: Node
    n: int
    r: int
    source: str = ""

    @classmethod
    def parse(cls, source: str, n: int, r: int) -> "Field":
        expr = parse_field(source)
        validate(expr, n, r)
        return cls(expr, n, r, source)

    @property
    def is_matrix(self) -> bool:
        return isinstance(self.expr, Matrix)

    def __call__(self, z=(), w=(), Z=()):
        return eval_field(self.expr, z, w, Z, n=self.n, r=self.r)

    def __str__(self) -> str:
        return to_source(self.expr)


def as_sequence(point, k: int) -> Sequence:
    """Split an array of shape ``(..., k)`` into a list of ``k`` arrays."""
    p = np.asarray(point, dtype=complex)
    if p.shape[-1] != k:
        raise InputError(f"expected {k} coordinates, got shape {p.shape}")
    return [p[..., i] for i in range(k)]
