"""Parsing and evaluation of scalar expressions in the plane variables x, y.

Grammar (standard infix, left-associative binaries)::

    expr   := term  (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' exponent)*      # exponent: non-negative integer constant
    atom   := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'

Precedence is ``^`` > unary minus > ``*`` ``/`` > ``+`` ``-``.  Identifiers
are the variables ``x`` and ``y``, declared parameter names, or one of the
functions ``sin``, ``cos``, ``exp``, ``sqrt``, ``abs``.  Exponents are
restricted to integer constants >= 0, which keeps forward-mode derivatives
exact and avoids branch cuts.

Evaluation comes in two flavours: plain IEEE-double evaluation and
forward-mode evaluation with :class:`Dual2` carrying exact first partials
with respect to x and y.  Parsed trees are immutable and evaluation is pure,
so a single AST may be shared freely across threads.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Union


class ExprError(Exception):
    """Base class for expression-language errors."""


class ExprSyntaxError(ExprError):
    """Malformed expression text; carries the character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (offset {position})")
        self.position = position


class ExprNameError(ExprError):
    """Identifier that is neither x, y, a declared parameter, nor a function."""

    def __init__(self, name: str, position: int):
        super().__init__(f"unknown identifier '{name}' (offset {position})")
        self.name = name
        self.position = position


class EvalDomainError(ExprError):
    """Evaluation left the real domain (division by zero, sqrt of negative)."""

    def __init__(self, reason: str, x: float, y: float):
        super().__init__(f"{reason} at point ({x}, {y})")
        self.reason = reason
        self.x = x
        self.y = y


# ---------------------------------------------------------------------------
# Dual numbers
# ---------------------------------------------------------------------------

Number = Union[float, int, "Dual2"]


@dataclass(frozen=True, slots=True)
class Dual2:
    """Value plus exact first partials (d/dx, d/dy) for forward-mode AD."""

    value: float
    dx: float = 0.0
    dy: float = 0.0

    def __add__(self, other: Number) -> "Dual2":
        if isinstance(other, Dual2):
            return Dual2(self.value + other.value, self.dx + other.dx, self.dy + other.dy)
        return Dual2(self.value + other, self.dx, self.dy)

    __radd__ = __add__

    def __sub__(self, other: Number) -> "Dual2":
        if isinstance(other, Dual2):
            return Dual2(self.value - other.value, self.dx - other.dx, self.dy - other.dy)
        return Dual2(self.value - other, self.dx, self.dy)

    def __rsub__(self, other: float) -> "Dual2":
        return Dual2(other - self.value, -self.dx, -self.dy)

    def __neg__(self) -> "Dual2":
        return Dual2(-self.value, -self.dx, -self.dy)

    def __mul__(self, other: Number) -> "Dual2":
        if isinstance(other, Dual2):
            return Dual2(
                self.value * other.value,
                self.dx * other.value + self.value * other.dx,
                self.dy * other.value + self.value * other.dy,
            )
        return Dual2(self.value * other, self.dx * other, self.dy * other)

    __rmul__ = __mul__

    def __truediv__(self, other: Number) -> "Dual2":
        if isinstance(other, Dual2):
            if other.value == 0.0:
                raise ZeroDivisionError("division by zero")
            inv = 1.0 / other.value
            val = self.value * inv
            return Dual2(val, (self.dx - val * other.dx) * inv, (self.dy - val * other.dy) * inv)
        if other == 0.0:
            raise ZeroDivisionError("division by zero")
        inv = 1.0 / other
        return Dual2(self.value * inv, self.dx * inv, self.dy * inv)

    def __rtruediv__(self, other: float) -> "Dual2":
        if self.value == 0.0:
            raise ZeroDivisionError("division by zero")
        val = other / self.value
        scale = -val / self.value
        return Dual2(val, scale * self.dx, scale * self.dy)

    def powi(self, n: int) -> "Dual2":
        """Integer power by the power rule; n >= 0."""
        if n == 0:
            return Dual2(1.0, 0.0, 0.0)
        if n == 1:
            return self
        base = self.value ** (n - 1)
        scale = n * base
        return Dual2(base * self.value, scale * self.dx, scale * self.dy)

    def sin(self) -> "Dual2":
        c = math.cos(self.value)
        return Dual2(math.sin(self.value), c * self.dx, c * self.dy)

    def cos(self) -> "Dual2":
        s = -math.sin(self.value)
        return Dual2(math.cos(self.value), s * self.dx, s * self.dy)

    def exp(self) -> "Dual2":
        e = math.exp(self.value)
        return Dual2(e, e * self.dx, e * self.dy)

    def sqrt(self) -> "Dual2":
        if self.value < 0.0:
            raise ValueError("sqrt of negative value")
        s = math.sqrt(self.value)
        # Constant subtrees stay exactly flat even at the non-smooth point 0.
        d = 0.5 / s if s > 0.0 else math.inf
        ddx = 0.0 if self.dx == 0.0 else d * self.dx
        ddy = 0.0 if self.dy == 0.0 else d * self.dy
        return Dual2(s, ddx, ddy)

    def __abs__(self) -> "Dual2":
        s = math.copysign(1.0, self.value) if self.value != 0.0 else 0.0
        return Dual2(abs(self.value), s * self.dx, s * self.dy)


# ---------------------------------------------------------------------------
# AST nodes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Const:
    value: float


@dataclass(frozen=True, slots=True)
class Var:
    name: str  # "x" or "y"


@dataclass(frozen=True, slots=True)
class Param:
    name: str


@dataclass(frozen=True, slots=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True, slots=True)
class BinOp:
    op: str  # one of + - * /
    left: "Node"
    right: "Node"


@dataclass(frozen=True, slots=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True, slots=True)
class Call:
    func: str  # sin cos exp sqrt abs
    arg: "Node"


Node = Union[Const, Var, Param, Neg, BinOp, Pow, Call]

FUNCTIONS = ("sin", "cos", "exp", "sqrt", "abs")

_FLOAT_FUNCS = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "abs": abs,
}


def _float_sqrt(v: float) -> float:
    if v < 0.0:
        raise ValueError("sqrt of negative value")
    return math.sqrt(v)


_FLOAT_FUNCS["sqrt"] = _float_sqrt


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True, slots=True)
class _Token:
    kind: str  # num | ident | op | eof
    text: str
    pos: int
    end: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == m.start():
            # Only whitespace consumed or an unrecognised character.
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            if bad >= n:
                break
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        start = m.end() - len(m.group(kind))
        tokens.append(_Token(kind, m.group(kind), start, m.end()))
        pos = m.end()
    return tokens


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, text: str, params: dict[str, float]):
        self.text = text
        self.params = params
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def eof_pos(self) -> int:
        """Offset just past the last consumed token (for unexpected-EOF)."""
        if self.i > 0:
            return self.tokens[self.i - 1].end
        return 0

    def expect_op(self, op: str) -> None:
        tok = self.peek()
        if tok is None:
            raise ExprSyntaxError(f"expected '{op}', found end of input", self.eof_pos())
        if tok.kind != "op" or tok.text != op:
            raise ExprSyntaxError(f"expected '{op}', found {tok.text!r}", tok.pos)
        self.advance()

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok is not None:
            raise ExprSyntaxError(f"unexpected trailing input {tok.text!r}", tok.pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while True:
            tok = self.peek()
            if tok is not None and tok.kind == "op" and tok.text in "+-":
                self.advance()
                node = BinOp(tok.text, node, self.term())
            else:
                return node

    def term(self) -> Node:
        node = self.unary()
        while True:
            tok = self.peek()
            if tok is not None and tok.kind == "op" and tok.text in "*/":
                self.advance()
                node = BinOp(tok.text, node, self.unary())
            else:
                return node

    def unary(self) -> Node:
        tok = self.peek()
        if tok is not None and tok.kind == "op" and tok.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        node = self.atom()
        while True:
            tok = self.peek()
            if tok is not None and tok.kind == "op" and tok.text == "^":
                self.advance()
                node = Pow(node, self.exponent())
            else:
                return node

    def exponent(self) -> int:
        tok = self.peek()
        pos = tok.pos if tok is not None else self.eof_pos()
        node = self.unary()
        if isinstance(node, Neg) and isinstance(node.arg, Const):
            node = Const(-node.arg.value)
        if not isinstance(node, Const) or not float(node.value).is_integer() or node.value < 0:
            raise ExprSyntaxError("exponent must be a non-negative integer constant", pos)
        return int(node.value)

    def atom(self) -> Node:
        tok = self.peek()
        if tok is None:
            raise ExprSyntaxError("expected an operand, found end of input", self.eof_pos())
        if tok.kind == "num":
            self.advance()
            return Const(float(tok.text))
        if tok.kind == "ident":
            self.advance()
            name = tok.text
            nxt = self.peek()
            if name in FUNCTIONS and nxt is not None and nxt.kind == "op" and nxt.text == "(":
                self.advance()
                arg = self.expr()
                self.expect_op(")")
                return Call(name, arg)
            if name in ("x", "y"):
                return Var(name)
            if name in self.params:
                return Param(name)
            raise ExprNameError(name, tok.pos)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExprSyntaxError(f"unexpected token {tok.text!r}", tok.pos)


# ---------------------------------------------------------------------------
# Evaluation (generic over float / Dual2 via operator overloading)
# ---------------------------------------------------------------------------

def _eval(node: Node, x: Number, y: Number, params: dict[str, float]) -> Number:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return x if node.name == "x" else y
    if isinstance(node, Param):
        return params[node.name]
    if isinstance(node, Neg):
        return -_eval(node.arg, x, y, params)
    if isinstance(node, BinOp):
        a = _eval(node.left, x, y, params)
        b = _eval(node.right, x, y, params)
        op = node.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if isinstance(b, Dual2):
            return a / b
        if b == 0.0:
            raise ZeroDivisionError("division by zero")
        return a / b
    if isinstance(node, Pow):
        base = _eval(node.base, x, y, params)
        if isinstance(base, Dual2):
            return base.powi(node.exponent)
        return base ** node.exponent
    if isinstance(node, Call):
        arg = _eval(node.arg, x, y, params)
        if isinstance(arg, Dual2):
            if node.func == "abs":
                return abs(arg)
            return getattr(arg, node.func)()
        return _FLOAT_FUNCS[node.func](arg)
    raise TypeError(f"unknown node {node!r}")


# ---------------------------------------------------------------------------
# Printing and compilation
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _fmt_number(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _print(node: Node, params: dict[str, float] | None) -> tuple[str, int]:
    """Render a node; returns (text, precedence). params=None keeps names,
    otherwise parameter values are inlined as literals (for compilation)."""
    if isinstance(node, Const):
        if node.value < 0:
            return f"({_fmt_number(node.value)})", _PREC["atom"]
        return _fmt_number(node.value), _PREC["atom"]
    if isinstance(node, Var):
        return node.name, _PREC["atom"]
    if isinstance(node, Param):
        if params is None:
            return node.name, _PREC["atom"]
        v = params[node.name]
        return (f"({v!r})" if v < 0 else repr(v)), _PREC["atom"]
    if isinstance(node, Neg):
        inner, p = _print(node.arg, params)
        if p < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}", _PREC["neg"]
    if isinstance(node, BinOp):
        lt, lp = _print(node.left, params)
        rt, rp = _print(node.right, params)
        prec = _PREC[node.op]
        if lp < prec:
            lt = f"({lt})"
        # Left-assoc: right side needs parens at equal precedence too.
        if rp <= prec:
            rt = f"({rt})"
        return f"{lt} {node.op} {rt}", prec
    if isinstance(node, Pow):
        bt, bp = _print(node.base, params)
        if bp <= _PREC["^"]:
            bt = f"({bt})"
        return f"{bt}^{node.exponent}", _PREC["^"]
    if isinstance(node, Call):
        at, _ = _print(node.arg, params)
        return f"{node.func}({at})", _PREC["atom"]
    raise TypeError(f"unknown node {node!r}")


def _codegen(node: Node, params: dict[str, float]) -> str:
    """Python source mirroring _eval's float operation order exactly."""
    if isinstance(node, Const):
        return f"({node.value!r})"
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Param):
        return f"({params[node.name]!r})"
    if isinstance(node, Neg):
        return f"(-{_codegen(node.arg, params)})"
    if isinstance(node, BinOp):
        return f"({_codegen(node.left, params)} {node.op} {_codegen(node.right, params)})"
    if isinstance(node, Pow):
        return f"({_codegen(node.base, params)} ** {node.exponent})"
    if isinstance(node, Call):
        return f"{node.func}({_codegen(node.arg, params)})"
    raise TypeError(f"unknown node {node!r}")


_COMPILE_ENV = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "sqrt": _float_sqrt,
    "abs": abs,
}


# ---------------------------------------------------------------------------
# Public AST wrapper
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExprAst:
    """Immutable parsed expression with its bound parameter values."""

    root: Node
    params: dict[str, float]
    source: str = ""

    def eval(self, x: float, y: float) -> float:
        """IEEE-double evaluation at the point (x, y)."""
        try:
            return _eval(self.root, x, y, self.params)
        except (ZeroDivisionError, ValueError, OverflowError) as exc:
            raise EvalDomainError(str(exc), x, y) from None

    def eval_dual(self, x: float, y: float) -> Dual2:
        """Value plus exact partials d/dx, d/dy at the point (x, y)."""
        return self.eval_lifted(Dual2(x, 1.0, 0.0), Dual2(y, 0.0, 1.0))

    def eval_lifted(self, x: Dual2, y: Dual2) -> Dual2:
        """Forward-mode evaluation with caller-chosen tangent seeds."""
        try:
            out = _eval(self.root, x, y, self.params)
        except (ZeroDivisionError, ValueError, OverflowError) as exc:
            raise EvalDomainError(str(exc), x.value, y.value) from None
        if not isinstance(out, Dual2):  # constant expression
            out = Dual2(float(out), 0.0, 0.0)
        return out

    def compiled(self) -> Callable[[float, float], float]:
        """Fast closure for hot loops; agrees bit-for-bit with eval()."""
        src = _codegen(self.root, self.params)
        raw = eval(compile(f"lambda x, y: {src}", "<expr>", "eval"),
                   {"__builtins__": {}, **_COMPILE_ENV})

        def fn(x: float, y: float) -> float:
            try:
                return raw(x, y)
            except (ZeroDivisionError, ValueError, OverflowError) as exc:
                raise EvalDomainError(str(exc), x, y) from None

        return fn

    def to_text(self) -> str:
        """Parseable rendering; reparsing evaluates identically."""
        return _print(self.root, None)[0]

    def variables(self) -> set[str]:
        out: set[str] = set()
        _walk_names(self.root, out, Var)
        return out

    def parameter_names(self) -> set[str]:
        out: set[str] = set()
        _walk_names(self.root, out, Param)
        return out


def _walk_names(node: Node, out: set[str], cls) -> None:
    if isinstance(node, cls):
        out.add(node.name)
    elif isinstance(node, Neg):
        _walk_names(node.arg, out, cls)
    elif isinstance(node, BinOp):
        _walk_names(node.left, out, cls)
        _walk_names(node.right, out, cls)
    elif isinstance(node, Pow):
        _walk_names(node.base, out, cls)
    elif isinstance(node, Call):
        _walk_names(node.arg, out, cls)


def parse(text: str, params: dict[str, float] | None = None) -> ExprAst:
    """Parse expression text with the given named parameter values.

    Raises ExprSyntaxError (with offset) on malformed input, ExprNameError on
    identifiers that are not x, y, a declared parameter, or a function.
    """
    if params is None:
        params = {}
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    for name in params:
        if name in ("x", "y") or name in FUNCTIONS:
            raise ExprNameError(name, 0)
    root = _Parser(text, params).parse()
    return ExprAst(root, dict(params), text)
