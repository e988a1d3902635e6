"""
Analytic data expressions.

Expressions over ``x`` and ``y`` with ``+ - * / ^``, the functions ``sin``,
``cos``, ``exp``, ``sqrt`` and the constant ``pi``. Exponents are integer
literals. Parsed trees are immutable, can be differentiated exactly and are
evaluated with numpy so one call covers a whole array of quadrature points.
"""

import math
import re
from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np
import structlog

from brinkman_vem.core.errors import ExpressionDomainError, ExpressionSyntaxError

logger = structlog.get_logger(__name__)

VARIABLES = ("x", "y")
FUNCTIONS = ("sin", "cos", "exp", "sqrt")
CONSTANTS = {"pi": math.pi}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Const, Neg, BinOp, Pow, Call]


# Tokenizer

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        match = _TOKEN_RE.match(text, pos)
        if match is None or match.end() == pos:
            offset = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExpressionSyntaxError(f"unexpected character {text[offset]!r}", text, offset)
        kind = match.lastgroup
        tokens.append(_Token(kind, match.group(kind), match.start(kind)))
        pos = match.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    """Recursive descent, one method per precedence level."""

    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.index = 0

    @property
    def current(self) -> _Token:
        return self.tokens[self.index]

    def _advance(self) -> _Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def _error(self, message: str, token: _Token = None) -> ExpressionSyntaxError:
        token = token or self.current
        return ExpressionSyntaxError(message, self.text, token.offset)

    def _expect(self, text: str) -> _Token:
        if self.current.text != text:
            found = self.current.text or "end of input"
            raise self._error(f"expected '{text}' but found '{found}'")
        return self._advance()

    def parse(self) -> Expr:
        expr = self._expression()
        if self.current.kind != "end":
            raise self._error(f"unexpected '{self.current.text}'")
        return expr

    # expression := term (('+' | '-') term)*
    def _expression(self) -> Expr:
        node = self._term()
        while self.current.text in ("+", "-"):
            op = self._advance().text
            node = BinOp(op, node, self._term())
        return node

    # term := unary (('*' | '/') unary)*
    def _term(self) -> Expr:
        node = self._unary()
        while self.current.text in ("*", "/"):
            op = self._advance().text
            node = BinOp(op, node, self._unary())
        return node

    # unary := '-' unary | power
    def _unary(self) -> Expr:
        if self.current.text == "-":
            self._advance()
            return Neg(self._unary())
        return self._power()

    # power := atom ('^' exponent)?
    def _power(self) -> Expr:
        base = self._atom()
        if self.current.text == "^":
            self._advance()
            return Pow(base, self._exponent())
        return base

    # exponent := ['-'] INTEGER ('^' exponent)?, folded right to left
    def _exponent(self) -> int:
        sign = 1
        if self.current.text == "-":
            self._advance()
            sign = -1
        token = self.current
        if token.kind != "number" or not token.text.isdigit():
            raise self._error("exponent must be an integer literal")
        self._advance()
        value = sign * int(token.text)
        if self.current.text == "^":
            self._advance()
            power = self._exponent()
            if power < 0:
                raise self._error("exponent must be an integer literal", token)
            value = value**power
        return value

    def _atom(self) -> Expr:
        token = self.current
        if token.kind == "number":
            self._advance()
            return Num(float(token.text))
        if token.kind == "ident":
            self._advance()
            if token.text in FUNCTIONS:
                self._expect("(")
                arg = self._expression()
                self._expect(")")
                return Call(token.text, arg)
            if token.text in VARIABLES:
                return Var(token.text)
            if token.text in CONSTANTS:
                return Const(token.text)
            raise self._error(f"unknown identifier '{token.text}'", token)
        if token.text == "(":
            self._advance()
            node = self._expression()
            self._expect(")")
            return node
        found = token.text or "end of input"
        raise self._error(f"expected an operand but found '{found}'")


def parse(text: str) -> Expr:
    """Parse an expression string; errors carry the character offset."""
    return _Parser(text).parse()


def to_string(expr: Expr) -> str:
    """Fully parenthesized text that parses back to the same tree."""
    if isinstance(expr, Num):
        text = repr(float(expr.value))
        return f"(-{text[1:]})" if expr.value < 0 else text
    if isinstance(expr, (Var, Const)):
        return expr.name
    if isinstance(expr, Neg):
        return f"(-{to_string(expr.operand)})"
    if isinstance(expr, BinOp):
        return f"({to_string(expr.left)} {expr.op} {to_string(expr.right)})"
    if isinstance(expr, Pow):
        return f"({to_string(expr.base)}^{expr.exponent})"
    if isinstance(expr, Call):
        return f"{expr.func}({to_string(expr.arg)})"
    raise TypeError(f"not an expression node: {expr!r}")


# Smart constructors used by differentiate; they only drop zeros and ones.

def _is_num(expr: Expr, value: float) -> bool:
    return isinstance(expr, Num) and expr.value == value


def _neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def _add(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return BinOp("+", a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return _neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    return BinOp("-", a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return BinOp("*", a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if _is_num(a, 0.0):
        return Num(0.0)
    if _is_num(b, 1.0):
        return a
    return BinOp("/", a, b)


def _pow(a: Expr, n: int) -> Expr:
    if n == 0:
        return Num(1.0)
    if n == 1:
        return a
    return Pow(a, n)


def differentiate(expr: Expr, var: str) -> Expr:
    """Exact partial derivative with respect to ``x`` or ``y``."""
    if var not in VARIABLES:
        raise ValueError(f"cannot differentiate with respect to {var!r}")

    if isinstance(expr, (Num, Const)):
        return Num(0.0)
    if isinstance(expr, Var):
        return Num(1.0 if expr.name == var else 0.0)
    if isinstance(expr, Neg):
        return _neg(differentiate(expr.operand, var))
    if isinstance(expr, BinOp):
        u, v = expr.left, expr.right
        du, dv = differentiate(u, var), differentiate(v, var)
        if expr.op == "+":
            return _add(du, dv)
        if expr.op == "-":
            return _sub(du, dv)
        if expr.op == "*":
            return _add(_mul(du, v), _mul(u, dv))
        return _div(_sub(_mul(du, v), _mul(u, dv)), _pow(v, 2))
    if isinstance(expr, Pow):
        du = differentiate(expr.base, var)
        n = expr.exponent
        return _mul(_mul(Num(float(n)), _pow(expr.base, n - 1)), du)
    if isinstance(expr, Call):
        u = expr.arg
        du = differentiate(u, var)
        if expr.func == "sin":
            outer = Call("cos", u)
        elif expr.func == "cos":
            outer = _neg(Call("sin", u))
        elif expr.func == "exp":
            outer = Call("exp", u)
        else:
            return _div(du, _mul(Num(2.0), Call("sqrt", u)))
        return _mul(outer, du)
    raise TypeError(f"not an expression node: {expr!r}")


def _eval(expr: Expr, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if isinstance(expr, Num):
        return np.asarray(expr.value, dtype=float)
    if isinstance(expr, Var):
        return x if expr.name == "x" else y
    if isinstance(expr, Const):
        return np.asarray(CONSTANTS[expr.name], dtype=float)
    if isinstance(expr, Neg):
        return -_eval(expr.operand, x, y)
    if isinstance(expr, BinOp):
        left = _eval(expr.left, x, y)
        right = _eval(expr.right, x, y)
        if expr.op == "+":
            return left + right
        if expr.op == "-":
            return left - right
        if expr.op == "*":
            return left * right
        if np.any(right == 0.0):
            raise ExpressionDomainError("division by zero", to_string(expr))
        return left / right
    if isinstance(expr, Pow):
        base = _eval(expr.base, x, y)
        if expr.exponent < 0:
            if np.any(base == 0.0):
                raise ExpressionDomainError("division by zero", to_string(expr))
            return 1.0 / base ** (-expr.exponent)
        return base**expr.exponent
    if isinstance(expr, Call):
        arg = _eval(expr.arg, x, y)
        if expr.func == "sqrt":
            if np.any(arg < 0.0):
                raise ExpressionDomainError("square root of a negative number", to_string(expr))
            return np.sqrt(arg)
        return getattr(np, expr.func)(arg)
    raise TypeError(f"not an expression node: {expr!r}")


def evaluate(expr: Expr, x, y):
    """Evaluate at a point (floats in, float out) or at arrays of points."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    shape = np.broadcast(xa, ya).shape
    with np.errstate(over="ignore", invalid="ignore"):
        value = _eval(expr, xa, ya)
    value = np.broadcast_to(value, shape)
    if value.ndim == 0:
        return float(value)
    return np.array(value, dtype=float)


class ScalarField:
    """A parsed expression together with its source text."""

    def __init__(self, source: Union[str, Expr, float]):
        if isinstance(source, str):
            self.expr = parse(source)
        elif isinstance(source, (int, float)):
            self.expr = Num(float(source))
        else:
            self.expr = source
        self.text = to_string(self.expr) if not isinstance(source, str) else source

    def __call__(self, x, y):
        return evaluate(self.expr, x, y)

    def derivative(self, var: str) -> "ScalarField":
        return ScalarField(differentiate(self.expr, var))

    def gradient(self) -> Tuple["ScalarField", "ScalarField"]:
        return self.derivative("x"), self.derivative("y")

    def __repr__(self) -> str:
        return f"ScalarField({self.text!r})"
