"""
Expression language for constitutive coefficient functions.

Coefficients are written as arithmetic over the density and the six stress /
density-gradient invariants, e.g. ``"A*phi*rho/K"``:

    literals      2, 0.5, 1e-3
    variables     rho, i1 .. i6, phi   (phi is -i1/3)
    operators     + - * / ^ and unary -
    functions     exp, log, abs, sqrt

Binding, tightest first: ``^`` (right associative), unary ``-``, ``* /``,
``+ -`` (both left associative). Named constants can be folded in as literals
at parse time; they never become variables.
"""
import math
import re
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, List, Mapping, Optional, Union

from .exceptions import ExprDomainError, ExprSyntaxError, UnknownIdentifierError
from .tensor3 import InvariantSet

VARIABLES: FrozenSet[str] = frozenset({"rho", "i1", "i2", "i3", "i4", "i5", "i6", "phi"})
FUNCTIONS = ("exp", "log", "abs", "sqrt")


@dataclass(frozen=True)
class EvalContext:
    rho: float
    i1: float = 0.0
    i2: float = 0.0
    i3: float = 0.0
    i4: float = 0.0
    i5: float = 0.0
    i6: float = 0.0

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"density must be positive, got {self.rho!r}")

    @classmethod
    def from_invariants(cls, rho: float, inv: InvariantSet) -> "EvalContext":
        return cls(rho, *inv.to_tuple())

    @property
    def phi(self) -> float:
        return -self.i1 / 3.0

    def lookup(self, name: str) -> float:
        return getattr(self, name)


class Expr:
    """Base class of the syntax tree. Nodes are immutable."""

    def evaluate(self, ctx: EvalContext) -> float:
        value = self._eval(ctx)
        if not math.isfinite(value):
            raise ExprDomainError("non-finite result", to_source(self))
        return value

    def _eval(self, ctx: EvalContext) -> float:
        raise NotImplementedError

    def __str__(self) -> str:
        return to_source(self)


@dataclass(frozen=True)
class Number(Expr):
    value: float

    def _eval(self, ctx):
        return self.value


@dataclass(frozen=True)
class Variable(Expr):
    name: str

    def _eval(self, ctx):
        return ctx.lookup(self.name)


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr

    def _eval(self, ctx):
        return -self.operand.evaluate(ctx)


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def _eval(self, ctx):
        a = self.left.evaluate(ctx)
        b = self.right.evaluate(ctx)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            if b == 0.0:
                raise ExprDomainError("division by zero", to_source(self))
            return a / b
        try:
            return math.pow(a, b)
        except (ValueError, OverflowError, ZeroDivisionError) as exc:
            raise ExprDomainError(f"invalid power ({exc})", to_source(self)) from exc


def _log(x: float) -> float:
    if x <= 0.0:
        raise ValueError("log of nonpositive value")
    return math.log(x)


def _sqrt(x: float) -> float:
    if x < 0.0:
        raise ValueError("sqrt of negative value")
    return math.sqrt(x)


_FUNCTION_IMPLS: Dict[str, Callable[[float], float]] = {
    "exp": math.exp,
    "log": _log,
    "abs": abs,
    "sqrt": _sqrt,
}


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr

    def _eval(self, ctx):
        x = self.arg.evaluate(ctx)
        try:
            return float(_FUNCTION_IMPLS[self.func](x))
        except (ValueError, OverflowError) as exc:
            raise ExprDomainError(str(exc), to_source(self)) from exc


def evaluate(expr: Expr, ctx: EvalContext) -> float:
    """Evaluate an expression; raises ExprDomainError instead of returning inf/nan."""
    return expr.evaluate(ctx)


def to_source(expr: Expr) -> str:
    """Fully parenthesized source text; any tree built by parse reparses to itself."""
    if isinstance(expr, Number):
        text = repr(expr.value)
        return f"({text})" if math.copysign(1.0, expr.value) < 0 else text
    if isinstance(expr, Variable):
        return expr.name
    if isinstance(expr, Neg):
        return f"(-{to_source(expr.operand)})"
    if isinstance(expr, BinOp):
        return f"({to_source(expr.left)} {expr.op} {to_source(expr.right)})"
    if isinstance(expr, Call):
        return f"{expr.func}({to_source(expr.arg)})"
    raise TypeError(f"not an expression node: {expr!r}")


def variables(expr: Expr) -> FrozenSet[str]:
    """Names of the variables an expression references."""
    if isinstance(expr, Variable):
        return frozenset({expr.name})
    if isinstance(expr, Neg):
        return variables(expr.operand)
    if isinstance(expr, BinOp):
        return variables(expr.left) | variables(expr.right)
    if isinstance(expr, Call):
        return variables(expr.arg)
    return frozenset()


def is_zero(expr: Optional[Expr]) -> bool:
    """True for a missing coefficient or the literal 0."""
    return expr is None or (isinstance(expr, Number) and expr.value == 0.0)


def constant(value: float) -> Expr:
    return Number(float(value))


# --- parsing ----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r"|(?P<bad>\S))"
)


@dataclass(frozen=True)
class Token:
    kind: str  # num, name, op, end
    text: str
    pos: int


def tokenize(src: str) -> List[Token]:
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            # only whitespace left
            break
        kind = m.lastgroup
        start = m.start(kind)
        if kind == "bad":
            raise ExprSyntaxError(f"unexpected character '{m.group(kind)}'", start, src)
        tokens.append(Token(kind, m.group(kind), start))
        pos = m.end()
    tokens.append(Token("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src: str, constants: Mapping[str, float]):
        self.src = src
        self.constants = constants
        self.tokens = tokenize(src)
        self.index = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def advance(self) -> Token:
        token = self.current
        self.index += 1
        return token

    def accept(self, text: str) -> bool:
        if self.current.kind == "op" and self.current.text == text:
            self.index += 1
            return True
        return False

    def expect(self, text: str):
        if not self.accept(text):
            found = self.current.text or "end of input"
            raise ExprSyntaxError(f"expected '{text}' but found '{found}'", self.current.pos, self.src)

    def parse(self) -> Expr:
        if self.current.kind == "end":
            raise ExprSyntaxError("empty expression", 0, self.src)
        expr = self.additive()
        if self.current.kind != "end":
            raise ExprSyntaxError(f"unexpected '{self.current.text}'", self.current.pos, self.src)
        return expr

    def additive(self) -> Expr:
        left = self.term()
        while self.current.kind == "op" and self.current.text in "+-":
            op = self.advance().text
            left = BinOp(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.current.kind == "op" and self.current.text in "*/":
            op = self.advance().text
            left = BinOp(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.accept("-"):
            operand = self.unary()
            # -<literal> is itself a literal
            if isinstance(operand, Number):
                return Number(-operand.value)
            return Neg(operand)
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.accept("^"):
            # the exponent may carry its own sign: 2^-1
            return BinOp("^", base, self.unary())
        return base

    def primary(self) -> Expr:
        token = self.current
        if token.kind == "num":
            self.advance()
            value = float(token.text)
            if not math.isfinite(value):
                raise ExprSyntaxError(f"number out of range '{token.text}'", token.pos, self.src)
            return Number(value)
        if token.kind == "name":
            self.advance()
            return self.name(token)
        if self.accept("("):
            inner = self.additive()
            self.expect(")")
            return inner
        found = token.text or "end of input"
        raise ExprSyntaxError(f"unexpected '{found}'", token.pos, self.src)

    def name(self, token: Token) -> Expr:
        called = self.current.kind == "op" and self.current.text == "("
        if token.text in FUNCTIONS:
            if not called:
                raise ExprSyntaxError(f"function '{token.text}' needs an argument", self.current.pos, self.src)
            self.advance()
            arg = self.additive()
            self.expect(")")
            return Call(token.text, arg)
        if called:
            raise UnknownIdentifierError(token.text, token.pos)
        if token.text in VARIABLES:
            return Variable(token.text)
        if token.text in self.constants:
            return Number(float(self.constants[token.text]))
        raise UnknownIdentifierError(token.text, token.pos)


def parse(src: str, constants: Optional[Mapping[str, float]] = None) -> Expr:
    """Parse source text into an expression tree.

    ``constants`` maps extra identifiers to numbers that are folded in as
    literals.
    """
    if src is None or not src.strip():
        raise ExprSyntaxError("empty expression", 0, src or "")
    return _Parser(src, constants or {}).parse()


ExprLike = Union[Expr, str, int, float]


def as_expr(value: ExprLike, constants: Optional[Mapping[str, float]] = None) -> Expr:
    """Accept an Expr, source text or a bare number."""
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float)):
        return constant(value)
    return parse(value, constants)
