"""Small symbolic scalar expressions over x1..xd.

Nodes are hash-consed: structurally equal expressions built through the
constructors below are the same object, so derivatives and evaluations can be
memoised by identity and large derivative DAGs share their subterms.

Simplification happens at construction and is deliberately shallow: constant
folding, 0/1 absorption, flattening, merging of like terms and like factors.
"""

from __future__ import annotations

import math
import re
import threading
import warnings
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from .errors import DomainError, ParseError, UnknownVariable

__all__ = [
    "Expr",
    "const",
    "var",
    "add",
    "mul",
    "power",
    "func",
    "diff",
    "evaluate",
    "eval_at",
    "parse_expr",
    "to_str",
    "variables",
    "node_count",
    "NonFiniteWarning",
    "FUNCTIONS",
]

CONST, VAR, ADD, MUL, POW, FUNC = range(6)
FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")
_FUNC_CODE = {name: i for i, name in enumerate(FUNCTIONS)}

Number = Fraction | float


class NonFiniteWarning(RuntimeWarning):
    pass


class Expr:
    """Immutable expression node.  Build with the module constructors, not directly."""

    __slots__ = ("op", "args", "value", "shash", "fvalue", "__weakref__")

    op: int
    args: tuple["Expr", ...]
    value: object  # constant value, variable index, integer exponent or function name

    def __repr__(self) -> str:
        return f"Expr({to_str(self)!r})"

    def __str__(self) -> str:
        return to_str(self)

    def __reduce__(self):
        return (parse_expr, (to_str(self), max(variables(self), default=0)))

    # arithmetic sugar
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return add(self, mul(const(-1), _lift(other)))

    def __rsub__(self, other):
        return add(_lift(other), mul(const(-1), self))

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return mul(self, power(_lift(other), -1))

    def __rtruediv__(self, other):
        return mul(_lift(other), power(self, -1))

    def __neg__(self):
        return mul(const(-1), self)

    def __pow__(self, n: int):
        return power(self, n)

    @property
    def is_const(self) -> bool:
        return self.op == CONST

    def is_zero(self) -> bool:
        return self.op == CONST and self.value == 0


def _lift(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return const(x)


_TABLE: dict[tuple, Expr] = {}
_LOCK = threading.Lock()


def _make(op: int, value, args: tuple[Expr, ...] = ()) -> Expr:
    if op == CONST:
        key = (op, type(value).__name__, value, args)
    else:
        key = (op, value, args)
    node = _TABLE.get(key)
    if node is not None:
        return node
    with _LOCK:
        node = _TABLE.get(key)
        if node is None:
            node = object.__new__(Expr)
            node.op = op
            node.args = args
            node.value = value
            payload = _FUNC_CODE[value] if op == FUNC else value
            # deterministic across runs (no str hashing), used for ordering only
            node.shash = hash((op, payload) + tuple(a.shash for a in args))
            node.fvalue = float(value) if op == CONST else None
            _TABLE[key] = node
    return node


def _norm(v) -> Number:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, bool):
        v = int(v)
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, float):
        if v.is_integer() and abs(v) < 2**53:
            return Fraction(int(v))
        return v
    raise TypeError(f"not a numeric constant: {v!r}")


def const(v) -> Expr:
    return _make(CONST, _norm(v))


ZERO = const(0)
ONE = const(1)


def var(k: int) -> Expr:
    if k < 1:
        raise ValueError("variables are numbered from 1")
    return _make(VAR, k)


def _split_coeff(e: Expr) -> tuple[Number, Expr]:
    if e.op == MUL and e.args[0].op == CONST:
        rest = e.args[1:]
        return e.args[0].value, rest[0] if len(rest) == 1 else _make(MUL, None, rest)
    return Fraction(1), e


def add(*terms: Expr) -> Expr:
    flat: list[Expr] = []
    for t in terms:
        if t.op == ADD:
            flat.extend(t.args)
        else:
            flat.append(t)
    total: Number = Fraction(0)
    coeffs: dict[Expr, Number] = {}
    for t in flat:
        if t.op == CONST:
            total += t.value
            continue
        c, rest = _split_coeff(t)
        coeffs[rest] = coeffs.get(rest, 0) + c
    parts = []
    for rest, c in coeffs.items():
        if c == 0:
            continue
        parts.append(rest if c == 1 else mul(const(c), rest))
    parts.sort(key=lambda e: e.shash)
    if total != 0:
        parts.insert(0, const(total))
    if not parts:
        return ZERO
    if len(parts) == 1:
        return parts[0]
    return _make(ADD, None, tuple(parts))


def mul(*factors: Expr) -> Expr:
    flat: list[Expr] = []
    for f in factors:
        if f.op == MUL:
            flat.extend(f.args)
        else:
            flat.append(f)
    coeff: Number = Fraction(1)
    exps: dict[Expr, int] = {}
    for f in flat:
        if f.op == CONST:
            coeff = coeff * f.value
            continue
        if f.op == POW:
            base, n = f.args[0], f.value
        else:
            base, n = f, 1
        exps[base] = exps.get(base, 0) + n
    if coeff == 0:
        return ZERO
    parts = [power(b, n) for b, n in exps.items() if n != 0]
    parts.sort(key=lambda e: e.shash)
    if coeff != 1 or not parts:
        parts.insert(0, const(coeff))
    if len(parts) == 1:
        return parts[0]
    return _make(MUL, None, tuple(parts))


def power(base: Expr, n: int) -> Expr:
    if isinstance(n, Fraction) and n.denominator == 1:
        n = int(n)
    if not isinstance(n, int) or isinstance(n, bool):
        raise TypeError("exponents must be integers")
    if n == 0:
        return ONE
    if n == 1:
        return base
    if base.op == CONST:
        v = base.value
        if v == 0 and n < 0:
            return _make(POW, n, (base,))
        if isinstance(v, Fraction):
            return const(v**n)
        return const(float(v) ** n)
    if base.op == POW:
        return power(base.args[0], base.value * n)
    if base.op == MUL:
        return mul(*(power(f, n) for f in base.args))
    return _make(POW, n, (base,))


_EXACT_FUNC = {
    ("exp", Fraction(0)): Fraction(1),
    ("log", Fraction(1)): Fraction(0),
    ("sin", Fraction(0)): Fraction(0),
    ("cos", Fraction(0)): Fraction(1),
    ("sqrt", Fraction(0)): Fraction(0),
    ("sqrt", Fraction(1)): Fraction(1),
}


def func(name: str, arg: Expr) -> Expr:
    if name not in _FUNC_CODE:
        raise ValueError(f"unknown function {name!r}")
    if arg.op == CONST:
        folded = _EXACT_FUNC.get((name, arg.value))
        if folded is not None:
            return const(folded)
    return _make(FUNC, name, (arg,))


# -- differentiation -----------------------------------------------------------

_DIFF_CACHE: dict[tuple[Expr, int], Expr] = {}


def diff(e: Expr, k: int) -> Expr:
    """Exact partial derivative with respect to ``x_k``."""
    key = (e, k)
    hit = _DIFF_CACHE.get(key)
    if hit is not None:
        return hit
    op = e.op
    if op == CONST:
        d = ZERO
    elif op == VAR:
        d = ONE if e.value == k else ZERO
    elif op == ADD:
        d = add(*(diff(a, k) for a in e.args))
    elif op == MUL:
        terms = []
        args = e.args
        for i, a in enumerate(args):
            da = diff(a, k)
            if not da.is_zero():
                terms.append(mul(*args[:i], da, *args[i + 1:]))
        d = add(*terms) if terms else ZERO
    elif op == POW:
        base, n = e.args[0], e.value
        db = diff(base, k)
        d = ZERO if db.is_zero() else mul(const(n), power(base, n - 1), db)
    else:
        u = e.args[0]
        du = diff(u, k)
        if du.is_zero():
            d = ZERO
        elif e.value == "exp":
            d = mul(e, du)
        elif e.value == "log":
            d = mul(power(u, -1), du)
        elif e.value == "sin":
            d = mul(func("cos", u), du)
        elif e.value == "cos":
            d = mul(const(-1), func("sin", u), du)
        else:  # sqrt
            d = mul(const(Fraction(1, 2)), power(e, -1), du)
    _DIFF_CACHE[key] = d
    return d


def variables(e: Expr) -> set[int]:
    seen: set[int] = set()
    out: set[int] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if id(n) in seen:
            continue
        seen.add(id(n))
        if n.op == VAR:
            out.add(n.value)
        stack.extend(n.args)
    return out


def node_count(e: Expr) -> int:
    """Number of distinct nodes in the DAG of ``e``."""
    seen: set[int] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        if id(n) not in seen:
            seen.add(id(n))
            stack.extend(n.args)
    return len(seen)


# -- evaluation ----------------------------------------------------------------


def _topo(e: Expr) -> list[Expr]:
    order: list[Expr] = []
    seen: set[int] = set()
    stack: list[tuple[Expr, bool]] = [(e, False)]
    while stack:
        n, done = stack.pop()
        if done:
            order.append(n)
            continue
        if id(n) in seen:
            continue
        seen.add(id(n))
        stack.append((n, True))
        for a in n.args:
            if id(a) not in seen:
                stack.append((a, False))
    return order


def _scalar_func(name: str, v: float) -> float:
    if name == "log":
        if v <= 0:
            raise DomainError(f"log of non-positive value {v!r}")
        return math.log(v)
    if name == "sqrt":
        if v < 0:
            raise DomainError(f"sqrt of negative value {v!r}")
        return math.sqrt(v)
    if name == "exp":
        try:
            return math.exp(v)
        except OverflowError:
            return math.inf
    return getattr(math, name)(v)


def evaluate(exprs: Expr | Sequence[Expr], x, *, array: bool = False):
    """Evaluate one expression or a sequence sharing subterms at point ``x``.

    With ``array=True`` the coordinates of ``x`` may be numpy arrays; domain
    violations then produce NaN instead of :class:`DomainError`.
    """
    single = isinstance(exprs, Expr)
    roots = [exprs] if single else list(exprs)
    vals: dict[int, object] = {}
    if array:
        import numpy as np

        funcs = {"exp": np.exp, "log": np.log, "sin": np.sin, "cos": np.cos, "sqrt": np.sqrt}
    for root in roots:
        for n in _topo(root):
            if id(n) in vals:
                continue
            op = n.op
            if op == CONST:
                v = n.fvalue
            elif op == VAR:
                if n.value > len(x):
                    raise UnknownVariable(f"x{n.value} is not defined for a point of length {len(x)}")
                v = x[n.value - 1]
            elif op == ADD:
                it = iter(n.args)
                v = vals[id(next(it))]
                for a in it:
                    v = v + vals[id(a)]
            elif op == MUL:
                it = iter(n.args)
                v = vals[id(next(it))]
                for a in it:
                    v = v * vals[id(a)]
            elif op == POW:
                b = vals[id(n.args[0])]
                if array:
                    v = b ** float(n.value) if n.value < 0 else b**n.value
                else:
                    try:
                        v = b**n.value
                    except ZeroDivisionError:
                        raise DomainError("division by zero") from None
                    except OverflowError:
                        v = math.inf
            else:
                a = vals[id(n.args[0])]
                v = funcs[n.value](a) if array else _scalar_func(n.value, a)
            vals[id(n)] = v
    out = [vals[id(r)] for r in roots]
    return out[0] if single else out


def eval_at(e: Expr, x: Sequence[float]) -> float:
    """IEEE double value of ``e`` at ``x``.  Non-finite results warn but are returned."""
    for xi in x:
        if not math.isfinite(xi):
            raise ValueError("evaluation point must be finite")
    v = float(evaluate(e, [float(xi) for xi in x]))
    if not math.isfinite(v):
        warnings.warn(f"non-finite value {v} from {to_str(e)[:60]}", NonFiniteWarning, stacklevel=2)
    return v


def lambdify(exprs: Sequence[Expr]) -> Callable:
    """Return ``g(x) -> list`` evaluating several expressions, array-friendly."""
    exprs = list(exprs)

    def g(x):
        return evaluate(exprs, x, array=True)

    return g


# -- printing ------------------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _fmt_number(v: Number) -> tuple[str, int]:
    if isinstance(v, Fraction):
        if v.denominator == 1:
            s = str(v.numerator)
            return s, (_PREC_ATOM if v >= 0 else _PREC_NEG)
        return f"{v.numerator}/{v.denominator}", (_PREC_MUL if v > 0 else _PREC_NEG)
    s = repr(float(v))
    if s in ("inf", "-inf", "nan"):
        raise ValueError("cannot print a non-finite constant")
    return s, (_PREC_ATOM if v >= 0 else _PREC_NEG)


def _print(e: Expr, names: Mapping[int, str] | None) -> tuple[str, int]:
    op = e.op
    if op == CONST:
        return _fmt_number(e.value)
    if op == VAR:
        return (names[e.value] if names else f"x{e.value}"), _PREC_ATOM
    if op == FUNC:
        return f"{e.value}({_print(e.args[0], names)[0]})", _PREC_ATOM
    if op == POW:
        s, p = _print(e.args[0], names)
        if p <= _PREC_POW:
            s = f"({s})"
        n = e.value
        return (f"{s}^{n}" if n >= 0 else f"{s}^({n})"), _PREC_POW
    if op == MUL:
        c, rest = _split_coeff(e)
        if c < 0:
            s, p = _print(mul(const(-c), rest), names)
            return f"-{s}" if p >= _PREC_MUL else f"-({s})", _PREC_NEG
        pieces = []
        for a in e.args:
            s, p = _print(a, names)
            pieces.append(f"({s})" if p <= _PREC_MUL else s)
        return "*".join(pieces), _PREC_MUL
    pieces = []
    for i, a in enumerate(e.args):
        c, rest = _split_coeff(a)
        if a.op == CONST:
            c, rest = a.value, None
        if i > 0 and c < 0:
            pos = const(-c) if rest is None else mul(const(-c), rest)
            s, p = _print(pos, names)
            pieces.append(f" - {s}" if p > _PREC_ADD else f" - ({s})")
            continue
        s, p = _print(a, names)
        pieces.append(s if i == 0 else f" + {s}")
    return "".join(pieces), _PREC_ADD


def to_str(e: Expr, names: Mapping[int, str] | None = None) -> str:
    """Infix text that :func:`parse_expr` reads back to an equal-valued expression."""
    return _print(e, names)[0]


# -- parsing -------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, d: int, names: Mapping[str, int] | None):
        self.text = text
        self.d = d
        self.names = names or {}
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, msg: str, tok=None):
        tok = tok or self.peek()
        raise ParseError(msg, tok[2], self.text)

    def expect(self, value: str):
        tok = self.take()
        if tok[1] != value or tok[0] == "num":
            self.error(f"expected {value!r}", tok)

    def parse(self) -> Expr:
        if self.peek()[0] == "end":
            self.error("empty expression")
        e = self.expr()
        if self.peek()[0] != "end":
            self.error(f"unexpected token {self.peek()[1]!r}")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else add(e, mul(const(-1), rhs))
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else mul(e, power(rhs, -1))
        return e

    def unary(self) -> Expr:
        if self.peek() == ("op", "-", self.peek()[2]):
            self.take()
            return mul(const(-1), self.unary())
        if self.peek() == ("op", "+", self.peek()[2]):
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            tok = self.take()
            ex = self.unary()
            if ex.op != CONST or not isinstance(ex.value, Fraction) or ex.value.denominator != 1:
                self.error("exponent must be an integer constant; write exp(y*log(x)) instead", tok)
            return power(base, int(ex.value))
        return base

    def atom(self) -> Expr:
        tok = self.take()
        kind, text, pos = tok
        if kind == "num":
            return const(Fraction(text))
        if kind == "name":
            if text in _FUNC_CODE:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return func(text, arg)
            if text in self.names:
                return var(self.names[text])
            m = re.fullmatch(r"x(\d+)", text)
            if m:
                k = int(m.group(1))
                if not 1 <= k <= self.d:
                    raise UnknownVariable(f"variable {text} outside x1..x{self.d}", pos, self.text)
                return var(k)
            self.error(f"unknown symbol {text!r} (constants must be numeric)", tok)
        if text == "(":
            e = self.expr()
            self.expect(")")
            return e
        self.error(f"unexpected token {text!r}" if text else "unexpected end of input", tok)


def parse_expr(text: str, d: int, names: Mapping[str, int] | None = None) -> Expr:
    """Parse infix text over ``x1..xd``.

    ``names`` maps extra identifiers to variable indices (e.g. ``{"t": 1}``).
    Numeric literals are kept as exact rationals.
    """
    return _Parser(text, d, names).parse()


def sum_of(terms: Iterable[Expr]) -> Expr:
    return add(*terms)
