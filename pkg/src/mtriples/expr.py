"""Meromorphic expression trees and Riemann-sphere geometry.

The expression grammar (rational operations plus ``exp``) is closed under
symbolic differentiation, and every expression evaluates into the extended
complex plane: a clean pole yields the point at infinity, a 0/0 site is
resolved by comparing local vanishing orders, and anything that cannot be
resolved is reported as an explicit error instead of a silent NaN.

Grammar (whitespace insignificant)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := atom ('^' integer)?
    atom   := number | 'i' | 'z' | 'exp' '(' expr ')' | '(' expr ')' | '-' atom

Numbers are unsigned decimal literals; the exponent after ``^`` is an
unsigned decimal integer.  Note that unary minus binds at the atom level,
so ``-z^2`` parses as ``(-z)^2``.

Everything in this module is immutable and every function is pure, so
concurrent evaluation of shared expressions is safe.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Union

import numpy as np

__all__ = [
    "ExtComplex",
    "INFINITY",
    "MeroExpr",
    "Const",
    "Var",
    "Z",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Exp",
    "Neg",
    "MobiusMap",
    "ParseError",
    "EvalError",
    "OrderUndeterminedError",
    "RationalFormError",
    "parse_mero",
    "to_source",
    "eval_ext",
    "eval_array",
    "eval_array_checked",
    "derivative",
    "substitute",
    "is_rational",
    "rational_form",
    "local_order",
    "chordal",
    "chordal_array",
    "spherical_gradient",
    "spherical_gradient_array",
    "stereographic",
    "mobius_apply",
    "invert_expr",
]

# Defaults for the numeric order estimator; callers may override per call.
DEFAULT_ORDER_RADII = (1e-3, 1e-4, 1e-5)
DEFAULT_ORDER_SNAP_TOL = 0.2
_ORDER_ANGLES = 8
_LIMIT_SAMPLE_RADIUS = 1e-4


class ParseError(ValueError):
    """Syntax or identifier error; ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class EvalError(ValueError):
    """Evaluation could not produce a point of the extended plane."""


class OrderUndeterminedError(ValueError):
    """The log-log slope did not snap to an integer order."""


class RationalFormError(ValueError):
    """Expression is not rational (contains exp nodes)."""


# ---------------------------------------------------------------------------
# Extended complex values
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class ExtComplex:
    """A point of the extended complex plane; ``value is None`` means infinity."""

    value: Optional[complex]

    def __post_init__(self):
        if self.value is not None:
            v = complex(self.value)
            if math.isnan(v.real) or math.isnan(v.imag):
                raise ValueError("finite ExtComplex value must be non-NaN")
            if not (math.isfinite(v.real) and math.isfinite(v.imag)):
                raise ValueError("use INFINITY for the point at infinity")
            object.__setattr__(self, "value", v)

    @property
    def is_inf(self) -> bool:
        return self.value is None

    @staticmethod
    def of(x: "ExtComplex | complex | float | int") -> "ExtComplex":
        if isinstance(x, ExtComplex):
            return x
        return ExtComplex(complex(x))

    def __repr__(self):
        return "ExtComplex(inf)" if self.is_inf else f"ExtComplex({self.value!r})"


INFINITY = ExtComplex(None)


# ---------------------------------------------------------------------------
# Expression nodes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Const:
    value: complex


@dataclass(frozen=True, slots=True)
class Var:
    pass


@dataclass(frozen=True, slots=True)
class Add:
    left: "MeroExpr"
    right: "MeroExpr"


@dataclass(frozen=True, slots=True)
class Sub:
    left: "MeroExpr"
    right: "MeroExpr"


@dataclass(frozen=True, slots=True)
class Mul:
    left: "MeroExpr"
    right: "MeroExpr"


@dataclass(frozen=True, slots=True)
class Div:
    left: "MeroExpr"
    right: "MeroExpr"


@dataclass(frozen=True, slots=True)
class Pow:
    base: "MeroExpr"
    exponent: int


@dataclass(frozen=True, slots=True)
class Exp:
    arg: "MeroExpr"


@dataclass(frozen=True, slots=True)
class Neg:
    arg: "MeroExpr"


MeroExpr = Union[Const, Var, Add, Sub, Mul, Div, Pow, Exp, Neg]

Z = Var()

_ZERO = Const(0j)
_ONE = Const(1 + 0j)


def _is_const(e: MeroExpr, value: complex | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


# Folding constructors.  Only constant folding and the obvious unit laws;
# anything smarter is out of scope on purpose.


def _add(a: MeroExpr, b: MeroExpr) -> MeroExpr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is_const(a, 0j):
        return b
    if _is_const(b, 0j):
        return a
    return Add(a, b)


def _sub(a: MeroExpr, b: MeroExpr) -> MeroExpr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is_const(b, 0j):
        return a
    if _is_const(a, 0j):
        return _neg(b)
    return Sub(a, b)


def _mul(a: MeroExpr, b: MeroExpr) -> MeroExpr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is_const(a, 0j) or _is_const(b, 0j):
        return _ZERO
    if _is_const(a, 1 + 0j):
        return b
    if _is_const(b, 1 + 0j):
        return a
    return Mul(a, b)


def _div(a: MeroExpr, b: MeroExpr) -> MeroExpr:
    if _is_const(b, 1 + 0j):
        return a
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0:
        return Const(a.value / b.value)
    return Div(a, b)


def _pow(b: MeroExpr, n: int) -> MeroExpr:
    if n < 0:
        return Div(_ONE, _pow(b, -n))
    if n == 0:
        return _ONE
    if n == 1:
        return b
    if isinstance(b, Const):
        return Const(b.value**n)
    return Pow(b, n)


def _neg(a: MeroExpr) -> MeroExpr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _tokenize(src: str):
    tokens = []  # (kind, text, offset)
    i, n = 0, len(src)
    while i < n:
        c = src[i]
        if c.isspace():
            i += 1
            continue
        if c in "+-*/^()":
            tokens.append((c, c, i))
            i += 1
            continue
        if c.isdigit() or c == ".":
            j = i
            seen_dot = False
            while j < n and (src[j].isdigit() or (src[j] == "." and not seen_dot)):
                seen_dot = seen_dot or src[j] == "."
                j += 1
            text = src[i:j]
            if text == ".":
                raise ParseError("malformed number", i)
            tokens.append(("num", text, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            tokens.append(("ident", src[i:j], i))
            i = j
            continue
        raise ParseError(f"unexpected character {c!r}", i)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str):
        tok = self.advance()
        if tok[0] != kind:
            raise ParseError(f"expected {kind!r}, found {tok[1]!r}", tok[2])
        return tok

    def parse_expr(self) -> MeroExpr:
        node = self.parse_term()
        while self.peek()[0] in ("+", "-"):
            op = self.advance()[0]
            rhs = self.parse_term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def parse_term(self) -> MeroExpr:
        node = self.parse_factor()
        while self.peek()[0] in ("*", "/"):
            op = self.advance()[0]
            rhs = self.parse_factor()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def parse_factor(self) -> MeroExpr:
        node = self.parse_atom()
        if self.peek()[0] == "^":
            self.advance()
            tok = self.expect("num")
            if "." in tok[1]:
                raise ParseError("exponent must be an integer", tok[2])
            node = Pow(node, int(tok[1]))
        return node

    def parse_atom(self) -> MeroExpr:
        kind, text, offset = self.peek()
        if kind == "num":
            self.advance()
            return Const(complex(float(text)))
        if kind == "ident":
            self.advance()
            if text == "z":
                return Z
            if text == "i":
                return Const(1j)
            if text == "exp":
                self.expect("(")
                inner = self.parse_expr()
                self.expect(")")
                return Exp(inner)
            raise ParseError(f"unknown identifier {text!r}", offset)
        if kind == "(":
            self.advance()
            inner = self.parse_expr()
            self.expect(")")
            return inner
        if kind == "-":
            self.advance()
            return Neg(self.parse_atom())
        raise ParseError(f"unexpected token {text!r}", offset)


def parse_mero(src: str) -> MeroExpr:
    """Parse an expression per the module grammar."""
    parser = _Parser(_tokenize(src))
    node = parser.parse_expr()
    tok = parser.peek()
    if tok[0] != "end":
        raise ParseError(f"trailing input {tok[1]!r}", tok[2])
    return node


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------


def _fmt_real(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _fmt_const(c: complex) -> str:
    if c.imag == 0:
        return _fmt_real(c.real)
    if c.real == 0:
        if c.imag == 1:
            return "i"
        return f"{_fmt_real(c.imag)}*i"
    sign = "-" if c.imag < 0 else "+"
    return f"({_fmt_real(c.real)} {sign} {_fmt_real(abs(c.imag))}*i)"


# Context levels: 1 additive, 2 multiplicative operand, 3 right factor,
# 5 atom position (unary-minus operand, power base).
def _print(e: MeroExpr, level: int) -> str:
    if isinstance(e, Const):
        text = _fmt_const(e.value)
        need = level >= 2 and text.startswith("-")
        return f"({text})" if need else text
    if isinstance(e, Var):
        return "z"
    if isinstance(e, Exp):
        return f"exp({_print(e.arg, 0)})"
    if isinstance(e, Neg):
        # unary minus is itself an atom; its operand must print as an atom
        return "-" + _print(e.arg, 5)
    if isinstance(e, Pow):
        text = f"{_print(e.base, 5)}^{e.exponent}"
        return f"({text})" if level >= 5 else text
    if isinstance(e, Add):
        text = f"{_print(e.left, 1)} + {_print(e.right, 2)}"
        return f"({text})" if level >= 2 else text
    if isinstance(e, Sub):
        text = f"{_print(e.left, 1)} - {_print(e.right, 2)}"
        return f"({text})" if level >= 2 else text
    if isinstance(e, Mul):
        text = f"{_print(e.left, 2)}*{_print(e.right, 3)}"
        return f"({text})" if level >= 3 else text
    if isinstance(e, Div):
        text = f"{_print(e.left, 2)}/{_print(e.right, 3)}"
        return f"({text})" if level >= 3 else text
    raise TypeError(f"not a MeroExpr: {e!r}")


def to_source(e: MeroExpr) -> str:
    """Render back to grammar text; ``parse_mero(to_source(t)) == t`` for parsed trees."""
    return _print(e, 0)


# ---------------------------------------------------------------------------
# Structure queries
# ---------------------------------------------------------------------------


def is_rational(e: MeroExpr) -> bool:
    if isinstance(e, (Const, Var)):
        return True
    if isinstance(e, Exp):
        return False
    if isinstance(e, (Neg,)):
        return is_rational(e.arg)
    if isinstance(e, Pow):
        return is_rational(e.base)
    return is_rational(e.left) and is_rational(e.right)


def substitute(e: MeroExpr, replacement: MeroExpr) -> MeroExpr:
    """Replace the variable by ``replacement`` (composition of functions)."""
    if isinstance(e, Var):
        return replacement
    if isinstance(e, Const):
        return e
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, replacement))
    if isinstance(e, Exp):
        return Exp(substitute(e.arg, replacement))
    if isinstance(e, Pow):
        return Pow(substitute(e.base, replacement), e.exponent)
    left = substitute(e.left, replacement)
    right = substitute(e.right, replacement)
    return type(e)(left, right)


# ---------------------------------------------------------------------------
# Rational normal form
# ---------------------------------------------------------------------------


def rational_form(e: MeroExpr) -> tuple[np.ndarray, np.ndarray]:
    """Numerator/denominator polynomial coefficients (highest degree first).

    No gcd cancellation is attempted; common roots are handled downstream by
    comparing local orders.  Raises RationalFormError on exp nodes.
    """
    num, den = _rational(e)
    return np.trim_zeros(num, "f"), np.trim_zeros(den, "f")


def _rational(e: MeroExpr) -> tuple[np.ndarray, np.ndarray]:
    one = np.array([1.0 + 0j])
    if isinstance(e, Const):
        return np.array([e.value]), one
    if isinstance(e, Var):
        return np.array([1.0 + 0j, 0j]), one
    if isinstance(e, Neg):
        n, d = _rational(e.arg)
        return -n, d
    if isinstance(e, Add) or isinstance(e, Sub):
        n1, d1 = _rational(e.left)
        n2, d2 = _rational(e.right)
        a = np.polymul(n1, d2)
        b = np.polymul(n2, d1)
        num = np.polyadd(a, b) if isinstance(e, Add) else np.polysub(a, b)
        return num, np.polymul(d1, d2)
    if isinstance(e, Mul):
        n1, d1 = _rational(e.left)
        n2, d2 = _rational(e.right)
        return np.polymul(n1, n2), np.polymul(d1, d2)
    if isinstance(e, Div):
        n1, d1 = _rational(e.left)
        n2, d2 = _rational(e.right)
        return np.polymul(n1, d2), np.polymul(d1, n2)
    if isinstance(e, Pow):
        n1, d1 = _rational(e.base)
        n_out, d_out = one, one
        k = abs(e.exponent)
        for _ in range(k):
            n_out = np.polymul(n_out, n1)
            d_out = np.polymul(d_out, d1)
        if e.exponent < 0:
            n_out, d_out = d_out, n_out
        return n_out, d_out
    if isinstance(e, Exp):
        raise RationalFormError("expression contains exp; no rational form")
    raise TypeError(f"not a MeroExpr: {e!r}")


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def derivative(e: MeroExpr) -> MeroExpr:
    """Exact symbolic d/dz; the result is again a grammar expression."""
    if isinstance(e, Const):
        return _ZERO
    if isinstance(e, Var):
        return _ONE
    if isinstance(e, Add):
        return _add(derivative(e.left), derivative(e.right))
    if isinstance(e, Sub):
        return _sub(derivative(e.left), derivative(e.right))
    if isinstance(e, Neg):
        return _neg(derivative(e.arg))
    if isinstance(e, Mul):
        return _add(_mul(derivative(e.left), e.right), _mul(e.left, derivative(e.right)))
    if isinstance(e, Div):
        num = _sub(_mul(derivative(e.left), e.right), _mul(e.left, derivative(e.right)))
        return _div(num, _pow(e.right, 2))
    if isinstance(e, Pow):
        if e.exponent == 0:
            return _ZERO
        inner = _mul(Const(complex(e.exponent)), _pow(e.base, e.exponent - 1))
        return _mul(inner, derivative(e.base))
    if isinstance(e, Exp):
        return _mul(e, derivative(e.arg))
    raise TypeError(f"not a MeroExpr: {e!r}")


def invert_expr(e: MeroExpr) -> MeroExpr:
    """Pointwise reciprocal, swapping numerator and denominator when possible."""
    if isinstance(e, Div):
        return Div(e.right, e.left)
    return Div(_ONE, e)


# ---------------------------------------------------------------------------
# Evaluation on the extended plane
# ---------------------------------------------------------------------------


class _Indeterminate(Exception):
    pass


_INF = object()  # internal marker during raw evaluation


def _raw(e: MeroExpr, z: complex):
    """Recursive evaluation; returns complex or _INF, raises _Indeterminate."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return z
    if isinstance(e, Neg):
        v = _raw(e.arg, z)
        return _INF if v is _INF else -v
    if isinstance(e, Add) or isinstance(e, Sub):
        a = _raw(e.left, z)
        b = _raw(e.right, z)
        if a is _INF and b is _INF:
            raise _Indeterminate
        if a is _INF or b is _INF:
            return _INF
        v = a + b if isinstance(e, Add) else a - b
        return _check_overflow(v)
    if isinstance(e, Mul):
        a = _raw(e.left, z)
        b = _raw(e.right, z)
        if a is _INF or b is _INF:
            other = b if a is _INF else a
            if other is _INF:
                return _INF
            if other == 0:
                raise _Indeterminate
            return _INF
        return _check_overflow(a * b)
    if isinstance(e, Div):
        a = _raw(e.left, z)
        b = _raw(e.right, z)
        if a is _INF and b is _INF:
            raise _Indeterminate
        if a is _INF:
            return _INF
        if b is _INF:
            return 0j
        if b == 0:
            if a == 0:
                raise _Indeterminate
            return _INF
        return _check_overflow(a / b)
    if isinstance(e, Pow):
        b = _raw(e.base, z)
        n = e.exponent
        if b is _INF:
            if n == 0:
                return 1 + 0j
            return _INF if n > 0 else 0j
        if n == 0:
            return 1 + 0j
        if b == 0 and n < 0:
            return _INF
        try:
            return _check_overflow(b**n)
        except OverflowError:
            return _INF
    if isinstance(e, Exp):
        a = _raw(e.arg, z)
        if a is _INF:
            raise EvalError("exp evaluated at infinity (essential singularity)")
        try:
            return _check_overflow(cmath.exp(a))
        except OverflowError:
            return _INF
    raise TypeError(f"not a MeroExpr: {e!r}")


def _check_overflow(v: complex):
    if math.isfinite(v.real) and math.isfinite(v.imag):
        return v
    if math.isnan(v.real) or math.isnan(v.imag):
        raise _Indeterminate
    return _INF


def eval_ext(e: MeroExpr, z: complex, *, resolve: bool = True) -> ExtComplex:
    """Evaluate at a point of the plane with pole-aware arithmetic.

    A clean pole returns INFINITY.  Forms such as 0/0 or inf - inf are
    resolved by comparing local orders when the expression is rational;
    otherwise an EvalError is raised explicitly, never a NaN.
    """
    try:
        v = _raw(e, complex(z))
    except _Indeterminate:
        if resolve and is_rational(e):
            return _resolve_by_order(e, complex(z))
        raise EvalError(f"indeterminate evaluation at z={z}") from None
    return INFINITY if v is _INF else ExtComplex(v)


def _samples_on_circle(e: MeroExpr, z0: complex, r: float, angles: int, rot: float):
    out = []
    for k in range(angles):
        w = z0 + r * cmath.exp(1j * (2 * math.pi * k / angles + rot))
        v = _raw(e, w)  # may raise _Indeterminate at unlucky sample points
        if v is _INF:
            raise _Indeterminate
        out.append(v)
    return out


def _resolve_by_order(e: MeroExpr, z0: complex) -> ExtComplex:
    num, _ = rational_form(e)
    if num.size == 0:
        return ExtComplex(0j)  # exact cancellation: the zero function
    order = local_order(e, z0)
    if order > 0:
        return ExtComplex(0j)
    if order < 0:
        return INFINITY
    # Finite nonzero limit: averaging over roots of unity kills the leading
    # Taylor terms, so the mean is the limit up to O(r^angles).
    for attempt in range(3):
        try:
            vals = _samples_on_circle(e, z0, _LIMIT_SAMPLE_RADIUS, _ORDER_ANGLES, 0.5 + 0.37 * attempt)
            return ExtComplex(sum(vals) / len(vals))
        except _Indeterminate:
            continue
    raise EvalError(f"could not resolve finite limit at z={z0}")


def local_order(
    e: MeroExpr,
    z0: complex,
    radii: tuple[float, ...] = DEFAULT_ORDER_RADII,
    snap_tol: float = DEFAULT_ORDER_SNAP_TOL,
) -> int:
    """Net vanishing order at ``z0``: zeros positive, poles negative, else 0.

    Least-squares slope of the angle-averaged log-magnitude against log radius,
    snapped to the nearest integer within ``snap_tol``.
    """
    if not is_rational(e):
        raise RationalFormError("local_order requires a rational expression")
    z0 = complex(z0)
    mean_logs = []
    for r in radii:
        got = None
        for attempt in range(4):
            try:
                vals = _samples_on_circle(e, z0, r, _ORDER_ANGLES, 0.5 + 0.41 * attempt)
            except _Indeterminate:
                continue
            mags = [abs(v) for v in vals]
            if min(mags) <= 0.0:
                continue
            got = sum(math.log(m) for m in mags) / len(mags)
            break
        if got is None:
            raise OrderUndeterminedError(f"cannot sample magnitudes near z={z0}")
        mean_logs.append(got)
    xs = [math.log(r) for r in radii]
    xbar = sum(xs) / len(xs)
    ybar = sum(mean_logs) / len(mean_logs)
    denom = sum((x - xbar) ** 2 for x in xs)
    slope = sum((x - xbar) * (y - ybar) for x, y in zip(xs, mean_logs)) / denom
    nearest = round(slope)
    if abs(slope - nearest) > snap_tol:
        raise OrderUndeterminedError(
            f"order slope {slope:.4f} at z={z0} is farther than {snap_tol} from an integer"
        )
    return int(nearest)


# ---------------------------------------------------------------------------
# Vectorized evaluation (plain IEEE arithmetic; caller repairs non-finites)
# ---------------------------------------------------------------------------


def eval_array(e: MeroExpr, zs: np.ndarray) -> np.ndarray:
    """Evaluate on a complex ndarray; poles come out as inf/nan entries."""
    zs = np.asarray(zs, dtype=complex)
    with np.errstate(all="ignore"):
        return _eval_array(e, zs)


def _eval_array(e: MeroExpr, zs: np.ndarray) -> np.ndarray:
    if isinstance(e, Const):
        return np.full(zs.shape, e.value, dtype=complex)
    if isinstance(e, Var):
        return zs.copy()
    if isinstance(e, Neg):
        return -_eval_array(e.arg, zs)
    if isinstance(e, Add):
        return _eval_array(e.left, zs) + _eval_array(e.right, zs)
    if isinstance(e, Sub):
        return _eval_array(e.left, zs) - _eval_array(e.right, zs)
    if isinstance(e, Mul):
        return _eval_array(e.left, zs) * _eval_array(e.right, zs)
    if isinstance(e, Div):
        return _eval_array(e.left, zs) / _eval_array(e.right, zs)
    if isinstance(e, Pow):
        base = _eval_array(e.base, zs)
        return base ** e.exponent
    if isinstance(e, Exp):
        return np.exp(_eval_array(e.arg, zs))
    raise TypeError(f"not a MeroExpr: {e!r}")


def eval_array_checked(e: MeroExpr, zs: np.ndarray) -> np.ndarray:
    """Vectorized evaluation with scalar pole/limit repair of bad entries.

    Entries where the expression has a genuine pole stay infinite; removable
    sites are replaced by their local limits.
    """
    vals = eval_array(e, zs)
    flat = vals.ravel()
    zflat = np.asarray(zs, dtype=complex).ravel()
    bad = np.nonzero(~np.isfinite(flat))[0]
    for k in bad:
        v = eval_ext(e, complex(zflat[k]))
        flat[k] = complex("inf") if v.is_inf else v.value
    return vals


# ---------------------------------------------------------------------------
# Riemann-sphere geometry
# ---------------------------------------------------------------------------


def chordal(a, b) -> float:
    """Half the chordal distance between two points of the extended plane.

    Equals half the Euclidean distance between the stereographic images on
    the unit sphere; a metric bounded by 1, with distance 1 between 0 and
    the point at infinity.
    """
    av = ExtComplex.of(a)
    bv = ExtComplex.of(b)
    if av.is_inf and bv.is_inf:
        return 0.0
    if av.is_inf:
        return 1.0 / math.hypot(1.0, abs(bv.value))
    if bv.is_inf:
        return 1.0 / math.hypot(1.0, abs(av.value))
    z1, z2 = av.value, bv.value
    if abs(z1) > 1.0 and abs(z2) > 1.0:
        # chordal distance is invariant under inversion; avoids overflow
        z1, z2 = 1.0 / z1, 1.0 / z2
    return abs(z1 - z2) / (math.hypot(1.0, abs(z1)) * math.hypot(1.0, abs(z2)))


def chordal_array(zs: np.ndarray, target: "ExtComplex | complex") -> np.ndarray:
    """Chordal distance from each array entry (inf entries allowed) to ``target``."""
    zs = np.asarray(zs, dtype=complex)
    t = ExtComplex.of(target)
    mag = np.abs(zs)
    finite = np.isfinite(mag)
    out = np.empty(zs.shape, dtype=float)
    if t.is_inf:
        out[finite] = 1.0 / np.hypot(1.0, mag[finite])
        out[~finite] = 0.0
        return out
    a = t.value
    den = np.hypot(1.0, mag[finite]) * math.hypot(1.0, abs(a))
    out[finite] = np.abs(zs[finite] - a) / den
    out[~finite] = 1.0 / math.hypot(1.0, abs(a))
    return out


def stereographic(v) -> np.ndarray:
    """Projection onto the unit sphere; infinity maps to the north pole."""
    ev = ExtComplex.of(v)
    if ev.is_inf:
        return np.array([0.0, 0.0, 1.0])
    z = ev.value
    r = abs(z)
    if r == 0.0:
        return np.array([0.0, 0.0, -1.0])
    with np.errstate(over="ignore"):
        t = r / (r * r + 1.0)  # overflows gracefully to 0 for huge r
        nz = 1.0 - 2.0 / (r * r + 1.0)
    return np.array([2.0 * (z.real / r) * t, 2.0 * (z.imag / r) * t, nz])


def spherical_gradient(e: MeroExpr, z: complex) -> float:
    """Length of the Euclidean gradient of the sphere-valued map at ``z``.

    2*sqrt(2)*|f'| / (1 + |f|^2); finite across poles, where it is computed
    from the reciprocal expression.
    """
    v = eval_ext(e, z)
    if not v.is_inf and abs(v.value) <= 1.0:
        d = eval_ext(derivative(e), z)
        if d.is_inf:
            raise EvalError(f"derivative has a pole at z={z} where the value is finite")
        return 2.0 * math.sqrt(2.0) * abs(d.value) / (1.0 + abs(v.value) ** 2)
    inv = invert_expr(e)
    w = eval_ext(inv, z)
    dw = eval_ext(derivative(inv), z)
    if w.is_inf or dw.is_inf:
        raise EvalError(f"spherical gradient indeterminate at z={z}")
    return 2.0 * math.sqrt(2.0) * abs(dw.value) / (1.0 + abs(w.value) ** 2)


def spherical_gradient_array(e: MeroExpr, zs: np.ndarray) -> np.ndarray:
    """Vectorized spherical gradient with scalar repair near poles."""
    zs = np.asarray(zs, dtype=complex)
    fv = eval_array(e, zs)
    dv = eval_array(derivative(e), zs)
    with np.errstate(all="ignore"):
        out = 2.0 * math.sqrt(2.0) * np.abs(dv) / (1.0 + np.abs(fv) ** 2)
        big = np.abs(fv) > 1e6
    bad = ~np.isfinite(out) | big
    flat = out.ravel()
    zf = zs.ravel()
    for k in np.nonzero(bad.ravel())[0]:
        flat[k] = spherical_gradient(e, complex(zf[k]))
    return out


# ---------------------------------------------------------------------------
# Moebius transformations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class MobiusMap:
    """Linear fractional transformation z -> (a z + b)/(c z + d), ad - bc != 0."""

    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self):
        if self.a * self.d - self.b * self.c == 0:
            raise ValueError("degenerate Moebius map: ad - bc = 0")

    @classmethod
    def identity(cls) -> "MobiusMap":
        return cls(1, 0, 0, 1)

    @classmethod
    def to_zero_one_inf(cls, p, q, r) -> "MobiusMap":
        """The unique map sending (p, q, r) to (0, 1, infinity)."""
        p, q, r = ExtComplex.of(p), ExtComplex.of(q), ExtComplex.of(r)
        if p.is_inf:
            return cls(0, q.value - r.value, 1, -r.value)
        if q.is_inf:
            return cls(1, -p.value, 1, -r.value)
        if r.is_inf:
            return cls(1, -p.value, 0, q.value - p.value)
        return cls(
            q.value - r.value,
            -p.value * (q.value - r.value),
            q.value - p.value,
            -r.value * (q.value - p.value),
        )


def mobius_apply(t: MobiusMap, v) -> ExtComplex:
    ev = ExtComplex.of(v)
    if ev.is_inf:
        if t.c == 0:
            return INFINITY
        return ExtComplex(t.a / t.c)
    num = t.a * ev.value + t.b
    den = t.c * ev.value + t.d
    if den == 0:
        return INFINITY
    return ExtComplex(num / den)
