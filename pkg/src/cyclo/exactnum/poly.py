"""Exact scalars: rationals and univariate polynomials in ``t`` over Q.

Rationals are :class:`fractions.Fraction`.  Polynomials are immutable
:class:`PolyQ` values with a hard degree cap.

The string grammar is the exchange format of the command line tools::

    scalar  := ["-"] int ["/" int]
    poly    := term (("+" | "-") term)*
    term    := scalar ["*" "t" ["^" int]] | "t" ["^" int]

e.g. ``"3/4"``, ``"-2"``, ``"2*t^2-1"``, ``"t-1/2"``.
"""

from __future__ import annotations

import re
from fractions import Fraction
from numbers import Rational as _RationalABC
from typing import Iterable, Sequence, Union

MAX_DEGREE = 64

Scalar = Union[int, Fraction]


class DegreeCapError(ValueError):
    """Raised when a polynomial result would exceed :data:`MAX_DEGREE`."""


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, _RationalABC)):
        return Fraction(x)
    if isinstance(x, str):
        return parse_rational(x)
    raise TypeError(f"cannot interpret {x!r} as an exact rational")


_RATIONAL_RE = re.compile(r"^\s*([+-]?\d+)\s*(?:/\s*(\d+))?\s*$")


def parse_rational(s: str) -> Fraction:
    m = _RATIONAL_RE.match(s)
    if not m:
        raise ValueError(f"not a rational literal: {s!r}")
    num = int(m.group(1))
    den = int(m.group(2)) if m.group(2) else 1
    if den == 0:
        raise ZeroDivisionError(f"zero denominator in {s!r}")
    return Fraction(num, den)


def format_rational(x: Fraction) -> str:
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


class PolyQ:
    """Polynomial in ``t`` with rational coefficients, lowest power first."""

    __slots__ = ("_c",)

    def __init__(self, coeffs: Iterable = ()):
        c = [as_fraction(a) for a in coeffs]
        while c and c[-1] == 0:
            c.pop()
        if len(c) - 1 > MAX_DEGREE:
            raise DegreeCapError(f"degree {len(c) - 1} exceeds cap {MAX_DEGREE}")
        self._c = tuple(c)

    # construction helpers
    @classmethod
    def const(cls, a) -> "PolyQ":
        return cls([a])

    @classmethod
    def t(cls) -> "PolyQ":
        return cls([0, 1])

    @classmethod
    def coerce(cls, x) -> "PolyQ":
        if isinstance(x, PolyQ):
            return x
        if isinstance(x, str):
            return parse_poly(x)
        return cls([x])

    @property
    def coeffs(self) -> tuple:
        return self._c

    @property
    def degree(self) -> int:
        """Degree; ``-1`` for the zero polynomial."""
        return len(self._c) - 1

    def is_zero(self) -> bool:
        return not self._c

    def is_constant(self) -> bool:
        return len(self._c) <= 1

    def __getitem__(self, k: int) -> Fraction:
        if 0 <= k < len(self._c):
            return self._c[k]
        return Fraction(0)

    # ring operations
    def __add__(self, other):
        other = PolyQ.coerce(other)
        n = max(len(self._c), len(other._c))
        return PolyQ(self[k] + other[k] for k in range(n))

    __radd__ = __add__

    def __neg__(self):
        return PolyQ(-a for a in self._c)

    def __sub__(self, other):
        return self + (-PolyQ.coerce(other))

    def __rsub__(self, other):
        return PolyQ.coerce(other) - self

    def __mul__(self, other):
        other = PolyQ.coerce(other)
        if not self._c or not other._c:
            return PolyQ()
        if self.degree + other.degree > MAX_DEGREE:
            raise DegreeCapError(
                f"product degree {self.degree + other.degree} exceeds cap {MAX_DEGREE}")
        out = [Fraction(0)] * (len(self._c) + len(other._c) - 1)
        for i, a in enumerate(self._c):
            if a:
                for j, b in enumerate(other._c):
                    out[i + j] += a * b
        return PolyQ(out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power of a polynomial")
        out = PolyQ([1])
        for _ in range(k):
            out = out * self
        return out

    def divmod(self, other: "PolyQ"):
        other = PolyQ.coerce(other)
        if other.is_zero():
            raise ZeroDivisionError("polynomial division by zero")
        rem = list(self._c)
        q = [Fraction(0)] * max(len(rem) - len(other._c) + 1, 0)
        lead = other._c[-1]
        for k in range(len(q) - 1, -1, -1):
            coef = rem[k + len(other._c) - 1] / lead
            q[k] = coef
            if coef:
                for j, b in enumerate(other._c):
                    rem[k + j] -= coef * b
        return PolyQ(q), PolyQ(rem)

    def exact_div(self, other) -> "PolyQ":
        q, r = self.divmod(other)
        if not r.is_zero():
            raise ArithmeticError("polynomial division is not exact")
        return q

    def derivative(self) -> "PolyQ":
        return PolyQ(k * a for k, a in enumerate(self._c) if k)

    def eval_at(self, t0) -> Fraction:
        t0 = as_fraction(t0)
        acc = Fraction(0)
        for a in reversed(self._c):
            acc = acc * t0 + a
        return acc

    def eval_float(self, t0: float) -> float:
        acc = 0.0
        for a in reversed(self._c):
            acc = acc * t0 + float(a)
        return acc

    def __eq__(self, other):
        try:
            other = PolyQ.coerce(other)
        except (TypeError, ValueError):
            return NotImplemented
        return self._c == other._c

    def __hash__(self):
        return hash(self._c)

    def __bool__(self):
        return bool(self._c)

    def __repr__(self):
        return f"PolyQ({format_poly(self)!r})"

    def __str__(self):
        return format_poly(self)


def poly_arith(p, q, op: str, t0=None):
    """Dispatch ``add``, ``mul``, ``derivative`` or ``eval_at`` on exact polynomials."""
    p = PolyQ.coerce(p)
    if op == "add":
        return p + PolyQ.coerce(q)
    if op == "mul":
        return p * PolyQ.coerce(q)
    if op == "derivative":
        return p.derivative()
    if op == "eval_at":
        return p.eval_at(t0)
    raise ValueError(f"unknown polynomial operation {op!r}")


_TERM_RE = re.compile(
    r"""(?P<sign>[+-])?\s*
        (?:
          (?P<coef>\d+(?:\s*/\s*\d+)?)\s*(?:\*\s*(?P<tvar1>t)(?:\s*\^\s*(?P<pow1>\d+))?)?
          |
          (?P<tvar2>t)(?:\s*\^\s*(?P<pow2>\d+))?
        )\s*""",
    re.VERBOSE,
)


def parse_poly(s: str) -> PolyQ:
    text = s.strip()
    if not text:
        raise ValueError("empty polynomial literal")
    pos = 0
    coeffs: dict[int, Fraction] = {}
    first = True
    while pos < len(text):
        m = _TERM_RE.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"bad polynomial literal {s!r} at offset {pos}")
        if not first and m.group("sign") is None:
            raise ValueError(f"missing operator in polynomial literal {s!r}")
        sign = -1 if m.group("sign") == "-" else 1
        if m.group("coef") is not None:
            coef = parse_rational(m.group("coef").replace(" ", ""))
            power = 0
            if m.group("tvar1"):
                power = int(m.group("pow1") or 1)
        elif m.group("tvar2"):
            coef = Fraction(1)
            power = int(m.group("pow2") or 1)
        else:
            raise ValueError(f"bad polynomial literal {s!r} at offset {pos}")
        coeffs[power] = coeffs.get(power, Fraction(0)) + sign * coef
        pos = m.end()
        first = False
    top = max(coeffs) if coeffs else 0
    return PolyQ(coeffs.get(k, 0) for k in range(top + 1))


def parse_scalar(s) -> Union[Fraction, PolyQ]:
    """Parse a scalar string; constant values come back as :class:`Fraction`."""
    if isinstance(s, (int, Fraction)):
        return Fraction(s)
    p = parse_poly(str(s))
    return p[0] if p.is_constant() else p


def format_poly(p: PolyQ) -> str:
    if p.is_zero():
        return "0"
    parts: list[str] = []
    for k in range(p.degree, -1, -1):
        a = p[k]
        if a == 0:
            continue
        sign = "-" if a < 0 else "+"
        mag = abs(a)
        if k == 0:
            body = format_rational(mag)
        else:
            tpart = "t" if k == 1 else f"t^{k}"
            body = tpart if mag == 1 else f"{format_rational(mag)}*{tpart}"
        if not parts:
            parts.append(("-" if sign == "-" else "") + body)
        else:
            parts.append(sign + body)
    return "".join(parts)


def format_scalar(x) -> str:
    if isinstance(x, PolyQ):
        return format_poly(x)
    return format_rational(as_fraction(x))


def poly_lcm_den(values: Sequence) -> int:
    """Least common multiple of all denominators appearing in ``values``."""
    from math import lcm

    out = 1
    for v in values:
        if isinstance(v, PolyQ):
            for a in v.coeffs:
                out = lcm(out, a.denominator)
        else:
            out = lcm(out, as_fraction(v).denominator)
    return out
