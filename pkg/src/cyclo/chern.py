"""Chern characters of idempotents and invertibles, and the chain/cochain pairing."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial
from typing import Mapping, Optional, Sequence

from .algebra import FiniteAlgebra, matrix_algebra
from .chains import ChainVector, DualFunctional, encode
from .exactnum import linalg
from .exactnum.poly import as_fraction, format_rational
from .exactnum.qmatrix import QMatrix
from .operators import apply_B, apply_b, apply_trace

# exported float values above this degree may overflow naive consumers
FLOAT_EXPORT_WARN_DEGREE = 20


class ChernError(ValueError):
    pass


class NotIdempotent(ChernError):
    def __init__(self, residual):
        self.residual = residual
        super().__init__(f"P^2 - P = {tuple(str(x) for x in residual)} is not zero")


class NotInvertible(ChernError):
    pass


class ParityMismatch(ChernError):
    pass


@dataclass
class PeriodicChain:
    """Truncated even or odd chain with its degreewise closedness record.

    ``closedness`` maps a degree ``m`` to True/False for the identity
    ``b(w_{m+1}) + B(w_{m-1}) = 0`` in degree ``m`` (with ``w_{-1} = 0``);
    only degrees whose both inputs lie below the cutoff are checked.
    """

    chain: ChainVector
    parity: str
    cutoff: int
    closedness: dict = field(default_factory=dict)

    @property
    def closedness_checked_through(self) -> int:
        """Highest component degree that entered a checked identity through ``B``."""
        return max(self.closedness, default=0) - 1

    @property
    def closed(self) -> bool:
        return all(self.closedness.values())

    def component(self, n: int) -> ChainVector:
        return self.chain.restrict([n])

    def to_json(self) -> dict:
        return {"parity": self.parity, "cutoff": self.cutoff,
                "closedness_checked_through": self.closedness_checked_through,
                "closedness": {str(k): v for k, v in sorted(self.closedness.items())},
                "chain": self.chain.to_json()}


def matrix_element(A: FiniteAlgebra, N: int, entries: Mapping) -> tuple:
    """Coordinates in ``M_N(A)`` of the matrix with ``entries[(p, q)]`` in ``A`` (0-based)."""
    d = A.dim
    out = [Fraction(0)] * (N * N * d)
    for (p, q), u in entries.items():
        u = A.element(u)
        for a, c in enumerate(u):
            out[(p * N + q) * d + a] += c
    return tuple(out)


def _tensor_power_terms(factors: Sequence[Sequence[Fraction]], head: Optional[int] = None):
    """Expand ``f_0 (x) ... (x) f_m`` into (multi-index, coeff); ``head`` prepends a basis slot."""
    supports = [[(i, c) for i, c in enumerate(f) if c] for f in factors]
    for combo in itertools.product(*supports):
        coeff = Fraction(1)
        idx = []
        for i, c in combo:
            coeff *= c
            idx.append(i)
        if head is not None:
            idx = [head] + idx
        yield tuple(idx), coeff


def _closedness(chain: ChainVector, parity: int, cutoff: int) -> dict:
    """Check ``b w_{m+1} + B w_{m-1} = 0`` in each degree ``m`` whose inputs are below the cutoff."""
    out = {}
    bw = apply_b(chain)
    Bw = apply_B(chain)
    for m in range(parity ^ 1, cutoff, 2):
        # degree m receives b from m+1 and B from m-1
        if m + 1 > cutoff:
            break
        lhs = bw.restrict([m]) + Bw.restrict([m])
        out[m] = lhs.is_zero()
    return out


def _ambient(A: FiniteAlgebra, N: int) -> FiniteAlgebra:
    return A if N == 1 else matrix_algebra(A, N)


def chern_idempotent(A: FiniteAlgebra, P, cutoff: int, N: int = 1) -> PeriodicChain:
    """Even Chern character of an idempotent ``P`` in ``M_N(A)``, traced down to ``A``.

    ``(ch P)_0 = P`` and ``(ch P)_{2n} = (-1)^n (2n)!/n! (P^(x)(2n+1) - 1/2 e (x) P^(x)2n)``.
    """
    if cutoff < 0:
        raise ChernError("cutoff must be non-negative")
    MA = _ambient(A, N)
    P = MA.element(P)
    res = tuple(x - y for x, y in zip(MA.multiply(P, P), P))
    if any(res):
        raise NotIdempotent(res)
    e = MA.dim
    terms = [((i,), c) for i, c in enumerate(P) if c]
    for n in range(1, cutoff // 2 + 1):
        k = Fraction((-1) ** n * factorial(2 * n), factorial(n))
        for idx, c in _tensor_power_terms([P] * (2 * n + 1)):
            terms.append((idx, k * c))
        for idx, c in _tensor_power_terms([P] * (2 * n), head=e):
            terms.append((idx, -k * c / 2))
    chain = ChainVector.from_terms(MA, terms)
    if N > 1:
        chain = apply_trace(A, N, chain)
    top = cutoff - cutoff % 2
    if top > FLOAT_EXPORT_WARN_DEGREE:
        warnings.warn(f"Chern components above degree {FLOAT_EXPORT_WARN_DEGREE} have large coefficients",
                      stacklevel=2)
    return PeriodicChain(chain, "even", top, _closedness(chain, 0, top))


def inverse(A: FiniteAlgebra, U) -> tuple:
    """Exact two-sided inverse of ``U`` in a unital algebra; raises NotInvertible."""
    if A.unit is None:
        raise NotInvertible("algebra has no unit")
    U = A.element(U)
    L = QMatrix.from_dense(A.left_mult_matrix(U))
    v = linalg.solve(L, list(A.unit))
    if v is None:
        raise NotInvertible(f"no right inverse for {tuple(str(x) for x in U)}")
    v = tuple(v)
    if A.multiply(U, v) != A.unit or A.multiply(v, U) != A.unit:
        raise NotInvertible("right inverse is not a left inverse")
    return v


def chern_invertible(A: FiniteAlgebra, U, cutoff: int, N: int = 1, literal: bool = False) -> PeriodicChain:
    """Odd Chern character ``(ch U)_{2n+1} = (-1)^n n! U^-1 (x) U (x) ... (x) U^-1 (x) U``.

    The chain spaces are those of ``A_+`` with ``e`` normalized away, where
    the unit ``1`` of ``A`` is not degenerate.  The formula is therefore
    applied to the invertible ``U~ = U + (e - 1)`` of ``A_+`` (inverse
    ``U^-1 + (e - 1)``); its ``e``-components in slots ``>= 1`` vanish.
    ``literal=True`` uses ``U`` itself, which is closed only in special
    cases (e.g. ``U = 1``).
    """
    if cutoff < 1:
        raise ChernError("odd cutoff must be at least 1")
    MA = _ambient(A, N)
    U = MA.element(U)
    V = inverse(MA, U)
    if literal:
        head, tail_u, tail_v = [(i, c) for i, c in enumerate(V) if c], U, V
    else:
        one = MA.unit
        tail_u = tuple(x - y for x, y in zip(U, one))
        tail_v = tuple(x - y for x, y in zip(V, one))
        head = [(i, c) for i, c in enumerate(tail_v) if c] + [(MA.dim, Fraction(1))]
    terms = []
    for n in range((cutoff - 1) // 2 + 1):
        k = Fraction((-1) ** n * factorial(n))
        rest = [tail_u] + [tail_v, tail_u] * n
        for idx, c in _tensor_power_terms(rest):
            for h, ch in head:
                terms.append(((h,) + idx, k * c * ch))
    chain = ChainVector.from_terms(MA, terms)
    if N > 1:
        chain = apply_trace(A, N, chain)
    top = cutoff - (cutoff + 1) % 2
    return PeriodicChain(chain, "odd", top, _closedness(chain, 1, top))


def pair(phi: Sequence[DualFunctional], omega) -> Fraction:
    """Canonical pairing ``sum_n phi_n(omega_n)``."""
    chain = omega.chain if isinstance(omega, PeriodicChain) else omega
    par = {f.order % 2 for f in phi if f.coeffs}
    cpar = {n % 2 for n in chain.components}
    if par and cpar and par != cpar:
        raise ParityMismatch("functional and chain have different parities")
    return sum((f(chain) for f in phi), Fraction(0))


def character_functional(A: FiniteAlgebra, values: Sequence) -> DualFunctional:
    """Order-0 functional ``a -> sum_i values[i] a_i`` (e.g. a character of A)."""
    return DualFunctional(A, 0, {i: as_fraction(v) for i, v in enumerate(values)})


def coordinate_functional(A: FiniteAlgebra, multi) -> DualFunctional:
    return DualFunctional(A, len(multi) - 1, {encode(A.dim, multi): 1})


def chain_summary(chain: ChainVector) -> list:
    """Human-readable listing used by the command line front end."""
    return [(n, multi, format_rational(c)) for n, multi, c in chain.terms()]
