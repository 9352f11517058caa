"""Finite-dimensional associative algebras given by rational structure constants.

``structure[i][j][k]`` is the coefficient of ``e_k`` in ``e_i * e_j``.
Elements are tuples of :class:`~fractions.Fraction` coordinates.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from functools import cached_property
from math import lcm
from typing import Optional, Sequence

import numpy as np

from .exactnum.poly import as_fraction


class AlgebraError(ValueError):
    pass


class AssociativityError(AlgebraError):
    def __init__(self, i, j, k, lhs, rhs, names=None):
        self.triple = (i, j, k)
        self.lhs = lhs
        self.rhs = rhs
        label = tuple(names[x] for x in (i, j, k)) if names else (i, j, k)
        super().__init__(f"associativity fails on {label}: (ab)c = {_fmt(lhs)} != {_fmt(rhs)} = a(bc)")


class UnitError(AlgebraError):
    def __init__(self, j, name=None):
        self.index = j
        super().__init__(f"unit law fails on basis element {name if name is not None else j}")


def _fmt(v) -> str:
    return "(" + ", ".join(str(x) for x in v) + ")"


class FiniteAlgebra:
    """Validated finite-dimensional associative algebra (immutable)."""

    def __init__(self, structure, basis_names: Optional[Sequence[str]] = None,
                 unit: Optional[Sequence] = None, *, _validated: bool = False):
        d = len(structure)
        self.dim = d
        self.structure = tuple(
            tuple(tuple(as_fraction(structure[i][j][k]) for k in range(d)) for j in range(d))
            for i in range(d))
        for i in range(d):
            if len(structure[i]) != d or any(len(structure[i][j]) != d for j in range(d)):
                raise AlgebraError("structure constants must form a d x d x d tensor")
        self.basis_names = tuple(basis_names) if basis_names is not None else tuple(f"e{i}" for i in range(d))
        if len(self.basis_names) != d:
            raise AlgebraError("need one basis name per basis vector")
        self.unit = None if unit is None else tuple(as_fraction(u) for u in unit)
        if self.unit is not None and len(self.unit) != d:
            raise AlgebraError("unit has the wrong length")
        if not _validated:
            self.validate()

    # validation
    def validate(self) -> None:
        num, den = self.int_structure
        obj = num.astype(object)
        # (e_i e_j) e_k  versus  e_i (e_j e_k), coefficient of e_l
        lhs = np.einsum("ijm,mkl->ijkl", obj, obj)
        rhs = np.einsum("jkm,iml->ijkl", obj, obj)
        bad = np.argwhere(lhs != rhs)
        if len(bad):
            i, j, k = (int(x) for x in bad[0][:3])
            scale = Fraction(1, den * den)
            raise AssociativityError(
                i, j, k,
                tuple(Fraction(int(x)) * scale for x in lhs[i, j, k]),
                tuple(Fraction(int(x)) * scale for x in rhs[i, j, k]),
                self.basis_names)
        if self.unit is not None:
            for j in range(self.dim):
                ej = self.basis_vector(j)
                if self.multiply(self.unit, ej) != ej or self.multiply(ej, self.unit) != ej:
                    raise UnitError(j, self.basis_names[j])

    # basic API
    @property
    def is_unital(self) -> bool:
        return self.unit is not None

    def basis_vector(self, j: int) -> tuple:
        return tuple(Fraction(int(k == j)) for k in range(self.dim))

    def zero(self) -> tuple:
        return tuple(Fraction(0) for _ in range(self.dim))

    def element(self, coords) -> tuple:
        if isinstance(coords, dict):
            out = [Fraction(0)] * self.dim
            for name, c in coords.items():
                out[self.index_of(name)] += as_fraction(c)
            return tuple(out)
        coords = tuple(as_fraction(c) for c in coords)
        if len(coords) != self.dim:
            raise AlgebraError(f"element has length {len(coords)}, algebra has dimension {self.dim}")
        return coords

    def index_of(self, name: str) -> int:
        try:
            return self.basis_names.index(name)
        except ValueError:
            raise AlgebraError(f"unknown basis element {name!r}") from None

    def multiply(self, u, v) -> tuple:
        if len(u) != self.dim or len(v) != self.dim:
            raise AlgebraError(f"dimension mismatch: {len(u)}, {len(v)} vs {self.dim}")
        out = [Fraction(0)] * self.dim
        c = self.structure
        for i, ui in enumerate(u):
            if not ui:
                continue
            for j, vj in enumerate(v):
                if not vj:
                    continue
                w = ui * vj
                for k, ck in enumerate(c[i][j]):
                    if ck:
                        out[k] += w * ck
        return tuple(out)

    def left_mult_matrix(self, u) -> list:
        """Matrix of ``x -> u x`` acting on coordinate columns."""
        cols = [self.multiply(u, self.basis_vector(j)) for j in range(self.dim)]
        return [[cols[j][i] for j in range(self.dim)] for i in range(self.dim)]

    def power(self, u, k: int) -> tuple:
        out = u
        for _ in range(k - 1):
            out = self.multiply(out, u)
        return out

    @cached_property
    def int_structure(self):
        """``(num, den)``: int64 numerators (object if large) and common denominator."""
        den = 1
        for i, j, k in itertools.product(range(self.dim), repeat=3):
            den = lcm(den, self.structure[i][j][k].denominator)
        vals = [[[int(self.structure[i][j][k] * den) for k in range(self.dim)]
                 for j in range(self.dim)] for i in range(self.dim)]
        big = max((abs(x) for a in vals for b in a for x in b), default=0)
        arr = np.array(vals, dtype=np.int64 if big < 2 ** 40 else object).reshape(self.dim, self.dim, self.dim)
        return arr, den

    @cached_property
    def key(self) -> tuple:
        return (self.dim, self.structure, self.unit)

    def __eq__(self, other):
        return isinstance(other, FiniteAlgebra) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"FiniteAlgebra(dim={self.dim}, basis={list(self.basis_names)}, unital={self.is_unital})"


def make_algebra(dim: int, structure, unit=None, basis_names=None) -> FiniteAlgebra:
    """Validate and build an algebra; raises AssociativityError / UnitError."""
    if len(structure) != dim:
        raise AlgebraError(f"structure has {len(structure)} rows, expected {dim}")
    return FiniteAlgebra(structure, basis_names, unit)


def unitize(A: FiniteAlgebra) -> FiniteAlgebra:
    """``A_+ = A + R e`` with (a, r)(b, s) = (ab + s a + r b, rs); unit is the new ``e``."""
    d = A.dim
    c = [[[Fraction(0)] * (d + 1) for _ in range(d + 1)] for _ in range(d + 1)]
    for i in range(d):
        for j in range(d):
            for k in range(d):
                c[i][j][k] = A.structure[i][j][k]
    for j in range(d + 1):
        c[d][j][j] = Fraction(1)
        c[j][d][j] = Fraction(1)
    name = "e"
    while name in A.basis_names:
        name += "+"
    unit = [0] * d + [1]
    return FiniteAlgebra(c, list(A.basis_names) + [name], unit, _validated=True)


def matrix_algebra(A: FiniteAlgebra, N: int) -> FiniteAlgebra:
    """``M_N(A)`` with basis E_pq (x) a at index (p*N + q)*d + a."""
    if N < 1:
        raise AlgebraError("matrix size must be at least 1")
    d = A.dim
    D = N * N * d
    c = [[[Fraction(0)] * D for _ in range(D)] for _ in range(D)]
    for p, q, r, s in itertools.product(range(N), repeat=4):
        if q != r:
            continue
        for a in range(d):
            for b in range(d):
                for k, ck in enumerate(A.structure[a][b]):
                    if ck:
                        c[(p * N + q) * d + a][(r * N + s) * d + b][(p * N + s) * d + k] += ck
    names = [f"E{p + 1}{q + 1}*{nm}" if d > 1 else f"E{p + 1}{q + 1}"
             for p in range(N) for q in range(N) for nm in A.basis_names]
    unit = None
    if A.unit is not None:
        unit = [Fraction(0)] * D
        for p in range(N):
            for a in range(d):
                unit[(p * N + p) * d + a] = A.unit[a]
    # associativity of M_N(A) follows from that of A; property tests re-check it
    return FiniteAlgebra(c, names, unit, _validated=True)


def direct_sum(A: FiniteAlgebra, B: FiniteAlgebra) -> FiniteAlgebra:
    """Block-diagonal structure constants; unital iff both summands are."""
    da, db = A.dim, B.dim
    D = da + db
    c = [[[Fraction(0)] * D for _ in range(D)] for _ in range(D)]
    for i, j, k in itertools.product(range(da), repeat=3):
        c[i][j][k] = A.structure[i][j][k]
    for i, j, k in itertools.product(range(db), repeat=3):
        c[da + i][da + j][da + k] = B.structure[i][j][k]
    names = list(A.basis_names) + list(B.basis_names)
    if len(set(names)) < len(names):
        names = [f"{n}_1" for n in A.basis_names] + [f"{n}_2" for n in B.basis_names]
    unit = None
    if A.unit is not None and B.unit is not None:
        unit = list(A.unit) + list(B.unit)
    return FiniteAlgebra(c, names, unit, _validated=True)


def multiply(A: FiniteAlgebra, u, v) -> tuple:
    return A.multiply(u, v)


# standard examples

def complex_numbers() -> FiniteAlgebra:
    return FiniteAlgebra([[[1]]], ["1"], [1])


def dual_numbers() -> FiniteAlgebra:
    return FiniteAlgebra([[[1, 0], [0, 1]], [[0, 1], [0, 0]]], ["1", "x"], [1, 0])


def two_point() -> FiniteAlgebra:
    """C + C with orthogonal idempotents e1, e2."""
    return FiniteAlgebra([[[1, 0], [0, 0]], [[0, 0], [0, 1]]], ["e1", "e2"], [1, 1])


def matrix_units(N: int = 2) -> FiniteAlgebra:
    return matrix_algebra(complex_numbers(), N)


def upper_triangular() -> FiniteAlgebra:
    """Upper-triangular 2x2 matrices, basis (E11, E22, E12)."""
    c = [[[0] * 3 for _ in range(3)] for _ in range(3)]
    c[0][0][0] = 1  # E11 E11
    c[1][1][1] = 1  # E22 E22
    c[0][2][2] = 1  # E11 E12
    c[2][1][2] = 1  # E12 E22
    return FiniteAlgebra(c, ["E11", "E22", "E12"], [1, 1, 0])


STANDARD_ALGEBRAS = {
    "C": complex_numbers,
    "dual": dual_numbers,
    "CxC": two_point,
    "M2": matrix_units,
    "UT2": upper_triangular,
}
