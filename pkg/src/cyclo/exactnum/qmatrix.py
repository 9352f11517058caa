"""Sparse exact rational matrices.

A :class:`QMatrix` is an integer sparse matrix together with one positive
common denominator.  The integer part lives in a ``scipy.sparse`` CSR
matrix of ``int64`` whenever every intermediate value provably fits; when a
product or sum could overflow, the value is carried in a dict-of-rows of
Python integers instead.  Both backends are exact.

:class:`PolyMatrix` is the parametric variant: a polynomial in ``t`` whose
coefficients are :class:`QMatrix` values.
"""

from __future__ import annotations

from fractions import Fraction
from math import gcd
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .poly import MAX_DEGREE, DegreeCapError, PolyQ, as_fraction

_SAFE = float(2 ** 62)


def _lcm(a: int, b: int) -> int:
    return a // gcd(a, b) * b


class QMatrix:
    """Exact rational matrix ``num / den`` with no stored zero entries."""

    __slots__ = ("shape", "_csr", "_rows", "den")

    def __init__(self, shape, csr=None, rows=None, den: int = 1):
        self.shape = (int(shape[0]), int(shape[1]))
        self._csr = csr
        self._rows = rows
        self.den = int(den)
        if self.den <= 0:
            raise ValueError("denominator must be positive")

    # construction
    @classmethod
    def zeros(cls, rows: int, cols: int) -> "QMatrix":
        return cls((rows, cols), csr=sp.csr_matrix((rows, cols), dtype=np.int64))

    @classmethod
    def identity(cls, n: int) -> "QMatrix":
        return cls((n, n), csr=sp.identity(n, dtype=np.int64, format="csr"))

    @classmethod
    def from_int_coo(cls, rows: int, cols: int, r, c, v, den: int = 1) -> "QMatrix":
        """Build from integer triplets; duplicate positions are summed."""
        v = np.asarray(v)
        if v.dtype == object or (len(v) and float(np.abs(v).max()) * max(len(v), 1) >= _SAFE):
            acc: dict[int, dict[int, int]] = {}
            for i, j, x in zip(np.asarray(r).tolist(), np.asarray(c).tolist(), v.tolist()):
                row = acc.setdefault(i, {})
                row[j] = row.get(j, 0) + int(x)
            return cls((rows, cols), rows=_prune(acc), den=den).normalized()
        m = sp.coo_matrix((v.astype(np.int64), (np.asarray(r), np.asarray(c))),
                          shape=(rows, cols)).tocsr()
        m.sum_duplicates()
        m.eliminate_zeros()
        return cls((rows, cols), csr=m, den=den).normalized()

    @classmethod
    def from_entries(cls, rows: int, cols: int, entries: Mapping) -> "QMatrix":
        """Build from ``{(i, j): rational}``."""
        fr = {k: as_fraction(v) for k, v in entries.items() if v != 0}
        den = 1
        for v in fr.values():
            den = _lcm(den, v.denominator)
        r = [k[0] for k in fr]
        c = [k[1] for k in fr]
        v = np.array([int(x * den) for x in fr.values()], dtype=object)
        if fr and max(abs(int(x)) for x in v) < 2 ** 52:
            v = v.astype(np.int64)
        return cls.from_int_coo(rows, cols, r, c, v, den)

    @classmethod
    def from_dense(cls, data: Sequence[Sequence]) -> "QMatrix":
        rows = len(data)
        cols = len(data[0]) if rows else 0
        ent = {(i, j): x for i, row in enumerate(data) for j, x in enumerate(row) if x != 0}
        return cls.from_entries(rows, cols, ent)

    # backend plumbing
    @property
    def is_fast(self) -> bool:
        return self._csr is not None

    def _as_rows(self) -> dict:
        if self._rows is not None:
            return self._rows
        m = self._csr
        out: dict[int, dict[int, int]] = {}
        indptr, indices, data = m.indptr, m.indices, m.data
        for i in range(self.shape[0]):
            a, b = indptr[i], indptr[i + 1]
            if a != b:
                out[i] = {int(j): int(x) for j, x in zip(indices[a:b], data[a:b])}
        return out

    def _maxabs(self) -> int:
        if self._csr is not None:
            return int(np.abs(self._csr.data).max()) if self._csr.nnz else 0
        return max((abs(x) for row in self._rows.values() for x in row.values()), default=0)

    @staticmethod
    def _from_rows(shape, rows: dict, den: int) -> "QMatrix":
        rows = _prune(rows)
        big = max((abs(x) for row in rows.values() for x in row.values()), default=0)
        if big < 2 ** 62:
            r, c, v = [], [], []
            for i, row in rows.items():
                for j, x in row.items():
                    r.append(i)
                    c.append(j)
                    v.append(x)
            m = sp.coo_matrix((np.array(v, dtype=np.int64), (np.array(r, dtype=np.int64),
                                                            np.array(c, dtype=np.int64))),
                              shape=shape).tocsr()
            return QMatrix(shape, csr=m, den=den)
        return QMatrix(shape, rows=rows, den=den)

    def normalized(self) -> "QMatrix":
        if self.den == 1:
            return self
        if self._csr is not None:
            if self._csr.nnz == 0:
                return QMatrix(self.shape, csr=self._csr, den=1)
            g = int(np.gcd.reduce(np.abs(self._csr.data)))
            g = gcd(g, self.den)
            if g == 1:
                return self
            m = self._csr.copy()
            m.data = m.data // g
            return QMatrix(self.shape, csr=m, den=self.den // g)
        g = self.den
        for row in self._rows.values():
            for x in row.values():
                g = gcd(g, x)
                if g == 1:
                    return self
        if not self._rows:
            g = self.den
        rows = {i: {j: x // g for j, x in row.items()} for i, row in self._rows.items()}
        return QMatrix._from_rows(self.shape, rows, self.den // g)

    # inspection
    @property
    def nnz(self) -> int:
        if self._csr is not None:
            return int(self._csr.nnz)
        return sum(len(r) for r in self._rows.values())

    def is_zero(self) -> bool:
        return self.nnz == 0

    def entries(self) -> dict:
        """``{(i, j): Fraction}`` of all nonzero entries."""
        out = {}
        for i, row in self._as_rows().items():
            for j, x in row.items():
                out[(i, j)] = Fraction(x, self.den)
        return out

    def __getitem__(self, ij) -> Fraction:
        i, j = ij
        if self._csr is not None:
            return Fraction(int(self._csr[i, j]), self.den)
        return Fraction(self._rows.get(i, {}).get(j, 0), self.den)

    def to_fraction_rows(self) -> list:
        out = [[Fraction(0)] * self.shape[1] for _ in range(self.shape[0])]
        for (i, j), x in self.entries().items():
            out[i][j] = x
        return out

    def to_float(self) -> np.ndarray:
        if self._csr is not None:
            return self._csr.toarray().astype(float) / self.den
        out = np.zeros(self.shape)
        for i, row in self._rows.items():
            for j, x in row.items():
                out[i, j] = x / self.den
        return out

    def to_float_sparse(self):
        if self._csr is not None:
            return self._csr.astype(float) / self.den
        return sp.csr_matrix(self.to_float())

    def int_csr_object(self):
        """Integer numerator as (indptr, indices, python-int list) triplets by row."""
        return self._as_rows()

    # arithmetic
    def __neg__(self):
        if self._csr is not None:
            return QMatrix(self.shape, csr=-self._csr, den=self.den)
        return QMatrix(self.shape, rows={i: {j: -x for j, x in r.items()} for i, r in self._rows.items()},
                       den=self.den)

    def scale(self, c) -> "QMatrix":
        c = as_fraction(c)
        if c == 0:
            return QMatrix.zeros(*self.shape)
        num, den = c.numerator, c.denominator
        if self._csr is not None and abs(num) * max(self._maxabs(), 1) < _SAFE:
            return QMatrix(self.shape, csr=self._csr * num, den=self.den * den).normalized()
        rows = {i: {j: x * num for j, x in r.items()} for i, r in self._as_rows().items()}
        return QMatrix._from_rows(self.shape, rows, self.den * den).normalized()

    def __add__(self, other: "QMatrix") -> "QMatrix":
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        den = _lcm(self.den, other.den)
        fa, fb = den // self.den, den // other.den
        if (self._csr is not None and other._csr is not None
                and fa * self._maxabs() + fb * other._maxabs() < _SAFE):
            m = self._csr * fa + other._csr * fb
            m.eliminate_zeros()
            return QMatrix(self.shape, csr=m, den=den).normalized()
        rows = {i: {j: x * fa for j, x in r.items()} for i, r in self._as_rows().items()}
        for i, r in other._as_rows().items():
            tgt = rows.setdefault(i, {})
            for j, x in r.items():
                tgt[j] = tgt.get(j, 0) + x * fb
        return QMatrix._from_rows(self.shape, rows, den).normalized()

    def __sub__(self, other: "QMatrix") -> "QMatrix":
        return self + (-other)

    def __matmul__(self, other: "QMatrix") -> "QMatrix":
        if self.shape[1] != other.shape[0]:
            raise ValueError(f"shape mismatch {self.shape} @ {other.shape}")
        shape = (self.shape[0], other.shape[1])
        den = self.den * other.den
        if self._csr is not None and other._csr is not None:
            bound = (abs(self._csr).astype(float) @ abs(other._csr).astype(float))
            if bound.nnz == 0 or bound.max() < _SAFE:
                m = self._csr @ other._csr
                m.eliminate_zeros()
                return QMatrix(shape, csr=m.tocsr(), den=den).normalized()
        a = self._as_rows()
        b = other._as_rows()
        out: dict[int, dict[int, int]] = {}
        for i, row in a.items():
            acc: dict[int, int] = {}
            for k, x in row.items():
                brow = b.get(k)
                if brow:
                    for j, y in brow.items():
                        acc[j] = acc.get(j, 0) + x * y
            if acc:
                out[i] = acc
        return QMatrix._from_rows(shape, out, den).normalized()

    @property
    def T(self) -> "QMatrix":
        if self._csr is not None:
            return QMatrix((self.shape[1], self.shape[0]), csr=self._csr.T.tocsr(), den=self.den)
        rows: dict[int, dict[int, int]] = {}
        for i, r in self._rows.items():
            for j, x in r.items():
                rows.setdefault(j, {})[i] = x
        return QMatrix((self.shape[1], self.shape[0]), rows=rows, den=self.den)

    def __eq__(self, other) -> bool:
        if not isinstance(other, QMatrix):
            return NotImplemented
        if self.shape != other.shape:
            return False
        return (self - other).is_zero()

    __hash__ = None

    def apply(self, vec: Sequence) -> list:
        """Exact matrix-vector product with a dense list of rationals."""
        out = [Fraction(0)] * self.shape[0]
        for i, row in self._as_rows().items():
            acc = Fraction(0)
            for j, x in row.items():
                v = vec[j]
                if v:
                    acc += x * v
            out[i] = acc / self.den
        return out

    def apply_sparse(self, vec: Mapping[int, Fraction]) -> dict:
        cols = self.T._as_rows()
        out: dict[int, Fraction] = {}
        for j, v in vec.items():
            if v == 0:
                continue
            for i, x in cols.get(j, {}).items():
                out[i] = out.get(i, Fraction(0)) + x * v
        return {i: w / self.den for i, w in out.items() if w != 0}

    def rows_subset(self, idx: Sequence[int]) -> "QMatrix":
        idx = list(idx)
        if self._csr is not None:
            return QMatrix((len(idx), self.shape[1]), csr=self._csr[idx, :], den=self.den)
        pos = {i: k for k, i in enumerate(idx)}
        rows = {pos[i]: dict(r) for i, r in self._rows.items() if i in pos}
        return QMatrix((len(idx), self.shape[1]), rows=rows, den=self.den)

    def cols_subset(self, idx: Sequence[int]) -> "QMatrix":
        return self.T.rows_subset(idx).T

    def __repr__(self):
        return f"QMatrix(shape={self.shape}, nnz={self.nnz}, den={self.den})"


def _prune(rows: dict) -> dict:
    out = {}
    for i, r in rows.items():
        rr = {j: x for j, x in r.items() if x != 0}
        if rr:
            out[i] = rr
    return out


def qblock(blocks: Sequence[Sequence], row_sizes: Sequence[int], col_sizes: Sequence[int]) -> QMatrix:
    """Assemble a block matrix; ``None`` entries are zero blocks."""
    den = 1
    for brow in blocks:
        for b in brow:
            if b is not None:
                den = _lcm(den, b.den)
    roff = np.concatenate([[0], np.cumsum(row_sizes)]).astype(np.int64)
    coff = np.concatenate([[0], np.cumsum(col_sizes)]).astype(np.int64)
    rs, cs, vs = [], [], []
    fast = True
    for bi, brow in enumerate(blocks):
        for bj, b in enumerate(brow):
            if b is None or b.is_zero():
                continue
            if b.shape != (row_sizes[bi], col_sizes[bj]):
                raise ValueError(f"block ({bi},{bj}) has shape {b.shape}, "
                                 f"expected {(row_sizes[bi], col_sizes[bj])}")
            f = den // b.den
            if b.is_fast and f * b._maxabs() < _SAFE:
                coo = b._csr.tocoo()
                rs.append(coo.row.astype(np.int64) + roff[bi])
                cs.append(coo.col.astype(np.int64) + coff[bj])
                vs.append(coo.data.astype(np.int64) * f)
            else:
                fast = False
                rows = b._as_rows()
                r_, c_, v_ = [], [], []
                for i, row in rows.items():
                    for j, x in row.items():
                        r_.append(i + int(roff[bi]))
                        c_.append(j + int(coff[bj]))
                        v_.append(x * f)
                rs.append(np.array(r_, dtype=np.int64))
                cs.append(np.array(c_, dtype=np.int64))
                vs.append(np.array(v_, dtype=object))
    shape = (int(roff[-1]), int(coff[-1]))
    if not rs:
        return QMatrix.zeros(*shape)
    r = np.concatenate(rs)
    c = np.concatenate(cs)
    v = np.concatenate([x.astype(object) for x in vs]) if not fast else np.concatenate(vs)
    return QMatrix.from_int_coo(shape[0], shape[1], r, c, v, den)


def qsum(mats: Iterable[QMatrix], shape=None) -> QMatrix:
    out = None
    for m in mats:
        out = m if out is None else out + m
    if out is None:
        return QMatrix.zeros(*shape)
    return out


class PolyMatrix:
    """Matrix with entries in Q[t], stored as coefficient matrices by power."""

    __slots__ = ("shape", "coeffs")

    def __init__(self, shape, coeffs: Sequence[QMatrix] = ()):
        self.shape = (int(shape[0]), int(shape[1]))
        c = list(coeffs)
        while c and c[-1].is_zero():
            c.pop()
        if len(c) - 1 > MAX_DEGREE:
            raise DegreeCapError(f"matrix polynomial degree {len(c) - 1} exceeds cap {MAX_DEGREE}")
        self.coeffs = c

    @classmethod
    def constant(cls, m: QMatrix) -> "PolyMatrix":
        return cls(m.shape, [m])

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "PolyMatrix":
        return cls((rows, cols), [])

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def coeff(self, k: int) -> QMatrix:
        if 0 <= k < len(self.coeffs):
            return self.coeffs[k]
        return QMatrix.zeros(*self.shape)

    def is_zero(self) -> bool:
        return not self.coeffs

    def __add__(self, other: "PolyMatrix") -> "PolyMatrix":
        n = max(len(self.coeffs), len(other.coeffs))
        return PolyMatrix(self.shape, [self.coeff(k) + other.coeff(k) for k in range(n)])

    def __neg__(self):
        return PolyMatrix(self.shape, [-c for c in self.coeffs])

    def __sub__(self, other):
        return self + (-other)

    def __matmul__(self, other: "PolyMatrix") -> "PolyMatrix":
        shape = (self.shape[0], other.shape[1])
        if not self.coeffs or not other.coeffs:
            return PolyMatrix.zeros(*shape)
        out = [None] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            if a.is_zero():
                continue
            for j, b in enumerate(other.coeffs):
                if b.is_zero():
                    continue
                p = a @ b
                out[i + j] = p if out[i + j] is None else out[i + j] + p
        return PolyMatrix(shape, [o if o is not None else QMatrix.zeros(*shape) for o in out])

    def scale_poly(self, p: PolyQ) -> "PolyMatrix":
        out = PolyMatrix.zeros(*self.shape)
        for k, a in enumerate(p.coeffs):
            if a:
                shifted = [QMatrix.zeros(*self.shape)] * k + [c.scale(a) for c in self.coeffs]
                out = out + PolyMatrix(self.shape, shifted)
        return out

    def derivative(self) -> "PolyMatrix":
        return PolyMatrix(self.shape, [c.scale(k) for k, c in enumerate(self.coeffs) if k])

    def eval_at(self, t0) -> QMatrix:
        t0 = as_fraction(t0)
        acc = QMatrix.zeros(*self.shape)
        for c in reversed(self.coeffs):
            acc = acc.scale(t0) + c if not acc.is_zero() else c
        return acc

    def eval_float(self, t0: float):
        acc = sp.csr_matrix(self.shape, dtype=float)
        for c in reversed(self.coeffs):
            acc = acc * t0 + c.to_float_sparse()
        return acc

    @property
    def T(self) -> "PolyMatrix":
        return PolyMatrix((self.shape[1], self.shape[0]), [c.T for c in self.coeffs])

    def nonzero_entries(self) -> dict:
        """``{(i, j): PolyQ}`` of nonzero polynomial entries."""
        acc: dict = {}
        for k, c in enumerate(self.coeffs):
            for ij, x in c.entries().items():
                acc.setdefault(ij, {})[k] = x
        out = {}
        for ij, cs in acc.items():
            p = PolyQ(cs.get(k, 0) for k in range(max(cs) + 1))
            if not p.is_zero():
                out[ij] = p
        return out

    def __repr__(self):
        return f"PolyMatrix(shape={self.shape}, degree={self.degree})"


def poly_block(blocks: Sequence[Sequence], row_sizes, col_sizes) -> PolyMatrix:
    deg = -1
    for brow in blocks:
        for b in brow:
            if b is not None:
                deg = max(deg, b.degree)
    shape = (int(sum(row_sizes)), int(sum(col_sizes)))
    coeffs = []
    for k in range(deg + 1):
        coeffs.append(qblock([[b.coeff(k) if b is not None else None for b in brow] for brow in blocks],
                             row_sizes, col_sizes))
    return PolyMatrix(shape, coeffs)
