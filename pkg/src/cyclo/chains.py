"""Chain spaces ``C_n(A) = A_+ (x) A^(x)n`` (``C_0(A) = A``), Hochschild
cochains with values in ``A``, and dual functionals on chains.

Basis of ``A_+``: the ``d`` basis vectors of ``A`` followed by the adjoined
unit ``e`` at index ``d``.  A basis tensor ``(i_0, ..., i_n)`` of ``C_n`` has
flat index ``i_0 * d**n + sum_k i_k * d**(n-k)``.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Iterable, Mapping, Optional

import numpy as np

from .algebra import FiniteAlgebra, unitize
from .exactnum.poly import as_fraction, format_rational, parse_rational


class ChainError(ValueError):
    pass


def chain_space_dim(A: FiniteAlgebra | int, n: int) -> int:
    d = A if isinstance(A, int) else A.dim
    if n < 0:
        raise ChainError("degree must be non-negative")
    if n == 0:
        return d
    return (d + 1) * d ** n


def encode(d: int, multi: Iterable[int]) -> int:
    """Flat index of a basis tensor; ``multi[0]`` may be ``d`` (the unit e) when n >= 1."""
    multi = tuple(int(i) for i in multi)
    n = len(multi) - 1
    if n < 0:
        raise ChainError("empty tensor")
    i0 = multi[0]
    if not 0 <= i0 < (d if n == 0 else d + 1):
        raise ChainError(f"slot 0 index {i0} out of range")
    flat = i0
    for k in multi[1:]:
        if not 0 <= k < d:
            raise ChainError(f"slot index {k} out of range (A has dimension {d})")
        flat = flat * d + k
    return flat


def decode(d: int, n: int, flat: int) -> tuple:
    if not 0 <= flat < chain_space_dim(d, n):
        raise ChainError(f"flat index {flat} out of range for degree {n}")
    out = []
    for _ in range(n):
        flat, r = divmod(flat, d)
        out.append(r)
    out.append(flat)
    return tuple(reversed(out))


def tensor_codec(A: FiniteAlgebra, n: int, multi=None, flat=None):
    """Encode a multi-index (if given) or decode a flat index."""
    if (multi is None) == (flat is None):
        raise ChainError("give exactly one of multi or flat")
    if multi is not None:
        if len(multi) != n + 1:
            raise ChainError("multi-index length must be n + 1")
        return encode(A.dim, multi)
    return decode(A.dim, n, flat)


def basis_slots(d: int, n: int) -> np.ndarray:
    """All basis tensors of ``C_n`` as an int64 array of shape (dim, n + 1), in flat order."""
    dim = chain_space_dim(d, n)
    flat = np.arange(dim, dtype=np.int64)
    out = np.empty((dim, n + 1), dtype=np.int64)
    for k in range(n, 0, -1):
        out[:, k] = flat % d
        flat //= d
    out[:, 0] = flat
    return out


def encode_slots(d: int, slots: np.ndarray) -> np.ndarray:
    """Vectorized :func:`encode` for an array of shape (B, n + 1)."""
    flat = slots[:, 0].astype(np.int64)
    for k in range(1, slots.shape[1]):
        flat = flat * d + slots[:, k]
    return flat


def plus_names(A: FiniteAlgebra) -> tuple:
    return unitize(A).basis_names


# chains

class ChainVector:
    """Finitely supported chain: ``{degree: {flat index: Fraction}}``."""

    __slots__ = ("algebra", "components")

    def __init__(self, algebra: FiniteAlgebra, components: Optional[Mapping] = None):
        self.algebra = algebra
        comps = {}
        for n, vec in (components or {}).items():
            n = int(n)
            dim = chain_space_dim(algebra, n)
            clean = {}
            for i, c in vec.items():
                c = as_fraction(c)
                if not c:
                    continue
                i = int(i)
                if not 0 <= i < dim:
                    raise ChainError(f"index {i} outside C_{n} (dimension {dim})")
                clean[i] = c
            if clean:
                comps[n] = clean
        self.components = comps

    @classmethod
    def from_terms(cls, algebra: FiniteAlgebra, terms) -> "ChainVector":
        """``terms``: iterable of (multi-index tuple, coefficient)."""
        comps: dict = {}
        for multi, c in terms:
            n = len(multi) - 1
            flat = encode(algebra.dim, multi)
            comp = comps.setdefault(n, {})
            comp[flat] = comp.get(flat, Fraction(0)) + as_fraction(c)
        return cls(algebra, comps)

    @classmethod
    def elementary(cls, algebra: FiniteAlgebra, multi, coeff=1) -> "ChainVector":
        return cls.from_terms(algebra, [(tuple(multi), coeff)])

    @classmethod
    def from_dense(cls, algebra: FiniteAlgebra, n: int, vec) -> "ChainVector":
        return cls(algebra, {n: {i: c for i, c in enumerate(vec) if c}})

    @property
    def degrees(self) -> list:
        return sorted(self.components)

    @property
    def parity(self) -> str:
        ps = {n % 2 for n in self.components}
        if not ps:
            return "even"
        if len(ps) == 2:
            return "mixed"
        return "even" if ps == {0} else "odd"

    @property
    def max_degree(self) -> int:
        return max(self.components, default=-1)

    def component(self, n: int) -> dict:
        return dict(self.components.get(n, {}))

    def dense(self, n: int) -> list:
        out = [Fraction(0)] * chain_space_dim(self.algebra, n)
        for i, c in self.components.get(n, {}).items():
            out[i] = c
        return out

    def is_zero(self) -> bool:
        return not self.components

    def truncate(self, max_degree: int) -> "ChainVector":
        return ChainVector(self.algebra, {n: v for n, v in self.components.items() if n <= max_degree})

    def restrict(self, degrees) -> "ChainVector":
        degrees = set(degrees)
        return ChainVector(self.algebra, {n: v for n, v in self.components.items() if n in degrees})

    def __add__(self, other: "ChainVector") -> "ChainVector":
        comps = {n: dict(v) for n, v in self.components.items()}
        for n, v in other.components.items():
            tgt = comps.setdefault(n, {})
            for i, c in v.items():
                tgt[i] = tgt.get(i, Fraction(0)) + c
        return ChainVector(self.algebra, comps)

    def __neg__(self):
        return self.scale(-1)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "ChainVector":
        c = as_fraction(c)
        return ChainVector(self.algebra, {n: {i: x * c for i, x in v.items()}
                                          for n, v in self.components.items()})

    def __eq__(self, other):
        if not isinstance(other, ChainVector):
            return NotImplemented
        return self.algebra == other.algebra and self.components == other.components

    def terms(self):
        """Yield ``(degree, multi-index, coefficient)`` in sorted order."""
        d = self.algebra.dim
        for n in self.degrees:
            for flat in sorted(self.components[n]):
                yield n, decode(d, n, flat), self.components[n][flat]

    def to_json(self) -> list:
        names = plus_names(self.algebra)
        out = []
        for n in self.degrees:
            terms = []
            for flat in sorted(self.components[n]):
                multi = decode(self.algebra.dim, n, flat)
                terms.append({"tensor": [names[i] for i in multi],
                              "coeff": format_rational(self.components[n][flat])})
            out.append({"degree": n, "terms": terms})
        return out

    @classmethod
    def from_json(cls, algebra: FiniteAlgebra, doc) -> "ChainVector":
        names = plus_names(algebra)
        lookup = {nm: i for i, nm in enumerate(names)}
        terms = []
        for block in doc:
            n = int(block["degree"])
            for t in block["terms"]:
                tensor = t["tensor"]
                if len(tensor) != n + 1:
                    raise ChainError(f"degree {n} term has {len(tensor)} slots")
                try:
                    multi = tuple(lookup[x] for x in tensor)
                except KeyError as exc:
                    raise ChainError(f"unknown basis name {exc.args[0]!r}") from None
                terms.append((multi, parse_rational(str(t["coeff"]))))
        return cls.from_terms(algebra, terms)

    def __repr__(self):
        sizes = {n: len(v) for n, v in self.components.items()}
        return f"ChainVector(degrees={sizes})"


# cochains

class AValuedCochain:
    """k-linear map ``A^k -> A`` stored as a table of shape ``(d**k, d)``.

    Row index is the mixed-radix code of ``(i_1, ..., i_k)`` (first argument
    most significant); for ``k = 0`` the single row is the element ``D()``.
    With ``extended=True`` the table lives on ``A_+`` (shape
    ``((d+1)**k, d+1)``); this is reserved for the multiplication of ``A_+``.
    """

    __slots__ = ("algebra", "order", "table", "extended", "_key")

    def __init__(self, algebra: FiniteAlgebra, order: int, table, extended: bool = False):
        if order < 0:
            raise ChainError("cochain order must be non-negative")
        d = algebra.dim + (1 if extended else 0)
        arr = np.empty((d ** order, d), dtype=object)
        src = np.asarray(table, dtype=object).reshape(d ** order, d)
        for idx in np.ndindex(arr.shape):
            arr[idx] = as_fraction(src[idx])
        self.algebra = algebra
        self.order = order
        self.table = arr
        self.extended = extended
        self._key = None

    @property
    def key(self) -> tuple:
        if self._key is None:
            self._key = (self.order, self.extended, tuple(self.table.ravel().tolist()))
        return self._key

    @property
    def tensor(self) -> np.ndarray:
        """View of the table with one axis per argument plus the output axis."""
        d = self.table.shape[1]
        return self.table.reshape((d,) * self.order + (d,))

    @classmethod
    def zero(cls, A: FiniteAlgebra, k: int) -> "AValuedCochain":
        return cls(A, k, np.zeros((A.dim ** k, A.dim), dtype=np.int64))

    @classmethod
    def identity(cls, A: FiniteAlgebra) -> "AValuedCochain":
        return cls(A, 1, np.eye(A.dim, dtype=np.int64))

    @classmethod
    def multiplication(cls, A: FiniteAlgebra) -> "AValuedCochain":
        d = A.dim
        return cls(A, 2, np.array(A.structure, dtype=object).reshape(d * d, d))

    @classmethod
    def plus_multiplication(cls, A: FiniteAlgebra) -> "AValuedCochain":
        """The multiplication of ``A_+``, the one cochain allowed to see ``e``."""
        P = unitize(A)
        d = P.dim
        return cls(A, 2, np.array(P.structure, dtype=object).reshape(d * d, d), extended=True)

    @classmethod
    def from_element(cls, A: FiniteAlgebra, u) -> "AValuedCochain":
        return cls(A, 0, np.array([list(A.element(u))], dtype=object))

    def evaluate(self, *args) -> tuple:
        """Multilinear evaluation on coordinate vectors of ``A`` (or ``A_+`` if extended)."""
        if len(args) != self.order:
            raise ChainError(f"expected {self.order} arguments")
        T = self.tensor
        for a in args:
            a = np.array([as_fraction(x) for x in a], dtype=object)
            T = np.tensordot(a, T, axes=([0], [0]))
        return tuple(Fraction(x) for x in np.asarray(T).ravel())

    def int_table(self):
        """``(numerators, den)`` with an int64 table when entries are small."""
        den = 1
        for x in self.table.ravel():
            den = den * x.denominator // np.gcd(den, x.denominator)
        num = np.array([int(x * den) for x in self.table.ravel()], dtype=object).reshape(self.table.shape)
        if num.size == 0 or max(abs(int(x)) for x in num.ravel()) < 2 ** 31:
            num = num.astype(np.int64)
        return num, int(den)

    def __add__(self, other: "AValuedCochain") -> "AValuedCochain":
        self._check(other)
        return AValuedCochain(self.algebra, self.order, self.table + other.table, self.extended)

    def __sub__(self, other):
        self._check(other)
        return AValuedCochain(self.algebra, self.order, self.table - other.table, self.extended)

    def __neg__(self):
        return AValuedCochain(self.algebra, self.order, -self.table, self.extended)

    def scale(self, c) -> "AValuedCochain":
        c = as_fraction(c)
        return AValuedCochain(self.algebra, self.order, self.table * c, self.extended)

    def _check(self, other):
        if self.order != other.order or self.extended != other.extended or self.algebra != other.algebra:
            raise ChainError("cochains live in different spaces")

    def is_zero(self) -> bool:
        return not any(self.table.ravel())

    def __eq__(self, other):
        if not isinstance(other, AValuedCochain):
            return NotImplemented
        return self.algebra == other.algebra and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __repr__(self):
        return f"AValuedCochain(order={self.order}, dim={self.algebra.dim}, extended={self.extended})"


def random_cochain(A: FiniteAlgebra, k: int, seed: int) -> AValuedCochain:
    """Cochain with entries drawn uniformly from {-2, ..., 2}; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    vals = rng.integers(-2, 3, size=(A.dim ** k, A.dim))
    return AValuedCochain(A, k, vals)


class DualFunctional:
    """Linear functional on ``C_n(A)``: sparse covector ``{flat: Fraction}``."""

    __slots__ = ("algebra", "order", "coeffs")

    def __init__(self, algebra: FiniteAlgebra, order: int, coeffs: Mapping):
        dim = chain_space_dim(algebra, order)
        clean = {}
        for i, c in coeffs.items():
            c = as_fraction(c)
            if c:
                if not 0 <= int(i) < dim:
                    raise ChainError(f"index {i} outside C_{order}")
                clean[int(i)] = c
        self.algebra = algebra
        self.order = order
        self.coeffs = clean

    @classmethod
    def coordinate(cls, algebra: FiniteAlgebra, multi) -> "DualFunctional":
        return cls(algebra, len(multi) - 1, {encode(algebra.dim, multi): 1})

    def __call__(self, chain: ChainVector) -> Fraction:
        comp = chain.components.get(self.order, {})
        if len(comp) < len(self.coeffs):
            return sum((c * self.coeffs[i] for i, c in comp.items() if i in self.coeffs), Fraction(0))
        return sum((c * comp[i] for i, c in self.coeffs.items() if i in comp), Fraction(0))

    def dense(self) -> list:
        out = [Fraction(0)] * chain_space_dim(self.algebra, self.order)
        for i, c in self.coeffs.items():
            out[i] = c
        return out

    def to_json(self) -> dict:
        names = plus_names(self.algebra)
        d = self.algebra.dim
        return {"degree": self.order,
                "terms": [{"tensor": [names[i] for i in decode(d, self.order, f)],
                           "coeff": format_rational(self.coeffs[f])} for f in sorted(self.coeffs)]}

    def __repr__(self):
        return f"DualFunctional(order={self.order}, nnz={len(self.coeffs)})"


def all_multi_indices(d: int, n: int):
    """Every basis multi-index of ``C_n`` in flat order."""
    first = range(d) if n == 0 else range(d + 1)
    for i0 in first:
        for rest in itertools.product(range(d), repeat=n):
            yield (i0,) + rest
