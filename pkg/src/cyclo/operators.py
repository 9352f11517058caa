"""Operator calculus on chains and Hochschild cochains.

Chain operators (b, B, L_D, iota_D, S_D, I_D and the generalized trace) are
written as short programs over batches of basis tensors: apply a
multilinear table to a block of consecutive slots, rotate the slots, insert
the unit ``e``, drop tensors that start with ``e``.  One program serves both
as a matrix assembler (batch = all basis tensors of ``C_n``) and as a sparse
chain evaluator (batch = the support of a chain).

Inside a batch every slot uses the ``A_+`` radix ``d + 1``.  A finished
tensor with ``e`` in a slot other than slot 0 is the image of a degenerate
element of ``A_+ (x) A_+^(x)n`` and is dropped, which is exactly how
``C_n(A) = A_+ (x) A^(x)n`` sits inside the chains of ``A_+``.
"""

from __future__ import annotations

import string
import threading
from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Callable, Optional, Sequence

import numpy as np

from .algebra import FiniteAlgebra, unitize
from .chains import AValuedCochain, ChainVector, basis_slots, chain_space_dim
from .exactnum.qmatrix import QMatrix, qblock

_BIG = 2 ** 40


def _dim(A: FiniteAlgebra, n: int) -> int:
    return chain_space_dim(A, n) if n >= 0 else 0


@dataclass(frozen=True)
class DegreeOperator:
    """Linear map ``C_source -> C_target`` as an exact matrix."""

    source: int
    target: int
    matrix: QMatrix

    def __call__(self, chain: ChainVector) -> ChainVector:
        vec = chain.components.get(self.source, {})
        out = self.matrix.apply_sparse(vec)
        return ChainVector(chain.algebra, {self.target: out} if self.target >= 0 else {})


# multilinear tables in A_+ radix

class _Table:
    """Sparse CSR view of a table ``(D**k, D)`` of integer numerators over ``den``."""

    __slots__ = ("arity", "indptr", "indices", "data", "den")

    def __init__(self, num: np.ndarray, den: int, arity: int):
        self.arity = arity
        self.den = int(den)
        nz_r, nz_c = np.nonzero(num != 0)
        counts = np.bincount(nz_r, minlength=num.shape[0])
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.indices = nz_c.astype(np.int64)
        vals = num[nz_r, nz_c]
        self.data = vals.astype(np.int64) if vals.dtype != object else vals


_table_cache: dict = {}
_cache_lock = threading.Lock()


def _cached(key, build: Callable):
    with _cache_lock:
        hit = _table_cache.get(key)
    if hit is not None:
        return hit
    val = build()
    with _cache_lock:
        return _table_cache.setdefault(key, val)


def clear_cache() -> None:
    with _cache_lock:
        _table_cache.clear()


def _plus_table(A: FiniteAlgebra) -> _Table:
    def build():
        P = unitize(A)
        num, den = P.int_structure
        D = P.dim
        return _Table(np.asarray(num).reshape(D * D, D), den, 2)
    return _cached(("plus", A.key), build)


def _cochain_table(A: FiniteAlgebra, D: AValuedCochain) -> _Table:
    """Table of ``D`` in ``A_+`` radix, zero on every argument tuple that contains ``e``."""
    def build():
        num, den = D.int_table()
        k = D.order
        if D.extended:
            return _Table(num, den, k)
        d = A.dim
        P = d + 1
        out = np.zeros((P ** k, P), dtype=num.dtype)
        if k == 0:
            out[0, :d] = num[0]
        else:
            idx = basis_slots_plain(d, k)
            code = np.zeros(len(idx), dtype=np.int64)
            for j in range(k):
                code = code * P + idx[:, j]
            out[code, :d] = num
        return _Table(out, den, k)
    return _cached(("cochain", A.key, D.key), build)


def basis_slots_plain(d: int, k: int) -> np.ndarray:
    """All k-tuples over ``range(d)`` in lexicographic order, shape (d**k, k)."""
    if k == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.indices((d,) * k).reshape(k, -1).T
    return grids.astype(np.int64)


# batches of basis tensors

@dataclass
class _Batch:
    slots: np.ndarray  # (B, L) int64, A_+ radix
    coef: np.ndarray   # (B,) int64 or object
    src: np.ndarray    # (B,) int64
    den: int = 1

    def take(self, mask) -> "_Batch":
        return _Batch(self.slots[mask], self.coef[mask], self.src[mask], self.den)


def _apply_table(batch: _Batch, start: int, T: _Table, P: int) -> _Batch:
    k = T.arity
    B = len(batch.src)
    code = np.zeros(B, dtype=np.int64)
    for j in range(k):
        code = code * P + batch.slots[:, start + j]
    lo = T.indptr[code]
    counts = T.indptr[code + 1] - lo
    rep = np.repeat(np.arange(B, dtype=np.int64), counts)
    offs = np.arange(len(rep), dtype=np.int64) - np.repeat(np.cumsum(counts) - counts, counts)
    pos = lo[rep] + offs
    out_val = T.indices[pos]
    coef = batch.coef[rep] * T.data[pos]
    if coef.dtype != object and len(coef) and np.abs(coef).max() > _BIG:
        coef = batch.coef[rep].astype(object) * T.data[pos].astype(object)
    slots = np.concatenate([batch.slots[rep, :start], out_val[:, None],
                            batch.slots[rep, start + k:]], axis=1)
    return _Batch(slots, coef, batch.src[rep], batch.den * T.den)


def _rotate_right(batch: _Batch, j: int) -> _Batch:
    if j == 0 or batch.slots.shape[1] == 0:
        return batch
    return _Batch(np.roll(batch.slots, j, axis=1), batch.coef, batch.src, batch.den)


def _insert_e(batch: _Batch, d: int) -> _Batch:
    col = np.full((len(batch.src), 1), d, dtype=np.int64)
    return _Batch(np.concatenate([col, batch.slots], axis=1), batch.coef, batch.src, batch.den)


def _drop_e_first(batch: _Batch, d: int) -> _Batch:
    return batch.take(batch.slots[:, 0] != d)


# a program is a list of (sign, steps); a step is one of
#   ("map", start, table), ("rot", j), ("ins_e",), ("not_e0",)

def _run(A: FiniteAlgebra, batch: _Batch, program, target: int):
    d = A.dim
    P = d + 1
    pieces = []
    for sign, steps in program:
        b = batch
        for st in steps:
            if st[0] == "map":
                b = _apply_table(b, st[1], st[2], P)
            elif st[0] == "rot":
                b = _rotate_right(b, st[1])
            elif st[0] == "ins_e":
                b = _insert_e(b, d)
            elif st[0] == "not_e0":
                b = _drop_e_first(b, d)
            if len(b.src) == 0:
                break
        if len(b.src) == 0:
            continue
        if b.slots.shape[1] != target + 1:
            raise AssertionError(f"program produced {b.slots.shape[1] - 1}-tensors, expected {target}")
        keep = np.all(b.slots[:, 1:] != d, axis=1)
        if target == 0:
            keep &= b.slots[:, 0] != d
        b = b.take(keep)
        if len(b.src):
            pieces.append((sign, b))
    return pieces


def _flat(d: int, slots: np.ndarray) -> np.ndarray:
    flat = slots[:, 0].astype(np.int64)
    for k in range(1, slots.shape[1]):
        flat = flat * d + slots[:, k]
    return flat


def _assemble(A: FiniteAlgebra, pieces, rows: int, cols: int) -> QMatrix:
    if not pieces:
        return QMatrix.zeros(rows, cols)
    den = 1
    for _, b in pieces:
        den = den * b.den // gcd(den, b.den)
    rs, cs, vs = [], [], []
    obj = any(b.coef.dtype == object for _, b in pieces)
    for sign, b in pieces:
        f = sign * (den // b.den)
        rs.append(_flat(A.dim, b.slots))
        cs.append(b.src)
        vs.append((b.coef.astype(object) if obj else b.coef) * f)
    return QMatrix.from_int_coo(rows, cols, np.concatenate(rs), np.concatenate(cs),
                                np.concatenate(vs), den)


def _full_batch(A: FiniteAlgebra, n: int) -> _Batch:
    slots = basis_slots(A.dim, n)
    m = len(slots)
    return _Batch(slots, np.ones(m, dtype=np.int64), np.arange(m, dtype=np.int64), 1)


def _chain_batch(A: FiniteAlgebra, n: int, vec: dict):
    """Batch for one chain component; coefficients cleared to integers."""
    d = A.dim
    items = sorted(vec.items())
    den = 1
    for _, c in items:
        den = den * c.denominator // gcd(den, c.denominator)
    flats = np.array([i for i, _ in items], dtype=np.int64)
    coef = np.array([int(c * den) for _, c in items], dtype=object)
    if len(coef) and max(abs(int(x)) for x in coef) < 2 ** 31:
        coef = coef.astype(np.int64)
    slots = np.empty((len(items), n + 1), dtype=np.int64)
    f = flats.copy()
    for k in range(n, 0, -1):
        slots[:, k] = f % d
        f //= d
    slots[:, 0] = f
    return _Batch(slots, coef, np.zeros(len(items), dtype=np.int64), 1), den


def _apply_program_to_chain(A: FiniteAlgebra, chain: ChainVector, programs: Callable, shift: int) -> ChainVector:
    """Apply ``programs(n) -> program`` degreewise; ``shift`` = target - source degree."""
    out: dict = {}
    for n, vec in chain.components.items():
        tgt = n + shift
        if tgt < 0 or not vec:
            continue
        batch, cden = _chain_batch(A, n, vec)
        pieces = _run(A, batch, programs(n), tgt)
        acc = out.setdefault(tgt, {})
        for sign, b in pieces:
            flats = _flat(A.dim, b.slots)
            scale = Fraction(sign, b.den * cden)
            for fl, c in zip(flats.tolist(), b.coef.tolist()):
                if c:
                    acc[fl] = acc.get(fl, Fraction(0)) + scale * c
    return ChainVector(A, out)


# programs

def _sign(e: int) -> int:
    """``(-1)**e`` as an int, also for negative ``e`` (order-0 cochains)."""
    return -1 if e % 2 else 1


def _prog_b(A: FiniteAlgebra, n: int):
    P = _plus_table(A)
    prog = [(_sign(j), [("map", j, P)]) for j in range(n)]
    prog.append((_sign(n), [("rot", 1), ("map", 0, P)]))
    return prog


def _prog_B(A: FiniteAlgebra, n: int):
    # B(a_0, ..., a_n) = sum_j (-1)^{jn} (e, a_j, ..., a_n, a_0, ..., a_{j-1})
    return [(_sign(j * n), [("not_e0",), ("rot", n + 1 - j), ("ins_e",)]) for j in range(n + 1)]


def _prog_L(A: FiniteAlgebra, D: AValuedCochain, n: int):
    k = D.order
    if k > n + 1:
        return []
    T = _cochain_table(A, D)
    prog = []
    for i in range(0, n - k + 2):
        prog.append((_sign(i * (k - 1)), [("map", i, T)]))
    for i in range(1, k):
        prog.append((_sign(i * n), [("rot", i), ("map", 0, T)]))
    return prog


def _prog_iota(A: FiniteAlgebra, D: AValuedCochain, n: int):
    k = D.order
    if n < k:
        return []
    T = _cochain_table(A, D)
    P = _plus_table(A)
    return [(_sign(k - 1), [("map", 1, T), ("map", 0, P)])]


def _prog_S(A: FiniteAlgebra, D: AValuedCochain, n: int):
    k = D.order
    T = _cochain_table(A, D)
    prog = []
    for i in range(1, n - k + 2):
        for j in range(0, n - i - k + 2):
            sign = _sign(i * (k - 1) + j * (n - k + 1))
            prog.append((sign, [("not_e0",), ("map", i, T), ("rot", j), ("ins_e",)]))
    return prog


# memoized matrices

def _matrix(A: FiniteAlgebra, name: str, D: Optional[AValuedCochain], n: int, target: int, program) -> DegreeOperator:
    key = ("matrix", name, A.key, D.key if D is not None else None, n)

    def build():
        rows, cols = _dim(A, target), _dim(A, n)
        if rows == 0 or cols == 0:
            return DegreeOperator(n, target, QMatrix.zeros(rows, cols))
        pieces = _run(A, _full_batch(A, n), program(), target)
        return DegreeOperator(n, target, _assemble(A, pieces, rows, cols))
    return _cached(key, build)


def hochschild_b(A: FiniteAlgebra, n: int) -> DegreeOperator:
    if n < 1:
        return DegreeOperator(n, n - 1, QMatrix.zeros(0, _dim(A, n)))
    return _matrix(A, "b", None, n, n - 1, lambda: _prog_b(A, n))


def connes_B(A: FiniteAlgebra, n: int) -> DegreeOperator:
    if n < 0:
        raise ValueError("degree must be non-negative")
    return _matrix(A, "B", None, n, n + 1, lambda: _prog_B(A, n))


def lie_derivative(A: FiniteAlgebra, D: AValuedCochain, n: int) -> DegreeOperator:
    return _matrix(A, "L", D, n, n - D.order + 1, lambda: _prog_L(A, D, n))


def contraction_iota(A: FiniteAlgebra, D: AValuedCochain, n: int) -> DegreeOperator:
    return _matrix(A, "iota", D, n, n - D.order, lambda: _prog_iota(A, D, n))


def cyclic_S(A: FiniteAlgebra, D: AValuedCochain, n: int) -> DegreeOperator:
    return _matrix(A, "S", D, n, n - D.order + 2, lambda: _prog_S(A, D, n))


def cyclic_contraction(A: FiniteAlgebra, D: AValuedCochain, n: int):
    """``(S_D, (iota_D, S_D))`` on ``C_n``; ``I_D = iota_D + S_D`` has two target degrees."""
    S = cyclic_S(A, D, n)
    return S, (contraction_iota(A, D, n), S)


# the same operators applied to sparse chains

def apply_b(chain: ChainVector) -> ChainVector:
    A = chain.algebra
    ch = chain.restrict([n for n in chain.degrees if n >= 1])
    return _apply_program_to_chain(A, ch, lambda n: _prog_b(A, n), -1)


def apply_B(chain: ChainVector) -> ChainVector:
    A = chain.algebra
    return _apply_program_to_chain(A, chain, lambda n: _prog_B(A, n), +1)


def apply_L(D: AValuedCochain, chain: ChainVector) -> ChainVector:
    A = chain.algebra
    return _apply_program_to_chain(A, chain, lambda n: _prog_L(A, D, n), 1 - D.order)


def apply_iota(D: AValuedCochain, chain: ChainVector) -> ChainVector:
    A = chain.algebra
    return _apply_program_to_chain(A, chain, lambda n: _prog_iota(A, D, n), -D.order)


def apply_S(D: AValuedCochain, chain: ChainVector) -> ChainVector:
    A = chain.algebra
    return _apply_program_to_chain(A, chain, lambda n: _prog_S(A, D, n), 2 - D.order)


def apply_I(D: AValuedCochain, chain: ChainVector) -> ChainVector:
    return apply_iota(D, chain) + apply_S(D, chain)


# block operators on a range of degrees

def block_operator(A: FiniteAlgebra, parts: Sequence[Callable[[int], DegreeOperator]], n_max: int,
                   signs: Optional[Sequence[int]] = None) -> QMatrix:
    """Sum of degreewise operators assembled on ``C_0 + ... + C_{n_max}``.

    Components whose target degree falls outside ``[0, n_max]`` are dropped.
    """
    sizes = [_dim(A, n) for n in range(n_max + 1)]
    blocks = [[None] * (n_max + 1) for _ in range(n_max + 1)]
    signs = signs or [1] * len(parts)
    for part, s in zip(parts, signs):
        for n in range(n_max + 1):
            op = part(n)
            if op is None or not 0 <= op.target <= n_max or op.matrix.is_zero():
                continue
            m = op.matrix if s == 1 else op.matrix.scale(s)
            cur = blocks[op.target][n]
            blocks[op.target][n] = m if cur is None else cur + m
    return qblock(blocks, sizes, sizes)


def graded_commutator(S: QMatrix, T: QMatrix, parity_s: int, parity_t: int) -> QMatrix:
    sign = -1 if (parity_s * parity_t) % 2 else 1
    st = S @ T
    ts = T @ S
    return st - ts if sign == 1 else st + ts


# Hochschild cochain operations

_LETTERS = string.ascii_letters


def _struct_tensor(A: FiniteAlgebra) -> np.ndarray:
    d = A.dim
    return np.array(A.structure, dtype=object).reshape(d, d, d)


def _einsum(spec: str, *ops) -> np.ndarray:
    return np.einsum(spec, *ops, dtype=object, optimize=False)


def cochain_delta(A: FiniteAlgebra, D: AValuedCochain) -> AValuedCochain:
    """Hochschild coboundary with the signs

    ``dD(a_1..a_{k+1}) = D(a_1..a_k) a_{k+1} + (-1)^{k+1} a_1 D(a_2..a_{k+1})
    + sum_{j=1}^{k} (-1)^{k-j+1} D(.., a_j a_{j+1}, ..)``.
    """
    if D.extended:
        raise ValueError("coboundary is defined for cochains on A")
    k = D.order
    d = A.dim
    c = _struct_tensor(A)
    T = D.tensor
    args = _LETTERS[:k + 1]
    Y, Z = "Y", "Z"
    out = _einsum(f"{args[:k]}{Y},{Y}{args[k]}{Z}->{args}{Z}", T, c)
    out = out + _sign(k + 1) * _einsum(f"{args[0]}{Y}{Z},{args[1:]}{Y}->{args}{Z}", c, T)
    for j in range(1, k + 1):
        a_j, a_j1 = args[j - 1], args[j]
        inner = args[:j - 1] + Y + args[j + 1:]
        out = out + _sign(k - j + 1) * _einsum(f"{a_j}{a_j1}{Y},{inner}{Z}->{args}{Z}", c, T)
    return AValuedCochain(A, k + 1, out.reshape(d ** (k + 1), d))


def circle_product(A: FiniteAlgebra, D: AValuedCochain, E: AValuedCochain) -> AValuedCochain:
    """``(D o E)(a..) = sum_p (-1)^{p(l-1)} D(a_1..a_p, E(a_{p+1}..a_{p+l}), ..)``."""
    k, l = D.order, E.order
    d = A.dim
    if k + l - 1 < 0:
        raise ValueError("circle product of two order-0 cochains is undefined")
    if k == 0:
        return AValuedCochain.zero(A, l - 1)
    args = _LETTERS[:k + l - 1]
    out = np.zeros((d,) * (k + l - 1) + (d,), dtype=object)
    for p in range(k):
        d_args = args[:p] + "Y" + args[p + l:]
        e_args = args[p:p + l]
        out = out + _sign(p * (l - 1)) * _einsum(f"{d_args}Z,{e_args}Y->{args}Z", D.tensor, E.tensor)
    return AValuedCochain(A, k + l - 1, out.reshape(d ** (k + l - 1), d))


def gerstenhaber_bracket(A: FiniteAlgebra, D: AValuedCochain, E: AValuedCochain) -> AValuedCochain:
    k, l = D.order, E.order
    s = _sign((k - 1) * (l - 1))
    return circle_product(A, D, E) - circle_product(A, E, D).scale(s)


# generalized trace C_n(M_N(A)) -> C_n(A)

def _trace_batch(A: FiniteAlgebra, N: int, batch: _Batch) -> _Batch:
    """Map basis tensors of ``M_N(A)`` (radix N*N*d + 1) to tensors of ``A``."""
    d = A.dim
    big = N * N * d
    slots = batch.slots
    n1 = slots.shape[1]
    unit0 = slots[:, 0] == big
    s = np.where(slots == big, 0, slots)
    mat = s // d
    a = s % d
    p, q = mat // N, mat % N
    ok = np.ones(len(slots), dtype=bool)
    for k in range(1, n1 - 1):
        ok &= q[:, k] == p[:, k + 1]
    # trace closes the cycle; a unit in slot 0 contributes id_N
    closed = np.where(unit0, q[:, n1 - 1] == p[:, 1] if n1 > 1 else True, q[:, n1 - 1] == p[:, 0])
    chain0 = np.where(unit0, True, (q[:, 0] == p[:, 1]) if n1 > 1 else True)
    ok &= closed & chain0
    coef = batch.coef.copy()
    if n1 == 1:
        coef = np.where(unit0, coef * N, coef)
    out = a.copy()
    out[:, 0] = np.where(unit0, d, a[:, 0])
    res = _Batch(out, coef, batch.src, batch.den)
    return res.take(ok)


def generalized_trace(A: FiniteAlgebra, N: int, n: int) -> DegreeOperator:
    """Matrix of ``T: C_n(M_N(A)) -> C_n(A)``; slot-0 unit of ``M_N(A)_+`` acts as ``id_N (x) e``."""
    from .algebra import matrix_algebra
    MA = matrix_algebra(A, N)

    def build():
        batch = _full_batch(MA, n)
        tb = _trace_batch(A, N, batch)
        rows, cols = _dim(A, n), _dim(MA, n)
        if n == 0:
            tb = tb.take(tb.slots[:, 0] != A.dim)
        if len(tb.src) == 0:
            return DegreeOperator(n, n, QMatrix.zeros(rows, cols))
        return DegreeOperator(n, n, _assemble(A, [(1, tb)], rows, cols))
    return _cached(("trace", A.key, N, n), build)


def apply_trace(A: FiniteAlgebra, N: int, chain: ChainVector) -> ChainVector:
    """Sparse version of :func:`generalized_trace` on a chain of ``M_N(A)``."""
    MA = chain.algebra
    out: dict = {}
    for n, vec in chain.components.items():
        batch, cden = _chain_batch(MA, n, vec)
        tb = _trace_batch(A, N, batch)
        if n == 0:
            tb = tb.take(tb.slots[:, 0] != A.dim)
        acc = out.setdefault(n, {})
        flats = _flat(A.dim, tb.slots)
        for fl, c in zip(flats.tolist(), tb.coef.tolist()):
            if c:
                acc[fl] = acc.get(fl, Fraction(0)) + Fraction(c, cden)
    return ChainVector(A, out)


# identity suite

@dataclass(frozen=True)
class IdentityCheck:
    name: str
    degree: int
    holds: bool


def _compose(ops: Sequence[Callable[[int], DegreeOperator]], n: int):
    """``(target, matrix)`` of ``ops[-1] o ... o ops[0]`` on ``C_n``, or None if a degree goes negative."""
    m, deg = None, n
    for op in ops:
        if deg < 0:
            return None
        o = op(deg)
        m = o.matrix if m is None else o.matrix @ m
        deg = o.target
    return None if deg < 0 else (deg, m)


def _combination_is_zero(terms, n: int) -> bool:
    """``sum coef * (composite on C_n)`` vanishes degree by degree."""
    acc: dict = {}
    for coef, ops in terms:
        r = _compose(ops, n)
        if r is None:
            continue
        deg, m = r
        m = m if coef == 1 else m.scale(coef)
        acc[deg] = acc[deg] + m if deg in acc else m
    return all(m.is_zero() for m in acc.values())


def _commutator_terms(S, T, ps: int, pt: int, coef: int = 1) -> list:
    """Terms of ``coef * [S, T] = coef * (S T - (-1)^{ps pt} T S)``; each of S, T is a list of parts."""
    sign = -1 if (ps * pt) % 2 else 1
    out = []
    for s in S:
        for t in T:
            out.append((coef, [t, s]))
            out.append((-sign * coef, [s, t]))
    return out


def identity_suite(A: FiniteAlgebra, cochains: Sequence[AValuedCochain], n_max: int = 5,
                   stop_at_first: bool = False) -> list:
    """Exact operator identities on source degrees ``0..n_max``.

    Checked: b^2 = 0, B^2 = 0, bB + Bb = 0, L_m = b, and for each cochain D
    (with E the next cochain in the list) [b, L_D] = L_{dD}, [B, L_D] = 0,
    [L_D, L_E] = L_{[D,E]}, [b, iota_D] = -iota_{dD} and the Cartan formula
    [b + B, I_D] = L_D - I_{dD}.
    """
    b = lambda n: hochschild_b(A, n)
    B = lambda n: connes_B(A, n)
    mp = AValuedCochain.plus_multiplication(A)
    out: list = []

    def record(name, terms):
        for n in range(n_max + 1):
            ok = _combination_is_zero(terms, n)
            out.append(IdentityCheck(name, n, ok))
            if stop_at_first and not ok:
                return False
        return True

    if not record("b^2 = 0", [(1, [b, b])]) and stop_at_first:
        return out
    if not record("B^2 = 0", [(1, [B, B])]) and stop_at_first:
        return out
    if not record("bB + Bb = 0", [(1, [B, b]), (1, [b, B])]) and stop_at_first:
        return out
    if not record("L_m = b", [(1, [lambda n: lie_derivative(A, mp, n)]), (-1, [b])]) and stop_at_first:
        return out
    for idx, D in enumerate(cochains):
        k = D.order
        dD = cochain_delta(A, D)
        L = lambda n, D=D: lie_derivative(A, D, n)
        LdD = lambda n, dD=dD: lie_derivative(A, dD, n)
        io = lambda n, D=D: contraction_iota(A, D, n)
        S = lambda n, D=D: cyclic_S(A, D, n)
        iodD = lambda n, dD=dD: contraction_iota(A, dD, n)
        SdD = lambda n, dD=dD: cyclic_S(A, dD, n)
        tag = f"[order {k}, #{idx}]"
        checks = [
            (f"[b, L_D] = L_dD {tag}", _commutator_terms([b], [L], 1, k - 1) + [(-1, [LdD])]),
            (f"[B, L_D] = 0 {tag}", _commutator_terms([B], [L], 1, k - 1)),
            (f"[b, iota_D] = -iota_dD {tag}", _commutator_terms([b], [io], 1, k) + [(1, [iodD])]),
            (f"[b+B, I_D] = L_D - I_dD {tag}",
             _commutator_terms([b, B], [io, S], 1, k) + [(-1, [L]), (1, [iodD]), (1, [SdD])]),
        ]
        if len(cochains) > 1:
            E = cochains[(idx + 1) % len(cochains)]
            l = E.order
            DE = gerstenhaber_bracket(A, D, E)
            LE = lambda n, E=E: lie_derivative(A, E, n)
            LDE = lambda n, DE=DE: lie_derivative(A, DE, n)
            checks.append((f"[L_D, L_E] = L_[D,E] {tag}",
                           _commutator_terms([L], [LE], k - 1, l - 1) + [(-1, [LDE])]))
        for name, terms in checks:
            if not record(name, terms) and stop_at_first:
                return out
    return out
