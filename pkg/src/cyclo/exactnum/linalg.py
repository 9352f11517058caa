"""Exact rank, kernel, solve and homology over Q.

Small matrices are reduced directly in rational arithmetic.  Large ones are
reduced modulo a word-size prime with the compiled kernel, and every
modular answer is turned into an exact one by lifting the few vectors that
matter (rational reconstruction, CRT over further primes if needed) and
verifying them in exact integer arithmetic.  A modular rank is always a
lower bound for the rational rank, so exact kernel or homology certificates
close the gap from above.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import gcd, isqrt
from typing import Optional, Sequence

import numpy as np

from .. import kernels
from .qmatrix import QMatrix

PRIMES = (2147483629, 2147483587, 2147483579, 2147483563, 2147483549,
          2147483543, 2147483497, 2147483489, 2147483477, 2147483423,
          2147483399, 2147483353, 2147483323, 2147483269, 2147483249)

# Matrices with at most this many entries are reduced exactly over Q.
EXACT_ENTRY_LIMIT = 40_000


# Largest dense modular matrix (entries) the elimination kernel will allocate.
DENSE_ENTRY_LIMIT = 400_000_000


class CertificationError(ArithmeticError):
    """No prime in :data:`PRIMES` produced a verifiable answer."""


class ResourceCapError(MemoryError):
    """A requested computation exceeds a configured size cap."""


# exact rational elimination

def rref_exact(rows: Sequence[Sequence], ncols: Optional[int] = None):
    """Reduced row echelon form over Q.

    Pivot rows are chosen, within each column, as the candidate with the
    smallest numerator*denominator magnitude (ties broken by row index), so
    the elimination order is deterministic.  Returns ``(R, pivots)`` with
    ``R`` a list of Fraction rows (only the nonzero ones).
    """
    A = [[Fraction(x) for x in r] for r in rows]
    n = ncols if ncols is not None else (len(A[0]) if A else 0)
    pivots: list[int] = []
    r = 0
    for c in range(n):
        best = None
        for i in range(r, len(A)):
            x = A[i][c]
            if x:
                w = abs(x.numerator * x.denominator)
                if best is None or w < best[0]:
                    best = (w, i)
        if best is None:
            continue
        i = best[1]
        A[r], A[i] = A[i], A[r]
        inv = 1 / A[r][c]
        A[r] = [x * inv for x in A[r]]
        prow = A[r]
        support = [j for j in range(c, n) if prow[j]]
        for k in range(len(A)):
            if k != r:
                f = A[k][c]
                if f:
                    rk = A[k]
                    for j in support:
                        rk[j] -= f * prow[j]
        pivots.append(c)
        r += 1
        if r == len(A):
            break
    return A[:r], pivots


def _primitive(v: list) -> list:
    """Scale a rational vector to coprime integers, first nonzero entry positive."""
    den = 1
    for x in v:
        den = den * x.denominator // gcd(den, x.denominator)
    ints = [int(x * den) for x in v]
    g = 0
    for x in ints:
        g = gcd(g, x)
    if g == 0:
        return [Fraction(0)] * len(v)
    first = next(x for x in ints if x)
    if first < 0:
        g = -g
    return [Fraction(x // g) for x in ints]


def _kernel_from_rref(R, pivots, ncols) -> list:
    pivset = set(pivots)
    basis = []
    for f in range(ncols):
        if f in pivset:
            continue
        v = [Fraction(0)] * ncols
        v[f] = Fraction(1)
        for i, pc in enumerate(pivots):
            v[pc] = -R[i][f]
        basis.append(_primitive(v))
    return basis


# modular helpers

def _int_rows(M: QMatrix) -> dict:
    return M.int_csr_object()


def dense_mod_p(M: QMatrix, p: int, transpose: bool = False) -> np.ndarray:
    rows, cols = M.shape
    if transpose:
        rows, cols = cols, rows
    if rows * cols > DENSE_ENTRY_LIMIT:
        raise ResourceCapError(f"dense {rows}x{cols} elimination exceeds {DENSE_ENTRY_LIMIT} entries")
    out = np.zeros((rows, cols), dtype=np.int64)
    if M.is_fast:
        coo = M._csr.tocoo()
        r, c = (coo.col, coo.row) if transpose else (coo.row, coo.col)
        np.add.at(out, (r, c), np.mod(coo.data, p))
        np.mod(out, p, out=out)
    else:
        for i, row in M._as_rows().items():
            for j, x in row.items():
                if transpose:
                    out[j, i] = (out[j, i] + x) % p
                else:
                    out[i, j] = (out[i, j] + x) % p
    return out


def matmul_mod(X: np.ndarray, Y: np.ndarray, p: int) -> np.ndarray:
    """``X @ Y mod p`` for int64 inputs in ``[0, p)``, ``p < 2**31``, without overflow."""
    lo = X & 0xFFFF
    hi = X >> 16
    out = np.zeros((X.shape[0], Y.shape[1]), dtype=np.int64)
    step = 1 << 14  # 2**16 * 2**31 * 2**14 < 2**63
    for s in range(0, X.shape[1], step):
        Ys = Y[s:s + step]
        h = (hi[:, s:s + step] @ Ys) % p
        l_ = (lo[:, s:s + step] @ Ys) % p
        out = (out + (h * 65536) % p + l_) % p
    return np.ascontiguousarray(out)


def _rref_mod(M: QMatrix, p: int, transpose: bool = False):
    A = dense_mod_p(M, p, transpose)
    piv = kernels.rref_mod_p(A, p)
    return A, piv


def _kernel_vector_mod(R: np.ndarray, pivots: np.ndarray, free: int, ncols: int, p: int) -> np.ndarray:
    v = np.zeros(ncols, dtype=np.int64)
    v[free] = 1
    r = len(pivots)
    if r:
        v[pivots] = (-R[:r, free]) % p
    return v


def _crt_pair(r1: np.ndarray, m1: int, r2: np.ndarray, m2: int):
    """Combine residue vectors (python-int object arrays) modulo coprime m1, m2."""
    inv = pow(m1, -1, m2)
    t = ((r2 - r1) % m2) * inv % m2
    return r1 + m1 * t, m1 * m2


def _ratrecon_big(a: int, m: int):
    bound = isqrt(m // 2)
    r0, r1 = m, a % m
    s0, s1 = 0, 1
    while r1 > bound:
        q = r0 // r1
        r0, r1 = r1, r0 - q * r1
        s0, s1 = s1, s0 - q * s1
    if s1 == 0 or abs(s1) > bound:
        return None
    if s1 < 0:
        s1, r1 = -s1, -r1
    if gcd(abs(r1), s1) != 1:
        return None
    return Fraction(r1, s1)


def _lift(residues: list, moduli: list) -> Optional[list]:
    """Rational reconstruction of a vector known modulo several primes."""
    if len(moduli) == 1:
        p = moduli[0]
        num, den, ok = kernels.ratrecon_array(np.ascontiguousarray(residues[0], dtype=np.int64),
                                               p, isqrt(p // 2))
        if not ok.all():
            return None
        return [Fraction(int(a), int(b)) for a, b in zip(num, den)]
    acc = residues[0].astype(object)
    m = moduli[0]
    for r, p in zip(residues[1:], moduli[1:]):
        acc, m = _crt_pair(acc, m, r.astype(object), p)
    out = []
    for a in acc:
        x = _ratrecon_big(int(a), m)
        if x is None:
            return None
        out.append(x)
    return out


def _exact_apply(M: QMatrix, v: Sequence[Fraction]) -> list:
    return M.apply(v)


def _exact_left_apply(M: QMatrix, y: Sequence[Fraction]) -> list:
    return M.T.apply(y)


# public API

def rank_kernel(M: QMatrix):
    """Exact ``(rank, kernel_basis)`` of ``M``.

    The kernel basis is the canonical one attached to the reduced row echelon
    form (one vector per non-pivot column), scaled to primitive integer
    vectors whose first nonzero entry is positive.
    """
    rows, cols = M.shape
    if rows == 0 or M.is_zero():
        return 0, [[Fraction(int(i == j)) for i in range(cols)] for j in range(cols)]
    if rows * cols <= EXACT_ENTRY_LIMIT:
        R, piv = rref_exact(M.to_fraction_rows(), cols)
        return len(piv), _kernel_from_rref(R, piv, cols)
    return _rank_kernel_modular(M)


def _int_vectors(vectors) -> list:
    return [[int(x) for x in _primitive(v)] for v in vectors]


def annihilates(M: QMatrix, vectors, left: bool = False) -> bool:
    """Exact test that ``M v = 0`` (or ``v M = 0``) for every vector."""
    if not vectors:
        return True
    target = M.T if left else M
    ints = _int_vectors(vectors)
    big = max((abs(x) for v in ints for x in v), default=0)
    if target.is_fast and big < 2 ** 40:
        K = np.array(ints, dtype=np.int64).T
        bound = abs(target._csr).astype(float) @ np.abs(K).astype(float)
        if bound.size == 0 or float(np.max(bound)) < 2.0 ** 62:
            return not np.any(target._csr @ K)
    rows = target._as_rows()
    for v in ints:
        for row in rows.values():
            if sum(x * v[j] for j, x in row.items()):
                return False
    return True


def _rank_kernel_modular(M: QMatrix):
    rows, cols = M.shape
    best = None
    residues: dict[int, list] = {}
    moduli: list[int] = []
    for p in PRIMES:
        R, piv = _rref_mod(M, p)
        key = tuple(piv.tolist())
        if best is not None and len(key) < len(best):
            continue  # unlucky prime
        if best is None or key != best:
            best = key
            residues = {}
            moduli = []
        pivset = set(key)
        free = [j for j in range(cols) if j not in pivset]
        for f in free:
            residues.setdefault(f, []).append(_kernel_vector_mod(R, piv, f, cols, p))
        moduli.append(p)
        basis = []
        for f in free:
            v = _lift(residues[f], moduli)
            if v is None:
                break
            basis.append(v)
        if len(basis) == len(free) and annihilates(M, basis):
            return len(best), [_primitive(v) for v in basis]
    raise CertificationError("kernel lifting did not stabilize over the prime list")


def rank(M: QMatrix) -> int:
    """Exact rank (certified)."""
    rows, cols = M.shape
    if rows == 0 or cols == 0 or M.is_zero():
        return 0
    if rows * cols <= EXACT_ENTRY_LIMIT:
        return len(rref_exact(M.to_fraction_rows(), cols)[1])
    # certify on the side with the smaller nullity
    if cols <= rows:
        return _rank_kernel_modular(M)[0]
    return _rank_kernel_modular(M.T)[0]


def kernel_mod_p(M: QMatrix, p: int) -> np.ndarray:
    """Kernel basis of ``M`` over F_p as columns of an int64 array."""
    rows, cols = M.shape
    if rows == 0:
        return np.eye(cols, dtype=np.int64)
    R, piv = _rref_mod(M, p)
    pivset = set(piv.tolist())
    free = [j for j in range(cols) if j not in pivset]
    K = np.zeros((cols, len(free)), dtype=np.int64)
    for k, f in enumerate(free):
        K[f, k] = 1
    if len(piv) and free:
        K[piv, :] = (-R[:len(piv)][:, free]) % p
    return K


def solve(M: QMatrix, rhs: Sequence) -> Optional[list]:
    """Exact solution of ``M x = rhs`` with free variables set to zero, or None.

    ``None`` is returned only with an exact certificate of inconsistency
    (see :func:`solve_certified`).
    """
    x, _ = solve_certified(M, rhs)
    return x


def solve_certified(M: QMatrix, rhs: Sequence):
    """``(x, None)`` if solvable, else ``(None, y)`` with ``y M = 0`` and ``y . rhs != 0``."""
    rows, cols = M.shape
    rhs = [Fraction(x) for x in rhs]
    if len(rhs) != rows:
        raise ValueError("right-hand side has the wrong length")
    if (rows + 1) * (cols + 1) <= EXACT_ENTRY_LIMIT:
        aug = [r + [b] for r, b in zip(M.to_fraction_rows(), rhs)]
        R, piv = rref_exact(aug, cols + 1)
        if piv and piv[-1] == cols:
            y = _left_certificate_exact(M, rhs)
            return None, y
        x = [Fraction(0)] * cols
        for i, pc in enumerate(piv):
            x[pc] = R[i][cols]
        return x, None
    return _solve_modular(M, rhs)


def _left_certificate_exact(M: QMatrix, rhs):
    # y spans the left kernel of M; pick one with nonzero pairing against rhs
    _, left = rank_kernel(M.T)
    for y in left:
        if sum(a * b for a, b in zip(y, rhs)) != 0:
            return y
    raise AssertionError("inconsistent system without a left certificate")


def _rhs_column(rhs, den_scale=1) -> QMatrix:
    return QMatrix.from_entries(len(rhs), 1, {(i, 0): x for i, x in enumerate(rhs) if x})


def _solve_modular(M: QMatrix, rhs):
    rows, cols = M.shape
    from .qmatrix import qblock
    aug = qblock([[M, _rhs_column(rhs)]], [rows], [cols, 1])
    res: list = []
    mods: list = []
    last_piv = None
    for p in PRIMES:
        R, piv = _rref_mod(aug, p)
        key = tuple(piv.tolist())
        if last_piv is not None and key != last_piv:
            if len(key) < len(last_piv):
                continue
            res, mods = [], []
        last_piv = key
        if key and key[-1] == cols:
            # inconsistent mod p; look for an exact left certificate
            At, pivt = _rref_mod(M, p, transpose=True)
            pivset = set(pivt.tolist())
            b_mod = np.array([int((x.numerator * pow(x.denominator, -1, p)) % p) for x in rhs],
                             dtype=object)
            for f in range(rows):
                if f in pivset:
                    continue
                yv = _kernel_vector_mod(At, pivt, f, rows, p)
                if int(np.dot(yv.astype(object), b_mod)) % p == 0:
                    continue
                y = _lift([yv], [p])
                if y is not None and not any(M.T.apply(y)) and sum(a * b for a, b in zip(y, rhs)):
                    return None, _primitive(y)
            continue
        xm = np.zeros(cols, dtype=np.int64)
        r = len(piv)
        for i in range(r):
            xm[piv[i]] = R[i, cols]
        res.append(xm)
        mods.append(p)
        x = _lift(res, mods)
        if x is not None and M.apply(x) == rhs:
            return x, None
    raise CertificationError("solve did not certify over the prime list")


# homology of a three-term complex

@dataclass
class HomologyData:
    """Homology at the middle of ``X_in --d_in--> X --d_out--> X_out``.

    ``cycles`` are exact vectors with ``d_out z = 0``; ``cocycles`` exact
    covectors with ``psi d_in = 0``; their pairing matrix is nonsingular, so
    both sets are bases of homology and cohomology respectively.
    """

    dim: int
    rank_in: int
    rank_out: int
    cycles: list = field(default_factory=list)
    cocycles: list = field(default_factory=list)


def homology(d_in: Optional[QMatrix], d_out: Optional[QMatrix], n: int, with_reps: bool = True) -> HomologyData:
    """Certified homology of a three-term complex at a space of dimension ``n``."""
    if d_in is not None and d_in.shape[0] != n:
        raise ValueError("d_in target does not match")
    if d_out is not None and d_out.shape[1] != n:
        raise ValueError("d_out source does not match")
    if n == 0:
        return HomologyData(0, 0, 0)
    if d_in is None or d_in.shape[1] == 0:
        d_in = QMatrix.zeros(n, 0)
    if d_out is None or d_out.shape[0] == 0:
        d_out = QMatrix.zeros(0, n)
    last_err = None
    for p in PRIMES:
        try:
            return _homology_at_prime(d_in, d_out, n, p, with_reps)
        except _Unlucky as e:
            last_err = e
    raise CertificationError(f"homology certification failed: {last_err}")


class _Unlucky(Exception):
    pass


def _left_kernel_mod(d_in: QMatrix, n: int, p: int):
    """Covectors psi (rows) with psi d_in = 0 mod p."""
    if d_in.shape[1] == 0 or d_in.is_zero():
        return np.eye(n, dtype=np.int64), 0
    K = kernel_mod_p(d_in.T, p)
    return K.T.copy(), n - K.shape[1]


def _homology_at_prime(d_in, d_out, n, p, with_reps):
    if d_out.shape[0] == 0 or d_out.is_zero():
        Z = np.eye(n, dtype=np.int64)
        r_out = 0
    else:
        Z = kernel_mod_p(d_out, p)
        r_out = n - Z.shape[1]
    Psi, r_in = _left_kernel_mod(d_in, n, p)
    h = n - r_out - r_in
    if h < 0:
        raise _Unlucky("negative homology")
    if h == 0:
        # r_Q >= r_p for both maps and r_Q(out) + r_Q(in) <= n
        return HomologyData(0, r_in, r_out)
    # pairing matrix psi_i(z_j) mod p; choose a nonsingular h x h minor
    P = matmul_mod(Psi, Z, p)
    Pc = P.copy()
    col_piv = kernels.rref_mod_p(Pc, p)
    if len(col_piv) != h:
        raise _Unlucky("pairing rank mismatch")
    Pt = np.ascontiguousarray(P[:, col_piv].T)
    row_piv = kernels.rref_mod_p(Pt, p)
    z_cols = [Z[:, j] for j in col_piv.tolist()]
    psi_rows = [Psi[i, :] for i in row_piv.tolist()]
    cycles = [_lift_verified(z, p, lambda v: not any(d_out.apply(v))) for z in z_cols]
    cocycles = [_lift_verified(y, p, lambda v: not any(d_in.T.apply(v))) for y in psi_rows]
    if any(v is None for v in cycles) or any(v is None for v in cocycles):
        raise _Unlucky("representative lifting failed")
    pairing = [[sum(a * b for a, b in zip(y, z) if a and b) for z in cycles] for y in cocycles]
    if len(rref_exact(pairing, h)[1]) != h:
        raise _Unlucky("exact pairing singular")
    return HomologyData(h, r_in, r_out,
                        [_primitive(v) for v in cycles] if with_reps else [],
                        [_primitive(v) for v in cocycles] if with_reps else [])


def _lift_verified(vec_mod: np.ndarray, p: int, check) -> Optional[list]:
    # single-prime reconstruction; a failure makes the caller retry at the next prime
    v = _lift([np.ascontiguousarray(vec_mod, dtype=np.int64)], [p])
    if v is not None and check(v):
        return v
    return None
