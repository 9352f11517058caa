"""Universal cobounding cochains, the contraction alpha and the finite retract.

If ``phi: A^n -> Omega^{n+1}A`` cobounds the universal cocycle
``(a_1, ..., a_{n+1}) -> da_1 ... da_{n+1}``, then

    alpha(a_0 da_1 ... da_k) = a_0 phi(a_1, ..., a_n) da_{n+1} ... da_k

contracts the Hochschild complex in degrees ``k >= n+1``.  On the cochain
side this cuts the periodic complex down to the finite complex

    even = C^0 + C^2 + ... + C^{2N-2} + ker(b: C^{2N} -> C^{2N+1})
    odd  = C^1 + C^3 + ... + C^{2N-1}

with inclusion ``I`` and a retraction ``R`` obtained from the perturbation
lemma (``b`` is the unperturbed differential, ``B`` the perturbation).
Noncommutative forms are identified with chains, ``Omega^k A = C_k(A)``.

Every construction runs either exactly (QMatrix) or in floats (numpy); the
exact path certifies identities, the float path drives transport.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import factorial
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .algebra import FiniteAlgebra
from .chains import chain_space_dim, decode, encode
from .deformation import (DeformationFamily, _b_poly, _characters, characters_along, fiber,
                          gm_vertical)
from .exactnum import linalg
from .exactnum.poly import format_rational
from .exactnum.qmatrix import QMatrix, qblock
from .operators import _cached, connes_B, hochschild_b

GRID_JUMP_BOUND = 10.0
FLOAT_TOL = 1e-9


class RetractError(ValueError):
    pass


class HomotopyIdentityFailed(RetractError):
    pass


class RankError(RetractError):
    pass


class SolvabilityLost(RetractError):
    def __init__(self, u):
        self.u = Fraction(u)
        super().__init__(f"SolvabilityLost: delta phi = d^(n+1) has no solution at t = {format_rational(self.u)}")


class GridDiscontinuity(RetractError):
    pass


@dataclass(frozen=True)
class Unsolvable:
    """No cobounding cochain of order ``n``; ``certificate`` is ``y`` with ``y M = 0``, ``y . rhs != 0``."""

    n: int
    certificate: tuple

    def to_json(self) -> dict:
        return {"status": "unsolvable", "n": self.n,
                "certificate_support": sum(1 for x in self.certificate if x)}


@dataclass(frozen=True)
class NotFound:
    n_max: int

    def __str__(self):
        return f"NotFound({self.n_max})"


@dataclass(frozen=True)
class CoboundingCochain:
    """``phi`` as a matrix: column ``j`` (a flattened ``A^n`` index) holds ``phi(a_j)`` in ``C_{n+1}``."""

    algebra: FiniteAlgebra
    n: int
    table: QMatrix

    def to_json(self) -> dict:
        return {"n": self.n, "shape": list(self.table.shape),
                "entries": [[i, j, format_rational(v)] for (i, j), v in sorted(self.table.entries().items())]}


# the bimodule Omega A

def _plus_table(A: FiniteAlgebra, exact: bool = True) -> np.ndarray:
    """``P[a, b, c]``: coefficient of ``c`` in ``a b`` inside ``A_+`` (index ``d`` is ``e``)."""
    d = A.dim
    P = np.zeros((d + 1, d + 1, d + 1), dtype=object if exact else float)
    if not exact:
        P[:d, :d, :d] = np.array([[[float(x) for x in col] for col in row] for row in A.structure])
    else:
        P[...] = Fraction(0)
        for i in range(d):
            for j in range(d):
                for k in range(d):
                    P[i, j, k] = A.structure[i][j][k]
    for a in range(d + 1):
        P[d, a, a] = 1
        P[a, d, a] = 1
    return P


def _omega_actions(A: FiniteAlgebra):
    """Left and right actions of basis elements of ``A`` on basis forms (tuples)."""
    d = A.dim
    P = _plus_table(A)

    def left(a: int, form: tuple) -> dict:
        return {(c,) + form[1:]: P[a, form[0], c] for c in range(d) if P[a, form[0], c]}

    @lru_cache(maxsize=None)
    def right(form: tuple, a: int) -> tuple:
        # (omega' da_n) a = omega' d(a_n a) - (omega' a_n) da
        if len(form) == 1:
            return tuple((( c,), P[form[0], a, c]) for c in range(d) if P[form[0], a, c])
        out: dict = {}
        head, an = form[:-1], form[-1]
        for c in range(d):
            v = A.structure[an][a][c]
            if v:
                out[head + (c,)] = out.get(head + (c,), 0) + v
        for f, v in right(head, an):
            key = f + (a,)
            out[key] = out.get(key, 0) - v
        return tuple((k, v) for k, v in out.items() if v)

    return left, (lambda form, a: dict(right(form, a)))


def _plain_index(d: int, multi: Sequence[int]) -> int:
    j = 0
    for a in multi:
        j = j * d + a
    return j


def _plain_multis(d: int, n: int):
    return np.array(np.unravel_index(np.arange(d ** n), (d,) * n)).T if n else np.zeros((1, 0), dtype=int)


def coboundary_system(A: FiniteAlgebra, n: int) -> tuple:
    """``(M, rhs)`` for ``delta phi = d^(n+1)`` with ``phi`` flattened as ``j * dim(Omega^{n+1}) + r``."""
    if n < 0:
        raise RetractError("n must be non-negative")

    def build():
        d = A.dim
        dom = chain_space_dim(d, n + 1)
        left, right = _omega_actions(A)
        forms = [tuple(int(x) for x in decode(d, n + 1, r)) for r in range(dom)]
        entries: dict = {}

        def add(row, col, v):
            entries[(row, col)] = entries.get((row, col), 0) + v
        sign_right = (-1) ** (n + 1)
        for J in _plain_multis(d, n + 1):
            J = tuple(int(x) for x in J)
            jJ = _plain_index(d, J)
            base = jJ * dom
            j_left = _plain_index(d, J[1:])
            j_right = _plain_index(d, J[:-1])
            for r, form in enumerate(forms):
                for f, v in left(J[0], form).items():
                    add(base + encode(d, f), j_left * dom + r, v)
                for f, v in right(form, J[-1]).items():
                    add(base + encode(d, f), j_right * dom + r, sign_right * v)
            for pos in range(n):
                prod = A.structure[J[pos]][J[pos + 1]]
                for k in range(d):
                    if prod[k]:
                        col = _plain_index(d, J[:pos] + (k,) + J[pos + 2:])
                        v = (-1) ** (pos + 1) * prod[k]
                        for r in range(dom):
                            add(base + r, col * dom + r, v)
        rows, cols = d ** (n + 1) * dom, d ** n * dom
        M = QMatrix.from_entries(rows, cols, {k: v for k, v in entries.items() if v})
        rhs = [Fraction(0)] * rows
        for J in _plain_multis(d, n + 1):
            J = tuple(int(x) for x in J)
            rhs[_plain_index(d, J) * dom + encode(d, (d,) + J)] = Fraction(1)
        return M, rhs
    return _cached(("coboundary_system", A.key, n), build)


def _phi_from_vector(A: FiniteAlgebra, n: int, x) -> QMatrix:
    dom = chain_space_dim(A.dim, n + 1)
    ent = {}
    for idx, v in enumerate(x):
        if v:
            j, r = divmod(idx, dom)
            ent[(r, j)] = Fraction(v)
    return QMatrix.from_entries(dom, A.dim ** n, ent)


def solve_universal_coboundary(A: FiniteAlgebra, n: int, minimal_norm: bool = False):
    """Exact ``phi`` with ``delta phi = d^(n+1)``, or :class:`Unsolvable` with a left certificate.

    The default solution sets every free variable of the reduced echelon form
    to zero, so it is supported on pivot variables in the fixed order.
    ``minimal_norm`` instead returns the least-squares-minimal solution.
    """
    M, rhs = coboundary_system(A, n)
    x, cert = linalg.solve_certified(M, rhs)
    if x is None:
        return Unsolvable(n, tuple(cert))
    if minimal_norm:
        y = linalg.solve(M @ M.T, rhs)
        x = M.T.apply(y)
    phi = CoboundingCochain(A, n, _phi_from_vector(A, n, x))
    check = M.apply([phi.table[r, j] for j in range(A.dim ** n)
                     for r in range(phi.table.shape[0])])
    if check != rhs:
        raise RetractError("cobounding cochain failed its own equation")
    return phi


def bidimension_upper(A: FiniteAlgebra, n_max: int):
    """Smallest ``n <= n_max`` admitting a cobounding cochain, else ``NotFound(n_max)``."""
    if n_max < 0:
        raise RetractError("n_max must be non-negative")
    for n in range(n_max + 1):
        if isinstance(solve_universal_coboundary(A, n), CoboundingCochain):
            return n
    return NotFound(n_max)


# the contraction alpha

def _alpha_core(P: np.ndarray, Phi: np.ndarray, d: int, n: int) -> np.ndarray:
    """Dense ``(c, rest) x (a0, j)`` block; ``Phi[j, b0, rest]`` is phi of the ``j``-th ``n``-tuple."""
    T = np.einsum("abc,jbr->craj", P, Phi)
    return T.reshape((d + 1) * d ** (n + 1), (d + 1) * d ** n)


def _alpha_matrix(core: np.ndarray, d: int, n: int, k: int, exact: bool):
    if k < n:
        raise RetractError(f"alpha is defined on degrees k >= n = {n}")
    tail = d ** (k - n)
    if k == 0:
        core = core[:, :d]
    if not exact:
        return sp.kron(sp.csr_matrix(core.astype(float)), sp.identity(tail, format="csr"), format="csr")
    rows, cols = np.nonzero(core != 0)
    ent = {}
    for r, c in zip(rows, cols):
        v = core[r, c]
        for t in range(tail):
            ent[(int(r) * tail + t, int(c) * tail + t)] = v
    return QMatrix.from_entries(core.shape[0] * tail, core.shape[1] * tail, ent)


def contraction_alpha(A: FiniteAlgebra, phi: CoboundingCochain, k: int) -> QMatrix:
    """Matrix of ``alpha: C_k -> C_{k+1}`` (exact)."""
    d, n = A.dim, phi.n
    Phi = np.empty((d ** n, d + 1, d ** (n + 1)), dtype=object)
    dense = phi.table.to_fraction_rows()
    for j in range(d ** n):
        for r in range(chain_space_dim(d, n + 1)):
            Phi[j].flat[r] = dense[r][j]
    return _alpha_matrix(_alpha_core(_plus_table(A), Phi, d, n), d, n, k, True)


def check_contraction(A: FiniteAlgebra, phi: CoboundingCochain, k_max: int) -> list:
    """Degrees ``n+1..k_max`` on which ``b alpha + alpha b = id``; raises on the first failure."""
    done = []
    for k in range(phi.n + 1, k_max + 1):
        lhs = (hochschild_b(A, k + 1).matrix @ contraction_alpha(A, phi, k)
               + contraction_alpha(A, phi, k - 1) @ hochschild_b(A, k).matrix)
        if lhs != QMatrix.identity(chain_space_dim(A, k)):
            raise HomotopyIdentityFailed(f"HomotopyIdentityFailed: b alpha + alpha b != id on C_{k}")
        done.append(k)
    return done


# the retract, generic over exact / float matrices

class _Exact:
    exact = True

    @staticmethod
    def eye(n):
        return QMatrix.identity(n)

    @staticmethod
    def block(blocks, rs, cs):
        return qblock(blocks, rs, cs)

    @staticmethod
    def is_zero(M):
        return M.is_zero()


class _Float:
    exact = False

    @staticmethod
    def eye(n):
        return np.eye(n)

    @staticmethod
    def block(blocks, rs, cs):
        out = np.zeros((sum(rs), sum(cs)))
        ro = np.concatenate([[0], np.cumsum(rs)])
        co = np.concatenate([[0], np.cumsum(cs)])
        for i, row in enumerate(blocks):
            for j, b in enumerate(row):
                if b is not None:
                    out[ro[i]:ro[i + 1], co[j]:co[j + 1]] = b.toarray() if sp.issparse(b) else b
        return out

    @staticmethod
    def is_zero(M):
        return float(np.max(np.abs(M), initial=0.0)) < FLOAT_TOL


@dataclass
class RetractComplex:
    """The finite complex ``C_0^per`` on the cochain side, with its maps.

    Vectors of the big space are cochains on degrees ``0..2N+2`` (the top
    two degrees only feed the retraction).  Retract coordinates list
    ``C^0, ..., C^{2N-1}`` and then coordinates on the kernel basis ``Z``.
    """

    N: int
    n: int
    sizes: list
    sizes0: list
    D: object
    D0: object
    I: object
    R: object
    Z: object
    exact: bool
    checks: dict = field(default_factory=dict)

    @property
    def parities0(self) -> np.ndarray:
        deg = [k for k in range(2 * self.N)] + [2 * self.N]
        return np.concatenate([[k % 2] * s for k, s in zip(deg, self.sizes0)]).astype(int)

    def homology_dims(self) -> tuple:
        par = self.parities0
        ev, od = np.flatnonzero(par == 0), np.flatnonzero(par == 1)
        if self.exact:
            D_eo = self.D0.rows_subset(list(od)).cols_subset(list(ev))
            D_oe = self.D0.rows_subset(list(ev)).cols_subset(list(od))
            r1, r2 = linalg.rank(D_eo), linalg.rank(D_oe)
        else:
            D0 = np.asarray(self.D0)
            r1 = np.linalg.matrix_rank(D0[np.ix_(od, ev)], tol=1e-8)
            r2 = np.linalg.matrix_rank(D0[np.ix_(ev, od)], tol=1e-8)
        return len(ev) - r1 - r2, len(od) - r1 - r2


def _degree_data(A: FiniteAlgebra, N: int, ops, alpha_core: np.ndarray, n: int, b_float=None):
    """Cochain-side blocks ``bT[k]: C^k -> C^{k+1}``, ``BT[k]: C^k -> C^{k-1}``, ``H[k]: C^k -> C^{k-1}``."""
    K = 2 * N + 2
    d = A.dim
    if ops.exact:
        bT = [hochschild_b(A, k + 1).matrix.T for k in range(K)]
        BT = [None] + [connes_B(A, k - 1).matrix.T for k in range(1, K + 1)]
    else:
        bT = [b_float[k + 1].T for k in range(K)]
        BT = [None] + [connes_B(A, k - 1).matrix.to_float_sparse().T.tocsr() for k in range(1, K + 1)]
    H = [None] * (K + 1)
    for k in range(2 * N + 1, K + 1):
        H[k] = _alpha_matrix(alpha_core, d, n, k - 1, ops.exact).T
    return bT, BT, H


def _assemble(ops, sizes, bT, BT, H):
    K = len(sizes) - 1
    L = len(sizes)
    bb = [[None] * L for _ in range(L)]
    BB = [[None] * L for _ in range(L)]
    HH = [[None] * L for _ in range(L)]
    for k in range(K):
        bb[k + 1][k] = bT[k]
    for k in range(1, K + 1):
        BB[k - 1][k] = BT[k]
        if H[k] is not None:
            HH[k - 1][k] = H[k]
    return ops.block(bb, sizes, sizes), ops.block(BB, sizes, sizes), ops.block(HH, sizes, sizes)


def _kernel_basis_exact(M: QMatrix) -> tuple:
    _, ker = linalg.rank_kernel(M)
    dim = M.shape[1]
    free = []
    for v in ker:
        nz = [i for i, x in enumerate(v) if x]
        free.append(nz[-1])
    Z = QMatrix.from_entries(dim, len(ker), {(i, j): x for j, v in enumerate(ker) for i, x in enumerate(v) if x})
    Pz = QMatrix.from_entries(len(ker), dim, {(j, f): 1 / ker[j][f] for j, f in enumerate(free)})
    if Pz @ Z != QMatrix.identity(len(ker)):
        raise RankError("RankError: kernel basis is not in echelon position")
    return Z, Pz, free


def _kernel_basis_float(M: np.ndarray, free: Sequence[int], Mdot: Optional[np.ndarray] = None) -> tuple:
    """Kernel basis normalized to the identity on ``free`` coordinates, and its ``t``-derivative."""
    dim = M.shape[1]
    piv = [i for i in range(dim) if i not in set(free)]
    MP, MF = M[:, piv], M[:, list(free)]
    XP, *_ = np.linalg.lstsq(MP, -MF, rcond=None)
    Z = np.zeros((dim, len(free)))
    Z[piv] = XP
    Z[list(free), np.arange(len(free))] = 1.0
    if float(np.max(np.abs(M @ Z), initial=0.0)) > 1e-8 * max(1.0, float(np.max(np.abs(M)))):
        raise RankError("RankError: kernel of b changed dimension on the grid")
    Zdot = np.zeros_like(Z)
    if Mdot is not None:
        rhs = -(Mdot[:, list(free)] + Mdot[:, piv] @ XP)
        XPd, *_ = np.linalg.lstsq(MP, rhs, rcond=None)
        Zdot[piv] = XPd
    Pz = np.zeros((len(free), dim))
    Pz[np.arange(len(free)), list(free)] = 1.0
    return Z, Pz, Zdot


def _retract_core(ops, N: int, n: int, sizes, bT, BT, H, Z, Pz, verify: bool) -> RetractComplex:
    K = 2 * N + 2
    top = 2 * N
    zdim = Z.shape[1]
    sizes0 = list(sizes[:top]) + [zdim]
    L, L0 = len(sizes), len(sizes0)
    Db, DB, Hm = _assemble(ops, sizes, bT, BT, H)
    # inclusion and truncation projection of the b-complex
    Ib = [[None] * L0 for _ in range(L)]
    Pb = [[None] * L for _ in range(L0)]
    for k in range(top):
        Ib[k][k] = ops.eye(sizes[k])
        Pb[k][k] = ops.eye(sizes[k])
    Ib[top][top] = Z
    Pb[top][top] = Pz @ (ops.eye(sizes[top]) - H[top + 1] @ bT[top])
    I, p = ops.block(Ib, sizes, sizes0), ops.block(Pb, sizes0, sizes)
    one = ops.eye(sum(sizes))
    E = one - I @ p
    # side conditions: h i = 0, p h = 0, h h = 0
    H1 = E @ Hm @ E
    H2 = H1 @ Db @ H1
    h = -H2
    # perturbation lemma with perturbation B: R = p + p (1 - B h)^{-1} B h
    Bh = DB @ h
    term = DB @ h
    acc = term
    while not ops.is_zero(term):
        term = Bh @ term
        acc = acc + term
    R = p + p @ acc
    D = Db + DB
    D0 = p @ D @ I
    rc = RetractComplex(N, n, list(sizes), sizes0, D, D0, I, R, Z, ops.exact)
    if verify:
        _verify(ops, rc, E, Db, H2, sizes, K)
    return rc


def _low_columns(ops, M, sizes, K):
    """Restrict columns to degrees ``<= K-1``; rows too when ``square``."""
    cut = int(sum(sizes[:K]))
    if ops.exact:
        return M.cols_subset(list(range(cut)))
    return M[:, :cut]


def _verify(ops, rc: RetractComplex, E, Db, H, sizes, K) -> None:
    c = rc.checks
    low = lambda M: _low_columns(ops, M, sizes, K)
    RI = rc.R @ rc.I
    c["R_I_identity"] = ops.is_zero(RI - ops.eye(RI.shape[0]))
    c["homotopy"] = ops.is_zero(low(E - Db @ H - H @ Db))
    c["I_chain_map"] = ops.is_zero(rc.D @ rc.I - rc.I @ rc.D0)
    c["R_chain_map"] = ops.is_zero(low(rc.R @ rc.D - rc.D0 @ rc.R))
    failed = [k for k, v in c.items() if not v]
    if failed:
        raise HomotopyIdentityFailed(f"HomotopyIdentityFailed: retract identities fail: {', '.join(failed)}")


def build_retract(A: FiniteAlgebra, phi: CoboundingCochain, N: int, verify: bool = True,
                  k_check: Optional[int] = None) -> RetractComplex:
    """Exact finite retract ``C_0^per`` with ``I``, ``R`` and ``D0``; identities are asserted."""
    n = phi.n
    if 2 * N <= n + 1:
        raise RetractError(f"need 2N > n + 1 (N={N}, n={n})")
    if k_check is None:
        k_check = 2 * N + 2
    check_contraction(A, phi, k_check)
    d = A.dim
    sizes = [chain_space_dim(d, k) for k in range(2 * N + 3)]
    Phi = np.empty((d ** n, d + 1, d ** (n + 1)), dtype=object)
    dense = phi.table.to_fraction_rows()
    for j in range(d ** n):
        for r in range(sizes[n + 1]):
            Phi[j].flat[r] = dense[r][j]
    core = _alpha_core(_plus_table(A), Phi, d, n)
    bT, BT, H = _degree_data(A, N, _Exact, core, n)
    Z, Pz, _ = _kernel_basis_exact(bT[2 * N])
    rc = _retract_core(_Exact, N, n, sizes, bT, BT, H, Z, Pz, verify)
    rc.checks["contraction_degrees"] = list(range(n + 1, k_check + 1))
    return rc


def homotopy_identity_on_homology(rc: RetractComplex) -> bool:
    """``IR`` induces the identity: ``(IR - 1) z`` is a coboundary for every cocycle ``z`` of low degree."""
    if not rc.exact:
        raise RetractError("exact retract required")
    K = len(rc.sizes) - 1
    cut = int(sum(rc.sizes[:K]))
    low = list(range(cut))
    D_low = rc.D.cols_subset(low)
    _, cocycles = linalg.rank_kernel(D_low)
    if not cocycles:
        return True
    total = int(sum(rc.sizes))
    Zc = QMatrix.from_entries(total, len(cocycles),
                              {(i, j): x for j, v in enumerate(cocycles) for i, x in enumerate(v) if x})
    diff = (rc.I @ rc.R - QMatrix.identity(total)) @ Zc
    D_src = rc.D.cols_subset(list(range(int(sum(rc.sizes[:K - 1])))))
    aug = qblock([[D_src, diff]], [total], [D_src.shape[1], diff.shape[1]])
    return linalg.rank(aug) == linalg.rank(D_src)


def hp_exact_from_retract(A: FiniteAlgebra, phi: CoboundingCochain, N: int) -> tuple:
    """Exact ``(even, odd)`` homology dimensions of the retract."""
    return build_retract(A, phi, N).homology_dims()


def cohomology_basis(rc: RetractComplex) -> list:
    """Even cocycles of the retract representing a basis of its even cohomology (exact)."""
    par = rc.parities0
    ev, od = list(np.flatnonzero(par == 0)), list(np.flatnonzero(par == 1))
    D_eo = rc.D0.rows_subset(od).cols_subset(ev)
    D_oe = rc.D0.rows_subset(ev).cols_subset(od)
    _, ker = linalg.rank_kernel(D_eo)
    chosen = []
    base = D_oe
    r = linalg.rank(base)
    for v in ker:
        col = QMatrix.from_entries(len(ev), 1, {(i, 0): x for i, x in enumerate(v) if x})
        trial = qblock([[base, col]], [len(ev)], [base.shape[1], 1])
        r2 = linalg.rank(trial)
        if r2 > r:
            base, r = trial, r2
            full = [Fraction(0)] * len(par)
            for i, x in zip(ev, v):
                full[i] = x
            chosen.append(full)
    return chosen


# transport on the retract

@dataclass
class RetractTransportReport:
    n: int
    N: int
    s: Fraction
    t: Fraction
    grid_step: Fraction
    solvable_grid: list
    hp: tuple
    initial: np.ndarray
    final: np.ndarray
    residuals: dict
    pairings_initial: Optional[np.ndarray] = None
    pairings_final: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        def arr(x):
            return None if x is None else [[float(v) for v in row] for row in np.atleast_2d(x)]
        return {"n": self.n, "N": self.N, "solvable_grid": [format_rational(u) for u in self.solvable_grid],
                "hp": list(self.hp),
                "transport": {"method": "rk4", "s": format_rational(self.s), "t": format_rational(self.t),
                              "grid_step": format_rational(self.grid_step),
                              "initial": arr(self.initial), "final": arr(self.final),
                              "pairings_initial": arr(self.pairings_initial),
                              "pairings_final": arr(self.pairings_final),
                              "residuals": {k: float(v) for k, v in sorted(self.residuals.items())},
                              "info": self.info}}


def _phi_float(A: FiniteAlgebra, n: int) -> np.ndarray:
    """Minimal-norm float solution; raises SolvabilityLost if the exact system is inconsistent."""
    M, rhs = coboundary_system(A, n)
    x, _ = linalg.solve_certified(M, rhs)
    if x is None:
        raise SolvabilityLost(0)
    Mf = M.to_float()
    xf, *_ = np.linalg.lstsq(Mf, np.array([float(v) for v in rhs]), rcond=None)
    return xf


def _chern_even_float(P: np.ndarray, d: int, top: int) -> list:
    """``ch P`` on degrees ``0..top`` as dense float vectors (same normalization as the chern module)."""
    Pp = np.concatenate([P, [0.0]])
    e = np.zeros(d + 1)
    e[d] = 1.0
    out = [P.copy()]
    for k in range(1, top + 1):
        if k % 2:
            out.append(np.zeros(chain_space_dim(d, k)))
            continue
        m = k // 2
        c = (-1) ** m * factorial(2 * m) / factorial(m)
        v1, v2 = Pp, e
        for _ in range(k):
            v1 = np.kron(v1, P)
            v2 = np.kron(v2, P)
        out.append(c * (v1 - 0.5 * v2))
    return out


class _FiberRetract:
    """Float retract data of one fiber (``R``, ``I``, ``dI/dt``, ``M^T``)."""

    def __init__(self, family, u: Fraction, n: int, N: int, free, phi: np.ndarray):
        A = fiber(family, u)
        d = A.dim
        K = 2 * N + 2
        self.sizes = [chain_space_dim(d, k) for k in range(K + 1)]
        Phi = phi.reshape(d ** n, d + 1, d ** (n + 1))
        core = _alpha_core(_plus_table(A, exact=False), Phi, d, n)
        b_float = [None] + [_b_poly(family, k).eval_float(float(u)).toarray() for k in range(1, K + 1)]
        bT, BT, H = _degree_data(A, N, _Float, core, n, b_float)
        H = [None if x is None else x.toarray() for x in H]
        BT = [None if x is None else x.toarray() for x in BT]
        bdot = _b_poly(family, 2 * N + 1).derivative().eval_float(float(u)).toarray().T
        Z, Pz, Zdot = _kernel_basis_float(bT[2 * N], free, bdot)
        self.rc = _retract_core(_Float, N, n, self.sizes, bT, BT, H, Z, Pz, verify=True)
        top = 2 * N
        sizes0 = self.rc.sizes0
        Idot = [[None] * len(sizes0) for _ in range(len(self.sizes))]
        Idot[top][top] = Zdot
        self.Idot = _Float.block(Idot, self.sizes, sizes0)
        self.MT = gm_vertical(family, K).at(float(u)).toarray().T
        self.generator = -self.rc.R @ (self.Idot + self.MT @ self.rc.I)


def _grid(s: Fraction, t: Fraction, g: Fraction) -> list:
    steps = (t - s) / g
    if steps.denominator != 1 or steps == 0:
        raise RetractError("grid_step must divide t - s into an even, positive number of steps")
    m = abs(int(steps))
    if m % 2:
        raise RetractError("the grid needs an even number of steps (rk4 uses midpoints)")
    sgn = 1 if t > s else -1
    return [s + sgn * k * g for k in range(m + 1)]


def _rk4_grid(gens: list, y0: np.ndarray, h: float, stride: int) -> np.ndarray:
    y = y0.copy()
    for k in range(0, len(gens) - 1, 2 * stride):
        f0, fm, f1 = gens[k], gens[k + stride], gens[k + 2 * stride]
        k1 = f0 @ y
        k2 = fm @ (y + 0.5 * h * k1)
        k3 = fm @ (y + 0.5 * h * k2)
        k4 = f1 @ (y + h * k3)
        y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def _idempotents_from_characters(chis: list, d: int) -> Optional[np.ndarray]:
    if len(chis) != d:
        return None
    X = np.array(chis)
    return np.linalg.inv(X)


def retract_transport(family: DeformationFamily, n: int, N: int, s, t, grid_step,
                      initial: Optional[np.ndarray] = None, jump_bound: float = GRID_JUMP_BOUND,
                      check_interval: bool = True) -> RetractTransportReport:
    """Parallel transport of even cocycles of ``C_0^per(A_u)`` for ``nabla~ = R (d/dt + M^T) I``.

    Coordinates follow ``c' = -R_u (dI_u/du + M_u^T I_u) c``.  By default the
    transported cocycles are the characters of ``A_s`` (placed in ``C^0``)
    or, without characters, an exact even cohomology basis at ``s``.
    """
    s, t, g = Fraction(s), Fraction(t), Fraction(grid_step)
    if check_interval:
        family.check_interval(s, t)
    grid = _grid(s, t, g)
    solvable = []
    for u in grid:
        A = fiber(family, u)
        M, rhs = coboundary_system(A, n)
        x, _ = linalg.solve_certified(M, rhs)
        if x is None:
            raise SolvabilityLost(u)
        solvable.append(u)
    A_s = fiber(family, s)
    phi_s = solve_universal_coboundary(A_s, n)
    rc_s = build_retract(A_s, phi_s, N)
    hp = rc_s.homology_dims()
    _, _, free = _kernel_basis_exact(hochschild_b(A_s, 2 * N + 1).matrix.T)
    gens, max_jump = [], 0.0
    prev = None
    for u in grid:
        phi = _phi_float(fiber(family, u), n)
        if prev is not None:
            jump = float(np.max(np.abs(phi - prev)))
            max_jump = max(max_jump, jump)
            if jump > jump_bound:
                raise GridDiscontinuity(f"GridDiscontinuity: phi jumps by {jump:.3g} near t = {format_rational(u)}")
        prev = phi
        gens.append(_FiberRetract(family, u, n, N, free, phi).generator)
    d = family.dim
    dim0 = int(sum(rc_s.sizes0))
    chis_s = _characters(A_s)
    if initial is None:
        if chis_s:
            initial = np.zeros((len(chis_s), dim0))
            for i, chi in enumerate(chis_s):
                initial[i, :d] = chi
        else:
            initial = np.array([[float(x) for x in v] for v in cohomology_basis(rc_s)])
    initial = np.atleast_2d(np.asarray(initial, dtype=float))
    h = float(grid[1] - grid[0]) * 2
    final = np.array([_rk4_grid(gens, y, h, 1) for y in initial])
    res = {"max_phi_jump": max_jump}
    if (len(grid) - 1) % 4 == 0:
        coarse = np.array([_rk4_grid(gens, y, 2 * h, 2) for y in initial])
        res["richardson_gap"] = float(np.max(np.abs(coarse - final)))
    rep = RetractTransportReport(n, N, s, t, g, solvable, hp, initial, final, res)
    _retract_pairings(family, rep, free)
    return rep


def _retract_pairings(family: DeformationFamily, rep: RetractTransportReport, free: list) -> None:
    """Pair transported cocycles with ``ch`` of the primitive idempotents (split commutative fibers)."""
    d = family.dim
    N = rep.N
    out = []
    for u, cocycles in ((rep.s, rep.initial), (rep.t, rep.final)):
        E = _idempotents_from_characters(_characters(fiber(family, u)), d)
        if E is None:
            return
        inc = _float_inclusion(family, u, N, free)
        chains = [np.concatenate(_chern_even_float(E[:, j], d, 2 * N)) for j in range(d)]
        out.append(np.array([[(inc @ x) @ ch for ch in chains] for x in cocycles]))
    order = _match_characters(family, rep)
    if order is None:
        return
    P0, P1 = out[0], out[1][:, order]
    rep.pairings_initial, rep.pairings_final = P0, P1
    rep.residuals["pairing_drift"] = float(np.max(np.abs(P1 - P0)))


def _float_inclusion(family: DeformationFamily, u, N: int, free: list) -> np.ndarray:
    bT = _b_poly(family, 2 * N + 1).eval_float(float(u)).toarray().T
    Z, _, _ = _kernel_basis_float(bT, free)
    sizes = [chain_space_dim(family.dim, k) for k in range(2 * N + 1)]
    sizes0 = sizes[:2 * N] + [Z.shape[1]]
    blocks = [[None] * len(sizes0) for _ in range(len(sizes))]
    for k in range(2 * N):
        blocks[k][k] = np.eye(sizes[k])
    blocks[2 * N][2 * N] = Z
    return _Float.block(blocks, sizes, sizes0)


def _match_characters(family, rep) -> Optional[list]:
    grid = [float(u) for u in _grid(rep.s, rep.t, rep.grid_step)]
    tracks = characters_along(family, grid)
    if not tracks:
        return None
    end = _characters(fiber(family, rep.t))
    order = []
    for tr in tracks:
        dists = [np.max(np.abs(c - tr[-1])) for c in end]
        order.append(int(np.argmin(dists)))
    start = _characters(fiber(family, rep.s))
    first = []
    for tr in tracks:
        dists = [np.max(np.abs(c - tr[0])) for c in start]
        first.append(int(np.argmin(dists)))
    # column j of P0 belongs to start character j; reorder end columns to match
    perm = [0] * len(order)
    for k, j in enumerate(first):
        perm[j] = order[k]
    return perm
