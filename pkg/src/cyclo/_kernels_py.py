"""Pure-Python/numpy fallback for :mod:`cyclo._kernels`.

Same signatures and results; used when the extension is not built or when
``CYCLO_PURE_PYTHON=1`` is set.
"""

import numpy as np

IMPLEMENTATION = "python"


def rref_mod_p(A: np.ndarray, p: int) -> np.ndarray:
    """In-place reduced row echelon form of ``A`` over F_p; returns pivot columns."""
    m, n = A.shape
    row = 0
    pivots = []
    for col in range(n):
        if row >= m:
            break
        nz = np.flatnonzero(A[row:, col])
        if nz.size == 0:
            continue
        piv = row + int(nz[0])
        if piv != row:
            A[[row, piv], col:] = A[[piv, row], col:]
        inv = pow(int(A[row, col]), -1, p)
        A[row, col:] = (A[row, col:] * inv) % p
        support = col + np.flatnonzero(A[row, col:])
        others = np.flatnonzero(A[:, col])
        others = others[others != row]
        if others.size:
            f = A[others, col][:, None]
            block = A[np.ix_(others, support)]
            A[np.ix_(others, support)] = (block - (f * A[row, support][None, :]) % p) % p
        pivots.append(col)
        row += 1
    return np.array(pivots, dtype=np.int64)


def rank_mod_p(A: np.ndarray, p: int) -> int:
    return len(rref_mod_p(A, p))


def ratrecon_array(a: np.ndarray, p: int, bound: int):
    n = len(a)
    num = np.zeros(n, dtype=np.int64)
    den = np.ones(n, dtype=np.int64)
    ok = np.ones(n, dtype=np.int8)
    for i, x in enumerate(a.tolist()):
        r0, r1 = p, x % p
        s0, s1 = 0, 1
        while r1 > bound:
            q = r0 // r1
            r0, r1 = r1, r0 - q * r1
            s0, s1 = s1, s0 - q * s1
        if s1 == 0 or abs(s1) > bound:
            ok[i] = 0
            continue
        if s1 < 0:
            s1, r1 = -s1, -r1
        num[i] = r1
        den[i] = s1
    return num, den, ok
