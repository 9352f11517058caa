# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: Gauss-Jordan elimination over F_p and batched
rational reconstruction.  Signatures match :mod:`cyclo._kernels_py`."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, uint64_t
from libc.stdlib cimport malloc, free

cnp.import_array()

IMPLEMENTATION = "cython"


cdef inline int64_t _inv_mod(int64_t a, int64_t p) nogil:
    cdef int64_t t = 0, newt = 1, r = p, newr = a, q, tmp
    while newr != 0:
        q = r // newr
        tmp = t - q * newt
        t = newt
        newt = tmp
        tmp = r - q * newr
        r = newr
        newr = tmp
    if t < 0:
        t += p
    return t


def rref_mod_p(cnp.int64_t[:, ::1] A, int64_t p):
    """In-place reduced row echelon form of ``A`` over F_p.

    Entries must already lie in ``[0, p)`` and ``p < 2**31``.  Returns the
    pivot column indices as an int64 array; the rank is its length.
    """
    cdef Py_ssize_t m = A.shape[0], n = A.shape[1]
    cdef Py_ssize_t row = 0, col, i, j, k, piv, nnz
    cdef int64_t inv, f, t, v
    cdef Py_ssize_t *support = <Py_ssize_t *> malloc((n + 1) * sizeof(Py_ssize_t))
    pivots = []
    if support == NULL:
        raise MemoryError()
    try:
        with nogil:
            for col in range(n):
                if row >= m:
                    break
                piv = -1
                for i in range(row, m):
                    if A[i, col] != 0:
                        piv = i
                        break
                if piv < 0:
                    continue
                if piv != row:
                    for j in range(col, n):
                        t = A[piv, j]
                        A[piv, j] = A[row, j]
                        A[row, j] = t
                inv = _inv_mod(A[row, col], p)
                nnz = 0
                for j in range(col, n):
                    v = A[row, j]
                    if v != 0:
                        v = <int64_t> ((<uint64_t> v * <uint64_t> inv) % <uint64_t> p)
                        A[row, j] = v
                        support[nnz] = j
                        nnz += 1
                for i in range(m):
                    if i == row:
                        continue
                    f = A[i, col]
                    if f == 0:
                        continue
                    for k in range(nnz):
                        j = support[k]
                        t = <int64_t> ((<uint64_t> f * <uint64_t> A[row, j]) % <uint64_t> p)
                        v = A[i, j] - t
                        if v < 0:
                            v += p
                        A[i, j] = v
                with gil:
                    pivots.append(col)
                row += 1
    finally:
        free(support)
    return np.array(pivots, dtype=np.int64)


def rank_mod_p(cnp.int64_t[:, ::1] A, int64_t p):
    """Rank over F_p (destroys ``A``)."""
    return len(rref_mod_p(A, p))


def ratrecon_array(cnp.int64_t[::1] a, int64_t p, int64_t bound):
    """Rational reconstruction of each residue with |num|, den <= bound.

    Returns ``(num, den, ok)`` arrays; ``ok[i] == 0`` marks a failure.
    """
    cdef Py_ssize_t n = a.shape[0], i
    cdef int64_t r0, r1, s0, s1, q, tmp
    num = np.zeros(n, dtype=np.int64)
    den = np.ones(n, dtype=np.int64)
    ok = np.ones(n, dtype=np.int8)
    cdef cnp.int64_t[::1] nv = num
    cdef cnp.int64_t[::1] dv = den
    cdef cnp.int8_t[::1] okv = ok
    with nogil:
        for i in range(n):
            r0 = p
            r1 = a[i] % p
            if r1 < 0:
                r1 += p
            s0 = 0
            s1 = 1
            while r1 > bound:
                q = r0 // r1
                tmp = r0 - q * r1
                r0 = r1
                r1 = tmp
                tmp = s0 - q * s1
                s0 = s1
                s1 = tmp
            if s1 == 0 or (s1 if s1 > 0 else -s1) > bound:
                okv[i] = 0
                continue
            if s1 < 0:
                s1 = -s1
                r1 = -r1
            nv[i] = r1
            dv[i] = s1
    return num, den, ok
