"""Slow, direct evaluations used as independent oracles in the tests.

Everything here works one elementary tensor at a time on dicts
``{multi-index: Fraction}``, with ``A_+`` products spelled out by hand, so
it shares no code with the batched operator assembly.
"""

from collections import defaultdict
from fractions import Fraction
from itertools import product

from cyclo.chains import all_multi_indices, chain_space_dim, encode


def plus_mul(A, i, j):
    """Product of basis elements of ``A_+`` (index ``d`` is ``e``)."""
    d = A.dim
    if i == d:
        return {j: Fraction(1)}
    if j == d:
        return {i: Fraction(1)}
    return {k: c for k, c in enumerate(A.structure[i][j]) if c}


def evaluate(D, args):
    """``D`` on basis arguments, zero as soon as one argument is ``e``."""
    d = D.algebra.dim
    if any(a == d for a in args):
        return {}
    vecs = [tuple(int(a == i) for i in range(d)) for a in args]
    return {k: c for k, c in enumerate(D.evaluate(*vecs)) if c}


def _add(out, multi, c):
    out[multi] += c


def b_tensor(A, multi):
    n = len(multi) - 1
    out = defaultdict(Fraction)
    for j in range(n):
        for k, c in plus_mul(A, multi[j], multi[j + 1]).items():
            _add(out, multi[:j] + (k,) + multi[j + 2:], (-1) ** j * c)
    for k, c in plus_mul(A, multi[n], multi[0]).items():
        _add(out, (k,) + multi[1:n], (-1) ** n * c)
    return out


def B_tensor(A, multi):
    d, n = A.dim, len(multi) - 1
    out = defaultdict(Fraction)
    if multi[0] == d:
        return out
    for j in range(n + 1):
        _add(out, (d,) + multi[j:] + multi[:j], Fraction((-1) ** (j * n)))
    return out


def L_tensor(D, multi):
    k, n = D.order, len(multi) - 1
    out = defaultdict(Fraction)
    if k > n + 1:
        return out
    for i in range(n - k + 2):
        for o, c in evaluate(D, multi[i:i + k]).items():
            _add(out, multi[:i] + (o,) + multi[i + k:], (-1) ** (i * (k - 1)) * c)
    for i in range(1, k):
        rot = multi[n - i + 1:] + multi[:n - i + 1]
        for o, c in evaluate(D, rot[:k]).items():
            _add(out, (o,) + rot[k:], (-1) ** (i * n) * c)
    return out


def iota_tensor(D, multi):
    k, n = D.order, len(multi) - 1
    out = defaultdict(Fraction)
    if n < k:
        return out
    for o, c in evaluate(D, multi[1:k + 1]).items():
        for p, c2 in plus_mul(D.algebra, multi[0], o).items():
            _add(out, (p,) + multi[k + 1:], (-1) ** (k - 1) * c * c2)
    return out


def S_tensor(D, multi):
    A = D.algebra
    d, k, n = A.dim, D.order, len(multi) - 1
    out = defaultdict(Fraction)
    if multi[0] == d:
        return out
    for i in range(1, n - k + 2):
        for j in range(0, n - i - k + 2):
            sign = (-1) ** (i * (k - 1) + j * (n - k + 1))
            for o, c in evaluate(D, multi[i:i + k]).items():
                t = multi[:i] + (o,) + multi[i + k:]
                rot = t[len(t) - j:] + t[:len(t) - j] if j else t
                _add(out, (d,) + rot, sign * c)
    return out


def operator_entries(A, tensor_map, n, target, target_dim=None):
    """Sparse matrix entries ``{(row, col): value}`` of a tensor-level map ``C_n -> C_target``.

    ``target_dim`` is the dimension of the target algebra when it differs from ``A``.
    """
    d = A.dim
    dt = d if target_dim is None else target_dim
    entries = {}
    for col, multi in enumerate(all_multi_indices(d, n)):
        for out, c in tensor_map(multi).items():
            if c:
                assert len(out) == target + 1
                row = encode(dt, out)
                entries[(row, col)] = entries.get((row, col), Fraction(0)) + c
    return {key: v for key, v in entries.items() if v}


def delta_table(A, D):
    """``dD`` evaluated on every basis tuple, as ``{args: {k: coeff}}``."""
    k, d = D.order, A.dim
    out = {}
    for args in product(range(d), repeat=k + 1):
        acc = defaultdict(Fraction)
        for o, c in evaluate(D, args[:k]).items():
            for p, c2 in plus_mul(A, o, args[k]).items():
                acc[p] += c * c2
        for o, c in evaluate(D, args[1:]).items():
            for p, c2 in plus_mul(A, args[0], o).items():
                acc[p] += (-1) ** (k + 1) * c * c2
        for j in range(1, k + 1):
            for m, c in plus_mul(A, args[j - 1], args[j]).items():
                inner = args[:j - 1] + (m,) + args[j + 1:]
                for o, c2 in evaluate(D, inner).items():
                    acc[o] += (-1) ** (k - j + 1) * c * c2
        out[args] = {p: c for p, c in acc.items() if c}
    return out


def trace_tensor(A, N, multi):
    """``T((u_0 a_0) (x) ... (x) (u_n a_n)) = tr(u_0 ... u_n) a_0 (x) ... (x) a_n`` on basis tensors.

    Basis of ``M_N(A)`` is ``E_pq (x) a`` at ``(p*N + q)*d + a``; its adjoined
    unit (index ``N*N*d``) counts as ``id_N (x) e``.
    """
    d = A.dim
    big = N * N * d
    mats, letters = [], []
    for s, x in enumerate(multi):
        if x == big:
            mats.append(None)
            letters.append(d)
        else:
            pq, a = divmod(x, d)
            mats.append(divmod(pq, N))
            letters.append(a)
    # trace of the product of matrix units (None = identity)
    total = 0
    for start in range(N):
        cur = start
        ok = True
        for m in mats:
            if m is None:
                continue
            if m[0] != cur:
                ok = False
                break
            cur = m[1]
        if ok and cur == start:
            total += 1
    if len(multi) == 1 and letters[0] == d:
        return {}
    return {tuple(letters): Fraction(total)} if total else {}


def dims(A, n):
    return chain_space_dim(A, n)
