"""Hochschild, cyclic and periodic cyclic homology of finite-dimensional algebras.

Cyclic homology comes from the (b, B) total complexes

    Tot_m = C_m + C_{m-2} + ... ,   d = b + B,

where ``B`` leaving the top summand ``C_m`` is dropped (it would land in
``C_{m+1}``, outside ``Tot_{m-1}``).  The truncation window of half-width
``N`` has even part ``Tot_{2N}`` and odd part ``Tot_{2N-1}``; its homology
is ``(HC_{2N}, HC_{2N-1})``.  Forgetting the top summand is a chain map
``Tot_m -> Tot_{m-2}`` (the periodicity operator S).  Periodic cyclic
homology is read off from ranks of composites of S on homology; the lim^1
term of the inverse limit is ignored.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .algebra import FiniteAlgebra
from .chains import chain_space_dim
from .exactnum import linalg
from .exactnum.linalg import ResourceCapError
from .exactnum.qmatrix import QMatrix, qblock
from .operators import _cached, connes_B, hochschild_b

DEFAULT_MAX_BASIS = 200_000


def max_basis() -> int:
    env = os.environ.get("CYCLO_MAX_BASIS")
    return int(env) if env else DEFAULT_MAX_BASIS


def _check_cap(A: FiniteAlgebra, n: int) -> None:
    cap = max_basis()
    dim = chain_space_dim(A, n)
    if dim > cap:
        raise ResourceCapError(f"dim C_{n} = {dim} exceeds the basis cap {cap} (set CYCLO_MAX_BASIS)")


def tot_degrees(m: int) -> list:
    """Chain degrees making up ``Tot_m``, ascending (top summand last)."""
    if m < 0:
        return []
    return list(range(m % 2, m + 1, 2))


def tot_dim(A: FiniteAlgebra, m: int) -> int:
    return sum(chain_space_dim(A, n) for n in tot_degrees(m))


def total_differential(A: FiniteAlgebra, m: int) -> QMatrix:
    """``d = b + B: Tot_m -> Tot_{m-1}``."""
    def build():
        src = tot_degrees(m)
        tgt = tot_degrees(m - 1)
        blocks = [[None] * len(src) for _ in tgt]
        pos = {n: i for i, n in enumerate(tgt)}
        for j, n in enumerate(src):
            if n >= 1 and n - 1 in pos:
                blocks[pos[n - 1]][j] = hochschild_b(A, n).matrix
            if n + 1 in pos:
                blocks[pos[n + 1]][j] = connes_B(A, n).matrix
        return qblock(blocks, [chain_space_dim(A, n) for n in tgt],
                      [chain_space_dim(A, n) for n in src])
    if m <= 0:
        return QMatrix.zeros(tot_dim(A, m - 1), tot_dim(A, m))
    return _cached(("tot", A.key, m), build)


def projection(A: FiniteAlgebra, m: int, drop: int = 1) -> QMatrix:
    """Chain map ``Tot_m -> Tot_{m-2*drop}`` forgetting the top ``drop`` summands."""
    src = tot_degrees(m)
    keep = tot_degrees(m - 2 * drop)
    rows = sum(chain_space_dim(A, n) for n in keep)
    cols = sum(chain_space_dim(A, n) for n in src)
    idx = np.arange(rows, dtype=np.int64)
    return QMatrix.from_int_coo(rows, cols, idx, idx, np.ones(rows, dtype=np.int64))


@dataclass
class TruncationWindow:
    """The Z/2-graded window of half-width ``N``: even ``Tot_{2N}``, odd ``Tot_{2N-1}``."""

    algebra: FiniteAlgebra
    N: int

    def __post_init__(self):
        if self.N < 0:
            raise ValueError("window half-width must be non-negative")
        _check_cap(self.algebra, 2 * self.N + 1)

    @property
    def even_degrees(self) -> list:
        return tot_degrees(2 * self.N)

    @property
    def odd_degrees(self) -> list:
        return tot_degrees(2 * self.N - 1)

    @property
    def even_dim(self) -> int:
        return tot_dim(self.algebra, 2 * self.N)

    @property
    def odd_dim(self) -> int:
        return tot_dim(self.algebra, 2 * self.N - 1)

    def differential(self, m: int) -> QMatrix:
        return total_differential(self.algebra, m)

    def check_square_zero(self) -> bool:
        A = self.algebra
        for m in range(1, 2 * self.N + 2):
            if not (total_differential(A, m - 1) @ total_differential(A, m)).is_zero():
                return False
        return True

    def homology_at(self, m: int, with_reps: bool = True) -> linalg.HomologyData:
        """Homology of ``Tot_{m+1} -> Tot_m -> Tot_{m-1}``, i.e. ``HC_m``."""
        A = self.algebra
        if m < 0:
            return linalg.HomologyData(0, 0, 0)
        return _hc_data(A, m, with_reps)

    def dims(self) -> tuple:
        return (self.homology_at(2 * self.N, False).dim, self.homology_at(2 * self.N - 1, False).dim)


def _hc_data(A: FiniteAlgebra, m: int, with_reps: bool) -> linalg.HomologyData:
    def build():
        _check_cap(A, m + 1)
        return linalg.homology(total_differential(A, m + 1), total_differential(A, m),
                               tot_dim(A, m), with_reps=True)
    return _cached(("hc", A.key, m), build)


# public operations

def hh_dims(A: FiniteAlgebra, n_max: int) -> list:
    """``dim HH_n`` for ``0 <= n <= n_max``."""
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    _check_cap(A, n_max + 1)
    out = []
    for n in range(n_max + 1):
        d_in = hochschild_b(A, n + 1).matrix
        d_out = hochschild_b(A, n).matrix if n >= 1 else None
        out.append(linalg.homology(d_in, d_out, chain_space_dim(A, n), with_reps=False).dim)
    return out


def hc_dims(A: FiniteAlgebra, N: int) -> tuple:
    """Homology dimensions ``(HC_{2N}, HC_{2N-1})`` of the window of half-width ``N``."""
    return TruncationWindow(A, N).dims()


def s_rank(A: FiniteAlgebra, m: int, steps: int = 1) -> int:
    """Rank of ``S^steps: HC_m -> HC_{m - 2*steps}`` on homology."""
    if m - 2 * steps < 0:
        return 0
    src = _hc_data(A, m, True)
    tgt = _hc_data(A, m - 2 * steps, True)
    if src.dim == 0 or tgt.dim == 0:
        return 0
    f = projection(A, m, steps)
    images = [f.apply(z) for z in src.cycles]
    pairing = [[sum(a * b for a, b in zip(psi, w) if a and b) for w in images] for psi in tgt.cocycles]
    return len(linalg.rref_exact(pairing, len(images))[1])


@dataclass
class HomologyReport:
    hh: list = field(default_factory=list)
    hc: list = field(default_factory=list)          # [[even, odd]] for N = 0, 1, ...
    s_ranks: list = field(default_factory=list)     # [[N, even, odd]] for N >= window
    window: int = 1
    stabilized: bool = False
    hp_even: Optional[int] = None
    hp_odd: Optional[int] = None
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "hh": list(self.hh),
            "hc": [list(x) for x in self.hc],
            "s_ranks": [list(x) for x in self.s_ranks],
            "window": self.window,
            "hp": {"even": self.hp_even, "odd": self.hp_odd, "stabilized": self.stabilized},
            "notes": list(self.notes),
        }


def hp_dims(A: FiniteAlgebra, N_max: int, window: int = 1, hh_max: Optional[int] = None,
            stop_when_stable: bool = True) -> HomologyReport:
    """Periodic cyclic homology through ranks of composite S-maps.

    For each ``N`` with ``window <= N <= N_max`` the ranks of
    ``S^window: HC_{2N} -> HC_{2N-2w}`` and ``HC_{2N-1} -> HC_{2N-1-2w}`` are
    computed; the answer is declared stable once two consecutive stages
    agree in both parities.  If that never happens the report carries
    ``stabilized=False`` and the last ranks computed.
    """
    if not N_max >= window >= 1:
        raise ValueError("need N_max >= window >= 1")
    rep = HomologyReport(window=window)
    rep.notes.append("lim^1 contribution of the inverse limit is not computed")
    if hh_max is not None:
        rep.hh = hh_dims(A, hh_max)
    for N in range(0, N_max + 1):
        rep.hc.append(list(hc_dims(A, N)))
        if N < window:
            continue
        ev = s_rank(A, 2 * N, window)
        od = s_rank(A, 2 * N - 1, window)
        rep.s_ranks.append([N, ev, od])
        rep.hp_even, rep.hp_odd = ev, od
        if len(rep.s_ranks) >= 2 and rep.s_ranks[-1][1:] == rep.s_ranks[-2][1:]:
            rep.stabilized = True
            if stop_when_stable:
                break
        else:
            rep.stabilized = False
    return rep
