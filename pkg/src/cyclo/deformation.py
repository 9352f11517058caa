"""Polynomial one-parameter deformations and the Gauss-Manin connection.

A family is a fixed vector space with structure constants in ``Q[t]``.
Sections are coordinate vectors depending on ``t``; the connection on the
algebra is ``d/dt`` on coordinates, so

    E_t = delta(d/dt) = -mdot_t,      nabla_GM = d/dt - I_{E_t},

and parallel chains satisfy ``d omega/dt = I_{E_t} omega``.  ``I_E``
lowers degree by two (iota) or preserves it (S), so every window
``C_0 + ... + C_{2N}`` is invariant and the transport ODE on it is exact.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, factorial
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .algebra import AlgebraError, FiniteAlgebra
from .chains import AValuedCochain, ChainVector, DualFunctional, chain_space_dim
from .exactnum import linalg
from .exactnum.poly import PolyQ, as_fraction, format_poly, format_rational, parse_scalar
from .exactnum.qmatrix import PolyMatrix, QMatrix, poly_block, qblock
from .operators import (_cached, cochain_delta, connes_B, contraction_iota, cyclic_S,
                        hochschild_b, lie_derivative)

DEFAULT_STEP = 1e-3
DYSON_TOL = 1e-14
DYSON_MAX_ORDER = 25
# sample points tried by the triviality obstruction, in order
OBSTRUCTION_SAMPLES = [Fraction(x) for x in (0, 1, -1, 2, -2)] + [Fraction(1, 2), Fraction(-1, 2), Fraction(3)]


class DeformationError(ValueError):
    pass


class FamilyAssociativityError(AlgebraError):
    def __init__(self, i, j, k, residual, names=None):
        self.triple = (i, j, k)
        self.residual = residual
        nm = names or [f"e{x}" for x in range(len(residual))]
        text = " + ".join(f"({format_poly(p)})*{nm[l]}" for l, p in enumerate(residual) if p)
        super().__init__(f"AssociativityError: ({nm[i]}*{nm[j]})*{nm[k]} - {nm[i]}*({nm[j]}*{nm[k]}) = {text}")


class FiltrationError(DeformationError):
    pass


class CocycleError(DeformationError):
    pass


class SafeIntervalViolation(DeformationError):
    pass


class WindowOverflow(DeformationError):
    pass


class DysonNotConverged(DeformationError):
    pass


class PreconditionFailed(DeformationError):
    pass


# families

def _poly_structure(structure, d: int) -> tuple:
    if len(structure) != d or any(len(r) != d or any(len(c) != d for c in r) for r in structure):
        raise DeformationError("structure constants must form a d x d x d tensor")
    return tuple(tuple(tuple(PolyQ.coerce(x) if not isinstance(x, (int, Fraction)) else PolyQ.const(x)
                             for x in c) for c in r) for r in structure)


def _poly_product(c, u: Sequence[PolyQ], v: Sequence[PolyQ]) -> list:
    d = len(u)
    out = [PolyQ()] * d
    for i, ui in enumerate(u):
        if not ui:
            continue
        for j, vj in enumerate(v):
            if not vj:
                continue
            w = ui * vj
            for k in range(d):
                if c[i][j][k]:
                    out[k] = out[k] + w * c[i][j][k]
    return out


@dataclass(frozen=True)
class DeformationFamily:
    """Structure constants ``c[i][j][k] in Q[t]`` (coefficient of ``e_k`` in ``e_i e_j``)."""

    dim: int
    structure: tuple
    unit: Optional[tuple] = None
    basis_names: tuple = ()
    label: str = ""
    safe_interval: Optional[tuple] = None

    @property
    def degree(self) -> int:
        return max((p.degree for r in self.structure for c in r for p in c), default=0)

    def basis_vector(self, j: int) -> list:
        return [PolyQ.const(int(k == j)) for k in range(self.dim)]

    def multiply(self, u, v) -> list:
        return _poly_product(self.structure, [PolyQ.coerce(x) for x in u], [PolyQ.coerce(x) for x in v])

    @property
    def key(self) -> tuple:
        return (self.dim, self.structure, self.unit)

    def check_interval(self, s, t) -> None:
        """Raise SafeIntervalViolation unless ``[s, t]`` lies in the declared safe interval."""
        lo, hi = min(s, t), max(s, t)
        if self.safe_interval is None:
            return
        a, b = self.safe_interval
        if lo < a or hi > b:
            raise SafeIntervalViolation(
                f"SafeIntervalViolation: [{lo}, {hi}] is not inside the safe interval "
                f"[{format_rational(a)}, {format_rational(b)}]")


def make_family(structure_poly, unit=None, basis_names=None, label: str = "",
                safe_interval=None) -> DeformationFamily:
    """Build a family and verify associativity and the unit laws as identities in ``Q[t]``."""
    d = len(structure_poly)
    c = _poly_structure(structure_poly, d)
    names = tuple(basis_names) if basis_names else tuple(f"e{i}" for i in range(d))
    if len(names) != d:
        raise DeformationError("need one basis name per basis vector")
    fam = DeformationFamily(d, c, None if unit is None else tuple(as_fraction(u) for u in unit),
                            names, label,
                            None if safe_interval is None else tuple(as_fraction(x) for x in safe_interval))
    if fam.unit is not None and len(fam.unit) != d:
        raise DeformationError("unit has the wrong length")
    for i, j, k in itertools.product(range(d), repeat=3):
        ei, ej, ek = fam.basis_vector(i), fam.basis_vector(j), fam.basis_vector(k)
        lhs = fam.multiply(c[i][j], ek)
        rhs = fam.multiply(ei, c[j][k])
        res = [a - b for a, b in zip(lhs, rhs)]
        if any(res):
            raise FamilyAssociativityError(i, j, k, res, names)
    if fam.unit is not None:
        one = [PolyQ.const(x) for x in fam.unit]
        for j in range(d):
            ej = fam.basis_vector(j)
            if fam.multiply(one, ej) != ej or fam.multiply(ej, one) != ej:
                raise DeformationError(f"unit law fails for basis element {names[j]} as a polynomial identity")
    return fam


def constant_family(A: FiniteAlgebra, label: str = "constant") -> DeformationFamily:
    return make_family(A.structure, A.unit, A.basis_names, label)


def x_squared_t_family() -> DeformationFamily:
    """``A_t = span{1, x}`` with ``x^2 = t 1``; safe interval ``[1/2, 4]``."""
    t = PolyQ.t()
    one, zero = PolyQ.const(1), PolyQ()
    c = [[[one, zero], [zero, one]],
         [[zero, one], [t, zero]]]
    return make_family(c, (1, 0), ("1", "x"), "x^2=t", (Fraction(1, 2), Fraction(4)))


def fiber(family: DeformationFamily, t0) -> FiniteAlgebra:
    """The algebra ``A_{t0}``."""
    t0 = as_fraction(t0)

    def build():
        c = [[[p.eval_at(t0) for p in col] for col in row] for row in family.structure]
        return FiniteAlgebra(c, family.basis_names, family.unit, _validated=True)
    return _cached(("fiber", family.key, t0), build)


def velocity(family: DeformationFamily) -> tuple:
    """``mdot_t`` as a nested tuple of PolyQ; checks ``delta_t mdot_t = 0`` polynomially."""
    md = tuple(tuple(tuple(p.derivative() for p in col) for col in row) for row in family.structure)
    deg = family.degree
    # delta_t mdot_t has degree <= 2 deg - 1; it vanishes iff it vanishes at 2 deg points
    for t0 in range(max(2 * deg, 1)):
        A = fiber(family, t0)
        D = velocity_at(family, t0)
        if not cochain_delta(A, D).is_zero():
            raise CocycleError(f"delta(mdot) != 0 at t = {t0}")
    return md


def velocity_at(family: DeformationFamily, t0) -> AValuedCochain:
    A = fiber(family, t0)
    d = family.dim
    t0 = as_fraction(t0)
    table = [[family.structure[i][j][k].derivative().eval_at(t0) for k in range(d)]
             for i in range(d) for j in range(d)]
    return AValuedCochain(A, 2, table)


def defect_cochain(family: DeformationFamily, t0) -> AValuedCochain:
    """``E_t = delta(d/dt) = -mdot_t`` on the fiber at ``t0``."""
    return velocity_at(family, t0).scale(-1)


def from_filtered(A: FiniteAlgebra, degrees: Sequence[int], label: str = "filtered") -> DeformationFamily:
    """Rees-type family ``m_t(a, b) = sum_k t^k pi^k(a, b)`` of a filtered algebra.

    ``degrees[i]`` is the filtration degree of basis vector ``i``; the
    component of ``e_i e_j`` along a vector of degree ``n + m - k`` gets the
    factor ``t^k``.  The unit must lie in degree 0 so that it stays a unit
    at ``t = 0``.
    """
    d = A.dim
    if len(degrees) != d or any(int(x) != x or x < 0 for x in degrees):
        raise FiltrationError("need one non-negative integer degree per basis vector")
    degrees = [int(x) for x in degrees]
    c = [[[PolyQ()] * d for _ in range(d)] for _ in range(d)]
    for i, j, k in itertools.product(range(d), repeat=3):
        a = A.structure[i][j][k]
        if not a:
            continue
        shift = degrees[i] + degrees[j] - degrees[k]
        if shift < 0:
            raise FiltrationError(
                f"FiltrationError: {A.basis_names[i]}*{A.basis_names[j]} has a component along "
                f"{A.basis_names[k]} of degree {degrees[k]} > {degrees[i] + degrees[j]}")
        c[i][j][k] = PolyQ([0] * shift + [a])
    if A.unit is not None and any(u and degrees[i] for i, u in enumerate(A.unit)):
        raise FiltrationError("FiltrationError: the unit must lie in filtration degree 0")
    try:
        return make_family(c, A.unit, A.basis_names, label)
    except AlgebraError as exc:
        raise FiltrationError(f"FiltrationError: {exc}") from exc


# exact polynomial operators by interpolation

def _lagrange(points: Sequence[Fraction]) -> list:
    out = []
    for i, xi in enumerate(points):
        p = PolyQ.const(1)
        for j, xj in enumerate(points):
            if j != i:
                p = p * PolyQ([-xj / (xi - xj), 1 / (xi - xj)])
        out.append(p)
    return out


def interpolate(evaluate: Callable[[Fraction], QMatrix], degree: int) -> PolyMatrix:
    """The matrix polynomial of degree ``<= degree`` through exact samples, confirmed at one more point."""
    pts = [Fraction(k) for k in range(degree + 1)]
    mats = [evaluate(x) for x in pts]
    out = PolyMatrix.zeros(*mats[0].shape)
    for L, M in zip(_lagrange(pts), mats):
        if not M.is_zero():
            out = out + PolyMatrix.constant(M).scale_poly(L)
    extra = Fraction(degree + 1)
    if not (out.eval_at(extra) - evaluate(extra)).is_zero():
        raise DeformationError("operator is not polynomial of the expected degree")
    return out


def _b_poly(family: DeformationFamily, n: int) -> PolyMatrix:
    return _cached(("fam_b", family.key, n), lambda: interpolate(
        lambda x: hochschild_b(fiber(family, x), n).matrix, family.degree))


def _iota_poly(family: DeformationFamily, n: int) -> PolyMatrix:
    deg = family.degree + max(family.degree - 1, 0)
    return _cached(("fam_iota", family.key, n), lambda: interpolate(
        lambda x: contraction_iota(fiber(family, x), defect_cochain(family, x), n).matrix, deg))


def _S_poly(family: DeformationFamily, n: int) -> PolyMatrix:
    deg = max(family.degree - 1, 0)
    return _cached(("fam_S", family.key, n), lambda: interpolate(
        lambda x: cyclic_S(fiber(family, x), defect_cochain(family, x), n).matrix, deg))


def _B_poly(family: DeformationFamily, n: int) -> PolyMatrix:
    return PolyMatrix.constant(connes_B(fiber(family, 0), n).matrix)


@dataclass
class VerticalOperator:
    """``I_{E_t}`` on the window ``C_0 + ... + C_{2N}`` as a matrix polynomial in ``t``."""

    family: DeformationFamily
    window: int
    matrix: PolyMatrix
    sizes: list

    @property
    def offsets(self) -> list:
        return list(np.cumsum([0] + self.sizes))

    def is_constant(self) -> bool:
        return self.matrix.degree <= 0

    def block_triangular(self) -> bool:
        """No block maps a degree into a higher one."""
        off = self.offsets
        for (i, j) in self.matrix.nonzero_entries():
            ti = int(np.searchsorted(off, i, side="right")) - 1
            sj = int(np.searchsorted(off, j, side="right")) - 1
            if ti > sj:
                return False
        return True

    def at(self, t0: float):
        return self.matrix.eval_float(float(t0)).tocsr()

    def coefficient_float(self) -> list:
        return [c.to_float_sparse().tocsr() for c in self.matrix.coeffs]


def gm_vertical(family: DeformationFamily, window: int) -> VerticalOperator:
    """``I_{E_t} = iota_{E_t} + S_{E_t}`` assembled on degrees ``0..window``."""
    if window < 0:
        raise DeformationError("window must be non-negative")

    def build():
        sizes = [chain_space_dim(family.dim, n) for n in range(window + 1)]
        blocks = [[None] * (window + 1) for _ in range(window + 1)]
        for n in range(window + 1):
            S = _S_poly(family, n)
            if not S.is_zero():
                blocks[n][n] = S
            if n >= 2:
                io = _iota_poly(family, n)
                if not io.is_zero():
                    blocks[n - 2][n] = io
        return VerticalOperator(family, window, poly_block(blocks, sizes, sizes), sizes)
    return _cached(("gm_vertical", family.key, window), build)


# chain-map gate

@dataclass
class ChainMapReport:
    window: int
    interior: dict = field(default_factory=dict)   # (source, target) -> zero?
    boundary: dict = field(default_factory=dict)   # (source, target) -> nonzero entry count
    residuals: dict = field(default_factory=dict)  # (source, target) -> {(i, j): PolyQ} when nonzero

    @property
    def interior_zero(self) -> bool:
        return all(self.interior.values())

    def to_json(self) -> dict:
        return {
            "window": self.window,
            "interior_zero": self.interior_zero,
            "interior": {f"{s}->{t}": ok for (s, t), ok in sorted(self.interior.items())},
            "boundary_nonzero_entries": {f"{s}->{t}": c for (s, t), c in sorted(self.boundary.items())},
        }


def gm_chain_map_check(family: DeformationFamily, window: int) -> ChainMapReport:
    """Exact polynomial residual of ``[b_t + B, d/dt - I_{E_t}] = -bdot_t - [b_t + B, I_{E_t}]``.

    Computed degreewise for sources ``n <= window``.  Blocks whose composition
    passes through degree ``window + 1`` are boundary blocks: they are
    evaluated with that degree truncated away and only reported.
    """
    rep = ChainMapReport(window)
    Z = lambda r, c: PolyMatrix.zeros(r, c)  # noqa: E731
    dim = lambda n: chain_space_dim(family.dim, n) if n >= 0 else 0  # noqa: E731

    def b(n):
        return _b_poly(family, n) if n >= 1 else Z(0, dim(n))

    def io(n):
        return _iota_poly(family, n) if n >= 2 else Z(dim(n - 2), dim(n))

    for n in range(window + 1):
        top = n + 1 > window
        Bn = _B_poly(family, n) if not top else Z(dim(n + 1), dim(n))
        S = _S_poly(family, n)
        parts = {}
        # target n - 1: -bdot - (b S - S b + B iota - iota B)
        if n >= 1:
            c = b(n) @ S - _S_poly(family, n - 1) @ b(n)
            if n >= 2:
                c = c + _B_poly(family, n - 2) @ io(n)
            if not top:
                c = c - io(n + 1) @ Bn
            parts[n - 1] = -b(n).derivative() - c
        # target n - 3: -(b iota - iota b)
        if n >= 3:
            parts[n - 3] = io(n - 1) @ b(n) - b(n - 2) @ io(n)
        # target n + 1: -(B S - S B)
        if not top:
            parts[n + 1] = _S_poly(family, n + 1) @ Bn - Bn @ S
        for tgt, r in parts.items():
            if tgt < 0:
                continue
            nz = r.nonzero_entries()
            if nz:
                rep.residuals[(n, tgt)] = nz
            if top:
                rep.boundary[(n, tgt)] = len(nz)
            else:
                rep.interior[(n, tgt)] = not nz
    return rep


# triviality obstruction

@dataclass
class ObstructionResult:
    status: str                          # "trivial" or "obstructed"
    witness: Optional[list] = None       # F as d x d nested PolyQ, F[i][k] = coeff of e_k in F(e_i)
    t0: Optional[Fraction] = None

    def to_json(self) -> dict:
        out = {"status": self.status}
        if self.witness is not None:
            out["witness"] = [[format_poly(p) for p in row] for row in self.witness]
        if self.t0 is not None:
            out["obstructed_at"] = format_rational(self.t0)
        return out


def _delta1_matrix(A: FiniteAlgebra) -> QMatrix:
    """Matrix of ``delta: C^1(A, A) -> C^2(A, A)``; F is flattened as ``F[i][k] -> i*d + k``."""
    d = A.dim
    entries = {}
    for i in range(d):
        for k in range(d):
            F = np.zeros((d, d), dtype=object)
            F[i, k] = 1
            dF = cochain_delta(A, AValuedCochain(A, 1, F))
            for r, x in enumerate(dF.table.ravel()):
                if x:
                    entries[(r, i * d + k)] = x
    return QMatrix.from_entries(d ** 3, d * d, entries)


def _defect_vector(family: DeformationFamily, t0) -> list:
    return [x for x in defect_cochain(family, t0).table.ravel()]


def triviality_obstruction(family: DeformationFamily, max_witness_degree: Optional[int] = None) -> ObstructionResult:
    """Decide whether ``E_t = delta_t F_t`` has a polynomial solution ``F_t``.

    A solution makes ``d/dt - F_t`` a connection that is a derivation.  The
    polynomial search bounds ``deg F`` by ``max_witness_degree`` (default
    ``deg m``); if it fails, the sample points are tried in turn and the
    first fiber with ``[E_t0] != 0`` is reported.
    """
    d = family.dim
    D = family.degree if max_witness_degree is None else max_witness_degree
    # delta_t F_t = E_t: coefficients of t^l; delta_t = sum_j t^j delta^(j)
    dpoly = interpolate(lambda x: _delta1_matrix(fiber(family, x)), family.degree)
    epoly = [[p.derivative() * -1 for p in col] for row in family.structure for col in row]
    nrow, ncol = d ** 3, d * d
    top = dpoly.degree + D if dpoly.degree >= 0 else D
    top = max(top, max((p.degree for r in epoly for p in r), default=0))
    rows, rhs = [], []
    for l in range(top + 1):
        block = [[Fraction(0)] * (ncol * (D + 1)) for _ in range(nrow)]
        for j in range(D + 1):
            c = dpoly.coeff(l - j) if 0 <= l - j <= dpoly.degree else None
            if c is None:
                continue
            for (r, q), x in c.entries().items():
                block[r][j * ncol + q] += x
        for r in range(nrow):
            rows.append(block[r])
            rhs.append(epoly[r // d][r % d][l])
    M = QMatrix.from_dense(rows) if rows else QMatrix.zeros(0, ncol * (D + 1))
    sol = linalg.solve(M, rhs)
    if sol is not None:
        F = [[PolyQ([sol[j * ncol + i * d + k] for j in range(D + 1)]) for k in range(d)] for i in range(d)]
        return ObstructionResult("trivial", witness=F)
    for t0 in OBSTRUCTION_SAMPLES:
        A = fiber(family, t0)
        if linalg.solve(_delta1_matrix(A), _defect_vector(family, t0)) is None:
            return ObstructionResult("obstructed", t0=t0)
    return ObstructionResult("obstructed", t0=None)


def fiber_witness(family: DeformationFamily, t0) -> Optional[AValuedCochain]:
    """A solution of ``delta F = E_{t0}`` on one fiber, or None."""
    A = fiber(family, t0)
    sol = linalg.solve(_delta1_matrix(A), _defect_vector(family, t0))
    if sol is None:
        return None
    d = family.dim
    return AValuedCochain(A, 1, [[sol[i * d + k] for k in range(d)] for i in range(d)])


# transport

def window_vector(chain: ChainVector, window: int, truncate: bool = False) -> tuple:
    """Dense float vector of ``chain`` on degrees ``0..window`` and the dropped tail norm."""
    sizes = [chain_space_dim(chain.algebra, n) for n in range(window + 1)]
    off = np.cumsum([0] + sizes)
    out = np.zeros(int(off[-1]))
    tail = 0.0
    for n, comp in chain.components.items():
        if n > window:
            if not truncate and comp:
                raise WindowOverflow(f"WindowOverflow: chain has degree {n} > window {window}")
            tail = max(tail, max((abs(float(c)) for c in comp.values()), default=0.0))
            continue
        for idx, c in comp.items():
            out[off[n] + idx] = float(c)
    return out, tail


def dual_window_vector(phi: Sequence[DualFunctional], window: int, d: int) -> np.ndarray:
    sizes = [chain_space_dim(d, n) for n in range(window + 1)]
    off = np.cumsum([0] + sizes)
    out = np.zeros(int(off[-1]))
    for f in phi:
        if f.order > window:
            if any(f.coeffs.values()):
                raise WindowOverflow(f"WindowOverflow: functional of order {f.order} > window {window}")
            continue
        for idx, c in f.coeffs.items():
            out[off[f.order] + idx] += float(c)
    return out


def _rk4(coeffs: list, y0: np.ndarray, s: float, t: float, h: float, sign: float = 1.0,
         transpose: bool = False, record: Optional[list] = None) -> np.ndarray:
    """Fixed-step RK4 for ``y' = sign * M(u) y`` with ``M(u) = sum_k u^k coeffs[k]``."""
    mats = [c.T.tocsr() if transpose else c for c in coeffs]

    def f(u, y):
        acc = np.zeros_like(y)
        for k, c in enumerate(mats):
            acc += (u ** k) * (c @ y)
        return sign * acc

    steps = max(1, int(round(abs(t - s) / h)))
    hh = (t - s) / steps
    y = y0.copy()
    u = s
    if record is not None:
        record.append((u, y.copy()))
    for i in range(steps):
        k1 = f(u, y)
        k2 = f(u + hh / 2, y + hh / 2 * k1)
        k3 = f(u + hh / 2, y + hh / 2 * k2)
        k4 = f(u + hh, y + hh * k3)
        y = y + hh / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        u = s + (i + 1) * hh
        if record is not None:
            record.append((u, y.copy()))
    return y


def _shift_coeffs(coeffs: list, s: float) -> list:
    """Re-expand ``sum_k u^k M_k`` in powers of ``v = u - s``."""
    K = len(coeffs)
    out = [None] * K
    for j in range(K):
        acc = None
        for k in range(j, K):
            term = coeffs[k] * (float(comb(k, j)) * s ** (k - j))
            acc = term if acc is None else acc + term
        out[j] = acc.tocsr()
    return out


def _dyson(coeffs: list, y0: np.ndarray, s: float, t: float, sign: float = 1.0,
           transpose: bool = False) -> tuple:
    """Dyson series ``y(t) = sum_n y_n(t)`` with ``y_n(u) = int_s^u M y_{n-1}``.

    Each ``y_n`` is a vector polynomial in ``v = u - s`` carried by its
    coefficients.  Returns ``(y, order)``.
    """
    mats = [c.T.tocsr() if transpose else c for c in coeffs]
    mats = _shift_coeffs(mats, s) if mats else []
    v = t - s
    term = [y0.copy()]          # coefficients of v^0, v^1, ...
    total = y0.copy()
    for order in range(1, DYSON_MAX_ORDER + 1):
        prod = [np.zeros_like(y0) for _ in range(len(term) + len(mats) - 1)] if mats else []
        for k, M in enumerate(mats):
            for j, c in enumerate(term):
                if c.any():
                    prod[k + j] += M @ c
        new = [np.zeros_like(y0)] + [sign * c / (p + 1) for p, c in enumerate(prod)]
        value = sum((c * v ** p for p, c in enumerate(new)), np.zeros_like(y0))
        total = total + value
        term = new
        if np.max(np.abs(value), initial=0.0) < DYSON_TOL:
            return total, order
    raise DysonNotConverged(f"DysonNotConverged: term of order {DYSON_MAX_ORDER} still exceeds {DYSON_TOL}")


def nilpotency_index(M: QMatrix, cap: int) -> Optional[int]:
    """Smallest ``p <= cap`` with ``M^p = 0`` (exact), else None."""
    P = M
    for p in range(1, cap + 1):
        if P.is_zero():
            return p
        P = M @ P
    return None


def _nilpotent_exp(V: VerticalOperator, y0: list, s: Fraction, t: Fraction, transpose: bool = False) -> tuple:
    """Exact ``sum_{n < p} (t - s)^n / n! M^n y0`` for constant nilpotent ``M``."""
    if not V.is_constant():
        raise PreconditionFailed("PreconditionFailed: the vertical part I_E depends on t")
    M = V.matrix.coeff(0)
    if transpose:
        M = M.T.scale(-1)
    p = nilpotency_index(M, 4 * (V.window + 2))
    if p is None:
        raise PreconditionFailed("PreconditionFailed: the vertical part is not nilpotent on the window")
    out = list(y0)
    cur = list(y0)
    for n in range(1, p):
        cur = M.apply(cur)
        c = (t - s) ** n / factorial(n)
        out = [a + c * b for a, b in zip(out, cur)]
    return out, p


@dataclass
class TransportReport:
    """Result of a parallel transport with every residual recomputed after the fact."""

    method: str
    s: Fraction
    t: Fraction
    window: int
    step: Optional[float]
    sizes: list
    initial: np.ndarray
    final: np.ndarray
    dual: bool = False
    exact_final: Optional[list] = None
    residuals: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def offsets(self) -> list:
        return [int(x) for x in np.cumsum([0] + self.sizes)]

    def component(self, n: int) -> np.ndarray:
        off = self.offsets
        return self.final[off[n]:off[n + 1]]

    def pair(self, phi: Sequence[DualFunctional]) -> float:
        """``<phi, omega(t)>`` for a transported chain."""
        d = self.info["dim"]
        return float(dual_window_vector(phi, self.window, d) @ self.final)

    def to_json(self) -> dict:
        def terms(vec):
            out = []
            off = self.offsets
            for n in range(self.window + 1):
                comp = vec[off[n]:off[n + 1]]
                nz = np.nonzero(comp)[0]
                if len(nz):
                    out.append({"degree": n, "terms": [[int(i), float(comp[i])] for i in nz]})
            return out
        res = {k: (None if v is None else float(v)) for k, v in sorted(self.residuals.items())}
        doc = {"method": self.method, "s": format_rational(self.s), "t": format_rational(self.t),
               "window": self.window, "step": self.step, "dual": self.dual,
               "residuals": res, "output": terms(self.final)}
        doc.update({k: v for k, v in sorted(self.info.items()) if k != "dim"})
        return doc


def _characters(A: FiniteAlgebra, tol: float = 1e-9) -> list:
    """Numerical characters ``chi: A -> R`` (common left eigenvectors of left multiplication)."""
    if A.unit is None:
        return []
    d = A.dim
    rng = np.random.default_rng(12345)
    r = rng.standard_normal(d)
    L = sum(r[i] * np.array(A.left_mult_matrix(A.basis_vector(i)), dtype=float) for i in range(d))
    w, vecs = np.linalg.eig(L.T)
    unit = np.array([float(x) for x in A.unit])
    c = np.array([[[float(x) for x in col] for col in row] for row in A.structure])
    out = []
    for k in range(d):
        if abs(w[k].imag) > tol:
            continue
        chi = vecs[:, k].real
        norm = chi @ unit
        if abs(norm) < tol:
            continue
        chi = chi / norm
        prod = np.einsum("ijk,k->ij", c, chi)
        if np.max(np.abs(prod - np.outer(chi, chi))) < 1e-7:
            out.append(chi)
    return out


def characters_along(family: DeformationFamily, grid: Sequence[float]) -> list:
    """Characters followed continuously along ``grid`` (floats); each entry is a list per grid point."""
    tracks = None
    for u in grid:
        A = fiber(family, Fraction(u).limit_denominator(10 ** 12))
        chis = _characters(A)
        if tracks is None:
            tracks = [[c] for c in chis]
            continue
        if len(chis) != len(tracks):
            return []
        used = set()
        for tr in tracks:
            dists = [np.max(np.abs(c - tr[-1])) if i not in used else np.inf for i, c in enumerate(chis)]
            i = int(np.argmin(dists))
            used.add(i)
            tr.append(chis[i])
    return tracks or []


def _check_window_support(V: VerticalOperator, vec: np.ndarray) -> None:
    if vec.shape[0] != V.matrix.shape[0]:
        raise WindowOverflow("vector does not match the window")


def transport(family: DeformationFamily, s, t, omega, window: int, method: str = "rk4",
              step: float = DEFAULT_STEP, truncate: bool = False, cross_check: bool = True,
              check_interval: bool = True) -> TransportReport:
    """Parallel transport of a chain for ``nabla_GM`` from ``s`` to ``t`` on the window.

    ``omega`` is a ChainVector (or PeriodicChain) on the fiber at ``s``, or a
    dense window vector such as the ``final`` of an earlier report.
    """
    s, t = as_fraction(s), as_fraction(t)
    if check_interval:
        family.check_interval(s, t)
    V = gm_vertical(family, window)
    if isinstance(omega, np.ndarray):
        if omega.shape != (sum(V.sizes),):
            raise WindowOverflow("vector does not match the window")
        y0, tail = omega.astype(float), 0.0
        exact0 = [Fraction(x).limit_denominator(10 ** 12) for x in y0]
    else:
        chain = getattr(omega, "chain", omega)
        y0, tail = window_vector(chain, window, truncate)
        exact0 = list(_exact_window(chain, window))
    rep = _integrate(V, y0, s, t, method, step, cross_check, dual=False, exact0=exact0)
    rep.info["input_truncation_norm"] = tail
    _pairing_drift(family, rep)
    return rep


def transport_dual(family: DeformationFamily, s, t, phi: Sequence[DualFunctional], window: int,
                   method: str = "rk4", step: float = DEFAULT_STEP, cross_check: bool = True,
                   check_interval: bool = True) -> TransportReport:
    """Dual transport ``phi' = -I_{E_t}^T phi`` (parallel for the dual connection)."""
    s, t = as_fraction(s), as_fraction(t)
    if check_interval:
        family.check_interval(s, t)
    y0 = dual_window_vector(phi, window, family.dim)
    exact0 = [Fraction(0)] * len(y0)
    off = np.cumsum([0] + [chain_space_dim(family.dim, n) for n in range(window + 1)])
    for f in phi:
        if f.order <= window:
            for idx, c in f.coeffs.items():
                exact0[off[f.order] + idx] += as_fraction(c)
    V = gm_vertical(family, window)
    return _integrate(V, y0, s, t, method, step, cross_check, dual=True, exact0=exact0)


def _exact_window(chain: ChainVector, window: int) -> list:
    sizes = [chain_space_dim(chain.algebra, n) for n in range(window + 1)]
    off = np.cumsum([0] + sizes)
    out = [Fraction(0)] * int(off[-1])
    for n, comp in chain.components.items():
        if n <= window:
            for idx, c in comp.items():
                out[off[n] + idx] = c
    return out


def _integrate(V: VerticalOperator, y0, s: Fraction, t: Fraction, method: str, step: float,
               cross_check: bool, dual: bool, exact0: list) -> TransportReport:
    sign = -1.0 if dual else 1.0
    coeffs = V.coefficient_float()
    sf, tf = float(s), float(t)
    rep = TransportReport(method, s, t, V.window, None, V.sizes, y0, y0, dual=dual)
    rep.info["dim"] = V.family.dim
    if method == "rk4":
        rep.step = step
        traj: list = []
        rep.final = _rk4(coeffs, y0, sf, tf, step, sign, dual, record=traj)
        half = _rk4(coeffs, y0, sf, tf, step / 2, sign, dual)
        rep.residuals["richardson_gap"] = float(np.max(np.abs(half - rep.final), initial=0.0))
        rep.residuals["parallel_ode_residual"] = _ode_residual(coeffs, traj, sign, dual)
        if cross_check:
            try:
                other, _ = _dyson(coeffs, y0, sf, tf, sign, dual)
                rep.residuals["cross_method_gap"] = float(np.max(np.abs(other - rep.final), initial=0.0))
            except DysonNotConverged:
                rep.residuals["cross_method_gap"] = None
        rep.info["trajectory"] = traj
    elif method == "dyson":
        rep.final, order = _dyson(coeffs, y0, sf, tf, sign, dual)
        rep.info["dyson_order"] = order
        rep.residuals["parallel_ode_residual"] = None
        if cross_check:
            other = _rk4(coeffs, y0, sf, tf, DEFAULT_STEP, sign, dual)
            rep.residuals["cross_method_gap"] = float(np.max(np.abs(other - rep.final), initial=0.0))
    elif method == "nilpotent_exp":
        exact, p = _nilpotent_exp(V, exact0, s, t, transpose=dual)
        rep.exact_final = exact
        rep.final = np.array([float(x) for x in exact])
        rep.info["nilpotency_index"] = p
        rep.residuals["parallel_ode_residual"] = 0.0
        if cross_check:
            other = _rk4(coeffs, y0, sf, tf, DEFAULT_STEP, sign, dual)
            rep.residuals["cross_method_gap"] = float(np.max(np.abs(other - rep.final), initial=0.0))
    else:
        raise DeformationError(f"unknown transport method {method!r}")
    rep.residuals.setdefault("pairing_drift", None)
    return rep


def _ode_residual(coeffs: list, traj: list, sign: float, dual: bool) -> float:
    """Centered-difference residual of ``y' = M y`` at a few interior nodes of the trajectory."""
    if len(traj) < 3:
        return 0.0
    mats = [c.T.tocsr() if dual else c for c in coeffs]
    idx = np.linspace(1, len(traj) - 2, num=min(9, len(traj) - 2)).astype(int)
    worst = 0.0
    for i in idx:
        (u0, y0), (u1, y1), (u2, y2) = traj[i - 1], traj[i], traj[i + 1]
        dy = (y2 - y0) / (u2 - u0)
        rhs = sign * sum(((u1 ** k) * (c @ y1) for k, c in enumerate(mats)), np.zeros_like(y1))
        worst = max(worst, float(np.max(np.abs(dy - rhs), initial=0.0)))
    return worst


def _pairing_drift(family: DeformationFamily, rep: TransportReport) -> None:
    """Drift of ``<chi_u, omega(u)>`` for characters ``chi_u`` followed along the path.

    Characters are morphisms to the constant family, hence parallel for the
    dual connection, so these pairings must stay constant.
    """
    traj = rep.info.pop("trajectory", None)
    if traj is None:
        traj = [(float(rep.s), rep.initial), (float(rep.t), rep.final)]
    pick = sorted(set(np.linspace(0, len(traj) - 1, num=min(33, len(traj))).astype(int)))
    grid = [traj[i][0] for i in pick]
    tracks = characters_along(family, grid)
    if not tracks:
        return
    n0 = chain_space_dim(family.dim, 0)
    drift = 0.0
    values = []
    for tr in tracks:
        vals = [float(chi @ traj[i][1][:n0]) for chi, i in zip(tr, pick)]
        drift = max(drift, max(abs(v - vals[0]) for v in vals))
        values.append([vals[0], vals[-1]])
    rep.residuals["pairing_drift"] = drift
    rep.info["character_pairings"] = values


def pairing_compatibility(family: DeformationFamily, s, t, phi: Sequence[DualFunctional], omega,
                          window: int, samples: int = 8, h: float = 1e-3) -> float:
    """Max over sampled times of ``d/dt<phi, omega> - <nabla^GM phi, omega> - <phi, nabla_GM omega>``.

    ``phi`` and ``omega`` are transported (so both connection terms are
    evaluated from finite differences of the transported data).
    """
    s, t = as_fraction(s), as_fraction(t)
    V = gm_vertical(family, window)
    coeffs = V.coefficient_float()
    y, _ = window_vector(getattr(omega, "chain", omega), window, truncate=True)
    p = dual_window_vector(phi, window, family.dim)
    sf, tf = float(s), float(t)
    worst = 0.0
    for u in np.linspace(sf, tf, samples + 2)[1:-1]:
        yu = _rk4(coeffs, y, sf, u, h, 1.0)
        pu = _rk4(coeffs, p, sf, u, h, -1.0, True)
        yp = _rk4(coeffs, yu, u, u + h, h / 4, 1.0)
        ym = _rk4(coeffs, yu, u, u - h, h / 4, 1.0)
        pp = _rk4(coeffs, pu, u, u + h, h / 4, -1.0, True)
        pm = _rk4(coeffs, pu, u, u - h, h / 4, -1.0, True)
        M = sum(((u ** k) * c for k, c in enumerate(coeffs)), sp.csr_matrix(coeffs[0].shape)) if coeffs \
            else sp.csr_matrix((len(y), len(y)))
        dpair = (pp @ yp - pm @ ym) / (2 * h)
        dphi = (pp - pm) / (2 * h)
        domega = (yp - ym) / (2 * h)
        nabla_dual = dphi + M.T @ pu
        nabla_omega = domega - M @ yu
        worst = max(worst, abs(dpair - nabla_dual @ yu - pu @ nabla_omega))
    return float(worst)


# checks against the homology of a fiber

def _window_boundary_matrix(A: FiniteAlgebra, window: int, par: int) -> tuple:
    """``(D, targets)``: ``b + B`` from parity ``1 - par`` on degrees ``<= window + 1`` into parity ``par``."""
    sizes = [chain_space_dim(A, n) for n in range(window + 2)]
    src = [n for n in range(window + 2) if n % 2 != par]
    tgt = [n for n in range(window + 1) if n % 2 == par]
    blocks = [[None] * len(src) for _ in tgt]
    tpos = {n: i for i, n in enumerate(tgt)}
    for j, n in enumerate(src):
        if n >= 1 and n - 1 in tpos:
            blocks[tpos[n - 1]][j] = hochschild_b(A, n).matrix
        if n + 1 in tpos:
            blocks[tpos[n + 1]][j] = connes_B(A, n).matrix
    return qblock(blocks, [sizes[n] for n in tgt], [sizes[n] for n in src]), tgt


def _parity_of(vec, off, window: int) -> Optional[int]:
    par = None
    for n in range(window + 1):
        if any(vec[off[n]:off[n + 1]]):
            if par is None:
                par = n % 2
            elif par != n % 2:
                raise DeformationError("mixed parity vector")
    return par


def boundary_membership(A: FiniteAlgebra, window: int, vec: Sequence[Fraction]) -> bool:
    """Is ``vec`` (dense over degrees 0..window, one parity) a (b+B)-boundary in the window?

    The window complex is ``Tot``-style: a chain of parity ``p`` supported in
    degrees ``<= window`` is ``d`` of something supported in degrees ``<= window + 1``.
    """
    off = np.cumsum([0] + [chain_space_dim(A, n) for n in range(window + 1)])
    par = _parity_of(vec, off, window)
    if par is None:
        return True
    D, tgt = _window_boundary_matrix(A, window, par)
    rhs = []
    for n in tgt:
        rhs.extend(vec[off[n]:off[n + 1]])
    return linalg.solve(D, rhs) is not None


def boundary_distance(A: FiniteAlgebra, window: int, vec: np.ndarray) -> float:
    """Least-squares distance (max-norm of the residual) from ``vec`` to the window boundaries."""
    off = np.cumsum([0] + [chain_space_dim(A, n) for n in range(window + 1)])
    par = _parity_of(np.where(np.abs(vec) > 0, 1, 0), off, window)
    if par is None:
        return 0.0
    D, tgt = _window_boundary_matrix(A, window, par)
    rhs = np.concatenate([vec[off[n]:off[n + 1]] for n in tgt])
    Df = D.to_float()
    x, *_ = np.linalg.lstsq(Df, rhs, rcond=None)
    return float(np.max(np.abs(Df @ x - rhs), initial=0.0))


def reconstruct_rational(vec: np.ndarray, tol: float = 1e-8, max_den: int = 1000) -> Optional[list]:
    """Entrywise rational reconstruction, or None if some entry is not within ``tol`` of a small fraction."""
    out = []
    for x in vec:
        q = Fraction(float(x)).limit_denominator(max_den)
        if abs(float(q) - float(x)) > tol:
            return None
        out.append(q)
    return out


def random_polynomial_cochain(family: DeformationFamily, seed: int, degree: int = 1) -> list:
    """Seeded order-1 cochain ``F_t = sum_k F_k t^k`` with small integer entries (list of ``d x d`` tables)."""
    rng = np.random.default_rng(seed)
    d = family.dim
    return [[[Fraction(int(v)) for v in row] for row in rng.integers(-2, 3, size=(d, d))]
            for _ in range(degree + 1)]


def _cochain_at(family: DeformationFamily, F: list, t0) -> AValuedCochain:
    t0 = as_fraction(t0)
    d = family.dim
    A = fiber(family, t0)
    table = [[sum((Fk[i][k] * t0 ** p for p, Fk in enumerate(F)), Fraction(0)) for k in range(d)]
             for i in range(d)]
    return AValuedCochain(A, 1, table)


def _connection_shift(family: DeformationFamily, F: list, window: int) -> PolyMatrix:
    """``L_F - I_{delta F}`` on the window as a matrix polynomial (equal to ``[b+B, I_F]``)."""
    sizes = [chain_space_dim(family.dim, n) for n in range(window + 1)]
    deg = 2 * family.degree + len(F)

    def at(x):
        A = fiber(family, x)
        Fx = _cochain_at(family, F, x)
        dF = cochain_delta(A, Fx)
        blocks = [[None] * (window + 1) for _ in range(window + 1)]
        for n in range(window + 1):
            blocks[n][n] = lie_derivative(A, Fx, n).matrix - cyclic_S(A, dF, n).matrix
            if n >= 2:
                blocks[n - 2][n] = -contraction_iota(A, dF, n).matrix
        return qblock(blocks, sizes, sizes)
    return interpolate(at, deg)


@dataclass
class IndependenceReport:
    """Transport under ``nabla`` and ``nabla' = d/dt - F``; the difference should be a boundary."""

    s: Fraction
    times: list
    window: int
    seed: int
    samples: list
    tolerance: float

    @property
    def all_boundaries(self) -> bool:
        return all(x["boundary"] for x in self.samples)

    def to_json(self) -> dict:
        return {"s": format_rational(self.s), "times": [format_rational(t) for t in self.times],
                "window": self.window, "seed": self.seed, "tolerance": self.tolerance,
                "all_boundaries": self.all_boundaries, "samples": self.samples}


def connection_independence_check(family: DeformationFamily, s, times: Sequence, omega, window: int,
                                  seed: int = 0, step: float = DEFAULT_STEP, tol: float = 1e-8,
                                  check_interval: bool = True) -> IndependenceReport:
    """Does replacing ``d/dt`` by ``d/dt - F`` change the transported cycle only by a boundary?

    ``F`` is a seeded random polynomial order-1 cochain.  Parallel chains for
    the new connection solve ``omega' = (I_E + L_F - I_{delta F}) omega``.  At
    each sampled rational time the difference of the two transports is
    reconstructed as a rational vector (tolerance ``tol``) and tested exactly;
    if reconstruction fails the float distance to the boundary space is used.
    """
    s = as_fraction(s)
    times = [as_fraction(t) for t in times]
    if check_interval:
        for t in times:
            family.check_interval(s, t)
    F = random_polynomial_cochain(family, seed)
    V = gm_vertical(family, window)
    X = _connection_shift(family, F, window)
    base = V.coefficient_float()
    shift = [c.to_float_sparse().tocsr() for c in X.coeffs]
    n = max(len(base), len(shift))
    zero = sp.csr_matrix(base[0].shape if base else shift[0].shape)
    alt = [(base[k] if k < len(base) else zero) + (shift[k] if k < len(shift) else zero) for k in range(n)]
    y0, _ = window_vector(getattr(omega, "chain", omega), window, truncate=True)
    samples = []
    for t in times:
        y = _rk4(base, y0, float(s), float(t), step)
        y_alt = _rk4(alt, y0, float(s), float(t), step)
        diff = y_alt - y
        A = fiber(family, t)
        dist = boundary_distance(A, window, np.where(np.abs(diff) > tol, diff, 0.0))
        rec = reconstruct_rational(diff, tol)
        if rec is not None:
            exact = boundary_membership(A, window, rec)
            samples.append({"t": format_rational(t), "mode": "exact", "boundary": bool(exact),
                            "distance": dist, "difference_norm": float(np.max(np.abs(diff)))})
        else:
            samples.append({"t": format_rational(t), "mode": "numeric", "boundary": dist <= tol,
                            "distance": dist, "difference_norm": float(np.max(np.abs(diff)))})
    return IndependenceReport(s, times, window, seed, samples, tol)


def parse_family_scalar(x):
    v = parse_scalar(x)
    return v if isinstance(v, PolyQ) else PolyQ.const(v)
