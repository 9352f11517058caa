import os
import subprocess
import sys
from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from cyclo import kernels
from cyclo import _kernels_py
from cyclo.exactnum import linalg
from cyclo.exactnum.poly import (DegreeCapError, PolyQ, format_poly, parse_poly, parse_rational,
                                 parse_scalar, poly_arith)
from cyclo.exactnum.qmatrix import PolyMatrix, QMatrix, qblock

small = st.integers(-4, 4)
rationals = st.fractions(min_value=-5, max_value=5, max_denominator=7)


def matrices(max_rows=8, max_cols=8, elements=small):
    return st.integers(1, max_rows).flatmap(
        lambda r: st.integers(1, max_cols).flatmap(
            lambda c: st.lists(st.lists(elements, min_size=c, max_size=c), min_size=r, max_size=r)))


def polys(max_deg=6):
    return st.lists(rationals, max_size=max_deg + 1).map(PolyQ)


# rank_kernel

def test_rank_kernel_identity():
    assert linalg.rank_kernel(QMatrix.identity(2)) == (2, [])


def test_rank_kernel_zero_map():
    r, ker = linalg.rank_kernel(QMatrix.zeros(3, 2))
    assert r == 0 and len(ker) == 2


def test_rank_kernel_hand_example():
    r, ker = linalg.rank_kernel(QMatrix.from_dense([[1, 2], [2, 4]]))
    assert r == 1
    assert ker == [[Fraction(2), Fraction(-1)]] or ker == [[Fraction(-2), Fraction(1)]]


@settings(max_examples=60, deadline=None)
@given(matrices(elements=rationals))
def test_rank_matches_sympy(rows):
    M = QMatrix.from_dense(rows)
    r, ker = linalg.rank_kernel(M)
    assert r == sympy.Matrix(rows).rank()
    assert r + len(ker) == M.shape[1]
    assert linalg.annihilates(M, ker)


def test_rank_modular_path():
    # large enough to leave the direct rational elimination path
    rng = np.random.default_rng(3)
    left = rng.integers(-3, 4, size=(230, 40))
    right = rng.integers(-3, 4, size=(40, 210))
    M = left @ right
    assert M.size > linalg.EXACT_ENTRY_LIMIT
    Q = QMatrix.from_dense(M.tolist())
    assert linalg.rank(Q) == np.linalg.matrix_rank(left) == 40
    r, ker = linalg.rank_kernel(Q)
    assert r == 40 and len(ker) == 170
    assert linalg.annihilates(Q, ker[:5])


@settings(max_examples=40, deadline=None)
@given(matrices(6, 6), st.lists(small, min_size=6, max_size=6))
def test_solve_is_certified(rows, x0):
    M = QMatrix.from_dense(rows)
    cols = M.shape[1]
    rhs = M.apply([Fraction(v) for v in x0[:cols]])
    x = linalg.solve(M, rhs)
    assert x is not None and M.apply(x) == rhs
    # perturb to something probably inconsistent and check the certificate
    bad = list(rhs)
    bad[0] += 1
    x, y = linalg.solve_certified(M, bad)
    if x is None:
        assert all(v == 0 for v in M.T.apply(y))
        assert sum(a * b for a, b in zip(y, bad)) != 0
    else:
        assert M.apply(x) == bad


def test_homology_of_short_complex():
    # C -> C^2 -> C with d_in = (1, 1), d_out = (1, -1): zero homology
    d_in = QMatrix.from_dense([[1], [1]])
    d_out = QMatrix.from_dense([[1, -1]])
    assert linalg.homology(d_in, d_out, 2).dim == 0
    h = linalg.homology(None, QMatrix.zeros(0, 3), 3)
    assert h.dim == 3 and len(h.cycles) == 3


def test_qblock_layout():
    I2 = QMatrix.identity(2)
    M = qblock([[I2, None], [None, I2.scale(3)]], [2, 2], [2, 2])
    assert M.to_float().tolist() == np.diag([1, 1, 3, 3]).tolist()


# polynomials

def test_poly_examples():
    t = PolyQ.t()
    assert poly_arith(t * t, None, "derivative") == PolyQ([0, 2])
    assert poly_arith(PolyQ([-1, 2]), None, "eval_at", Fraction(3, 2)) == 2
    assert poly_arith(PolyQ([1, 1]), PolyQ([-1, 1]), "mul") == PolyQ([-1, 0, 1])


@settings(max_examples=80, deadline=None)
@given(polys(), polys())
def test_leibniz_rule(p, q):
    assert (p * q).derivative() == p.derivative() * q + p * q.derivative()


@given(polys())
def test_poly_format_parse_round_trip(p):
    assert parse_poly(format_poly(p)) == p


def test_degree_cap():
    with pytest.raises(DegreeCapError):
        PolyQ([0] * 65 + [1])


def test_parse_scalar_and_rational():
    assert parse_scalar("3/4") == Fraction(3, 4)
    assert parse_scalar("1 - t^2") == PolyQ([1, 0, -1])
    with pytest.raises(ZeroDivisionError):
        parse_rational("1/0")
    with pytest.raises(ValueError):
        parse_poly("t t")


def test_poly_matrix_eval_and_derivative():
    P = PolyMatrix.constant(QMatrix.identity(2)).scale_poly(PolyQ([0, 0, 1]))
    assert P.eval_at(3).to_float().tolist() == [[9, 0], [0, 9]]
    assert P.derivative().eval_at(3).to_float().tolist() == [[6, 0], [0, 6]]


# compiled kernel against the fallback

@settings(max_examples=40, deadline=None)
@given(matrices(12, 12, st.integers(0, 10 ** 6)))
def test_kernel_rref_agrees_with_fallback(rows):
    p = linalg.PRIMES[0]
    A = np.array(rows, dtype=np.int64) % p
    a1, a2 = A.copy(), A.copy()
    piv1 = kernels.rref_mod_p(a1, p)
    piv2 = _kernels_py.rref_mod_p(a2, p)
    assert list(piv1) == list(piv2)
    assert np.array_equal(a1, a2)
    assert kernels.rank_mod_p(A.copy(), p) == len(piv2)


def test_ratrecon_agrees_with_fallback():
    p = linalg.PRIMES[1]
    fracs = [Fraction(3, 7), Fraction(-5, 11), Fraction(0), Fraction(12, 1)]
    a = np.array([f.numerator * pow(f.denominator, -1, p) % p for f in fracs], dtype=np.int64)
    for impl in (kernels, _kernels_py):
        num, den, ok = impl.ratrecon_array(a.copy(), p, 1000)
        assert all(ok)
        assert [Fraction(int(n), int(d)) for n, d in zip(num, den)] == fracs


def test_pure_python_switch():
    code = "from cyclo import kernels; print(kernels.IMPLEMENTATION)"
    env = dict(os.environ, CYCLO_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.IMPLEMENTATION in {"python", "cython"}
