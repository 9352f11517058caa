from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from cyclo.algebra import (complex_numbers, dual_numbers, matrix_algebra, matrix_units, two_point,
                           upper_triangular)
from cyclo.chains import AValuedCochain, ChainVector, chain_space_dim, encode, random_cochain
from cyclo.operators import (apply_B, apply_b, apply_I, apply_iota, apply_L, apply_S, apply_trace,
                             block_operator, cochain_delta, connes_B, contraction_iota, cyclic_S,
                             generalized_trace, gerstenhaber_bracket, graded_commutator, hochschild_b,
                             identity_suite, lie_derivative)

ALGEBRAS = {"C": complex_numbers, "dual": dual_numbers, "CxC": two_point, "UT2": upper_triangular}


def entries(op):
    return {k: v for k, v in op.matrix.entries().items() if v}


def dense(op):
    return np.array([[float(x) for x in row] for row in op.matrix.to_fraction_rows()])


# agreement with the direct formula evaluation

@pytest.mark.parametrize("name", sorted(ALGEBRAS))
@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_b_and_B_match_formula(name, n):
    A = ALGEBRAS[name]()
    if n >= 1:
        assert entries(hochschild_b(A, n)) == oracles.operator_entries(
            A, lambda m: oracles.b_tensor(A, m), n, n - 1)
    assert entries(connes_B(A, n)) == oracles.operator_entries(A, lambda m: oracles.B_tensor(A, m), n, n + 1)


@pytest.mark.parametrize("name", ["dual", "CxC", "UT2"])
@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_cochain_operators_match_formula(name, k, n):
    A = ALGEBRAS[name]()
    D = random_cochain(A, k, 10 * k + n)
    assert entries(lie_derivative(A, D, n)) == oracles.operator_entries(
        A, lambda m: oracles.L_tensor(D, m), n, n - k + 1)
    if n >= k:
        assert entries(contraction_iota(A, D, n)) == oracles.operator_entries(
            A, lambda m: oracles.iota_tensor(D, m), n, n - k)
    if n - k + 2 >= 0:
        assert entries(cyclic_S(A, D, n)) == oracles.operator_entries(
            A, lambda m: oracles.S_tensor(D, m), n, n - k + 2)


def test_S_matrix_dual_numbers_seed0():
    A = dual_numbers()
    D = random_cochain(A, 2, 0)
    assert entries(cyclic_S(A, D, 2)) == oracles.operator_entries(A, lambda m: oracles.S_tensor(D, m), 2, 2)


@pytest.mark.parametrize("name", sorted(ALGEBRAS))
@pytest.mark.parametrize("k", [1, 2, 3])
def test_delta_matches_formula(name, k):
    A = ALGEBRAS[name]()
    D = random_cochain(A, k, k)
    dD = cochain_delta(A, D)
    ref = oracles.delta_table(A, D)
    d = A.dim
    for args, vals in ref.items():
        vecs = [tuple(int(a == i) for i in range(d)) for a in args]
        got = dD.evaluate(*vecs)
        assert got == tuple(vals.get(i, Fraction(0)) for i in range(d))


# small worked examples

def test_b_examples():
    A = dual_numbers()
    assert hochschild_b(A, 1).matrix.is_zero()  # commutative
    M = matrix_units(2)
    E11, E12 = 0, 1
    w = ChainVector.elementary(M, (E11, E12))
    assert apply_b(w) == ChainVector.elementary(M, (E12,))


def test_B_examples():
    A = dual_numbers()
    e = A.dim
    assert apply_B(ChainVector.elementary(A, (1,))) == ChainVector.elementary(A, (e, 1))
    assert apply_B(ChainVector.elementary(A, (e, 1))).is_zero()
    assert apply_B(ChainVector.elementary(A, (1, 1))).is_zero()


def test_delta_examples():
    A = two_point()
    m = AValuedCochain.multiplication(A)
    assert cochain_delta(A, AValuedCochain.identity(A)) == m
    assert cochain_delta(A, m).is_zero()


@pytest.mark.parametrize("k", [1, 2, 3])
def test_delta_squared_zero(k):
    for A in (dual_numbers(), upper_triangular()):
        D = random_cochain(A, k, 5)
        assert cochain_delta(A, cochain_delta(A, D)).is_zero()


def test_bracket_examples():
    A = upper_triangular()
    ident = AValuedCochain.identity(A)
    m = AValuedCochain.multiplication(A)
    assert gerstenhaber_bracket(A, ident, ident).is_zero()
    assert gerstenhaber_bracket(A, m, m).is_zero()


def test_lie_derivative_examples():
    A = dual_numbers()
    D = AValuedCochain(A, 1, [[0, 0], [0, 1]])  # grading derivation x -> x
    assert apply_L(D, ChainVector.elementary(A, (1, 1))) == ChainVector.elementary(A, (1, 1), 2)
    E = random_cochain(A, 1, 3)
    w = ChainVector.elementary(A, (0, 1))
    expect = ChainVector.from_terms(A, [((i, 1), c) for i, c in enumerate(E.evaluate((1, 0))) if c]
                                    + [((0, i), c) for i, c in enumerate(E.evaluate((0, 1))) if c])
    assert apply_L(E, w) == expect


def test_iota_examples():
    A = two_point()
    m = AValuedCochain.multiplication(A)
    w = ChainVector.elementary(A, (0, 0, 0))
    assert apply_iota(m, w) == ChainVector.elementary(A, (0,), -1)
    D = random_cochain(A, 2, 1)
    assert apply_iota(D, ChainVector.elementary(A, (0, 1))).is_zero()  # n < k
    D1 = random_cochain(A, 1, 2)
    assert apply_iota(D1, ChainVector.elementary(A, (1, 1))) == ChainVector.from_terms(
        A, [((k,), c) for k, c in enumerate(A.multiply((0, 1), D1.evaluate((0, 1)))) if c])


def test_S_examples():
    A = dual_numbers()
    e = A.dim
    D = random_cochain(A, 2, 4)
    assert apply_S(D, ChainVector.elementary(A, (e, 1, 1, 0))).is_zero()
    D3 = random_cochain(A, 3, 4)
    assert cyclic_S(A, D3, 0).matrix.is_zero()  # n < k - 1


def test_L_m_equals_b():
    for A in (dual_numbers(), two_point(), upper_triangular()):
        mp = AValuedCochain.plus_multiplication(A)
        for n in range(1, 5):
            assert lie_derivative(A, mp, n).matrix == hochschild_b(A, n).matrix


def test_sparse_apply_matches_matrices():
    A = upper_triangular()
    rng = np.random.default_rng(0)
    D = random_cochain(A, 2, 9)
    for n in range(4):
        dim = chain_space_dim(A, n)
        vec = {int(i): Fraction(int(rng.integers(-3, 4)), int(rng.integers(1, 4)))
               for i in rng.choice(dim, size=min(dim, 6), replace=False)}
        w = ChainVector(A, {n: vec})
        col = w.dense(n)
        for op, fn in ((connes_B(A, n), apply_B), (cyclic_S(A, D, n), lambda c: apply_S(D, c)),
                       (lie_derivative(A, D, n), lambda c: apply_L(D, c))):
            if op.target >= 0:
                assert fn(w).dense(op.target) == op.matrix.apply(col)
        if n >= 1:
            assert apply_b(w).dense(n - 1) == hochschild_b(A, n).matrix.apply(col)
        if n >= 2:
            assert apply_iota(D, w).dense(n - 2) == contraction_iota(A, D, n).matrix.apply(col)
        assert apply_I(D, w) == apply_iota(D, w) + apply_S(D, w)


# graded commutators and the identity suite

def test_graded_commutator_sign():
    A = dual_numbers()
    X = block_operator(A, [lambda n: hochschild_b(A, n)], 3)
    Y = block_operator(A, [lambda n: connes_B(A, n)], 3)
    # both odd: anticommutator; one even: commutator
    assert graded_commutator(X, Y, 1, 1) == X @ Y + Y @ X
    assert graded_commutator(X, Y, 0, 1) == X @ Y - Y @ X


@pytest.mark.parametrize("name", ["dual", "CxC", "UT2"])
def test_identity_suite_small(name):
    A = ALGEBRAS[name]()
    cochains = [random_cochain(A, k, 40 + k) for k in (1, 2, 3)]
    res = identity_suite(A, cochains, n_max=4)
    assert res and all(c.holds for c in res), [c for c in res if not c.holds]


def test_identity_suite_detects_wrong_sign():
    """Flipping the sign in [b, iota_D] = -iota_dD must break the identity."""
    A = dual_numbers()
    D = random_cochain(A, 1, 0)
    dD = cochain_delta(A, D)
    for n in range(2, 5):
        lhs = (hochschild_b(A, n - 1).matrix @ contraction_iota(A, D, n).matrix
               + contraction_iota(A, D, n - 1).matrix @ hochschild_b(A, n).matrix)
        assert lhs == contraction_iota(A, dD, n).matrix.scale(-1)
        if not dD.is_zero() and not contraction_iota(A, dD, n).matrix.is_zero():
            assert lhs != contraction_iota(A, dD, n).matrix


def test_order_zero_counterexample():
    """Order-0 insertion is not compatible with dropping e from slots >= 1.

    On A = C, a = 1: L_a(1, 1) = (1, 1, 1), so B L_a(1, 1) = 3 (e, 1, 1, 1),
    while L_a B(1, 1) = 0 because B(1, 1) = 0.
    """
    A = complex_numbers()
    a = AValuedCochain.from_element(A, (1,))
    w = ChainVector.elementary(A, (0, 0))
    assert apply_L(a, w) == ChainVector.elementary(A, (0, 0, 0))
    assert apply_B(w).is_zero()
    assert apply_B(apply_L(a, w)) == ChainVector.elementary(A, (1, 0, 0, 0), 3)


# generalized trace

def test_trace_identity_for_N1():
    A = dual_numbers()
    for n in range(3):
        T = generalized_trace(A, 1, n).matrix
        assert T == type(T).identity(chain_space_dim(A, n))


def test_trace_example():
    A = dual_numbers()
    M = matrix_algebra(A, 2)
    d = A.dim

    def idx(p, q, a):
        return (p * 2 + q) * d + a
    w = ChainVector.elementary(M, (idx(0, 0, 0), idx(0, 0, 1)))
    assert apply_trace(A, 2, w) == ChainVector.elementary(A, (0, 1))
    w2 = ChainVector.elementary(M, (idx(0, 0, 0), idx(0, 1, 1)))
    assert apply_trace(A, 2, w2).is_zero()


@pytest.mark.parametrize("base,n_max", [(complex_numbers, 4), (dual_numbers, 3)])
def test_trace_matches_formula_and_is_chain_map(base, n_max):
    A = base()
    N = 2
    M = matrix_algebra(A, N)
    for n in range(n_max + 1):
        T = generalized_trace(A, N, n)
        if n <= 2:
            ref = oracles.operator_entries(M, lambda m: oracles.trace_tensor(A, N, m), n, n, A.dim)
            assert entries(T) == ref
        if n >= 1:
            assert (generalized_trace(A, N, n - 1).matrix @ hochschild_b(M, n).matrix
                    == hochschild_b(A, n).matrix @ T.matrix)
        if n < n_max:
            assert (generalized_trace(A, N, n + 1).matrix @ connes_B(M, n).matrix
                    == connes_B(A, n).matrix @ T.matrix)


# property tests

@settings(max_examples=12, deadline=None)
@given(st.sampled_from(sorted(ALGEBRAS)), st.integers(1, 3), st.integers(0, 10 ** 6))
def test_identities_hold_for_random_cochains(name, k, seed):
    A = ALGEBRAS[name]()
    cochains = [random_cochain(A, k, seed), random_cochain(A, 1 + seed % 2, seed + 1)]
    res = identity_suite(A, cochains, n_max=3)
    assert all(c.holds for c in res), [c for c in res if not c.holds]


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(sorted(ALGEBRAS)), st.integers(1, 4), st.data())
def test_b_and_B_square_zero_on_random_chains(name, n, data):
    A = ALGEBRAS[name]()
    dim = chain_space_dim(A, n)
    vec = data.draw(st.dictionaries(st.integers(0, dim - 1), st.integers(-5, 5), max_size=8))
    w = ChainVector(A, {n: vec})
    assert apply_b(apply_b(w)).is_zero()
    assert apply_B(apply_B(w)).is_zero()
    assert (apply_b(apply_B(w)) + apply_B(apply_b(w))).is_zero()
