from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyclo.algebra import complex_numbers, dual_numbers, two_point
from cyclo.chains import ChainVector, chain_space_dim
from cyclo.chern import (ChernError, NotIdempotent, NotInvertible, ParityMismatch, PeriodicChain,
                         character_functional, chern_idempotent, chern_invertible, coordinate_functional,
                         inverse, matrix_element, pair)
from cyclo.deformation import fiber, x_squared_t_family
from cyclo.operators import apply_B, apply_b


def test_degree_zero_is_P():
    A = two_point()
    ch = chern_idempotent(A, (1, 0), 4)
    assert ch.component(0) == ChainVector.elementary(A, (0,))


def test_unit_in_C_degree_two():
    A = complex_numbers()
    ch = chern_idempotent(A, (1,), 2)
    e = A.dim
    expect = ChainVector.from_terms(A, [((0, 0, 0), -2), ((e, 0, 0), 1)])
    assert ch.component(2) == expect


def test_matrix_idempotent_closed_through_8():
    A = two_point()
    P = matrix_element(A, 2, {(0, 0): (1, 0)})
    ch = chern_idempotent(A, P, 8, N=2)
    assert ch.closedness == {1: True, 3: True, 5: True, 7: True}
    w = ch.chain
    # b(ch_4) = -B(ch_2) written out
    assert apply_b(w.restrict([4])) == -apply_B(w.restrict([2]))


def test_non_idempotent_rejected():
    with pytest.raises(NotIdempotent):
        chern_idempotent(dual_numbers(), (1, 1), 2)
    with pytest.raises(ChernError):
        chern_idempotent(two_point(), (1, 0), -1)


def test_literal_odd_examples():
    A = two_point()
    one = chern_invertible(A, (1, 1), 1, literal=True)
    assert one.component(1) == ChainVector.from_terms(A, [((i, j), 1) for i in (0, 1) for j in (0, 1)])
    U = (1, -1)
    assert inverse(A, U) == (1, -1)
    ch = chern_invertible(A, U, 1, literal=True)
    expect = ChainVector.from_terms(A, [((i, j), U[i] * U[j]) for i in (0, 1) for j in (0, 1)])
    assert ch.component(1) == expect


def test_lifted_odd_character_closed_through_9():
    A = two_point()
    ch = chern_invertible(A, (1, -1), 9)
    assert ch.closed and set(ch.closedness) == {0, 2, 4, 6, 8}


def test_literal_formula_is_not_closed_in_general():
    # the plain formula leaves e-free slots and is not a cycle for U = e1 - e2
    ch = chern_invertible(two_point(), (1, -1), 5, literal=True)
    assert not ch.closed


def test_lift_vanishes_for_the_unit():
    assert chern_invertible(two_point(), (1, 1), 5).chain.is_zero()


def test_nilpotent_perturbation_of_unit():
    A = fiber(x_squared_t_family(), 0)
    assert inverse(A, (1, 1)) == (1, -1)
    ch = chern_invertible(A, (1, 1), 5)
    assert ch.closed and set(ch.closedness) == {0, 2, 4}


def test_not_invertible():
    with pytest.raises(NotInvertible):
        inverse(dual_numbers(), (0, 1))
    with pytest.raises(NotInvertible):
        chern_invertible(two_point(), (1, 0), 1)


def test_pairings_with_characters():
    A = two_point()
    chi1 = character_functional(A, [1, 0])
    e1 = chern_idempotent(A, (1, 0), 6)
    e2 = chern_idempotent(A, (0, 1), 6)
    assert pair([chi1], e1) == 1
    assert pair([chi1], e2) == 0
    assert pair([], e1) == 0
    # K-theory pairing is the pairing with ch, by definition
    assert pair([chi1], e1) == pair([chi1], e1.chain)


def test_parity_mismatch():
    A = two_point()
    with pytest.raises(ParityMismatch):
        pair([coordinate_functional(A, (0, 1))], chern_idempotent(A, (1, 0), 2))


def test_large_degree_warns():
    with pytest.warns(UserWarning):
        chern_idempotent(complex_numbers(), (1,), 22)


def test_periodic_chain_json():
    doc = chern_idempotent(two_point(), (1, 0), 4).to_json()
    assert doc["parity"] == "even" and doc["cutoff"] == 4
    assert doc["closedness"] == {"1": True, "3": True}


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([two_point, dual_numbers]), st.data())
def test_character_cocycle_kills_boundaries(make, data):
    """<chi, (b + B) eta> = 0 for a character chi and any odd chain eta in the window."""
    A = make()
    comps = {}
    for n in (1, 3):
        dim = chain_space_dim(A, n)
        comps[n] = data.draw(st.dictionaries(st.integers(0, dim - 1), st.integers(-4, 4), max_size=6))
    eta = ChainVector(A, comps)
    boundary = (apply_b(eta) + apply_B(eta)).restrict([0, 2])
    chars = [[1, 0], [0, 1]] if make is two_point else [[1, 0]]
    for values in chars:
        assert pair([character_functional(A, values)], boundary) == 0


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 3), st.sampled_from([(1, 0), (0, 1), (1, 1)]))
def test_idempotent_characters_closed(n, P):
    ch = chern_idempotent(two_point(), P, 2 * n)
    assert ch.closed
    assert isinstance(ch, PeriodicChain) and ch.parity == "even"
