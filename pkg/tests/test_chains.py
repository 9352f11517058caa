from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyclo.algebra import complex_numbers, dual_numbers, two_point
from cyclo.chains import (AValuedCochain, ChainError, ChainVector, DualFunctional, all_multi_indices,
                          basis_slots, chain_space_dim, decode, encode, encode_slots, random_cochain,
                          tensor_codec)


def test_chain_space_dim_examples():
    assert chain_space_dim(2, 0) == 2
    assert chain_space_dim(2, 2) == 12
    assert chain_space_dim(1, 3) == 2


@pytest.mark.parametrize("d", [1, 2, 3, 4])
@pytest.mark.parametrize("n", range(7))
def test_dim_matches_enumeration(d, n):
    if (d + 1) * d ** n > 50_000:
        pytest.skip("enumeration too large")
    multis = list(all_multi_indices(d, n))
    assert len(multis) == chain_space_dim(d, n)
    assert [encode(d, m) for m in multis] == list(range(len(multis)))


def test_codec_examples():
    A = dual_numbers()
    e = A.dim
    flat = tensor_codec(A, 1, multi=(e, 1))
    assert tensor_codec(A, 1, flat=flat) == (e, 1)
    assert tensor_codec(A, 0, multi=(1,)) == 1
    with pytest.raises(ChainError):
        tensor_codec(A, 1, multi=(0, 2))
    with pytest.raises(ChainError):
        tensor_codec(A, 0, multi=(e,))  # no unit in degree 0


@settings(max_examples=100)
@given(st.integers(1, 4), st.integers(0, 5), st.data())
def test_codec_round_trip(d, n, data):
    flat = data.draw(st.integers(0, chain_space_dim(d, n) - 1))
    assert encode(d, decode(d, n, flat)) == flat


@pytest.mark.parametrize("d,n", [(2, 3), (3, 2), (1, 4)])
def test_vectorized_codec(d, n):
    slots = basis_slots(d, n)
    assert slots.tolist() == [list(m) for m in all_multi_indices(d, n)]
    assert encode_slots(d, slots).tolist() == list(range(len(slots)))


def test_degree_zero_excludes_unit():
    A = two_point()
    with pytest.raises(ChainError):
        ChainVector(A, {0: {2: 1}})
    ChainVector(A, {1: {encode(2, (2, 0)): 1}})


def test_chain_arithmetic_and_parity():
    A = dual_numbers()
    u = ChainVector.elementary(A, (0,), 2)
    v = ChainVector.elementary(A, (2, 1, 1), Fraction(1, 3))
    odd = ChainVector.elementary(A, (0, 1))
    assert (u + v).parity == "even"
    assert odd.parity == "odd"
    assert (u + odd).parity == "mixed"
    assert (u - u).is_zero()
    assert (u + v).truncate(0) == u
    assert v.scale(3).component(2) == {encode(2, (2, 1, 1)): 1}


def test_chain_json_round_trip():
    A = two_point()
    w = ChainVector.from_terms(A, [((0,), 1), ((2, 0, 1), Fraction(-1, 2)), ((1, 1), 3)])
    assert ChainVector.from_json(A, w.to_json()) == w
    assert w.to_json()[0] == {"degree": 0, "terms": [{"tensor": ["e1"], "coeff": "1"}]}


def test_chain_json_rejects_bad_terms():
    A = two_point()
    with pytest.raises(ChainError):
        ChainVector.from_json(A, [{"degree": 1, "terms": [{"tensor": ["e1"], "coeff": "1"}]}])
    with pytest.raises(ChainError):
        ChainVector.from_json(A, [{"degree": 0, "terms": [{"tensor": ["zz"], "coeff": "1"}]}])


def test_random_cochain_determinism_and_shape():
    A = dual_numbers()
    D = random_cochain(A, 1, 0)
    assert D == random_cochain(A, 1, 0)
    assert np.asarray(D.tensor).shape == (2, 2)
    assert random_cochain(A, 2, 1) != random_cochain(A, 2, 2)
    vals = {x for x in np.asarray(random_cochain(A, 3, 7).tensor).ravel()}
    assert vals <= {-2, -1, 0, 1, 2}


def test_cochain_evaluation_and_extension_by_zero():
    A = two_point()
    m = AValuedCochain.multiplication(A)
    assert m.evaluate((1, 0), (1, 0)) == (1, 0)
    assert m.evaluate((1, 0), (0, 1)) == (0, 0)
    ident = AValuedCochain.identity(A)
    assert ident.evaluate((3, 4)) == (3, 4)


def test_dual_functional_pairing():
    A = complex_numbers()
    f = DualFunctional.coordinate(A, (1, 0))   # e (x) 1
    w = ChainVector.from_terms(A, [((1, 0), 5), ((0, 0), 2)])
    assert f(w) == 5
    assert DualFunctional(A, 1, {})(w) == 0
    with pytest.raises(ChainError):
        DualFunctional(A, 0, {1: 1})
