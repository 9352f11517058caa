from fractions import Fraction

import numpy as np
import pytest

from cyclo.algebra import STANDARD_ALGEBRAS, dual_numbers, matrix_units, two_point
from cyclo.chains import chain_space_dim
from cyclo.deformation import constant_family, x_squared_t_family
from cyclo.exactnum.qmatrix import QMatrix
from cyclo.homology import hochschild_b, hp_dims
from cyclo.retract import (CoboundingCochain, NotFound, RetractError, SolvabilityLost, Unsolvable,
                           bidimension_upper, build_retract, check_contraction, coboundary_system,
                           cohomology_basis, contraction_alpha, homotopy_identity_on_homology,
                           hp_exact_from_retract, retract_transport, solve_universal_coboundary)


# cobounding cochains

@pytest.mark.parametrize("name", ["CxC", "M2", "C"])
def test_separable_algebras_have_order_zero_phi(name):
    A = STANDARD_ALGEBRAS[name]()
    phi = solve_universal_coboundary(A, 0)
    assert isinstance(phi, CoboundingCochain)
    # float re-check of the linear system, independent of the exact solver
    M, rhs = coboundary_system(A, 0)
    x = np.array([float(phi.table[r, j]) for j in range(A.dim ** 0) for r in range(phi.table.shape[0])])
    assert np.allclose(M.to_float() @ x, [float(v) for v in rhs], atol=0)


@pytest.mark.parametrize("n", range(4))
def test_dual_numbers_unsolvable_with_certificate(n):
    A = dual_numbers()
    res = solve_universal_coboundary(A, n)
    assert isinstance(res, Unsolvable) and res.n == n
    M, rhs = coboundary_system(A, n)
    y = list(res.certificate)
    assert not any(M.T.apply(y))
    assert sum(a * b for a, b in zip(y, rhs)) != 0


def test_minimal_norm_solution_also_solves():
    A = two_point()
    phi = solve_universal_coboundary(A, 0, minimal_norm=True)
    assert isinstance(phi, CoboundingCochain)


def test_bidimension():
    assert bidimension_upper(two_point(), 2) == 0
    assert bidimension_upper(matrix_units(2), 1) == 0
    res = bidimension_upper(dual_numbers(), 4)
    assert res == NotFound(4) and str(res) == "NotFound(4)"
    with pytest.raises(RetractError):
        bidimension_upper(two_point(), -1)


# the contraction alpha

def test_contraction_identity_on_CxC():
    A = two_point()
    phi = solve_universal_coboundary(A, 0)
    assert check_contraction(A, phi, 3) == [1, 2, 3]
    for k in (1, 2, 3):
        lhs = (hochschild_b(A, k + 1).matrix @ contraction_alpha(A, phi, k)
               + contraction_alpha(A, phi, k - 1) @ hochschild_b(A, k).matrix)
        assert lhs == QMatrix.identity(chain_space_dim(A, k))
        # the transposed identity on functionals
        lhs_t = (contraction_alpha(A, phi, k).T @ hochschild_b(A, k + 1).matrix.T
                 + hochschild_b(A, k).matrix.T @ contraction_alpha(A, phi, k - 1).T)
        assert lhs_t == QMatrix.identity(chain_space_dim(A, k))


def test_contraction_shapes():
    A = matrix_units(2)
    phi = solve_universal_coboundary(A, 0)
    for k in (0, 1, 2):
        assert contraction_alpha(A, phi, k).shape == (chain_space_dim(A, k + 1), chain_space_dim(A, k))


# the finite retract

@pytest.mark.parametrize("name,expected", [("CxC", (2, 0)), ("M2", (1, 0)), ("C", (1, 0))])
def test_retract_homology(name, expected):
    A = STANDARD_ALGEBRAS[name]()
    phi = solve_universal_coboundary(A, 0)
    assert hp_exact_from_retract(A, phi, 1) == expected
    rep = hp_dims(A, 3)
    assert (rep.hp_even, rep.hp_odd) == expected


def test_retract_identities():
    A = two_point()
    rc = build_retract(A, solve_universal_coboundary(A, 0), 1)
    n0 = int(sum(rc.sizes0))
    assert rc.R @ rc.I == QMatrix.identity(n0)
    assert rc.checks["R_I_identity"] and rc.checks["I_chain_map"] and rc.checks["R_chain_map"]
    assert homotopy_identity_on_homology(rc)
    assert len(cohomology_basis(rc)) == rc.homology_dims()[0]


def test_retract_needs_large_enough_window():
    A = two_point()
    # a fake order-1 cochain built from the order-0 one only to trip the precondition 2N > n + 1
    phi = solve_universal_coboundary(A, 0)
    bogus = CoboundingCochain(A, 1, phi.table)
    with pytest.raises(RetractError):
        build_retract(A, bogus, 1)


# transport on the retract

def test_retract_transport_constant_family_is_identity():
    rep = retract_transport(constant_family(two_point()), 0, 1, 0, 1, Fraction(1, 4))
    assert np.array_equal(rep.final, rep.initial)
    assert rep.residuals["pairing_drift"] == 0.0
    assert rep.hp == (2, 0)


def test_retract_transport_x_squared_t():
    rep = retract_transport(x_squared_t_family(), 0, 1, 1, Fraction(3, 2), Fraction(1, 64))
    assert rep.residuals["pairing_drift"] < 1e-6
    assert np.allclose(rep.pairings_initial, np.eye(2), atol=1e-12)
    doc = rep.to_json()
    assert doc["hp"] == [2, 0] and doc["solvable_grid"][0] == "1"


def test_retract_transport_loses_solvability_at_zero():
    with pytest.raises(SolvabilityLost) as info:
        retract_transport(x_squared_t_family(), 0, 1, Fraction(-1, 2), Fraction(1, 2), Fraction(1, 4),
                          check_interval=False)
    assert info.value.u == 0
