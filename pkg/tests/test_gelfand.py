import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjlab.gelfand import (
    apply_operator,
    assemble_discretization,
    check_coercivity_boundedness,
    check_monotonicity,
    make_operator,
    noncompact_sequence_report,
)


def test_second_difference_matrix_by_hand():
    # n = 3 on (0, pi): h = pi/4, (-x'' )_i = (2 x_i - x_{i-1} - x_{i+1}) / h^2
    disc = assemble_discretization(np.pi, 3)
    op = make_operator(disc, "linear_laplacian")
    h = np.pi / 4.0
    assert disc.h == pytest.approx(h, abs=1e-15)
    x = np.array([1.0, 2.0, 1.0])
    want = np.array([2.0 * 1 - 0 - 2, 2.0 * 2 - 1 - 1, 2.0 * 1 - 2 - 0]) / h**2
    got = apply_operator(op, 0.0, x)
    assert np.allclose(got, want, atol=1e-14)


def test_eigenvalue_formula_matches_dense_matrix():
    disc = assemble_discretization(np.pi, 9)
    n, h = disc.n, disc.h
    K = (np.diag(2.0 * np.ones(n)) - np.diag(np.ones(n - 1), 1)
         - np.diag(np.ones(n - 1), -1)) / h**2
    dense = np.sort(np.linalg.eigvalsh(K))
    formula = np.sort(disc.eigenvalues)
    assert np.allclose(dense, formula, rtol=1e-12)


def test_discrete_sine_norm_identity():
    # h * sum_i sin^2(k pi xi_i / l) = l/2 exactly on the grid
    disc = assemble_discretization(2.0, 12)
    for k in (1, 3, 7):
        s = disc.sine_mode(k)
        assert disc.norm_H(s) ** 2 == pytest.approx(1.0, abs=1e-12)
        b = disc.basis_mode(k)
        assert disc.norm_H(b) == pytest.approx(1.0, abs=1e-12)


def test_basis_modes_are_H_orthonormal():
    disc = assemble_discretization(np.pi, 8)
    G = np.array([[disc.inner(disc.basis_mode(i), disc.basis_mode(j))
                   for j in range(1, 9)] for i in range(1, 9)])
    assert np.max(np.abs(G - np.eye(8))) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_embedding_constant(seed):
    disc = assemble_discretization(np.pi, 16)
    x = np.random.default_rng(seed).standard_normal(16)
    assert disc.norm_H(x) <= disc.C1 * disc.norm_V(x) * (1 + 1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_dual_norm_pairing_bound(seed):
    disc = assemble_discretization(np.pi, 16)
    rng = np.random.default_rng(seed)
    g, x = rng.standard_normal(16), rng.standard_normal(16)
    assert abs(disc.pairing(g, x)) <= disc.norm_Vstar(g) * disc.norm_V(x) * (1 + 1e-10)


def test_dual_norm_tight_on_aligned_pair():
    # equality case of the duality bound: x solves K x = g (up to scaling)
    disc = assemble_discretization(np.pi, 10)
    n, h = disc.n, disc.h
    K = (np.diag(2.0 * np.ones(n)) - np.diag(np.ones(n - 1), 1)
         - np.diag(np.ones(n - 1), -1)) / h**2
    g = np.sin(np.linspace(0.3, 2.2, n))
    x = np.linalg.solve(K, g)
    lhs = abs(disc.pairing(g, x))
    rhs = disc.norm_Vstar(g) * disc.norm_V(x)
    assert lhs == pytest.approx(rhs, rel=1e-10)


@pytest.mark.parametrize("kind,p", [("linear_laplacian", 2.0),
                                    ("p_laplacian", 4.0), ("zero", 2.0)])
def test_monotonicity_all_kinds(kind, p):
    disc = assemble_discretization(np.pi, 16)
    op = make_operator(disc, kind, p=p)
    rng = np.random.default_rng(5)
    pairs = [(rng.standard_normal(16), rng.standard_normal(16)) for _ in range(100)]
    assert check_monotonicity(op, pairs).passed


def test_coercivity_constants_linear():
    disc = assemble_discretization(np.pi, 16)
    op = make_operator(disc, "linear_laplacian")
    assert op.c2 == 1.0 and op.p == 2.0
    rng = np.random.default_rng(6)
    rep = check_coercivity_boundedness(op, [rng.standard_normal(16) for _ in range(100)])
    assert rep.passed
    assert rep.details["coercivity_min_slack"] >= -1e-10


def test_coercivity_fails_for_zero_kind():
    disc = assemble_discretization(np.pi, 16)
    op = make_operator(disc, "zero")
    rng = np.random.default_rng(7)
    rep = check_coercivity_boundedness(op, [rng.standard_normal(16) for _ in range(20)])
    assert not rep.passed


def test_noncompact_sequence_unit_norms_weak_decay():
    rep = noncompact_sequence_report()
    assert rep.passed
    assert rep.details["norm_min"] == pytest.approx(1.0, abs=1e-10)
    assert rep.details["norm_max"] == pytest.approx(1.0, abs=1e-10)
