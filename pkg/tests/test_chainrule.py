import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjlab.chainrule import (
    _smooth_pair,
    calculus_convergence_study,
    check_chain_rule,
    check_derivative_limits,
    check_parts,
    quadratic_plus_integral,
    reconstructed_derivative,
    smooth_composite,
)
from hjlab.gelfand import apply_operator


@pytest.fixture(scope="module")
def pair():
    return _smooth_pair(12, 64, 1.0)


def test_reconstructed_derivative_is_scheme_identity(pair):
    disc, op, x, _ = pair
    dt = x.dt
    for i in (0, 10, 40, 63):
        xp = reconstructed_derivative(disc, op, x, i)
        quotient = (x.values[i + 1] - x.values[i]) / dt
        assert np.allclose(xp, quotient, atol=1e-9)
        # and it really is forcing minus operator value at the new node
        direct = x.forcing[i] - apply_operator(op, float(x.times[i + 1]),
                                               x.values[i + 1])
        assert np.array_equal(xp, direct)


def test_integration_by_parts(pair):
    disc, op, x, y = pair
    rep = check_parts(disc, op, x, y, 0, x.nt)
    assert rep.passed


def test_chain_rule_both_functionals(pair):
    disc, op, x, _ = pair
    for fn in (quadratic_plus_integral(disc.basis_mode(1)),
               smooth_composite(0.7, 0.3, disc.basis_mode(2), 0.5)):
        rep = check_chain_rule(disc, op, fn, x, 0, x.nt)
        assert rep.passed, rep.details


def test_derivative_limit_representations(pair):
    disc, _, x, _ = pair
    e = 0.8 * disc.basis_mode(1)
    for fn in (quadratic_plus_integral(disc.basis_mode(1)),
               smooth_composite(0.7, 0.3, disc.basis_mode(2), 0.5)):
        rep = check_derivative_limits(disc, fn, x, x.nt // 4, e)
        assert rep.passed, rep.details


def test_convergence_orders():
    rep = calculus_convergence_study()
    assert rep.passed
    for seq in rep.details["orders"].values():
        assert min(seq) >= 0.9


@settings(max_examples=10, deadline=None)
@given(st.floats(min_value=-1.5, max_value=1.5),
       st.floats(min_value=-1.5, max_value=1.5))
def test_chain_rule_holds_for_random_weights(c1, c2):
    disc, op, x, _ = _smooth_pair(8, 32, 1.0)
    w = c1 * disc.basis_mode(1) + c2 * disc.basis_mode(2)
    rep = check_chain_rule(disc, op, quadratic_plus_integral(w), x, 0, x.nt)
    assert rep.passed
