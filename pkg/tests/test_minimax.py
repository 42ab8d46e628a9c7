import numpy as np
import pytest

from hjlab.control import ControlProblem
from hjlab.evolution import apriori_constants
from hjlab.minimax import (
    ShiftedFunctional,
    ValueFunctional,
    _integral_table,
    bellman_spec,
    check_infinitesimal,
    check_subsolution,
    check_supersolution,
    default_z_samples,
    empirical_comparison,
    stability_sweep,
    witness_bundle,
)
from hjlab.pathspace import history_of
from hjlab.presets import heat_control


@pytest.fixture(scope="module")
def setup():
    preset = heat_control(n=8, nt=32)
    prob = preset.problem
    z_list = default_z_samples(prob.disc, seed=3, n_random=4, n_modes=2)
    bundle = witness_bundle(prob, preset.base, 0, z_list, size=24, seed=3)
    spec = bellman_spec(prob)
    table = _integral_table(spec, bundle, z_list, 0)
    return preset, z_list, bundle, spec, table


def test_value_terminal_identity(setup):
    preset, _, bundle, _, _ = setup
    prob = preset.problem
    u = ValueFunctional(prob)
    for member in bundle.members[:5]:
        hist = history_of(member, prob.nt)
        assert u.eval(prob.nt, member) == pytest.approx(
            prob.terminal(hist), abs=1e-14)


def test_value_is_minimax_solution(setup):
    preset, z_list, bundle, spec, table = setup
    prob = preset.problem
    u = ValueFunctional(prob)
    interior = list(prob.control_indices[1:-1])
    sup = check_supersolution(u, spec, bundle, z_list, interior,
                              terminal=prob.terminal, table=table)
    sub = check_subsolution(u, spec, bundle, z_list, interior,
                            terminal=prob.terminal, table=table)
    inf = check_infinitesimal(u, spec, bundle, z_list,
                              control_indices=prob.control_indices, table=table)
    assert sup.passed and sub.passed and inf.passed
    assert sup.details["terminal_min_slack"] >= -1e-8
    assert sub.details["terminal_min_slack"] >= -1e-8


def test_shifted_values_fail_one_predicted_side(setup):
    preset, z_list, bundle, spec, table = setup
    prob = preset.problem
    u = ValueFunctional(prob)
    interior = list(prob.control_indices[1:-1])
    delta = 1e-6
    up = ShiftedFunctional(u, +delta)
    dn = ShiftedFunctional(u, -delta)
    # the up-shift breaks u(T) <= h, the down-shift u(T) >= h; the
    # respective opposite sides keep their slack
    assert not check_subsolution(up, spec, bundle, z_list, interior,
                                 terminal=prob.terminal, table=table).passed
    assert check_supersolution(up, spec, bundle, z_list, interior,
                               terminal=prob.terminal, table=table).passed
    assert not check_supersolution(dn, spec, bundle, z_list, interior,
                                   terminal=prob.terminal, table=table).passed
    assert check_subsolution(dn, spec, bundle, z_list, interior,
                             terminal=prob.terminal, table=table).passed


def test_terminal_comparison_is_pointwise_monotone(setup):
    preset, _, bundle, _, _ = setup
    prob = preset.problem

    def with_terminal(delta):
        lifted = ControlProblem(
            name=f"{prob.name}+{delta:g}", disc=prob.disc, op=prob.op,
            times=prob.times, control_indices=prob.control_indices, P=prob.P,
            f=prob.f, ell=prob.ell,
            terminal=lambda hist: prob.terminal(hist) + delta,
            Lf=prob.Lf, bundle_L=prob.bundle_L,
        )
        return ValueFunctional(lifted)

    rep = empirical_comparison(ValueFunctional(prob), with_terminal(0.3),
                               bundle, list(prob.control_indices))
    assert rep.passed
    assert rep.details["max_excess"] <= 1e-12


def test_stability_ladder_constant_shift_exact(setup):
    preset, _, bundle, _, _ = setup
    prob = preset.problem
    span = float(prob.times[-1])

    def shifted_factory(n):
        return ControlProblem(
            name=f"{prob.name}~1/{n}", disc=prob.disc, op=prob.op,
            times=prob.times, control_indices=prob.control_indices, P=prob.P,
            f=prob.f, ell=lambda t, hist, p: prob.ell(t, hist, p) + 1.0 / n,
            terminal=prob.terminal, Lf=prob.Lf, bundle_L=prob.bundle_L,
        )

    states = [(0, preset.base), (prob.control_indices[2], bundle.members[3])]
    rep = stability_sweep(shifted_factory, prob, states, kappa_s=span)
    assert rep.passed
    # the shift family is exact: gap n = span / n with no slack consumed
    for row in rep.rows:
        assert row["gap"] == pytest.approx(span / row["n"], abs=1e-12)


def test_stability_ladder_scaled_cost_within_bound(setup):
    preset, _, bundle, _, _ = setup
    prob = preset.problem
    consts = apriori_constants(prob.disc, prob.op, preset.base, 0, prob.bundle_L)
    span = float(prob.times[-1])
    # |v_n - v| <= (1/n) sup |integral of ell| <= (span/n)(|w|_H C2 + 1/2)
    w_norm = np.sqrt(1.25)
    kappa = span * (w_norm * consts["C2"] + 0.5)

    def scaled_factory(n):
        return ControlProblem(
            name=f"{prob.name}*(1+1/{n})", disc=prob.disc, op=prob.op,
            times=prob.times, control_indices=prob.control_indices, P=prob.P,
            f=prob.f,
            ell=lambda t, hist, p: (1.0 + 1.0 / n) * prob.ell(t, hist, p),
            terminal=prob.terminal, Lf=prob.Lf, bundle_L=prob.bundle_L,
        )

    states = [(0, preset.base), (prob.control_indices[2], bundle.members[3])]
    rep = stability_sweep(scaled_factory, prob, states, kappa_s=kappa)
    assert rep.passed
