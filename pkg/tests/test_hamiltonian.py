import numpy as np
import pytest

from hjlab.gelfand import assemble_discretization, make_operator
from hjlab.hamiltonian import HamiltonianSpec, check_HF, check_isaacs, eval_F
from hjlab.minimax import bellman_spec
from hjlab.pathspace import constant_history, history_of, make_time_grid, sample_bundle
from hjlab.presets import bilinear_game, heat_control


@pytest.fixture
def disc():
    return assemble_discretization(np.pi, 8)


def _hist(disc, x):
    times = make_time_grid(1.0, 4)
    return history_of(constant_history(times, x), 2)


def test_bellman_envelope_by_hand(disc):
    # F(z) = min_p [ p^2 + p (w, z) ] over p in {-1, 0, 1} = min(0, 1 - |(w,z)|)
    w = disc.basis_mode(1)
    spec = HamiltonianSpec(
        disc=disc, mode="bellman", P=(-1.0, 0.0, 1.0),
        f=lambda t, hist, p: p * w,
        ell=lambda t, hist, p: p * p,
        L0=1.0,
    )
    hist = _hist(disc, np.zeros(disc.n))
    for z in (0.3 * w, -2.0 * w, np.zeros(disc.n)):
        F, pi, qi = eval_F(spec, 0.0, hist, z)
        s = disc.inner(w, z)
        assert F == pytest.approx(min(0.0, 1.0 - abs(s)), abs=1e-14)
        assert qi == -1


def test_minmax_orders_by_hand(disc):
    # table over p, q in {-1, 1} for ell = p*q: minmax 1, maxmin -1
    spec_mm = HamiltonianSpec(
        disc=disc, mode="isaacs_minmax", P=(-1.0, 1.0), Q=(-1.0, 1.0),
        f=lambda t, hist, p, q: np.zeros(disc.n),
        ell=lambda t, hist, p, q: p * q,
        L0=1.0,
    )
    spec_xm = HamiltonianSpec(
        disc=disc, mode="isaacs_maxmin", P=(-1.0, 1.0), Q=(-1.0, 1.0),
        f=spec_mm.f, ell=spec_mm.ell, L0=1.0,
    )
    hist = _hist(disc, np.zeros(disc.n))
    z = np.zeros(disc.n)
    assert eval_F(spec_mm, 0.0, hist, z)[0] == 1.0
    assert eval_F(spec_xm, 0.0, hist, z)[0] == -1.0


def test_coupled_bilinear_counterexample_gap_two(disc):
    # the cost coupling p*q defeats the Isaacs condition with gap exactly 2
    spec = HamiltonianSpec(
        disc=disc, mode="isaacs_minmax", P=(-1.0, 1.0), Q=(-1.0, 1.0),
        f=lambda t, hist, p, q: np.zeros(disc.n),
        ell=lambda t, hist, p, q: p * q,
        L0=1.0,
    )
    op = make_operator(disc, "linear_laplacian")
    times = make_time_grid(1.0, 8)
    base = constant_history(times, 0.5 * disc.sine_mode(1))
    bundle = sample_bundle(disc, op, base, 0, L=1.0, size=4, seed=2)
    rep = check_isaacs(spec, bundle.members, [np.zeros(disc.n)], [0, 4])
    assert not rep.passed
    assert rep.details["max_gap"] == pytest.approx(2.0, abs=1e-14)


def test_separated_game_satisfies_isaacs():
    preset = bilinear_game()
    from hjlab.game import isaacs_spec

    prob = preset.problem
    spec = isaacs_spec(prob)
    times = prob.times
    base = preset.base
    z_list = [np.zeros(prob.disc.n), prob.disc.basis_mode(1)]
    rep = check_isaacs(spec, [base], z_list, [0, prob.nt // 2, prob.nt - 1])
    assert rep.passed
    assert rep.details["max_gap"] <= 1e-12


def test_hypotheses_hold_with_declared_constant():
    preset = heat_control(n=8, nt=16)
    prob = preset.problem
    spec = bellman_spec(prob)
    op = prob.op
    bundle = sample_bundle(prob.disc, op, preset.base, 0, L=1.0, size=6, seed=4)
    z_list = [np.zeros(prob.disc.n), prob.disc.basis_mode(1), prob.disc.basis_mode(2)]
    rep = check_HF(spec, bundle.members, z_list, [4, 8, 12])
    assert rep.passed


def test_hypotheses_fail_when_constant_understated():
    preset = heat_control(n=8, nt=16)
    prob = preset.problem
    spec = bellman_spec(prob)
    # same envelope with a deliberately too-small declared constant
    weak = HamiltonianSpec(disc=spec.disc, mode=spec.mode, P=spec.P,
                           f=spec.f, ell=spec.ell, L0=0.25)
    bundle = sample_bundle(prob.disc, prob.op, preset.base, 0, L=1.0,
                           size=6, seed=4)
    z_list = [np.zeros(prob.disc.n), prob.disc.basis_mode(1)]
    rep = check_HF(weak, bundle.members, z_list, [4, 8, 12])
    assert not rep.passed
