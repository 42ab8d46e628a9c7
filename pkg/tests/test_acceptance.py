"""Acceptance gate: twelve desk-scale criteria, one test each.

Run with ``pytest tests/test_acceptance.py -v`` so every criterion shows
its own pass/fail line.  Scale caps throughout: n <= 32 grid points,
dt >= 1/64, at most 4 controls per side, at most 6 control intervals,
bundles of at most 64 members.
"""

import json

import numpy as np
import pytest
from click.testing import CliRunner

from hjlab.cli import main as cli_main
from hjlab.control import check_dpp, check_value_regularity
from hjlab.evolution import (
    apriori_constants,
    check_apriori_bound,
    heat_accuracy_study,
    verify_continuous_dependence,
)
from hjlab.game import (
    AffineGameValue,
    check_guarantee,
    check_nu_derivatives,
    game_bundle,
    isaacs_spec,
    make_partition,
)
from hjlab.gelfand import (
    assemble_discretization,
    check_coercivity_boundedness,
    check_monotonicity,
    make_operator,
    noncompact_sequence_report,
)
from hjlab.hamiltonian import HamiltonianSpec, check_HF, check_isaacs
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
from hjlab.control import ControlProblem, saturating_dependence_report
from hjlab.pathspace import constant_history, make_time_grid, sample_bundle
from hjlab.presets import (
    bilinear_game,
    build_preset,
    game_as_control,
    heat_control,
    heat_delay,
    plap_decay,
)


@pytest.fixture(scope="module")
def heat():
    return heat_control()


@pytest.fixture(scope="module")
def game4():
    preset = bilinear_game()
    val = AffineGameValue(preset.problem, preset.terminal_weight,
                          preset.terminal_const)
    bundle = game_bundle(preset.problem, preset.base, val, size=24, seed=11)
    return preset, val, bundle


def test_criterion_01_operator_hypotheses():
    # linear: monotone + coercive with c2 = 1, p = 2, slack >= -1e-10;
    # p = 4 diffusion on 100 random pairs; the zero kind must FAIL
    # coercivity and exhibit the non-vanishing weakly-null sequence
    disc = assemble_discretization(np.pi, 32)
    rng = np.random.default_rng(101)
    pairs = [(rng.standard_normal(32), rng.standard_normal(32))
             for _ in range(100)]
    samples = [u for u, _ in pairs]

    lin = make_operator(disc, "linear_laplacian")
    assert lin.c2 == 1.0 and lin.p == 2.0
    assert check_monotonicity(lin, pairs).passed
    rep = check_coercivity_boundedness(lin, samples)
    assert rep.passed and rep.details["coercivity_min_slack"] >= -1e-10

    plap = make_operator(disc, "p_laplacian", p=4.0)
    assert check_monotonicity(plap, pairs).passed
    assert check_coercivity_boundedness(plap, samples).passed

    zero = make_operator(disc, "zero")
    assert not check_coercivity_boundedness(zero, samples).passed
    seq = noncompact_sequence_report(n=32)
    assert seq.passed
    assert seq.details["norm_min"] >= 1.0 - 1e-10
    assert seq.details["norm_max"] <= 1.0 + 1e-10


def test_criterion_02_evolution_accuracy():
    # max-node error <= 0.02 at (n=32, dt=1/64) against the separated
    # closed-form solution; orders >= 0.9 in time and >= 1.8 in space
    rep = heat_accuracy_study(n_ref=32, dt_ref=1.0 / 64)
    assert rep.passed, rep.details
    assert rep.details["total_error"] <= 0.02
    assert min(rep.details["temporal_orders"]) >= 0.9
    assert min(rep.details["spatial_orders"]) >= 1.8


def test_criterion_03_apriori_bound_every_shipped_bundle(game4):
    # every member of every preset's bundle obeys the closed-form energy
    # bounds (sup-norm within C2), with zero violations
    worst = np.inf
    for preset in (heat_control(), heat_delay(), plap_decay()):
        prob = preset.problem
        bundle = sample_bundle(prob.disc, prob.op, preset.base, 0,
                               L=prob.bundle_L, size=32, seed=7)
        rep = check_apriori_bound(bundle)
        assert rep.passed, (preset.name, rep.details)
        worst = min(worst, rep.details["min_slack"])
    _, _, gbundle = game4
    rep = check_apriori_bound(gbundle)
    assert rep.passed, rep.details
    worst = min(worst, rep.details["min_slack"])
    assert worst > 0.0  # zero violations, with margin


def test_criterion_04_continuous_dependence():
    # exp(Lf (t - t0)) * initial-gap bound on 50 randomized pairs with
    # discretization slack; the memoryless growth instance saturates the
    # bound within 3 * tol_disc at the end time
    disc = assemble_discretization(np.pi, 16)
    op = make_operator(disc, "linear_laplacian")
    times = make_time_grid(1.0, 64)
    rng = np.random.default_rng(104)
    w = disc.basis_mode(1)

    def rhs(t, hist):
        return np.tanh(disc.inner(hist.latest, w)) * w

    for _ in range(50):
        a = sum(rng.uniform(-0.5, 0.5) * disc.basis_mode(k) for k in (1, 2, 3))
        b = sum(rng.uniform(-0.5, 0.5) * disc.basis_mode(k) for k in (1, 2, 3))
        rep = verify_continuous_dependence(
            disc, op, constant_history(times, a), constant_history(times, b),
            0, rhs, 1.0)
        assert rep.passed, rep.details

    sat = saturating_dependence_report()
    assert sat.passed, sat.details
    assert sat.details["end_gap"] <= sat.details["tightness_limit"]


def test_criterion_05_dynamic_programming(game4):
    # two-sided enumeration agrees to 1e-10 between every ordered pair of
    # control-grid nodes, on the heat, delay, and projected-game presets
    presets = [heat_control(), heat_delay(), game_as_control(game4[0])]
    worst = 0.0
    for preset in presets:
        stages = preset.problem.n_stages
        for t0 in range(stages):
            for t1 in range(t0 + 1, stages):
                rep = check_dpp(preset.problem, preset.base, t0, t1)
                assert rep.passed, (preset.name, t0, t1, rep.details)
                worst = max(worst, rep.details["gap"])
    assert worst <= 1e-10


def test_criterion_06_value_regularity(heat):
    # space-Lipschitz with constant Lf (T - t0 + 1) e^{Lf (T - t0)} and
    # time bound proportional to |t1 - t0|, measured ratios <= 1
    for preset in (heat, heat_delay()):
        prob = preset.problem
        consts = apriori_constants(prob.disc, prob.op, preset.base, 0,
                                   prob.bundle_L)
        bundle = sample_bundle(prob.disc, prob.op, preset.base, 0,
                               L=prob.bundle_L, size=12, seed=7)
        other = constant_history(prob.times, 0.5 * prob.disc.sine_mode(2))
        rep = check_value_regularity(
            prob,
            space_pairs=[(0, preset.base, other),
                         (1, bundle.members[3], bundle.members[5]),
                         (2, bundle.members[1], bundle.members[7])],
            time_pairs=[(0, 1, preset.base), (1, 2, bundle.members[3]),
                        (0, 3, bundle.members[5])],
            C=consts["C"], L=prob.bundle_L)
        assert rep.passed, (preset.name, rep.details)
        for row in rep.rows:
            assert row["ratio"] <= 1.0


def test_criterion_07_minimax_certification(heat):
    # the enumerated value is a directional-inequality solution: witness
    # slack within tol_mm on a 64-member bundle, z from {0, +/-modes,
    # 8 random}, at every control-grid time; shifted foils break exactly
    # the predicted one-sided terminal check
    prob = heat.problem
    z_list = default_z_samples(prob.disc, seed=7, n_random=8, n_modes=3)
    assert len(z_list) == 15
    bundle = witness_bundle(prob, heat.base, 0, z_list, size=64, seed=7)
    assert bundle.size == 64
    spec = bellman_spec(prob)
    t_all = list(prob.control_indices[:-1])
    table = _integral_table(spec, bundle, z_list, 0)
    u = ValueFunctional(prob)

    sup = check_supersolution(u, spec, bundle, z_list, t_all,
                              terminal=prob.terminal, table=table)
    sub = check_subsolution(u, spec, bundle, z_list, t_all,
                            terminal=prob.terminal, table=table)
    inf = check_infinitesimal(u, spec, bundle, z_list,
                              control_indices=prob.control_indices,
                              table=table)
    assert sup.passed, sup.details
    assert sub.passed, sub.details
    assert inf.passed, inf.details

    delta = 1e-6
    up = ShiftedFunctional(u, +delta)
    dn = ShiftedFunctional(u, -delta)
    up_sub = check_subsolution(up, spec, bundle, z_list, t_all,
                               terminal=prob.terminal, table=table)
    dn_sup = check_supersolution(dn, spec, bundle, z_list, t_all,
                                 terminal=prob.terminal, table=table)
    assert not up_sub.passed and up_sub.details["terminal_min_slack"] < 0
    assert not dn_sup.passed and dn_sup.details["terminal_min_slack"] < 0
    assert check_supersolution(up, spec, bundle, z_list, t_all,
                               terminal=prob.terminal, table=table).passed
    assert check_subsolution(dn, spec, bundle, z_list, t_all,
                             terminal=prob.terminal, table=table).passed


def test_criterion_08_comparison_and_stability():
    # terminal-ordered values compare pointwise; perturbed-cost values
    # approach the limit at rate kappa_s / n: exactly for the constant
    # shift, within the derived constant for the scaled running cost
    preset = heat_control(n=8, nt=32)
    prob = preset.problem
    bundle = sample_bundle(prob.disc, prob.op, preset.base, 0,
                           L=prob.bundle_L, size=12, seed=7)
    span = float(prob.times[-1])

    def lift_terminal(delta):
        return ControlProblem(
            name=f"{prob.name}+h{delta:g}", disc=prob.disc, op=prob.op,
            times=prob.times, control_indices=prob.control_indices,
            P=prob.P, f=prob.f, ell=prob.ell,
            terminal=lambda hist: prob.terminal(hist) + delta,
            Lf=prob.Lf, bundle_L=prob.bundle_L)

    cmp_rep = empirical_comparison(
        ValueFunctional(prob), ValueFunctional(lift_terminal(0.25)),
        bundle, list(prob.control_indices))
    assert cmp_rep.passed and cmp_rep.details["max_excess"] <= 1e-12

    def shift_factory(n):
        return ControlProblem(
            name=f"{prob.name}~1/{n}", disc=prob.disc, op=prob.op,
            times=prob.times, control_indices=prob.control_indices,
            P=prob.P, f=prob.f,
            ell=lambda t, hist, p: prob.ell(t, hist, p) + 1.0 / n,
            terminal=prob.terminal, Lf=prob.Lf, bundle_L=prob.bundle_L)

    states = [(0, preset.base), (prob.control_indices[2], bundle.members[3])]
    shift_rep = stability_sweep(shift_factory, prob, states, kappa_s=span)
    assert shift_rep.passed
    for row in shift_rep.rows:
        assert row["gap"] == pytest.approx(span / row["n"], abs=1e-12)

    consts = apriori_constants(prob.disc, prob.op, preset.base, 0,
                               prob.bundle_L)
    kappa = span * (np.sqrt(1.25) * consts["C2"] + 0.5)

    def scale_factory(n):
        return ControlProblem(
            name=f"{prob.name}*(1+1/{n})", disc=prob.disc, op=prob.op,
            times=prob.times, control_indices=prob.control_indices,
            P=prob.P, f=prob.f,
            ell=lambda t, hist, p: (1.0 + 1.0 / n) * prob.ell(t, hist, p),
            terminal=prob.terminal, Lf=prob.Lf, bundle_L=prob.bundle_L)

    assert stability_sweep(scale_factory, prob, states, kappa_s=kappa).passed


def test_criterion_09_game_bracketing(game4):
    # disturbance guarantee <= stage-tree value <= controller guarantee;
    # the separated envelope has pointwise min-max gap <= 1e-12; coupling
    # the costs bilinearly produces the gap-2 counterexample
    preset, val, bundle = game4
    prob = preset.problem
    rep = check_guarantee(prob, val, bundle, preset.base,
                          eps_ladder=(0.2,), stage_ladder=(2,))
    assert rep.details["bracket_ok"], rep.rows
    row = rep.rows[0]
    assert row["J_b"] <= row["tree_lower"] + 1e-12
    assert row["tree_lower"] <= row["tree_upper"] + 1e-12
    assert row["tree_upper"] <= row["J_a"] + 1e-12

    rng = np.random.default_rng(109)
    z_list = [np.zeros(prob.disc.n), prob.disc.basis_mode(1),
              rng.standard_normal(prob.disc.n)]
    t_idx = list(range(0, prob.nt, 4))
    isa = check_isaacs(isaacs_spec(prob), bundle.members[:4], z_list, t_idx)
    assert isa.passed and isa.details["max_gap"] <= 1e-12

    coupled = HamiltonianSpec(
        disc=prob.disc, mode="isaacs_minmax", P=(-1.0, 1.0), Q=(-1.0, 1.0),
        f=lambda t, hist, p, q: np.zeros(prob.disc.n),
        ell=lambda t, hist, p, q: p * q, L0=1.0)
    counter = check_isaacs(coupled, bundle.members[:2], [z_list[0]], [0])
    assert not counter.passed
    assert counter.details["max_gap"] == pytest.approx(2.0, abs=1e-14)


def test_criterion_10_extremal_shift(game4):
    # controller guarantee minus value stays within (1 - eps) eps plus a
    # residual that strictly decreases along the joint ladder
    # eps in {0.2, 0.1, 0.05} x stages in {2, 4, 8}; penalty derivative
    # formulas pass finite differences at 1e-5 relative error
    preset, val, bundle = game4
    prob = preset.problem
    rep = check_guarantee(prob, val, bundle, preset.base,
                          eps_ladder=(0.2, 0.1, 0.05),
                          stage_ladder=(2, 4, 8))
    assert rep.passed, rep.details
    res = rep.details["diagonal_residuals"]
    assert res[0] > res[1] > res[2]
    u0 = rep.details["u0"]
    diag = [r for r in rep.rows
            if (r["eps"], r["stages"]) in ((0.2, 2), (0.1, 4), (0.05, 8))]
    for row in diag:
        assert row["J_a"] - u0 <= (1.0 - row["eps"]) * row["eps"] \
            + row["residual"] + 1e-12
        assert row["bracket_ok"]

    fd = check_nu_derivatives(prob.disc, eps=0.05, Lf=prob.Lf, t0=0.0,
                              T=prob.T)
    assert fd.passed and fd.details["max_rel_err"] <= 1e-5


def test_criterion_11_functional_calculus():
    # endpoint-pairing and chain-rule residuals vanish at order >= 0.9 in
    # dt; stopped and ray difference quotients recover the declared
    # derivatives within a dt-proportional window on both functionals
    from hjlab.chainrule import (
        _smooth_pair,
        calculus_convergence_study,
        check_derivative_limits,
        quadratic_plus_integral,
        smooth_composite,
    )

    study = calculus_convergence_study()
    assert study.passed, study.details
    for seq in study.details["orders"].values():
        assert min(seq) >= 0.9

    disc, _, x, _ = _smooth_pair(16, 64, 1.0)
    e = 0.8 * disc.basis_mode(1)
    for fn in (quadratic_plus_integral(disc.basis_mode(1)),
               smooth_composite(0.7, 0.3, disc.basis_mode(2), 0.5)):
        rep = check_derivative_limits(disc, fn, x, x.nt // 4, e)
        assert rep.passed, (fn.name, rep.details)


def test_criterion_12_determinism(tmp_path, monkeypatch):
    # identical config + seed => byte-identical CSV/JSON bodies, with or
    # without worker-pool parallelism; only the manifest may differ
    cfg = {
        "discretization": {"n": 8, "dt": 0.03125},
        "operator": {"kind": "linear_laplacian"},
        "problem": {"preset": "heat-control", "T": 1.0, "stages": 4},
        "bundle": {"L": 1.0, "size": 16, "k": 2, "seed": 7},
        "verification": {"suites": ["operators", "control"]},
        "output": {"out_dir": ""},
    }
    runner = CliRunner()

    def run_into(out_dir, workers=None):
        cfg["output"]["out_dir"] = str(out_dir)
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(cfg))
        if workers:
            monkeypatch.setenv("HJLAB_WORKERS", str(workers))
        else:
            monkeypatch.delenv("HJLAB_WORKERS", raising=False)
        res = runner.invoke(cli_main, ["run", "--config", str(p)])
        assert res.exit_code == 0, res.output
        return {f.name: f.read_bytes() for f in sorted(out_dir.iterdir())
                if f.name != "manifest.json"}

    first = run_into(tmp_path / "a")
    second = run_into(tmp_path / "b")
    parallel = run_into(tmp_path / "c", workers=3)
    assert first.keys() == second.keys() == parallel.keys()
    assert len(first) == 4  # two suites x (report.json + cases.csv)
    for name in first:
        assert first[name] == second[name], name
        assert first[name] == parallel[name], name
