"""Experiment runner: presets, verification suites, tabular output.

Every command reads one JSON config (see config.py for the schema; the
``schema`` command prints it).  Outputs land in the config's out_dir:
a ``manifest.json`` pinning config hash, versions, seeds and backend
(the only file allowed a timestamp), long-format CSV case tables, and a
machine-readable pass/fail summary per suite.

Exit codes: 0 all requested assertions pass, 2 schema/config errors,
3 numerical failures.  HJLAB_WORKERS > 1 runs independent suites in a
worker pool; outputs are ordered deterministically regardless of
scheduling.
"""

from __future__ import annotations

import datetime
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path as FsPath
from typing import List, Sequence

import click
import numpy as np

from . import __version__
from ._accel import USING_NUMBA
from .chainrule import (calculus_convergence_study, check_chain_rule,
                        check_derivative_limits, check_parts, _smooth_pair,
                        quadratic_plus_integral, smooth_composite)
from .config import (ConfigError, ExperimentConfig, build_problem,
                     config_hash, config_schema, load_config)
from .control import (brute_force_value, check_dpp, check_value_regularity,
                      dependence_report)
from .evolution import (CallableRhs, apriori_constants, check_apriori_bound,
                        solve_ivp)
from .game import (AffineGameValue, check_guarantee, check_nu_derivatives,
                   eps_upper_bound, game_bundle, isaacs_spec)
from .gelfand import (check_coercivity_boundedness, check_monotonicity,
                      noncompact_sequence_report, assemble_discretization,
                      make_operator)
from .hamiltonian import check_HF, check_isaacs
from .minimax import (ShiftedFunctional, ValueFunctional, bellman_spec,
                      check_infinitesimal, check_subsolution,
                      check_supersolution, default_z_samples, witness_bundle,
                      _integral_table)
from .pathspace import (check_admissibility, constant_history, path_to_csv,
                        sample_bundle)
from .presets import ControlPreset, GamePreset, game_as_control
from .reporting import CheckReport
from .tolerances import TOL_SAMPLED


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("HJLAB_WORKERS", "1")))
    except ValueError:
        return 1


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _write_csv(path: FsPath, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: FsPath, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _long_rows(checks: List[CheckReport]):
    """Plot-ready long format: one (check, case, key, value) per scalar."""
    out = []
    for rep in checks:
        for idx, row in enumerate(rep.to_dict()["rows"]):
            for key in sorted(row):
                out.append((rep.name, idx, key, row[key]))
    return out


def _manifest(cfg: ExperimentConfig, command: str) -> dict:
    try:
        import numba
        numba_version = numba.__version__
    except ImportError:
        numba_version = None
    return {
        "command": command,
        "config_hash": config_hash(cfg),
        "versions": {
            "hjlab": __version__,
            "numpy": np.__version__,
            "numba": numba_version,
            "python": sys.version.split()[0],
        },
        "backend": "numba" if USING_NUMBA else "numpy",
        "seeds": {"bundle": cfg.bundle.seed},
        "workers": _workers(),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


def _emit(cfg: ExperimentConfig, command: str, suite: str,
          checks: List[CheckReport]) -> bool:
    out = FsPath(cfg.output.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    passed = all(c.passed for c in checks)
    if "json" in cfg.output.formats:
        _write_json(out / f"{suite}_report.json", {
            "suite": suite,
            "config_hash": config_hash(cfg),
            "passed": passed,
            "checks": [c.to_dict() for c in checks],
        })
    if "csv" in cfg.output.formats:
        _write_csv(out / f"{suite}_cases.csv",
                   ("check", "case", "key", "value"), _long_rows(checks))
    _write_json(out / "manifest.json", _manifest(cfg, command))
    for c in checks:
        click.echo(c.summary_line())
    return passed


def _require_control(cfg: ExperimentConfig) -> ControlPreset:
    built = build_problem(cfg)
    if isinstance(built, GamePreset):
        return game_as_control(built)
    return built


# ---------------------------------------------------------------- suites

def _suite_operators(cfg: ExperimentConfig) -> List[CheckReport]:
    disc = assemble_discretization(cfg.discretization.domain_length,
                                   cfg.discretization.n)
    op = make_operator(disc, cfg.operator.kind, p=cfg.operator.p)
    rng = np.random.default_rng([cfg.bundle.seed, 41])
    pairs = [(rng.standard_normal(disc.n), rng.standard_normal(disc.n))
             for _ in range(100)]
    samples = [v for v, _ in pairs]
    mono = check_monotonicity(op, pairs)
    cb = check_coercivity_boundedness(op, samples)
    checks = [mono]
    if cfg.operator.kind == "zero":
        # the degenerate operator must FAIL coercivity; the suite asserts
        # the expected failure and the non-vanishing probe sequence
        expected = CheckReport(
            name="zero_operator_expectations",
            passed=bool(not cb.passed),
            details=cb.details,
            notes="coercivity failure is the required outcome for kind zero",
        )
        checks += [expected, noncompact_sequence_report()]
    else:
        checks.append(cb)
    return checks


def _suite_calculus(cfg: ExperimentConfig) -> List[CheckReport]:
    checks = [calculus_convergence_study()]
    disc, op, x, y = _smooth_pair(cfg.discretization.n, 64, 1.0)
    funcs = [
        quadratic_plus_integral(disc.basis_mode(1)),
        smooth_composite(0.7, 0.3, disc.basis_mode(2), 0.5),
    ]
    checks.append(check_parts(disc, op, x, y, 0, x.nt))
    for fn in funcs:
        checks.append(check_chain_rule(disc, op, fn, x, 0, x.nt))
        checks.append(check_derivative_limits(disc, fn, x, x.nt // 4,
                                              0.8 * disc.basis_mode(1)))
    return checks


def _suite_minimax(cfg: ExperimentConfig) -> List[CheckReport]:
    preset = _require_control(cfg)
    prob = preset.problem
    spec = bellman_spec(prob)
    z_list = default_z_samples(prob.disc, seed=cfg.bundle.seed,
                               n_random=8, n_modes=cfg.bundle.k)
    bundle = witness_bundle(prob, preset.base, 0, z_list,
                            size=cfg.bundle.size, seed=cfg.bundle.seed)
    table = _integral_table(spec, bundle, z_list, 0)
    interior = list(prob.control_indices[1:-1])
    u = ValueFunctional(prob)
    checks = [
        check_supersolution(u, spec, bundle, z_list, interior,
                            terminal=prob.terminal, table=table),
        check_subsolution(u, spec, bundle, z_list, interior,
                          terminal=prob.terminal, table=table),
        check_infinitesimal(u, spec, bundle, z_list,
                            control_indices=prob.control_indices, table=table),
        check_HF(spec, bundle.members[: min(6, bundle.size)], z_list[:5],
                 interior, state_lipschitz=preset.state_lipschitz),
    ]
    # perturbed candidates must fail exactly one predicted terminal side
    up = ShiftedFunctional(u, +10 * TOL_SAMPLED)
    dn = ShiftedFunctional(u, -10 * TOL_SAMPLED)
    up_sub = check_subsolution(up, spec, bundle, z_list, interior,
                               terminal=prob.terminal, table=table)
    dn_sup = check_supersolution(dn, spec, bundle, z_list, interior,
                                 terminal=prob.terminal, table=table)
    checks.append(CheckReport(
        name="shifted_foils_fail_predicted_side",
        passed=bool((not up_sub.passed) and (not dn_sup.passed)),
        details={"up_sub_terminal": up_sub.details["terminal_min_slack"],
                 "dn_sup_terminal": dn_sup.details["terminal_min_slack"]},
    ))
    return checks


def _suite_control(cfg: ExperimentConfig) -> List[CheckReport]:
    preset = _require_control(cfg)
    prob = preset.problem
    base = preset.base
    disc = prob.disc
    checks = []
    n_stages = prob.n_stages
    for t1 in range(1, n_stages):
        checks.append(check_dpp(prob, base, 0, t1))
    consts = apriori_constants(disc, prob.op, base, 0, prob.bundle_L)
    base2 = constant_history(prob.times, 0.5 * disc.sine_mode(2))
    checks.append(check_value_regularity(
        prob, space_pairs=[(0, base, base2)],
        time_pairs=[(0, 1, base), (1, 2, base)],
        C=consts["C"], L=prob.bundle_L))
    checks.append(dependence_report(prob, 0, n_pairs=50, seed=cfg.bundle.seed))
    bundle = sample_bundle(disc, prob.op, base, 0, L=prob.bundle_L,
                           size=cfg.bundle.size, seed=cfg.bundle.seed,
                           n_modes=cfg.bundle.k)
    checks.append(check_admissibility(bundle))
    checks.append(check_apriori_bound(bundle))
    return checks


def _suite_game(cfg: ExperimentConfig,
                eps_ladder=None, stage_ladder=None) -> List[CheckReport]:
    built = build_problem(cfg)
    if not isinstance(built, GamePreset):
        raise ConfigError("the game suite needs a game preset "
                          "(problem.preset = 'bilinear-game')")
    prob = built.problem
    val = AffineGameValue(prob, built.terminal_weight, built.terminal_const)
    eps_ladder = tuple(eps_ladder or cfg.verification.eps_ladder)
    stage_ladder = tuple(stage_ladder or cfg.verification.partition_ladder)
    ceiling = eps_upper_bound(prob.Lf, 0.0, prob.T)
    if any(e >= ceiling for e in eps_ladder):
        raise ConfigError(f"eps ladder exceeds admissible window (0, {ceiling:g})")
    bundle = game_bundle(prob, built.base, val, size=min(cfg.bundle.size, 24),
                         seed=cfg.bundle.seed)
    rng = np.random.default_rng([cfg.bundle.seed, 57])
    z_list = [np.zeros(prob.disc.n), prob.disc.basis_mode(1),
              rng.standard_normal(prob.disc.n)]
    t_idx = list(range(0, prob.nt, max(1, prob.nt // 8)))
    checks = [
        CheckReport(name="stagewise_isaacs_gap",
                    passed=bool(val.stage_gap <= 1e-12),
                    details={"stage_gap": val.stage_gap}),
        check_isaacs(isaacs_spec(prob), bundle.members[:4], z_list, t_idx),
        check_nu_derivatives(prob.disc, eps=min(eps_ladder), Lf=prob.Lf,
                             t0=0.0, T=prob.T),
        check_guarantee(prob, val, bundle, built.base,
                        eps_ladder=eps_ladder, stage_ladder=stage_ladder),
    ]
    return checks


_SUITES = {
    "operators": _suite_operators,
    "calculus": _suite_calculus,
    "minimax": _suite_minimax,
    "control": _suite_control,
    "game": _suite_game,
}


# ------------------------------------------------------------- commands

@click.group()
def main() -> None:
    """Desk-scale laboratory for path-dependent Hamilton-Jacobi checks."""


@main.command()
def schema() -> None:
    """Print the JSON schema for experiment configs."""
    click.echo(json.dumps(config_schema(), sort_keys=True, indent=2))


def _load(config_path: str) -> ExperimentConfig:
    try:
        return load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)


@main.command("solve-evolution")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def solve_evolution(config_path: str) -> None:
    """Solve the uncontrolled evolution from the preset initial state."""
    cfg = _load(config_path)
    try:
        built = build_problem(cfg)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    prob = built.problem
    zero = np.zeros(prob.disc.n)
    path = solve_ivp(prob.disc, prob.op, built.base, 0,
                     CallableRhs(lambda t, hist: zero))
    out = FsPath(cfg.output.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path_to_csv(path, str(out / "evolution.csv"))
    _write_json(out / "manifest.json", _manifest(cfg, "solve-evolution"))
    click.echo(f"wrote {out / 'evolution.csv'}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def value(config_path: str) -> None:
    """Brute-force value and optimal control sequence."""
    cfg = _load(config_path)
    try:
        preset = _require_control(cfg)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    rec = brute_force_value(preset.problem, preset.base, 0)
    payload = {
        "preset": preset.name,
        "value": rec.value,
        "argmin": [preset.problem.P[i] for i in rec.best_sequence],
        "leaves": rec.leaves,
    }
    out = FsPath(cfg.output.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "value.json", payload)
    _write_json(out / "manifest.json", _manifest(cfg, "value"))
    click.echo(json.dumps(payload, sort_keys=True))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--eps", "eps_csv", default=None, help="comma list, e.g. 0.2,0.1,0.05")
@click.option("--partitions", "partitions_csv", default=None, help="comma list, e.g. 2,4,8")
def game(config_path: str, eps_csv, partitions_csv) -> None:
    """Guarantee ladder CSV: (eps, stages, J_a, J_b, value, gaps)."""
    cfg = _load(config_path)
    eps_ladder = ([float(s) for s in eps_csv.split(",")]
                  if eps_csv else cfg.verification.eps_ladder)
    stage_ladder = ([int(s) for s in partitions_csv.split(",")]
                    if partitions_csv else cfg.verification.partition_ladder)
    if len(eps_ladder) != len(stage_ladder):
        click.echo("config error: eps and partition ladders must have equal "
                   "length", err=True)
        sys.exit(2)
    try:
        checks = _suite_game(cfg, eps_ladder, stage_ladder)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    guarantee = checks[-1]
    out = FsPath(cfg.output.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = ("eps", "stages", "J_a", "J_b", "tree_lower", "tree_upper",
              "gap_a", "gap_b", "residual")
    rows = [
        (r["eps"], r["stages"], r["J_a"], r["J_b"], r["tree_lower"],
         r["tree_upper"], r["J_a"] - r["tree_upper"],
         r["tree_lower"] - r["J_b"], r["residual"])
        for r in guarantee.rows
    ]
    _write_csv(out / "game_ladder.csv", header, rows)
    _write_json(out / "manifest.json", _manifest(cfg, "game"))
    for c in checks:
        click.echo(c.summary_line())
    if not all(c.passed for c in checks):
        sys.exit(3)


@main.command()
@click.argument("suite", type=click.Choice(sorted(_SUITES)))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def verify(suite: str, config_path: str) -> None:
    """Run one verification suite and write its report."""
    cfg = _load(config_path)
    try:
        checks = _SUITES[suite](cfg)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    if not _emit(cfg, f"verify {suite}", suite, checks):
        sys.exit(3)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def run(config_path: str) -> None:
    """Run every suite listed in the config's verification block."""
    cfg = _load(config_path)
    suites = list(cfg.verification.suites)
    try:
        if _workers() > 1:
            with ThreadPoolExecutor(max_workers=_workers()) as pool:
                results = list(pool.map(lambda s: _SUITES[s](cfg), suites))
        else:
            results = [_SUITES[s](cfg) for s in suites]
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    ok = True
    for suite_name, checks in zip(suites, results):
        ok = _emit(cfg, "run", suite_name, checks) and ok
    if not ok:
        sys.exit(3)


if __name__ == "__main__":
    main()
