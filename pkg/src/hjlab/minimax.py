"""Directional integral inequalities certifying candidate value functionals.

A candidate u(t, path) is tested against the envelope F along bundles of
admissible trajectories: for directions z and grid times t the
supersolution check asks for a member x with

    u(t, x) + int_{t0}^t [ -(f^x(s), z) + F(s, x, z) ] ds <= u(t0, x0) + tol,

the subsolution check for a member achieving >= with -tol, and the
infinitesimal check compares forward difference quotients of the same
expression against 0.  Integrals use the solver's left-rectangle rule, so
for the exhaustive tree value the witnessing members realize the
inequalities exactly.

Existence over the admissible set is approximated by a minimum over the
bundle: a pass is a certificate (a witness was exhibited); a failure only
means no witness was found in this bundle, never a disproof.  Every
report records this asymmetry.  To make the certificates sharp the
bundle builder plants the designated witnesses: the optimal-control
rollout (supersolution side) and per-z greedy rollouts that track the
envelope's minimizer (subsolution side).
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np

from .control import ControlProblem, ValueRecord, brute_force_value, rollout
from .evolution import step as _step
from .gelfand import GelfandDiscretization
from .hamiltonian import HamiltonianSpec, eval_F
from .pathspace import History, Path, TrajectoryBundle, sample_bundle
from .reporting import CheckReport
from .tolerances import TOL_SAMPLED, tol_mm

WITNESS_NOTE = (
    "existence is approximated by a bundle minimum: passes are witness "
    "certificates, failures mean no witness found in this bundle"
)


class ValueFunctional:
    """Exact control-tree value as a non-anticipating functional.

    Evaluation at (t_idx, path) reruns the exhaustive enumeration from
    that node with the path as prescribed history; results are cached on
    (node, history bytes).  Values at the final node equal the terminal
    cost exactly.
    """

    def __init__(self, problem: ControlProblem, budget: int = 4096,
                 name: str = "bellman-value"):
        self.problem = problem
        self.budget = budget
        self.name = name
        self.L = problem.Lf
        self._cache: dict = {}

    def eval(self, t_idx: int, path: Path) -> float:
        stage = self.problem.stage_of_node(t_idx)
        key = (t_idx, path.values[: t_idx + 1].tobytes())
        hit = self._cache.get(key)
        if hit is None:
            hit = brute_force_value(self.problem, path, stage, self.budget).value
            self._cache[key] = hit
        return hit

    def record(self, t_idx: int, path: Path) -> ValueRecord:
        stage = self.problem.stage_of_node(t_idx)
        return brute_force_value(self.problem, path, stage, self.budget)


class ShiftedFunctional:
    """u + delta; shares the base functional's cache."""

    def __init__(self, base, delta: float):
        self.base = base
        self.delta = delta
        self.L = base.L
        self.name = f"{base.name}{delta:+g}"

    def eval(self, t_idx: int, path: Path) -> float:
        return self.base.eval(t_idx, path) + self.delta


class ConstFunctional:
    def __init__(self, c: float, L: float, name: str = "const"):
        self.c = c
        self.L = L
        self.name = name

    def eval(self, t_idx: int, path: Path) -> float:
        return self.c


class LinearInTimeFunctional:
    """u(t, x) = -K t, the standard infinitesimal-check foil."""

    def __init__(self, K: float, L: float):
        self.K = K
        self.L = L
        self.name = f"linear-in-time-{K:g}"

    def eval(self, t_idx: int, path: Path) -> float:
        return -self.K * float(path.times[t_idx])


def bellman_spec(problem: ControlProblem) -> HamiltonianSpec:
    return HamiltonianSpec(
        disc=problem.disc, mode="bellman", P=problem.P,
        f=problem.f, ell=problem.ell, L0=problem.Lf,
    )


def default_z_samples(
    disc: GelfandDiscretization, seed: int, n_random: int = 8, n_modes: int = 3,
    scale: float = 1.0,
) -> list:
    """z set {0, +/- first eigenmodes, random mode combinations}."""
    zs = [np.zeros(disc.n)]
    for k in range(1, n_modes + 1):
        zs.append(disc.basis_mode(k))
        zs.append(-disc.basis_mode(k))
    rng = np.random.default_rng([seed, 23])
    for _ in range(n_random):
        coeffs = rng.uniform(-scale, scale, n_modes)
        zs.append(sum(c * disc.basis_mode(k + 1) for k, c in enumerate(coeffs)))
    return zs


def greedy_rollout(
    problem: ControlProblem, base: Path, t0_stage: int, z: np.ndarray
) -> Tuple[Path, Tuple[int, ...]]:
    """Stagewise tracking of the envelope minimizer for direction z.

    At each control interval the control minimizing the stage integral of
    ell + (f, z) is committed (evaluated by trial integration, lowest
    index on ties).  For costs whose control part does not depend on the
    state this reproduces the pointwise minimizer of F exactly.
    """
    disc = problem.disc
    ci = problem.control_indices
    dt = problem.dt
    values = base.values.copy()
    forcing = np.zeros((problem.nt, disc.n))
    chosen = []
    for stage in range(t0_stage, problem.n_stages):
        best_score = np.inf
        best = None
        for ai, p in enumerate(problem.P):
            vals2 = values.copy()
            rows = []
            score = 0.0
            for i in range(ci[stage], ci[stage + 1]):
                hist = History(problem.times, vals2, i)
                t = float(problem.times[i])
                g = problem.f(t, hist, p)
                score += dt * (problem.ell(t, hist, p) + disc.inner(g, z))
                vals2[i + 1] = _step(disc, problem.op, vals2[i], g, dt,
                                     t_new=float(problem.times[i + 1]))
                rows.append(g)
            if score < best_score:
                best_score = score
                best = (ai, vals2, rows)
        ai, values, rows = best
        chosen.append(ai)
        for k, i in enumerate(range(ci[stage], ci[stage + 1])):
            forcing[i] = rows[k]
    path = Path(times=problem.times, values=values,
                birth_index=ci[t0_stage], forcing=forcing)
    return path, tuple(chosen)


def witness_bundle(
    problem: ControlProblem,
    base: Path,
    t0_stage: int,
    z_list: Sequence[np.ndarray],
    size: int = 64,
    seed: int = 0,
    budget: int = 4096,
) -> TrajectoryBundle:
    """Admissible bundle seeded with the designated inequality witnesses.

    Planted members: the optimal rollout, every constant-control rollout,
    and one greedy rollout per direction z; the generic sampler fills the
    rest (zero forcing, extreme single-mode forcings, random forcings).
    Duplicates are dropped by value bytes so slots are not wasted.
    """
    remaining = problem.n_stages - t0_stage
    extras = []
    rec = brute_force_value(problem, base, t0_stage, budget)
    extras.append(rollout(problem, base, t0_stage, rec.best_sequence)[0])
    for ai in range(len(problem.P)):
        extras.append(rollout(problem, base, t0_stage, (ai,) * remaining)[0])
    for z in z_list:
        extras.append(greedy_rollout(problem, base, t0_stage, z)[0])
    seen = set()
    unique = []
    for m in extras:
        key = m.values.tobytes()
        if key not in seen:
            seen.add(key)
            unique.append(m)
    return sample_bundle(
        problem.disc, problem.op, base, problem.control_indices[t0_stage],
        L=problem.bundle_L, size=size, seed=seed, extra_members=unique,
    )


def directional_integrals(
    spec: HamiltonianSpec, member: Path, z: np.ndarray, i0: int
) -> np.ndarray:
    """Cumulative left-rectangle integral of -(f^x, z) + F(s, x, z).

    Entry i holds the integral from t_{i0} to t_i; the member must carry
    its forcing rows (f^x).
    """
    if member.forcing is None:
        raise ValueError("member carries no forcing rows")
    disc = spec.disc
    dt = member.dt
    out = np.zeros(member.nt + 1)
    acc = 0.0
    for i in range(i0, member.nt):
        hist = History(member.times, member.values, i)
        t = float(member.times[i])
        Fv, _, _ = eval_F(spec, t, hist, z)
        acc += dt * (-disc.inner(member.forcing[i], z) + Fv)
        out[i + 1] = acc
    return out


def _integral_table(spec, bundle, z_list, i0):
    return [
        [directional_integrals(spec, m, z, i0) for m in bundle.members]
        for z in z_list
    ]


def check_supersolution(
    u,
    spec: HamiltonianSpec,
    bundle: TrajectoryBundle,
    z_list: Sequence[np.ndarray],
    t_indices: Sequence[int],
    terminal=None,
    table=None,
) -> CheckReport:
    """Upper directional inequality: witness search per (z, t).

    Pass per (z, t) iff some member x has u(t,x) + I(x,z,t) <= u(t0,x0)
    + tol_mm(z); terminal pass iff u(T, x) >= terminal(x) - tol on every
    member (when a terminal cost is supplied).
    """
    return _check_global(u, spec, bundle, z_list, t_indices, terminal,
                         side="super", table=table)


def check_subsolution(
    u,
    spec: HamiltonianSpec,
    bundle: TrajectoryBundle,
    z_list: Sequence[np.ndarray],
    t_indices: Sequence[int],
    terminal=None,
    table=None,
) -> CheckReport:
    """Lower directional inequality: mirror image of the upper check."""
    return _check_global(u, spec, bundle, z_list, t_indices, terminal,
                         side="sub", table=table)


def _check_global(u, spec, bundle, z_list, t_indices, terminal, side, table=None):
    disc = spec.disc
    i0 = bundle.t0_index
    dt = bundle.base.dt
    u0 = u.eval(i0, bundle.members[0])
    if table is None:
        table = _integral_table(spec, bundle, z_list, i0)
    rows = []
    min_best = np.inf
    all_pass = True
    for zi, z in enumerate(z_list):
        zn = disc.norm_H(z)
        tol = tol_mm(dt, disc.h, zn)
        for t_idx in t_indices:
            best = -np.inf
            witness = -1
            for m_idx, member in enumerate(bundle.members):
                ut = u.eval(t_idx, member)
                I = table[zi][m_idx][t_idx]
                slack = (u0 - (ut + I)) if side == "super" else ((ut + I) - u0)
                if slack > best:
                    best = slack
                    witness = m_idx
            ok = best >= -tol
            all_pass = all_pass and ok
            min_best = min(min_best, best)
            rows.append({"z": zi, "t": float(bundle.times[t_idx]),
                         "best_slack": float(best), "witness": witness,
                         "tol": tol, "pass": bool(ok)})
    terminal_min = np.inf
    if terminal is not None:
        nt = bundle.base.nt
        for member in bundle.members:
            hv = terminal(History(member.times, member.values, nt))
            uT = u.eval(nt, member)
            gap = (uT - hv) if side == "super" else (hv - uT)
            terminal_min = min(terminal_min, gap)
        all_pass = all_pass and terminal_min >= -TOL_SAMPLED
    return CheckReport(
        name=f"minimax_{side}solution[{getattr(u, 'name', 'candidate')}]",
        passed=bool(all_pass),
        details={
            "u0": float(u0),
            "min_best_slack": float(min_best),
            "terminal_min_slack": float(terminal_min) if terminal is not None else None,
            "zt_cases": len(rows),
        },
        rows=rows,
        notes=WITNESS_NOTE,
    )


def check_infinitesimal(
    u,
    spec: HamiltonianSpec,
    bundle: TrajectoryBundle,
    z_list: Sequence[np.ndarray],
    stage_deltas: Sequence[int] = (1, 2, 4),
    control_indices: Optional[Sequence[int]] = None,
    table=None,
) -> CheckReport:
    """Forward difference quotients of the directional expressions.

    For each z and each horizon of 1, 2, 4 control intervals, reports
    min and max over members of
        [u(t0+d, x) - u(t0, x0) + I(x, z, t0+d)] / d.
    Pass iff at the smallest horizon the min is <= tol_mm (upper side)
    and the max is >= -tol_mm (lower side).
    """
    disc = spec.disc
    i0 = bundle.t0_index
    dt = bundle.base.dt
    if control_indices is None:
        raise ValueError("control_indices of the underlying partition required")
    stage0 = list(control_indices).index(i0)
    u0 = u.eval(i0, bundle.members[0])
    if table is None:
        table = _integral_table(spec, bundle, z_list, i0)
    rows = []
    passed = True
    for zi, z in enumerate(z_list):
        zn = disc.norm_H(z)
        tol = tol_mm(dt, disc.h, zn)
        for d in stage_deltas:
            if stage0 + d >= len(control_indices):
                continue
            t_idx = control_indices[stage0 + d]
            delta = float(bundle.times[t_idx] - bundle.times[i0])
            quots = [
                (u.eval(t_idx, m) - u0 + table[zi][m_idx][t_idx]) / delta
                for m_idx, m in enumerate(bundle.members)
            ]
            qmin, qmax = float(min(quots)), float(max(quots))
            if d == min(stage_deltas):
                ok = (qmin <= tol) and (qmax >= -tol)
                passed = passed and ok
            rows.append({"z": zi, "stages": d, "delta": delta,
                         "min_quotient": qmin, "max_quotient": qmax, "tol": tol})
    return CheckReport(
        name=f"minimax_infinitesimal[{getattr(u, 'name', 'candidate')}]",
        passed=bool(passed),
        details={"u0": float(u0), "cases": len(rows)},
        rows=rows,
        notes=WITNESS_NOTE,
    )


def empirical_comparison(
    u_lower, u_upper, bundle: TrajectoryBundle, t_indices: Sequence[int]
) -> CheckReport:
    """Pointwise ordering u_lower <= u_upper + tol_mm on sampled states."""
    disc = bundle.disc
    dt = bundle.base.dt
    tol = tol_mm(dt, disc.h, 0.0)
    rows = []
    worst = -np.inf
    for t_idx in t_indices:
        for m_idx, member in enumerate(bundle.members):
            lo = u_lower.eval(t_idx, member)
            hi = u_upper.eval(t_idx, member)
            excess = lo - hi
            worst = max(worst, excess)
            rows.append({"t": float(bundle.times[t_idx]), "member": m_idx,
                         "lower": float(lo), "upper": float(hi)})
    return CheckReport(
        name="empirical_comparison",
        passed=bool(worst <= tol),
        details={"max_excess": float(worst), "tol": tol, "cases": len(rows)},
        rows=rows,
    )


def stability_sweep(
    problem_factory,
    problem: ControlProblem,
    states: Sequence[Tuple[int, Path]],
    kappa_s: float,
    ns: Sequence[int] = (1, 2, 4, 8),
    budget: int = 4096,
) -> CheckReport:
    """Perturbed values converge to the limit value at rate kappa_s / n.

    ``problem_factory(n)`` builds the perturbed instance at scale 1/n.
    Asserts max over sample states |v_n - v| <= kappa_s/n + tol_mm and
    that the worst gap never increases along the ladder.
    """
    v = ValueFunctional(problem, budget)
    dt = problem.dt
    tol = tol_mm(dt, problem.disc.h, 0.0)
    rows = []
    passed = True
    prev_gap = np.inf
    for n in ns:
        vn = ValueFunctional(problem_factory(n), budget)
        gap = max(
            abs(vn.eval(t_idx, path) - v.eval(t_idx, path))
            for t_idx, path in states
        )
        ok = gap <= kappa_s / n + tol and gap <= prev_gap + 1e-12
        passed = passed and ok
        rows.append({"n": n, "gap": float(gap), "bound": kappa_s / n + tol,
                     "pass": bool(ok)})
        prev_gap = gap
    return CheckReport(
        name="stability_sweep",
        passed=bool(passed),
        details={"kappa_s": kappa_s, "ladder": list(ns)},
        rows=rows,
    )
