"""Two-player feedback games on the solver grid.

Both players act through piecewise-constant controls on a stage partition
of the solver grid.  Strategies are step-by-step feedbacks: at each stage
node they read the realized history and commit a control point for the
stage.  Guaranteed results are exact enumerations: J_a(strategy) is the
maximum cost over all open-loop disturbance sequences on the partition,
J_b the minimum over control sequences; the alternating-move tree values
(controller commits first = upper, disturbance commits first = lower)
bracket every strategy's guarantee by construction.

For instances with state-independent dynamics/running cost and an affine
terminal cost the value functional has a closed form: propagate the
terminal weight backward through the implicit step and accumulate
per-step min-max stage values.  That functional feeds the extremal-shift
strategy: steer toward the bundle member minimizing u + nu, where
nu(t, x) = alpha(t) * sqrt(eps^4 + |x(t)|^2 + 2 Lf int_0^t |x|^2 ds)
is the shift penalty, and pick the control optimizing the stage
Hamiltonian in the penalty-gradient direction.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .evolution import step
from .gelfand import GelfandDiscretization, MonotoneOperator
from .hamiltonian import HamiltonianSpec, eval_F
from .pathspace import History, Path, TrajectoryBundle, sample_bundle
from .reporting import CheckReport

GUARANTEE_BUDGET = 4096
TREE_BUDGET = 70000


@dataclass(frozen=True, eq=False)
class GameProblem:
    """Feedback game instance; f and ell take (t, hist, p, q)."""

    name: str
    disc: GelfandDiscretization
    op: MonotoneOperator
    times: np.ndarray
    P: Tuple[float, ...]
    Q: Tuple[float, ...]
    f: Callable
    ell: Callable
    terminal: Callable[[History], float]
    Lf: float
    bundle_L: float

    @property
    def nt(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def T(self) -> float:
        return float(self.times[-1])


def make_partition(problem: GameProblem, stages: int, t0_index: int = 0) -> Tuple[int, ...]:
    """Equal-stage partition of [t0, T] on solver nodes."""
    span = problem.nt - t0_index
    if span % stages != 0:
        raise ValueError(f"{stages} stages do not divide {span} solver steps")
    width = span // stages
    return tuple(range(t0_index, problem.nt + 1, width))


def _control_of(spec, k: int, node: int, hist: History) -> int:
    if callable(spec):
        return int(spec(node, hist))
    return int(spec[k])


def rollout_game(
    problem: GameProblem,
    base: Path,
    pi: Sequence[int],
    a_spec,
    b_spec,
    pi_b: Optional[Sequence[int]] = None,
) -> Tuple[Path, float, Tuple[int, ...], Tuple[int, ...]]:
    """Closed-loop rollout; either side may be a feedback or a sequence.

    The controller switches at the nodes of pi, the disturbance at the
    nodes of pi_b (defaults to pi; both must share first and last node).
    Feedbacks are called at their own stage nodes with the realized
    history.  Returns (path, total cost, a indices, b indices).
    """
    disc = problem.disc
    dt = problem.dt
    pi = tuple(pi)
    pi_b = pi if pi_b is None else tuple(pi_b)
    if pi[0] != pi_b[0] or pi[-1] != pi_b[-1]:
        raise ValueError("control and disturbance grids must span the same window")
    values = base.values.copy()
    forcing = np.zeros((problem.nt, disc.n))
    run = 0.0
    a_seq, b_seq = [], []
    ka = kb = -1
    p = q = 0.0
    for i in range(pi[0], problem.nt):
        hist_i = History(problem.times, values, i)
        if ka + 1 < len(pi) - 1 and i == pi[ka + 1]:
            ka += 1
            ai = _control_of(a_spec, ka, i, hist_i)
            a_seq.append(ai)
            p = problem.P[ai]
        if kb + 1 < len(pi_b) - 1 and i == pi_b[kb + 1]:
            kb += 1
            bi = _control_of(b_spec, kb, i, hist_i)
            b_seq.append(bi)
            q = problem.Q[bi]
        t = float(problem.times[i])
        g = problem.f(t, hist_i, p, q)
        run += dt * problem.ell(t, hist_i, p, q)
        values[i + 1] = step(disc, problem.op, values[i], g, dt,
                             t_new=float(problem.times[i + 1]))
        forcing[i] = g
    path = Path(times=problem.times, values=values,
                birth_index=pi[0], forcing=forcing)
    cost = run + problem.terminal(History(problem.times, values, problem.nt))
    return path, float(cost), tuple(a_seq), tuple(b_seq)


def guaranteed_result_a(
    problem: GameProblem, base: Path, pi: Sequence[int], strat_a,
    adv_pi: Optional[Sequence[int]] = None,
    budget: int = GUARANTEE_BUDGET,
) -> Tuple[float, Tuple[int, ...]]:
    """Worst-case cost of the controller strategy over all open-loop
    disturbance sequences (exact enumeration).

    The disturbance switches on its own grid adv_pi, independent of the
    controller partition; by default the controller's.  Coarsening pi
    against a fixed adv_pi weakens only the controller.
    """
    adv_pi = tuple(pi) if adv_pi is None else tuple(adv_pi)
    m = len(adv_pi) - 1
    total = len(problem.Q) ** m
    if total > budget:
        raise ValueError(f"{total} disturbance sequences exceed budget {budget}")
    worst, worst_seq = -np.inf, None
    for b_seq in product(range(len(problem.Q)), repeat=m):
        _, cost, _, _ = rollout_game(problem, base, pi, strat_a, b_seq, pi_b=adv_pi)
        if cost > worst:
            worst, worst_seq = cost, b_seq
    return float(worst), worst_seq


def guaranteed_result_b(
    problem: GameProblem, base: Path, pi: Sequence[int], strat_b,
    adv_pi: Optional[Sequence[int]] = None,
    budget: int = GUARANTEE_BUDGET,
) -> Tuple[float, Tuple[int, ...]]:
    """Best-case cost against the disturbance strategy over all open-loop
    control sequences on adv_pi (the disturbance guarantees at least
    this cost)."""
    adv_pi = tuple(pi) if adv_pi is None else tuple(adv_pi)
    m = len(adv_pi) - 1
    total = len(problem.P) ** m
    if total > budget:
        raise ValueError(f"{total} control sequences exceed budget {budget}")
    best, best_seq = np.inf, None
    for a_seq in product(range(len(problem.P)), repeat=m):
        _, cost, _, _ = rollout_game(problem, base, adv_pi, a_seq, strat_b, pi_b=pi)
        if cost < best:
            best, best_seq = cost, a_seq
    return float(best), best_seq


def tree_value(
    problem: GameProblem, base: Path, pi: Sequence[int], order: str = "minmax",
    budget: int = TREE_BUDGET,
) -> float:
    """Alternating-move game value on the stage tree.

    'minmax': the controller commits each stage first (upper value);
    'maxmin': the disturbance commits first (lower value).  Exhaustive.
    """
    m = len(pi) - 1
    leaves = (len(problem.P) * len(problem.Q)) ** m
    if leaves > budget:
        raise ValueError(f"{leaves} tree leaves exceed budget {budget}")
    dt = problem.dt
    disc = problem.disc

    def stage_cost(values: np.ndarray, k: int, p: float, q: float) -> float:
        run = 0.0
        for i in range(pi[k], pi[k + 1]):
            hist = History(problem.times, values, i)
            t = float(problem.times[i])
            g = problem.f(t, hist, p, q)
            run += dt * problem.ell(t, hist, p, q)
            values[i + 1] = step(disc, problem.op, values[i], g, dt,
                                 t_new=float(problem.times[i + 1]))
        return run

    def rec(k: int, values: np.ndarray) -> float:
        if k == m:
            return problem.terminal(History(problem.times, values, problem.nt))
        table = np.empty((len(problem.P), len(problem.Q)))
        for ai in range(len(problem.P)):
            for bi in range(len(problem.Q)):
                vals2 = values.copy()
                c = stage_cost(vals2, k, problem.P[ai], problem.Q[bi])
                table[ai, bi] = c + rec(k + 1, vals2)
        if order == "minmax":
            return float(table.max(axis=1).min())
        return float(table.min(axis=0).max())

    return rec(0, base.values.copy())


def isaacs_spec(problem: GameProblem, mode: str = "isaacs_minmax") -> HamiltonianSpec:
    # L0 bounds |f| in H for the z-Lipschitz check; the feedback constant
    # problem.Lf controls drift DIFFERENCES and can be smaller
    return HamiltonianSpec(
        disc=problem.disc, mode=mode, P=problem.P, Q=problem.Q,
        f=problem.f, ell=problem.ell, L0=problem.bundle_L,
    )


class AffineGameValue:
    """Closed-form value functional for the affine game structure.

    Requires state-independent f and ell and terminal cost
    (x(T), w_h)_H + c_h, with a linear (or zero) operator.  The terminal
    weight is propagated backward through the implicit step (the step is
    self-adjoint in the H inner product), and each solver step
    contributes dt * minmax_{p,q} [ell + (f, w_i)]; per-step minmax and
    maxmin are both recorded, their gap is the stagewise Isaacs defect.
    """

    def __init__(self, problem: GameProblem, w_h: np.ndarray, c_h: float,
                 name: str = "affine-game-value"):
        if problem.op.kind not in ("linear_laplacian", "zero"):
            raise ValueError("closed form needs a linear or zero operator")
        self.problem = problem
        self.name = name
        self.L = problem.Lf
        disc = problem.disc
        nt, dt = problem.nt, problem.dt
        self._validate_state_independence()
        w = np.zeros((nt + 1, disc.n))
        w[nt] = w_h
        for i in range(nt - 1, -1, -1):
            w[i] = step(disc, problem.op, w[i + 1], np.zeros(disc.n), dt)
        zeros = np.zeros((nt + 1, disc.n))
        stage = np.zeros(nt)
        self.p_star = np.zeros(nt, dtype=int)
        self.q_star = np.zeros(nt, dtype=int)
        self.stage_gap = 0.0
        for i in range(nt):
            hist = History(problem.times, zeros, i)
            t = float(problem.times[i])
            table = np.array([
                [problem.ell(t, hist, p, q) + disc.inner(problem.f(t, hist, p, q), w[i])
                 for q in problem.Q]
                for p in problem.P
            ])
            up = table.max(axis=1).min()
            lo = table.min(axis=0).max()
            self.stage_gap = max(self.stage_gap, abs(up - lo))
            self.p_star[i] = int(np.argmin(table.max(axis=1)))
            self.q_star[i] = int(np.argmax(table.min(axis=0)))
            stage[i] = dt * up
        suffix = np.zeros(nt + 1)
        suffix[:nt] = stage[::-1].cumsum()[::-1]
        self.w = w
        self.suffix = suffix
        self.c_h = float(c_h)

    def _validate_state_independence(self):
        problem = self.problem
        disc = problem.disc
        rng = np.random.default_rng(99)
        zeros = np.zeros((3, disc.n))
        bumpy = rng.standard_normal((3, disc.n))
        t = float(problem.times[1])
        for p in problem.P:
            for q in problem.Q:
                h0 = History(problem.times, zeros, 2)
                h1 = History(problem.times, bumpy, 2)
                df = np.max(np.abs(problem.f(t, h0, p, q) - problem.f(t, h1, p, q)))
                dl = abs(problem.ell(t, h0, p, q) - problem.ell(t, h1, p, q))
                if df > 0 or dl > 0:
                    raise ValueError("affine closed form needs state-independent f, ell")

    def eval(self, t_idx: int, path: Path) -> float:
        return float(
            self.problem.disc.inner(path.values[t_idx], self.w[t_idx])
            + self.suffix[t_idx] + self.c_h
        )


def shift_penalty(
    disc: GelfandDiscretization, eps: float, Lf: float, t0: float, t: float,
    endpoint_diff: np.ndarray, l2sq_history: float,
) -> dict:
    """Shift penalty nu = alpha * beta with its path derivatives.

    alpha(t) = (e^{-2 Lf (t - t0)} - eps)/eps, beta = sqrt(eps^4 +
    |d(t)|^2 + 2 Lf * int_0^t |d|^2 ds).  dt_value is the derivative
    along the stopped continuation; dx_value the endpoint derivative.
    """
    decay = np.exp(-2.0 * Lf * (t - t0))
    alpha = (decay - eps) / eps
    r2 = disc.norm_H(endpoint_diff) ** 2
    beta = float(np.sqrt(eps**4 + r2 + 2.0 * Lf * l2sq_history))
    value = alpha * beta
    dt_value = -(2.0 * Lf / eps) * decay * beta + Lf * (alpha / beta) * r2
    dx_value = (alpha / beta) * endpoint_diff
    return {"value": float(value), "alpha": float(alpha), "beta": beta,
            "dt_value": float(dt_value), "dx_value": dx_value}


def eps_upper_bound(Lf: float, t0: float, T: float) -> float:
    """Largest admissible eps: alpha must stay positive on [t0, T]."""
    return float(np.exp(-2.0 * Lf * (T - t0)))


def check_nu_derivatives(
    disc: GelfandDiscretization, eps: float, Lf: float, t0: float, T: float,
    n_times: int = 5, fd_scale: float = 1e-5,
) -> CheckReport:
    """Finite-difference validation of the penalty derivatives.

    Uses the smooth synthetic difference path x(t) = (0.4 + 0.3 sin 3t) w
    whose squared-norm integral has a closed form, so the derivative
    along the stopped continuation and the endpoint derivative can both
    be centered-differenced on analytic expressions.
    """
    w = disc.basis_mode(1) + 0.5 * disc.basis_mode(2)
    w2 = disc.norm_H(w) ** 2
    a, b, c = 0.4, 0.3, 3.0

    def gamma(t):
        return a + b * np.sin(c * t)

    def G(t):
        # int_0^t gamma(s)^2 ds, closed form
        return (
            a * a * t
            + 2.0 * a * b * (1.0 - np.cos(c * t)) / c
            + b * b * (0.5 * t - np.sin(2.0 * c * t) / (4.0 * c))
        )

    rows = []
    worst = 0.0
    ts = np.linspace(t0 + 0.1 * (T - t0), T - 0.1 * (T - t0), n_times)
    for t in ts:
        r2 = gamma(t) ** 2 * w2
        xi = w2 * G(t)
        pen = shift_penalty(disc, eps, Lf, t0, float(t), gamma(t) * w, xi)

        def nu_stopped(s):
            decay = np.exp(-2.0 * Lf * (t + s - t0))
            alpha = (decay - eps) / eps
            beta = np.sqrt(eps**4 + r2 + 2.0 * Lf * (xi + s * r2))
            return alpha * beta

        dlt = fd_scale * max(1.0, abs(t))
        fd_t = (nu_stopped(dlt) - nu_stopped(-dlt)) / (2.0 * dlt)
        err_t = abs(fd_t - pen["dt_value"]) / max(1.0, abs(pen["dt_value"]))
        worst = max(worst, err_t)

        alpha = pen["alpha"]
        err_x = 0.0
        for k in (1, 2):
            e = disc.basis_mode(k)

            def nu_bumped(eta):
                v = gamma(t) * w + eta * e
                return alpha * np.sqrt(
                    eps**4 + disc.norm_H(v) ** 2 + 2.0 * Lf * xi
                )

            eta = fd_scale
            fd_x = (nu_bumped(eta) - nu_bumped(-eta)) / (2.0 * eta)
            exact = disc.inner(pen["dx_value"], e)
            err_x = max(err_x, abs(fd_x - exact) / max(1.0, abs(exact)))
        worst = max(worst, err_x)
        rows.append({"t": float(t), "rel_err_t": float(err_t),
                     "rel_err_x": float(err_x)})
    return CheckReport(
        name="shift_penalty_derivatives",
        passed=bool(worst <= 1e-5),
        details={"max_rel_err": float(worst), "eps": eps, "Lf": Lf},
        rows=rows,
    )


def extremal_shift_strategy(
    problem: GameProblem, u, bundle: TrajectoryBundle, eps: float, t0_index: int = 0,
):
    """Controller feedback: aim at the bundle member minimizing u + nu.

    At each stage node the member x_a minimizing u(t, x_a) + nu(t, x -
    x_a) is selected (lowest index on ties), and the control minimizes
    the stage game in the penalty-gradient direction:
    argmin_p max_q [ell + (f, d_x nu(t, x - x_a))].
    """
    if not 0.0 < eps < eps_upper_bound(problem.Lf, float(problem.times[t0_index]), problem.T):
        raise ValueError("eps outside the admissible window")
    disc = problem.disc
    dt = problem.dt
    h = disc.h
    t0 = float(problem.times[t0_index])
    spec = isaacs_spec(problem, "isaacs_minmax")

    def strat(t_idx: int, hist: History) -> int:
        t = float(problem.times[t_idx])
        best = np.inf
        z = None
        for member in bundle.members:
            diff = hist.values - member.values[: t_idx + 1]
            l2sq = float(dt * h * (diff[:t_idx] ** 2).sum())
            pen = shift_penalty(disc, eps, problem.Lf, t0, t, diff[t_idx], l2sq)
            val = u.eval(t_idx, member) + pen["value"]
            if val < best:
                best = val
                z = pen["dx_value"]
        _, pi_idx, _ = eval_F(spec, t, hist, z)
        return pi_idx

    return strat


def disturbance_shift_strategy(
    problem: GameProblem, u, bundle: TrajectoryBundle, eps: float, t0_index: int = 0,
):
    """Disturbance feedback: aim away along the u - nu maximizer."""
    if not 0.0 < eps < eps_upper_bound(problem.Lf, float(problem.times[t0_index]), problem.T):
        raise ValueError("eps outside the admissible window")
    disc = problem.disc
    dt = problem.dt
    h = disc.h
    t0 = float(problem.times[t0_index])
    spec = isaacs_spec(problem, "isaacs_maxmin")

    def strat(t_idx: int, hist: History) -> int:
        t = float(problem.times[t_idx])
        best = -np.inf
        z = None
        for member in bundle.members:
            diff = hist.values - member.values[: t_idx + 1]
            l2sq = float(dt * h * (diff[:t_idx] ** 2).sum())
            pen = shift_penalty(disc, eps, problem.Lf, t0, t, diff[t_idx], l2sq)
            val = u.eval(t_idx, member) - pen["value"]
            if val > best:
                best = val
                z = -pen["dx_value"]
        _, _, qi_idx = eval_F(spec, t, hist, z)
        return qi_idx

    return strat


def game_bundle(
    problem: GameProblem, base: Path, u: AffineGameValue, size: int = 24,
    seed: int = 11, t0_index: int = 0,
) -> TrajectoryBundle:
    """Admissible bundle seeded with near-optimal closed-loop motions.

    Planted members: the per-step optimal pair (p*, q*), the optimal
    control against each constant disturbance, and against two alternating
    disturbance patterns; generic forcings fill the rest.
    """
    nt = problem.nt
    fine = tuple(range(t0_index, nt + 1))

    def a_star(node, hist):
        return int(u.p_star[node])

    def q_const(bi):
        return lambda node, hist: bi

    extras = []
    extras.append(rollout_game(problem, base, fine, a_star,
                               lambda node, hist: int(u.q_star[node]))[0])
    for bi in range(len(problem.Q)):
        extras.append(rollout_game(problem, base, fine, a_star, q_const(bi))[0])
    for offset in (0, 1):
        extras.append(rollout_game(
            problem, base, fine, a_star,
            lambda node, hist, o=offset: (node + o) % len(problem.Q),
        )[0])
    seen = set()
    unique = []
    for m in extras:
        key = m.values.tobytes()
        if key not in seen:
            seen.add(key)
            unique.append(m)
    return sample_bundle(
        problem.disc, problem.op, base, t0_index, L=problem.bundle_L,
        size=size, seed=seed, extra_members=unique,
    )


def check_guarantee(
    problem: GameProblem,
    u,
    bundle: TrajectoryBundle,
    base: Path,
    eps_ladder: Sequence[float] = (0.2, 0.1, 0.05),
    stage_ladder: Sequence[int] = (2, 4, 8),
    t0_index: int = 0,
    full_grid: bool = True,
) -> CheckReport:
    """Extremal-shift guarantee along the joint refinement ladder.

    For each rung (eps_k, stages_k) the controller guarantee J_a is
    enumerated against open-loop disturbances on a fixed fine grid (the
    finest rung partition, independent of the strategy's), and the
    excess residual = J_a - u(t0,x0) - (1-eps)eps is recorded; the rungs
    must decrease strictly.  Each rung also verifies the bracket
    J_b <= lower tree <= upper tree <= J_a.  When full_grid is set the
    whole eps x stages grid is reported (rows), the pass criterion stays
    on the diagonal.
    """
    u0 = u.eval(t0_index, base)
    rows = []
    diag = []
    pairs = list(zip(eps_ladder, stage_ladder))
    grid = [(e, s) for e in eps_ladder for s in stage_ladder] if full_grid else pairs
    adv_pi = make_partition(problem, max(stage_ladder), t0_index)
    cache = {}
    bracket_ok = True
    for eps, stages in grid:
        pi = make_partition(problem, stages, t0_index)
        strat_a = extremal_shift_strategy(problem, u, bundle, eps, t0_index)
        strat_b = disturbance_shift_strategy(problem, u, bundle, eps, t0_index)
        Ja, _ = guaranteed_result_a(problem, base, pi, strat_a, adv_pi=adv_pi)
        Jb, _ = guaranteed_result_b(problem, base, pi, strat_b, adv_pi=adv_pi)
        if stages not in cache:
            cache[stages] = (
                tree_value(problem, base, pi, "maxmin"),
                tree_value(problem, base, pi, "minmax"),
            )
        lower, upper = cache[stages]
        ok = (Jb <= lower + 1e-10) and (lower <= upper + 1e-10) and (upper <= Ja + 1e-10)
        bracket_ok = bracket_ok and ok
        residual = Ja - u0 - (1.0 - eps) * eps
        row = {"eps": eps, "stages": stages, "J_a": Ja, "J_b": Jb,
               "tree_lower": lower, "tree_upper": upper,
               "residual": residual, "bracket_ok": bool(ok)}
        rows.append(row)
        if (eps, stages) in pairs:
            diag.append(row)
    diag_residuals = [r["residual"] for r in diag]
    decreasing = all(
        diag_residuals[k + 1] < diag_residuals[k]
        for k in range(len(diag_residuals) - 1)
    )
    return CheckReport(
        name="extremal_shift_guarantee",
        passed=bool(decreasing and bracket_ok),
        details={
            "u0": float(u0),
            "diagonal_residuals": diag_residuals,
            "strictly_decreasing": bool(decreasing),
            "bracket_ok": bool(bracket_ok),
        },
        rows=rows,
    )
