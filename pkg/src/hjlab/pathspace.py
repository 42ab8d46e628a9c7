"""Trajectory space over a uniform time grid.

A ``Path`` stores nodal state snapshots of a grid function on the full
time grid [0, T] together with the index of its birth time t0: nodes up
to ``birth_index`` are prescribed history, later nodes come from the
solver.  Forcing rows, when present, hold the right-hand side used on
[t_i, t_{i+1}) so the discrete equation can be replayed or differentiated
exactly.

The metric is the history sup-distance plus the time offset,
``d((t,x),(s,y)) = max_r |x(r /\ t) - y(r /\ s)|_H + |t - s|``, evaluated
on grid nodes.  ``stop`` freezes a path at a node, which is the probe used
by the non-anticipation and derivative-limit checks.

Bundles are finite samples of the admissible set: trajectories that share
the history up to t0 and solve the evolution equation driven by forcings
bounded by L*(1 + running sup).  ``sample_bundle`` integrates each member
step by step so the admissibility bound can use the running sup of the
member itself, and always includes the zero forcing and the +/- extreme
single-mode forcings before any random members.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .gelfand import GelfandDiscretization, MonotoneOperator
from .reporting import CheckReport
from .tolerances import TOL_IDENTITY


def make_time_grid(T: float, nt: int) -> np.ndarray:
    """Uniform grid 0 = t_0 < ... < t_nt = T."""
    if T <= 0 or nt < 1:
        raise ValueError("need T > 0 and nt >= 1")
    return np.linspace(0.0, float(T), nt + 1)


def grid_index(times: np.ndarray, t: float) -> int:
    """Index of t in the grid; t must sit on a node."""
    i = int(round(t / (times[1] - times[0])))
    i = min(max(i, 0), len(times) - 1)
    if abs(times[i] - t) > 1e-9 * max(1.0, times[-1]):
        raise ValueError(f"t={t} is not a grid node")
    return i


@dataclass(frozen=True, eq=False)
class Path:
    """Nodal trajectory with prescribed history up to ``birth_index``."""

    times: np.ndarray          # (nt+1,)
    values: np.ndarray         # (nt+1, n)
    birth_index: int = 0
    forcing: Optional[np.ndarray] = None   # (nt, n), row i lives on [t_i, t_{i+1})

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != times.shape[0]:
            raise ValueError("values must be (nt+1, n) matching times")
        if not 0 <= self.birth_index < len(times):
            raise ValueError("birth_index out of range")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if self.forcing is not None:
            f = np.asarray(self.forcing, dtype=float)
            if f.shape != (len(times) - 1, values.shape[1]):
                raise ValueError("forcing must be (nt, n)")
            f.setflags(write=False)
            object.__setattr__(self, "forcing", f)
        times.setflags(write=False)
        values.setflags(write=False)

    @property
    def nt(self) -> int:
        return len(self.times) - 1

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def birth_time(self) -> float:
        return float(self.times[self.birth_index])

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def value_at(self, t: float) -> np.ndarray:
        return self.values[grid_index(self.times, t)]


class History:
    """Read-only view of a path's nodes 0..idx, what a causal rhs may see."""

    __slots__ = ("times", "values", "idx")

    def __init__(self, times: np.ndarray, values: np.ndarray, idx: int):
        self.times = times
        view = values[: idx + 1]
        if view.base is not None or view.flags.writeable:
            view = view.view()
            view.flags.writeable = False
        self.values = view
        self.idx = idx

    @property
    def t(self) -> float:
        return float(self.times[self.idx])

    @property
    def latest(self) -> np.ndarray:
        return self.values[self.idx]

    def delayed(self, tau: float) -> np.ndarray:
        """Value at (t - tau) clamped to 0, left-constant between nodes."""
        target = self.t - tau
        if target <= self.times[0]:
            return self.values[0]
        j = int(np.searchsorted(self.times[: self.idx + 1], target, side="right")) - 1
        return self.values[j]

    def running_integral(self) -> np.ndarray:
        """Left-rectangle integral of the state over [0, t]."""
        dt = float(self.times[1] - self.times[0])
        if self.idx == 0:
            return np.zeros_like(self.values[0])
        return dt * self.values[: self.idx].sum(axis=0)

    def sup_H(self, disc: GelfandDiscretization) -> float:
        return max(disc.norm_H(v) for v in self.values)


def history_of(path: Path, idx: int) -> History:
    return History(path.times, path.values, idx)


def constant_history(times: np.ndarray, x0: np.ndarray, birth_index: int = 0) -> Path:
    """Path equal to x0 at every node; standard constant initial history."""
    x0 = np.asarray(x0, dtype=float)
    values = np.tile(x0, (len(times), 1))
    return Path(times=times, values=values, birth_index=birth_index)


def sup_norm(disc: GelfandDiscretization, path: Path, upto: Optional[int] = None) -> float:
    """max_{i <= upto} |x(t_i)|_H, whole path when upto is None."""
    hi = path.nt if upto is None else upto
    return max(disc.norm_H(path.values[i]) for i in range(hi + 1))


def d_infty(disc: GelfandDiscretization, t: float, x: Path, s: float, y: Path) -> float:
    """History sup-distance of the stopped paths plus the time offset."""
    if x.times.shape != y.times.shape or not np.allclose(x.times, y.times):
        raise ValueError("paths live on different grids")
    it = grid_index(x.times, t)
    js = grid_index(y.times, s)
    sup = 0.0
    for r in range(x.nt + 1):
        d = disc.norm_H(x.values[min(r, it)] - y.values[min(r, js)])
        if d > sup:
            sup = d
    return sup + abs(t - s)


def stop(path: Path, t: float) -> Path:
    """Freeze the path at time t; nodes after t repeat the value at t.

    The result carries no forcing: a frozen tail does not solve the
    evolution equation, it is a metric-space probe.
    """
    it = grid_index(path.times, t)
    values = path.values.copy()
    values[it + 1 :] = values[it]
    return Path(times=path.times, values=values, birth_index=path.birth_index)


@dataclass(frozen=True, eq=False)
class TrajectoryBundle:
    """Finite sample of admissible trajectories sharing a history."""

    disc: GelfandDiscretization
    op: MonotoneOperator
    t0_index: int
    base: Path                  # shared history, constant continuation
    L: float
    members: tuple
    seed: Optional[int] = None
    n_modes: int = 3

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def times(self) -> np.ndarray:
        return self.base.times

    @property
    def t0(self) -> float:
        return float(self.base.times[self.t0_index])


def sample_bundle(
    disc: GelfandDiscretization,
    op: MonotoneOperator,
    base: Path,
    t0_index: int,
    L: float,
    size: int,
    seed: int,
    n_modes: int = 3,
    extra_members: Sequence[Path] = (),
) -> TrajectoryBundle:
    """Sample admissible trajectories from the history (t0, base).

    Deterministic members come first: the zero forcing, then for each of
    the first ``n_modes`` eigenmodes the +/- forcing at the full budget
    L*(1 + running sup).  Random members draw a direction in the span of
    those modes and a magnitude fraction at every step, from a generator
    seeded by ``seed``.  ``extra_members`` (already-admissible paths, e.g.
    controlled rollouts) are appended after the deterministic block.
    """
    from .evolution import solve_ivp, CallableRhs

    if L < 0:
        raise ValueError("L must be >= 0")
    modes = [disc.basis_mode(k) for k in range(1, n_modes + 1)]

    def forced(direction_of_step: Callable[[int, float], np.ndarray]) -> Path:
        def rhs(t, hist):
            return direction_of_step(hist.idx, L * (1.0 + hist.sup_H(disc)))
        return solve_ivp(disc, op, base, t0_index, CallableRhs(rhs))

    members = [forced(lambda i, mag: np.zeros(disc.n))]
    if L > 0:
        for mode in modes:
            for sign in (+1.0, -1.0):
                members.append(forced(lambda i, mag, d=sign * mode: mag * d))
        members.extend(extra_members)
        rng = np.random.default_rng([seed, 101])
        while len(members) < size:
            coeffs = rng.standard_normal(len(modes))
            direction = sum(c * m for c, m in zip(coeffs, modes))
            nrm = disc.norm_H(direction)
            if nrm < 1e-12:
                continue
            direction = direction / nrm
            frac = rng.uniform(0.0, 1.0)
            members.append(forced(lambda i, mag, d=direction, f=frac: f * mag * d))
    members = members[:size]
    return TrajectoryBundle(
        disc=disc, op=op, t0_index=t0_index, base=base, L=L,
        members=tuple(members), seed=seed, n_modes=n_modes,
    )


def check_admissibility(bundle: TrajectoryBundle, tol: float = TOL_IDENTITY) -> CheckReport:
    """Shared history, forcing budget, and step equicontinuity of a bundle.

    The per-step increment constant K = max |x(t_{i+1}) - x(t_i)|_H / sqrt(dt)
    is recorded, not asserted: it is the empirical surrogate for the
    compactness modulus of the admissible set.
    """
    disc = bundle.disc
    base = bundle.base
    i0 = bundle.t0_index
    dt = base.dt
    rows = []
    worst_hist = 0.0
    worst_budget = -np.inf
    worst_K = 0.0
    for m_idx, member in enumerate(bundle.members):
        hist_err = float(np.max(np.abs(member.values[: i0 + 1] - base.values[: i0 + 1]))) if i0 >= 0 else 0.0
        worst_hist = max(worst_hist, hist_err)
        budget_slack = np.inf
        if member.forcing is not None:
            run_sup = disc.norm_H(member.values[0])
            for i in range(member.nt):
                run_sup = max(run_sup, disc.norm_H(member.values[i]))
                if i >= i0:
                    excess = disc.norm_H(member.forcing[i]) - bundle.L * (1.0 + run_sup)
                    worst_budget = max(worst_budget, excess)
                    budget_slack = min(budget_slack, -excess)
        K = max(
            disc.norm_H(member.values[i + 1] - member.values[i]) / np.sqrt(dt)
            for i in range(i0, member.nt)
        )
        worst_K = max(worst_K, K)
        rows.append({"member": m_idx, "history_error": hist_err,
                     "budget_slack": float(budget_slack), "step_constant": float(K)})
    passed = worst_hist <= tol and worst_budget <= tol
    return CheckReport(
        name="bundle_admissibility",
        passed=bool(passed),
        details={
            "size": bundle.size,
            "L": bundle.L,
            "max_history_error": worst_hist,
            "max_budget_excess": float(worst_budget),
            "equicontinuity_constant": worst_K,
        },
        rows=rows,
    )


def check_equiv_pseudometrics(bundle: TrajectoryBundle, t: float) -> CheckReport:
    """Sup-square versus integral pseudo-metric comparison on a bundle.

    For members x, y sharing the history up to t0 the asserted bound is

        max_{s <= t} |x(s) - y(s)|_H^2  <=  2 C ||x - y||_{L^2(t0,t;H)}

    with C the a-priori bound of the admissible set.  The proof chain
    actually controls half the left side by the duality product of the
    rhs-difference and the state-difference L^2 norms; both the asserted
    slack and the tighter chain product are reported.
    """
    from .evolution import apriori_constants

    disc = bundle.disc
    op = bundle.op
    t0 = bundle.t0
    it = grid_index(bundle.times, t)
    i0 = bundle.t0_index
    dt = bundle.base.dt
    consts = apriori_constants(disc, op, bundle.base, i0, bundle.L,
                               T=float(bundle.times[-1]))
    C = consts["C"]
    rows = []
    min_slack = np.inf
    for i in range(bundle.size):
        for j in range(i + 1, bundle.size):
            x, y = bundle.members[i], bundle.members[j]
            diff = x.values - y.values
            sup2 = max(disc.norm_H(diff[r]) ** 2 for r in range(it + 1))
            l2 = np.sqrt(dt * sum(disc.norm_H(diff[r]) ** 2 for r in range(i0, it)))
            bound = 2.0 * C * l2
            slack = bound - sup2
            min_slack = min(min_slack, slack)
            rows.append({"i": i, "j": j, "sup_sq": sup2, "l2": l2,
                         "bound": bound, "slack": slack})
    passed = min_slack >= -TOL_IDENTITY
    return CheckReport(
        name="equiv_pseudometrics",
        passed=bool(passed),
        details={"t": t, "t0": t0, "C": C, "min_slack": float(min_slack),
                 "pairs": len(rows)},
        rows=rows,
        notes="asserted: sup^2 <= 2*C*L2; chain form bounds 0.5*sup^2",
    )


def path_to_csv(path: Path, fname: str) -> None:
    """One row per node: t, state coordinates, forcing on [t_i, t_{i+1})."""
    n = path.n
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{j+1}" for j in range(n)] + [f"f{j+1}" for j in range(n)])
        for i, t in enumerate(path.times):
            frow = [0.0] * n
            if path.forcing is not None and i < path.nt:
                frow = [repr(float(v)) for v in path.forcing[i]]
            else:
                frow = [repr(0.0)] * n
            w.writerow([repr(float(t))] + [repr(float(v)) for v in path.values[i]] + frow)


def bundle_manifest(bundle: TrajectoryBundle) -> dict:
    return {
        "t0": bundle.t0,
        "t0_index": bundle.t0_index,
        "L": bundle.L,
        "size": bundle.size,
        "seed": bundle.seed,
        "n_modes": bundle.n_modes,
        "n": bundle.disc.n,
        "nt": bundle.base.nt,
        "operator": bundle.op.kind,
    }


def write_bundle(bundle: TrajectoryBundle, directory: str) -> None:
    import os

    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "bundle.json"), "w") as fh:
        json.dump(bundle_manifest(bundle), fh, indent=2, sort_keys=True)
    for i, member in enumerate(bundle.members):
        path_to_csv(member, os.path.join(directory, f"member_{i:03d}.csv"))
