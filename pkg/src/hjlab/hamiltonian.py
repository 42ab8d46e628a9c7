"""Lower envelopes over finite control sets and their hypothesis checks.

The scalar F(t, x, z) is built by exact enumeration: a minimum of
running-cost-plus-duality terms over the control set for one-player
problems, and min-max / max-min over both finite sets for games.  No
approximate optimization is ever used; ties break to the lowest index.

check_HF verifies the declared structural bounds on samples: the
z-Lipschitz bound with constant L0*(1 + running sup of the state), and,
for instances whose costs are endpoint-plus-integral Lipschitz in the
state, the game-form state bound L_f*(1+|z|)*sqrt(|x(t)-y(t)|^2 +
int_0^t |x-y|^2 ds).  check_isaacs measures the min-max/max-min gap,
which vanishes for separated structure and is genuinely positive for
coupled bilinear costs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .gelfand import GelfandDiscretization
from .pathspace import History, Path
from .reporting import CheckReport
from .tolerances import TOL_IDENTITY

MODES = ("bellman", "isaacs_minmax", "isaacs_maxmin")


@dataclass(frozen=True)
class HamiltonianSpec:
    """Finite-control envelope specification.

    ``f`` and ``ell`` take (t, history, p) in bellman mode and
    (t, history, p, q) in the isaacs modes.  L0 is the declared scale of
    the z-Lipschitz bound (the forcing magnitude scale).
    """

    disc: GelfandDiscretization
    mode: str
    P: Tuple[float, ...]
    f: Callable
    ell: Callable
    L0: float
    Q: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if len(self.P) < 1:
            raise ValueError("P must be nonempty")
        if self.mode != "bellman" and (self.Q is None or len(self.Q) < 1):
            raise ValueError("isaacs modes need a nonempty Q")


def eval_F(spec: HamiltonianSpec, t: float, hist: History, z: np.ndarray):
    """Exact envelope value with optimizer witnesses.

    Returns (value, p_index, q_index); q_index is -1 in bellman mode.
    np.argmin/argmax return the first optimizer, which is the lowest
    index by construction.
    """
    disc = spec.disc
    if spec.mode == "bellman":
        vals = np.array([
            spec.ell(t, hist, p) + disc.inner(spec.f(t, hist, p), z)
            for p in spec.P
        ])
        i = int(np.argmin(vals))
        return float(vals[i]), i, -1
    table = np.array([
        [
            spec.ell(t, hist, p, q) + disc.inner(spec.f(t, hist, p, q), z)
            for q in spec.Q
        ]
        for p in spec.P
    ])
    if spec.mode == "isaacs_minmax":
        row_best = table.max(axis=1)
        i = int(np.argmin(row_best))
        j = int(np.argmax(table[i]))
        return float(table[i, j]), i, j
    col_best = table.min(axis=0)
    j = int(np.argmax(col_best))
    i = int(np.argmin(table[:, j]))
    return float(table[i, j]), i, j


def _state_metric(disc: GelfandDiscretization, x: Path, y: Path, idx: int) -> float:
    """sqrt(|x(t)-y(t)|_H^2 + int_0^t |x-y|_H^2 ds), left-rectangle."""
    dt = x.dt
    end = disc.norm_H(x.values[idx] - y.values[idx]) ** 2
    run = dt * sum(
        disc.norm_H(x.values[i] - y.values[i]) ** 2 for i in range(idx)
    )
    return float(np.sqrt(end + run))


def check_HF(
    spec: HamiltonianSpec,
    members: Sequence[Path],
    z_list: Sequence[np.ndarray],
    t_indices: Sequence[int],
    state_lipschitz: bool = True,
    tol: float = TOL_IDENTITY,
) -> CheckReport:
    """Structural bounds of the envelope on sampled states and directions.

    Always checks the z-Lipschitz bound
        |F(t,x,z) - F(t,x,z')| <= L0 (1 + sup_{s<=t}|x(s)|_H) |z - z'|_H.
    With ``state_lipschitz`` it additionally checks the game-form state
    bound  |F(t,x,z) - F(t,y,z)| <= L0 (1+|z|_H) * state metric; skip it
    for instances with concentrated delay costs, which are only
    sup-Lipschitz in the state.
    """
    disc = spec.disc
    rows = []
    worst_z = -np.inf
    worst_x = -np.inf
    for ti in t_indices:
        for m_idx, x in enumerate(members):
            hist = History(x.times, x.values, ti)
            t = float(x.times[ti])
            sup = hist.sup_H(disc)
            for a in range(len(z_list)):
                for b in range(a + 1, len(z_list)):
                    za, zb = z_list[a], z_list[b]
                    Fa, _, _ = eval_F(spec, t, hist, za)
                    Fb, _, _ = eval_F(spec, t, hist, zb)
                    bound = spec.L0 * (1.0 + sup) * disc.norm_H(za - zb)
                    excess = abs(Fa - Fb) - bound
                    worst_z = max(worst_z, excess)
                    rows.append({"kind": "z", "t": t, "member": m_idx,
                                 "pair": (a, b), "excess": float(excess)})
    if state_lipschitz:
        for ti in t_indices:
            for a in range(len(members)):
                for b in range(a + 1, len(members)):
                    x, y = members[a], members[b]
                    hx = History(x.times, x.values, ti)
                    hy = History(y.times, y.values, ti)
                    t = float(x.times[ti])
                    metric = _state_metric(disc, x, y, ti)
                    for zi, z in enumerate(z_list):
                        Fx, _, _ = eval_F(spec, t, hx, z)
                        Fy, _, _ = eval_F(spec, t, hy, z)
                        bound = spec.L0 * (1.0 + disc.norm_H(z)) * metric
                        excess = abs(Fx - Fy) - bound
                        worst_x = max(worst_x, excess)
                        rows.append({"kind": "x", "t": t, "pair": (a, b),
                                     "z": zi, "excess": float(excess)})
    passed = worst_z <= tol and (not state_lipschitz or worst_x <= tol)
    return CheckReport(
        name="hamiltonian_hypotheses",
        passed=bool(passed),
        details={
            "max_z_excess": float(worst_z),
            "max_state_excess": float(worst_x) if state_lipschitz else None,
            "state_lipschitz_checked": state_lipschitz,
            "cases": len(rows),
        },
        rows=rows,
    )


def check_isaacs(
    minmax_spec: HamiltonianSpec,
    members: Sequence[Path],
    z_list: Sequence[np.ndarray],
    t_indices: Sequence[int],
    tol: float = 1e-12,
) -> CheckReport:
    """Min-max versus max-min gap of the game envelope, pointwise.

    Pass means the orders agree to rounding at every sample; a genuine
    gap (coupled bilinear costs) is reported with its size.
    """
    if minmax_spec.mode != "isaacs_minmax":
        raise ValueError("pass the minmax-mode spec")
    maxmin_spec = HamiltonianSpec(
        disc=minmax_spec.disc, mode="isaacs_maxmin", P=minmax_spec.P,
        f=minmax_spec.f, ell=minmax_spec.ell, L0=minmax_spec.L0,
        Q=minmax_spec.Q,
    )
    rows = []
    max_gap = 0.0
    for ti in t_indices:
        for m_idx, x in enumerate(members):
            hist = History(x.times, x.values, ti)
            t = float(x.times[ti])
            for zi, z in enumerate(z_list):
                upper, _, _ = eval_F(minmax_spec, t, hist, z)
                lower, _, _ = eval_F(maxmin_spec, t, hist, z)
                gap = upper - lower
                max_gap = max(max_gap, abs(gap))
                rows.append({"t": t, "member": m_idx, "z": zi,
                             "minmax": upper, "maxmin": lower, "gap": gap})
    return CheckReport(
        name="isaacs_condition",
        passed=bool(max_gap <= tol),
        details={"max_gap": float(max_gap), "tol": tol, "cases": len(rows)},
        rows=rows,
    )
