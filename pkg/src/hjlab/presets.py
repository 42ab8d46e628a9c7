"""Named problem presets.

Four desk-scale instances, each the smallest problem that exercises one
area end to end:

1. heat-control: heat equation with a distributed actuator along the
   first eigenmode, quadratic control cost, three-level control set.
2. heat-delay: same plant, running cost reads the state a fixed delay
   into the past (path dependence beyond the current value).
3. plap-decay: p-Laplacian (p = 4) free decay; single no-op control, so
   the value is one rollout and the interest is the nonlinear operator.
4. bilinear-game: separated bilinear game on a short horizon whose
   actuator gain changes sign twice at staggered grid positions, so each
   partition refinement genuinely improves the feedback guarantee; the
   Isaacs condition holds stagewise (separated costs).

All presets fit the acceptance budget: n <= 32, dt >= 1/64, |P|,|Q| <= 4,
<= 6 control intervals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Tuple

import numpy as np

from .control import ControlProblem
from .game import GameProblem
from .gelfand import assemble_discretization, make_operator
from .pathspace import Path, constant_history, make_time_grid


@dataclass(frozen=True)
class ControlPreset:
    name: str
    problem: ControlProblem
    base: Path
    delay: float = 0.0
    # delay presets are sup-norm Lipschitz in the path but not Lipschitz
    # in the current-state metric, so that one HF sub-check is skipped
    state_lipschitz: bool = True


@dataclass(frozen=True)
class GamePreset:
    name: str
    problem: GameProblem
    base: Path
    terminal_weight: np.ndarray
    terminal_const: float


def _control_grid(nt: int, stages: int) -> Tuple[int, ...]:
    if nt % stages != 0:
        raise ValueError(f"{stages} stages do not divide {nt} steps")
    return tuple(range(0, nt + 1, nt // stages))


def heat_control(n: int = 16, nt: int = 64, stages: int = 4) -> ControlPreset:
    disc = assemble_discretization(np.pi, n)
    op = make_operator(disc, "linear_laplacian")
    times = make_time_grid(1.0, nt)
    w_act = disc.basis_mode(1)
    w_cost = disc.basis_mode(1) + 0.5 * disc.basis_mode(2)

    def f(t, hist, p):
        return p * w_act

    def ell(t, hist, p):
        return disc.inner(hist.latest, w_cost) + 0.5 * p * p

    def terminal(hist):
        return disc.norm_H(hist.latest) ** 2

    problem = ControlProblem(
        name="heat-control", disc=disc, op=op, times=times,
        control_indices=_control_grid(nt, stages), P=(-1.0, 0.0, 1.0),
        # Lf dominates |w_act|_H = 1 and the cost slope |w_cost|_H = sqrt(5)/2
        f=f, ell=ell, terminal=terminal, Lf=1.25, bundle_L=1.0,
    )
    base = constant_history(times, 0.8 * disc.sine_mode(1))
    return ControlPreset("heat-control", problem, base)


def heat_delay(n: int = 16, nt: int = 64, stages: int = 4,
               delay: float = 0.25) -> ControlPreset:
    disc = assemble_discretization(np.pi, n)
    op = make_operator(disc, "linear_laplacian")
    times = make_time_grid(1.0, nt)
    w_act = disc.basis_mode(1)
    w_cost = disc.basis_mode(1) + 0.5 * disc.basis_mode(2)

    def f(t, hist, p):
        return p * w_act

    def ell(t, hist, p):
        # cost reads the state `delay` ago (clamped at birth)
        return disc.inner(hist.delayed(delay), w_cost) + 0.5 * p * p

    def terminal(hist):
        return disc.norm_H(hist.latest) ** 2

    problem = ControlProblem(
        name="heat-delay", disc=disc, op=op, times=times,
        control_indices=_control_grid(nt, stages), P=(-1.0, 0.0, 1.0),
        f=f, ell=ell, terminal=terminal, Lf=1.25, bundle_L=1.0,
    )
    base = constant_history(times, 0.8 * disc.sine_mode(1))
    return ControlPreset("heat-delay", problem, base, delay=delay,
                         state_lipschitz=False)


def plap_decay(n: int = 16, nt: int = 64) -> ControlPreset:
    disc = assemble_discretization(np.pi, n)
    op = make_operator(disc, "p_laplacian", p=4.0)
    times = make_time_grid(1.0, nt)

    def f(t, hist, p):
        return np.zeros(disc.n)

    def ell(t, hist, p):
        return 0.5 * disc.norm_H(hist.latest) ** 2

    def terminal(hist):
        return disc.norm_H(hist.latest) ** 2

    problem = ControlProblem(
        name="plap-decay", disc=disc, op=op, times=times,
        control_indices=_control_grid(nt, 4), P=(0.0,),
        f=f, ell=ell, terminal=terminal, Lf=1.0, bundle_L=1.0,
    )
    base = constant_history(times, 0.75 * disc.sine_mode(1))
    return ControlPreset("plap-decay", problem, base)


# bilinear-game gain profile: zeros at t/T = 1/8 and 17/32, i.e. just
# after a node that only the finer partitions own, so every rung of the
# 2/4/8-stage ladder reacts to a sign change one node earlier than the
# rung above it
_GAME_T = 0.5
_GAME_AMP = 1.8
_GAME_OMEGA = 32.0 * np.pi / (13.0 * _GAME_T)
_GAME_PHASE = 5.0 * np.pi / 26.0


def game_gain(t: float) -> float:
    return _GAME_AMP * float(np.cos(_GAME_OMEGA * t + _GAME_PHASE))


def bilinear_game(n: int = 8, nt: int = 32) -> GamePreset:
    disc = assemble_discretization(np.pi, n)
    op = make_operator(disc, "linear_laplacian")
    times = make_time_grid(_GAME_T, nt)
    g1 = disc.basis_mode(1)
    g2 = 0.7 * disc.basis_mode(2)
    w_h = 0.8 * disc.basis_mode(1) + 0.3 * disc.basis_mode(2)
    c_h = 0.2

    def f(t, hist, p, q):
        return p * game_gain(t) * g1 + q * g2

    def ell(t, hist, p, q):
        return 0.05 * p - 0.05 * q

    def terminal(hist):
        return disc.inner(hist.latest, w_h) + c_h

    problem = GameProblem(
        name="bilinear-game", disc=disc, op=op, times=times,
        P=(-1.0, 1.0), Q=(-1.0, 1.0), f=f, ell=ell, terminal=terminal,
        Lf=1.25, bundle_L=_GAME_AMP + 1.0,
    )
    base = constant_history(times, 0.5 * disc.sine_mode(1))
    return GamePreset("bilinear-game", problem, base, w_h, c_h)


def game_as_control(preset: GamePreset, q_index: int = 0) -> ControlPreset:
    """Projection of the game onto a control problem with frozen q.

    Used to run the control-side checks (dynamic programming and value
    regularity) on the game preset.
    """
    gp = preset.problem
    q = gp.Q[q_index]

    problem = ControlProblem(
        name=f"{gp.name}[q={q:g}]", disc=gp.disc, op=gp.op, times=gp.times,
        control_indices=_control_grid(gp.nt, 4), P=gp.P,
        f=lambda t, hist, p: gp.f(t, hist, p, q),
        ell=lambda t, hist, p: gp.ell(t, hist, p, q),
        terminal=gp.terminal, Lf=gp.Lf, bundle_L=gp.bundle_L,
    )
    return ControlPreset(problem.name, problem, preset.base)


CONTROL_PRESETS: Dict[str, Callable[..., ControlPreset]] = {
    "heat-control": heat_control,
    "heat-delay": heat_delay,
    "plap-decay": plap_decay,
}

GAME_PRESETS: Dict[str, Callable[..., GamePreset]] = {
    "bilinear-game": bilinear_game,
}

PRESET_NAMES: Tuple[str, ...] = (
    "heat-control", "heat-delay", "plap-decay", "bilinear-game",
)


def build_preset(name: str, **overrides):
    """Build a preset by name; returns ControlPreset or GamePreset."""
    if name in CONTROL_PRESETS:
        return CONTROL_PRESETS[name](**overrides)
    if name in GAME_PRESETS:
        return GAME_PRESETS[name](**overrides)
    raise KeyError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
