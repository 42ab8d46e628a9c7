"""Experiment configuration: schema, validation, canonical hashing.

Configs are JSON documents validated against the pydantic models below
(the published schema is ``config_schema()`` / the ``schema`` CLI
command).  Seeds are mandatory wherever randomness is involved; the
canonical hash covers the fully-resolved config so a manifest pins every
input of a run.

Inline problems cover the affine family only: state-independent
actuation built from basis-mode coefficient tables, running cost affine
in the (possibly delayed) state plus a per-control scalar, affine
terminal cost.  Anything richer ships as a named preset.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .control import ControlProblem
from .gelfand import assemble_discretization, make_operator
from .pathspace import constant_history, make_time_grid
from .presets import PRESET_NAMES, ControlPreset, build_preset


class ConfigError(ValueError):
    """Schema or cross-reference failure; maps to exit code 2."""


class DiscretizationBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")
    n: int = Field(ge=2, le=64, description="interior grid points")
    dt: float = Field(gt=0, le=0.25, description="solver step")
    domain_length: float = Field(default=math.pi, gt=0)


class OperatorBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: Literal["linear_laplacian", "p_laplacian", "zero"] = "linear_laplacian"
    p: float = Field(default=2.0, ge=2.0, le=6.0)


class InlineTables(BaseModel):
    """Affine problem tables; one actuation row per control value."""

    model_config = ConfigDict(extra="forbid")
    f_modes: List[List[float]] = Field(
        description="per control value: basis-mode coefficients of f")
    ell_state_modes: List[float] = Field(
        description="basis-mode coefficients of the state cost weight")
    ell_control: List[float] = Field(
        description="per control value: additive running cost")
    h_modes: List[float] = Field(
        description="basis-mode coefficients of the terminal weight")
    h_const: float = 0.0
    quadratic_terminal: bool = Field(
        default=False, description="add |x(T)|_H^2 to the terminal cost")


class ProblemBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")
    preset: Optional[str] = None
    inline: Optional[InlineTables] = None
    P: Optional[List[float]] = None
    Q: Optional[List[float]] = None
    L_f: float = Field(default=1.0, gt=0)
    delay: float = Field(default=0.0, ge=0.0)
    T: float = Field(default=1.0, gt=0)
    stages: int = Field(default=4, ge=1, le=6)
    x0_modes: List[float] = Field(default_factory=lambda: [0.8])

    @model_validator(mode="after")
    def _one_source(self):
        if (self.preset is None) == (self.inline is None):
            raise ValueError("exactly one of problem.preset / problem.inline")
        if self.preset is not None and self.preset not in PRESET_NAMES:
            raise ValueError(f"unknown preset {self.preset!r}; "
                             f"choose from {list(PRESET_NAMES)}")
        if self.inline is not None:
            if self.P is None:
                raise ValueError("inline problems must list P")
            if len(self.inline.f_modes) != len(self.P):
                raise ValueError("inline.f_modes needs one row per control in P")
            if len(self.inline.ell_control) != len(self.P):
                raise ValueError("inline.ell_control needs one entry per control in P")
        return self


class BundleBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")
    L: float = Field(default=1.0, ge=0.0)
    size: int = Field(default=32, ge=1, le=64)
    k: int = Field(default=3, ge=1, le=8, description="forcing mode count")
    seed: int = Field(description="mandatory; drives every random draw")


SUITE_NAMES = ("operators", "calculus", "minimax", "control", "game")


class VerificationBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")
    suites: List[Literal["operators", "calculus", "minimax", "control", "game"]] = (
        Field(default_factory=lambda: list(SUITE_NAMES)))
    eps_ladder: List[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05])
    partition_ladder: List[int] = Field(default_factory=lambda: [2, 4, 8])

    @model_validator(mode="after")
    def _ladders(self):
        if len(self.eps_ladder) != len(self.partition_ladder):
            raise ValueError("eps_ladder and partition_ladder must have equal length")
        if any(not 0.0 < e < 1.0 for e in self.eps_ladder):
            raise ValueError("eps values must lie in (0, 1)")
        return self


class OutputBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")
    out_dir: str = "artifacts"
    formats: List[Literal["csv", "json"]] = Field(
        default_factory=lambda: ["csv", "json"])


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    discretization: DiscretizationBlock
    operator: OperatorBlock = OperatorBlock()
    problem: ProblemBlock
    bundle: BundleBlock
    verification: VerificationBlock = VerificationBlock()
    output: OutputBlock = OutputBlock()


def config_schema() -> dict:
    return ExperimentConfig.model_json_schema()


def config_hash(cfg: ExperimentConfig) -> str:
    # identifies the experiment, so the output block stays out: the same
    # run written to two directories must stamp the same hash
    payload = cfg.model_dump(mode="json")
    payload.pop("output", None)
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def build_problem(cfg: ExperimentConfig):
    """Resolve the config into a ControlPreset or GamePreset."""
    pb = cfg.problem
    if pb.preset is not None:
        kwargs = {}
        if pb.preset in ("heat-control", "heat-delay"):
            kwargs = {"n": cfg.discretization.n,
                      "nt": int(round(pb.T / cfg.discretization.dt)),
                      "stages": pb.stages}
            if pb.preset == "heat-delay" and pb.delay > 0:
                kwargs["delay"] = pb.delay
        elif pb.preset == "plap-decay":
            kwargs = {"n": cfg.discretization.n,
                      "nt": int(round(pb.T / cfg.discretization.dt))}
        return build_preset(pb.preset, **kwargs)
    return _build_inline(cfg)


def _build_inline(cfg: ExperimentConfig):
    pb = cfg.problem
    tables = pb.inline
    disc = assemble_discretization(cfg.discretization.domain_length,
                                   cfg.discretization.n)
    op = make_operator(disc, cfg.operator.kind, p=cfg.operator.p)
    nt = int(round(pb.T / cfg.discretization.dt))
    if abs(nt * cfg.discretization.dt - pb.T) > 1e-12:
        raise ConfigError("dt must divide the horizon T")
    times = make_time_grid(pb.T, nt)
    if nt % pb.stages != 0:
        raise ConfigError("stages must divide the number of solver steps")

    def mode_vec(coeffs):
        v = np.zeros(disc.n)
        for k, c in enumerate(coeffs, start=1):
            v += c * disc.basis_mode(k)
        return v

    f_rows = [mode_vec(row) for row in tables.f_modes]
    w_ell = mode_vec(tables.ell_state_modes)
    w_h = mode_vec(tables.h_modes)
    P = tuple(pb.P)
    ell_ctrl = tuple(tables.ell_control)
    delay = pb.delay
    quad = tables.quadratic_terminal

    def f(t, hist, p):
        return f_rows[P.index(p)]

    def ell(t, hist, p):
        x = hist.delayed(delay) if delay > 0 else hist.latest
        return disc.inner(x, w_ell) + ell_ctrl[P.index(p)]

    def terminal(hist):
        val = disc.inner(hist.latest, w_h) + tables.h_const
        if quad:
            val += disc.norm_H(hist.latest) ** 2
        return val

    problem = ControlProblem(
        name="inline", disc=disc, op=op, times=times,
        control_indices=tuple(range(0, nt + 1, nt // pb.stages)),
        P=P, f=f, ell=ell, terminal=terminal,
        Lf=pb.L_f, bundle_L=cfg.bundle.L,
    )
    base = constant_history(times, mode_vec(pb.x0_modes))
    return ControlPreset("inline", problem, base, delay=delay,
                         state_lipschitz=(delay == 0.0))
