"""Finite-dimensional surrogate of the Gelfand triple V in H in V* and the
monotone operators acting on it.

The spatial domain is a 1-D interval (0, domain_length) with homogeneous
Dirichlet boundary, discretized by n interior grid points.  This is the
smallest setting with a compact embedding V in H while keeping analytic
oracles: the discrete Dirichlet Laplacian has exact sine eigenvectors.

Conventions (used consistently by the whole package):
  * H-inner product   (x, y) = h * sum_i x_i y_i      (diagonal mass),
  * V-norm            ||x||^2 = (1/h) * sum_j (x_{j+1} - x_j)^2 over the
                      n+1 first differences with zero boundary values,
  * duality pairing   <g, v> = (g, v) for g given in H-coordinates,
  * V*-norm           ||g||_*^2 = h^3 * g^T K^{-1} g with K the
                      (2, -1) second-difference matrix (discrete Riesz map).

With these choices <A_lin v, v> = ||v||^2 exactly for the linear Laplacian
A_lin = K/h^2, so its coercivity constant is c2 = 1 with p = 2.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ._accel import TridiagSolver, plap_apply
from .reporting import CheckReport

OPERATOR_KINDS = ("linear_laplacian", "p_laplacian", "zero")


class GelfandDiscretization:
    """Grid, inner products, norms, and embedding constants.

    Parameters
    ----------
    domain_length : float
        Length of the interval G = (0, domain_length).
    n : int
        Number of interior grid points.

    Attributes
    ----------
    h : float
        Mesh width, domain_length / (n + 1).
    xi : ndarray
        Interior node coordinates.
    quadrature_weights : ndarray
        H-inner-product weights (all equal to h).
    eigenvalues : ndarray
        Eigenvalues of the discrete Dirichlet Laplacian K/h^2, ascending.
    C1 : float
        Embedding constant of V into H: |v| <= C1 ||v||, computed as
        1/sqrt(lambda_min) of the discrete Laplacian.
    C5 : float
        Embedding constant of H into V*: ||g||_* <= C5 |g|.  For this
        discretization C5 equals C1.
    """

    def __init__(self, domain_length: float, n: int):
        if domain_length <= 0:
            raise ValueError("domain_length must be positive")
        if n < 1:
            raise ValueError("n must be at least 1")
        self.domain_length = float(domain_length)
        self.n = int(n)
        self.h = self.domain_length / (self.n + 1)
        self.xi = self.h * np.arange(1, self.n + 1)
        self.quadrature_weights = np.full(self.n, self.h)

        k = np.arange(1, self.n + 1)
        # second-difference matrix K has eigenvalues 2 - 2 cos(k pi/(n+1))
        self.eigenvalues = (2.0 / self.h**2) * (
            1.0 - np.cos(k * np.pi * self.h / self.domain_length)
        )
        self.C1 = 1.0 / np.sqrt(self.eigenvalues[0])
        self.C5 = self.C1

        ones = np.ones(self.n)
        self._riesz = TridiagSolver(
            -np.ones(self.n - 1), 2.0 * ones, -np.ones(self.n - 1)
        )
        self.quadrature_weights.setflags(write=False)
        self.xi.setflags(write=False)
        self.eigenvalues.setflags(write=False)

    # -- inner products and norms ------------------------------------------

    def inner(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(self.h * np.dot(x, y))

    def norm_H(self, x: np.ndarray) -> float:
        return float(np.sqrt(self.h * np.dot(x, x)))

    def norm_V(self, x: np.ndarray) -> float:
        d = np.diff(x, prepend=0.0, append=0.0)
        return float(np.sqrt(np.dot(d, d) / self.h))

    def norm_Vstar(self, g: np.ndarray) -> float:
        y = self._riesz.solve(np.asarray(g, dtype=float))
        val = self.h**3 * np.dot(g, y)
        return float(np.sqrt(max(val, 0.0)))

    def pairing(self, g: np.ndarray, v: np.ndarray) -> float:
        """Duality pairing <g, v> for g represented by H-coordinates."""
        return self.inner(g, v)

    # -- analytic basis -----------------------------------------------------

    def sine_mode(self, k: int) -> np.ndarray:
        """k-th Dirichlet eigenvector sin(k pi xi / domain_length)."""
        if not 1 <= k <= self.n:
            raise ValueError("mode index out of range")
        return np.sin(k * np.pi * self.xi / self.domain_length)

    def basis_mode(self, k: int) -> np.ndarray:
        """k-th eigenvector normalized to unit H-norm."""
        v = self.sine_mode(k)
        return v / self.norm_H(v)

    def __repr__(self):
        return (
            f"GelfandDiscretization(domain_length={self.domain_length!r}, "
            f"n={self.n})"
        )


def assemble_discretization(domain_length: float, n: int) -> GelfandDiscretization:
    """Build the discretization; rejects nonpositive inputs."""
    return GelfandDiscretization(domain_length, n)


@dataclass(frozen=True)
class MonotoneOperator:
    """Evaluation of A(t, .) together with its declared growth constants.

    The constants (p, q, c1, c2, a1) are the ones entering the coercivity
    and boundedness hypotheses
        <A(t,x), x> >= c2 ||x||^p,
        ||A(t,x)||_* <= a1(t) + c1 ||x||^(p-1),
    with the V-norm fixed by the discretization (first-difference
    seminorm).  For the p-Laplacian both defaults are proved discretely:
    c2 = domain_length^(1 - p/2) by the power-mean inequality and
    c1 = h^(-(p-2)/2) by Cauchy-Schwarz plus the inverse inequality
    max|Dv| <= ||v||/sqrt(h); c1 therefore depends on the mesh.
    """

    disc: GelfandDiscretization
    kind: str
    p: float = 2.0
    c1: float = 1.0
    c2: float = 1.0
    a1: Optional[Callable[[float], float]] = None

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    def a1_at(self, t: float) -> float:
        return 0.0 if self.a1 is None else float(self.a1(t))


def make_operator(
    disc: GelfandDiscretization,
    kind: str,
    p: float = 2.0,
    c1: Optional[float] = None,
    c2: Optional[float] = None,
    a1: Optional[Callable[[float], float]] = None,
) -> MonotoneOperator:
    if kind not in OPERATOR_KINDS:
        raise ValueError(f"unknown operator kind {kind!r}")
    if kind == "linear_laplacian":
        if p != 2.0:
            raise ValueError("linear_laplacian requires p = 2")
        c1 = 1.0 if c1 is None else c1
        c2 = 1.0 if c2 is None else c2
    elif kind == "p_laplacian":
        if p < 2.0:
            raise ValueError("p_laplacian requires p >= 2")
        if c2 is None:
            c2 = disc.domain_length ** (1.0 - p / 2.0)
        if c1 is None:
            c1 = disc.h ** (-(p - 2.0) / 2.0)
    else:  # zero
        p = 2.0
        c1 = 0.0
        c2 = 0.0
    return MonotoneOperator(disc=disc, kind=kind, p=float(p), c1=float(c1), c2=float(c2), a1=a1)


def apply_operator(op: MonotoneOperator, t: float, v: np.ndarray) -> np.ndarray:
    """Coordinates of A(t, v) in H, so that pairing(A(t,v), w) is the
    discrete weak form."""
    disc = op.disc
    v = np.asarray(v, dtype=float)
    if v.shape != (disc.n,):
        raise ValueError(f"expected vector of length {disc.n}, got {v.shape}")
    if op.kind == "zero":
        return np.zeros(disc.n)
    if op.kind == "linear_laplacian":
        padded = np.concatenate(([0.0], v, [0.0]))
        return (2.0 * v - padded[2:] - padded[:-2]) / disc.h**2
    return plap_apply(v, disc.h, op.p)


# ---------------------------------------------------------------------------
# hypothesis checkers
# ---------------------------------------------------------------------------


def check_monotonicity(
    op: MonotoneOperator,
    sample_pairs: Sequence,
    t: float = 0.0,
    tol: float = 1e-10,
) -> CheckReport:
    """Report min over pairs of <A(v) - A(w), v - w>; pass iff >= -tol."""
    disc = op.disc
    worst = np.inf
    for v, w in sample_pairs:
        gap = disc.pairing(
            apply_operator(op, t, v) - apply_operator(op, t, w), v - w
        )
        worst = min(worst, gap)
    if not sample_pairs:
        worst = 0.0
    return CheckReport(
        name=f"monotonicity[{op.kind}]",
        passed=bool(worst >= -tol),
        details={"min_pairing": worst, "pairs": len(sample_pairs), "tol": tol},
    )


def check_coercivity_boundedness(
    op: MonotoneOperator,
    samples: Sequence[np.ndarray],
    t: float = 0.0,
    tol: float = 1e-8,
) -> CheckReport:
    """Coercivity <A v, v> >= c2 ||v||^p and boundedness
    ||A v||_* <= a1(t) + c1 ||v||^(p-1), both up to tol.

    Kind ``zero`` must fail: no c2 > 0 works once a nonzero sample is
    present, which is exactly the counterexample showing coercivity is
    needed for compact trajectory spaces.
    """
    disc = op.disc
    coer_slack = np.inf
    bound_slack = -np.inf
    measured_c2 = np.inf
    measured_c1 = 0.0
    for v in samples:
        av = apply_operator(op, t, v)
        nv = disc.norm_V(v)
        energy = disc.pairing(av, v)
        coer_slack = min(coer_slack, energy - op.c2 * nv**op.p)
        dual = disc.norm_Vstar(av)
        bound_slack = max(
            bound_slack, dual - (op.a1_at(t) + op.c1 * nv ** (op.p - 1.0))
        )
        if nv > 1e-14:
            measured_c2 = min(measured_c2, energy / nv**op.p)
            measured_c1 = max(measured_c1, dual / nv ** (op.p - 1.0))

    coercive = bool(coer_slack >= -tol)
    bounded = bool(bound_slack <= tol)
    if op.kind == "zero":
        # any nonzero sample defeats every positive c2
        has_nonzero = any(disc.norm_V(v) > 1e-14 for v in samples)
        coercive = not has_nonzero
    return CheckReport(
        name=f"coercivity_boundedness[{op.kind}]",
        passed=coercive and bounded,
        details={
            "coercivity_passed": coercive,
            "boundedness_passed": bounded,
            "coercivity_min_slack": coer_slack,
            "boundedness_max_slack": bound_slack,
            "declared_c2": op.c2,
            "declared_c1": op.c1,
            "measured_c2": measured_c2,
            "measured_c1": measured_c1,
            "p": op.p,
            "samples": len(samples),
            "tol": tol,
        },
        notes="kind zero is required to fail coercivity"
        if op.kind == "zero"
        else "",
    )


def noncompact_sequence_report(n: int = 32, probe_decay_tol: float = 0.05) -> CheckReport:
    """The sequence defeating compactness when A = 0.

    On (0, 2 pi) the paths x_k(t) = (t/sqrt(pi)) sin(k xi) all solve
    x' + 0 = f with the constant forcing f_k = sin(k xi)/sqrt(pi), which is
    admissible for L = 1 since |f_k| = 1.  At t = 1 every member has
    |x_k(1)| = 1 exactly (discrete sine orthogonality makes the norm exact
    on the grid), pairwise distances are sqrt(2), yet against any fixed
    probe vector the inner products decay: the sequence converges weakly
    to 0 and has no strongly convergent subsequence.
    """
    disc = assemble_discretization(2.0 * np.pi, n)
    scale = 1.0 / np.sqrt(np.pi)
    # probe with O(1/k) sine coefficients: the parabola xi (2 pi - xi)
    probe = disc.xi * (2.0 * np.pi - disc.xi)
    probe = probe / disc.norm_H(probe)

    norms = []
    pairings = []
    for k in range(1, disc.n + 1):
        xk1 = scale * disc.sine_mode(k)
        norms.append(disc.norm_H(xk1))
        pairings.append(abs(disc.inner(xk1, probe)))
    norms = np.array(norms)
    pairings = np.array(pairings)

    x1 = scale * disc.sine_mode(1)
    x2 = scale * disc.sine_mode(2)
    min_pair_dist = disc.norm_H(x1 - x2)

    norms_unit = bool(np.max(np.abs(norms - 1.0)) <= 1e-10)
    tail = float(np.max(pairings[disc.n // 2 :]))
    head = float(pairings[0])
    decay = bool(tail <= probe_decay_tol * max(head, 1e-30))
    return CheckReport(
        name="noncompact_sequence[zero]",
        passed=norms_unit and decay and min_pair_dist > 1.0,
        details={
            "norm_min": float(norms.min()),
            "norm_max": float(norms.max()),
            "probe_pairing_first": head,
            "probe_pairing_tail_max": tail,
            "pairwise_distance_12": float(min_pair_dist),
            "modes": int(disc.n),
        },
        rows=[
            {"mode": k + 1, "norm_at_t1": float(norms[k]), "probe_pairing": float(pairings[k])}
            for k in range(disc.n)
        ],
        notes="norms stay at 1 while probe pairings vanish; no subsequence is Cauchy",
    )
