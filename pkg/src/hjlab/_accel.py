"""Backend layer for the hot numerical kernels.

Two interchangeable implementations are provided for every kernel: a numba
``@njit``-compiled one and a pure numpy/scipy one.  The active backend is
chosen once at import time: setting the environment variable
``HJLAB_NO_NUMBA=1`` (or numba being unavailable) selects the numpy path.
Results of the two paths agree to solver tolerance but are not guaranteed
to be bit-identical; reproducibility contracts hold within a backend.

Kernels:
  * factored tridiagonal solves for the implicit Euler step of the linear
    operator (Thomas algorithm under numba, banded solve under scipy),
  * application of the discrete p-Laplacian,
  * the damped fixed-point solve of the implicit p-Laplacian step.

``python -m hjlab.benchmark`` times both paths on the same workload.
"""

import os

import numpy as np
import scipy.linalg

_FORCE_NUMPY = os.environ.get("HJLAB_NO_NUMBA", "0") not in ("", "0")

if not _FORCE_NUMPY:
    try:
        from numba import njit

        USING_NUMBA = True
    except ImportError:
        USING_NUMBA = False
else:
    USING_NUMBA = False

if not USING_NUMBA:

    def njit(*args, **kwargs):
        # passthrough decorator so kernel sources below stay identical
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


# ---------------------------------------------------------------------------
# tridiagonal solver (linear implicit Euler step)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _thomas_factor(dl, d, du):
    n = d.shape[0]
    w = np.zeros(n)
    bp = np.zeros(n)
    bp[0] = d[0]
    for i in range(1, n):
        w[i] = dl[i - 1] / bp[i - 1]
        bp[i] = d[i] - w[i] * du[i - 1]
    return w, bp


@njit(cache=True)
def _thomas_solve(w, bp, du, rhs):
    n = rhs.shape[0]
    y = np.zeros(n)
    y[0] = rhs[0]
    for i in range(1, n):
        y[i] = rhs[i] - w[i] * y[i - 1]
    x = np.zeros(n)
    x[n - 1] = y[n - 1] / bp[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = (y[i] - du[i] * x[i + 1]) / bp[i]
    return x


class TridiagSolver:
    """Reusable solver for a fixed tridiagonal SPD system.

    Factors once at construction; `solve` is then cheap enough to sit in
    the time-stepping loop.
    """

    def __init__(self, dl: np.ndarray, d: np.ndarray, du: np.ndarray):
        self.n = d.shape[0]
        dl = np.asarray(dl, dtype=float)
        d = np.asarray(d, dtype=float)
        du = np.asarray(du, dtype=float)
        if USING_NUMBA:
            self._w, self._bp = _thomas_factor(dl, d, du)
            self._du = du.copy()
            self._ab = None
        else:
            ab = np.zeros((3, self.n))
            ab[0, 1:] = du
            ab[1, :] = d
            ab[2, :-1] = dl
            self._ab = ab

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if USING_NUMBA:
            return _thomas_solve(self._w, self._bp, self._du, rhs)
        return scipy.linalg.solve_banded(
            (1, 1), self._ab, rhs, check_finite=False
        )


# ---------------------------------------------------------------------------
# p-Laplacian kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _plap_apply_kernel(v, h, p):
    n = v.shape[0]
    # fluxes on the n+1 cell interfaces, zero boundary values
    flux = np.zeros(n + 1)
    for j in range(n + 1):
        left = v[j - 1] if j > 0 else 0.0
        right = v[j] if j < n else 0.0
        dvj = (right - left) / h
        flux[j] = np.abs(dvj) ** (p - 2.0) * dvj
    out = np.zeros(n)
    for i in range(n):
        out[i] = -(flux[i + 1] - flux[i]) / h
    return out


def _plap_apply_numpy(v, h, p):
    padded = np.concatenate(([0.0], v, [0.0]))
    dv = np.diff(padded) / h
    flux = np.abs(dv) ** (p - 2.0) * dv
    return -np.diff(flux) / h


def plap_apply(v: np.ndarray, h: float, p: float) -> np.ndarray:
    """Discrete p-Laplacian: divergence of |Dv|^(p-2) Dv, Dirichlet ends."""
    if USING_NUMBA:
        return _plap_apply_kernel(np.asarray(v, dtype=float), h, p)
    return _plap_apply_numpy(np.asarray(v, dtype=float), h, p)


@njit(cache=True)
def _plap_step_kernel(x_prev, g, dt, h, p, tol_abs, max_iter):
    n = x_prev.shape[0]
    u = x_prev.copy()
    lam_max_lin = 4.0 / (h * h)

    r = u / dt + _plap_apply_kernel(u, h, p) - x_prev / dt - g
    rnorm = np.sqrt(h * np.sum(r * r))
    it = 0
    while rnorm > tol_abs and it < max_iter:
        # Lipschitz estimate of A on the ball around the current iterate
        smax = 0.0
        for j in range(n + 1):
            left = u[j - 1] if j > 0 else 0.0
            right = u[j] if j < n else 0.0
            s = np.abs(right - left) / h
            if s > smax:
                smax = s
        lam = (p - 1.0) * smax ** (p - 2.0) * lam_max_lin
        rho = dt / (1.0 + dt * lam)

        accepted = False
        for _ in range(40):
            trial = u - rho * r
            rt = (
                trial / dt
                + _plap_apply_kernel(trial, h, p)
                - x_prev / dt
                - g
            )
            rtnorm = np.sqrt(h * np.sum(rt * rt))
            if rtnorm < rnorm:
                u = trial
                r = rt
                rnorm = rtnorm
                accepted = True
                break
            rho *= 0.5
        it += 1
        if not accepted:
            break
    return u, rnorm, it


def _plap_step_numpy(x_prev, g, dt, h, p, tol_abs, max_iter):
    u = x_prev.copy()
    lam_max_lin = 4.0 / (h * h)

    def residual(w):
        return w / dt + _plap_apply_numpy(w, h, p) - x_prev / dt - g

    r = residual(u)
    rnorm = np.sqrt(h * np.sum(r * r))
    it = 0
    while rnorm > tol_abs and it < max_iter:
        padded = np.concatenate(([0.0], u, [0.0]))
        smax = np.max(np.abs(np.diff(padded))) / h
        lam = (p - 1.0) * smax ** (p - 2.0) * lam_max_lin
        rho = dt / (1.0 + dt * lam)

        accepted = False
        for _ in range(40):
            trial = u - rho * r
            rt = residual(trial)
            rtnorm = np.sqrt(h * np.sum(rt * rt))
            if rtnorm < rnorm:
                u, r, rnorm = trial, rt, rtnorm
                accepted = True
                break
            rho *= 0.5
        it += 1
        if not accepted:
            break
    return u, rnorm, it


def plap_step(
    x_prev: np.ndarray,
    g: np.ndarray,
    dt: float,
    h: float,
    p: float,
    tol_abs: float,
    max_iter: int = 200,
):
    """Damped fixed-point solve of u/dt + A_p(u) = x_prev/dt + g.

    The step size rho = dt/(1 + dt*Lam) uses a Lipschitz estimate Lam of
    the p-Laplacian on the ball of the current iterate; on a residual
    increase the step is bisected.  Returns (u, residual_norm, iterations).
    """
    x_prev = np.asarray(x_prev, dtype=float)
    g = np.asarray(g, dtype=float)
    if USING_NUMBA:
        return _plap_step_kernel(x_prev, g, dt, h, p, tol_abs, max_iter)
    return _plap_step_numpy(x_prev, g, dt, h, p, tol_abs, max_iter)
