"""Timing comparison of the numba and numpy kernel backends.

``python3 -m hjlab.benchmark`` spawns one subprocess per backend (the
backend is frozen at import time, so a fresh interpreter is the only
clean way to switch), runs the same solver workload in each, and prints
a table.  The first linear step after import includes JIT compilation
on the numba path; it is reported separately from the steady-state
timing.  The two backends must agree on the final states to solver
tolerance, which the parent verifies.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _workload(n: int, nt: int, reps: int) -> dict:
    from ._accel import USING_NUMBA
    from .evolution import CallableRhs, solve_ivp
    from .gelfand import assemble_discretization, make_operator
    from .pathspace import constant_history, make_time_grid

    disc = assemble_discretization(np.pi, n)
    times = make_time_grid(1.0, nt)
    x0 = 0.8 * disc.sine_mode(1) + 0.1 * disc.sine_mode(3)
    base = constant_history(times, x0)
    m2 = disc.basis_mode(2)
    rhs = CallableRhs(lambda t, hist: 0.3 * np.sin(3.0 * t) * m2)

    lin = make_operator(disc, "linear_laplacian")
    t0 = time.perf_counter()
    lin_path = solve_ivp(disc, lin, base, 0, rhs)
    first_linear = time.perf_counter() - t0
    lin_times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        lin_path = solve_ivp(disc, lin, base, 0, rhs)
        lin_times.append(time.perf_counter() - t0)

    # the inner fixed-point contraction needs fine dt and moderate h
    # (conditioning ~ dt/h^2), so the p-laplacian leg pins both and
    # scales only the step count with --nt
    n_pl = min(n, 24)
    steps_pl = max(nt // 4, 8)
    disc_pl = assemble_discretization(np.pi, n_pl)
    x0_pl = 0.8 * disc_pl.sine_mode(1) + 0.1 * disc_pl.sine_mode(3)
    m2_pl = disc_pl.basis_mode(2)
    rhs_pl = CallableRhs(lambda t, hist: 0.3 * np.sin(3.0 * t) * m2_pl)
    plap = make_operator(disc_pl, "p_laplacian", p=4.0)
    pl_base = constant_history(make_time_grid(steps_pl / 128.0, steps_pl), x0_pl)
    t0 = time.perf_counter()
    pl_path = solve_ivp(disc_pl, plap, pl_base, 0, rhs_pl)
    first_plap = time.perf_counter() - t0
    pl_times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        pl_path = solve_ivp(disc_pl, plap, pl_base, 0, rhs_pl)
        pl_times.append(time.perf_counter() - t0)

    return {
        "backend": "numba" if USING_NUMBA else "numpy",
        "n": n,
        "nt": nt,
        "first_linear_s": first_linear,
        "linear_s": min(lin_times),
        "first_plap_s": first_plap,
        "plap_s": min(pl_times),
        "linear_final": [float(v) for v in lin_path.values[-1]],
        "plap_final": [float(v) for v in pl_path.values[-1]],
    }


def _spawn(no_numba: bool, n: int, nt: int, reps: int) -> dict:
    env = dict(os.environ)
    env["HJLAB_NO_NUMBA"] = "1" if no_numba else "0"
    out = subprocess.run(
        [sys.executable, "-m", "hjlab.benchmark", "--worker",
         "--n", str(n), "--nt", str(nt), "--reps", str(reps)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(out.stdout)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--nt", type=int, default=512)
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.worker:
        print(json.dumps(_workload(args.n, args.nt, args.reps)))
        return 0

    rows = [_spawn(False, args.n, args.nt, args.reps),
            _spawn(True, args.n, args.nt, args.reps)]
    by = {r["backend"]: r for r in rows}
    if "numba" not in by:
        print("numba unavailable; timing the numpy backend only")

    hdr = f"{'backend':<8} {'linear (s)':>12} {'first call (s)':>15} {'p-lap (s)':>12}"
    print(f"workload: n={args.n}, nt={args.nt}, implicit Euler, best of {args.reps}")
    print(hdr)
    for r in rows:
        print(f"{r['backend']:<8} {r['linear_s']:>12.4f} "
              f"{r['first_linear_s']:>15.4f} {r['plap_s']:>12.4f}")
    if "numba" in by and "numpy" in by:
        a, b = by["numba"], by["numpy"]
        print(f"speedup (numpy/numba): linear {b['linear_s'] / a['linear_s']:.2f}x, "
              f"p-laplacian {b['plap_s'] / a['plap_s']:.2f}x")
        lin_diff = float(np.max(np.abs(
            np.array(a["linear_final"]) - np.array(b["linear_final"]))))
        pl_diff = float(np.max(np.abs(
            np.array(a["plap_final"]) - np.array(b["plap_final"]))))
        print(f"final-state agreement: linear {lin_diff:.3e}, p-laplacian {pl_diff:.3e}")
        # both paths solve the same scheme to 1e-10 residuals
        if lin_diff > 1e-8 or pl_diff > 1e-8:
            print("BACKEND MISMATCH above tolerance")
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
