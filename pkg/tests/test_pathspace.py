import numpy as np
import pytest

from hjlab.evolution import CallableRhs, solve_ivp
from hjlab.gelfand import assemble_discretization, make_operator
from hjlab.pathspace import (
    History,
    Path,
    check_admissibility,
    check_equiv_pseudometrics,
    constant_history,
    d_infty,
    grid_index,
    history_of,
    make_time_grid,
    sample_bundle,
    stop,
)


@pytest.fixture
def disc():
    return assemble_discretization(np.pi, 8)


@pytest.fixture
def bundle(disc):
    op = make_operator(disc, "linear_laplacian")
    times = make_time_grid(1.0, 32)
    base = constant_history(times, 0.6 * disc.sine_mode(1))
    return sample_bundle(disc, op, base, 0, L=1.0, size=16, seed=42)


def test_grid_index_roundtrip():
    times = make_time_grid(2.0, 16)
    for i, t in enumerate(times):
        assert grid_index(times, float(t)) == i
    with pytest.raises(ValueError):
        grid_index(times, 0.06)  # off the grid


def test_stop_freezes_tail(disc):
    times = make_time_grid(1.0, 8)
    values = np.outer(np.linspace(0.0, 1.0, 9), disc.sine_mode(1))
    path = Path(times=times, values=values, birth_index=0)
    s = stop(path, 0.5)
    i = grid_index(times, 0.5)
    assert np.array_equal(s.values[: i + 1], values[: i + 1])
    for j in range(i, 9):
        assert np.array_equal(s.values[j], values[i])


def test_d_infty_separates_only_after_stop(disc):
    times = make_time_grid(1.0, 8)
    a = np.outer(np.linspace(0, 1, 9), disc.sine_mode(1))
    b = a.copy()
    b[6:] += 0.5 * disc.sine_mode(2)  # diverge after t = 0.625
    x = Path(times=times, values=a, birth_index=0)
    y = Path(times=times, values=b, birth_index=0)
    assert d_infty(disc, 0.5, x, 0.5, y) == pytest.approx(0.0, abs=1e-15)
    assert d_infty(disc, 1.0, x, 1.0, y) > 0.1
    # symmetry and self-distance
    assert d_infty(disc, 0.75, x, 1.0, y) == pytest.approx(
        d_infty(disc, 1.0, y, 0.75, x), abs=1e-15)
    assert d_infty(disc, 1.0, x, 1.0, x) == 0.0


def test_history_view_is_readonly_and_clamps_delay(disc):
    times = make_time_grid(1.0, 4)
    path = constant_history(times, disc.sine_mode(1))
    hist = history_of(path, 2)
    with pytest.raises(ValueError):
        hist.values[0] = 0.0
    assert np.array_equal(hist.delayed(0.1), hist.latest)
    assert np.array_equal(hist.delayed(5.0), path.values[0])  # clamped at birth


def test_delayed_reads_left_constant_interpolant(disc):
    times = make_time_grid(1.0, 4)
    values = np.outer([0.0, 1.0, 2.0, 3.0, 4.0], disc.sine_mode(1))
    hist = History(times, values, 4)
    # t = 1.0, tau = 0.3 -> target 0.7 lies in [0.5, 0.75) -> node 2
    assert np.array_equal(hist.delayed(0.3), values[2])


def test_running_integral_left_rectangle(disc):
    times = make_time_grid(1.0, 4)
    values = np.outer([1.0, 2.0, 3.0, 4.0, 5.0], disc.sine_mode(1))
    hist = History(times, values, 3)
    want = 0.25 * (1 + 2 + 3) * disc.sine_mode(1)
    assert np.allclose(hist.running_integral(), want, atol=1e-15)


def test_bundle_determinism(disc):
    op = make_operator(disc, "linear_laplacian")
    times = make_time_grid(1.0, 16)
    base = constant_history(times, 0.5 * disc.sine_mode(1))
    b1 = sample_bundle(disc, op, base, 0, L=1.0, size=12, seed=9)
    b2 = sample_bundle(disc, op, base, 0, L=1.0, size=12, seed=9)
    b3 = sample_bundle(disc, op, base, 0, L=1.0, size=12, seed=10)
    for m1, m2 in zip(b1.members, b2.members):
        assert m1.values.tobytes() == m2.values.tobytes()
    assert any(m1.values.tobytes() != m3.values.tobytes()
               for m1, m3 in zip(b1.members, b3.members))


def test_bundle_admissibility(bundle):
    rep = check_admissibility(bundle)
    assert rep.passed
    # extreme members saturate the budget exactly, so only rounding remains
    assert rep.details["max_budget_excess"] <= 1e-10


def test_overdriven_forcing_flagged(disc, bundle):
    op = bundle.op
    base = bundle.base
    big = 10.0 * disc.sine_mode(1)
    blown = solve_ivp(disc, op, base, 0, CallableRhs(lambda t, hist: big))
    from hjlab.pathspace import TrajectoryBundle

    bad = TrajectoryBundle(disc=disc, op=op, base=base, t0_index=0, L=1.0,
                           members=[blown])
    rep = check_admissibility(bad)
    assert not rep.passed


def test_equiv_pseudometrics(bundle):
    rep = check_equiv_pseudometrics(bundle, 1.0)
    assert rep.passed
    assert rep.details["min_slack"] >= 0.0
