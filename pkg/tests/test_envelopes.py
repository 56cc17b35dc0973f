import math

import numpy as np
import pytest

from toricma import (
    BoundaryTrace,
    ReinhardtDomainSpec,
    boundary_attainment_scan,
    build_log_grid,
    envelope_with_density,
    ma_dirichlet,
    monotone_boundary_approx,
    p_envelope,
)
from toricma.cantor import MultiCircularSet, build_phi_A


def _ball(h, L=4.0):
    return build_log_grid(ReinhardtDomainSpec("UnitBall", 2, L=L, h=h))


def test_exact_ball_solution_coarse():
    # f = 32 with zero boundary on the ball has the closed-form solution
    # U(x) = e^{2 x1} + e^{2 x2} - 1
    grid = _ball(1 / 16)
    fn, rep = ma_dirichlet(grid, 0.0, 32.0)
    assert rep.converged
    x = grid.node_x(grid.interior_flat)
    exact = np.exp(2 * x).sum(axis=1) - 1.0
    err = np.max(np.abs(fn.values.reshape(-1)[grid.interior_flat] - exact))
    assert err <= 0.11  # first-order scheme at h = 1/16
    # frozen regression value (splu path, deterministic)
    assert fn.eval_x(np.array([-1.0, -1.0])) == pytest.approx(
        -0.7814017449837433, abs=1e-6
    )


def test_zero_density_zero_boundary_is_zero():
    grid = _ball(1 / 8)
    fn, rep = p_envelope(grid, 0.0)
    assert rep.converged
    live = grid.classification.reshape(-1) != 3
    assert np.max(np.abs(fn.values.reshape(-1)[live])) == 0.0


def test_relative_extremal_radial_oracle():
    # obstacle -1 on {|z| <= e^{-1}}, zero boundary: the envelope is
    # max(-1, log|z|), i.e. max(-1, log radius) in radial terms
    grid = _ball(1 / 32)

    def obstacle(x):
        s = np.exp(2.0 * np.asarray(x)).sum(axis=-1)
        return np.where(s <= math.exp(-2.0), -1.0, 0.0)

    fn, rep = p_envelope(grid, 0.0, obstacle=obstacle)
    assert rep.converged
    x = grid.node_x(grid.interior_flat)
    r = np.sqrt(np.exp(2 * x).sum(axis=1))
    exact = np.maximum(-1.0, np.log(r))
    err = np.max(np.abs(fn.values.reshape(-1)[grid.interior_flat] - exact))
    assert err <= 0.08


def test_howard_agrees_with_sequential_sweep():
    # policy iteration vs plain Gauss-Seidel value iteration: two routes to
    # the same fixed point
    grid = _ball(1 / 4)
    f1, r1 = ma_dirichlet(grid, 0.0, 32.0, mode="howard", tol=1e-10)
    f2, r2 = ma_dirichlet(grid, 0.0, 32.0, mode="sweep", tol=1e-10, max_sweeps=20000)
    assert r1.converged and r2.converged
    live = grid.classification.reshape(-1) != 3
    gap = np.max(np.abs(f1.values.reshape(-1)[live] - f2.values.reshape(-1)[live]))
    assert gap <= 5e-7


def test_howard_agrees_with_jacobi():
    grid = _ball(1 / 8)
    f1, r1 = ma_dirichlet(grid, 0.0, 32.0, mode="howard", tol=1e-9)
    f2, r2 = ma_dirichlet(grid, 0.0, 32.0, mode="jacobi", tol=1e-9, max_sweeps=50000)
    assert r1.converged and r2.converged
    live = grid.classification.reshape(-1) != 3
    gap = np.max(np.abs(f1.values.reshape(-1)[live] - f2.values.reshape(-1)[live]))
    assert gap <= 1e-6


def test_obstacle_pins_solution_below():
    grid = _ball(1 / 16)

    def obstacle(x):
        s = np.exp(2.0 * np.asarray(x)).sum(axis=-1)
        return np.where((s >= math.exp(-3.0)) & (s <= math.exp(-2.0)), -1.0, 0.0)

    fn, rep = p_envelope(grid, 0.0, obstacle=obstacle)
    assert rep.converged
    x = grid.node_x(grid.interior_flat)
    vals = fn.values.reshape(-1)[grid.interior_flat]
    obs = obstacle(x)
    assert (vals <= obs + 1e-9).all()
    assert vals.min() >= -1.0 - 1e-9


def test_density_monotonicity():
    # larger density pushes the solution down
    grid = _ball(1 / 16)
    lo, _ = ma_dirichlet(grid, 0.0, 8.0)
    hi, _ = ma_dirichlet(grid, 0.0, 32.0)
    ii = grid.interior_flat
    assert (
        hi.values.reshape(-1)[ii] <= lo.values.reshape(-1)[ii] + 1e-8
    ).all()


def test_boundary_monotonicity():
    grid = _ball(1 / 16)
    lo, _ = ma_dirichlet(grid, -0.5, 32.0)
    hi, _ = ma_dirichlet(grid, 0.0, 32.0)
    ii = grid.interior_flat
    assert (lo.values.reshape(-1)[ii] <= hi.values.reshape(-1)[ii] + 1e-8).all()


def test_wall_rows_copy_neighbor():
    grid = _ball(1 / 16)
    fn, _ = ma_dirichlet(grid, 0.0, 32.0)
    v = fn.values.reshape(-1)
    assert np.allclose(v[grid.wall_flat], v[grid.wall_target_flat], atol=1e-12)


def test_monotone_boundary_approx_ladder():
    grid = _ball(1 / 16)
    band = MultiCircularSet.from_intervals([(0.3, 0.6)])
    traces = [monotone_boundary_approx(grid, band, k) for k in (1, 2, 4, 8)]
    for a, b in zip(traces, traces[1:]):
        assert (a.values <= b.values + 1e-12).all()
    for tr in traces:
        assert tr.values.min() >= -1.0 - 1e-12
        assert tr.values.max() <= 1e-12
    with pytest.raises(ValueError):
        monotone_boundary_approx(grid, band, 0)


def test_boundary_attainment_scan_smooth_data():
    grid = _ball(1 / 16)
    fn, _ = ma_dirichlet(grid, 0.0, 32.0)
    trace = BoundaryTrace.constant(grid, 0.0)
    rep = boundary_attainment_scan(fn, trace)
    # smooth problem: boundary values are attained, gap decays on approach
    assert rep.worst[-1] <= rep.worst[0] + 1e-9
    assert rep.worst[-1] <= 0.2
    assert rep.nodes_checked > 0


def test_phi_A_solution_between_bounds():
    grid = _ball(1 / 16)
    band = MultiCircularSet.from_intervals([(0.3, 0.6)])
    trace = build_phi_A(band, grid)
    fn, rep = ma_dirichlet(grid, trace, 0.0)
    assert rep.converged
    vals = fn.values.reshape(-1)[grid.interior_flat]
    assert (vals >= -1.0 - 1e-9).all()
    assert (vals <= 1e-9).all()


def test_envelope_with_density_between_pure_problems():
    # adding an obstacle can only lower the density-only solution, and
    # adding mass can only lower the obstacle-only solution
    grid = _ball(1 / 16)

    def obstacle(x):
        s = np.exp(2.0 * np.asarray(x)).sum(axis=-1)
        return np.where(s <= math.exp(-2.0), -0.6, 0.0)

    both, _ = envelope_with_density(grid, 0.0, 32.0, obstacle)
    only_f, _ = ma_dirichlet(grid, 0.0, 32.0)
    only_obs, _ = p_envelope(grid, 0.0, obstacle=obstacle)
    ii = grid.interior_flat
    b = both.values.reshape(-1)[ii]
    assert (b <= only_f.values.reshape(-1)[ii] + 1e-8).all()
    assert (b <= only_obs.values.reshape(-1)[ii] + 1e-8).all()
