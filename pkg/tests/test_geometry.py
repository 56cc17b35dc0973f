import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toricma import (
    INTERIOR,
    CURVED,
    WALL,
    OUTSIDE,
    BoundaryTrace,
    ReinhardtDomainSpec,
    build_log_grid,
    log_map,
    polydisk_witness,
)
from toricma.cantor import MultiCircularSet


def test_polydisk_3x3_lattice():
    # L=1, h=0.5 on the polydisk: a 3x3 lattice with a single interior node
    grid = build_log_grid(ReinhardtDomainSpec("UnitPolydisk", 2, L=1.0, h=0.5))
    assert grid.shape == (3, 3)
    cls = grid.classification
    assert (cls == INTERIOR).sum() == 1
    k = np.argwhere(cls == INTERIOR)[0]
    x = grid.axis_coords[k]
    assert np.allclose(x, [-0.5, -0.5])


def test_too_coarse_rejected():
    with pytest.raises(ValueError):
        build_log_grid(ReinhardtDomainSpec("UnitBall", 2, L=4.0, h=4.0))


def test_ball_curved_band_bound():
    # curved nodes sit within one cell of the log-image of the sphere
    spec = ReinhardtDomainSpec("UnitBall", 2, L=4.0, h=1 / 16)
    grid = build_log_grid(spec)
    cflat = grid.curved_flat
    x = grid.node_x(cflat)
    s = np.exp(2 * x).sum(axis=1)
    bound = 2 * spec.n * spec.h * np.exp(2 * x).max(axis=1)
    assert (np.abs(s - 1.0) <= bound + 1e-12).all()
    # the sphere passes through x = (-0.3466, -0.3466); a curved node must
    # sit within one cell of it
    k0 = np.floor((np.array([-0.3466, -0.3466]) + spec.L) / spec.h).astype(int)
    nearby = [
        grid.classification[k0[0] + a, k0[1] + b] for a in (0, 1, 2) for b in (0, 1, 2)
    ]
    assert CURVED in nearby


def test_interior_has_valued_axis_neighbors():
    for kind in ("UnitBall", "UnitPolydisk"):
        grid = build_log_grid(ReinhardtDomainSpec(kind, 2, L=2.0, h=0.25))
        cls = grid.classification
        m = grid.shape[0]
        ii = np.argwhere(cls == INTERIOR)
        for k in ii:
            for j in range(2):
                for s in (-1, 1):
                    kk = k.copy()
                    kk[j] += s
                    assert 0 <= kk[j] < m
                    assert cls[tuple(kk)] != OUTSIDE


def test_wall_nodes_copy_inward():
    grid = build_log_grid(ReinhardtDomainSpec("UnitBall", 2, L=2.0, h=0.25))
    tgt = grid.wall_target_flat
    cls = grid.classification.reshape(-1)
    assert (cls[grid.wall_flat] == WALL).all()
    assert (cls[tgt] != OUTSIDE).all()
    assert (cls[tgt] != WALL).all()


def test_classification_stability_under_refinement():
    coarse = build_log_grid(ReinhardtDomainSpec("UnitBall", 2, L=2.0, h=0.25))
    fine = build_log_grid(ReinhardtDomainSpec("UnitBall", 2, L=2.0, h=0.125))
    cc = coarse.classification
    fc = fine.classification.reshape(-1)
    for k in np.argwhere(cc == INTERIOR):
        x = coarse.axis_coords[k]
        kf = np.round((x + 2.0) / 0.125).astype(int)
        neighbors_inside = True
        for j in range(2):
            for s in (-1, 1):
                kk = kf.copy()
                kk[j] += s
                xx = fine.axis_coords[kk]
                if np.exp(2 * xx).sum() > 1.0:
                    neighbors_inside = False
        if neighbors_inside:
            assert fc[fine.flat_index(kf)] != OUTSIDE


def test_log_map_examples():
    assert np.allclose(log_map([1.0, 1.0]), [0.0, 0.0])
    assert np.allclose(log_map([np.exp(-1) * 1j, np.exp(-2)]), [-1.0, -2.0])
    assert np.allclose(log_map([0.5, 0.5]), [np.log(0.5)] * 2)
    with pytest.raises(ValueError):
        log_map([0.0, 1.0])


@given(st.lists(st.floats(0.05, 3.0), min_size=2, max_size=3))
def test_log_map_inverts_exponential(r):
    x = np.log(r)
    assert np.allclose(log_map(np.exp(x)), x)


def _band(a, b):
    return MultiCircularSet.from_intervals([(a, b)])


def test_polydisk_witness_examples():
    zr = np.array([1.0, 1.0]) / np.sqrt(2.0)
    band = _band(0.6**2, 0.8**2)  # r_2^2-parametrized band containing m = 1/2
    assert polydisk_witness(zr, 0.99, band, delta_search=0.1)
    assert not polydisk_witness(zr, 0.99, MultiCircularSet.empty(2), delta_search=0.1)


def test_polydisk_witness_monotone_in_region():
    zr = np.array([0.6, 0.8])
    small = _band(0.62, 0.66)
    large = _band(0.55, 0.70)
    t = 0.5
    if polydisk_witness(zr, t, small, delta_search=0.15):
        assert polydisk_witness(zr, t, large, delta_search=0.15)


def test_polydisk_witness_interior_orbit_all_t():
    # orbit of zeta inside the open band: every t along the normal is captured
    zr = np.array([0.6, 0.8])
    band = _band(0.5, 0.75)  # m = 0.64 sits inside
    for t in (0.1, 0.5, 0.9, 0.99):
        assert polydisk_witness(zr, t, band, delta_search=0.05)


def test_polydisk_witness_degenerate_inputs():
    band = _band(0.3, 0.6)
    with pytest.raises(ValueError):
        polydisk_witness(np.array([0.6, 0.8]), 0.0, band, delta_search=0.1)
    with pytest.raises(ValueError):
        polydisk_witness(np.array([0.0, 1.0]), 0.5, band, delta_search=0.1)


def test_boundary_trace_constant_and_bounds():
    grid = build_log_grid(ReinhardtDomainSpec("UnitBall", 2, L=2.0, h=0.25))
    tr = BoundaryTrace.constant(grid, -1.0)
    assert tr.values.shape == (len(grid.curved_flat),)
    assert tr.max_value() == -1.0
    with pytest.raises(ValueError):
        BoundaryTrace(grid, np.full(len(grid.curved_flat), np.inf))
