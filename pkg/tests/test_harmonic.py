import numpy as np
import pytest

from toricma import RadialGrid, harmonic_lift


def test_radial_grid_shape_and_axes():
    g = RadialGrid("UnitBall", 2, subdivisions=8)
    assert g.shape == (9, 9)
    assert g.axis_coords[0] == 0.0 and g.axis_coords[-1] == 1.0
    with pytest.raises(ValueError):
        RadialGrid("UnitBall", 2, subdivisions=2)
    with pytest.raises(ValueError):
        RadialGrid("Cube", 2)


def test_lift_of_harmonic_polynomial_ball():
    # |z1|^2 - |z2|^2 is torus-invariant and harmonic in R^4; its lift from
    # sphere data r1^2 - r2^2 must reproduce it in the interior
    def g(r):
        return float(r[0] ** 2 - r[1] ** 2)

    fn = harmonic_lift("UnitBall", 2, g, subdivisions=48)
    grid = fn.grid
    r = grid.node_x(grid.interior_flat)
    exact = r[:, 0] ** 2 - r[:, 1] ** 2
    got = fn.values.reshape(-1)[grid.interior_flat]
    assert np.max(np.abs(got - exact)) <= 0.02


def test_lift_constant_data():
    fn = harmonic_lift("UnitBall", 2, lambda r: 1.0, subdivisions=16)
    grid = fn.grid
    live = grid.classification.reshape(-1) != 3
    assert np.allclose(fn.values.reshape(-1)[live], 1.0, atol=1e-10)


def test_lift_mean_value_at_center():
    # harmonic extension attains the sphere average at the origin; for
    # g = r1^2 the R^4 average over the unit sphere is 1/2
    fn = harmonic_lift("UnitBall", 2, lambda r: float(r[0] ** 2), subdivisions=48)
    center = fn.eval_x(np.array([0.0, 0.0]))
    assert center == pytest.approx(0.5, abs=0.02)


def test_lift_maximum_principle():
    def g(r):
        return float(np.cos(3.0 * r[0]) * r[1])

    fn = harmonic_lift("UnitBall", 2, g, subdivisions=32)
    grid = fn.grid
    live = grid.classification.reshape(-1) != 3
    vals = fn.values.reshape(-1)[live]
    cvals = fn.values.reshape(-1)[grid.curved_flat]
    assert vals.max() <= cvals.max() + 1e-9
    assert vals.min() >= cvals.min() - 1e-9


def test_lift_polydisk_separately_harmonic():
    # on the polydisk, data independent of r_2 lifts to a function constant
    # in r_2 and radially harmonic in z_1 — which for bounded data is constant
    fn = harmonic_lift("UnitPolydisk", 2, lambda r: 1.0 - 0.0 * r[0], subdivisions=16)
    grid = fn.grid
    live = grid.classification.reshape(-1) != 3
    assert np.allclose(fn.values.reshape(-1)[live], 1.0, atol=1e-10)


def test_lift_dominates_psh_disc_model():
    # the harmonic majorant of sphere data r1^2 - 1 dominates the psh
    # solution |z|^2 - 1 of the exact-ball problem restricted to that data
    fn = harmonic_lift("UnitBall", 2, lambda r: float(r[0] ** 2) - 1.0, subdivisions=32)
    grid = fn.grid
    r = grid.node_x(grid.interior_flat)
    # any psh competitor with the same boundary data: here r1^2 - 1 itself
    competitor = r[:, 0] ** 2 - 1.0
    got = fn.values.reshape(-1)[grid.interior_flat]
    assert (got >= competitor - 0.02).all()
