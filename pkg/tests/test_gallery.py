import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toricma import discontinuity_scan, example_u, example_v


def test_v_at_zero_closed_form():
    # v(0) = sum 2^{-k} log(2^{-k}) = -2 log 2
    val, tail = example_v(0.0, K=40)
    assert abs(val - (-2.0 * math.log(2.0))) <= 1e-8
    assert tail <= 1e-8


def test_v_frozen_regressions():
    val9, tail9 = example_v(0.9, K=40)
    assert val9 == pytest.approx(-0.6168397999505795, abs=1e-10)
    assert tail9 < 1e-10
    val2, tail2 = example_v(2.0, K=40)
    assert val2 == pytest.approx(0.5052162431975532, abs=1e-10)
    assert 0.0 < val2 < math.log(2.0)


def test_v_pole_sentinel():
    for k in (1, 2, 5):
        val, tail = example_v(2.0**-k, K=40)
        assert val == -math.inf
        assert math.isfinite(tail) or tail == math.inf


def test_v_tail_bound_is_a_bound():
    # the K-term truncation really is within tail(K) of a much deeper sum
    for z in (0.0, 0.3 + 0.2j, 0.9, 1.5j):
        v40, t40 = example_v(z, K=40)
        v400, t400 = example_v(z, K=400)
        assert abs(v40 - v400) <= t40 + 1e-15
        assert t400 < t40


def test_v_tail_bound_spec_envelope():
    # within |z| <= 2 the reported bound stays below the coarse closed form
    # 2^{-K} (|log(|z| + 2^{-K})| + 2 log 2) wherever the latter is valid
    K = 40
    for z in (0.0, 0.9, 1.0 + 1.0j, 2.0):
        _, tail = example_v(z, K)
        coarse = 2.0**-K * (abs(math.log(abs(z) + 2.0**-K)) + 2.0 * math.log(2.0))
        assert tail <= coarse + 1e-18


@given(st.complex_numbers(max_magnitude=0.98, allow_nan=False, allow_infinity=False))
@settings(max_examples=60, deadline=None)
def test_v_partial_sums_monotone_decreasing_tail(z):
    # on |z| <= 1 every term 2^{-k} log|z - 2^{-k}| is <= 2^{-k} log 2, so
    # deepening K can only move the sum down once the log-2 cap is removed;
    # concretely: v_K - sum-cap is nonincreasing in K
    caps = [sum(2.0**-j * math.log(2.0) for j in range(k + 1, 41)) for k in (10, 20, 40)]
    vals = []
    for K, cap in zip((10, 20, 40), caps):
        v, _ = example_v(z, K=K)
        vals.append(v + cap)
    if not any(math.isinf(v) for v in vals):
        assert vals[0] >= vals[1] - 1e-12
        assert vals[1] >= vals[2] - 1e-12


def test_u_clamp_and_scalar_contract():
    out = example_u(0.9, 0.0)
    assert isinstance(out, float)
    assert out == pytest.approx(-0.6168397999505795, abs=1e-10)
    # at a pole the clamp is exact
    assert example_u(0.25, 0.0) == -1.0
    assert example_u(0.5, 0.0) == -1.0
    # near the origin v sits far below -1, so u is exactly -1 there too
    assert example_u(0.0, 0.0) == -1.0
    assert example_u(0.01, 0.3) == -1.0


def test_u_rejects_points_outside_ball():
    with pytest.raises(ValueError):
        example_u(0.9, 0.9)
    with pytest.raises(ValueError):
        example_u(1.0, 0.0)


def test_u_never_below_minus_one():
    rng = np.random.default_rng(3)
    for _ in range(50):
        z = rng.uniform(-0.7, 0.7) + 1j * rng.uniform(-0.7, 0.7)
        w = rng.uniform(-0.3, 0.3)
        if abs(z) ** 2 + abs(w) ** 2 < 1:
            assert example_u(z, w) >= -1.0


def test_scan_flags_jump_not_smooth():
    # |z| has a kink but no jump; sign(Re z - 1/2) jumps across the line
    def jump(z):
        return 1.0 if z.real > 0.5 else 0.0

    pts = np.array([0.5 + 0.0j, 0.2 + 0.0j])
    res = discontinuity_scan(jump, pts)
    assert res.flagged[0]
    assert not res.flagged[1]
    assert res.oscillations.shape == (2, 3)


def test_scan_smooth_function_unflagged():
    res = discontinuity_scan(
        lambda z: abs(z) ** 2, np.array([0.3 + 0.1j, 0.0j, 0.9 + 0.0j])
    )
    assert not res.flagged.any()


def test_scan_v_flags_pole_neighborhood_spares_regular_points():
    pts = np.array([0.5 + 0.0j, 0.504 + 0.0j, 0.9 + 0.0j])
    res = discontinuity_scan(lambda z: example_v(z, 40)[0], pts)
    assert res.flagged[0]
    assert res.flagged[1]
    assert not res.flagged[2]


def test_scan_is_deterministic():
    pts = np.array([0.5 + 0.0j, 0.9 + 0.0j])
    f = lambda z: example_v(z, 40)[0]
    r1 = discontinuity_scan(f, pts)
    r2 = discontinuity_scan(f, pts)
    assert np.array_equal(r1.oscillations, r2.oscillations)
    assert np.array_equal(r1.flagged, r2.flagged)


def test_scan_parameter_validation():
    pts = np.array([0.1 + 0.0j])
    with pytest.raises(ValueError):
        discontinuity_scan(lambda z: 0.0, pts, radii=(0.01, 0.02))
    with pytest.raises(ValueError):
        discontinuity_scan(lambda z: 0.0, pts, samples=4)


def test_scan_infinite_values_count_as_oscillation():
    res = discontinuity_scan(
        lambda z: example_v(z, 40)[0], np.array([0.25 + 0.0j]), radii=(0.01, 0.005)
    )
    # center is the pole itself: oscillation is infinite at every radius
    assert np.isinf(res.oscillations).all()
    assert res.flagged[0]
