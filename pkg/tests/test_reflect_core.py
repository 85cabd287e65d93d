import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orbm.drivers import DrivingPath, brownian_driver
from orbm.reflect_core import (Domain, InvalidSpecError, LcpError, Pattern, ReflectionSpec, calibrate_chi1,
                               feasible_patterns, one_step_reflect, oscillation_ratio, reflect_batch,
                               solve_path)

HALF_PI = math.pi / 2
coord = st.floats(0.0, 5.0)
move = st.floats(-3.0, 3.0)


@st.composite
def valid_specs(draw):
    t1 = draw(st.floats(-1.4, 1.4))
    t2 = draw(st.floats(-1.4, 1.4))
    if t1 * t2 > 0 and math.tan(t1) * math.tan(t2) >= 0.95:
        t2 = -t2
    return ReflectionSpec.from_angles(t1, t2)


@st.composite
def states(draw):
    x, y = draw(coord), draw(coord)
    kind = draw(st.integers(0, 3))
    if kind == 1:
        y = 0.0
    elif kind == 2:
        x = 0.0
    elif kind == 3:
        x = y = 0.0
    return x, y


def test_interior_step():
    s = one_step_reflect((0.4, 0.3), (0.1, 0.0), ReflectionSpec.quadrant(1.0, -1.0))
    assert s.pattern is Pattern.INTERIOR
    assert s.post_state == pytest.approx((0.5, 0.3), abs=1e-15)
    assert (s.dm_lower, s.dm_upper) == (0.0, 0.0)


def test_lower_only_step():
    s = one_step_reflect((0.5, 0.1), (0.0, -0.3), ReflectionSpec.quadrant(1.0, -1.0))
    assert s.pattern is Pattern.LOWER_ONLY
    assert s.dm_lower == pytest.approx(0.2, abs=1e-15)
    assert s.post_state[1] == 0.0
    assert s.post_state[0] == pytest.approx(0.3, abs=1e-15)


def test_corner_step():
    spec = ReflectionSpec.quadrant(1.0, -1.0)
    s = one_step_reflect((0.0, 0.0), (-0.1, -0.2), spec)
    assert s.pattern is Pattern.CORNER
    assert s.dm_lower == pytest.approx(0.05, abs=1e-15)
    assert s.dm_upper == pytest.approx(0.15, abs=1e-15)
    assert s.post_state == (0.0, 0.0)
    assert feasible_patterns((0.0, 0.0), (-0.1, -0.2), spec) == [Pattern.CORNER]


def test_spec_conventions():
    spec = ReflectionSpec.from_angles(0.3, -0.2)
    assert spec.v_lower == (-math.tan(0.3), 1.0)
    assert spec.v_upper == (1.0, -math.tan(-0.2))
    strip = ReflectionSpec.strip(0.3, 0.2)
    assert strip.domain is Domain.STRIP
    assert strip.v_upper == (-math.tan(0.2), -1.0)
    assert strip.y_lo == pytest.approx(HALF_PI - 0.3) and strip.y_hi == pytest.approx(HALF_PI + 0.2)


def test_non_completely_s_rejected():
    with pytest.raises(InvalidSpecError):
        ReflectionSpec.quadrant(2.0, 1.0)
    with pytest.raises(InvalidSpecError):
        ReflectionSpec(Domain.STRIP, (0.0, 1.0), (0.0, -1.0), y_lo=1.0, y_hi=0.5)


def test_outside_state_rejected():
    with pytest.raises(ValueError):
        one_step_reflect((-0.1, 0.5), (0.0, 0.0), ReflectionSpec.quadrant(1.0, -1.0))


def test_lcp_error_carries_residuals():
    err = LcpError("x", residuals={"INTERIOR": (0, 0, -1, -1)})
    assert err.residuals["INTERIOR"] == (0, 0, -1, -1)


@settings(max_examples=400)
@given(valid_specs(), states(), move, move)
def test_step_invariants(spec, state, dx, dy):
    s = one_step_reflect(state, (dx, dy), spec)
    assert s.dm_lower >= 0.0 and s.dm_upper >= 0.0
    wx = state[0] + dx + s.dm_lower * spec.v_lower[0] + s.dm_upper * spec.v_upper[0]
    wy = state[1] + dy + s.dm_lower * spec.v_lower[1] + s.dm_upper * spec.v_upper[1]
    assert abs(wx - s.post_state[0]) <= 1e-10 and abs(wy - s.post_state[1]) <= 1e-10
    ql, qu = spec.normal_coords(*s.post_state)
    assert ql >= 0.0 and qu >= 0.0
    if s.dm_lower > 0:
        assert ql == 0.0
    if s.dm_upper > 0:
        assert qu == 0.0
    pats = feasible_patterns(state, (dx, dy), spec)
    assert len(pats) == 1
    # a face whose push is below the feasibility tolerance counts as untouched
    tol = 1e-10
    assert pats[0] is Pattern(int(s.dm_lower > tol) + 2 * int(s.dm_upper > tol))


@settings(max_examples=200)
@given(valid_specs(), states(), move, move)
def test_tandem_interior_step_exact(spec, state, dx, dy):
    s = one_step_reflect(state, (dx, dy), spec)
    if s.pattern is Pattern.INTERIOR:
        assert s.post_state == (state[0] + dx, state[1] + dy)


@settings(max_examples=50, deadline=None)
@given(valid_specs(), st.integers(0, 2**32))
def test_batch_matches_scalar(spec, seed):
    gen = np.random.default_rng(seed)
    st_ = gen.exponential(0.3, (200, 2))
    st_[::3, 1] = 0.0
    st_[1::5, 0] = 0.0
    d = gen.normal(0, 0.5, (200, 2))
    post, dl, du = reflect_batch(st_, d, spec)
    for i in range(200):
        s = one_step_reflect(st_[i], d[i], spec)
        assert (post[i, 0], post[i, 1], dl[i], du[i]) == (*s.post_state, s.dm_lower, s.dm_upper)


@settings(max_examples=30, deadline=None)
@given(valid_specs(), st.integers(0, 2**32), st.sampled_from([0.5, 2.0, 4.0]))
def test_scale_equivariance(spec, seed, c):
    drv = brownian_driver(seed, 1.0, 1e-2)
    x0 = (0.2, 0.1)
    base = solve_path(drv, x0, spec)
    scaled = solve_path(DrivingPath(drv.dt * c * c, drv.values * c), (x0[0] * c, x0[1] * c), spec)
    assert np.array_equal(scaled.states, base.states * c)
    assert np.array_equal(scaled.l_lower, base.l_lower * c)
    assert np.array_equal(scaled.t, base.t * c * c)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.floats(-1.2, 1.2))
def test_single_face_local_time_is_running_max(seed, t1):
    spec = ReflectionSpec.from_angles(t1, -0.3)
    drv = brownian_driver(seed, 1.0, 1e-3)
    y0 = 0.05
    path = solve_path(drv, (50.0, y0), spec)
    assert np.all(path.l_upper == 0.0)
    expected = np.maximum.accumulate(np.maximum(0.0, -(y0 + drv.values[:, 1])))
    assert np.max(np.abs(path.l_lower - expected)) <= 1e-12


def test_constant_driver_keeps_state():
    drv = DrivingPath(0.1, np.zeros((11, 2)))
    path = solve_path(drv, (0.3, 0.4), ReflectionSpec.quadrant(1.0, -1.0))
    assert np.all(path.states == [0.3, 0.4])
    assert np.all(path.l_lower == 0) and np.all(path.l_upper == 0)
    assert oscillation_ratio(drv, path) == 0.0


def test_linear_interior_driver_ratio_one():
    vals = np.column_stack((np.linspace(0, 0.5, 21), np.linspace(0, 0.2, 21)))
    drv = DrivingPath(0.05, vals)
    path = solve_path(drv, (1.0, 1.0), ReflectionSpec.quadrant(1.0, -1.0))
    assert oscillation_ratio(drv, path) == pytest.approx(1.0, rel=1e-12)


def test_oscillation_ratio_bounded_by_calibration():
    spec = ReflectionSpec.from_angles(math.pi / 6, -math.pi / 12)
    chi = calibrate_chi1(spec, (0.1, 0.1), n_drivers=100, n_steps=64)
    assert math.isfinite(chi) and chi >= 1.0
    for k in range(100, 120):
        drv = brownian_driver(k, 1.0, 1 / 64)
        assert oscillation_ratio(drv, solve_path(drv, (0.1, 0.1), spec)) <= chi * 2.0


def test_local_times_nondecreasing_and_events_on_faces():
    spec = ReflectionSpec.from_angles(0.9, -0.6)
    drv = brownian_driver(9, 2.0, 1e-3)
    path = solve_path(drv, (0.1, 0.1), spec)
    assert path.l_lower[0] == 0.0 and path.l_upper[0] == 0.0
    assert np.all(np.diff(path.l_lower) >= 0) and np.all(np.diff(path.l_upper) >= 0)
    assert np.all(path.states[path.events_lower, 1] == 0.0)
    assert np.all(path.states[path.events_upper, 0] == 0.0)
    assert np.all(path.states >= 0.0)


def test_path_csv_columns():
    drv = brownian_driver(1, 0.01, 1e-3)
    text = solve_path(drv, (0.1, 0.1), ReflectionSpec.quadrant(1.0, -1.0)).to_csv()
    assert text.splitlines()[0] == "t,x,y,l_lower,l_upper"
    assert len(text.splitlines()) == 12


def test_refinement_distance_shrinks_beta_below_one():
    from orbm.coupling import mean_refinement_distances

    spec = ReflectionSpec.from_angles(math.pi / 6, -math.pi / 12)
    d = mean_refinement_distances(spec, (0.3, 0.3), seed_base=4, n_drivers=16)
    assert d[0] > d[1] > d[2]
