import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orbm import analytics as A
from orbm.params import DegenerateAngleError, derive
from orbm.sim import exit_probability_mc

HALF_PI = math.pi / 2
T1, T2 = math.pi / 3, -math.pi / 6


@st.composite
def standing_angles(draw):
    t1 = draw(st.floats(0.05, HALF_PI - 0.05))
    t2 = draw(st.floats(-HALF_PI + 0.05, HALF_PI - 0.05))
    if t1 + t2 < 0.05:
        t2 = 0.05 - t1
    return t1, t2


def test_scale_function_values():
    assert A.scale_function(HALF_PI) == pytest.approx(0.0, abs=1e-16)
    assert A.scale_function(math.pi / 4) == pytest.approx(-1.0, rel=1e-15)
    with pytest.raises(ValueError):
        A.scale_function(0.0)
    with pytest.raises(ValueError):
        A.scale_function(math.pi)


def test_scale_function_increasing():
    x = np.linspace(1e-3, math.pi - 1e-3, 1000)
    assert np.all(np.diff(A.scale_function(x)) > 0)


def test_scale_speed_identity():
    x = np.linspace(1e-3, math.pi - 1e-3, 10_001)
    assert np.max(np.abs(A.scale_derivative(x) * A.speed_density(x) - 1.0)) <= 1e-12


def test_hit_prob_boundaries_and_example():
    iv = A.StripInterval(math.pi / 6, math.pi / 3)
    assert A.hit_prob(iv.a, iv) == 0.0
    assert A.hit_prob(iv.b, iv) == pytest.approx(1.0, rel=1e-15)
    expected = (-1 + math.sqrt(3)) / (-1 / math.sqrt(3) + math.sqrt(3))
    assert A.hit_prob(math.pi / 4, iv) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.6340, abs=5e-5)
    with pytest.raises(ValueError):
        A.hit_prob(0.1, iv)


def test_exit_law_values():
    assert A.exit_law_up(T1, T2) == pytest.approx(2 * math.sqrt(3), rel=1e-14)
    assert A.exit_law_up_trig(T1, T2) == pytest.approx(2 * math.sqrt(3), rel=1e-13)


def test_exit_law_limit_form():
    assert abs(A.exit_law_up_limit(T1, T2, 1e-6) - A.exit_law_up(T1, T2)) <= 1e-10
    assert abs(A.exit_law_down_limit(T1, T2, 1e-6) - A.exit_law_down(T1, T2)) <= 1e-10


def test_quotient_is_first_order():
    exact = A.exit_law_up(T1, T2)
    e1 = abs(A.exit_law_up_quotient(T1, T2, 1e-2) - exact)
    e2 = abs(A.exit_law_up_quotient(T1, T2, 5e-3) - exact)
    assert e1 / e2 == pytest.approx(2.0, rel=0.05)


def test_degenerate_angles():
    with pytest.raises(DegenerateAngleError):
        A.exit_law_up(0.3, -0.3)
    with pytest.raises(DegenerateAngleError):
        A.expected_exit_time_legs(HALF_PI, 0.0)


def test_exit_time_example():
    legs = A.expected_exit_time_legs(T1, T2)
    assert legs.down_to_up == pytest.approx(0.1977, abs=5e-5)
    assert legs.cycle == pytest.approx(legs.down_to_up + legs.up_to_down)


def test_mean_cycle_displacement_example():
    v = A.mean_cycle_displacement(T1, T2)
    assert v == pytest.approx((math.pi / 6) * (math.sqrt(3) - 1 / math.sqrt(3)), rel=1e-14)
    assert v == pytest.approx(0.6046, abs=5e-5)
    assert v == pytest.approx(1 / derive((T1, T2)).kappa, rel=1e-14)


def test_local_time_per_leg_example():
    lower, _ = A.local_time_per_leg(T1, T2)
    assert lower == pytest.approx(math.cos(T1) ** 2 * (math.tan(T1) + math.tan(T2)), rel=1e-14)


def test_collapsing_strip_times_vanish():
    t1 = 0.7
    prev = math.inf
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        e = A.expected_exit_time_legs(t1, -t1 + eps).cycle
        assert 0 < e < prev
        prev = e
    assert prev < 1e-3


def test_constants_table_json():
    table = json.loads(A.constants_json(T1, T2))
    assert table["exit_law_up"] == pytest.approx(2 * math.sqrt(3))
    assert table["e_down_to_up"] == pytest.approx(table["e_down_to_up_quad"], abs=1e-9)
    assert table["mean_cycle_displacement"] == pytest.approx(1 / table["kappa"])


@given(standing_angles())
def test_exit_laws_exchange_under_swap(angles):
    t1, t2 = angles
    if not abs(t2) < HALF_PI - 0.05 or t2 < 0.05 - HALF_PI:
        return
    assert A.exit_law_up(t1, t2) == pytest.approx(A.exit_law_down(t2, t1), rel=1e-13)


@given(standing_angles())
def test_trig_and_limit_forms_agree(angles):
    t1, t2 = angles
    up = A.exit_law_up(t1, t2)
    assert A.exit_law_up_trig(t1, t2) == pytest.approx(up, rel=1e-10)
    assert A.exit_law_up_limit(t1, t2) == pytest.approx(up, rel=1e-8)
    assert A.exit_law_down_limit(t1, t2) == pytest.approx(A.exit_law_down(t1, t2), rel=1e-8)


@settings(max_examples=40, deadline=None)
@given(standing_angles())
def test_quadrature_matches_closed_form(angles):
    t1, t2 = angles
    legs, quad = A.expected_exit_time_legs(t1, t2), A.expected_exit_time_quad(t1, t2)
    assert quad.down_to_up == pytest.approx(legs.down_to_up, rel=1e-9, abs=1e-10)
    assert quad.up_to_down == pytest.approx(legs.up_to_down, rel=1e-9, abs=1e-10)


@given(standing_angles())
def test_cycle_time_positive_and_decomposition(angles):
    t1, t2 = angles
    assert A.expected_exit_time_legs(t1, t2).cycle > 0
    d = A.displacement_decomposition(t1, t2)
    assert abs(d["sum"] - d["closed_form"]) <= 1e-12 * max(1.0, abs(d["closed_form"]))


@given(st.floats(0.1, 1.4), st.floats(0.05, 1.5), st.floats(0.0, 1.0))
def test_hit_prob_in_unit_interval(a, width, frac):
    b = min(a + width, math.pi - 0.01)
    iv = A.StripInterval(a, b)
    p = A.hit_prob(a + frac * (b - a), iv)
    assert -1e-15 <= p <= 1 + 1e-15


@pytest.mark.slow
def test_hit_prob_monte_carlo():
    iv = A.StripInterval(math.pi / 6, math.pi / 3)
    target = A.hit_prob(math.pi / 4, iv)
    rep = exit_probability_mc(iv.a, iv.b, math.pi / 4, 100_000, seed_base=3, dt=1e-4)
    assert abs(rep.z_score(target)) <= 4.0
