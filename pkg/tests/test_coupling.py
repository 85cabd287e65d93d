import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orbm import coupling
from orbm.drivers import brownian_driver, cycle_driver
from orbm.params import Regime, classify_angles, derive
from orbm.reflect_core import ReflectionSpec
from orbm.sim import DriftSpec

THEOREM = (3 * math.pi / 8 - 0.05, -3 * math.pi / 8 + 0.10)
UNIQUE = (math.pi / 6, -math.pi / 12)


@st.composite
def theorem_angles(draw):
    t1 = draw(st.floats(math.pi / 4, math.pi / 2 - 0.05))
    t2 = draw(st.floats(-math.pi / 2 + 0.05, -0.01))
    if classify_angles(t1, t2).label != Regime.THEOREM_REGION.value:
        return THEOREM
    return t1, t2


def _cycle_report(angles, eta=0.01, n_cycles=1):
    p = derive(angles)
    spec = ReflectionSpec.from_angles(*angles)
    return p, coupling.run_pair(cycle_driver(p, eta, n_cycles=n_cycles), (0.0, 1.0), (eta, 1.0), spec)


def test_identical_starts_zero_gap():
    spec = ReflectionSpec.from_angles(*THEOREM)
    drv = brownian_driver(3, 2.0, 1e-3)
    rep = coupling.run_pair(drv, (0.2, 0.3), (0.2, 0.3), spec)
    assert np.all(rep.gap == 0.0)
    rep = coupling.run_pair(drv, (0.2, 0.3), (0.2, 0.3), spec, DriftSpec.h_transform(*THEOREM))
    assert np.all(rep.gap == 0.0)


def test_cycle_factors():
    p, rep = _cycle_report(THEOREM)
    assert [s.face for s in rep.stages] == ["upper", "lower"]
    assert rep.factors[0] == pytest.approx(-p.a2, rel=1e-9)
    assert rep.factors[1] == pytest.approx(p.a1, rel=1e-9)
    assert rep.cycle_factor == pytest.approx(p.beta, rel=1e-9)
    assert rep.orientation_ok
    assert rep.breaks == [] and rep.pattern_break_rate == 0.0


def test_two_cycles_beta_squared():
    p, rep = _cycle_report(THEOREM, n_cycles=2)
    assert rep.cycle_factor == pytest.approx(math.exp(2 * p.rho), rel=1e-8)
    assert len(rep.cycle_factors) == 2


def test_zero_eta_cycle_keeps_gap_zero():
    _, rep = _cycle_report(THEOREM, eta=0.0)
    assert np.all(rep.gap == 0.0)
    assert rep.cycle_factor is None


@settings(max_examples=20, deadline=None)
@given(theorem_angles())
def test_cycle_factor_is_beta(angles):
    p, rep = _cycle_report(angles)
    assert rep.cycle_factor == pytest.approx(p.beta, rel=1e-9)
    assert all(f > 0 for f in rep.factors)
    assert rep.orientation_ok


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32), st.floats(1e-6, 0.3))
def test_tandem_invariance(seed, eta):
    spec = ReflectionSpec.from_angles(*THEOREM)
    rep = coupling.run_pair(brownian_driver(seed, 2.0, 1e-3), (0.3, 0.3), (0.3 + eta, 0.3), spec)
    assert coupling.tandem_violations(rep) == 0


def test_report_json_and_csv():
    _, rep = _cycle_report(THEOREM)
    d = json.loads(rep.to_json("gap.csv"))
    for key in ("gap_csv_path", "stage_events", "factors", "cycle_factor", "pattern_break_rate"):
        assert key in d
    assert rep.gap_csv().splitlines()[0] == "t,gx,gy"


def test_simultaneous_contact_parsed_as_stage():
    gap = np.array([[1e-9, 0.0], [1e-9, 0.0], [0.0, 2e-9]])
    events = [coupling.ContactEvent(2, 0, "upper"), coupling.ContactEvent(2, 1, "upper")]
    pushes = {(0, "upper"): np.array([0.0, 0.3]), (1, "upper"): np.array([0.0, 0.1]),
              (0, "lower"): np.zeros(2), (1, "lower"): np.zeros(2)}
    stages, breaks = coupling.parse_stages(events, gap, 1.0, -2.0, pushes)
    assert not breaks
    assert stages[0].conforming and stages[0].first == 0
    assert stages[0].factor == pytest.approx(2.0)


def test_corner_contact_is_break():
    gap = np.zeros((3, 2))
    stages, breaks = coupling.parse_stages([coupling.ContactEvent(1, 0, "corner")], gap, 1.0, -1.0)
    assert stages == [] and breaks[0]["reason"] == "corner"


def test_gap_growth_zero_eta_empty():
    g = coupling.stochastic_gap_growth(1, derive(THEOREM), 0.0)
    assert g.cycle_factors == [] and g.log_mean is None


def test_gap_growth_needs_mixed_signs():
    with pytest.raises(ValueError):
        coupling.stochastic_gap_growth(1, derive((math.pi / 6, math.pi / 6)), 1e-6)


@pytest.mark.slow
def test_gap_growth_theorem_region_log_beta():
    p = derive(THEOREM)
    g = coupling.stochastic_gap_growth(2, p, 1e-6, dt=1e-3, horizon=20.0, n_pairs=20)
    assert g.log_mean is not None
    assert abs(g.log_mean.estimate - p.rho) <= max(4 * g.log_mean.std_error, 1e-8)
    assert 0.0 <= g.pattern_break_rate <= 1.0


@pytest.mark.slow
def test_gap_growth_contracts_for_beta_below_one():
    p = derive(UNIQUE)
    g = coupling.stochastic_gap_growth(2, p, 1e-6, dt=1e-3, horizon=20.0, n_pairs=20)
    assert g.log_mean is not None and g.log_mean.estimate < 0.0
