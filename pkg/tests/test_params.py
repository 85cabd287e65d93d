import csv
import io
import math
import sys

import pytest
from hypothesis import assume, given, settings, strategies as st

from orbm.params import (DEGENERATE, DegenerateAngleError, Regime, WedgeAngles, classify, classify_angles,
                         derive, psi_exceeds_inverse_alpha, region_csv, region_grid)

HALF_PI = math.pi / 2
angle = st.floats(-HALF_PI + 1e-6, HALF_PI - 1e-6, allow_nan=False)


def _derive_or_skip(t1, t2):
    try:
        return derive((t1, t2))
    except DegenerateAngleError:
        assume(False)


def test_alpha_five_eighths():
    p = derive((7 * math.pi / 16, -math.pi / 8))
    assert p.alpha == 5 / 8


def test_degenerate_opening_raises():
    with pytest.raises(DegenerateAngleError):
        derive((math.pi / 4, -math.pi / 4))


def test_kappa_example():
    p = derive((math.pi / 3, -math.pi / 6))
    expected = 1.0 / ((math.pi / 6) * (math.tan(math.pi / 3) - math.tan(math.pi / 6)))
    assert p.kappa == pytest.approx(expected, rel=1e-14)
    assert p.kappa == pytest.approx(1.6540, abs=5e-5)


def test_angles_outside_range_rejected():
    with pytest.raises(ValueError):
        WedgeAngles(HALF_PI, 0.0)
    with pytest.raises(ValueError):
        WedgeAngles(0.1, math.nan)


@pytest.mark.parametrize("angles, label", [
    ((7 * math.pi / 16, -math.pi / 8), Regime.UNRESOLVED_MIXED_SIGN),
    ((math.pi / 6, math.pi / 6), Regime.PATHWISE_UNIQUE),
    ((3 * math.pi / 8 - 0.05, -3 * math.pi / 8 + 0.10), Regime.THEOREM_REGION),
    ((math.pi / 3, math.pi / 4), Regime.NOT_SEMIMARTINGALE),
    ((math.pi / 6, -math.pi / 3), Regime.TRANSIENT),
])
def test_classify_examples(angles, label):
    assert classify(derive(angles)) is label


def test_pathwise_unique_beta_one_third():
    p = derive((math.pi / 6, math.pi / 6))
    assert p.beta == pytest.approx(1 / 3, rel=1e-14)


def test_region_grid_cardinality_and_examples():
    nodes = region_grid((math.pi / 4, HALF_PI), (-HALF_PI, 0.0), 3)
    assert len(nodes) == 9
    assert [n.theta1 for n in nodes[:3]] == [math.pi / 4] * 3
    assert classify_angles(7 * math.pi / 16, -math.pi / 8).label != Regime.THEOREM_REGION.value
    assert classify_angles(3 * math.pi / 8 - 0.05, -3 * math.pi / 8 + 0.10).label == Regime.THEOREM_REGION.value


def test_region_grid_labels_degenerate_nodes():
    nodes = region_grid((math.pi / 4, HALF_PI), (-HALF_PI, 0.0), 3)
    labels = {(round(n.theta1, 6), round(n.theta2, 6)): n.label for n in nodes}
    assert labels[(round(HALF_PI, 6), 0.0)] == DEGENERATE  # tangent infinite
    assert classify_angles(math.pi / 4, -math.pi / 4).label == DEGENERATE


def test_region_grid_rejects_bad_ranges():
    with pytest.raises(ValueError):
        region_grid((1.0, 1.0), (-1.0, 0.0), 4)
    with pytest.raises(ValueError):
        region_grid((0.0, 1.0), (-1.0, 0.0), 1)


def test_region_csv_columns():
    text = region_csv(region_grid(resolution=4), ["note"])
    lines = text.splitlines()
    assert lines[0] == "# note"
    rows = list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))
    assert list(rows[0]) == ["theta1", "theta2", "a1", "a2", "alpha", "beta", "psi", "kappa", "label"]
    assert len(rows) == 16


@given(angle, angle)
def test_rho_is_log_beta(t1, t2):
    assume(t1 != 0.0 and t2 != 0.0)
    p = _derive_or_skip(t1, t2)
    assume(p.beta >= sys.float_info.min)  # a subnormal product has lost the precision rho keeps
    assert abs(p.rho - math.log(p.beta)) <= 1e-12


@given(angle, angle)
def test_labels_partition(t1, t2):
    node = classify_angles(t1, t2)
    labels = {r.value for r in Regime} | {DEGENERATE}
    assert node.label in labels
    if node.params is None:
        return
    p = node.params
    matches = [
        p.alpha >= 1.0,
        p.alpha <= 0.0,
        0.0 < p.alpha < 1.0 and p.beta < 1.0,
        0.0 < p.alpha < 1.0 and p.beta > 1.0 and p.a1 > 0 and p.a2 < 0 and psi_exceeds_inverse_alpha(p),
    ]
    assert sum(matches) <= 1
    if any(matches):
        expected = [Regime.NOT_SEMIMARTINGALE, Regime.TRANSIENT, Regime.PATHWISE_UNIQUE,
                    Regime.THEOREM_REGION][matches.index(True)]
        assert node.label == expected.value
    else:
        assert node.label == Regime.UNRESOLVED_MIXED_SIGN.value


@given(st.floats(0.0, HALF_PI - 1e-6), st.floats(0.0, HALF_PI - 1e-6))
def test_nonnegative_angles_below_right_angle_have_beta_below_one(t1, t2):
    p = _derive_or_skip(t1, t2)
    if p.alpha < 1.0:
        assert p.beta < 1.0


@given(angle, angle)
def test_swap_invariance_of_symmetric_labels(t1, t2):
    a, b = classify_angles(t1, t2), classify_angles(t2, t1)
    symmetric = {Regime.PATHWISE_UNIQUE.value, Regime.NOT_SEMIMARTINGALE.value}
    if a.label in symmetric:
        assert b.label == a.label


@settings(max_examples=300)
@given(st.floats(1e-3, HALF_PI - 1e-3), st.floats(-HALF_PI + 1e-3, -1e-3))
def test_psi_criterion_equivalence(t1, t2):
    assume(t1 + t2 > 1e-9)
    p = derive((t1, t2))
    direct = p.psi > 1.0 / p.alpha
    margin = abs(p.rho / (p.a1 + p.a2) - HALF_PI)
    if margin > 1e-9:
        assert direct == psi_exceeds_inverse_alpha(p)
