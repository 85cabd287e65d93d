"""Scalar parameters of the reflection-angle pair and regime classification."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

HALF_PI = math.pi / 2


class DegenerateAngleError(ValueError):
    """Raised when psi/kappa are undefined (theta1 + theta2 == 0)."""


class Regime(str, enum.Enum):
    NOT_SEMIMARTINGALE = "NotSemimartingale"
    TRANSIENT = "Transient"
    PATHWISE_UNIQUE = "PathwiseUnique"
    THEOREM_REGION = "TheoremRegion"
    UNRESOLVED_MIXED_SIGN = "UnresolvedMixedSign"


DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class WedgeAngles:
    """Reflection angles on the x axis (theta1) and y axis (theta2), radians.

    Positive angles point towards the origin, so the push on the x axis is
    ``(-tan theta1, 1)`` and on the y axis ``(1, -tan theta2)``.
    """

    theta1: float
    theta2: float

    def __post_init__(self):
        for name in ("theta1", "theta2"):
            value = getattr(self, name)
            if not (math.isfinite(value) and -HALF_PI < value < HALF_PI):
                raise ValueError(f"{name}={value!r} outside (-pi/2, pi/2)")


@dataclass(frozen=True)
class DerivedParams:
    theta1: float
    theta2: float
    a1: float
    a2: float
    alpha: float
    beta: float
    psi: float
    kappa: float
    rho: float

    @property
    def angles(self) -> WedgeAngles:
        return WedgeAngles(self.theta1, self.theta2)

    def as_dict(self) -> dict:
        return asdict(self)


def _log_abs(x: float) -> float:
    return math.log(abs(x)) if x != 0.0 else -math.inf


def derive(angles: WedgeAngles | tuple[float, float]) -> DerivedParams:
    """All derived constants of an angle pair.

    ``rho = log|a1| + log|a2|`` equals ``log(beta)``; ``psi`` and ``kappa``
    divide by ``(theta1 + theta2)(a1 + a2)`` and so need a non-degenerate pair.
    """
    if not isinstance(angles, WedgeAngles):
        angles = WedgeAngles(*angles)
    t1, t2 = angles.theta1, angles.theta2
    a1, a2 = math.tan(t1), math.tan(t2)
    opening = t1 + t2
    tan_sum = a1 + a2
    if opening == 0.0 or tan_sum == 0.0:
        raise DegenerateAngleError(
            f"theta1 + theta2 = {opening!r}, a1 + a2 = {tan_sum!r}: psi and kappa undefined"
        )
    rho = _log_abs(a1) + _log_abs(a2)
    denom = opening * tan_sum
    if denom == 0.0:
        raise DegenerateAngleError(f"(theta1 + theta2)(a1 + a2) underflows for {t1!r}, {t2!r}")
    return DerivedParams(
        theta1=t1,
        theta2=t2,
        a1=a1,
        a2=a2,
        alpha=opening / HALF_PI,
        beta=abs(a1 * a2),
        psi=rho / denom,
        kappa=1.0 / denom,
        rho=rho,
    )


def psi_exceeds_inverse_alpha(p: DerivedParams) -> bool:
    """``psi > 1/alpha`` via the equivalent ``rho / (a1 + a2) > pi/2`` (alpha > 0)."""
    return p.rho / (p.a1 + p.a2) > HALF_PI


def classify(p: DerivedParams) -> Regime:
    """Regime label; ties at the boundaries fall on the non-theorem side."""
    if p.alpha >= 1.0:
        return Regime.NOT_SEMIMARTINGALE
    if p.alpha <= 0.0:
        return Regime.TRANSIENT
    if p.beta < 1.0:
        return Regime.PATHWISE_UNIQUE
    if p.beta > 1.0 and p.a1 > 0.0 and p.a2 < 0.0 and psi_exceeds_inverse_alpha(p):
        return Regime.THEOREM_REGION
    return Regime.UNRESOLVED_MIXED_SIGN


@dataclass(frozen=True)
class GridNode:
    theta1: float
    theta2: float
    params: DerivedParams | None
    label: str


def classify_angles(theta1: float, theta2: float) -> GridNode:
    try:
        p = derive(WedgeAngles(theta1, theta2))
    except (ValueError, DegenerateAngleError):
        return GridNode(theta1, theta2, None, DEGENERATE)
    return GridNode(theta1, theta2, p, classify(p).value)


FIG_THETA1_RANGE = (math.pi / 4, HALF_PI)
FIG_THETA2_RANGE = (-HALF_PI, 0.0)


def region_grid(
    theta1_range: tuple[float, float] = FIG_THETA1_RANGE,
    theta2_range: tuple[float, float] = FIG_THETA2_RANGE,
    resolution: int = 64,
) -> list[GridNode]:
    """Labelled ``resolution x resolution`` grid, theta1 major, endpoints included.

    Nodes where the derived constants do not exist (tangent infinite or
    theta1 + theta2 == 0) are labelled ``Degenerate``.
    """
    lo1, hi1 = theta1_range
    lo2, hi2 = theta2_range
    if not (hi1 > lo1 and hi2 > lo2):
        raise ValueError(f"empty angle range: {theta1_range} x {theta2_range}")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    for v in (lo1, hi1, lo2, hi2):
        if abs(v) > HALF_PI:
            raise ValueError(f"range endpoint {v!r} outside [-pi/2, pi/2]")
    t1s = np.linspace(lo1, hi1, resolution)
    t2s = np.linspace(lo2, hi2, resolution)
    return [classify_angles(float(t1), float(t2)) for t1 in t1s for t2 in t2s]


CSV_COLUMNS = ("theta1", "theta2", "a1", "a2", "alpha", "beta", "psi", "kappa", "label")


def region_csv(nodes: Iterable[GridNode], header_lines: Iterable[str] = ()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for node in nodes:
        p = node.params
        if p is None:
            row = [repr(node.theta1), repr(node.theta2)] + ["nan"] * 6 + [node.label]
        else:
            row = [repr(v) for v in (p.theta1, p.theta2, p.a1, p.a2, p.alpha, p.beta, p.psi, p.kappa)]
            row.append(node.label)
        writer.writerow(row)
    return buf.getvalue()
