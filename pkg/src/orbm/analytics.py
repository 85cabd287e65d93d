"""Closed forms for the strip's vertical diffusion ``dY = cot(Y) dt + dW``.

Scale ``S(x) = -cot x``, speed density ``m(x) = sin(x)**2`` (so ``S' m = 1``),
on the interval ``[a, b] = [pi/2 - theta1, pi/2 + theta2]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .params import DegenerateAngleError, derive

HALF_PI = math.pi / 2


@dataclass(frozen=True)
class StripInterval:
    a: float
    b: float

    def __post_init__(self):
        if not (0.0 < self.a < self.b < math.pi):
            raise ValueError(f"need 0 < a < b < pi, got a={self.a!r}, b={self.b!r}")

    @classmethod
    def from_angles(cls, theta1: float, theta2: float) -> "StripInterval":
        _check_angles(theta1, theta2)
        return cls(HALF_PI - theta1, HALF_PI + theta2)


def _check_angles(theta1, theta2):
    if not (abs(theta1) < HALF_PI and abs(theta2) < HALF_PI):
        raise DegenerateAngleError("angles must lie in (-pi/2, pi/2)")
    if not theta1 + theta2 > 0.0:
        raise DegenerateAngleError(f"theta1 + theta2 = {theta1 + theta2!r} must be positive")


def _open_unit(x):
    x = np.asarray(x, dtype=float)
    if np.any((x <= 0.0) | (x >= math.pi)):
        raise ValueError("argument must lie in (0, pi)")
    return x


def scale_function(x):
    """``S(x) = -cot x`` on ``(0, pi)``."""
    x = _open_unit(x)
    out = -np.cos(x) / np.sin(x)
    return float(out) if out.ndim == 0 else out


def scale_derivative(x):
    x = _open_unit(x)
    out = 1.0 / np.sin(x) ** 2
    return float(out) if out.ndim == 0 else out


def speed_density(x):
    """``m(x) = 1 / (sigma**2 S'(x)) = sin(x)**2``."""
    x = _open_unit(x)
    out = np.sin(x) ** 2
    return float(out) if out.ndim == 0 else out


def _cot_diff(a, x):
    """``cot a - cot x = sin(x - a) / (sin a sin x)``, free of cancellation for x near a."""
    return np.sin(x - a) / (np.sin(a) * np.sin(x))


def hit_prob(x, interval: StripInterval):
    """``P_x(T_b < T_a) = (S(x) - S(a)) / (S(b) - S(a))``."""
    x = np.asarray(x, dtype=float)
    if np.any((x < interval.a) | (x > interval.b)):
        raise ValueError("x outside [a, b]")
    out = _cot_diff(interval.a, x) / _cot_diff(interval.a, interval.b)
    return float(out) if out.ndim == 0 else out


def exit_law_up(theta1: float, theta2: float) -> float:
    """Excursion-law mass of paths from the lower face that reach the upper face.

    Equals ``1 / (cos(theta1)**2 (tan theta1 + tan theta2))``.
    """
    _check_angles(theta1, theta2)
    return 1.0 / (math.cos(theta1) ** 2 * (math.tan(theta1) + math.tan(theta2)))


def exit_law_down(theta1: float, theta2: float) -> float:
    """Mirror of :func:`exit_law_up`: ``1 / (cos(theta2)**2 (tan theta1 + tan theta2))``."""
    _check_angles(theta1, theta2)
    return 1.0 / (math.cos(theta2) ** 2 * (math.tan(theta1) + math.tan(theta2)))


def exit_law_up_trig(theta1: float, theta2: float) -> float:
    """``1 / (sin(a)**2 (cot a - cot b))`` in interval coordinates."""
    iv = StripInterval.from_angles(theta1, theta2)
    return 1.0 / (math.sin(iv.a) ** 2 * (1.0 / math.tan(iv.a) - 1.0 / math.tan(iv.b)))


def exit_law_down_trig(theta1: float, theta2: float) -> float:
    iv = StripInterval.from_angles(theta1, theta2)
    return 1.0 / (math.sin(iv.b) ** 2 * (1.0 / math.tan(iv.a) - 1.0 / math.tan(iv.b)))


def exit_law_up_quotient(theta1: float, theta2: float, delta: float) -> float:
    """Difference quotient ``p(a + delta) / delta``; first-order accurate in delta.

    ``S(a + delta) - S(a)`` is taken as ``sin(delta) / (sin a sin(a + delta))`` so
    the rounding of ``a + delta`` never enters the numerator.
    """
    iv = StripInterval.from_angles(theta1, theta2)
    num = math.sin(delta) / (math.sin(iv.a) * math.sin(iv.a + delta))
    return num / (float(_cot_diff(iv.a, iv.b)) * delta)


def exit_law_down_quotient(theta1: float, theta2: float, delta: float) -> float:
    """``(1 - p(b - delta)) / delta``, the lower-exit probability from just below b."""
    iv = StripInterval.from_angles(theta1, theta2)
    num = math.sin(delta) / (math.sin(iv.b - delta) * math.sin(iv.b))
    return num / (float(_cot_diff(iv.a, iv.b)) * delta)


def exit_law_up_limit(theta1: float, theta2: float, delta: float = 1e-6) -> float:
    """Richardson-extrapolated limit ``2 f(delta) - f(2 delta)``, error O(delta**2)."""
    return 2.0 * exit_law_up_quotient(theta1, theta2, delta) - exit_law_up_quotient(theta1, theta2, 2 * delta)


def exit_law_down_limit(theta1: float, theta2: float, delta: float = 1e-6) -> float:
    return 2.0 * exit_law_down_quotient(theta1, theta2, delta) - exit_law_down_quotient(theta1, theta2, 2 * delta)


@dataclass(frozen=True)
class ExitTimes:
    down_to_up: float
    up_to_down: float

    @property
    def cycle(self) -> float:
        return self.down_to_up + self.up_to_down


def expected_exit_time_legs(theta1: float, theta2: float) -> ExitTimes:
    """Mean duration of the lower-to-upper and upper-to-lower legs of the reflected vertical process.

    Each leg is the exit time of the diffusion reflected at its start face:
    ``2 int_a^b (S(b) - S(y)) m(y) dy`` and ``2 int_a^b (S(y) - S(a)) m(y) dy``.
    """
    _check_angles(theta1, theta2)
    t1, t2 = theta1, theta2
    opening = t1 + t2
    d2u = opening * math.tan(t2) + math.sin(t1) ** 2 + math.sin(t1) * math.cos(t1) * math.tan(t2)
    u2d = opening * math.tan(t1) + math.sin(t2) ** 2 + math.tan(t1) * math.sin(t2) * math.cos(t2)
    return ExitTimes(d2u, u2d)


def expected_exit_time_quad(theta1: float, theta2: float, tol: float = 1e-10) -> ExitTimes:
    """The same leg expectations by adaptive quadrature of the integral formulas."""
    iv = StripInterval.from_angles(theta1, theta2)
    a, b = iv.a, iv.b
    sa, sb = -1.0 / math.tan(a), -1.0 / math.tan(b)

    def up(y):
        return 2.0 * (sb + math.cos(y) / math.sin(y)) * math.sin(y) ** 2

    def down(y):
        return 2.0 * (-math.cos(y) / math.sin(y) - sa) * math.sin(y) ** 2

    d2u, _ = integrate.quad(up, a, b, epsabs=tol, epsrel=tol)
    u2d, _ = integrate.quad(down, a, b, epsabs=tol, epsrel=tol)
    return ExitTimes(d2u, u2d)


def local_time_per_leg(theta1: float, theta2: float) -> tuple[float, float]:
    """Mean local time on the lower and upper faces per leg (exponential means)."""
    return 1.0 / exit_law_up(theta1, theta2), 1.0 / exit_law_down(theta1, theta2)


def local_time_term(theta1: float, theta2: float) -> float:
    """Mean horizontal push per cycle: ``-(a1 cos^2 theta1 + a2 cos^2 theta2)(a1 + a2)``."""
    _check_angles(theta1, theta2)
    a1, a2 = math.tan(theta1), math.tan(theta2)
    return -(a1 * math.cos(theta1) ** 2 + a2 * math.cos(theta2) ** 2) * (a1 + a2)


def mean_cycle_displacement(theta1: float, theta2: float) -> float:
    """``1/kappa = (theta1 + theta2)(tan theta1 + tan theta2)``."""
    _check_angles(theta1, theta2)
    return (theta1 + theta2) * (math.tan(theta1) + math.tan(theta2))


def displacement_decomposition(theta1: float, theta2: float) -> dict:
    lt = local_time_term(theta1, theta2)
    e = expected_exit_time_legs(theta1, theta2).cycle
    return {"local_time_term": lt, "e_cycle": e, "sum": lt + e,
            "closed_form": mean_cycle_displacement(theta1, theta2)}


def constants_table(theta1: float, theta2: float) -> dict:
    """Every closed form for one angle pair, with the cross-check forms next to them."""
    p = derive((theta1, theta2))
    iv = StripInterval.from_angles(theta1, theta2)
    legs = expected_exit_time_legs(theta1, theta2)
    quad = expected_exit_time_quad(theta1, theta2)
    dec = displacement_decomposition(theta1, theta2)
    lt_low, lt_up = local_time_per_leg(theta1, theta2)
    return {
        "theta1": theta1,
        "theta2": theta2,
        "params": p.as_dict(),
        "interval": {"a": iv.a, "b": iv.b},
        "exit_law_up": exit_law_up(theta1, theta2),
        "exit_law_up_trig": exit_law_up_trig(theta1, theta2),
        "exit_law_up_limit": exit_law_up_limit(theta1, theta2),
        "exit_law_down": exit_law_down(theta1, theta2),
        "exit_law_down_trig": exit_law_down_trig(theta1, theta2),
        "exit_law_down_limit": exit_law_down_limit(theta1, theta2),
        "e_down_to_up": legs.down_to_up,
        "e_up_to_down": legs.up_to_down,
        "e_cycle": legs.cycle,
        "e_down_to_up_quad": quad.down_to_up,
        "e_up_to_down_quad": quad.up_to_down,
        "mean_local_time_lower": lt_low,
        "mean_local_time_upper": lt_up,
        "local_time_term": dec["local_time_term"],
        "mean_cycle_displacement": dec["closed_form"],
        "kappa": p.kappa,
    }


def constants_json(theta1: float, theta2: float) -> str:
    return json.dumps(constants_table(theta1, theta2), indent=2, sort_keys=True)
