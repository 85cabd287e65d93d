"""Named verification suites: each check compares an estimate with a target at a tolerance."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import analytics, coupling, sim
from .conformal import MapSpec, to_wedge
from .drivers import brownian_driver, cycle_driver
from .params import HALF_PI, Regime, classify, classify_angles, derive, psi_exceeds_inverse_alpha
from .reflect_core import Pattern, ReflectionSpec, feasible_patterns, one_step_reflect
from .rng import replica_seed

DEFAULT_ANGLES = (math.pi / 3, -math.pi / 6)
REGION_EXCLUDED = (7 * math.pi / 16, -math.pi / 8)
REGION_INCLUDED = (3 * math.pi / 8 - 0.05, -3 * math.pi / 8 + 0.10)


@dataclass
class Check:
    name: str
    target: float
    estimate: float
    tolerance: float
    kind: str  # "abs", "rel", "z", "max", "min" or "equal"
    passed: bool
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict} {self.name}: estimate={self.estimate!r} target={self.target!r} "
                f"tol={self.tolerance!r} ({self.kind})")


def _abs(name, target, estimate, tol, **detail):
    ok = bool(abs(estimate - target) <= tol)
    return Check(name, target, estimate, tol, "abs", ok, detail)


def _rel(name, target, estimate, tol, **detail):
    ok = bool(abs(estimate - target) <= tol * abs(target))
    return Check(name, target, estimate, tol, "rel", ok, detail)


def _z(name, target, report: sim.McReport, tol=4.0, **detail):
    z = report.z_score(target)
    detail = dict(detail, std_error=report.std_error, z=z, n=report.n_replicas, flags=report.flags)
    return Check(name, target, report.estimate, tol, "z", bool(abs(z) <= tol), detail)


def _rel_mc(name, target, report: sim.McReport, tol, **detail):
    detail = dict(detail, std_error=report.std_error, n=report.n_replicas, flags=report.flags)
    return _rel(name, target, report.estimate, tol, **detail)


# ------------------------------------------------------------- angle samplers


def _open_uniform(gen, lo, hi, size):
    x = gen.uniform(lo, hi, size)
    return np.clip(x, np.nextafter(lo, hi), np.nextafter(hi, lo))


def random_angle_pairs(n: int, seed: int = 0) -> np.ndarray:
    """Pairs in ``(-pi/2, pi/2)**2`` with ``theta1 + theta2 > 0``."""
    gen = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        t = _open_uniform(gen, -HALF_PI, HALF_PI, (2 * n, 2))
        t = t[t.sum(axis=1) > 1e-6]
        out.extend(t.tolist())
    return np.asarray(out[:n])


def random_mixed_sign(n: int, seed: int = 0) -> list[tuple[float, float]]:
    gen = np.random.default_rng(seed)
    t1 = _open_uniform(gen, 0.0, HALF_PI - 0.05, n)
    t2 = _open_uniform(gen, -HALF_PI + 0.05, 0.0, n)
    return list(zip(t1.tolist(), t2.tolist()))


def random_beta_below_one(n: int, seed: int = 0) -> list[tuple[float, float]]:
    gen = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        t1, t2 = _open_uniform(gen, -HALF_PI + 0.05, HALF_PI - 0.05, 2).tolist()
        if abs(math.tan(t1) * math.tan(t2)) < 1.0 and t1 + t2 != 0.0:
            out.append((t1, t2))
    return out


def random_theorem_region(n: int, seed: int = 0) -> list[tuple[float, float]]:
    gen = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        t1 = float(_open_uniform(gen, math.pi / 4, HALF_PI - 0.05, 1)[0])
        t2 = float(_open_uniform(gen, -HALF_PI + 0.05, 0.0, 1)[0])
        if classify_angles(t1, t2).label == Regime.THEOREM_REGION.value:
            out.append((t1, t2))
    return out


# --------------------------------------------------------- deterministic suites


def identities_suite(n_pairs: int = 10_000, seed: int = 0) -> list[Check]:
    pairs = random_angle_pairs(n_pairs, seed)
    checks = []

    rho_err, mismatches, dec_err = 0.0, 0, 0.0
    for t1, t2 in pairs:
        p = derive((float(t1), float(t2)))
        if p.beta > 0.0:
            rho_err = max(rho_err, abs(p.rho - math.log(p.beta)))
        direct = p.psi > 1.0 / p.alpha
        if direct != psi_exceeds_inverse_alpha(p):
            mismatches += 1
        d = analytics.displacement_decomposition(float(t1), float(t2))
        dec_err = max(dec_err, abs(d["sum"] - d["closed_form"]) / max(1.0, abs(d["closed_form"])))
    checks.append(Check("rho_equals_log_beta", 0.0, rho_err, 1e-12, "max", rho_err <= 1e-12,
                        {"pairs": n_pairs}))
    checks.append(Check("psi_inverse_alpha_equivalence", 0.0, float(mismatches), 0.0, "equal",
                        mismatches == 0, {"pairs": n_pairs}))
    checks.append(Check("displacement_decomposition", 0.0, dec_err, 1e-12, "max", dec_err <= 1e-12,
                        {"pairs": n_pairs, "scale": "relative to max(1, |1/kappa|)"}))

    t1, t2 = DEFAULT_ANGLES
    iv = analytics.StripInterval.from_angles(t1, t2)
    y = np.linspace(iv.a, iv.b, 1001)
    sm = float(np.max(np.abs(analytics.scale_derivative(y) * analytics.speed_density(y) - 1.0)))
    checks.append(Check("scale_speed_product", 0.0, sm, 1e-12, "max", sm <= 1e-12, {}))

    edge_err = 0.0
    for t1, t2 in pairs[:1000]:
        m = MapSpec(float(t1), float(t2))
        w = to_wedge(np.array([[1.0, 0.0], [0.0, 1.0]]), m)
        ang = np.arctan2(w[:, 1], w[:, 0])
        edge_err = max(edge_err, abs(m.lower_edge_angle - (HALF_PI - t1)),
                       abs(ang[0] - (HALF_PI - t1)), abs(ang[1] - (HALF_PI + t2)))
    edge_err = float(edge_err)
    checks.append(Check("wedge_edge_angles", 0.0, edge_err, 4e-15, "max", edge_err <= 4e-15,
                        {"pairs": 1000, "note": "float images of the unit points on each face"}))

    ex = classify(derive(REGION_EXCLUDED))
    inc = classify(derive(REGION_INCLUDED))
    checks.append(Check("region_example_excluded", 0.0, float(ex is Regime.THEOREM_REGION), 0.0,
                        "equal", ex is not Regime.THEOREM_REGION, {"angles": REGION_EXCLUDED, "label": ex.value}))
    checks.append(Check("region_example_included", 1.0, float(inc is Regime.THEOREM_REGION), 0.0,
                        "equal", inc is Regime.THEOREM_REGION, {"angles": REGION_INCLUDED, "label": inc.value}))
    return checks


def _random_instances(gen, n):
    """States spread over the interior, both faces and the corner, with Gaussian moves."""
    kind = gen.integers(0, 4, n)
    states = gen.exponential(0.5, (n, 2))
    states[kind == 1, 1] = 0.0
    states[kind == 2, 0] = 0.0
    states[kind == 3] = 0.0
    return states, gen.normal(0.0, 1.0, (n, 2))


def lcp_suite(n_instances: int = 100_000, n_draws: int = 20, seed: int = 0) -> list[Check]:
    """Unique feasible pattern and complementarity residuals over random one-step instances.

    The instances are split evenly over ``n_draws`` mixed-sign and
    ``n_draws`` beta < 1 parameter draws.
    """
    draws = random_mixed_sign(n_draws, seed) + random_beta_below_one(n_draws, seed + 1)
    gen = np.random.default_rng(seed + 2)
    per = -(-n_instances // len(draws))
    not_unique, worst, total = 0, 0.0, 0
    for t1, t2 in draws:
        spec = ReflectionSpec.from_angles(t1, t2)
        states, moves = _random_instances(gen, per)
        for s, d in zip(states.tolist(), moves.tolist()):
            pats = feasible_patterns(s, d, spec)
            step = one_step_reflect(s, d, spec)
            total += 1
            if len(pats) != 1 or pats[0] is not step.pattern:
                not_unique += 1
            px, py = step.post_state
            wx, wy = s[0] + d[0], s[1] + d[1]
            rx = wx + step.dm_lower * spec.v_lower[0] + step.dm_upper * spec.v_upper[0] - px
            ry = wy + step.dm_lower * spec.v_lower[1] + step.dm_upper * spec.v_upper[1] - py
            ql, qu = spec.normal_coords(px, py)
            res = max(abs(rx), abs(ry), max(0.0, -ql), max(0.0, -qu),
                      abs(step.dm_lower * ql), abs(step.dm_upper * qu),
                      max(0.0, -step.dm_lower), max(0.0, -step.dm_upper))
            worst = max(worst, res)
    detail = {"instances": total, "parameter_draws": len(draws)}
    return [
        Check("unique_feasible_pattern", 0.0, float(not_unique), 0.0, "equal", not_unique == 0, detail),
        Check("complementarity_residual", 0.0, worst, 1e-10, "max", worst < 1e-10, detail),
    ]


def cycle_factor_suite(n_draws: int = 20, eta: float = 0.01, seed: int = 0) -> list[Check]:
    """Stage factors ``|a2|`` then ``a1``, cycle factor beta and two-cycle beta**2 on the cycle driver.

    Factors are compared relative to their targets, so steep angles with
    large beta get the same tolerance as moderate ones.
    """
    draws = [REGION_INCLUDED] + random_theorem_region(n_draws, seed)
    stage_err, cyc_err, two_err, orient, breaks = 0.0, 0.0, 0.0, True, 0
    for t1, t2 in draws:
        p = derive((t1, t2))
        spec = ReflectionSpec.from_angles(t1, t2)
        one = coupling.run_pair(cycle_driver(p, eta), (0.0, 1.0), (eta, 1.0), spec)
        two = coupling.run_pair(cycle_driver(p, eta, n_cycles=2), (0.0, 1.0), (eta, 1.0), spec)
        f = one.factors
        if len(f) != 2 or len(one.cycle_factors) != 1 or two.cycle_factor is None:
            breaks += 1
            continue
        stage_err = max(stage_err, abs(f[0] / -p.a2 - 1.0), abs(f[1] / p.a1 - 1.0))
        cyc_err = max(cyc_err, abs(one.cycle_factor / p.beta - 1.0))
        two_err = max(two_err, abs(two.cycle_factor / p.beta**2 - 1.0))
        orient = orient and one.orientation_ok and two.orientation_ok
        breaks += len(one.breaks) + len(two.breaks)
    detail = {"draws": len(draws), "eta": eta}
    return [
        Check("stage_factors", 0.0, stage_err, 1e-9, "max", stage_err <= 1e-9, detail),
        Check("cycle_factor_beta", 0.0, cyc_err, 1e-9, "max", cyc_err <= 1e-9, detail),
        Check("two_cycles_beta_squared", 0.0, two_err, 1e-8, "max", two_err <= 1e-8, detail),
        Check("orientation_and_no_breaks", 0.0, float(breaks), 0.0, "equal",
              orient and breaks == 0, dict(detail, orientation_ok=orient)),
    ]


# ----------------------------------------------------------------- MC suites


def exit_law_suite(theta1=DEFAULT_ANGLES[0], theta2=DEFAULT_ANGLES[1], n: int = 100_000,
                   seed: int = 1, dt: float = 1e-4, delta: float = 0.01, tol: float = 0.05,
                   threads: int = 1) -> list[Check]:
    target = analytics.exit_law_up(theta1, theta2)
    rep = sim.exit_law_mc(theta1, theta2, delta, n, seed, dt, threads)
    return [_rel_mc("exit_law_up", target, rep, tol, delta=delta)]


def strip_result(theta1=DEFAULT_ANGLES[0], theta2=DEFAULT_ANGLES[1], n: int = 1000, seed: int = 1,
                 dt: float = 1e-4, cycles: int = 10, windows: int = 10,
                 threads: int = 1) -> sim.StripCycleResult:
    return sim.strip_cycle_mc(theta1, theta2, n=n, seed_base=seed, dt=dt, cycles=cycles,
                              windows=windows, threads=threads)


def exit_time_checks(res: sim.StripCycleResult, theta1=DEFAULT_ANGLES[0], theta2=DEFAULT_ANGLES[1],
                     tol: float = 0.05) -> list[Check]:
    legs = analytics.expected_exit_time_legs(theta1, theta2)
    return [_rel_mc("exit_time_down_to_up", legs.down_to_up, res.down_to_up, tol),
            _rel_mc("exit_time_up_to_down", legs.up_to_down, res.up_to_down, tol)]


def displacement_checks(res: sim.StripCycleResult, theta1=DEFAULT_ANGLES[0], theta2=DEFAULT_ANGLES[1],
                        tol: float = 0.05) -> list[Check]:
    target = analytics.mean_cycle_displacement(theta1, theta2)
    lt = analytics.local_time_per_leg(theta1, theta2)[0]
    return [_rel_mc("cycle_displacement", target, res.displacement, tol),
            _rel_mc("lower_local_time_per_leg", lt, res.local_time_lower, tol)]


def kappa_checks(res: sim.StripCycleResult, theta1=DEFAULT_ANGLES[0], theta2=DEFAULT_ANGLES[1],
                 tol: float = 0.10) -> list[Check]:
    kappa = derive((theta1, theta2)).kappa
    lo, hi = res.window_discrepancy
    bound = max(abs(lo), abs(hi))
    return [_rel_mc("excursion_rate_kappa", kappa, res.kappa_rate, tol),
            Check("window_count_discrepancy", 1.0, float(bound), 0.0, "max", bound <= 1,
                  {"range": [lo, hi], "windows": res.n_windows})]


def martingale_suite(theta1=DEFAULT_ANGLES[0], theta2=DEFAULT_ANGLES[1], n: int = 10_000,
                     seed: int = 1, dt: float = 1e-4, tol: float = 4.0, threads: int = 1) -> list[Check]:
    rep, h0 = sim.martingale_mc(theta1, theta2, n=n, seed_base=seed, dt=dt, threads=threads)
    return [_z("stopped_h_mean", h0, rep, tol)]


def hitting_law_suite(theta1=DEFAULT_ANGLES[0], theta2=DEFAULT_ANGLES[1], a: float = 0.9, b: float = 1.0,
                      n: int = 10_000, seed: int = 1, dt: float = 1e-4, tol: float = 4.0,
                      threads: int = 1) -> list[Check]:
    rep = sim.hitting_law_mc(theta1, theta2, a, b, n=n, seed_base=seed, dt=dt, threads=threads)
    return [_z("h_transform_hitting_law", a / b, rep, tol, a=a, b=b)]


def refinement_suite(seed: int = 1, n_drivers: int = 32, dt: float = 1e-3) -> list[Check]:
    """Refinement distances for a beta < 1 pair, and bitwise-identical coupled paths from one start."""
    spec = ReflectionSpec.from_angles(math.pi / 6, -math.pi / 12)
    d = coupling.mean_refinement_distances(spec, (0.3, 0.3), seed, n_drivers, dt, 1.0, 4)
    decreasing = all(b < a for a, b in zip(d[:-1], d[1:]))
    checks = [Check("refinement_distance_decreases", 1.0, float(decreasing), 0.0, "equal", decreasing,
                    {"mean_sup_distances": d, "dt": dt, "drivers": n_drivers})]
    regimes = {"TheoremRegion": REGION_INCLUDED, "PathwiseUnique": (math.pi / 6, -math.pi / 12),
               "Transient": (math.pi / 6, -math.pi / 3), "NotSemimartingale": (math.pi / 3, math.pi / 8),
               "UnresolvedMixedSign": (7 * math.pi / 16, -math.pi / 8)}
    worst = 0.0
    for k, (t1, t2) in enumerate(regimes.values()):
        drv = brownian_driver(replica_seed(seed, k), 2.0, dt)
        rep = coupling.run_pair(drv, (0.2, 0.3), (0.2, 0.3), ReflectionSpec.from_angles(t1, t2))
        worst = max(worst, float(np.max(np.abs(rep.gap))))
    checks.append(Check("identical_starts_zero_gap", 0.0, worst, 0.0, "equal", worst == 0.0,
                        {"regimes": list(regimes)}))
    return checks


SUITES = ("identities", "lcp", "cycle-factor", "exit-law", "exit-time", "displacement",
          "martingale", "hitting-law", "kappa-rate", "refinement")


def with_tolerance(check: Check, tol: float) -> Check:
    """The same check re-judged at tolerance ``tol``."""
    err = abs(check.estimate - check.target)
    if check.kind == "rel":
        ok = err <= tol * abs(check.target)
    elif check.kind == "z":
        ok = abs(check.detail["z"]) <= tol
    elif check.kind == "max":
        ok = check.estimate <= tol
    else:
        ok = err <= tol
    return Check(check.name, check.target, check.estimate, tol, check.kind, bool(ok),
                 dict(check.detail, tolerance_override=True))


def run_suite(suite: str, theta1=DEFAULT_ANGLES[0], theta2=DEFAULT_ANGLES[1], *, seed: int = 1,
              dt: float = 1e-4, replicas: int | None = None, threads: int = 1) -> list[Check]:
    """Run one named suite; ``replicas=None`` keeps the suite's own default size."""
    kw = {} if replicas is None else {"n": replicas}
    if suite == "identities":
        return identities_suite()
    if suite == "lcp":
        return lcp_suite()
    if suite == "cycle-factor":
        return cycle_factor_suite()
    if suite == "refinement":
        return refinement_suite(seed)
    if suite == "exit-law":
        return exit_law_suite(theta1, theta2, seed=seed, dt=dt, threads=threads, **kw)
    if suite == "martingale":
        return martingale_suite(theta1, theta2, seed=seed, dt=dt, threads=threads, **kw)
    if suite == "hitting-law":
        return hitting_law_suite(theta1, theta2, seed=seed, dt=dt, threads=threads, **kw)
    if suite in ("exit-time", "displacement", "kappa-rate"):
        res = strip_result(theta1, theta2, seed=seed, dt=dt, threads=threads, **kw)
        fn = {"exit-time": exit_time_checks, "displacement": displacement_checks,
              "kappa-rate": kappa_checks}[suite]
        return fn(res, theta1, theta2)
    raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
