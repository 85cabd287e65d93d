"""Command-line entry point: ``orbm <subcommand> [flags]``.

Exit codes: 0 success, 1 validation error (including unknown flags), 2 a
verification check failed. Artifacts go to ``--out-dir``, which defaults to
``$ORBM_OUTPUT_DIR`` or the working directory. Every artifact embeds the
fully materialized run configuration and the package version; nothing
time-dependent is written, so equal configs give byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, analytics, coupling, params, sim, verify
from .conformal import MapSpec, Target, transport, wedge_point_on_level
from .drivers import DrivingPath, brownian_driver, cycle_driver
from .reflect_core import ReflectionSpec, solve_path

OUTPUT_ENV = "ORBM_OUTPUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _tol_pair(text: str):
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    return name, float(value)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--theta1", type=float, default=math.pi / 3)
    common.add_argument("--theta2", type=float, default=-math.pi / 6)
    common.add_argument("--seed", type=int, default=1)
    common.add_argument("--dt", type=float, default=1e-4)
    common.add_argument("--horizon", "--T", dest="horizon", type=float, default=None,
                        help="time horizon (default depends on the subcommand)")
    common.add_argument("--replicas", type=int, default=None)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out-dir", default=None,
                        help=f"artifact directory (default ${OUTPUT_ENV} or the working directory)")
    common.add_argument("--tol", type=_tol_pair, action="append", default=[], metavar="NAME=VALUE",
                        help="tolerance override for a named check")

    p = _Parser(prog="orbm", description="Obliquely reflected Brownian motion toolkit.")
    p.add_argument("--version", action="version", version=f"orbm {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("params", parents=[common], help="derived constants and regime label")

    r = sub.add_parser("region", parents=[common], help="labelled angle grid as CSV")
    r.add_argument("--res", type=int, default=64)
    r.add_argument("--theta1-range", type=float, nargs=2, default=list(params.FIG_THETA1_RANGE))
    r.add_argument("--theta2-range", type=float, nargs=2, default=list(params.FIG_THETA2_RANGE))

    f = sub.add_parser("reflect", parents=[common], help="solve the Skorokhod problem for one driver")
    f.add_argument("--driver", default=None, help="driver CSV (t,bx,by); default: Brownian driver of --seed")
    f.add_argument("--cycle", action="store_true", help="use the deterministic amplification-cycle driver")
    f.add_argument("--eta", type=float, default=0.01)
    f.add_argument("--cycles", type=int, default=1)
    f.add_argument("--x0", type=float, nargs=2, default=None)

    s = sub.add_parser("simulate", parents=[common], help="one Euler-Skorokhod trajectory")
    s.add_argument("--drift", choices=[k.value for k in sim.DriftKind], default=sim.DriftKind.NONE.value)
    s.add_argument("--x0", type=float, nargs=2, default=None)
    s.add_argument("--levels", type=float, nargs=2, default=None, help="stop when h leaves (LO, HI)")
    s.add_argument("--bridge", action="store_true", help="bridge-extremum refinement (strip runs)")
    s.add_argument("--transport", choices=[t.value for t in Target], default=None)

    c = sub.add_parser("couple", parents=[common], help="two solutions off one driver")
    c.add_argument("--mode", choices=("cycle", "brownian"), default="cycle")
    c.add_argument("--eta", type=float, default=0.01)
    c.add_argument("--cycles", type=int, default=1)
    c.add_argument("--x0", type=float, nargs=2, default=None)

    v = sub.add_parser("verify", parents=[common], help="run a named verification suite")
    v.add_argument("--suite", choices=verify.SUITES + ("all",), required=True)
    return p


# ------------------------------------------------------------------ helpers


def _out_dir(args) -> Path:
    d = Path(args.out_dir or os.environ.get(OUTPUT_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg["tol"] = {name: value for name, value in args.tol}
    return cfg


def _provenance(args) -> dict:
    return {"config": _config(args), "version": __version__}


def _header(args) -> list[str]:
    return [f"config={json.dumps(_config(args), sort_keys=True)}", f"version={__version__}"]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _write_json(path: Path, payload: dict) -> str:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
    path.write_text(text)
    return text


def _materialize(args, horizon: float, replicas: int | None = None):
    if args.horizon is None:
        args.horizon = horizon
    if args.replicas is None:
        args.replicas = replicas
    if not args.dt > 0 or not args.horizon > 0:
        raise ValueError("--dt and --horizon must be positive")
    if args.threads < 1:
        raise ValueError("--threads must be at least 1")


# -------------------------------------------------------------- subcommands


def cmd_params(args) -> int:
    p = params.derive((args.theta1, args.theta2))
    payload = {"params": p.as_dict(), "regime": params.classify(p).value, **_provenance(args)}
    try:
        payload["constants"] = analytics.constants_table(args.theta1, args.theta2)
    except (ValueError, ZeroDivisionError):
        payload["constants"] = None
    sys.stdout.write(_write_json(_out_dir(args) / "params.json", payload))
    return 0


def cmd_region(args) -> int:
    nodes = params.region_grid(tuple(args.theta1_range), tuple(args.theta2_range), args.res)
    path = _out_dir(args) / "region.csv"
    path.write_text(params.region_csv(nodes, _header(args)))
    counts = {}
    for n in nodes:
        counts[n.label] = counts.get(n.label, 0) + 1
    print(json.dumps({"csv": str(path), "nodes": len(nodes), "labels": counts}, sort_keys=True))
    return 0


def _driver(args) -> DrivingPath:
    if args.driver is not None:
        return DrivingPath.from_csv(Path(args.driver).read_text())
    if args.cycle:
        return cycle_driver(params.derive((args.theta1, args.theta2)), args.eta, n_cycles=args.cycles)
    return brownian_driver(args.seed, args.horizon, args.dt)


def cmd_reflect(args) -> int:
    _materialize(args, horizon=1.0)
    spec = ReflectionSpec.from_angles(args.theta1, args.theta2)
    if args.x0 is None:
        args.x0 = [0.0, 1.0] if args.cycle else [0.5, 0.5]
    drv = _driver(args)
    path = solve_path(drv, args.x0, spec)
    out = _out_dir(args)
    (out / "driver.csv").write_text(drv.to_csv(_header(args)))
    (out / "path.csv").write_text(path.to_csv(_header(args)))
    summary = {"driver_csv": str(out / "driver.csv"), "path_csv": str(out / "path.csv"),
               "steps": len(path.t) - 1, "l_lower": float(path.l_lower[-1]),
               "l_upper": float(path.l_upper[-1]), "final_state": path.states[-1].tolist()}
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_simulate(args) -> int:
    _materialize(args, horizon=1.0)
    kind = sim.DriftKind(args.drift)
    drift = sim.DriftSpec(kind, args.theta1, args.theta2)
    if kind is sim.DriftKind.STRIP_CONDITIONED:
        spec = ReflectionSpec.strip(args.theta1, args.theta2)
        if args.x0 is None:
            args.x0 = [0.0, 0.5 * (spec.y_lo + spec.y_hi)]
        if args.levels is not None or args.transport is not None:
            raise ValueError("--levels and --transport apply to quadrant runs")
    else:
        spec = ReflectionSpec.from_angles(args.theta1, args.theta2)
        if args.x0 is None:
            args.x0 = wedge_point_on_level(1.0, MapSpec(args.theta1, args.theta2)).tolist()
        if args.bridge:
            raise ValueError("--bridge applies to strip runs")
    stop = sim.StopRule(args.horizon, tuple(args.levels) if args.levels else None)
    traj = sim.simulate(args.x0, spec, drift, seed=args.seed, dt=args.dt, stop=stop, bridge=args.bridge)
    out = _out_dir(args)
    (out / "trajectory.csv").write_text(traj.to_csv(_header(args)))
    summary = {"trajectory_csv": str(out / "trajectory.csv"), "stop_reason": traj.stop_reason.value,
               "stop_time": traj.stop_time, "stop_value": traj.stop_value,
               "clipped_steps": traj.clipped_steps, "flags": traj.flags}
    if args.transport is not None:
        tp = transport(traj.path.t, traj.path.states, MapSpec(args.theta1, args.theta2), args.transport,
                       guard_radius=sim.origin_guard(args.dt) if kind is sim.DriftKind.HTRANSFORM else 0.0)
        (out / "transported.csv").write_text(tp.to_csv(_header(args)))
        summary["transported_csv"] = str(out / "transported.csv")
    print(json.dumps(_jsonable(summary), sort_keys=True))
    return 0


def cmd_couple(args) -> int:
    p = params.derive((args.theta1, args.theta2))
    spec = ReflectionSpec.from_angles(args.theta1, args.theta2)
    out = _out_dir(args)
    if args.mode == "cycle":
        _materialize(args, horizon=1.0)
        if args.x0 is None:
            args.x0 = [0.0, 1.0]
        drv = cycle_driver(p, args.eta, n_cycles=args.cycles)
    else:
        _materialize(args, horizon=20.0, replicas=1)
        if args.x0 is None:
            args.x0 = [1.0, 1.0]
        drv = brownian_driver(args.seed, args.horizon, args.dt)
    y0 = (args.x0[0] + args.eta, args.x0[1])
    rep = coupling.run_pair(drv, args.x0, y0, spec)
    gap_path = out / "gap.csv"
    gap_path.write_text(rep.gap_csv(_header(args)))
    payload = {**rep.to_dict(str(gap_path)), "beta": p.beta, "tandem_violations":
               coupling.tandem_violations(rep), **_provenance(args)}
    if args.mode == "brownian":
        g = coupling.stochastic_gap_growth(args.seed, p, args.eta, n_cycles=args.cycles, dt=args.dt,
                                           horizon=args.horizon, x0=tuple(args.x0), n_pairs=args.replicas)
        payload["gap_growth"] = {"cycle_factors": g.cycle_factors,
                                 "log_mean": g.log_mean.to_dict() if g.log_mean else None,
                                 "log_beta": p.rho, "pattern_break_rate": g.pattern_break_rate,
                                 "attempts": g.attempts}
    sys.stdout.write(_write_json(out / "coupling.json", payload))
    return 0


def cmd_verify(args) -> int:
    suites = verify.SUITES if args.suite == "all" else (args.suite,)
    overrides = {name: value for name, value in args.tol}
    unknown_checks = set(overrides)
    results, failed = {}, []
    for suite in suites:
        checks = verify.run_suite(suite, args.theta1, args.theta2, seed=args.seed, dt=args.dt,
                                  replicas=args.replicas, threads=args.threads)
        judged = []
        for chk in checks:
            if chk.name in overrides:
                chk = verify.with_tolerance(chk, overrides[chk.name])
                unknown_checks.discard(chk.name)
            print(chk.line())
            if not chk.passed:
                failed.append(chk.name)
            judged.append(chk.as_dict())
        results[suite] = judged
    if unknown_checks:
        print(f"warning: no check named {', '.join(sorted(unknown_checks))}", file=sys.stderr)
    name = "all" if args.suite == "all" else args.suite
    _write_json(_out_dir(args) / f"verify-{name}.json",
                {"suites": results, "passed": not failed, "failed": failed, **_provenance(args)})
    if failed:
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return 2
    return 0


COMMANDS = {"params": cmd_params, "region": cmd_region, "reflect": cmd_reflect,
            "simulate": cmd_simulate, "couple": cmd_couple, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"orbm: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"orbm: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
