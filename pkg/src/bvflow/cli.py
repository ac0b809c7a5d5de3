"""Command-line front end.

Exit codes: 0 success, 2 solver failure, 3 bad configuration or input.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from .audit import audit_trajectory, chain_rule_check
from .bvanalysis import build_bv_curve, validate_bv
from .config import ConfigError, RunConfig
from .family import analyze_family, run_family
from .flow import StepError, TimeGrid, run_flow, sample_trajectory
from .records import (CSVFormatError, fmt, keyvalue_text, read_samples_csv, write_jumps_csv,
                      write_keyvalue, write_samples_csv, write_trajectory_csv)
from .systems import ConstraintError, MetricError
from .transition import bicost_result, tricost

EXIT_OK, EXIT_SOLVER, EXIT_INPUT = 0, 2, 3
OUT_ENV = "BVFLOW_OUT"


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _floats(text: str) -> np.ndarray:
    try:
        vals = np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None
    if vals.size == 0 or not np.all(np.isfinite(vals)):
        raise argparse.ArgumentTypeError(f"expected finite numbers, got {text!r}")
    return vals


def _load(args) -> RunConfig:
    if args.config is None:
        return RunConfig.defaults()
    return RunConfig.from_file(args.config)


def _outdir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo(cfg: RunConfig, out: Path | None):
    text = cfg.echo()
    print("# effective configuration")
    print(text, end="")
    if out is not None:
        (out / "effective_config.ini").write_text(text, encoding="utf-8")


def _audit_pairs(report, ed_tol):
    pairs = report.to_keyvalue()
    pairs.append(("ed_tol", ed_tol))
    pairs.append(("ed_within_tol", abs(float(report.residuals[-1])) <= ed_tol))
    return pairs


def cmd_flow(args) -> int:
    cfg = _load(args)
    out = _outdir(args)
    _echo(cfg, out)
    system, psi = cfg.build_system(), cfg.build_psi()
    traj = run_flow(system, psi, cfg.initial_state(system), cfg.build_grid(), cfg.solver_options())
    so = cfg.values["solver"]
    report = audit_trajectory(traj, psi, so["tol_vs"])
    write_trajectory_csv(out / "trajectory.csv", traj, report, cfg.precision)
    write_keyvalue(out / "audit.txt", _audit_pairs(report, so["ed_tol"]), cfg.precision)
    print(f"final ed_residual = {fmt(float(report.residuals[-1]), cfg.precision)}")
    print(f"wrote {out / 'trajectory.csv'} and {out / 'audit.txt'}")
    return EXIT_OK


def cmd_audit(args) -> int:
    cfg = _load(args)
    out = _outdir(args)
    _echo(cfg, out)
    system, psi = cfg.build_system(), cfg.build_psi()
    so = cfg.values["solver"]
    if args.trajectory is None:
        traj = run_flow(system, psi, cfg.initial_state(system), cfg.build_grid(),
                        cfg.solver_options())
    else:
        times, states = read_samples_csv(args.trajectory, system.dimension)
        try:
            grid = TimeGrid(times)
        except ValueError as exc:
            raise InputError(f"{args.trajectory}: {exc}") from None
        traj = sample_trajectory(system, psi, grid, states)
    report = audit_trajectory(traj, psi, so["tol_vs"])
    report.chain_rule_margin = chain_rule_check(system, traj.times, traj.states, traj.chosen_F)
    pairs = _audit_pairs(report, so["ed_tol"])
    write_keyvalue(out / "audit.txt", pairs, cfg.precision)
    print(keyvalue_text(pairs, cfg.precision), end="")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    out = _outdir(args)
    _echo(cfg, out)
    spec = cfg.family_spec()
    runs = run_family(spec)
    failed = [r for r in runs if not r.ok]
    for r in runs:
        print(f"member h={r.h} {r.psi.describe()}: {'ok' if r.ok else 'failed: ' + r.error}")
    if failed and (args.strict or len(failed) == len(runs)):
        print(f"error: {len(failed)} member(s) failed", file=sys.stderr)
        return EXIT_SOLVER
    so = cfg.values["solver"]
    for r in runs:
        if r.ok:
            rep = audit_trajectory(r.trajectory, r.psi, so["tol_vs"])
            write_trajectory_csv(out / f"member_h{r.h}.csv", r.trajectory, rep, cfg.precision)
    b = cfg.values["bv"]
    cand, report = analyze_family(
        spec, runs, slope_margin=cfg.values["family"]["slope_margin"], delta_jump=b["delta_jump"],
        abs_floor=b["abs_floor"], tol_stab=b["tol_stab"], eb_rel_tol=b["eb_tol"],
        depth=b["dyadic_depth"], pad=b["window_pad"])
    write_samples_csv(out / "limit_bv.csv", cand.bv.times, cand.bv.states, cfg.precision)
    write_jumps_csv(out / "jumps.csv", report.jumps, spec.system.dimension, cfg.precision)
    (out / "convergence_report.txt").write_text(report.to_text(), encoding="utf-8")
    write_keyvalue(out / "convergence_report.kv", report.to_keyvalue(), cfg.precision)
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_jumpcost(args) -> int:
    cfg = _load(args)
    _echo(cfg, None)
    system = cfg.build_system()
    n = system.dimension

    def state(v, name):
        if v.size == 1 and n > 1:
            v = np.full(n, v[0])
        if v.shape != (n,):
            raise InputError(f"--{name} needs {n} entries")
        return v

    u0, u1 = state(args.u0, "u0"), state(args.u1, "u1")
    if not args.L > 0 or not math.isfinite(args.L):
        raise InputError("--L must be positive and finite")
    opts = dict(M=args.M, starts=args.starts, seed=cfg.values["solver"]["seed"])
    if args.via is not None:
        via = state(args.via, "via")
        value = tricost(system, args.t, u0, via, u1, args.L, **opts)
        gap, certified, method = 0.0, True, "tricost"
    else:
        res = bicost_result(system, args.t, u0, u1, args.L, **opts)
        value, gap, certified, method = res.value, res.gap, res.certified, res.method
    p = cfg.precision
    print(f"value = {fmt(value, p)}")
    print(f"gap = {fmt(gap, p)}")
    print(f"certified = {fmt(bool(certified))}")
    print(f"method = {method}")
    return EXIT_OK


def cmd_validate_bv(args) -> int:
    cfg = _load(args)
    _echo(cfg, None)
    system = cfg.build_system()
    psi = cfg.validation_psi()
    if not math.isfinite(psi.growth):
        raise InputError("BV validation needs a dissipation with finite growth")
    times, states = read_samples_csv(args.bv, system.dimension)
    b = cfg.values["bv"]
    bv = build_bv_curve(times, states, system.metric, b["delta_jump"], b["abs_floor"])
    verdict = validate_bv(system, bv, psi, None, b["tol_stab"], b["eb_tol"], b["dyadic_depth"],
                          b["window_pad"])
    p = cfg.precision
    print(f"jumps = {len(bv.jumps)}")
    for jr in bv.jumps:
        print(f"jump t = {fmt(jr.t, p)}")
    print(f"stability_violations = {len(verdict.stability.violations)}")
    for t in verdict.stability.violations:
        print(f"  violation t = {fmt(t, p)}")
    print(f"energy_scale = {fmt(verdict.energy_scale, p)}")
    print(f"tolerance = {fmt(verdict.tolerance, p)}")
    for (t1, t2), r in zip(verdict.intervals, verdict.residuals):
        flag = "ok" if abs(r) <= verdict.tolerance else "FAIL"
        print(f"eb [{fmt(t1, p)}, {fmt(t2, p)}] residual = {fmt(r, p)} {flag}")
    print(f"ed_one_sided_max = {fmt(verdict.one_sided_max, p)}")
    print(f"verdict = {'PASS' if verdict.passed else 'FAIL'}")
    if args.strict and not verdict.passed:
        return 1
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="run configuration file")
    common.add_argument("--out", default=argparse.SUPPRESS,
                        help=f"output directory (default: ${OUT_ENV} or ./out)")
    common.add_argument("--strict", action="store_true", default=argparse.SUPPRESS,
                        help="treat member failures or a FAIL verdict as errors")
    parser = _Parser(prog="bvflow", parents=[common],
                     description="Generalized gradient flows, families and BV limits.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("flow", parents=[common], help="run one flow and audit it")
    p.set_defaults(func=cmd_flow)
    p = sub.add_parser("sweep", parents=[common], help="run a family and analyse its limit")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("audit", parents=[common], help="audit a flow or a sampled curve")
    p.add_argument("--trajectory", help="CSV with columns t,u_0,... (default: run the flow)")
    p.set_defaults(func=cmd_audit)
    p = sub.add_parser("jumpcost", parents=[common], help="transition cost between two states")
    p.add_argument("--t", type=float, required=True, help="frozen time")
    p.add_argument("--u0", type=_floats, required=True, help="start state, comma separated")
    p.add_argument("--u1", type=_floats, required=True, help="end state, comma separated")
    p.add_argument("--via", type=_floats, help="pinned intermediate state (tricost)")
    p.add_argument("--L", type=float, required=True, help="growth constant")
    p.add_argument("--M", type=int, default=64, help="path nodes")
    p.add_argument("--starts", type=int, default=8, help="optimizer starts")
    p.set_defaults(func=cmd_jumpcost)
    p = sub.add_parser("validate-bv", parents=[common], help="check a sampled curve is a BV solution")
    p.add_argument("bv", help="CSV with columns t,u_0,...")
    p.set_defaults(func=cmd_validate_bv)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    for name, default in (("config", None), ("out", None), ("strict", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    try:
        return args.func(args)
    except StepError as exc:
        print(f"error: solver failed at {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, CSVFormatError, InputError, MetricError, ConstraintError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
