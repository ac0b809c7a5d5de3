"""Energy-dissipation residual under step halving for the shipped flow configs.

Usage: python3 scripts/refinement_study.py [--levels 3] [--skip allen_cahn_flow]
"""
import argparse
from pathlib import Path

from bvflow.audit import audit_trajectory
from bvflow.config import RunConfig
from bvflow.flow import TimeGrid, run_flow

ROOT = Path(__file__).resolve().parents[1]
FLOWS = ("quadratic_flow", "double_well_flow", "allen_cahn_flow", "marginal_flow")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--skip", nargs="*", default=[])
    args = ap.parse_args(argv)
    print(f"{'config':>18} {'steps':>6} {'max |R|':>12} {'ratio':>7} {'vs pass':>8}")
    for name in FLOWS:
        if name in args.skip:
            continue
        cfg = RunConfig.from_file(ROOT / "configs" / f"{name}.ini")
        sys_, psi = cfg.build_system(), cfg.build_psi()
        u0 = cfg.initial_state(sys_)
        T, n = cfg.values["grid"]["T"], cfg.values["grid"]["steps"]
        prev = None
        for level in range(args.levels):
            m = n * 2 ** level
            rep = audit_trajectory(run_flow(sys_, psi, u0, TimeGrid.uniform(T, m)), psi)
            r = rep.max_abs_residual
            ratio = f"{prev / r:7.3f}" if prev else " " * 7
            print(f"{name:>18} {m:>6} {r:>12.4g} {ratio} {rep.vs_pass_fraction:>8.4f}")
            prev = r


if __name__ == "__main__":
    main()
