"""Tabulate the p -> 1 family diagnostics for a sweep config.

Usage: python3 scripts/sweep_study.py [--config configs/double_well_sweep.ini]
"""
import argparse
from pathlib import Path

from bvflow.config import RunConfig
from bvflow.family import analyze_family, run_family

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "double_well_sweep.ini"))
    args = ap.parse_args(argv)
    cfg = RunConfig.from_file(args.config)
    spec = cfg.family_spec()
    runs = run_family(spec)
    cand, report = analyze_family(spec, runs)
    print(f"{'h':>3} {'psi':>24} {'slope excess':>14} {'width':>10} {'energy gap':>12}")
    gaps = dict(zip(report.energy.members, report.energy.off_jump_max))
    for i, r in enumerate(r for r in runs if r.ok):
        gap = gaps.get(r.h, float("nan"))
        print(f"{r.h:>3} {r.psi.describe():>24} {report.slope_excess[i]:>14.6g} "
              f"{report.widths[i]:>10.4g} {gap:>12.4g}")
    print("off-jump Cauchy gaps between consecutive members:",
          ", ".join(f"{c:.3g}" for c in report.cauchy_max_off_jump))
    print(f"dissipation liminf margin: {report.liminf.margin:.4g}")
    for j in report.jumps:
        print(f"jump t={j['t']:.6g}: tricost {j['tricost']:.6g}, energy drop {j['energy_drop']:.6g}")
    if report.verdict is not None:
        v = report.verdict
        print(f"BV verdict {'PASS' if v.passed else 'FAIL'}: stability violations "
              f"{len(v.stability.violations)}, EB residual {v.residuals[0]:.4g} "
              f"(scale {v.energy_scale:.4g})")
    else:
        print(f"limit ED residual: {report.limit_ed_residual:.4g}")


if __name__ == "__main__":
    main()
