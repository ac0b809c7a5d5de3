"""Families of psi_h-gradient flows and their vanishing-viscosity diagnostics."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .audit import ed_residual
from .bvanalysis import BVCurve, BVVerdict, build_bv_curve, validate_bv
from .dissipation import DissipationDomainError, DissipationFunction
from .flow import SolverOptions, StepError, TimeGrid, Trajectory, run_flow, sample_trajectory
from .systems import EvolutionSystem, MetricStructure, _as_state, coercivity_constants
from .transition import tricost

LAWS = ("p_to_one", "eps_to_zero", "p_to_limit")


@dataclass(frozen=True)
class FamilySpec:
    """A dissipation law ``h -> psi_h`` for ``h = 1 .. count`` on a shared system.

    ``p_to_one``
        ``Power(1 + ratio^h)``, limit ``Linear(1)``.
    ``eps_to_zero``
        ``ViscousLinear(ratio^h, p)``, limit ``Linear(1)``.
    ``p_to_limit``
        ``Power(p_limit + ratio^h)``, limit ``Power(p_limit)``.
    """

    system: EvolutionSystem
    grid: TimeGrid
    u0: np.ndarray
    law: str = "p_to_one"
    ratio: float = 0.5
    count: int = 6
    p: float = 2.0
    p_limit: float = 2.0
    options: SolverOptions = field(default_factory=SolverOptions)
    workers: int = 1

    def __post_init__(self):
        if self.law not in LAWS:
            raise ValueError(f"unknown family law {self.law!r}; expected one of {LAWS}")
        if not 0.0 < self.ratio < 1.0:
            raise ValueError("ratio must lie in (0, 1)")
        if int(self.count) < 1:
            raise ValueError("count must be at least 1")
        if self.law == "p_to_limit" and not self.p_limit > 1.0:
            raise ValueError("p_limit must exceed 1")
        object.__setattr__(self, "u0", _as_state(self.u0))

    def member(self, h: int) -> DissipationFunction:
        r = self.ratio ** h
        if self.law == "p_to_one":
            return DissipationFunction.power(1.0 + r)
        if self.law == "eps_to_zero":
            return DissipationFunction.viscous_linear(r, self.p)
        return DissipationFunction.power(self.p_limit + r)

    @property
    def limit(self) -> DissipationFunction:
        if self.law == "p_to_limit":
            return DissipationFunction.power(self.p_limit)
        return DissipationFunction.linear(1.0)

    @property
    def members(self) -> list[int]:
        return list(range(1, int(self.count) + 1))


@dataclass
class MemberRun:
    h: int
    psi: DissipationFunction
    trajectory: Trajectory | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.trajectory is not None


def run_family(spec: FamilySpec) -> list[MemberRun]:
    """One flow per member, in member order; step errors are recorded, not raised."""

    def one(h):
        psi = spec.member(h)
        try:
            return MemberRun(h, psi, run_flow(spec.system, psi, spec.u0, spec.grid, spec.options))
        except StepError as exc:
            return MemberRun(h, psi, None, str(exc))

    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            return list(pool.map(one, spec.members))
    return [one(h) for h in spec.members]


@dataclass
class LimitCandidate:
    bv: BVCurve
    cauchy_gaps: np.ndarray
    members: list[int]
    sampled: list[np.ndarray]


def _resample(traj: Trajectory, times: np.ndarray) -> np.ndarray:
    t = traj.times
    if t.size == times.size and np.array_equal(t, times):
        return np.asarray(traj.states)
    return np.column_stack([np.interp(times, t, traj.states[:, i])
                            for i in range(traj.states.shape[1])])


def pointwise_limit(runs: list[MemberRun], metric: MetricStructure | None = None, times=None,
                    delta_jump: float = 20.0, abs_floor: float | None = None) -> LimitCandidate:
    """Finest successful member as the limit candidate.

    All members are resampled on ``times`` (default: the finest member's
    grid).  ``cauchy_gaps[i, k]`` is the distance between consecutive
    successful members at node ``k``.
    """
    metric = metric or MetricStructure.euclidean()
    good = [r for r in runs if r.ok]
    if not good:
        raise ValueError("no successful family member")
    times = good[-1].trajectory.times if times is None else np.asarray(times, dtype=float)
    sampled = [_resample(r.trajectory, times) for r in good]
    gaps = np.zeros((len(sampled) - 1, times.size))
    for i, (a, b) in enumerate(zip(sampled[:-1], sampled[1:])):
        gaps[i] = [metric.distance(a[k], b[k]) for k in range(times.size)]
    bv = build_bv_curve(times, sampled[-1], metric, delta_jump, abs_floor)
    return LimitCandidate(bv, gaps, [r.h for r in good], sampled)


def slope_excess_measure(traj: Trajectory, f: float, L: float) -> float:
    """Total length of steps whose paired slope bound ``chosen_F[k+1]`` is at least ``f``."""
    if not f > L:
        raise DissipationDomainError(f"threshold f={f} must exceed L={L}")
    mask = np.asarray(traj.chosen_F[1:]) >= f
    return float(np.sum(traj.steps[mask]))


def jump_node_mask(bv: BVCurve, pad: int = 2) -> np.ndarray:
    """Nodes inside a detected jump window widened by ``pad`` steps on each side."""
    mask = np.zeros(bv.times.size, dtype=bool)
    for jr in bv.jumps:
        if jr.start is not None:
            mask[max(0, jr.start - pad):min(mask.size, jr.end + pad + 1)] = True
    return mask


def transition_nodes(times, states, metric: MetricStructure, pad: int = 2,
                     fraction: float = 0.5) -> np.ndarray:
    """Nodes spanned by the steps whose speed is at least ``fraction`` of the peak, padded."""
    U = np.asarray(states).reshape(len(times), -1)
    dt = np.diff(times)
    d = np.array([metric.distance(U[k], U[k + 1]) for k in range(len(dt))])
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(dt > 0, d / np.where(dt > 0, dt, 1.0), np.inf * (d > 0))
    mask = np.zeros(len(times), dtype=bool)
    if s.size == 0 or not np.max(s) > 0:
        return mask
    idx = np.flatnonzero(s >= fraction * np.max(s))
    mask[max(0, idx[0] - pad):min(mask.size, idx[-1] + pad + 2)] = True
    return mask


def _pair_windows(cand: LimitCandidate, metric, pad):
    own = [transition_nodes(cand.bv.times, U, metric, pad) for U in cand.sampled]
    lim = jump_node_mask(cand.bv, pad)
    return [m | lim for m in own]


def _hull(mask):
    out = np.zeros_like(mask)
    idx = np.flatnonzero(mask)
    if idx.size:
        out[idx[0]:idx[-1] + 1] = True
    return out


def _step_mask(times, interval):
    t1, t2 = interval
    return (times[:-1] >= t1 - 1e-14) & (times[1:] <= t2 + 1e-14)


def cauchy_summary(cand: LimitCandidate, metric: MetricStructure, pad: int = 2):
    """Max Cauchy gap per consecutive pair, off and inside the hull of both transition windows."""
    windows = _pair_windows(cand, metric, pad)
    off, ins = [], []
    for i, g in enumerate(cand.cauchy_gaps):
        inside = _hull(windows[i] | windows[i + 1])
        off.append(float(np.max(g[~inside])) if np.any(~inside) else 0.0)
        ins.append(float(np.max(g[inside])) if np.any(inside) else 0.0)
    return off, ins


@dataclass
class LiminfResult:
    margin: float
    member_dissipation: list[float]
    limit_dissipation: float
    jump_cost: float
    jump_capture: list[float]


def dissipation_liminf_check(runs: list[MemberRun], cand: LimitCandidate, sys: EvolutionSystem,
                             limit: DissipationFunction, interval=None, last: int = 2) -> LiminfResult:
    """Margin ``min_h int psi_h(|u_h'|) - [int psi(|u'|) + L Cantor]`` over the last members.

    ``jump_capture`` compares each member's total dissipation
    ``int psi_h + psi_h*`` with the limit's AC dissipation plus jump costs;
    it should approach 0 as the family converges.
    """
    bv = cand.bv
    if interval is None:
        interval = (float(bv.times[0]), float(bv.times[-1]))
    sel = _step_mask(bv.times, interval)
    dt = np.diff(bv.times)
    off = sel & ~bv.jump_steps & (dt > 0)
    limit_diss = float(sum(dt[k] * limit.eval(bv.increments[k] / dt[k]) for k in np.flatnonzero(off)))
    L = limit.growth
    if math.isfinite(L):
        limit_diss += L * bv.var_cantor
    jump = 0.0
    t1, t2 = interval
    for jr in bv.jumps:
        if t1 <= jr.t <= t2:
            jump += tricost(sys, jr.t, jr.u_minus, jr.u_at, jr.u_plus, L) if math.isfinite(L) else 0.0
    good = [r for r in runs if r.ok][-max(1, last):]
    member, capture = [], []
    for r in good:
        tr = r.trajectory
        msel = _step_mask(tr.times, interval)
        d = float(np.sum(tr.steps[msel] * np.array([r.psi.eval(s) for s in tr.speeds[msel]])))
        conj = np.array([r.psi.conjugate(f) for f in tr.chosen_F])
        conj[~np.isfinite(conj)] = 0.0
        c = float(np.sum(tr.steps[msel] * 0.5 * (conj[:-1] + conj[1:])[msel]))
        member.append(d)
        capture.append(d + c - (limit_diss + jump))
    return LiminfResult(min(m - limit_diss for m in member), member, limit_diss, jump, capture)


@dataclass
class EnergyGaps:
    members: list[int]
    gaps: np.ndarray
    off_jump_max: list[float]
    in_jump_max: list[float]

    @property
    def decreasing(self) -> bool:
        return all(b <= a for a, b in zip(self.off_jump_max[:-1], self.off_jump_max[1:]))


def energy_convergence_check(cand: LimitCandidate, sys: EvolutionSystem, pad: int = 2,
                             last: int = 2) -> EnergyGaps:
    """``|E(t, u_h(t)) - E(t, u(t))|`` per node for the ``last`` members preceding the candidate.

    The candidate is the finest member, so its own gap is identically zero
    and is not reported.  Off-jump and in-window maxima are kept apart; the
    window of a member is the union of its fast-transition nodes and the
    candidate's jump windows.
    """
    t = cand.bv.times
    e_lim = np.array([sys.E(t[k], cand.bv.states[k]) for k in range(t.size)])
    windows = _pair_windows(cand, sys.metric, pad)
    pick = list(range(max(0, len(cand.sampled) - 1 - last), len(cand.sampled) - 1))
    gaps = np.zeros((len(pick), t.size))
    for row, i in enumerate(pick):
        U = cand.sampled[i]
        gaps[row] = np.abs(np.array([sys.E(t[k], U[k]) for k in range(t.size)]) - e_lim)
    off, ins = [], []
    for g, i in zip(gaps, pick):
        inside = _hull(windows[i] | windows[-1])
        off.append(float(np.max(g[~inside])) if np.any(~inside) else 0.0)
        ins.append(float(np.max(g[inside])) if np.any(inside) else 0.0)
    return EnergyGaps([cand.members[i] for i in pick], gaps, off, ins)


@dataclass
class AssumptionReport:
    c1_passed: bool
    c1_a: float | None
    c1_b: float | None
    c1_witness: tuple
    c3_note: str
    c4_passed: bool
    c4_worst: float
    equi_integrability: list[float]

    @property
    def passed(self) -> bool:
        return self.c1_passed and self.c4_passed


def assumption_spotcheck(spec: FamilySpec, runs: list[MemberRun] | None = None,
                         samples: int = 400, seed: int = 0) -> AssumptionReport:
    """Sampled checks of the coercivity, continuity and power-integrability assumptions.

    Coercivity searches ``a < L``, ``b >= 0`` with ``E + a d(u, u0) + b >= 0``.
    Continuity samples ``|E(t, u + d) - E(t, u)|`` for shrinking ``d`` and
    requires the differences to shrink.  Equi-integrability is reported as
    ``max_k tau_k [P_k]_+`` per member.
    """
    sys = spec.system
    growth = spec.limit.growth
    ok1, a, b, wit = coercivity_constants(sys, spec.u0, growth, samples=2000, seed=seed)
    rng = np.random.default_rng(seed)
    n = sys.dimension
    worst = 0.0
    ok4 = True
    for _ in range(samples):
        t = rng.uniform(0.0, sys.horizon)
        u = spec.u0 + rng.uniform(-2.0, 2.0, n)
        direction = rng.standard_normal(n)
        e0 = sys.E(t, u)
        diffs = [abs(sys.E(t, u + eps * direction) - e0) for eps in (1e-2, 1e-4, 1e-6)]
        if not all(math.isfinite(d) for d in diffs) or not diffs[2] <= diffs[1] <= diffs[0] + 1e-12:
            ok4 = False
        worst = max(worst, diffs[2])
    equi = []
    for r in runs or []:
        if r.ok:
            tr = r.trajectory
            pos = np.maximum(tr.powers, 0.0)
            equi.append(float(np.max(tr.steps * np.maximum(pos[:-1], pos[1:]))))
    return AssumptionReport(ok1, a, b, wit, "fixed metric for all members; satisfied", ok4,
                            worst, equi)


def transition_width(traj: Trajectory, fraction: float = 0.5) -> float:
    """Total duration of steps whose speed is at least ``fraction`` of the peak speed."""
    s = np.asarray(traj.speeds)
    if s.size == 0 or s.max() <= 0:
        return 0.0
    return float(np.sum(traj.steps[s >= fraction * s.max()]))


@dataclass
class ConvergenceReport:
    law: str
    members: list[int]
    statuses: list[str]
    limit_psi: str
    slope_excess: list[float]
    slope_excess_f: float
    widths: list[float]
    cauchy_max_off_jump: list[float]
    cauchy_max_in_jump: list[float]
    energy: EnergyGaps
    liminf: LiminfResult
    assumptions: AssumptionReport
    jumps: list[dict]
    variation: tuple[float, float, float, float, float]
    verdict: BVVerdict | None
    limit_ed_residual: float | None
    absolutely_continuous: bool

    def to_keyvalue(self) -> list[tuple[str, object]]:
        kv: list[tuple[str, object]] = [
            ("law", self.law),
            ("limit_psi", self.limit_psi),
            ("members", ",".join(map(str, self.members))),
            ("member_status", ",".join(self.statuses)),
            ("slope_excess_f", self.slope_excess_f),
        ]
        for h, m, w in zip(self.members, self.slope_excess, self.widths):
            kv.append((f"slope_excess_h{h}", m))
            kv.append((f"transition_width_h{h}", w))
        for i, (a, b) in enumerate(zip(self.cauchy_max_off_jump, self.cauchy_max_in_jump)):
            kv.append((f"cauchy_off_jump_{self.members[i]}_{self.members[i + 1]}", a))
            kv.append((f"cauchy_in_jump_{self.members[i]}_{self.members[i + 1]}", b))
        for h, a, b in zip(self.energy.members, self.energy.off_jump_max, self.energy.in_jump_max):
            kv.append((f"energy_gap_off_jump_h{h}", a))
            kv.append((f"energy_gap_in_jump_h{h}", b))
        kv.append(("liminf_margin", self.liminf.margin))
        kv.append(("liminf_limit_dissipation", self.liminf.limit_dissipation))
        kv.append(("liminf_jump_cost", self.liminf.jump_cost))
        kv.append(("liminf_jump_capture", ",".join(f"{c:.15g}" for c in self.liminf.jump_capture)))
        a = self.assumptions
        kv += [("c1_passed", a.c1_passed), ("c1_a", "none" if a.c1_a is None else a.c1_a),
               ("c1_b", "none" if a.c1_b is None else a.c1_b), ("c3", a.c3_note),
               ("c4_passed", a.c4_passed), ("c4_worst_difference", a.c4_worst),
               ("equi_integrability", ",".join(f"{v:.15g}" for v in a.equi_integrability) or "none")]
        total, ac, cantor, jump, clamp = self.variation
        kv += [("variation_total", total), ("var_ac", ac), ("var_cantor", cantor),
               ("var_jump", jump), ("cantor_clamp", clamp), ("jump_count", len(self.jumps))]
        for i, j in enumerate(self.jumps):
            kv += [(f"jump{i}_t", j["t"]), (f"jump{i}_tricost", j["tricost"]),
                   (f"jump{i}_energy_drop", j["energy_drop"])]
        kv.append(("absolutely_continuous", self.absolutely_continuous))
        if self.verdict is not None:
            v = self.verdict
            kv += [("stability_violations", len(v.stability.violations)),
                   ("stability_max_slope", v.stability.max_slope),
                   ("eb_energy_scale", v.energy_scale), ("eb_tolerance", v.tolerance),
                   ("eb_residual_whole", v.residuals[0]),
                   ("eb_max_abs_residual", max(abs(r) for r in v.residuals)),
                   ("ed_one_sided_max", v.one_sided_max),
                   ("bv_verdict", "PASS" if v.passed else "FAIL")]
        if self.limit_ed_residual is not None:
            kv.append(("limit_ed_max_abs_residual", self.limit_ed_residual))
        kv.append(("note", "full-sequence trend reported; subsequential behaviour not distinguished"))
        return kv

    def to_text(self) -> str:
        lines = [f"family law {self.law}, limit {self.limit_psi}, members {self.members}"]
        for h, s in zip(self.members, self.statuses):
            lines.append(f"  member h={h}: {s}")
        if self.absolutely_continuous:
            lines.append("limit is absolutely continuous; jump set empty")
        else:
            lines.append(f"limit has {len(self.jumps)} detected jump(s)")
            for j in self.jumps:
                lines.append(f"  jump at t={j['t']:.6g}: tricost {j['tricost']:.6g}, "
                             f"energy drop {j['energy_drop']:.6g}")
        if self.verdict is not None:
            lines.append(f"BV verdict: {'PASS' if self.verdict.passed else 'FAIL'}")
        lines.append("detected jumps are recorded with both one-sided limits, so the pointwise "
                     "and essential jump sets coincide for them")
        lines.append("")
        lines += [f"{k} = {_fmt(v)}" for k, v in self.to_keyvalue()]
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".15g")
    return str(v)


def analyze_family(spec: FamilySpec, runs: list[MemberRun], *, slope_margin: float = 0.1,
                   delta_jump: float = 20.0, abs_floor: float | None = None, tol_stab: float = 0.05,
                   eb_rel_tol: float = 0.05, depth: int = 3, pad: int = 2):
    """Full post-processing of a family run: limit candidate, diagnostics and verdict."""
    sys = spec.system
    limit = spec.limit
    L = limit.growth
    cand = pointwise_limit(runs, sys.metric, None, delta_jump, abs_floor)
    bv = cand.bv
    statuses = ["ok" if r.ok else f"failed: {r.error}" for r in runs]
    good = [r for r in runs if r.ok]
    f = (L + slope_margin) if math.isfinite(L) else math.inf
    excess = [slope_excess_measure(r.trajectory, f, L) if math.isfinite(L) else 0.0 for r in good]
    widths = [transition_width(r.trajectory) for r in good]
    c_off, c_in = cauchy_summary(cand, sys.metric, pad)
    energy = energy_convergence_check(cand, sys, pad)
    liminf = dissipation_liminf_check(runs, cand, sys, limit)
    assumptions = assumption_spotcheck(spec, runs)
    jumps = []
    for jr in bv.jumps:
        cost = tricost(sys, jr.t, jr.u_minus, jr.u_at, jr.u_plus, L) if math.isfinite(L) else \
            math.nan
        drop = sys.E(jr.t, jr.u_minus) - sys.E(jr.t, jr.u_plus)
        jumps.append({"t": jr.t, "u_minus": jr.u_minus, "u_at": jr.u_at, "u_plus": jr.u_plus,
                      "tricost": cost, "energy_drop": drop})
    verdict = None
    ed = None
    if math.isfinite(L):
        verdict = validate_bv(sys, bv, limit, None, tol_stab, eb_rel_tol, depth, pad)
    else:
        grid = TimeGrid(bv.times)
        ed = ed_residual(sample_trajectory(sys, limit, grid, bv.states), limit).max_abs_residual
    report = ConvergenceReport(
        spec.law, [r.h for r in good], statuses, limit.describe(), excess,
        f, widths, c_off, c_in, energy, liminf, assumptions, jumps,
        (bv.variation_total, bv.var_ac, bv.var_cantor, bv.var_jump, bv.cantor_clamp),
        verdict, ed, not bv.jumps)
    return cand, report

