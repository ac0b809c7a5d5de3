"""Sampled BV curves: variation, jump detection, decomposition, BV-solution checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dissipation import DissipationFunction
from .systems import ConstraintError, EvolutionSystem, MetricStructure
from .transition import jump_total


@dataclass(frozen=True)
class JumpRecord:
    """A detected jump at time ``t``.

    ``u_at`` is the left sample of the jump window.  ``start``/``end`` are
    the sample indices bracketing the window (``None`` for hand-made records).
    """

    t: float
    u_minus: np.ndarray
    u_at: np.ndarray
    u_plus: np.ndarray
    start: int | None = None
    end: int | None = None


@dataclass
class BVCurve:
    times: np.ndarray
    states: np.ndarray
    metric: MetricStructure
    jumps: list[JumpRecord] = field(default_factory=list)
    increments: np.ndarray | None = None
    variation_total: float = 0.0
    var_ac: float = 0.0
    var_cantor: float = 0.0
    var_jump: float = 0.0
    cantor_clamp: float = 0.0

    @property
    def jump_steps(self) -> np.ndarray:
        """Boolean mask over steps: True where the step belongs to a jump window."""
        mask = np.zeros(self.times.size - 1, dtype=bool)
        for jr in self.jumps:
            if jr.start is not None:
                mask[jr.start:jr.end] = True
        return mask

    @property
    def speeds(self) -> np.ndarray:
        """Step-constant speed samples (``nan`` on zero-length steps)."""
        dt = np.diff(self.times)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(dt > 0, self.increments / np.where(dt > 0, dt, 1.0), np.nan)


def _increments(states, metric):
    return np.array([metric.distance(states[k], states[k + 1]) for k in range(len(states) - 1)])


def total_variation(states, metric: MetricStructure | None = None) -> float:
    """Partition sum of distances between consecutive samples."""
    metric = metric or MetricStructure.euclidean()
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    if states.shape[0] < 2:
        raise ValueError("need at least two samples")
    return float(np.sum(_increments(states, metric)))


def state_scale(states) -> float:
    m = float(np.max(np.abs(states))) if np.size(states) else 0.0
    return m if m > 0 else 1.0


def detect_jumps(times, states, metric: MetricStructure | None = None, delta_jump: float = 20.0,
                 abs_floor: float | None = None, merge_gap: int = 2) -> list[JumpRecord]:
    """Flag steps whose increment exceeds ``delta_jump`` times the median increment.

    A step is flagged when it is also above ``abs_floor`` (default
    ``1e-3 * state scale``); zero-duration steps with a positive increment
    are always jumps.  Flagged runs separated by at most ``merge_gap`` steps
    form one jump window; ``u_minus``/``u_plus`` are the samples at the
    window ends and ``u_at`` is the left one.
    """
    metric = metric or MetricStructure.euclidean()
    t = np.asarray(times, dtype=float)
    U = np.asarray(states, dtype=float).reshape(t.size, -1)
    d = _increments(U, metric)
    if d.size == 0:
        return []
    floor = 1e-3 * state_scale(U) if abs_floor is None else abs_floor
    med = float(np.median(d))
    dt = np.diff(t)
    flagged = ((d > delta_jump * med) & (d > floor)) | ((dt == 0) & (d > 0))
    idx = np.flatnonzero(flagged)
    windows = []
    for k in idx:
        if windows and k - windows[-1][1] <= merge_gap:
            windows[-1][1] = k + 1
        else:
            windows.append([k, k + 1])
    return [JumpRecord(float(t[a]), U[a].copy(), U[a].copy(), U[b].copy(), int(a), int(b))
            for a, b in windows]


def decompose(bv: BVCurve) -> tuple[float, float, float]:
    """Split the variation into absolutely continuous, Cantor and jump parts.

    The jump part sums ``d(u-, u) + d(u, u+)`` over jumps; the AC part
    integrates the step speeds off the jump windows; the Cantor part is the
    remainder clamped at zero (the clamp size is kept in ``cantor_clamp``).
    """
    if bv.increments is None:
        bv.increments = _increments(bv.states, bv.metric)
    bv.variation_total = float(np.sum(bv.increments))
    var_jump = 0.0
    for jr in bv.jumps:
        var_jump += bv.metric.distance(jr.u_minus, jr.u_at) + bv.metric.distance(jr.u_at, jr.u_plus)
    var_ac = float(np.sum(bv.increments[~bv.jump_steps]))
    rest = bv.variation_total - var_ac - var_jump
    bv.cantor_clamp = max(0.0, -rest)
    bv.var_ac, bv.var_jump, bv.var_cantor = var_ac, var_jump, max(0.0, rest)
    return bv.var_ac, bv.var_cantor, bv.var_jump


def build_bv_curve(times, states, metric: MetricStructure | None = None, delta_jump: float = 20.0,
                   abs_floor: float | None = None, detect: bool = True) -> BVCurve:
    metric = metric or MetricStructure.euclidean()
    t = np.asarray(times, dtype=float)
    if np.any(np.diff(t) < 0):
        raise ValueError("sample times must be nondecreasing")
    U = np.asarray(states, dtype=float).reshape(t.size, -1)
    jumps = detect_jumps(t, U, metric, delta_jump, abs_floor) if detect else []
    bv = BVCurve(t, U, metric, jumps, _increments(U, metric))
    decompose(bv)
    return bv


def _window_mask(bv: BVCurve, pad: int) -> np.ndarray:
    """Node mask of samples exempt from stability (jump windows padded by ``pad``)."""
    mask = np.zeros(bv.times.size, dtype=bool)
    for jr in bv.jumps:
        if jr.start is None:
            continue
        mask[max(0, jr.start - pad):min(bv.times.size, jr.end + pad + 1)] = True
    return mask


@dataclass
class StabilityReport:
    violations: list[float]
    max_slope: float
    checked: int

    @property
    def passed(self) -> bool:
        return not self.violations


def local_stability_check(sys: EvolutionSystem, bv: BVCurve, L: float, tol_stab: float = 0.05,
                          pad: int = 2) -> StabilityReport:
    """Check ``F(t, u(t)) <= L + tol_stab`` at samples outside the jump windows."""
    exempt = _window_mask(bv, pad)
    bad, worst, checked = [], 0.0, 0
    for k in np.flatnonzero(~exempt):
        F = sys.slope(bv.times[k], bv.states[k])
        worst = max(worst, F)
        checked += 1
        if F > L + tol_stab:
            bad.append(float(bv.times[k]))
    return StabilityReport(bad, worst, checked)


@dataclass
class BalanceTerms:
    residual: float
    energy_end: float
    energy_start: float
    dissipation: float
    conjugate: float
    cantor: float
    jumps: float
    work: float

    @property
    def scale(self) -> float:
        return (abs(self.energy_end) + abs(self.energy_start) + abs(self.dissipation)
                + abs(self.conjugate) + abs(self.cantor) + abs(self.jumps) + abs(self.work))


def _index_interval(times, interval):
    t1, t2 = interval
    k1 = int(np.searchsorted(times, t1, side="left"))
    k2 = min(int(np.searchsorted(times, t2, side="left")), times.size - 1)
    return k1, k2


def energy_balance_terms(sys: EvolutionSystem, bv: BVCurve, psi: DissipationFunction,
                         chosen_F=None, interval=None) -> BalanceTerms:
    """All terms of the BV energy balance on ``[t1, t2]`` and its residual.

    residual = E(t2) + int psi(|u'|) + int psi*(F) + L Cantor + jump costs
    - E(t1) - int P, with step-constant speeds off the jump windows and the
    trapezoid rule for ``psi*`` and ``P``.  For ``psi(v) = L v`` the ``psi*``
    term is dropped (stability is checked separately).
    """
    t, U = bv.times, bv.states
    if interval is None:
        interval = (t[0], t[-1])
    k1, k2 = _index_interval(t, interval)
    L = psi.growth
    if not math.isfinite(L):
        raise ValueError("the BV energy balance needs a dissipation with linear growth")
    slopes = np.array([sys.slope(t[k], U[k]) for k in range(t.size)])
    F = slopes if chosen_F is None else np.asarray(chosen_F, dtype=float)
    if np.any(F < slopes - 1e-9 * (1.0 + slopes)):
        k = int(np.argmax(slopes - F))
        raise ConstraintError(f"chosen_F below the slope at sample {k}")
    jmask = bv.jump_steps
    exempt = _window_mask(bv, 0)
    rate_independent = psi.family == "linear" or (psi.family == "viscous_linear" and psi.eps == 0)
    if not rate_independent:
        on_jump = exempt & (F > L + 1e-9)
        if np.any(on_jump):
            raise ConstraintError("chosen_F exceeds L on a jump window")
    dt = np.diff(t)
    diss = conj = work = cantor = 0.0
    P = np.array([sys.power(t[k], U[k], F[k]) for k in range(k1, k2 + 1)])
    for k in range(k1, k2):
        j = k - k1
        work += 0.5 * dt[k] * (P[j] + P[j + 1])
        if jmask[k] or dt[k] == 0:
            continue
        s = bv.increments[k] / dt[k]
        diss += dt[k] * psi.eval(s)
        if not rate_independent:
            conj += 0.5 * dt[k] * (psi.conjugate(F[k]) + psi.conjugate(F[k + 1]))
    for jr in bv.jumps:
        if jr.start is None:
            continue
        lo, hi = max(jr.start, k1), min(jr.end, k2)
        if lo < hi:
            inner = float(np.sum(bv.increments[lo:hi]))
            if lo == jr.start:
                chord = (bv.metric.distance(jr.u_minus, jr.u_at)
                         + bv.metric.distance(jr.u_at, U[hi]))
            else:
                chord = bv.metric.distance(U[lo], U[hi])
            cantor += max(0.0, inner - chord)
    jumps = jump_total(sys, bv, L, (t[k1], t[k2]))
    e1, e2 = sys.E(t[k1], U[k1]), sys.E(t[k2], U[k2])
    res = e2 + diss + conj + L * cantor + jumps - e1 - work
    return BalanceTerms(res, e2, e1, diss, conj, L * cantor, jumps, work)


def energy_balance_check(sys: EvolutionSystem, bv: BVCurve, psi: DissipationFunction,
                         chosen_F=None, interval=None) -> float:
    """Residual of the BV energy balance on ``interval`` (see ``energy_balance_terms``)."""
    return energy_balance_terms(sys, bv, psi, chosen_F, interval).residual


def dyadic_intervals(t0: float, t1: float, depth: int) -> list[tuple[float, float]]:
    out = []
    for level in range(depth + 1):
        n = 2 ** level
        edges = np.linspace(t0, t1, n + 1)
        out.extend((float(a), float(b)) for a, b in zip(edges[:-1], edges[1:]))
    return out


@dataclass
class BVVerdict:
    stability: StabilityReport
    intervals: list[tuple[float, float]]
    residuals: list[float]
    tolerance: float
    energy_scale: float
    one_sided_max: float

    @property
    def balance_ok(self) -> bool:
        return all(abs(r) <= self.tolerance for r in self.residuals)

    @property
    def one_sided_ok(self) -> bool:
        return self.one_sided_max <= self.tolerance

    @property
    def passed(self) -> bool:
        return self.stability.passed and self.balance_ok

    def failing_intervals(self):
        return [(iv, r) for iv, r in zip(self.intervals, self.residuals) if abs(r) > self.tolerance]


def validate_bv(sys: EvolutionSystem, bv: BVCurve, psi: DissipationFunction, chosen_F=None,
                tol_stab: float = 0.05, eb_rel_tol: float = 0.05, depth: int = 3,
                pad: int = 2) -> BVVerdict:
    """Local stability plus the energy balance on all dyadic sub-intervals.

    Balance residuals are compared with ``eb_rel_tol`` times the energy scale
    of the whole interval (sum of the magnitudes of all balance terms).  The
    one-sided ED form is reported through ``one_sided_max``: the largest
    residual over the intervals ``[0, t]`` at the dyadic endpoints.
    """
    L = psi.growth
    stab = local_stability_check(sys, bv, L, tol_stab, pad)
    t0, t1 = float(bv.times[0]), float(bv.times[-1])
    whole = energy_balance_terms(sys, bv, psi, chosen_F, (t0, t1))
    scale = whole.scale
    tol = eb_rel_tol * scale
    ivs = dyadic_intervals(t0, t1, depth)
    res = [energy_balance_check(sys, bv, psi, chosen_F, iv) for iv in ivs]
    ends = sorted({b for _, b in ivs})
    one_sided = max(energy_balance_check(sys, bv, psi, chosen_F, (t0, b)) for b in ends)
    return BVVerdict(stab, ivs, res, tol, scale, one_sided)
