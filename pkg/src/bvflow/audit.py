"""Energy-dissipation audits along instrumented trajectories."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dissipation import DissipationFunction
from .flow import Trajectory
from .systems import ConstraintError, EvolutionSystem

QUADRATURE_TAG = "trapezoid(nodes: psi*, P) + step-constant speed(psi)"


@dataclass
class AuditReport:
    residuals: np.ndarray
    max_abs_residual: float
    min_residual: float
    infinite_conjugate_nodes: list[int] = field(default_factory=list)
    vs_violations: int = 0
    vs_checked: int = 0
    vs_max_gap: float = 0.0
    vs_pass_fraction: float = 1.0
    chain_rule_margin: float | None = None
    quadrature: str = QUADRATURE_TAG

    def to_keyvalue(self) -> list[tuple[str, object]]:
        return [
            ("ed_max_abs_residual", self.max_abs_residual),
            ("ed_min_residual", self.min_residual),
            ("ed_final_residual", float(self.residuals[-1])),
            ("ed_infinite_conjugate_nodes", ",".join(map(str, self.infinite_conjugate_nodes)) or "none"),
            ("vs_checked_nodes", self.vs_checked),
            ("vs_violations", self.vs_violations),
            ("vs_max_gap", self.vs_max_gap),
            ("vs_pass_fraction", self.vs_pass_fraction),
            ("chain_rule_margin", "not_computed" if self.chain_rule_margin is None else self.chain_rule_margin),
            ("quadrature", self.quadrature),
            ("slope_bound_checked", "nodes_only"),
        ]


def ed_residual(traj: Trajectory, psi: DissipationFunction) -> AuditReport:
    """Cumulative psi-psi* energy-dissipation residual at every node.

    ``R_k = e_k - e_0 + sum_{j<k} tau_j [psi(s_j) + (psi*(F_j) + psi*(F_{j+1}))/2
    - (p_j + p_{j+1})/2]``.  Nodes where ``psi*`` is infinite contribute
    nothing and are listed in ``infinite_conjugate_nodes``.
    """
    taus = traj.steps
    conj = np.array([psi.conjugate(f) for f in traj.chosen_F])
    bad = [int(k) for k in np.flatnonzero(~np.isfinite(conj))]
    conj[~np.isfinite(conj)] = 0.0
    diss = np.array([psi.eval(s) for s in traj.speeds])
    e, p = traj.energies, traj.powers
    incr = (e[1:] - e[:-1]) + taus * diss + 0.5 * taus * (conj[:-1] + conj[1:]) \
        - 0.5 * taus * (p[:-1] + p[1:])
    R = np.concatenate([[0.0], np.cumsum(incr)])
    return AuditReport(R, float(np.max(np.abs(R))), float(np.min(R)), bad)


def velocity_slope_check(traj: Trajectory, psi: DissipationFunction, tol_vs: float = 1e-6,
                         report: AuditReport | None = None) -> AuditReport:
    """Check ``chosen_F[k+1]`` lies in the subdifferential at ``speeds[k]``.

    Interior nodes ``k = 1 .. N-1`` are checked with tolerance
    ``tol_vs * (1 + s)``; results are written into ``report`` (or a fresh one).
    """
    gaps = []
    for k in range(1, len(traj.speeds)):
        s = float(traj.speeds[k - 1])
        lo, hi = psi.subdifferential(s)
        f = float(traj.chosen_F[k])
        gap = max(lo - f, f - hi, 0.0)
        gaps.append(gap / (1.0 + s))
    gaps = np.array(gaps)
    if report is None:
        report = ed_residual(traj, psi)
    viol = int(np.sum(gaps > tol_vs)) if gaps.size else 0
    report.vs_checked = int(gaps.size)
    report.vs_violations = viol
    report.vs_max_gap = float(gaps.max()) if gaps.size else 0.0
    report.vs_pass_fraction = 1.0 - viol / gaps.size if gaps.size else 1.0
    return report


def audit_trajectory(traj: Trajectory, psi: DissipationFunction, tol_vs: float = 1e-6) -> AuditReport:
    return velocity_slope_check(traj, psi, tol_vs, ed_residual(traj, psi))


def chain_rule_check(sys: EvolutionSystem, times, states, F_choice=None) -> float:
    """Worst chain-rule margin over node sub-intervals of a time-ordered curve.

    For ``alpha < beta`` the margin is ``E(q(beta)) + int F |u'| - E(q(alpha))
    - int P t'`` (trapezoid on nodes); the minimum over all node pairs is
    returned.  ``F_choice`` defaults to the slope and may not lie below it.
    """
    t = np.asarray(times, dtype=float)
    U = np.asarray(states, dtype=float).reshape(t.size, sys.dimension)
    if np.any(np.diff(t) < 0):
        raise ValueError("curve must be time ordered")
    slopes = np.array([sys.slope(t[k], U[k]) for k in range(t.size)])
    if F_choice is None:
        F = slopes
    else:
        F = np.broadcast_to(np.asarray(F_choice, dtype=float), slopes.shape)
        tol = 1e-12 * (1.0 + slopes)
        if np.any(F < slopes - tol):
            k = int(np.argmax(slopes - F))
            raise ConstraintError(f"F_choice below the slope at node {k}")
    P = np.array([sys.power(t[k], U[k], F[k]) for k in range(t.size)])
    E = np.array([sys.E(t[k], U[k]) for k in range(t.size)])
    d = np.array([sys.metric.distance(U[k], U[k + 1]) for k in range(t.size - 1)])
    diss = np.concatenate([[0.0], np.cumsum(0.5 * (F[:-1] + F[1:]) * d)])
    work = np.concatenate([[0.0], np.cumsum(0.5 * (P[:-1] + P[1:]) * np.diff(t))])
    C = E + diss - work
    # min over alpha < beta of C[beta] - C[alpha]
    running_max = np.maximum.accumulate(C[:-1])
    return float(np.min(C[1:] - running_max))

