"""Time discretization of psi-gradient flows.

The primary integrator is the minimizing movement scheme

    u_{k+1} in argmin_u  tau psi(|u - u_k|_{u_k} / tau) + E(t_{k+1}, u),

solved locally (descent from ``u_k``): a ray search along the steepest
descent direction finds the first local minimizer on that ray, and in more
than one dimension damped Newton iterations on the full functional polish it.
An explicit stepper solving ``psi'(|v|) = F`` is provided as a cross-check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .dissipation import DissipationFunction
from .systems import EvolutionSystem, _as_state


class StepError(RuntimeError):
    """Inner solver failure; carries the step index and diagnostics."""

    def __init__(self, message: str, index: int | None = None, diagnostics: dict | None = None):
        super().__init__(message)
        self.index = index
        self.diagnostics = diagnostics or {}

    def __str__(self):
        base = super().__str__()
        return base if self.index is None else f"step {self.index}: {base}"


@dataclass(frozen=True)
class TimeGrid:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a time grid needs at least two nodes")
        if nodes[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("time grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, T: float, steps: int) -> "TimeGrid":
        if not T > 0 or int(steps) < 1:
            raise ValueError("need T > 0 and steps >= 1")
        return cls(np.linspace(0.0, float(T), int(steps) + 1))

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    def __len__(self):
        return self.nodes.size


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 200
    multistart: int = 4
    seed: int = 0
    method: str = "minimizing_movement"


@dataclass(frozen=True)
class Trajectory:
    """Instrumented discrete flow.

    ``speeds[k]`` is the discrete metric speed on ``[t_k, t_{k+1}]`` (base
    point ``u_k``); ``slopes``, ``chosen_F``, ``energies`` and ``powers`` are
    node values.  In the implicit scheme the optimality condition links the
    speed of step ``k`` with the slope at node ``k + 1``, so ``chosen_F[k+1]``
    is the slope bound paired with ``speeds[k]``.
    """

    grid: TimeGrid
    states: np.ndarray
    speeds: np.ndarray
    slopes: np.ndarray
    chosen_F: np.ndarray
    energies: np.ndarray
    powers: np.ndarray
    iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def steps(self) -> np.ndarray:
        return self.grid.steps

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


# ---------------------------------------------------------------------------
# inner solver

def _ray_search(phi, dphi, rho0, tol, max_expand=400):
    """First local minimizer of ``phi`` on ``rho > 0`` given ``dphi(0+) < 0``."""
    rho_prev, f_prev = 0.0, phi(0.0)
    rho = rho0
    evals = 0
    # shrink the starting trial until the derivative is still negative there
    while dphi(rho) >= 0.0 or phi(rho) > f_prev:
        rho *= 0.125
        evals += 1
        if rho < 1e-300 or evals > 200:
            break
    lo = 0.0
    for _ in range(max_expand):
        evals += 1
        f = phi(rho)
        d = dphi(rho)
        if not (math.isfinite(f) and math.isfinite(d)):
            raise StepError("energy not finite along the descent ray",
                            diagnostics={"rho": rho})
        if d >= 0.0:
            return _polish_root(phi, dphi, rho_prev, rho, tol), evals
        if f > f_prev:
            # the ray went through a valley between the last two trials
            res = minimize_scalar(phi, bounds=(lo, rho), method="bounded",
                                  options={"xatol": 1e-14 * max(1.0, rho)})
            a = float(res.x)
            da = dphi(a)
            if da < 0.0:
                return _polish_root(phi, dphi, a, rho, tol, prefer_low=True), evals
            return _polish_root(phi, dphi, lo, a, tol), evals
        lo, rho_prev, f_prev = rho_prev, rho, f
        rho = rho * 1.5
        if rho > 1e12:
            break
    raise StepError("descent ray did not reach a local minimum (energy unbounded "
                    "below along the ray or step too large)", diagnostics={"rho": rho})


def _polish_root(phi, dphi, a, b, tol, prefer_low=False):
    da, db = dphi(a), dphi(b)
    if da < 0.0 <= db:
        if db == 0.0:
            return b
        return brentq(dphi, a, b, xtol=1e-15 * max(1.0, abs(b)), rtol=4.0 * np.finfo(float).eps,
                      maxiter=500)
    return a if (prefer_low or phi(a) <= phi(b)) else b


def _mm_solve(sys: EvolutionSystem, psi: DissipationFunction, t: float, u_prev: np.ndarray,
              tau: float, opts: SolverOptions):
    """Return ``(u, iterations, residual)`` for one minimizing-movement step."""
    u_prev = _as_state(u_prev)
    metric = sys.metric
    M = metric.matrix(u_prev)
    g0 = sys.dE(t, u_prev)
    F0 = metric.dual_norm(u_prev, g0)
    e_prev = sys.E(t, u_prev)
    if not math.isfinite(e_prev):
        raise StepError("energy not finite at the previous state")
    c0 = psi.right_derivative_at_zero
    if F0 == 0.0 or F0 <= c0:
        return u_prev.copy(), 0, 0.0

    direction = -metric.sharp(u_prev, g0) / F0  # unit in the M-norm

    def phi(rho):
        return tau * psi.eval(rho / tau) + sys.E(t, u_prev + rho * direction)

    def dphi(rho):
        return psi.derivative(rho / tau) + float(sys.dE(t, u_prev + rho * direction) @ direction)

    if psi.superlinear or F0 < psi.growth:
        v_est = psi.inverse_subdifferential(min(F0, np.nextafter(psi.growth, 0)))
        rho0 = tau * v_est if v_est > 0 else 1e-8 * tau
    else:
        rho0 = 1e-6 * (1.0 + float(np.linalg.norm(u_prev)))
    rho0 = min(max(rho0, 1e-300), 1e6 * (1.0 + float(np.linalg.norm(u_prev))))
    rho, evals = _ray_search(phi, dphi, rho0, opts.tol)
    u_seed = u_prev + rho * direction
    if sys.dimension == 1:
        return u_seed, evals, abs(dphi(rho)) if rho > 0 else 0.0

    phi_prev = tau * 0.0 + e_prev
    best = None
    rng = np.random.default_rng(opts.seed)
    seeds = [u_seed]
    scale = 0.25 * rho * np.abs(direction) + 1e-12
    for _ in range(opts.multistart):
        seeds.append(u_seed + scale * rng.standard_normal(u_seed.shape))
    for idx, seed in enumerate(seeds):
        try:
            u, it, res, val = _newton(sys, psi, t, u_prev, M, tau, seed, opts)
        except StepError:
            if idx == 0:
                raise
            continue
        if val <= phi_prev + 1e-12 * (1.0 + abs(phi_prev)):
            if best is None or val < best[3]:
                best = (u, it + evals, res, val)
    if best is None:
        raise StepError("no start decreased the incremental functional")
    return best[0], best[1], best[2]


def _penalty(psi, M, v, tau):
    """Value, gradient and Hessian of ``tau psi(|v|_M / tau)``."""
    Mv = M @ v
    nv = math.sqrt(max(float(v @ Mv), 0.0))
    if nv == 0.0:
        n = v.shape[0]
        return 0.0, np.zeros(n), np.zeros((n, n))
    r = nv / tau
    d1 = psi.derivative(r)
    d2 = psi.second_derivative(r)
    e = Mv / nv
    grad = d1 * e
    hess = (d2 / tau) * np.outer(e, e) + (d1 / nv) * (M - np.outer(e, e))
    return tau * psi.eval(r), grad, hess


def _newton(sys, psi, t, u_prev, M, tau, u, opts):
    metric = sys.metric

    def total(x):
        val, _, _ = _penalty(psi, M, x - u_prev, tau)
        return val + sys.E(t, x)

    f = total(u)
    gscale = 1.0 + metric.dual_norm(u_prev, sys.dE(t, u_prev))
    res = math.inf
    for it in range(opts.max_iter):
        pv, pg, ph = _penalty(psi, M, u - u_prev, tau)
        g = pg + sys.dE(t, u)
        res = metric.dual_norm(u_prev, g) / gscale
        if res <= opts.tol:
            return u, it, res, f
        H = ph + sys.hessian(t, u)
        lam = 0.0
        step = None
        for _ in range(30):
            try:
                C = np.linalg.cholesky(H + lam * M)
                step = -np.linalg.solve(C.T, np.linalg.solve(C, g))
                break
            except np.linalg.LinAlgError:
                lam = max(2.0 * lam, 1e-8 * (1.0 + float(np.abs(H).max())))
        if step is None:
            step = -metric.sharp(u_prev, g)
        slope_dir = float(g @ step)
        if slope_dir >= 0.0:
            step = -metric.sharp(u_prev, g)
            slope_dir = float(g @ step)
        alpha = 1.0
        while True:
            cand = u + alpha * step
            fc = total(cand)
            if fc <= f + 1e-4 * alpha * slope_dir or alpha < 1e-14:
                break
            alpha *= 0.5
        if alpha < 1e-14 and fc > f:
            # stagnation at roundoff level: accept if the residual is tiny
            if res <= 1e3 * opts.tol:
                return u, it, res, f
            break
        u, f = cand, fc
    raise StepError(f"Newton did not converge in {opts.max_iter} iterations",
                    diagnostics={"residual": res})


def minimizing_movement_step(sys: EvolutionSystem, psi: DissipationFunction, t_next: float,
                             u_prev, tau: float, options: SolverOptions | None = None) -> np.ndarray:
    """One step of the minimizing movement scheme (see module docstring)."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    u, _, _ = _mm_solve(sys, psi, t_next, _as_state(u_prev), tau, options or SolverOptions())
    return u


def direct_ode_step(sys: EvolutionSystem, psi: DissipationFunction, t: float, u, tau: float) -> np.ndarray:
    """Explicit Euler step with speed ``(psi')^{-1}(F)`` along steepest descent."""
    u = _as_state(u)
    g = sys.dE(t, u)
    F = sys.metric.dual_norm(u, g)
    if F == 0.0:
        return u.copy()
    if not psi.superlinear:
        raise ValueError("direct_ode_step needs a superlinear dissipation")
    speed = psi.inverse_subdifferential(F)
    return u - tau * speed * sys.metric.sharp(u, g) / F


def _chosen_slope(sys, psi, t, u, slope, speed):
    """Minimal selection of the slope bound paired with ``speed``."""
    if sys.power_mode == "simple":
        return slope
    f_max = psi.growth if math.isfinite(psi.growth) else 10.0 * max(slope, 1.0)
    cands = [slope] + [f for f in sys.power_thresholds(t, u) if slope <= f <= f_max]
    best_f, best_val = slope, math.inf
    for f in cands:
        val = speed * f - sys.power(t, u, f)
        if val < best_val - 1e-15:
            best_f, best_val = f, val
    return best_f


def sample_trajectory(sys: EvolutionSystem, psi: DissipationFunction, grid: TimeGrid, states,
                      iterations=None, residuals=None) -> Trajectory:
    """Instrument an arbitrary sampled curve with speeds, slopes, energies and powers."""
    states = np.asarray(states, dtype=float).reshape(len(grid), sys.dimension)
    t = grid.nodes
    taus = grid.steps
    speeds = np.array([sys.metric.norm(states[k], states[k + 1] - states[k]) / taus[k]
                       for k in range(len(taus))])
    slopes = np.array([sys.slope(t[k], states[k]) for k in range(len(t))])
    chosen = slopes.copy()
    for k in range(1, len(t)):
        chosen[k] = _chosen_slope(sys, psi, t[k], states[k], slopes[k], speeds[k - 1])
    energies = np.array([sys.E(t[k], states[k]) for k in range(len(t))])
    powers = np.array([sys.power(t[k], states[k], chosen[k]) for k in range(len(t))])
    for arr in (states, speeds, slopes, chosen, energies, powers):
        arr.setflags(write=False)
    return Trajectory(grid, states, speeds, slopes, chosen, energies, powers,
                      np.zeros(len(taus), dtype=int) if iterations is None else np.asarray(iterations),
                      np.zeros(len(taus)) if residuals is None else np.asarray(residuals))


def run_flow(sys: EvolutionSystem, psi: DissipationFunction, u0, grid: TimeGrid,
             options: SolverOptions | None = None) -> Trajectory:
    """Integrate the psi-gradient flow from ``u0`` on ``grid``."""
    opts = options or SolverOptions()
    u = _as_state(u0)
    if u.shape != (sys.dimension,):
        raise ValueError(f"initial state has shape {u.shape}, expected ({sys.dimension},)")
    if not math.isfinite(sys.E(0.0, u)):
        raise ValueError("initial energy is not finite")
    t = grid.nodes
    states = [u]
    its, ress = [], []
    for k, tau in enumerate(grid.steps):
        try:
            if opts.method == "direct":
                u = direct_ode_step(sys, psi, t[k], u, tau)
                it, res = 0, 0.0
            else:
                u, it, res = _mm_solve(sys, psi, t[k + 1], u, tau, opts)
        except StepError as exc:
            exc.index = k
            raise
        states.append(u)
        its.append(it)
        ress.append(res)
    return sample_trajectory(sys, psi, grid, np.array(states), its, ress)
