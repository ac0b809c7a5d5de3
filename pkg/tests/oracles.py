"""Independent reference computations used by the tests.

Nothing here calls the algorithms under test; closed forms are re-derived
and numerical oracles are brute force.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate


def psi_formula(family: str, v, p=None, eps=None, L=None):
    v = np.asarray(v, dtype=float)
    if family == "power":
        return v ** p / p
    if family == "viscous_linear":
        return v + eps * v ** p
    if family == "capped_quadratic":
        return np.where(v <= L, 0.5 * v ** 2, L * v - 0.5 * L ** 2)
    if family == "pseudo_relativistic":
        return np.sqrt(1.0 + v ** 2) - 1.0
    if family == "linear":
        return L * v
    raise ValueError(family)


def grid_sup_conjugate(psi_of_v, f: float, v_max: float | None = None, n: int = 20001,
                       zooms: int = 6) -> float:
    """``max_v f v - psi(v)`` by a dense grid on ``[0, V]`` followed by local zooms.

    ``V`` doubles until the maximand is decreasing there.
    """
    def g(v):
        return f * v - psi_of_v(v)

    V = 1.0 if v_max is None else v_max
    while v_max is None and g(2.0 * V) > g(V) and V < 1e100:
        V *= 2.0
    V *= 2.0
    lo, hi = 0.0, V
    best = -math.inf
    for _ in range(zooms):
        grid = np.linspace(lo, hi, n)
        vals = g(grid)
        k = int(np.argmax(vals))
        best = max(best, float(vals[k]))
        h = grid[1] - grid[0]
        lo, hi = max(0.0, grid[k] - 2 * h), grid[k] + 2 * h
    return best


def sup_dual_norm(G: np.ndarray, xi: np.ndarray, samples: int = 10_000, seed: int = 0) -> float:
    """``sup <xi, v>`` over random directions scaled to the unit ball of ``G``."""
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((samples, xi.size))
    norms = np.sqrt(np.einsum("ij,jk,ik->i", V, G, V))
    return float(np.max(V @ xi / norms))


def rk4(rhs, y0, T, n):
    y = np.array(y0, dtype=float)
    h = T / n
    t = 0.0
    for _ in range(n):
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + h / 2 * k1)
        k3 = rhs(t + h / 2, y + h / 2 * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return y


def brute_force_step_1d(energy, psi_of_v, u_prev: float, tau: float, lo: float, hi: float,
                        n: int = 200001) -> float:
    """Grid minimizer of ``tau psi(|u - u_prev|/tau) + E(u)`` on ``[lo, hi]``, then one zoom."""
    grid = np.linspace(lo, hi, n)
    vals = tau * psi_of_v(np.abs(grid - u_prev) / tau) + energy(grid)
    k = int(np.argmin(vals))
    h = grid[1] - grid[0]
    fine = np.linspace(grid[k] - h, grid[k] + h, 2001)
    fv = tau * psi_of_v(np.abs(fine - u_prev) / tau) + energy(fine)
    return float(fine[int(np.argmin(fv))])


def double_well_prime(u, load_value):
    return u ** 3 - u - load_value


def exact_1d_cost(load_value: float, u0: float, u1: float, L: float) -> float:
    """``int max(|W'(x) - l|, L) dx`` over the segment, by adaptive QUADPACK with kink points."""
    a, b = min(u0, u1), max(u0, u1)
    if a == b:
        return 0.0
    # kinks sit where |W' - l| = L, roots of cubics
    pts = []
    for c in (load_value + L, load_value - L, load_value):
        for r in np.roots([1.0, 0.0, -1.0, -c]):
            if abs(r.imag) < 1e-12 and a < r.real < b:
                pts.append(r.real)
    val, _ = integrate.quad(lambda x: max(abs(double_well_prime(x, load_value)), L), a, b,
                            points=sorted(pts) or None, epsabs=1e-13, epsrel=1e-13, limit=500)
    return val


def monotone_path_cost(load_value, u0, u1, L, n=200001):
    """Trapezoid rule of the factor over a fine monotone discretisation."""
    x = np.linspace(u0, u1, n)
    fx = np.maximum(np.abs(double_well_prime(x, load_value)), L)
    return float(np.sum(0.5 * (fx[1:] + fx[:-1]) * np.abs(np.diff(x))))


def ed_residual_loop(times, states, energies, powers, chosen_F, psi_eval, psi_conj, norm):
    """Plain-loop cumulative residual with step-constant speeds and trapezoid node terms."""
    R = [0.0]
    for k in range(len(times) - 1):
        tau = times[k + 1] - times[k]
        s = norm(states[k + 1] - states[k]) / tau
        c0, c1 = psi_conj(chosen_F[k]), psi_conj(chosen_F[k + 1])
        c0 = 0.0 if math.isinf(c0) else c0
        c1 = 0.0 if math.isinf(c1) else c1
        inc = (energies[k + 1] - energies[k] + tau * psi_eval(s) + 0.5 * tau * (c0 + c1)
               - 0.5 * tau * (powers[k] + powers[k + 1]))
        R.append(R[-1] + inc)
    return np.array(R)


def synthetic_bv_curve(rng, n_ramps: int, n_steps: int, samples: int = 2001):
    """Piecewise-linear ramps plus exact steps encoded by repeated sample times.

    Returns ``(times, states, A, J)`` with ``A`` the sampled ramp variation
    and ``J`` the total step height.
    """
    t = np.linspace(0.0, 1.0, samples)
    rates = np.zeros(samples - 1)
    if n_ramps:
        cuts = np.sort(rng.choice(np.arange(1, samples - 1), n_ramps - 1, replace=False))
        pieces = np.split(np.arange(samples - 1), cuts)
        for piece, r in zip(pieces, rng.uniform(-2.0, 2.0, n_ramps)):
            rates[piece] = r
    u = np.concatenate([[0.0], np.cumsum(rates * np.diff(t))])
    A = float(np.sum(np.abs(np.diff(u))))
    jump_at = set(rng.choice(np.arange(1, samples - 1), n_steps, replace=False).tolist())
    heights = rng.uniform(0.5, 2.0, n_steps) * rng.choice([-1.0, 1.0], n_steps)
    out_t, out_u, offset, j = [], [], 0.0, 0
    for k in range(samples):
        if k in jump_at:
            out_t.append(t[k])
            out_u.append(u[k] + offset)
            offset += heights[j]
            j += 1
        out_t.append(t[k])
        out_u.append(u[k] + offset)
    return np.array(out_t), np.array(out_u)[:, None], A, float(np.sum(np.abs(heights)))
