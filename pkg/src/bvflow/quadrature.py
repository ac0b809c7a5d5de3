"""Small deterministic quadrature helpers shared by the metric and transition code."""
from __future__ import annotations

from typing import Callable


def adaptive_simpson(g: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-10, max_depth: int = 40) -> float:
    """Adaptive Simpson quadrature of ``g`` on ``[a, b]`` with Richardson correction."""
    if b == a:
        return 0.0
    fa, fm, fb = g(a), g(0.5 * (a + b)), g(b)
    whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0
    return _asr(g, a, b, fa, fm, fb, whole, tol, max_depth)


def _asr(g, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = g(lm), g(rm)
    left = (m - a) * (fa + 4.0 * flm + fm) / 6.0
    right = (b - m) * (fm + 4.0 * frm + fb) / 6.0
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0
    return (_asr(g, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + _asr(g, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))


def romberg(g: Callable[[float], float], a: float, b: float, tol: float = 1e-12,
            min_levels: int = 4, max_levels: int = 20) -> float:
    """Romberg integration (trapezoid doubling plus Richardson extrapolation)."""
    h = b - a
    if h == 0:
        return 0.0
    R = [[0.5 * h * (g(a) + g(b))]]
    n = 1
    for k in range(1, max_levels):
        h *= 0.5
        s = sum(g(a + (2 * i - 1) * h) for i in range(1, n + 1))
        n *= 2
        row = [0.5 * R[-1][0] + h * s]
        for j in range(1, k + 1):
            row.append(row[j - 1] + (row[j - 1] - R[-1][j - 1]) / (4 ** j - 1))
        R.append(row)
        if k >= min_levels and abs(row[-1] - R[-2][-1]) <= tol * max(1.0, abs(row[-1])):
            return row[-1]
    return R[-1][-1]


def trapezoid_cumulative(values, steps) -> list[float]:
    """Cumulative trapezoid sums of node ``values`` over step lengths ``steps``."""
    out = [0.0]
    acc = 0.0
    for k, tau in enumerate(steps):
        acc += 0.5 * tau * (values[k] + values[k + 1])
        out.append(acc)
    return out
