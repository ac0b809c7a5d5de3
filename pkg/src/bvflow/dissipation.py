"""Metric dissipation functions and their Legendre conjugates.

A dissipation function is a convex, nondecreasing ``psi: [0, inf) -> [0, inf)``
with ``psi(0) = 0``.  Its growth coefficient ``L = lim psi(v) / v`` separates
superlinear (viscous) dissipations from ones with linear growth, for which the
conjugate ``psi*`` is ``+inf`` beyond ``L``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

INF = math.inf

FAMILIES = ("power", "viscous_linear", "capped_quadratic", "pseudo_relativistic", "linear")

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class DissipationDomainError(ValueError):
    """Raised for arguments outside the domain of a dissipation operation."""


def _check_nonneg(x: float, name: str) -> float:
    x = float(x)
    if not math.isfinite(x) or x < 0.0:
        raise DissipationDomainError(f"{name} must be finite and >= 0, got {x!r}")
    return x


def _safe_pow(base: float, expo: float) -> float:
    """``base ** expo`` for base >= 0 that saturates to +inf instead of raising."""
    if base == 0.0:
        return 0.0 if expo > 0 else 1.0
    if expo * math.log(base) > 709.0:
        return INF
    return base ** expo


@dataclass(frozen=True)
class DissipationFunction:
    """Immutable dissipation function ``psi`` of one of the built-in families.

    Use the classmethod constructors (``power``, ``viscous_linear``,
    ``capped_quadratic``, ``pseudo_relativistic``, ``linear``) rather than
    the raw initializer.
    """

    family: str
    p: float | None = None
    eps: float | None = None
    L: float | None = None
    growth: float = field(init=False)

    def __post_init__(self):
        fam = self.family
        if fam not in FAMILIES:
            raise ValueError(f"unknown dissipation family {fam!r}")
        if fam in ("power", "viscous_linear"):
            if self.p is None or not self.p > 1.0 or not math.isfinite(self.p):
                raise ValueError(f"{fam} requires finite p > 1, got {self.p!r}")
        if fam == "viscous_linear":
            if self.eps is None or not self.eps >= 0.0 or not math.isfinite(self.eps):
                raise ValueError(f"viscous_linear requires eps >= 0, got {self.eps!r}")
        if fam in ("capped_quadratic", "linear"):
            if self.L is None or not self.L > 0.0 or not math.isfinite(self.L):
                raise ValueError(f"{fam} requires finite L > 0, got {self.L!r}")
        if fam == "power":
            growth = INF
        elif fam == "viscous_linear":
            growth = INF if self.eps > 0.0 else 1.0
        elif fam == "pseudo_relativistic":
            growth = 1.0
        else:
            growth = float(self.L)
        object.__setattr__(self, "growth", growth)

    # -- constructors -------------------------------------------------
    @classmethod
    def power(cls, p: float) -> "DissipationFunction":
        return cls("power", p=float(p))

    @classmethod
    def viscous_linear(cls, eps: float, p: float) -> "DissipationFunction":
        return cls("viscous_linear", p=float(p), eps=float(eps))

    @classmethod
    def capped_quadratic(cls, L: float) -> "DissipationFunction":
        return cls("capped_quadratic", L=float(L))

    @classmethod
    def pseudo_relativistic(cls) -> "DissipationFunction":
        return cls("pseudo_relativistic")

    @classmethod
    def linear(cls, L: float) -> "DissipationFunction":
        return cls("linear", L=float(L))

    # -- properties -----------------------------------------------------
    @property
    def superlinear(self) -> bool:
        return self.growth == INF

    @property
    def right_derivative_at_zero(self) -> float:
        """``psi'(0+)``; positive exactly for the families with a kink at 0."""
        if self.family == "linear":
            return float(self.L)
        if self.family == "viscous_linear":
            return 1.0
        return 0.0

    def describe(self) -> str:
        if self.family == "power":
            return f"power(p={self.p:g})"
        if self.family == "viscous_linear":
            return f"viscous_linear(eps={self.eps:g}, p={self.p:g})"
        if self.family in ("capped_quadratic", "linear"):
            return f"{self.family}(L={self.L:g})"
        return "pseudo_relativistic"

    # -- evaluation -----------------------------------------------------
    def __call__(self, v: float) -> float:
        return self.eval(v)

    def eval(self, v: float) -> float:
        v = _check_nonneg(v, "v")
        fam = self.family
        if fam == "power":
            return _safe_pow(v, self.p) / self.p
        if fam == "viscous_linear":
            return v + self.eps * _safe_pow(v, self.p) if self.eps > 0 else v
        if fam == "capped_quadratic":
            L = self.L
            return 0.5 * v * v if v <= L else L * v - 0.5 * L * L
        if fam == "pseudo_relativistic":
            # sqrt(1+v^2) - 1 written to avoid cancellation near 0
            return v * v / (math.sqrt(1.0 + v * v) + 1.0)
        return self.L * v

    def derivative(self, v: float) -> float:
        """Right derivative ``psi'(v+)``."""
        v = _check_nonneg(v, "v")
        fam = self.family
        if fam == "power":
            return _safe_pow(v, self.p - 1.0)
        if fam == "viscous_linear":
            return 1.0 + self.eps * self.p * _safe_pow(v, self.p - 1.0)
        if fam == "capped_quadratic":
            return min(v, self.L)
        if fam == "pseudo_relativistic":
            return v / math.sqrt(1.0 + v * v)
        return float(self.L)

    def second_derivative(self, v: float) -> float:
        """``psi''(v)`` for v > 0 (used by the Newton inner solver)."""
        fam = self.family
        if fam == "power":
            return (self.p - 1.0) * _safe_pow(v, self.p - 2.0) if v > 0 else (
                0.0 if self.p > 2 else (1.0 if self.p == 2 else INF))
        if fam == "viscous_linear":
            if self.eps == 0:
                return 0.0
            return self.eps * self.p * (self.p - 1.0) * _safe_pow(v, self.p - 2.0) if v > 0 else INF
        if fam == "capped_quadratic":
            return 1.0 if v < self.L else 0.0
        if fam == "pseudo_relativistic":
            return (1.0 + v * v) ** -1.5
        return 0.0

    def subdifferential(self, v: float) -> tuple[float, float]:
        """Convex subdifferential ``[psi'(v-), psi'(v+)]``; at 0 it is ``[0, psi'(0+)]``."""
        v = _check_nonneg(v, "v")
        if v == 0.0:
            return (0.0, self.right_derivative_at_zero)
        d = self.derivative(v)
        return (d, d)

    # -- conjugate ------------------------------------------------------
    def conjugate(self, f: float) -> float:
        """Legendre conjugate ``psi*(f) = sup_{v >= 0} (f v - psi(v))``."""
        f = _check_nonneg(f, "f")
        if f > self.growth:
            return INF
        fam = self.family
        if fam == "power":
            q = self.p / (self.p - 1.0)
            return _safe_pow(f, q) / q
        if fam == "linear":
            return 0.0
        if fam == "capped_quadratic":
            return 0.5 * f * f
        if fam == "pseudo_relativistic":
            # 1 - sqrt(1 - f^2), cancellation-free
            return f * f / (1.0 + math.sqrt(max(0.0, 1.0 - f * f)))
        # viscous_linear
        if f <= 1.0:
            return 0.0
        if self.eps == 0.0:
            return INF
        return numerical_conjugate(self, f)

    def inverse_subdifferential(self, f: float) -> float:
        """Smallest ``v >= 0`` with ``f`` in ``subdifferential(v)``."""
        f = _check_nonneg(f, "f")
        if f >= self.growth:
            raise DissipationDomainError(
                f"f={f!r} >= growth={self.growth!r}: no finite maximizer")
        fam = self.family
        if fam == "power":
            return _safe_pow(f, 1.0 / (self.p - 1.0))
        if fam == "linear":
            return 0.0
        if fam == "capped_quadratic":
            return f
        if fam == "pseudo_relativistic":
            return f / math.sqrt(1.0 - f * f)
        if f <= 1.0:
            return 0.0
        return _safe_pow((f - 1.0) / (self.eps * self.p), 1.0 / (self.p - 1.0))


def numerical_conjugate(psi: DissipationFunction, f: float, tol: float = 1e-10,
                        max_iter: int = 400) -> float:
    """Golden-section maximization of the concave map ``v -> f v - psi(v)``.

    The bracket ``[0, V]`` is found by doubling ``V`` until the maximand
    decreases; ``tol`` is the absolute bracket width in ``v``.
    """
    f = _check_nonneg(f, "f")
    if f > psi.growth:
        return INF

    def g(v):
        return f * v - psi.eval(v)

    hi = 1.0
    while g(2.0 * hi) > g(hi):
        hi *= 2.0
        if hi > 1e300:
            return INF
    lo, hi = 0.0, 2.0 * hi
    a = hi - _GOLDEN * (hi - lo)
    b = lo + _GOLDEN * (hi - lo)
    ga, gb = g(a), g(b)
    it = 0
    while hi - lo > tol * max(1.0, abs(a)) and it < max_iter:
        if ga < gb:
            lo, a, ga = a, b, gb
            b = lo + _GOLDEN * (hi - lo)
            gb = g(b)
        else:
            hi, b, gb = b, a, ga
            a = hi - _GOLDEN * (hi - lo)
            ga = g(a)
        it += 1
    return max(0.0, ga, gb, g(lo), g(hi))


def fenchel_gap(psi: DissipationFunction, v: float, f: float) -> float:
    """``psi(v) + psi*(f) - f v``; nonnegative, zero iff ``f`` is in ``d psi(v)``."""
    c = psi.conjugate(f)
    if c == INF:
        return INF
    return psi.eval(v) + c - f * v
