"""Evolution systems ``(X, d, E, F, P)`` on R^n.

The state space is R^n with a (possibly state dependent) norm on tangent
vectors.  The slope ``F`` is the dual norm of ``D_u E`` and the power ``P`` is
the partial time derivative of the energy; for marginal energies (pointwise
minima over a finite index set) the power depends on an upper bound ``f`` for
the slope.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .quadrature import romberg

EXAMPLES = ("double_well_1d", "allen_cahn_fd", "quadratic", "marginal_demo")

DOUBLE_WELL = (0.25, 0.0, -0.5, 0.0, 0.25)


class MetricError(ValueError):
    """Metric tensor is not symmetric positive definite, or dimensions disagree."""


class ConstraintError(ValueError):
    """Requested slope bound lies below the slope (empty feasible set)."""


def _as_state(u) -> np.ndarray:
    if type(u) is np.ndarray and u.dtype == np.float64 and u.ndim == 1:
        return u
    return np.atleast_1d(np.asarray(u, dtype=float))


def _check_pair(u, v):
    if np.shape(u) != v.shape and np.size(u) != v.shape[0]:
        raise MetricError(f"base point has {np.size(u)} entries, vector has {v.shape[0]}")


@dataclass(frozen=True)
class MetricStructure:
    """Tangent norms on R^n.

    ``kind`` is ``"euclidean"``, ``"diagonal"`` (weights ``w``) or
    ``"riemannian"`` (a callable ``G(u)`` returning an SPD matrix).
    """

    kind: str = "euclidean"
    weights: tuple[float, ...] | None = None
    tensor: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in ("euclidean", "diagonal", "riemannian"):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.kind == "diagonal":
            if not self.weights or any(not (w > 0 and math.isfinite(w)) for w in self.weights):
                raise MetricError("diagonal metric needs positive finite weights")
        if self.kind == "riemannian" and self.tensor is None:
            raise ValueError("riemannian metric needs a tensor callable")

    @classmethod
    def euclidean(cls) -> "MetricStructure":
        return cls("euclidean")

    @classmethod
    def diagonal(cls, weights: Sequence[float]) -> "MetricStructure":
        return cls("diagonal", weights=tuple(float(w) for w in weights))

    @classmethod
    def riemannian(cls, tensor: Callable) -> "MetricStructure":
        return cls("riemannian", tensor=tensor)

    def matrix(self, u) -> np.ndarray:
        u = _as_state(u)
        n = u.shape[0]
        if self.kind == "euclidean":
            return np.eye(n)
        if self.kind == "diagonal":
            self._check_dim(n)
            return np.diag(self.weights)
        G = np.atleast_2d(np.asarray(self.tensor(u), dtype=float))
        if G.shape != (n, n):
            raise MetricError(f"metric tensor has shape {G.shape}, expected {(n, n)}")
        return G

    def _check_dim(self, n):
        if self.kind == "diagonal" and len(self.weights) != n:
            raise MetricError(f"diagonal metric has {len(self.weights)} weights, state has {n}")

    def _cholesky(self, u):
        G = self.matrix(u)
        if not np.allclose(G, G.T, rtol=1e-12, atol=1e-14):
            raise MetricError("metric tensor is not symmetric")
        try:
            return np.linalg.cholesky(G)
        except np.linalg.LinAlgError as exc:
            raise MetricError("metric tensor is not positive definite") from exc

    def norm(self, u, v) -> float:
        v = _as_state(v)
        _check_pair(u, v)
        if self.kind == "euclidean":
            return float(math.sqrt(float(v @ v)))
        if self.kind == "diagonal":
            self._check_dim(v.shape[0])
            return float(math.sqrt(float(np.dot(self.weights, v * v))))
        C = self._cholesky(u)
        return float(np.linalg.norm(C.T @ v))

    def dual_norm(self, u, xi) -> float:
        xi = _as_state(xi)
        _check_pair(u, xi)
        if self.kind == "euclidean":
            return float(math.sqrt(float(xi @ xi)))
        if self.kind == "diagonal":
            self._check_dim(xi.shape[0])
            return float(math.sqrt(float(np.sum(xi * xi / np.asarray(self.weights)))))
        C = self._cholesky(u)
        y = np.linalg.solve(C, xi)
        return float(np.linalg.norm(y))

    def sharp(self, u, xi) -> np.ndarray:
        """Riesz representative ``G(u)^{-1} xi`` of a covector."""
        xi = _as_state(xi)
        if self.kind == "euclidean":
            return xi.copy()
        if self.kind == "diagonal":
            return xi / np.asarray(self.weights)
        return np.linalg.solve(self.matrix(u), xi)

    def distance(self, u0, u1, tol: float = 1e-12) -> float:
        """Exact for constant metrics; straight-segment length otherwise.

        For a Riemannian metric the segment length is an upper bound of the
        geodesic distance, computed by Romberg refinement.
        """
        u0, u1 = _as_state(u0), _as_state(u1)
        if u0.shape != u1.shape:
            raise MetricError("state dimensions differ")
        dv = u1 - u0
        if not np.any(dv):
            return 0.0
        if self.kind != "riemannian":
            return self.norm(u0, dv)
        return romberg(lambda s: self.norm(u0 + s * dv, dv), 0.0, 1.0, tol=tol)


@dataclass(frozen=True)
class MarginalSystem:
    """Energy ``E(t,u) = min_eta I(t,u,eta)`` over a finite index set.

    Each branch is a triple ``(I, D_u I, d_t I)`` of callables ``(t, u)``.
    """

    branches: tuple[tuple[Callable, Callable, Callable], ...]
    argmin_tol: float | None = None

    def values(self, t, u) -> list[float]:
        return [float(b[0](t, u)) for b in self.branches]

    def active(self, t, u) -> tuple[float, list[int]]:
        vals = self.values(t, u)
        e = min(vals)
        tol = self.argmin_tol if self.argmin_tol is not None else 1e-9 * (1.0 + abs(e))
        return e, [i for i, v in enumerate(vals) if v <= e + tol]


@dataclass(frozen=True)
class EvolutionSystem:
    """Smooth (or marginal) evolution system on R^n.

    ``energy``, ``grad`` and ``time_deriv`` are callables of ``(t, u)``;
    ``hess`` is optional and only used to speed up the inner Newton solver.
    """

    dimension: int
    energy: Callable[[float, np.ndarray], float]
    grad: Callable[[float, np.ndarray], np.ndarray]
    time_deriv: Callable[[float, np.ndarray], float]
    metric: MetricStructure = field(default_factory=MetricStructure.euclidean)
    horizon: float = 1.0
    hess: Callable[[float, np.ndarray], np.ndarray] | None = None
    marginal: MarginalSystem | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    @property
    def power_mode(self) -> str:
        return "marginal" if self.marginal is not None else "simple"

    def E(self, t, u) -> float:
        return float(self.energy(t, _as_state(u)))

    def dE(self, t, u) -> np.ndarray:
        return _as_state(self.grad(t, _as_state(u)))

    def hessian(self, t, u, h: float = 1e-6) -> np.ndarray:
        u = _as_state(u)
        if self.hess is not None:
            return np.atleast_2d(np.asarray(self.hess(t, u), dtype=float))
        n = u.shape[0]
        H = np.empty((n, n))
        for i in range(n):
            e = np.zeros(n)
            e[i] = h * max(1.0, abs(u[i]))
            H[:, i] = (self.dE(t, u + e) - self.dE(t, u - e)) / (2.0 * e[i])
        return 0.5 * (H + H.T)

    def slope(self, t, u) -> float:
        u = _as_state(u)
        if self.marginal is None:
            return self.metric.dual_norm(u, self.dE(t, u))
        _, act = self.marginal.active(t, u)
        return min(self.metric.dual_norm(u, _as_state(self.marginal.branches[i][1](t, u)))
                   for i in act)

    def power(self, t, u, f: float | None = None) -> float:
        """Power ``P(t, u, f)``; ``f`` defaults to the slope itself."""
        u = _as_state(u)
        if self.marginal is None:
            return float(self.time_deriv(t, u))
        e, act = self.marginal.active(t, u)
        tol = self.marginal.argmin_tol if self.marginal.argmin_tol is not None else 1e-9 * (1.0 + abs(e))
        norms = [(self.metric.dual_norm(u, _as_state(self.marginal.branches[i][1](t, u))), i)
                 for i in act]
        if f is None:
            f = min(n for n, _ in norms)
        feas = [float(self.marginal.branches[i][2](t, u)) for n, i in norms if n <= f + tol]
        if not feas:
            raise ConstraintError(
                f"f={f:g} is below the slope {min(n for n, _ in norms):g} at t={t:g}")
        return max(feas)

    def power_thresholds(self, t, u) -> list[float]:
        """Slope bounds at which the marginal power can change (sorted)."""
        if self.marginal is None:
            return []
        u = _as_state(u)
        _, act = self.marginal.active(t, u)
        return sorted(self.metric.dual_norm(u, _as_state(self.marginal.branches[i][1](t, u)))
                      for i in act)


def _poly(coeffs: Sequence[float], x):
    acc = 0.0 * x
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def _poly_deriv(coeffs: Sequence[float]) -> tuple[float, ...]:
    return tuple(k * c for k, c in enumerate(coeffs))[1:] or (0.0,)


def conformal_metric(coeffs: Sequence[float]) -> MetricStructure:
    """Riemannian metric ``G(u) = g(|u|^2)^2 I`` with polynomial ``g``."""
    coeffs = tuple(float(c) for c in coeffs)

    def tensor(u):
        g = _poly(coeffs, float(u @ u))
        return (g * g) * np.eye(u.shape[0])

    return MetricStructure.riemannian(tensor)


def make_metric(kind: str = "euclidean", dimension: int = 1, weights=None,
                conformal=None) -> MetricStructure:
    if kind == "euclidean":
        return MetricStructure.euclidean()
    if kind == "diagonal":
        if weights is None:
            raise ValueError("diagonal metric needs weights")
        w = [float(x) for x in weights]
        if len(w) == 1 and dimension > 1:
            w = w * dimension
        if len(w) != dimension:
            raise ValueError(f"need {dimension} weights, got {len(w)}")
        return MetricStructure.diagonal(w)
    if kind == "riemannian":
        return conformal_metric(conformal if conformal is not None else (1.0, 1.0))
    raise ValueError(f"unknown metric kind {kind!r}")


def make_example(name: str, *, dimension: int | None = None, horizon: float = 1.0,
                 metric: MetricStructure | None = None, w_coeffs=DOUBLE_WELL,
                 load=(0.0,), load_profile=None, h: float | None = None,
                 center=None, velocity=None, argmin_tol: float | None = None) -> EvolutionSystem:
    """Build one of the shipped example systems.

    ``double_well_1d``
        ``E(t,u) = W(u) - l(t) u`` with polynomial ``W`` (default
        ``(u^2-1)^2/4``) and polynomial load ``l``.
    ``allen_cahn_fd``
        ``sum_i (u_{i+1}-u_i)^2/(2h) + h sum_i [W(u_i) - l_i(t) u_i]`` on
        ``dimension`` points, ``l_i(t) = l(t) * load_profile[i]``.
    ``quadratic``
        ``E(t,u) = |u - a(t)|^2 / 2`` with ``a(t) = center + t velocity``.
    ``marginal_demo``
        Two branches ``u^2 - t`` and ``u^2 + t`` in 1D.
    """
    if name not in EXAMPLES:
        raise ValueError(f"unknown example {name!r}; expected one of {EXAMPLES}")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    w = tuple(float(c) for c in w_coeffs)
    dw = _poly_deriv(w)
    ddw = _poly_deriv(dw)
    ld = tuple(float(c) for c in load)
    dld = _poly_deriv(ld)
    params = dict(name=name)

    if name == "double_well_1d":
        if dimension not in (None, 1):
            raise ValueError("double_well_1d is one dimensional")
        params.update(w_coeffs=w, load=ld)

        def energy(t, u):
            x = u[0]
            return _poly(w, x) - _poly(ld, t) * x

        def grad(t, u):
            return np.array([_poly(dw, u[0]) - _poly(ld, t)])

        def time_deriv(t, u):
            return -_poly(dld, t) * u[0]

        def hess(t, u):
            return np.array([[_poly(ddw, u[0])]])

        return EvolutionSystem(1, energy, grad, time_deriv, metric or MetricStructure.euclidean(),
                               horizon, hess, name=name, params=params)

    if name == "allen_cahn_fd":
        n = int(dimension or 8)
        if n < 2:
            raise ValueError("allen_cahn_fd needs at least 2 points")
        hh = float(h) if h is not None else 1.0 / n
        if not hh > 0:
            raise ValueError("h must be positive")
        prof = np.ones(n) if load_profile is None else np.asarray(load_profile, dtype=float)
        if prof.shape != (n,):
            raise ValueError(f"load_profile must have {n} entries")
        params.update(w_coeffs=w, load=ld, h=hh, load_profile=tuple(prof))
        lap = (np.diag(np.r_[1.0, 2.0 * np.ones(n - 2), 1.0])
               - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)) / hh

        def energy(t, u):
            du = np.diff(u)
            return float(du @ du / (2.0 * hh) + hh * np.sum(_poly(w, u) - _poly(ld, t) * prof * u))

        def grad(t, u):
            return lap @ u + hh * (_poly(dw, u) - _poly(ld, t) * prof)

        def time_deriv(t, u):
            return float(-hh * _poly(dld, t) * (prof @ u))

        def hess(t, u):
            return lap + hh * np.diag(_poly(ddw, u))

        return EvolutionSystem(n, energy, grad, time_deriv, metric or MetricStructure.euclidean(),
                               horizon, hess, name=name, params=params)

    if name == "quadratic":
        a0 = np.zeros(dimension or 1) if center is None else np.atleast_1d(np.asarray(center, float))
        n = int(dimension or a0.shape[0])
        if a0.shape == (1,) and n > 1:
            a0 = np.full(n, a0[0])
        a1 = np.zeros(n) if velocity is None else np.atleast_1d(np.asarray(velocity, float))
        if a1.shape == (1,) and n > 1:
            a1 = np.full(n, a1[0])
        if a0.shape != (n,) or a1.shape != (n,):
            raise ValueError("center/velocity must match dimension")
        params.update(center=tuple(a0), velocity=tuple(a1))
        eye = np.eye(n)

        def energy(t, u):
            r = u - a0 - t * a1
            return 0.5 * float(r @ r)

        def grad(t, u):
            return u - a0 - t * a1

        def time_deriv(t, u):
            return -float((u - a0 - t * a1) @ a1)

        return EvolutionSystem(n, energy, grad, time_deriv, metric or MetricStructure.euclidean(),
                               horizon, lambda t, u: eye, name=name, params=params)

    # marginal_demo
    if dimension not in (None, 1):
        raise ValueError("marginal_demo is one dimensional")
    branches = (
        (lambda t, u: float(u[0] ** 2 - t), lambda t, u: np.array([2.0 * u[0]]), lambda t, u: -1.0),
        (lambda t, u: float(u[0] ** 2 + t), lambda t, u: np.array([2.0 * u[0]]), lambda t, u: 1.0),
    )
    marg = MarginalSystem(branches, argmin_tol)

    def energy(t, u):
        return min(marg.values(t, u))

    def grad(t, u):
        _, act = marg.active(t, u)
        return branches[act[0]][1](t, u)

    def time_deriv(t, u):
        _, act = marg.active(t, u)
        return max(float(branches[i][2](t, u)) for i in act)

    return EvolutionSystem(1, energy, grad, time_deriv, metric or MetricStructure.euclidean(),
                           horizon, lambda t, u: np.array([[2.0]]), marginal=marg,
                           name=name, params=params)


def coercivity_constants(system: EvolutionSystem, center, growth: float,
                         radius: float = 4.0, samples: int = 2000, seed: int = 0):
    """Search constants ``a < growth``, ``b >= 0`` with ``E + a d(u, center) + b >= 0``.

    States are sampled in the boxes of half-width ``radius`` and ``2 radius``
    around ``center`` and at times spread over the horizon.  A pair is accepted
    when the lower bound found on the larger box does not exceed the one on
    the smaller box, i.e. the infimum is attained inside.  Returns
    ``(passed, a, b, witness)`` where ``witness`` is the worst sampled point
    ``(t, u)``.
    """
    rng = np.random.default_rng(seed)
    center = _as_state(center)
    n = center.shape[0]
    ts = rng.uniform(0.0, system.horizon, samples)
    unit = rng.uniform(-1.0, 1.0, (samples, n))
    if math.isinf(growth):
        a_grid = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0]
    else:
        a_grid = [0.0, 0.25 * growth, 0.5 * growth, 0.75 * growth, 0.9 * growth]
    worst = None
    for a in a_grid:
        lows = []
        vals = [(system.E(0.0, center), 0.0, center)]
        for R in (radius, 2.0 * radius):
            for t, z in zip(ts, unit):
                u = center + R * z
                vals.append((system.E(t, u) + a * system.metric.distance(u, center), t, u))
            # the outer box includes the inner samples, so its bound can only grow
            lows.append(min(vals, key=lambda x: x[0]))
        b_small = max(0.0, -lows[0][0])
        b_large = max(0.0, -lows[1][0])
        worst = lows[1]
        if b_large <= b_small * (1.0 + 1e-9) + 1e-12:
            return True, a, b_small, (worst[1], worst[2])
    return False, None, None, (worst[1], worst[2])
