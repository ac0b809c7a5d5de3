import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bvflow.dissipation import (DissipationDomainError, DissipationFunction, fenchel_gap,
                                numerical_conjugate)
from oracles import grid_sup_conjugate, psi_formula

D = DissipationFunction

SHIPPED = [
    D.power(2.0), D.power(1.5), D.power(1.1), D.power(3.0),
    D.viscous_linear(0.5, 2.0), D.viscous_linear(0.0, 2.0), D.viscous_linear(0.1, 1.5),
    D.capped_quadratic(1.0), D.capped_quadratic(2.5),
    D.pseudo_relativistic(), D.linear(1.0), D.linear(2.0),
]
IDS = [p.describe() for p in SHIPPED]


def _formula(psi, v):
    return float(psi_formula(psi.family, v, p=psi.p, eps=psi.eps, L=psi.L))


# -- examples ---------------------------------------------------------------

def test_eval_examples():
    assert D.power(2).eval(3.0) == pytest.approx(4.5, abs=1e-15)
    assert D.linear(1).eval(0.0) == 0.0
    assert D.capped_quadratic(1).eval(2.0) == pytest.approx(1.5, abs=1e-15)


def test_conjugate_examples():
    assert D.power(2).conjugate(1.0) == pytest.approx(0.5, abs=1e-15)
    assert D.linear(1).conjugate(0.5) == 0.0
    assert D.linear(1).conjugate(2.0) == math.inf
    oracle = grid_sup_conjugate(lambda v: psi_formula("capped_quadratic", v, L=1.0), 0.6, v_max=10.0)
    assert oracle == pytest.approx(0.18, abs=1e-9)
    assert D.capped_quadratic(1).conjugate(0.6) == pytest.approx(oracle, abs=1e-9)


def test_subdifferential_examples():
    assert D.linear(2).subdifferential(0.0) == (0.0, 2.0)
    assert D.power(2).subdifferential(3.0) == (3.0, 3.0)
    psi = D.capped_quadratic(1)
    h = 1e-6
    fd = (psi.eval(2 + h) - psi.eval(2 - h)) / (2 * h)
    lo, hi = psi.subdifferential(2.0)
    assert lo == hi == pytest.approx(fd, abs=1e-8)
    assert psi.subdifferential(1.0) == (1.0, 1.0)


def test_growth_examples():
    assert D.linear(2.5).growth == 2.5
    assert D.power(1.1).growth == math.inf
    psi = D.pseudo_relativistic()
    ratios = [psi.eval(v) / v for v in (1e2, 1e4, 1e6)]
    assert abs(ratios[-1] - 1.0) < 1e-5 and ratios == sorted(ratios)
    assert psi.growth == 1.0
    assert D.viscous_linear(0.0, 2).growth == 1.0
    assert D.viscous_linear(0.3, 2).growth == math.inf


def test_inverse_subdifferential_examples():
    assert D.power(2).inverse_subdifferential(3.0) == pytest.approx(3.0)
    assert D.linear(1).inverse_subdifferential(0.5) == 0.0
    psi = D.power(1.5)
    v = psi.inverse_subdifferential(4.0)
    assert v == pytest.approx(16.0, rel=1e-12)
    assert psi.eval(v) + psi.conjugate(4.0) == pytest.approx(4.0 * v, rel=1e-12)
    with pytest.raises(DissipationDomainError):
        D.linear(1).inverse_subdifferential(1.0)


@pytest.mark.parametrize("bad", [-1.0, math.inf, math.nan])
def test_eval_domain_errors(bad):
    with pytest.raises(DissipationDomainError):
        D.power(2).eval(bad)


def test_conjugate_and_subdifferential_domain_errors():
    with pytest.raises(DissipationDomainError):
        D.power(2).conjugate(-0.1)
    with pytest.raises(DissipationDomainError):
        D.linear(1).subdifferential(-1.0)


@pytest.mark.parametrize("kwargs", [dict(family="power", p=1.0), dict(family="linear", L=0.0),
                                    dict(family="viscous_linear", p=2.0, eps=-1.0),
                                    dict(family="capped_quadratic"), dict(family="nope")])
def test_invalid_parameters(kwargs):
    with pytest.raises(ValueError):
        D(**kwargs)


# -- properties -------------------------------------------------------------

@pytest.mark.parametrize("psi", SHIPPED, ids=IDS)
def test_eval_matches_formula_and_zero(psi):
    assert psi.eval(0.0) == 0.0
    for v in np.linspace(0, 10, 41):
        assert psi.eval(v) == pytest.approx(_formula(psi, v), rel=1e-13, abs=1e-15)


@pytest.mark.parametrize("psi", SHIPPED, ids=IDS)
@given(a=st.floats(0, 10), b=st.floats(0, 10), lam=st.floats(0, 1))
def test_convex_nondecreasing(psi, a, b, lam):
    v1, v3 = min(a, b), max(a, b)
    v2 = (1 - lam) * v1 + lam * v3
    assert psi.eval(v2) <= (1 - lam) * psi.eval(v1) + lam * psi.eval(v3) + 1e-12 * (1 + psi.eval(v3))
    assert psi.eval(v1) <= psi.eval(v3) + 1e-15


@pytest.mark.parametrize("psi", SHIPPED, ids=IDS)
@given(v=st.floats(0, 10), f=st.floats(0, 10))
def test_fenchel_young(psi, v, f):
    if f >= psi.growth:
        return
    assert psi.eval(v) + psi.conjugate(f) >= f * v - 1e-12 * (1 + f * v)


@pytest.mark.parametrize("psi", SHIPPED, ids=IDS)
@given(v=st.floats(0, 10), lam=st.floats(0, 1))
def test_fenchel_equality_on_subdifferential(psi, v, lam):
    lo, hi = psi.subdifferential(v)
    f = lo + lam * (hi - lo)
    if f >= psi.growth:
        return
    assert abs(fenchel_gap(psi, v, f)) <= 1e-9 * (1 + f * v)


@pytest.mark.parametrize("psi", SHIPPED, ids=IDS)
def test_conjugate_convex_nondecreasing(psi):
    top = min(psi.growth, 10.0)
    fs = np.linspace(0, 0.99 * top, 200)
    c = np.array([psi.conjugate(f) for f in fs])
    assert psi.conjugate(0.0) == 0.0
    assert np.all(np.diff(c) >= -1e-12)
    assert np.all(c[:-2] - 2 * c[1:-1] + c[2:] >= -1e-9)


@pytest.mark.parametrize("psi", SHIPPED, ids=IDS)
def test_conjugate_infinite_beyond_growth(psi):
    if math.isfinite(psi.growth):
        assert psi.conjugate(psi.growth * 1.01) == math.inf
        assert math.isfinite(psi.conjugate(psi.growth * 0.99))


@pytest.mark.parametrize("psi", SHIPPED, ids=IDS)
def test_numerical_conjugate_agrees(psi):
    for f in np.linspace(0, 0.95 * min(psi.growth, 5.0), 9):
        assert numerical_conjugate(psi, f) == pytest.approx(psi.conjugate(f), rel=1e-8, abs=1e-9)


@pytest.mark.parametrize("psi", SHIPPED, ids=IDS)
@given(f=st.floats(0, 8))
def test_inverse_subdifferential_is_smallest(psi, f):
    if f >= psi.growth:
        return
    v = psi.inverse_subdifferential(f)
    lo, hi = psi.subdifferential(v)
    assert lo - 1e-8 * (1 + f) <= f <= hi + 1e-8 * (1 + f)
    if v > 1e-9:
        assert psi.subdifferential(0.999 * v)[1] <= f + 1e-8 * (1 + f)


def test_power_family_converges_to_linear():
    v = np.linspace(0, 3, 31)
    errs = [max(abs(D.power(1 + 2.0 ** -h).eval(x) - x) for x in v) for h in range(2, 12)]
    assert errs[-1] < 1e-2 and all(a >= b for a, b in zip(errs, errs[1:]))
    conj = [D.power(1 + 2.0 ** -h).conjugate(1.5) for h in range(1, 8)]
    assert all(a < b for a, b in zip(conj, conj[1:])) and conj[-1] > 1e10


def test_pseudo_relativistic_shifted():
    psi = D.pseudo_relativistic()
    assert psi.eval(0.0) == 0.0
    assert psi.eval(1.0) == pytest.approx(math.sqrt(2) - 1)
    assert psi.conjugate(0.6) == pytest.approx(1 - math.sqrt(1 - 0.36))
