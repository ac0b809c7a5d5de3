import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bvflow.audit import audit_trajectory, chain_rule_check, ed_residual, velocity_slope_check
from bvflow.dissipation import DissipationFunction as D
from bvflow.flow import TimeGrid, run_flow, sample_trajectory
from bvflow.systems import ConstraintError, make_example
from oracles import ed_residual_loop

QUAD = make_example("quadratic", dimension=1)


def test_constant_at_critical_point_has_zero_residual():
    dw = make_example("double_well_1d")
    traj = sample_trajectory(dw, D.power(2), TimeGrid.uniform(1.0, 10), np.ones((11, 1)))
    rep = ed_residual(traj, D.power(2))
    assert np.all(rep.residuals == 0.0)


def test_constant_off_critical_point_accumulates_conjugate():
    psi = D.power(2)
    traj = sample_trajectory(QUAD, psi, TimeGrid.uniform(1.0, 10), np.full((11, 1), 0.5))
    R = ed_residual(traj, psi).residuals
    # only the psi* term survives: tau * 0.5^2 / 2 per step
    assert np.allclose(R, 0.125 * np.linspace(0, 1, 11), atol=1e-15)
    assert np.all(np.diff(R) > 0)


def test_residual_matches_loop_oracle(rng):
    sys_ = make_example("double_well_1d", load=(0.1, 0.4))
    psi = D.capped_quadratic(1.5)
    grid = TimeGrid(np.sort(np.concatenate([[0.0, 1.0], rng.uniform(0, 1, 30)])))
    states = np.cumsum(rng.normal(0, 0.05, len(grid)))[:, None]
    traj = sample_trajectory(sys_, psi, grid, states)
    ref = ed_residual_loop(traj.times, traj.states, traj.energies, traj.powers, traj.chosen_F,
                           psi.eval, psi.conjugate, lambda d: float(np.linalg.norm(d)))
    assert np.allclose(ed_residual(traj, psi).residuals, ref, atol=1e-13)


def test_infinite_conjugate_nodes_listed():
    psi = D.linear(0.3)
    traj = sample_trajectory(QUAD, psi, TimeGrid.uniform(1.0, 4), np.array([[1.0], [0.9], [0.1], [0.1], [0.1]]))
    rep = ed_residual(traj, psi)
    assert rep.infinite_conjugate_nodes == [0, 1]
    assert np.all(np.isfinite(rep.residuals))


def test_quadratic_flow_residual_first_order():
    psi = D.power(2)
    maxes = []
    for n in (50, 100, 200):
        traj = run_flow(QUAD, psi, [1.0], TimeGrid.uniform(1.0, n))
        maxes.append(ed_residual(traj, psi).max_abs_residual)
    assert maxes[0] / maxes[1] >= 1.5 and maxes[1] / maxes[2] >= 1.5
    assert maxes[-1] <= 1.0 / 200


@given(seed=st.integers(0, 10_000))
def test_residual_one_sided_on_arbitrary_curves(seed):
    rng = np.random.default_rng(seed)
    sys_ = make_example("double_well_1d", load=(rng.uniform(-0.3, 0.3), rng.uniform(-1, 1)))
    psi = [D.power(2), D.power(1.5), D.pseudo_relativistic(), D.capped_quadratic(2.0)][seed % 4]
    r = np.linspace(0, 1, 401)
    c = rng.normal(0, 0.3, 3)
    states = (c[0] + c[1] * np.sin(3 * r) + c[2] * r ** 2)[:, None]
    traj = sample_trajectory(sys_, psi, TimeGrid(r), states)
    rep = ed_residual(traj, psi)
    if rep.infinite_conjugate_nodes:
        return
    assert rep.min_residual >= -1e-3


def test_velocity_slope_examples():
    psi = D.power(2)
    traj = run_flow(QUAD, psi, [1.0], TimeGrid.uniform(1.0, 100))
    rep = velocity_slope_check(traj, psi)
    assert rep.vs_violations == 0 and rep.vs_checked == 99 and rep.vs_max_gap <= 1e-6

    lin = D.linear(2.0)
    stuck = sample_trajectory(QUAD, lin, TimeGrid.uniform(1.0, 5), np.full((6, 1), 1.5))
    assert velocity_slope_check(stuck, lin).vs_violations == 0

    # speed 1 into a critical point, so chosen_F = 0; the gap 1 is reported relative to 1 + s
    sys0 = make_example("quadratic", dimension=1, center=[1.0])
    bad = sample_trajectory(sys0, psi, TimeGrid.uniform(2.0, 2), np.array([[0.0], [1.0], [2.0]]))
    rep = velocity_slope_check(bad, psi)
    assert rep.vs_violations == 1 and rep.vs_max_gap == pytest.approx(1.0 / 2.0)


def test_chain_rule_examples():
    assert chain_rule_check(QUAD, np.linspace(0, 1, 5), np.full((5, 1), 0.7)) == 0.0
    t = np.linspace(0, 1, 1001)
    seg = np.linspace(-1.0, 2.0, 1001)[:, None]
    m0 = chain_rule_check(QUAD, t, seg)
    assert m0 >= -1e-6
    slopes = np.abs(seg[:, 0])
    assert chain_rule_check(QUAD, t, seg, slopes + 1.0) > m0
    with pytest.raises(ConstraintError):
        chain_rule_check(QUAD, t, seg, slopes - 0.1)


def test_report_keyvalue_and_determinism():
    psi = D.power(2)
    traj = run_flow(QUAD, psi, [1.0], TimeGrid.uniform(1.0, 20))
    a, b = audit_trajectory(traj, psi), audit_trajectory(traj, psi)
    assert a.to_keyvalue() == b.to_keyvalue()
    keys = dict(a.to_keyvalue())
    assert keys["vs_violations"] == 0 and math.isfinite(keys["ed_final_residual"])
