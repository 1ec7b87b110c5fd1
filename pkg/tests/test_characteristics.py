"""Characteristic tracing, the H exponent, and the no-damping radius."""

from __future__ import annotations

import numpy as np
import pytest

from conftest import scalar_model, synthetic_trajectory
from relaxdamp import damping_rate
from relaxdamp.characteristics import (
    accumulate_H,
    duhamel_residual,
    no_damping_radius,
    scan_trajectory_damping,
    trace,
    trace_many,
    verify_H_bound,
)
from relaxdamp.dynamics import PerturbationSpec, ShiftSpec, evolve
from relaxdamp.errors import EpsilonTooLarge, NotBounded
from relaxdamp.poly import Poly
from relaxdamp.profile import constant_profile
from relaxdamp.model import build_custom


@pytest.fixture(scope="module")
def jinxin_run(jinxin, jinxin_profile):
    pert = PerturbationSpec(kind="gaussian", amplitude=1e-2, width=2.0,
                            direction=(0.0, 1.0))
    return evolve(jinxin, jinxin_profile, pert, ShiftSpec(kind="zero"),
                  T=20.0, backend="moc", dx=0.02, n_out=50)


@pytest.fixture(scope="module")
def decay_run():
    model = scalar_model(speed=2.0, decay=0.25)
    prof = constant_profile(model, [0.0], X=40.0, n=2001)
    pert = PerturbationSpec(kind="zero")
    traj = evolve(model, prof, pert, ShiftSpec(kind="zero"), T=20.0,
                  backend="moc", dx=0.04, n_out=50)
    return model, prof, traj


def test_trace_straight_line(decay_run):
    _, _, traj = decay_run
    p = trace(traj, 0, x0=-5.0)
    expect = -5.0 + 2.0 * p.times
    assert np.max(np.abs(p.positions - expect)) <= 1e-12


def test_trace_constant_shift_rate(decay_run):
    model, prof, _ = decay_run
    traj = evolve(model, prof, PerturbationSpec(kind="zero"),
                  ShiftSpec(kind="linear", rate=0.5), T=10.0,
                  backend="moc", dx=0.04, n_out=20)
    p = trace(traj, 0, x0=0.0)
    expect = (2.0 - 0.5) * p.times
    assert np.max(np.abs(p.positions - expect)) <= 1e-12


def test_constant_damping_H_is_linear(decay_run):
    _, _, traj = decay_run
    p = trace(traj, 0, x0=-30.0)
    H = accumulate_H(p, traj)
    assert np.max(np.abs(H + 0.25 * p.times)) <= 1e-10


def test_tracer_refinement_order():
    # manufactured velocity field: lambda depends on a smooth synthetic state
    A = [[Poly.constant(1, 2.0) + Poly.variable(1, 0)]]
    model = build_custom("varspeed", 1, A, [0.0], state_box=([-1.0], [1.0]))
    prof = constant_profile(model, [0.0], X=40.0, n=2001)

    def field(t, x):
        return (0.5 * np.sin(0.3 * x) * np.exp(-0.05 * t))[:, None]

    traj = synthetic_trajectory(model, prof, field, T=8.0, n_out=16)
    ref = trace(traj, 0, x0=-20.0, n_sub=64).positions[-1]
    errs = []
    for n_sub in (2, 4, 8):
        p = trace(traj, 0, x0=-20.0, n_sub=n_sub)
        errs.append(abs(p.positions[-1] - ref))
    order1 = np.log2(errs[0] / errs[1])
    order2 = np.log2(errs[1] / errs[2])
    assert min(order1, order2) >= 1.8


def test_exit_time_bound(jinxin, jinxin_run):
    radius = 10.0
    eps_d = 0.0
    bound = 2.0 * radius / (2.0 - eps_d)
    for j in (0, 1):
        for x0 in np.linspace(-radius, radius, 7):
            p = trace(jinxin_run, j, x0)
            texit = p.exit_time_from(radius)
            assert texit is not None
            assert texit <= bound + 0.5  # sampling slack of one sub-step


def test_uniform_damping_bound_slack(decay_run):
    # field damps at 0.25 everywhere; theta_E = 0.125 leaves the bound slack
    _, _, traj = decay_run
    paths = trace_many(traj, 0, np.linspace(-10, 10, 5))
    for p in paths:
        accumulate_H(p, traj)
    rep = verify_H_bound(paths, theta_E=0.125)
    assert rep.C_emp_overall <= 1e-10


def test_not_bounded_when_rate_exceeds_damping(decay_run):
    # claiming twice the actual damping rate makes H + theta t grow linearly
    _, _, traj = decay_run
    paths = trace_many(traj, 0, np.linspace(-10, 10, 5))
    for p in paths:
        accumulate_H(p, traj)
    with pytest.raises(NotBounded):
        verify_H_bound(paths, theta_E=0.5, compare_horizon=10.0)


def test_H_bound_stable_across_horizons(jinxin, jinxin_profile, jinxin_run):
    dr = damping_rate(jinxin)
    starts = np.linspace(-10, 10, 10)
    paths = []
    for j in (0, 1):
        fam = trace_many(jinxin_run, j, starts)
        for p in fam:
            accumulate_H(p, jinxin_run)
        paths.extend(fam)
    rep = verify_H_bound(paths, dr.theta_E, model=jinxin, profile=jinxin_profile,
                         compare_horizon=10.0)
    assert np.isfinite(rep.C_emp_overall)
    assert abs(rep.C_emp_overall - rep.C_emp_half) <= 0.05 * max(
        abs(rep.C_emp_half), 0.01)
    # uniform damping beyond theta_E: the comparison bound is zero as well
    assert max(rep.C_theory.values()) <= 1e-12


def test_no_damping_radius_jinxin(jinxin, jinxin_profile, jinxin_run):
    radius = no_damping_radius(jinxin, jinxin_profile, eps_budget=1e-2)
    assert radius.R == 0.0
    assert radius.C_lip == pytest.approx(0.25, rel=1e-6)
    assert radius.C_tail == 0.0
    worst = scan_trajectory_damping(jinxin_run, radius.R)
    assert worst <= -radius.theta_E


def test_no_damping_radius_constant_field():
    model = scalar_model(speed=2.0, decay=0.25)  # E = -2 theta_E everywhere
    prof = constant_profile(model, [0.0], X=20.0, n=201)
    radius = no_damping_radius(model, prof, eps_budget=1e-3)
    assert radius.R == 0.0
    assert radius.C_lip == pytest.approx(0.0, abs=1e-12)


def test_epsilon_too_large(jinxin, jinxin_profile):
    with pytest.raises(EpsilonTooLarge):
        no_damping_radius(jinxin, jinxin_profile, eps_budget=10.0)


def test_duhamel_consistency(jinxin_run):
    p = trace(jinxin_run, 1, x0=-30.0)
    accumulate_H(p, jinxin_run)
    assert duhamel_residual(jinxin_run, p) <= 1e-4
