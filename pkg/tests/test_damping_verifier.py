"""Norms, weights, weighted energies, and damping feasibility."""

from __future__ import annotations

import numpy as np
import pytest

from conftest import scalar_model, synthetic_trajectory
from relaxdamp import build_jinxin, damping_rate
from relaxdamp.damping_verifier import (
    ckb_norm,
    default_weight_constants,
    feasibility_table,
    fit_damping,
    l2_h2_norms,
    slaving_check,
    trapezoid4,
    weight_fn,
    weighted_energy_series,
)
from relaxdamp.dynamics import PerturbationSpec, ShiftSpec, Snapshot, evolve
from relaxdamp.errors import Characteristic, EmptyFeasible, Unsupported
from relaxdamp.profile import constant_profile


def make_snapshot(grid, U, W=None, b=None):
    N = U.shape[1]
    zero = np.zeros(N)
    if W is None:
        from relaxdamp.dynamics import fd4_derivative

        W = fd4_derivative(U, grid[1] - grid[0], zero, zero)
    return Snapshot(t=0.0, grid=grid, U=U, W=W, b_left=b if b is not None else zero,
                    b_right=b if b is not None else zero)


# --- norms -------------------------------------------------------------------

def test_ckb_constant_field():
    grid = np.linspace(-10, 10, 201)
    U = np.tile([1e-2, 0.0], (201, 1))
    snap = make_snapshot(grid, U, W=np.zeros_like(U), b=np.array([1e-2, 0.0]))
    for K in range(3):
        assert ckb_norm(snap, K) == pytest.approx(1e-2)


def test_ckb_gaussian_dominated_by_peak():
    grid = np.linspace(-40, 40, 4001)
    A, w = 1e-2, 2.0
    g = A * np.exp(-0.5 * (grid / w) ** 2)
    U = g[:, None] * np.array([1.0, 0.0])
    W = (-g * grid / w**2)[:, None] * np.array([1.0, 0.0])
    snap = make_snapshot(grid, U, W=W)
    # max slope A/(w sqrt(e)) = 3.03e-3 is below the peak
    assert ckb_norm(snap, 0) == pytest.approx(A)
    assert ckb_norm(snap, 1) == pytest.approx(A)
    assert np.max(np.abs(W)) == pytest.approx(A / (w * np.sqrt(np.e)), rel=1e-3)


def test_ckb_unsupported_order():
    grid = np.linspace(-1, 1, 21)
    snap = make_snapshot(grid, np.zeros((21, 1)))
    with pytest.raises(Unsupported):
        ckb_norm(snap, 3)


def test_ckb_norms_nested(jinxin, jinxin_profile):
    pert = PerturbationSpec(kind="gaussian", amplitude=1e-2, width=2.0,
                            direction=(0.0, 1.0))
    traj = evolve(jinxin, jinxin_profile, pert, ShiftSpec(kind="zero"),
                  T=2.0, backend="moc", dx=0.04, n_out=4)
    for i in range(traj.n_times):
        snap = traj.snapshot(i)
        assert ckb_norm(snap, 0) <= ckb_norm(snap, 1) <= ckb_norm(snap, 2)


def test_l2_zero_and_gaussian_identity():
    grid = np.linspace(-40, 40, 4001)
    snap = make_snapshot(grid, np.zeros((4001, 2)))
    assert l2_h2_norms(snap) == (0.0, 0.0, 0.0)
    A, w = 1e-2, 2.0
    g = A * np.exp(-0.5 * (grid / w) ** 2)
    snap = make_snapshot(grid, g[:, None] * np.array([1.0, 0.0]))
    l2, _, _ = l2_h2_norms(snap)
    assert l2**2 == pytest.approx(A**2 * w * np.sqrt(np.pi), abs=1e-8)


def test_quadrature_fourth_order():
    exact = (np.exp(4.0) - np.exp(-4.0)) * 10.0
    errs = []
    for n in (501, 1001):
        x = np.linspace(-40, 40, n)
        errs.append(abs(trapezoid4(np.exp(x / 10.0), x[1] - x[0]) - exact))
    assert errs[0] / errs[1] >= 4.0  # halving the step cuts error at least 4x


# --- weights -----------------------------------------------------------------

def test_weight_constant_speed_closed_form(jinxin, jinxin_profile):
    # family 1 has lambda = +2 everywhere; alpha decays by exp of the
    # antiderivative of e^{-c|x|}: total log drop 2C/(c lambda) (1 - e^{-cX})
    wf = weight_fn(jinxin, jinxin_profile, 1, C_alpha=1.0, c_alpha=0.25)
    drop = (1.0 / (0.25 * 2.0)) * 2.0 * (1.0 - np.exp(-0.25 * 40.0))
    assert wf.values.max() == pytest.approx(1.0)
    assert wf.values.min() == pytest.approx(np.exp(-drop), rel=1e-10)
    assert wf.ode_residual <= 1e-10
    assert 0.0 < wf.values.min() < wf.values.max()


def test_weight_lower_bound(jinxin, jinxin_profile):
    for j, C, c in ((0, 2.0, 0.1), (1, 1.0, 0.25)):
        wf = weight_fn(jinxin, jinxin_profile, j, C, c)
        assert wf.values.min() >= np.exp(-2.0 * C / (c * 2.0)) * (1.0 - 1e-12)


def test_weight_characteristic_guard():
    m = build_jinxin(a=2.0, eps=1.0, flux=[0, 0, 0.5], u_minus=3.0, u_plus=1.0)
    prof = constant_profile(m, m.U_minus, X=10.0, n=101)
    with pytest.raises(Characteristic):
        weight_fn(m, prof, 1, 1.0, 0.25, c_min=1e-3)


# --- energies ----------------------------------------------------------------

def test_energy_zero_field(jinxin, jinxin_profile):
    traj = evolve(jinxin, jinxin_profile, PerturbationSpec(kind="zero"),
                  ShiftSpec(kind="zero"), T=1.0, backend="moc", dx=0.02, n_out=4)
    Ca, ca = default_weight_constants(jinxin_profile)
    ws = [weight_fn(jinxin, jinxin_profile, j, Ca, ca) for j in range(2)]
    es = weighted_energy_series(traj, ws, damping_rate(jinxin).theta_E)
    assert np.max(np.abs(es.energies)) == 0.0


def test_energy_pure_decay_rate():
    model = scalar_model(speed=2.0, decay=0.1)
    prof = constant_profile(model, [0.0], X=40.0, n=2001)
    beta = 0.1

    def field(t, x):
        return (1e-2 * np.exp(-beta * t) * np.exp(-0.5 * (x / 3.0) ** 2))[:, None]

    traj = synthetic_trajectory(model, prof, field, T=1.0, n_out=100)
    wf = weight_fn(model, prof, 0, 1.0, 0.25)
    es = weighted_energy_series(traj, [wf], theta_E=0.05)
    ratio = es.rates[1:-1, 0] / es.energies[1:-1, 0]
    assert np.max(np.abs(ratio + 2.0 * beta)) <= 1e-6


# --- feasibility -------------------------------------------------------------

def test_feasibility_pure_decay_analytic():
    times = np.linspace(0.0, 40.0, 201)
    series = np.exp(-0.2 * times)
    forcing = np.zeros_like(times)
    theta_grid = np.array([0.05, 0.1, 0.2, 0.25, 0.3])
    tab = feasibility_table("test", times, series, forcing, theta_grid,
                            C_cap=1e3)
    # C_min = 1 for theta <= 0.2 and e^{(theta - 0.2) T} beyond
    assert np.allclose(tab.C_min[:3], 1.0, rtol=1e-12)
    assert tab.C_min[3] == pytest.approx(np.exp(0.05 * 40.0), rel=1e-10)
    assert np.all(np.diff(tab.C_min) >= -1e-12)  # monotone in theta
    assert tab.theta_max == pytest.approx(0.3)  # cap is generous here


def test_feasibility_zero_degenerate():
    times = np.linspace(0.0, 10.0, 11)
    tab = feasibility_table("zero", times, np.zeros(11), np.zeros(11),
                            np.array([0.1, 0.2]))
    assert tab.degenerate
    assert tab.theta_max == pytest.approx(0.2)


def test_fit_damping_monotone_and_feasible(jinxin, jinxin_profile):
    pert = PerturbationSpec(kind="gaussian", amplitude=1e-2, width=2.0,
                            direction=(0.0, 1.0))
    traj = evolve(jinxin, jinxin_profile, pert, ShiftSpec(kind="zero"),
                  T=10.0, backend="moc", dx=0.04, n_out=25)
    grid = np.linspace(0.01, 0.3, 15)
    for kind in ("c0", "c2", "h2"):
        tab = fit_damping(traj, kind, grid)
        assert np.all(np.diff(tab.C_min) >= -1e-9)
        assert tab.theta_max >= 0.0625


def test_slaving_check_feasible(jinxin, jinxin_profile):
    pert = PerturbationSpec(kind="gaussian", amplitude=1e-2, width=2.0,
                            direction=(0.0, 1.0))
    traj = evolve(jinxin, jinxin_profile, pert, ShiftSpec(kind="zero"),
                  T=10.0, backend="moc", dx=0.04, n_out=25)
    tables = slaving_check(traj, np.linspace(0.01, 0.3, 15))
    assert tables["psi_tilde"].theta_max >= 0.0625
    assert tables["upsilon_tilde"].theta_max >= 0.0625


def test_slaving_degenerate_on_zero_run(jinxin, jinxin_profile):
    traj = evolve(jinxin, jinxin_profile, PerturbationSpec(kind="zero"),
                  ShiftSpec(kind="zero"), T=1.0, backend="moc", dx=0.04, n_out=4)
    tables = slaving_check(traj, np.linspace(0.01, 0.3, 5))
    assert tables["psi_tilde"].degenerate
    assert tables["upsilon_tilde"].degenerate


def test_slaving_check_adversarial_growth():
    # derivative field grows while the amplitude stays flat: no slaved rate fits
    model = scalar_model(speed=2.0, decay=0.25)
    prof = constant_profile(model, [0.0], X=40.0, n=4001)

    def field(t, x):
        k = 1.0 + 7.0 * t
        return (1e-3 * np.sin(k * x) * np.exp(-0.5 * (x / 10.0) ** 2))[:, None]

    traj = synthetic_trajectory(model, prof, field, T=20.0, n_out=40)
    with pytest.raises(EmptyFeasible):
        slaving_check(traj, np.linspace(0.01, 0.3, 15), C_cap=10.0)


def test_l2_cross_norm_consistency(jinxin, jinxin_profile):
    # for shift-free runs the L2 feasible set should cover the C0 feasible set
    # intersected with [0, 2 theta_E] (sanity, not a theorem)
    pert = PerturbationSpec(kind="gaussian", amplitude=1e-2, width=2.0,
                            direction=(0.0, 1.0))
    traj = evolve(jinxin, jinxin_profile, pert, ShiftSpec(kind="zero"),
                  T=10.0, backend="moc", dx=0.04, n_out=25)
    grid = np.linspace(0.01, 0.25, 13)  # within [0, 2 theta_E]
    c0 = fit_damping(traj, "c0", grid)
    l2 = fit_damping(traj, "l2", grid)
    assert np.all(l2.feasible[c0.feasible])
