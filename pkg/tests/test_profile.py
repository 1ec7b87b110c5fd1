"""Profile construction: closed form, shooting, decay fits, residuals."""

from __future__ import annotations

import numpy as np
import pytest

from relaxdamp import build_jinxin, exact_jinxin_profile, fit_decay, residual, solve_profile
from relaxdamp.errors import NotApplicable, NoUnstableDirection, TailBelowNoise
from relaxdamp.profile import constant_profile


def test_exact_profile_is_tanh(jinxin, jinxin_profile):
    x = jinxin_profile.grid
    assert np.max(np.abs(jinxin_profile.values[:, 0] + np.tanh(x / 8.0))) <= 1e-14
    assert np.max(np.abs(jinxin_profile.values[:, 1] - 0.5)) <= 1e-14


def test_exact_profile_satisfies_reduced_ode(jinxin_profile):
    # independent check: 4 u_x = (u^2 - 1)/2 pointwise
    u = jinxin_profile.values[:, 0]
    ux = jinxin_profile.d1[:, 0]
    assert np.max(np.abs(4.0 * ux - 0.5 * (u**2 - 1.0))) <= 1e-12


def test_exact_profile_residual(jinxin, jinxin_profile):
    assert residual(jinxin_profile, jinxin) <= 1e-12


def test_profile_odd_symmetry_at_origin(jinxin_profile):
    i0 = len(jinxin_profile.grid) // 2
    assert jinxin_profile.values[i0, 0] == pytest.approx(0.0, abs=1e-14)


def test_decay_rates_quarter(jinxin_profile):
    for side in ("minus", "plus"):
        for k in range(3):
            fit = jinxin_profile.decay_fit(side, k)
            assert fit.rate == pytest.approx(0.25, rel=0.02)
            assert fit.rate > 0
            assert fit.envelope_factor <= 1.05
    # tanh tail amplitude: 1 - tanh(x/8) ~ 2 e^{-x/4}
    assert jinxin_profile.decay_fit("plus", 0).amplitude == pytest.approx(2.0, rel=0.05)


def test_exact_profile_requires_quadratic_flux():
    m = build_jinxin(a=2.0, eps=1.0, flux=[0, 0, 0, 0.25], u_minus=1.0, u_plus=-1.0)
    with pytest.raises(NotApplicable):
        exact_jinxin_profile(m, np.linspace(-40, 40, 101))


def test_exact_profile_requires_entropy_ordering():
    m = build_jinxin(a=2.0, eps=1.0, flux=[0, 0, 0.5], u_minus=-1.0, u_plus=1.0)
    with pytest.raises(NotApplicable):
        exact_jinxin_profile(m, np.linspace(-40, 40, 101))


def test_shooting_matches_exact(jinxin, jinxin_profile):
    prof = solve_profile(jinxin, X=40.0, n=4001, tol=1e-8)
    err = np.max(np.abs(prof.values - jinxin_profile.values))
    assert err <= 1e-6
    assert residual(prof, jinxin) <= 1e-10
    assert prof.decay_fit("plus", 0).rate == pytest.approx(0.25, rel=0.02)


def test_shooting_pinned_at_midpoint(jinxin):
    prof = solve_profile(jinxin, X=20.0, n=801, tol=1e-8)
    i0 = len(prof.grid) // 2
    assert prof.values[i0, 0] == pytest.approx(0.0, abs=1e-8)


def test_swapped_endstates_have_no_unstable_direction():
    m = build_jinxin(a=2.0, eps=1.0, flux=[0, 0, 0.5], u_minus=-1.0, u_plus=1.0)
    with pytest.raises(NoUnstableDirection):
        solve_profile(m, X=20.0, n=401, tol=1e-8)


def test_grid_placement_invariance(jinxin):
    p40 = solve_profile(jinxin, X=40.0, n=2001, tol=1e-8)
    p44 = solve_profile(jinxin, X=44.0, n=2201, tol=1e-8)
    x = np.linspace(-30.0, 30.0, 501)
    assert np.max(np.abs(p40.eval(x) - p44.eval(x))) <= 1e-8


def test_monotone_u_and_inside_box(jinxin):
    prof = solve_profile(jinxin, X=40.0, n=2001, tol=1e-8)
    assert np.all(np.diff(prof.values[:, 0]) < 0.0)
    lo, hi = jinxin.state_box
    assert np.all(prof.values >= lo) and np.all(prof.values <= hi)


def test_interpolation_accuracy(jinxin_profile):
    x = np.linspace(-20.0, 20.0, 1237)  # avoids grid nodes
    exact = -np.tanh(x / 8.0)
    assert np.max(np.abs(jinxin_profile.eval(x)[:, 0] - exact)) <= 1e-8
    exact_d1 = -(1.0 / 8.0) / np.cosh(x / 8.0) ** 2
    assert np.max(np.abs(jinxin_profile.eval_d1(x)[:, 0] - exact_d1)) <= 1e-8


def test_third_derivative_matches_closed_form(jinxin, jinxin_profile):
    prof = solve_profile(jinxin, X=40.0, n=2001, tol=1e-8)
    x = prof.grid
    k = 1.0 / 8.0
    sech2 = 1.0 / np.cosh(k * x) ** 2
    th = np.tanh(k * x)
    # u = -tanh(kx) gives u''' = 2 k^3 sech^2 (sech^2 - 2 tanh^2)
    u3 = 2.0 * k**3 * sech2 * (sech2 - 2.0 * th**2)
    assert np.max(np.abs(prof.d3[:, 0] - u3)) <= 1e-7


def test_residual_zero_on_constant_equilibrium(jinxin):
    prof = constant_profile(jinxin, jinxin.U_minus, X=10.0, n=101)
    assert residual(prof, jinxin) <= 1e-14


def test_residual_detects_injected_corruption(jinxin, jinxin_profile):
    corrupted = constant_profile(jinxin, jinxin.U_minus, X=10.0, n=101)
    corrupted.values[:] = jinxin_profile.eval(corrupted.grid)
    corrupted.d1[:] = jinxin_profile.eval_d1(corrupted.grid)
    base = residual(corrupted, jinxin)
    corrupted.values[60, 1] += 1e-3  # poke the v component off the profile
    assert residual(corrupted, jinxin) >= max(1e-4, base)


def test_fit_decay_constant_profile_below_noise(jinxin):
    prof = constant_profile(jinxin, jinxin.U_plus, X=10.0, n=101)
    with pytest.raises(TailBelowNoise):
        fit_decay(prof, 0)


def test_endstate_gap_matches_tail_size(jinxin_profile):
    # exact tanh tail at X = 40: 1 - tanh(5) ~ 9.08e-5
    assert jinxin_profile.endstate_gap == pytest.approx(1.0 - np.tanh(5.0), rel=1e-6)


def test_endstate_gap_small_on_wide_grid(jinxin):
    grid = np.linspace(-64.0, 64.0, 6401)
    prof = exact_jinxin_profile(jinxin, grid)
    assert prof.endstate_gap <= 1e-6
