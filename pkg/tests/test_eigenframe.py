"""Eigendecomposition, source splitting, commutator solve, damping rate."""

from __future__ import annotations

import numpy as np
import pytest

from relaxdamp import (
    build_custom,
    build_jinxin,
    damping_rate,
    decompose,
    frame_along_profile,
    profile_source_field,
    source_split,
    theta_matrix,
)
from relaxdamp.eigenframe import _continue_signs, endstate_splits, frames_at_states
from relaxdamp.errors import Characteristic, GapTooSmall, NotDissipative, NotStrictlyHyperbolic
from relaxdamp.poly import Poly


def test_decompose_jinxin_matrix():
    A = np.array([[0.0, 1.0], [4.0, 0.0]])
    fr = decompose(A)
    assert np.allclose(fr.lambdas, [-2.0, 2.0])
    assert np.max(np.abs(fr.L @ A @ fr.R - np.diag(fr.lambdas))) <= 1e-10 * 5.0
    assert np.max(np.abs(fr.L @ fr.R - np.eye(2))) <= 1e-10
    # eigenvectors proportional to the hand computation (1, -2), (1, 2)
    for j, ref in enumerate((np.array([1.0, -2.0]), np.array([1.0, 2.0]))):
        col = fr.R[:, j]
        c = col @ ref / (ref @ ref)
        assert np.max(np.abs(col - c * ref)) <= 1e-12


def test_decompose_already_diagonal():
    fr = decompose(np.diag([-1.0, 3.0]))
    assert np.allclose(fr.lambdas, [-1.0, 3.0])
    assert np.allclose(fr.L, np.eye(2))
    assert np.allclose(fr.R, np.eye(2))


def test_decompose_defective_matrix():
    with pytest.raises(NotStrictlyHyperbolic):
        decompose(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_decompose_complex_pair():
    with pytest.raises(NotStrictlyHyperbolic):
        decompose(np.array([[0.0, 1.0], [-1.0, 0.0]]))


def test_decompose_characteristic_bound():
    with pytest.raises(Characteristic):
        decompose(np.diag([0.5, 2.0]), c_min=1.0)


def test_frames_constant_along_profile(jinxin, jinxin_profile):
    frames = frame_along_profile(jinxin, jinxin_profile)
    assert frames.min_abs_lambda == pytest.approx(2.0, abs=1e-12)
    assert frames.min_gap == pytest.approx(4.0, abs=1e-12)
    assert np.max(np.abs(frames.R - frames.R[0])) == 0.0
    assert frames.lipschitz == 0.0


def test_frames_reconstruct_A(jinxin, jinxin_profile):
    frames = frame_along_profile(jinxin, jinxin_profile)
    A = jinxin.A_at(jinxin_profile.values)
    lam = frames.lambdas[:, None, :] * np.eye(2)[None]
    recon = np.matmul(np.matmul(frames.R, lam), frames.L)
    assert np.max(np.abs(recon - A)) <= 1e-9


def test_sign_continuation_restores_alignment():
    n = 11
    base = decompose(np.array([[0.0, 1.0], [4.0, 0.0]]))
    lam = np.tile(base.lambdas, (n, 1))
    L = np.tile(base.L, (n, 1, 1))
    R = np.tile(base.R, (n, 1, 1))
    R[5][:, 0] *= -1.0  # adversarial flip of one eigenvector
    L[5][0, :] *= -1.0
    _continue_signs(lam, L, R)
    dots = np.einsum("nkj,nkj->nj", R[1:], R[:-1])
    assert np.all(dots > 0.0)
    assert np.max(np.abs(np.matmul(L, R) - np.eye(2))) <= 1e-12


def test_source_split_endstate_values(jinxin):
    # independent oracle: raw numpy eigendecomposition of A and L Q R product
    A = np.array([[0.0, 1.0], [4.0, 0.0]])
    for u, E_expect in ((1.0, (-0.75, -0.25)), (-1.0, (-0.25, -0.75))):
        Q = np.array([[0.0, 0.0], [u, -1.0]])  # f'(u) = u at eps = 1
        w, V = np.linalg.eig(A)
        idx = np.argsort(w)
        R = V[:, idx]
        M = np.linalg.inv(R) @ Q @ R
        assert np.allclose(np.diag(M), E_expect, atol=1e-12)

    sm, sp = endstate_splits(jinxin)
    assert np.allclose(np.diag(sm.E), (-0.75, -0.25), atol=1e-12)
    assert np.allclose(np.diag(sp.E), (-0.25, -0.75), atol=1e-12)
    assert sorted(np.round(np.abs([sm.F[0, 1], sm.F[1, 0]]), 12).tolist()) == [0.25, 0.75]
    assert sorted(np.round(np.abs([sp.F[0, 1], sp.F[1, 0]]), 12).tolist()) == [0.25, 0.75]


def test_source_split_zero_offdiagonal_when_Q_commutes():
    fr = decompose(np.array([[0.0, 1.0], [4.0, 0.0]]))
    Q = fr.R @ np.diag([-1.0, -2.0]) @ fr.L  # diagonal in the eigenbasis
    split = source_split(fr, Q)
    assert np.max(np.abs(split.F)) <= 1e-12
    assert np.allclose(np.diag(split.E), [-1.0, -2.0])


def test_theta_solves_commutator(jinxin):
    sm, sp = endstate_splits(jinxin)
    fr = decompose(jinxin.A_at(jinxin.U_minus))
    lam = np.diag(fr.lambdas)
    for split in (sm, sp):
        resid = split.Theta @ lam - lam @ split.Theta - split.F
        assert np.max(np.abs(resid)) <= 1e-12 * (1.0 + np.max(np.abs(split.F)))
        assert np.all(np.diag(split.Theta) == 0.0)
        assert sorted(np.round(np.abs(
            [split.Theta[0, 1], split.Theta[1, 0]]), 12).tolist()) == [0.0625, 0.1875]


def test_theta_zero_for_zero_F():
    fr = decompose(np.array([[0.0, 1.0], [4.0, 0.0]]))
    assert np.max(np.abs(theta_matrix(fr, np.zeros((2, 2))))) == 0.0


def test_theta_random_offdiagonal_property():
    fr = decompose(np.array([[0.0, 1.0], [4.0, 0.0]]))
    lam = np.diag(fr.lambdas)
    rng = np.random.default_rng(11)
    for _ in range(100):
        F = rng.normal(size=(2, 2))
        np.fill_diagonal(F, 0.0)
        Th = theta_matrix(fr, F)
        resid = Th @ lam - lam @ Th - F
        assert np.max(np.abs(resid)) <= 1e-12 * (1.0 + np.max(np.abs(F)))


def test_theta_gap_guard():
    fr = decompose(np.diag([1.0, 1.0 + 1e-7]))
    with pytest.raises(GapTooSmall):
        theta_matrix(fr, np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_damping_rate_jinxin(jinxin):
    dr = damping_rate(jinxin)
    assert dr.theta_E == pytest.approx(0.125, abs=1e-12)
    assert dr.theta_E_signed == pytest.approx(-0.125, abs=1e-12)
    values = sorted(np.concatenate([dr.E_minus, dr.E_plus]).tolist())
    assert np.allclose(values, [-0.75, -0.75, -0.25, -0.25], atol=1e-12)


def test_damping_rate_identity_source():
    m = build_custom(
        "iso", 2, [[1.0, 0.0], [0.0, -1.0]],
        [Poly.variable(2, 0).scaled(-1.0), Poly.variable(2, 1).scaled(-1.0)],
        U_minus=[0.0, 0.0], U_plus=[0.0, 0.0],
        state_box=([-1.0, -1.0], [1.0, 1.0]))
    assert damping_rate(m).theta_E == pytest.approx(0.5)


def test_damping_rate_supercharacteristic_fails():
    m = build_jinxin(a=0.5, eps=1.0, flux=[0, 0, 0.5], u_minus=1.0, u_plus=-1.0)
    with pytest.raises(NotDissipative):
        damping_rate(m)
    # closed form: the unstable diagonal entry equals (|f'| - a)/(2 a eps) = 0.5
    sm, _ = endstate_splits(m)
    assert np.max(np.diag(sm.E)) == pytest.approx(0.5, abs=1e-12)


def test_profile_source_field_commutator_everywhere(jinxin, jinxin_profile):
    sf = profile_source_field(jinxin, jinxin_profile)
    lam = sf.frames.lambdas
    comm = (sf.Theta * lam[:, None, :] - lam[:, :, None] * sf.Theta) - sf.F_tilde
    scale = 1.0 + np.max(np.abs(sf.F_tilde))
    assert np.max(np.abs(comm)) <= 1e-12 * scale
    # state-independent A: no transport contribution
    assert np.max(np.abs(sf.transport)) == 0.0


def test_biorthogonality_along_profile(jinxin, jinxin_profile):
    frames = frame_along_profile(jinxin, jinxin_profile)
    prod = np.matmul(frames.L, frames.R)
    assert np.max(np.abs(prod - np.eye(2))) <= 1e-10


def test_state_dependent_frames_continuous():
    # A(U) = [[u1, 1], [1, -u1]]: eigenvalues +-sqrt(1 + u1^2), smooth frames
    A = [[Poly.variable(2, 0), 1.0], [1.0, Poly.variable(2, 0).scaled(-1.0)]]
    m = build_custom("varA", 2, A, [0.0, 0.0],
                     state_box=([-1.0, -1.0], [1.0, 1.0]))
    grid = np.linspace(-1.0, 1.0, 181)
    states = np.stack([np.linspace(-0.9, 0.9, 181), np.zeros(181)], axis=1)
    frames = frames_at_states(m, grid, states)
    dots = np.einsum("nkj,nkj->nj", frames.R[1:], frames.R[:-1])
    assert np.all(dots > 0.0)
    assert frames.lipschitz <= 2.0  # smooth frame on a well-separated spectrum
    lam = frames.lambdas[:, None, :] * np.eye(2)[None]
    recon = np.matmul(np.matmul(frames.R, lam), frames.L)
    assert np.max(np.abs(recon - m.A_at(states))) <= 1e-9
