"""Diagonalization machinery along the profile.

Builds sorted real eigenvalues with biorthonormal left/right eigenvector
matrices (L A R = Lambda, L R = I), splits the transformed source L Q R into
diagonal and off-diagonal parts, solves the commutator equation
[Theta, Lambda] = F for the conjugation matrix, and extracts the damping rate
from the endstate diagonals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Characteristic, GapTooSmall, NotDissipative, NotStrictlyHyperbolic
from .model import ModelSpec
from .profile import ProfileRep

GAP_MIN = 1e-6  # absolute eigenvalue-gap floor guarding the Theta division
DEGENERACY_TOL = 1e-10


@dataclass(frozen=True)
class EigenFrame:
    """Eigendata of the coefficient matrix at one state.

    Rows of L are left eigenvectors, columns of R right eigenvectors, with
    L R = I and eigenvalues sorted ascending.
    """

    lambdas: np.ndarray
    L: np.ndarray
    R: np.ndarray

    @property
    def c_nonchar(self) -> float:
        return float(np.min(np.abs(self.lambdas)))

    @property
    def gap(self) -> float:
        if self.lambdas.size < 2:
            return float("inf")
        return float(np.min(np.diff(self.lambdas)))


@dataclass(frozen=True)
class SourceSplit:
    """Diagonal/off-diagonal split E + F of L Q R, with the commutator matrix."""

    E: np.ndarray
    F: np.ndarray
    Theta: np.ndarray | None = None


@dataclass(frozen=True)
class DampingRate:
    """Damping rate extracted from the endstate source diagonals.

    ``theta_E`` is the positive decay rate -max(E_jj)/2; ``theta_E_signed``
    keeps the raw max(E_jj)/2 for reporting.
    """

    theta_E: float
    theta_E_signed: float
    E_minus: np.ndarray
    E_plus: np.ndarray


def _sign_fix(R: np.ndarray) -> None:
    """Scale each right eigenvector so its largest-magnitude entry equals +1."""
    N = R.shape[-1]
    for j in range(N):
        col = R[..., :, j]
        idx = np.argmax(np.abs(col), axis=-1)
        lead = np.take_along_axis(col, idx[..., None], axis=-1)[..., 0]
        R[..., :, j] = col / lead[..., None]


def decompose(A: np.ndarray, c_min: float = 0.0) -> EigenFrame:
    """Sorted real eigendecomposition with L = R^{-1}.

    Raises NotStrictlyHyperbolic on complex pairs or coalescing eigenvalues
    and Characteristic when some |lambda_j| < c_min.
    """
    A = np.asarray(A, dtype=float)
    scale = 1.0 + float(np.max(np.abs(A)))
    w, V = np.linalg.eig(A)
    if np.max(np.abs(w.imag)) > DEGENERACY_TOL * scale:
        raise NotStrictlyHyperbolic(f"complex eigenvalues {w}")
    w = w.real
    order = np.argsort(w)
    lam = w[order]
    if lam.size > 1 and np.min(np.diff(lam)) < DEGENERACY_TOL * scale:
        raise NotStrictlyHyperbolic(f"eigenvalue gap below {DEGENERACY_TOL} in {lam}")
    R = V.real[:, order]
    _sign_fix(R)
    L = np.linalg.inv(R)
    if np.min(np.abs(lam)) < c_min:
        raise Characteristic(
            f"min |lambda| = {np.min(np.abs(lam)):.6g} below bound {c_min}")
    return EigenFrame(lambdas=lam, L=L, R=R)


@dataclass
class FrameField:
    """Eigenframes at every grid node, with signs continued along the grid."""

    grid: np.ndarray
    lambdas: np.ndarray  # (n, N)
    L: np.ndarray        # (n, N, N)
    R: np.ndarray        # (n, N, N)

    def at(self, i: int) -> EigenFrame:
        return EigenFrame(lambdas=self.lambdas[i], L=self.L[i], R=self.R[i])

    @property
    def min_abs_lambda(self) -> float:
        return float(np.min(np.abs(self.lambdas)))

    @property
    def min_gap(self) -> float:
        if self.lambdas.shape[1] < 2:
            return float("inf")
        return float(np.min(np.diff(self.lambdas, axis=1)))

    @property
    def lipschitz(self) -> float:
        """Recorded frame-continuity constant max |frame(x_{i+1}) - frame(x_i)| / dx."""
        if len(self.grid) < 2:
            return 0.0
        dx = np.diff(self.grid)
        dR = np.max(np.abs(np.diff(self.R, axis=0)), axis=(1, 2))
        dl = np.max(np.abs(np.diff(self.lambdas, axis=0)), axis=1)
        return float(np.max(np.maximum(dR, dl) / dx))


def _continue_signs(lambdas: np.ndarray, L: np.ndarray, R: np.ndarray) -> None:
    """Flip signs so consecutive right eigenvectors have positive inner products."""
    n, N = lambdas.shape
    for i in range(1, n):
        dots = np.einsum("kj,kj->j", R[i], R[i - 1])
        flip = dots < 0
        if np.any(flip):
            R[i][:, flip] = -R[i][:, flip]
            L[i][flip, :] = -L[i][flip, :]


def frames_at_states(model: ModelSpec, grid: np.ndarray, states: np.ndarray,
                     c_min: float = 0.0) -> FrameField:
    """Decompose A at every state and continue eigenvector signs along the grid."""
    states = np.asarray(states, dtype=float)
    n = states.shape[0]
    if model.A_is_constant:
        frame = decompose(model.A_at(states[0]), c_min)
        return FrameField(
            grid=np.asarray(grid, dtype=float),
            lambdas=np.tile(frame.lambdas, (n, 1)),
            L=np.tile(frame.L, (n, 1, 1)),
            R=np.tile(frame.R, (n, 1, 1)),
        )
    A = model.A_at(states)
    w, V = np.linalg.eig(A)
    scale = 1.0 + np.max(np.abs(A), axis=(1, 2))
    bad = np.max(np.abs(w.imag), axis=1) > DEGENERACY_TOL * scale
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NotStrictlyHyperbolic(
            f"complex eigenvalues {w[i]} at x = {grid[i]:.6g}")
    w = w.real
    order = np.argsort(w, axis=1)
    lam = np.take_along_axis(w, order, axis=1)
    gaps = np.diff(lam, axis=1)
    if gaps.size and np.any(gaps < DEGENERACY_TOL * scale[:, None]):
        i = int(np.argmax(np.any(gaps < DEGENERACY_TOL * scale[:, None], axis=1)))
        raise NotStrictlyHyperbolic(
            f"eigenvalue gap below {DEGENERACY_TOL} at x = {grid[i]:.6g}")
    R = np.take_along_axis(V.real, order[:, None, :], axis=2)
    _sign_fix(R)
    L = np.linalg.inv(R)
    if np.min(np.abs(lam)) < c_min:
        i = int(np.argmin(np.min(np.abs(lam), axis=1)))
        raise Characteristic(
            f"min |lambda| = {np.min(np.abs(lam)):.6g} below bound {c_min} "
            f"at x = {grid[i]:.6g}")
    _continue_signs(lam, L, R)
    return FrameField(grid=np.asarray(grid, dtype=float), lambdas=lam, L=L, R=R)


def frame_along_profile(model: ModelSpec, profile: ProfileRep,
                        c_min: float = 0.0) -> FrameField:
    """Eigenframes at every profile node."""
    return frames_at_states(model, profile.grid, profile.values, c_min)


def source_split(frame: EigenFrame, Qmat: np.ndarray) -> SourceSplit:
    """Split L Q R into diagonal E and off-diagonal F (Theta not yet filled)."""
    M = frame.L @ np.asarray(Qmat, dtype=float) @ frame.R
    E = np.diag(np.diag(M))
    return SourceSplit(E=E, F=M - E)


def theta_matrix(frame: EigenFrame, F_tilde: np.ndarray,
                 gap_min: float = GAP_MIN) -> np.ndarray:
    """Solve the commutator equation [Theta, Lambda] = F componentwise.

    Theta_jk = F_jk / (lambda_k - lambda_j) off the diagonal, zero on it.
    """
    lam = frame.lambdas
    denom = lam[None, :] - lam[:, None]
    off = ~np.eye(len(lam), dtype=bool)
    if np.any(np.abs(denom[off]) < gap_min):
        raise GapTooSmall(f"eigenvalue gap below {gap_min} in {lam}")
    Theta = np.zeros_like(denom)
    Theta[off] = np.asarray(F_tilde, dtype=float)[off] / denom[off]
    return Theta


def _theta_field(lambdas: np.ndarray, F_tilde: np.ndarray,
                 gap_min: float = GAP_MIN) -> np.ndarray:
    """Batched commutator solve over grid nodes."""
    denom = lambdas[:, None, :] - lambdas[:, :, None]
    N = lambdas.shape[1]
    off = ~np.eye(N, dtype=bool)
    denom_off = denom[:, off]
    if denom_off.size and np.min(np.abs(denom_off)) < gap_min:
        raise GapTooSmall(f"eigenvalue gap below {gap_min} along the field")
    Theta = np.zeros_like(F_tilde)
    Theta[:, off] = F_tilde[:, off] / denom_off
    return Theta


def endstate_splits(model: ModelSpec) -> tuple[SourceSplit, SourceSplit]:
    """Source splits at both endstates (Theta filled)."""
    splits = []
    for U in (model.U_minus, model.U_plus):
        frame = decompose(model.A_at(U))
        split = source_split(frame, model.Q_at(U))
        theta = theta_matrix(frame, split.F)
        splits.append(SourceSplit(E=split.E, F=split.F, Theta=theta))
    return splits[0], splits[1]


def damping_rate(model: ModelSpec) -> DampingRate:
    """theta_E = -max_j E^{+-}_jj / 2; requires all endstate diagonals negative."""
    sm, sp = endstate_splits(model)
    e_minus = np.diag(sm.E)
    e_plus = np.diag(sp.E)
    worst = float(max(e_minus.max(), e_plus.max()))
    if worst >= 0.0:
        raise NotDissipative(
            f"endstate source diagonal not negative: E- = {e_minus}, E+ = {e_plus}")
    return DampingRate(theta_E=-0.5 * worst, theta_E_signed=0.5 * worst,
                       E_minus=e_minus, E_plus=e_plus)


@dataclass
class SourceField:
    """Transformed source along a state field.

    ``E_diag[i, j]`` is the damping coefficient of family j at node i: the jj
    entry of L Q R minus the frame-transport term Lambda L dR/dx (zero for
    state-independent A).  ``F_tilde`` is the off-diagonal remainder,
    ``transport`` the raw transport matrix, and ``Theta`` the commutator
    conjugation matrix.
    """

    grid: np.ndarray
    E_diag: np.ndarray     # (n, N)
    F_tilde: np.ndarray    # (n, N, N)
    transport: np.ndarray  # (n, N, N)
    frames: FrameField
    Theta: np.ndarray | None = None


def transformed_source(model: ModelSpec, grid: np.ndarray, states: np.ndarray,
                       frames: FrameField | None = None,
                       with_theta: bool = True) -> SourceField:
    """Full transformed source L Q R - Lambda L dR/dx split along a state field."""
    grid = np.asarray(grid, dtype=float)
    states = np.asarray(states, dtype=float)
    if frames is None:
        frames = frames_at_states(model, grid, states)
    Q = model.Q_at(states)
    n, N = states.shape
    if model.A_is_constant:
        M = frames.L[0] @ Q @ frames.R[0]
        T = np.zeros((n, N, N))
    else:
        M = np.matmul(np.matmul(frames.L, Q), frames.R)
        Rx = np.gradient(frames.R, grid, axis=0)
        T = -frames.lambdas[:, :, None] * np.matmul(frames.L, Rx)
        M = M + T
    eye = np.eye(N, dtype=bool)
    E_diag = M[:, eye]
    F_tilde = M.copy()
    F_tilde[:, eye] = 0.0
    Theta = _theta_field(frames.lambdas, F_tilde) if with_theta else None
    return SourceField(grid=grid, E_diag=E_diag, F_tilde=F_tilde, transport=T,
                       frames=frames, Theta=Theta)


def profile_source_field(model: ModelSpec, profile: ProfileRep,
                         frames: FrameField | None = None) -> SourceField:
    """Transformed source along the stationary profile."""
    return transformed_source(model, profile.grid, profile.values, frames)
