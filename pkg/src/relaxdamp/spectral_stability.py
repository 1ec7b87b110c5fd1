"""High-frequency dissipativity of the endstate symbols.

Certifies that the spectrum of i xi A(U+-) + Q(U+-) has uniformly negative
real part beyond a frequency threshold, validates the large-frequency
expansion of the eigenvalues against the diagonalized source entries, and
scans strict hyperbolicity / non-characteristicity along the profile.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidParam, PairingAmbiguous, ScanTooCoarse
from .eigenframe import decompose, frames_at_states, source_split
from .model import ModelSpec
from .profile import ProfileRep

XI_MIN_DEFAULT = 0.01
N_XI_DEFAULT = 400


def _endstate(model: ModelSpec, side: str) -> np.ndarray:
    U = model.U_minus if side == "minus" else model.U_plus
    if U is None:
        raise InvalidParam(f"model has no {side} endstate")
    return U


def symbol_spectrum(model: ModelSpec, side: str, xi: float) -> np.ndarray:
    """Eigenvalues of i xi A(U_side) + Q(U_side), sorted by (Im, Re)."""
    U = _endstate(model, side)
    M = 1j * xi * model.A_at(U) + model.Q_at(U)
    mu = np.linalg.eigvals(M)
    return mu[np.lexsort((mu.real, mu.imag))]


@dataclass
class SpectralScan:
    """Spectrum of one endstate symbol over a frequency grid.

    ``spectra[m, j]`` is branch j at ``xi_grid[m]``; branches are continued
    across the grid by nearest-neighbor matching in the complex plane.
    """

    side: str
    xi_grid: np.ndarray
    spectra: np.ndarray

    @property
    def worst_real(self) -> np.ndarray:
        return self.spectra.real.max(axis=1)


def _scan_side(model: ModelSpec, side: str, xi_grid: np.ndarray) -> SpectralScan:
    U = _endstate(model, side)
    A = model.A_at(U)
    Q = model.Q_at(U)
    spectra = np.empty((len(xi_grid), model.N), dtype=complex)
    prev = None
    for m, xi in enumerate(xi_grid):
        mu = np.linalg.eigvals(1j * xi * A + Q)
        if prev is None:
            mu = mu[np.lexsort((mu.real, mu.imag))]
        else:
            cost = np.abs(mu[None, :] - prev[:, None])
            _, cols = linear_sum_assignment(cost)
            mu = mu[cols]
        spectra[m] = mu
        prev = mu
    return SpectralScan(side=side, xi_grid=xi_grid, spectra=spectra)


@dataclass
class Certificate:
    """Scanned dissipativity certificate Re sigma <= -margin for |xi| >= threshold."""

    passed: bool
    margin: float
    threshold: float | None
    achieved: float | None
    xi_min: float
    xi_max: float
    witness_xi: float | None = None
    witness_re: float | None = None
    witness_side: str | None = None
    scans: dict = field(default_factory=dict)


def dissipativity_certificate(model: ModelSpec, xi_max: float, n_xi: int,
                              margin: float,
                              xi_min: float = XI_MIN_DEFAULT) -> Certificate:
    """Scan both endstate symbols over a log-spaced frequency grid.

    Finds the smallest scanned threshold C with max Re mu <= -margin for all
    scanned xi >= C on both sides (negative frequencies follow by conjugate
    symmetry of real-matrix symbols).  The zero mode at small xi never blocks
    certification; failure at the top of the range does, with a witness.
    """
    if xi_max <= 0 or xi_min <= 0 or xi_max <= xi_min:
        raise InvalidParam("need 0 < xi_min < xi_max")
    if n_xi < 100:
        raise InvalidParam(f"n_xi must be >= 100, got {n_xi}")
    xi_grid = np.geomspace(xi_min, xi_max, n_xi)
    scans = {side: _scan_side(model, side, xi_grid) for side in ("minus", "plus")}

    worst = np.maximum(scans["minus"].worst_real, scans["plus"].worst_real)
    jumps = np.max(np.abs(np.diff(scans["minus"].spectra.real, axis=0)))
    jumps = max(jumps, np.max(np.abs(np.diff(scans["plus"].spectra.real, axis=0))))
    if jumps > 10.0 * margin:
        raise ScanTooCoarse(
            f"Re mu jumps by {jumps:.3g} between adjacent xi (margin {margin})")

    ok = worst <= -margin
    if not ok[-1]:
        i = int(np.where(~ok)[0][-1])
        side = "minus" if scans["minus"].worst_real[i] >= scans["plus"].worst_real[i] \
            else "plus"
        return Certificate(passed=False, margin=margin, threshold=None,
                           achieved=None, xi_min=xi_min, xi_max=xi_max,
                           witness_xi=float(xi_grid[i]), witness_re=float(worst[i]),
                           witness_side=side, scans=scans)
    # smallest grid point from which the condition holds through xi_max
    bad = np.where(~ok)[0]
    start = int(bad[-1]) + 1 if bad.size else 0
    return Certificate(passed=True, margin=margin,
                       threshold=float(xi_grid[start]),
                       achieved=float(-worst[start:].max()),
                       xi_min=xi_min, xi_max=xi_max, scans=scans)


@dataclass
class ExpansionCheck:
    """Fit of the O(1/|xi|) remainder in the high-frequency eigenvalue expansion."""

    side: str
    xi_list: np.ndarray
    re_by_branch: np.ndarray      # (n_xi, N) paired Re mu_j
    im_over_xi: np.ndarray        # (n_xi, N) paired Im mu_j / xi
    E_diag: np.ndarray
    remainder_constant: float     # max over xi, j of |xi| * |Re mu_j - E_jj|


def expansion_check(model: ModelSpec, side: str, xi_list) -> ExpansionCheck:
    """Pair symbol branches to iota lambda_j xi + E_jj and bound the remainder.

    Branches are matched by imaginary part against lambda_j xi; the pairing
    must be injective at every listed frequency.
    """
    U = _endstate(model, side)
    frame = decompose(model.A_at(U))
    lam = frame.lambdas
    E = np.diag(source_split(frame, model.Q_at(U)).E)
    xi_list = np.asarray(sorted(xi_list), dtype=float)
    if np.min(np.abs(xi_list)) < 10.0 * np.max(np.abs(lam)) * (1.0 - 1e-9):
        raise InvalidParam("expansion check needs |xi| >= 10 max |lambda|")
    n = len(xi_list)
    re_b = np.empty((n, model.N))
    im_over = np.empty((n, model.N))
    worst = 0.0
    gap = np.min(np.diff(lam)) if model.N > 1 else np.inf
    for m, xi in enumerate(xi_list):
        mu = symbol_spectrum(model, side, xi)
        dist = np.abs(mu.imag[None, :] - lam[:, None] * xi)
        pick = np.argmin(dist, axis=1)
        if len(set(pick.tolist())) != model.N:
            raise PairingAmbiguous(
                f"branch imaginary parts cross at xi = {xi:.6g}")
        if model.N > 1:
            ranked = np.sort(dist, axis=1)
            if np.any(ranked[:, 1] - ranked[:, 0] < 0.1 * gap * abs(xi)):
                raise PairingAmbiguous(
                    f"branch imaginary parts within tolerance at xi = {xi:.6g}")
        re_b[m] = mu.real[pick]
        im_over[m] = mu.imag[pick] / xi
        worst = max(worst, float(np.max(np.abs(xi) * np.abs(mu.real[pick] - E))))
    return ExpansionCheck(side=side, xi_list=xi_list, re_by_branch=re_b,
                          im_over_xi=im_over, E_diag=E, remainder_constant=worst)


@dataclass
class HyperbolicityReport:
    min_abs_lambda: float
    min_gap: float
    c_min: float
    passed: bool


def hyperbolicity_scan(model: ModelSpec, profile: ProfileRep,
                       c_min: float) -> HyperbolicityReport:
    """Decompose A at every profile node and aggregate spectral margins.

    Structural defects (complex or coalescing eigenvalues) propagate as
    NotStrictlyHyperbolic with the offending location; falling short of the
    requested non-characteristicity bound is reported as a failed scan.
    """
    frames = frames_at_states(model, profile.grid, profile.values, c_min=0.0)
    min_abs = frames.min_abs_lambda
    min_gap = frames.min_gap
    return HyperbolicityReport(
        min_abs_lambda=min_abs, min_gap=min_gap, c_min=c_min,
        passed=bool(min_abs >= c_min and min_gap > 0.0),
    )
