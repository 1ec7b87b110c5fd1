"""Characteristic curves, the Duhamel exponent H, and the no-damping radius.

Paths solve dX/ds = lambda_j(Ubar(X) + U(s, X)) - ddelta(s) through a stored
trajectory; the exponent H_j(t) accumulates the diagonal transformed source
along the path.  The empirical constant of the bound
H_j(t) - H_j(s) <= -theta_E (t - s) + C is the sup of the left side plus the
rate term over all sampled pairs, and the no-damping radius is the distance
beyond which the frozen-profile damping coefficient clears -theta_E with
margin for perturbations of the allowed size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Trajectory, _cubic_interp, phi_and_forcing
from .eigenframe import decompose, profile_source_field, source_split
from .errors import EpsilonTooLarge, InvalidParam, NotBounded
from .model import ModelSpec
from .profile import ProfileRep


@dataclass
class CharPath:
    """One characteristic curve with its Duhamel exponent samples."""

    family: int
    x0: float
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    H: np.ndarray | None = None
    grid_half_width: float = 0.0

    @property
    def exit_time(self) -> float | None:
        """First sample time at which the path leaves the grid."""
        out = np.abs(self.positions) > self.grid_half_width
        if not np.any(out):
            return None
        return float(self.times[np.argmax(out)])

    def exit_time_from(self, radius: float) -> float | None:
        """First sample time with |X| > radius."""
        out = np.abs(self.positions) > radius
        if not np.any(out):
            return None
        return float(self.times[np.argmax(out)])


class _FieldInterp:
    """Linear-in-time, cubic-in-space interpolation of per-snapshot fields."""

    def __init__(self, times: np.ndarray, grid: np.ndarray, fields: np.ndarray):
        self.times = times
        self.grid = grid
        self.dx = float(grid[1] - grid[0])
        self.fields = fields  # (n_times, n)

    def eval(self, s: float, xq: np.ndarray) -> np.ndarray:
        times = self.times
        m = int(np.searchsorted(times, s, side="right")) - 1
        m = max(0, min(m, len(times) - 2))
        w = (s - times[m]) / (times[m + 1] - times[m])
        w = min(max(w, 0.0), 1.0)
        f0, f1 = self.fields[m], self.fields[m + 1]
        a0 = _cubic_interp(f0, float(self.grid[0]), self.dx, xq, f0[0], f0[-1])
        a1 = _cubic_interp(f1, float(self.grid[0]), self.dx, xq, f1[0], f1[-1])
        return (1.0 - w) * a0 + w * a1


def _lambda_interp(traj: Trajectory, j: int) -> _FieldInterp:
    lam = np.stack([traj.frames(i).lambdas[:, j] for i in range(traj.n_times)])
    return _FieldInterp(traj.times, traj.grid, lam)


def _E_interp(traj: Trajectory, j: int) -> _FieldInterp:
    E = np.stack([traj.source_field(i).E_diag[:, j] for i in range(traj.n_times)])
    return _FieldInterp(traj.times, traj.grid, E)


def trace_many(traj: Trajectory, j: int, x0s, n_sub: int = 4) -> list[CharPath]:
    """RK2 integration of a batch of family-j characteristics.

    Sub-steps subdivide each output interval so the time interpolation of the
    velocity field stays piecewise smooth along the integration.
    """
    x0s = np.atleast_1d(np.asarray(x0s, dtype=float))
    lam = _lambda_interp(traj, j)
    times = traj.times
    n_samples = (len(times) - 1) * n_sub + 1
    ts = np.empty(n_samples)
    Xs = np.empty((n_samples, len(x0s)))
    Vs = np.empty_like(Xs)
    ts[0] = times[0]
    Xs[0] = x0s

    def velocity(s, x):
        return lam.eval(s, x) - float(traj.shift.delta_dot(s))

    Vs[0] = velocity(ts[0], Xs[0])
    k = 0
    for m in range(len(times) - 1):
        h = (times[m + 1] - times[m]) / n_sub
        for _ in range(n_sub):
            s, x = ts[k], Xs[k]
            v1 = velocity(s, x)
            v2 = velocity(s + 0.5 * h, x + 0.5 * h * v1)
            k += 1
            ts[k] = s + h
            Xs[k] = x + h * v2
            Vs[k] = velocity(ts[k], Xs[k])
    X_half = float(traj.grid[-1])
    return [CharPath(family=j, x0=float(x0s[p]), times=ts.copy(),
                     positions=Xs[:, p].copy(), velocities=Vs[:, p].copy(),
                     grid_half_width=X_half)
            for p in range(len(x0s))]


def trace(traj: Trajectory, j: int, x0: float, n_sub: int = 4) -> CharPath:
    """Single-path convenience wrapper around trace_many."""
    return trace_many(traj, j, [x0], n_sub)[0]


def _endstate_E(model: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    out = []
    for U in (model.U_minus, model.U_plus):
        frame = decompose(model.A_at(U))
        out.append(np.diag(source_split(frame, model.Q_at(U)).E))
    return out[0], out[1]


def accumulate_H(path: CharPath, traj: Trajectory) -> np.ndarray:
    """Trapezoidal accumulation of the diagonal source along the path.

    Beyond the grid the integrand freezes at the endstate value of the exit
    side, matching the far-field boundary treatment of the dynamics.
    """
    j = path.family
    Einterp = _E_interp(traj, j)
    E_minus, E_plus = _endstate_E(traj.model)
    X_half = path.grid_half_width
    vals = np.empty_like(path.times)
    for k, (s, x) in enumerate(zip(path.times, path.positions)):
        if x < -X_half:
            vals[k] = E_minus[j]
        elif x > X_half:
            vals[k] = E_plus[j]
        else:
            vals[k] = Einterp.eval(s, np.array([x]))[0]
    H = np.concatenate([[0.0], np.cumsum(
        0.5 * (vals[1:] + vals[:-1]) * np.diff(path.times))])
    path.H = H
    return H


def _c_emp(path: CharPath, theta_E: float, t_max: float | None = None) -> float:
    """max over sampled pairs s <= t of H(t) - H(s) + theta_E (t - s)."""
    if path.H is None:
        raise InvalidParam("accumulate_H must run before the H-bound")
    mask = slice(None) if t_max is None else path.times <= t_max + 1e-12
    g = path.H[mask] + theta_E * path.times[mask]
    running_min = np.minimum.accumulate(g)
    return float(np.max(g - running_min))


@dataclass
class HBoundReport:
    theta_E: float
    C_emp: dict                 # family -> empirical constant
    C_emp_overall: float
    C_theory: dict              # family -> assembled integral bound
    half_horizon: float | None = None
    C_emp_half: float | None = None


def verify_H_bound(paths: list[CharPath], theta_E: float,
                   model: ModelSpec | None = None,
                   profile: ProfileRep | None = None,
                   c_nonchar: float | None = None,
                   eps_delta: float = 0.0,
                   compare_horizon: float | None = None,
                   growth_tol: float = 0.25) -> HBoundReport:
    """Empirical constant of the H-estimate over all paths and sampled pairs.

    When ``compare_horizon`` is given, the constant is also computed from the
    samples up to that time; growth beyond ``growth_tol`` (relative, with an
    absolute floor) raises NotBounded, the signature of a rate theta_E larger
    than the field actually provides.  With model and profile supplied the
    report carries the analytic-style comparison bound: the integral of the
    positive part of (steady damping coefficient + theta_E) divided by the
    slowest characteristic speed.
    """
    fams = sorted({p.family for p in paths})
    C_emp = {j: max(_c_emp(p, theta_E) for p in paths if p.family == j)
             for j in fams}
    overall = max(C_emp.values())
    report = HBoundReport(theta_E=theta_E, C_emp=C_emp, C_emp_overall=overall,
                          C_theory={})
    if model is not None and profile is not None:
        sf = profile_source_field(model, profile)
        speed = c_nonchar if c_nonchar is not None \
            else float(np.min(np.abs(sf.frames.lambdas)))
        speed = max(speed - eps_delta, 1e-12)
        for j in fams:
            excess = np.maximum(sf.E_diag[:, j] + theta_E, 0.0)
            report.C_theory[j] = float(np.trapezoid(excess, profile.grid) / speed)
    if compare_horizon is not None:
        C_half = max(_c_emp(p, theta_E, t_max=compare_horizon) for p in paths)
        report.half_horizon = compare_horizon
        report.C_emp_half = C_half
        scale = max(abs(C_half), 0.1 * theta_E * compare_horizon)
        if overall - C_half > growth_tol * scale:
            raise NotBounded(
                f"C_emp grows from {C_half:.4g} to {overall:.4g} across horizons; "
                f"theta_E = {theta_E} exceeds the damping the field provides")
    return report


@dataclass
class NoDampingRadius:
    R: float
    theta_E: float
    C_tail: float
    theta_tilde: float
    C_lip: float
    eps_budget: float


def no_damping_radius(model: ModelSpec, profile: ProfileRep, eps_budget: float,
                      theta_E: float | None = None) -> NoDampingRadius:
    """Smallest grid radius beyond which damping clears -theta_E with margin.

    Requires E_jj(Ubar(x)) + C_tail exp(-theta_tilde |x|) + C_lip eps <= -theta_E
    for all |x| >= R: the tail term covers the frame-transport part of the
    diagonal source (zero for state-independent A) and C_lip covers state
    perturbations up to the budget.
    """
    from .eigenframe import damping_rate

    if theta_E is None:
        theta_E = damping_rate(model).theta_E
    sf = profile_source_field(model, profile)
    frames = sf.frames
    n, N = sf.E_diag.shape

    # pure E part (no transport): diag of L Q R along the profile
    M = np.matmul(np.matmul(frames.L, model.Q_at(profile.values)), frames.R)
    E_pure = M[:, np.eye(N, dtype=bool)]

    transport = np.max(np.abs(sf.E_diag - E_pure), axis=1)
    rates = [profile.decay_fits[(side, 1)].rate for side in ("minus", "plus")
             if (side, 1) in profile.decay_fits]
    theta_tilde = min(rates) if rates else 1.0
    if np.max(transport) < 1e-13:
        C_tail = 0.0
    else:
        env = transport / np.exp(-theta_tilde * np.abs(profile.grid))
        C_tail = float(np.max(env))

    # Lipschitz constant of E_jj over the state box, by lattice sampling
    lo, hi = model.state_box
    axes = [np.linspace(lo[k], hi[k], 9) for k in range(model.N)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, model.N)
    Evals = np.full((len(mesh), N), np.nan)
    for i, U in enumerate(mesh):
        try:
            fr = decompose(model.A_at(U))
            Evals[i] = np.diag(source_split(fr, model.Q_at(U)).E)
        except Exception:
            continue
    Egrid = Evals.reshape(tuple(len(ax) for ax in axes) + (N,))
    C_lip = 0.0
    for k in range(model.N):
        h = axes[k][1] - axes[k][0]
        if h == 0.0:
            continue
        d = np.diff(Egrid, axis=k) / h
        if np.all(np.isnan(d)):
            continue
        C_lip = max(C_lip, float(np.nanmax(np.abs(d))))

    margin = np.max(E_pure, axis=1) + C_tail * np.exp(
        -theta_tilde * np.abs(profile.grid)) + C_lip * eps_budget + theta_E
    bad = margin > 0.0
    if bad[0] or bad[-1]:
        raise EpsilonTooLarge(
            f"no radius exists: margin {margin[-1 if bad[-1] else 0]:.3e} > 0 "
            f"at the grid edge (eps_budget {eps_budget})")
    R = float(np.max(np.abs(profile.grid[bad]))) if np.any(bad) else 0.0
    return NoDampingRadius(R=R, theta_E=theta_E, C_tail=C_tail,
                           theta_tilde=theta_tilde, C_lip=C_lip,
                           eps_budget=eps_budget)


def scan_trajectory_damping(traj: Trajectory, R: float) -> float:
    """Post-hoc sup of the diagonal source over |x| >= R along a trajectory."""
    mask = np.abs(traj.grid) >= R
    worst = -np.inf
    for i in range(traj.n_times):
        worst = max(worst, float(np.max(traj.source_field(i).E_diag[mask])))
    return worst


def duhamel_residual(traj: Trajectory, path: CharPath) -> float:
    """Consistency of the stored field with its Duhamel representation.

    Reconstructs Phi_j(t, X(t)) from Phi_j(0, x0) e^{H(t)} plus the
    accumulated forcing integral and returns the worst mismatch at output
    times while the path stays inside the grid.
    """
    j = path.family
    if path.H is None:
        accumulate_H(path, traj)
    Phi_fields = []
    G_fields = []
    for i in range(traj.n_times):
        Phi, G = phi_and_forcing(traj, i)
        Phi_fields.append(Phi[:, j])
        G_fields.append(G[:, j])
    Phi_interp = _FieldInterp(traj.times, traj.grid, np.stack(Phi_fields))
    G_interp = _FieldInterp(traj.times, traj.grid, np.stack(G_fields))

    G_path = np.array([G_interp.eval(s, np.array([x]))[0]
                       for s, x in zip(path.times, path.positions)])
    n_sub = (len(path.times) - 1) // (traj.n_times - 1)
    phi0 = Phi_interp.eval(0.0, np.array([path.x0]))[0]
    worst = 0.0
    exit_t = path.exit_time
    for m in range(traj.n_times):
        k = m * n_sub
        t = path.times[k]
        if exit_t is not None and t >= exit_t:
            break
        H_t = path.H[k]
        ts = path.times[:k + 1]
        integrand = np.exp(H_t - path.H[:k + 1]) * G_path[:k + 1]
        integral = np.trapezoid(integrand, ts) if k > 0 else 0.0
        recon = phi0 * np.exp(H_t) + integral
        stored = Phi_interp.eval(t, np.array([path.positions[k]]))[0]
        worst = max(worst, abs(recon - stored))
    return worst
