"""Stationary shock profiles.

Solves A(U)U_x = q(U) connecting the endstates, either in closed form
(Jin-Xin with quadratic flux reduces to a scalar logistic ODE with a tanh
heteroclinic) or by shooting from the one-dimensional unstable manifold of
the left endstate.  Derivative samples come from the ODE right-hand side and
its exact chain-rule derivatives, never from differencing the grid, so the
profile residual stays at rounding level and the tails stay noise-free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .errors import (
    InvalidParam,
    NoConnection,
    NotApplicable,
    NoUnstableDirection,
    TailBelowNoise,
)
from .model import ModelSpec
from .poly import poly_matrix_eval

NOISE_FLOOR = 1e-13
TAIL_FRACTION = 0.5  # decay fits use |x| in [TAIL_FRACTION*X, X]
ENVELOPE_SLACK = 1.05


@dataclass(frozen=True)
class DecayFit:
    """Exponential envelope c * exp(-rate * |x|) fitted to one tail.

    When the tail sits under the noise floor, ``rate`` is only the lower
    bound implied by reaching the floor inside the window and
    ``is_lower_bound`` is set.
    """

    side: str
    order: int
    amplitude: float
    rate: float
    envelope_factor: float  # max(data / fit); ~1 for a clean exponential
    is_lower_bound: bool = False


@dataclass
class ProfileRep:
    """Sampled stationary profile with exact derivative samples and cubic interpolation."""

    grid: np.ndarray
    values: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    U_minus: np.ndarray
    U_plus: np.ndarray
    decay_fits: dict = field(default_factory=dict)

    def __post_init__(self):
        self._interp = CubicHermiteSpline(self.grid, self.values, self.d1, axis=0)
        self._interp_d1 = CubicHermiteSpline(self.grid, self.d1, self.d2, axis=0)
        self._interp_d2 = CubicHermiteSpline(self.grid, self.d2, self.d3, axis=0)
        self._interp_d3 = CubicSpline(self.grid, self.d3, axis=0)

    @property
    def half_width(self) -> float:
        return float(self.grid[-1])

    def eval(self, x) -> np.ndarray:
        return self._interp(x)

    def eval_d1(self, x) -> np.ndarray:
        return self._interp_d1(x)

    def eval_d2(self, x) -> np.ndarray:
        return self._interp_d2(x)

    def eval_d3(self, x) -> np.ndarray:
        return self._interp_d3(x)

    @property
    def endstate_gap(self) -> float:
        return float(max(np.max(np.abs(self.values[0] - self.U_minus)),
                         np.max(np.abs(self.values[-1] - self.U_plus))))

    def decay_fit(self, side: str, order: int) -> DecayFit:
        return self.decay_fits[(side, order)]


def ode_rhs(model: ModelSpec, U: np.ndarray) -> np.ndarray:
    """Profile ODE right-hand side g(U) = A(U)^{-1} q(U)."""
    return np.linalg.solve(model.A_at(U), model.q_at(U))


def ode_rhs_jacobian(model: ModelSpec, U: np.ndarray) -> np.ndarray:
    """Exact Jacobian dg of the profile ODE right-hand side.

    Differentiating A g = q gives dg = A^{-1} (Q - B) with
    B[:, k] = (dA/dU_k) g.
    """
    A = model.A_at(U)
    g = np.linalg.solve(A, model.q_at(U))
    Q = model.Q_at(U)
    B = np.empty_like(Q)
    for k in range(model.N):
        dAk = poly_matrix_eval(model.dA_entries[k], U)
        B[:, k] = dAk @ g
    return np.linalg.solve(A, Q - B)


def _second_directional(model: ModelSpec, U: np.ndarray, d: np.ndarray,
                        g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """g''(U)[d, d] from twice-differentiated A g = q along direction d."""
    A = model.A_at(U)
    N = model.N
    Ad = np.zeros((N, N))
    Add = np.zeros((N, N))
    qdd = np.zeros(N)
    for k in range(N):
        Ad += poly_matrix_eval(model.dA_entries[k], U) * d[k]
        qdd += (poly_matrix_eval(model.dQ_entries[k], U) @ d) * d[k]
        for l in range(N):
            Add += poly_matrix_eval(model.d2A_entries[k][l], U) * (d[k] * d[l])
    return np.linalg.solve(A, qdd - Add @ g - 2.0 * Ad @ (dg @ d))


def _derivative_samples(model: ModelSpec, values: np.ndarray):
    """Exact d/dx, d2/dx2, d3/dx3 of the profile from chain rules on g = A^{-1} q."""
    n = values.shape[0]
    d1 = np.empty_like(values)
    d2 = np.empty_like(values)
    d3 = np.empty_like(values)
    for i in range(n):
        U = values[i]
        g = ode_rhs(model, U)
        dg = ode_rhs_jacobian(model, U)
        d1[i] = g
        d2[i] = dg @ g
        d3[i] = _second_directional(model, U, g, g, dg) + dg @ (dg @ g)
    return d1, d2, d3


def _flux_degree(flux) -> int:
    deg = -1
    for k, c in enumerate(flux):
        if c != 0.0:
            deg = k
    return deg


def exact_jinxin_profile(model: ModelSpec, grid: np.ndarray) -> ProfileRep:
    """Closed-form tanh profile for Jin-Xin with quadratic flux.

    The reduced scalar ODE eps (a^2 - s^2) u_x = f(u) - s u - vbar factors as
    c2 (u - u_minus)(u - u_plus), whose heteroclinic pinned at the midpoint is
    u(x) = m - D tanh(k x) with m, D the endstate midpoint/half-gap and
    k = c2 D / (eps (a^2 - s^2)).  The second component is v = s u + vbar.
    """
    if model.name != "jinxin" or model.flux_coeffs is None:
        raise NotApplicable("closed form requires the built-in Jin-Xin model")
    flux = model.flux_coeffs
    if _flux_degree(flux) != 2:
        raise NotApplicable("closed form requires a quadratic flux")
    a = model.params["a"]
    eps = model.params["eps"]
    s = model.shock_speed
    u_m, u_p = model.params["u_minus"], model.params["u_plus"]
    c2 = flux[2]

    def fprime(u):
        return sum(k * c * u ** (k - 1) for k, c in enumerate(flux) if k >= 1)

    if abs(fprime(u_m)) >= a or abs(fprime(u_p)) >= a:
        raise NotApplicable("endstates violate the subcharacteristic condition")
    if c2 * (u_m - u_p) <= 0:
        raise NotApplicable("endstates violate the entropy ordering")

    m = 0.5 * (u_m + u_p)
    D = 0.5 * (u_m - u_p)
    k = c2 * D / (eps * (a * a - s * s))
    vbar = model.U_minus[1] - s * u_m

    x = np.asarray(grid, dtype=float)
    th = np.tanh(k * x)
    sech2 = 1.0 / np.cosh(k * x) ** 2
    u = m - D * th
    u1 = -D * k * sech2
    u2 = 2.0 * D * k**2 * sech2 * th
    u3 = 2.0 * D * k**3 * sech2 * (sech2 - 2.0 * th**2)

    values = np.stack([u, s * u + vbar], axis=1)
    d1 = np.stack([u1, s * u1], axis=1)
    d2 = np.stack([u2, s * u2], axis=1)
    d3 = np.stack([u3, s * u3], axis=1)
    prof = ProfileRep(grid=x, values=values, d1=d1, d2=d2, d3=d3,
                      U_minus=model.U_minus.copy(), U_plus=model.U_plus.copy())
    _fit_all_orders(prof)
    return prof


def solve_profile(model: ModelSpec, X: float, n: int, tol: float = 1e-8) -> ProfileRep:
    """Shoot along the unstable manifold of U_minus and pin the crossing at x = 0.

    The launch offset is calibrated so the midpoint crossing happens at least
    X units into the orbit; grid points left of the launch fall back to the
    linearized tail U_minus + eta w exp(mu xi).
    """
    if model.U_minus is None or model.U_plus is None:
        raise InvalidParam("model has no endstates to connect")
    if n < 2:
        raise InvalidParam(f"grid size must be >= 2, got {n}")
    U_m, U_p = model.U_minus, model.U_plus
    scale = float(max(1.0, np.max(np.abs(U_p - U_m))))

    J = ode_rhs_jacobian(model, U_m)
    eigvals, eigvecs = np.linalg.eig(J)
    unstable = [i for i in range(model.N)
                if eigvals[i].real > 1e-9 * max(1.0, np.max(np.abs(J)))]
    if len(unstable) != 1 or abs(eigvals[unstable[0]].imag) > 1e-12:
        raise NoUnstableDirection(
            f"linearization at U- has eigenvalues {eigvals}; need exactly one "
            "real unstable direction")
    mu = float(eigvals[unstable[0]].real)
    w = np.real(eigvecs[:, unstable[0]])
    w = w / np.max(np.abs(w))
    if w @ (U_p - U_m) < 0:
        w = -w

    half_gap = 0.5 * abs(U_p[0] - U_m[0])
    eta = half_gap * np.exp(-mu * (X + 10.0))
    eta = float(np.clip(eta, 1e-12 * scale, 1e-6 * scale))
    mid = 0.5 * (U_m[0] + U_p[0])
    direction = np.sign(U_p[0] - U_m[0])

    lo, hi = model.state_box
    center = 0.5 * (lo + hi)
    radius = 0.5 * np.max(hi - lo)

    def rhs(_xi, y):
        return ode_rhs(model, y)

    def crossing(_xi, y):
        return y[0] - mid
    crossing.direction = direction

    def diverged(_xi, y):
        return np.max(np.abs(y - center)) - 3.0 * radius
    diverged.terminal = True

    xi_max = 4.0 * (X + np.log(scale / eta) / mu + 50.0)
    sol = solve_ivp(rhs, (0.0, xi_max), U_m + eta * w, method="RK45",
                    rtol=tol / 10.0, atol=tol * 1e-4 * scale,
                    events=[crossing, diverged], dense_output=True)
    if sol.t_events[1].size > 0:
        raise NoConnection("orbit left the admissible region before the midpoint crossing")
    if sol.t_events[0].size == 0:
        raise NoConnection("orbit never crossed the endstate midpoint")
    xi_star = float(sol.t_events[0][0])

    # Approach rate at U+ sets how far past the grid the connection check runs.
    J_p = ode_rhs_jacobian(model, U_p)
    stable = np.array([ev.real for ev in np.linalg.eigvals(J_p) if ev.real < -1e-12])
    rate_p = float(-stable.max()) if stable.size else mu
    xi_end = xi_star + X + np.log(scale / tol) / rate_p + 10.0

    y_star = sol.sol(xi_star)
    sol2 = solve_ivp(rhs, (xi_star, xi_end), y_star, method="RK45",
                     rtol=tol / 10.0, atol=tol * 1e-4 * scale,
                     events=[diverged], dense_output=True)
    if sol2.t_events[0].size > 0 or not sol2.success:
        raise NoConnection("orbit diverged past the midpoint crossing")
    miss = np.max(np.abs(sol2.y[:, -1] - U_p))
    if miss > tol:
        raise NoConnection(f"orbit misses U+ by {miss:.3e} (tol {tol:.1e})")

    grid = np.linspace(-X, X, n)
    values = np.empty((n, model.N))
    for i, x in enumerate(grid):
        xi = xi_star + x
        if xi < 0.0:
            values[i] = U_m + eta * w * np.exp(mu * xi)
        elif xi <= sol.t[-1]:
            values[i] = sol.sol(xi)
        else:
            values[i] = sol2.sol(xi)
    d1, d2, d3 = _derivative_samples(model, values)
    prof = ProfileRep(grid=grid, values=values, d1=d1, d2=d2, d3=d3,
                      U_minus=U_m.copy(), U_plus=U_p.copy())
    _fit_all_orders(prof)
    return prof


def constant_profile(model: ModelSpec, U0, X: float, n: int) -> ProfileRep:
    """Synthetic constant profile at an equilibrium state (for decoupled tests)."""
    U0 = np.asarray(U0, dtype=float)
    grid = np.linspace(-X, X, n)
    values = np.tile(U0, (n, 1))
    zeros = np.zeros_like(values)
    return ProfileRep(grid=grid, values=values, d1=zeros, d2=zeros.copy(),
                      d3=zeros.copy(), U_minus=U0.copy(), U_plus=U0.copy())


def fit_decay(profile: ProfileRep, k: int) -> dict:
    """Least-squares exponential fit of tail decay for derivative order k.

    Fits log|d^k(U - U_end)| against |x| on each tail and returns one
    DecayFit per side.  Raises TailBelowNoise when the tail has already
    decayed under the noise floor, carrying the rate lower bound implied by
    hitting the floor inside the window.
    """
    if k > 2 or k < 0:
        raise InvalidParam(f"derivative order must be 0, 1, or 2, got {k}")
    x = profile.grid
    X = profile.half_width
    fits = {}
    for side, mask, U_end in (
        ("minus", x <= -TAIL_FRACTION * X, profile.U_minus),
        ("plus", x >= TAIL_FRACTION * X, profile.U_plus),
    ):
        if k == 0:
            dev_full = profile.values - U_end
        elif k == 1:
            dev_full = profile.d1
        else:
            dev_full = profile.d2
        data_full = np.max(np.abs(dev_full), axis=1)
        data = data_full[mask]
        ax = np.abs(x[mask])
        if data.max() < NOISE_FLOOR:
            scale = float(data_full.max())
            bound = 0.0 if scale <= NOISE_FLOOR else \
                float(np.log(scale / NOISE_FLOOR) / (TAIL_FRACTION * X))
            raise TailBelowNoise(
                f"{side} tail of order {k} below noise floor",
                rate_lower_bound=bound,
            )
        keep = data > NOISE_FLOOR
        coeffs = np.polyfit(ax[keep], np.log(data[keep]), 1)
        rate = -float(coeffs[0])
        amp = float(np.exp(coeffs[1]))
        envelope = float(np.max(data[keep] / (amp * np.exp(-rate * ax[keep]))))
        fits[side] = DecayFit(side=side, order=k, amplitude=amp, rate=rate,
                              envelope_factor=envelope)
    return fits


def _fit_all_orders(profile: ProfileRep) -> None:
    for k in range(3):
        try:
            fits = fit_decay(profile, k)
        except TailBelowNoise as exc:
            # tails already under the floor: keep the implied lower bound
            for side in ("minus", "plus"):
                profile.decay_fits[(side, k)] = DecayFit(
                    side=side, order=k, amplitude=NOISE_FLOOR,
                    rate=exc.rate_lower_bound or 0.0,
                    envelope_factor=1.0, is_lower_bound=True)
            continue
        for side, fit in fits.items():
            profile.decay_fits[(side, k)] = fit


def residual(profile: ProfileRep, model: ModelSpec) -> float:
    """Discrete sup over grid nodes of |A(U) U_x - q(U)|."""
    A = model.A_at(profile.values)
    q = model.q_at(profile.values)
    r = np.einsum("nij,nj->ni", A, profile.d1) - q
    return float(np.max(np.abs(r)))
