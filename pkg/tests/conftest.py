"""Shared fixtures and trajectory fabrication helpers."""

from __future__ import annotations

import numpy as np
import pytest

from relaxdamp import build_custom, build_jinxin, exact_jinxin_profile
from relaxdamp.dynamics import ShiftSpec, Trajectory
from relaxdamp.poly import Poly
from relaxdamp.profile import constant_profile


@pytest.fixture(scope="session")
def jinxin():
    return build_jinxin(a=2.0, eps=1.0, flux=[0.0, 0.0, 0.5], u_minus=1.0, u_plus=-1.0)


@pytest.fixture(scope="session")
def jinxin_profile(jinxin):
    return exact_jinxin_profile(jinxin, np.linspace(-40.0, 40.0, 4001))


def scalar_model(speed: float = 2.0, decay: float = 0.25):
    """1x1 advection-relaxation model u_t + speed u_x = -decay u."""
    return build_custom(
        "scalar", 1, [[speed]], [Poly.variable(1, 0).scaled(-decay)],
        U_minus=[0.0], U_plus=[0.0], state_box=([-1.0], [1.0]),
    )


def synthetic_trajectory(model, profile, field, T: float, n_out: int,
                         shift: ShiftSpec | None = None) -> Trajectory:
    """Fabricate a Trajectory from a manufactured field U(t, x)."""
    times = np.linspace(0.0, T, n_out + 1)
    grid = profile.grid
    states = np.stack([field(t, grid) for t in times])
    zeros = np.zeros((n_out + 1, model.N))
    return Trajectory(
        model=model, profile=profile,
        shift=shift if shift is not None else ShiftSpec(kind="zero"),
        backend="synthetic", grid=grid, times=times, states=states,
        b_left=zeros, b_right=zeros.copy(), dt=times[1] - times[0],
        cfl_observed=0.0, budget=1.0,
    )


__all__ = ["scalar_model", "synthetic_trajectory", "constant_profile"]
