"""JSON configuration: the single source of truth for a pipeline run.

Parsing is strict: unknown keys are rejected with their full path, and every
numeric field is range-checked.  Defaults reproduce the canonical Jin-Xin
verification run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .model import ModelSpec, build_custom, build_jinxin
from .dynamics import PerturbationSpec, ShiftSpec


def _default_config() -> dict:
    return {
        "model": {
            "kind": "jinxin",
            "a": 2.0,
            "eps": 1.0,
            "flux": [0.0, 0.0, 0.5],
            "u_minus": 1.0,
            "u_plus": -1.0,
        },
        "profile": {
            "X": 40.0,
            "n": 4001,
            "tol": 1e-8,
            "method": "shooting",
        },
        "spectral": {
            "xi_min": 0.01,
            "xi_max": 100.0,
            "n_xi": 400,
            "margin": 0.1,
            "c_min": 0.01,
        },
        "dynamics": {
            "perturbation": {
                "kind": "gaussian",
                "amplitude": 0.01,
                "width": 2.0,
                "center": 0.0,
                "direction": None,
                "d_minus": None,
                "d_plus": None,
                "blend_width": 2.0,
                "h": 0.0,
            },
            "shift": {
                "kind": "zero",
                "rate": 0.0,
                "amplitude": 0.0,
                "frequency": 0.0,
            },
            "T": 80.0,
            "backend": "moc",
            "dx": 0.02,
            "cfl": 0.45,
            "n_out": 200,
            "budget": 0.02,
            "trajectory_stride_x": 40,
            "trajectory_stride_t": 20,
        },
        "verify": {
            "theta_grid": {"start": 0.01, "stop": 0.3, "num": 30},
            "C_cap": 1000.0,
            "K": 2,
            "include_l2": True,
            "C_alpha": None,
            "c_alpha": None,
            "n_paths": 20,
            "n_sub": 4,
            "growth_tol": 0.25,
        },
        "output_dir": "out",
        "seed": 1234,
    }


CUSTOM_MODEL_KEYS = {"kind", "name", "N", "A", "q", "Q", "U_minus", "U_plus",
                     "state_box", "shock_speed"}


def _merge(defaults: dict, given: dict, path: str) -> dict:
    # the model section's schema depends on its kind
    if path == "" and isinstance(given.get("model"), dict) \
            and given["model"].get("kind") == "custom":
        given = dict(given)
        model = given.pop("model")
        unknown = set(model) - CUSTOM_MODEL_KEYS
        if unknown:
            key = sorted(unknown)[0]
            raise ValidationError(f"unknown key model.{key}",
                                  key_path=f"model.{key}")
        out = _merge({k: v for k, v in _default_config().items() if k != "model"},
                     given, path)
        out["model"] = dict(model)
        return out
    out = {}
    for key, dval in defaults.items():
        if key in given:
            gval = given[key]
            if isinstance(dval, dict) and gval is not None:
                if not isinstance(gval, dict):
                    raise ValidationError(f"expected object at {path}{key}",
                                          key_path=path + key)
                out[key] = _merge(dval, gval, f"{path}{key}.")
            else:
                out[key] = gval
        else:
            out[key] = dval
    unknown = set(given) - set(defaults)
    if unknown:
        key = sorted(unknown)[0]
        raise ValidationError(f"unknown key {path}{key}", key_path=path + key)
    return out


def _require(cond: bool, message: str, key_path: str) -> None:
    if not cond:
        raise ValidationError(f"{message} at {key_path}", key_path=key_path)


def _check_number(value, key_path, positive=False, nonnegative=False,
                  integer=False, minimum=None, maximum=None):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    _require(ok, f"expected a number, got {value!r}", key_path)
    if integer:
        _require(float(value).is_integer(), f"expected an integer, got {value!r}",
                 key_path)
    if positive:
        _require(value > 0, f"must be positive, got {value!r}", key_path)
    if nonnegative:
        _require(value >= 0, f"must be >= 0, got {value!r}", key_path)
    if minimum is not None:
        _require(value >= minimum, f"must be >= {minimum}, got {value!r}", key_path)
    if maximum is not None:
        _require(value <= maximum, f"must be <= {maximum}, got {value!r}", key_path)


@dataclass
class Config:
    """Validated configuration with builders for the run's domain objects."""

    raw: dict = field(default_factory=_default_config)

    @property
    def model_cfg(self) -> dict:
        return self.raw["model"]

    @property
    def profile_cfg(self) -> dict:
        return self.raw["profile"]

    @property
    def spectral_cfg(self) -> dict:
        return self.raw["spectral"]

    @property
    def dynamics_cfg(self) -> dict:
        return self.raw["dynamics"]

    @property
    def verify_cfg(self) -> dict:
        return self.raw["verify"]

    @property
    def output_dir(self) -> str:
        return self.raw["output_dir"]

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def build_model(self) -> ModelSpec:
        mc = self.model_cfg
        if mc["kind"] == "jinxin":
            return build_jinxin(a=mc["a"], eps=mc["eps"], flux=mc["flux"],
                                u_minus=mc["u_minus"], u_plus=mc["u_plus"])
        return build_custom(
            name=mc.get("name", "custom"), N=int(mc["N"]),
            A_entries=mc["A"], q_entries=mc["q"],
            U_minus=mc.get("U_minus"), U_plus=mc.get("U_plus"),
            Q_entries=mc.get("Q"), state_box=mc.get("state_box"),
            shock_speed=mc.get("shock_speed", 0.0),
        )

    def build_perturbation(self) -> PerturbationSpec:
        pc = self.dynamics_cfg["perturbation"]
        kw = dict(kind=pc["kind"])
        if pc["kind"] == "gaussian":
            kw.update(amplitude=pc["amplitude"], width=pc["width"],
                      center=pc["center"])
            if pc["direction"] is not None:
                kw["direction"] = tuple(pc["direction"])
        elif pc["kind"] == "offset":
            kw.update(d_minus=tuple(pc["d_minus"]), d_plus=tuple(pc["d_plus"]),
                      blend_width=pc["blend_width"])
        elif pc["kind"] == "shift_difference":
            kw.update(h=pc["h"])
        return PerturbationSpec(**kw)

    def build_shift(self) -> ShiftSpec:
        sc = self.dynamics_cfg["shift"]
        return ShiftSpec(kind=sc["kind"], rate=sc["rate"],
                         amplitude=sc["amplitude"], frequency=sc["frequency"])

    def theta_grid(self) -> np.ndarray:
        tg = self.verify_cfg["theta_grid"]
        return np.linspace(tg["start"], tg["stop"], int(tg["num"]))


def _validate(raw: dict) -> None:
    mc = raw["model"]
    _require(mc["kind"] in ("jinxin", "custom"),
             f"kind must be jinxin or custom, got {mc['kind']!r}", "model.kind")
    if mc["kind"] == "jinxin":
        _check_number(mc["a"], "model.a", positive=True)
        _check_number(mc["eps"], "model.eps", positive=True)
        _require(isinstance(mc["flux"], list) and len(mc["flux"]) >= 1,
                 "flux must be a coefficient list", "model.flux")
        _check_number(mc["u_minus"], "model.u_minus")
        _check_number(mc["u_plus"], "model.u_plus")
        _require(mc["u_minus"] != mc["u_plus"], "endstates must differ",
                 "model.u_plus")
    else:
        _check_number(mc.get("N", 0), "model.N", integer=True, minimum=1)
        n = int(mc["N"])
        _require(isinstance(mc.get("A"), list) and len(mc["A"]) == n
                 and all(isinstance(row, list) and len(row) == n
                         for row in mc["A"]),
                 f"A must be an {n}x{n} entry array", "model.A")
        _require(isinstance(mc.get("q"), list) and len(mc["q"]) == n,
                 f"q must list {n} entries", "model.q")

    pc = raw["profile"]
    _check_number(pc["X"], "profile.X", positive=True)
    _check_number(pc["n"], "profile.n", integer=True, minimum=11)
    _check_number(pc["tol"], "profile.tol", positive=True)
    _require(pc["method"] in ("shooting", "exact"),
             "method must be shooting or exact", "profile.method")

    sc = raw["spectral"]
    _check_number(sc["xi_min"], "spectral.xi_min", positive=True)
    _check_number(sc["xi_max"], "spectral.xi_max", positive=True)
    _require(sc["xi_max"] > sc["xi_min"], "xi_max must exceed xi_min",
             "spectral.xi_max")
    _check_number(sc["n_xi"], "spectral.n_xi", integer=True, minimum=100)
    _check_number(sc["margin"], "spectral.margin", positive=True)
    _check_number(sc["c_min"], "spectral.c_min", positive=True)

    dc = raw["dynamics"]
    _require(dc["perturbation"]["kind"] in
             ("gaussian", "offset", "shift_difference", "zero"),
             "unknown perturbation kind", "dynamics.perturbation.kind")
    pk = dc["perturbation"]
    if pk["kind"] == "gaussian":
        _check_number(pk["amplitude"], "dynamics.perturbation.amplitude",
                      nonnegative=True)
        _check_number(pk["width"], "dynamics.perturbation.width", positive=True)
    if pk["kind"] == "offset":
        _require(isinstance(pk["d_minus"], list),
                 "offset needs d_minus", "dynamics.perturbation.d_minus")
        _require(isinstance(pk["d_plus"], list),
                 "offset needs d_plus", "dynamics.perturbation.d_plus")
        _check_number(pk["blend_width"], "dynamics.perturbation.blend_width",
                      positive=True)
    _require(dc["shift"]["kind"] in ("zero", "linear", "sinusoid"),
             "unknown shift kind", "dynamics.shift.kind")
    _check_number(dc["T"], "dynamics.T", positive=True)
    _require(dc["backend"] in ("moc", "reference"),
             "backend must be moc or reference", "dynamics.backend")
    _check_number(dc["dx"], "dynamics.dx", positive=True)
    _check_number(dc["cfl"], "dynamics.cfl", positive=True, maximum=0.9)
    _check_number(dc["n_out"], "dynamics.n_out", integer=True, minimum=1)
    _check_number(dc["budget"], "dynamics.budget", positive=True)
    _check_number(dc["trajectory_stride_x"], "dynamics.trajectory_stride_x",
                  integer=True, minimum=1)
    _check_number(dc["trajectory_stride_t"], "dynamics.trajectory_stride_t",
                  integer=True, minimum=1)

    vc = raw["verify"]
    tg = vc["theta_grid"]
    _check_number(tg["start"], "verify.theta_grid.start", positive=True)
    _check_number(tg["stop"], "verify.theta_grid.stop", positive=True)
    _require(tg["stop"] >= tg["start"], "stop must be >= start",
             "verify.theta_grid.stop")
    _check_number(tg["num"], "verify.theta_grid.num", integer=True, minimum=2)
    _check_number(vc["C_cap"], "verify.C_cap", positive=True)
    _check_number(vc["K"], "verify.K", integer=True, minimum=0, maximum=2)
    _require(isinstance(vc["include_l2"], bool), "include_l2 must be boolean",
             "verify.include_l2")
    if vc["C_alpha"] is not None:
        _check_number(vc["C_alpha"], "verify.C_alpha", positive=True)
    if vc["c_alpha"] is not None:
        _check_number(vc["c_alpha"], "verify.c_alpha", positive=True)
    _check_number(vc["n_paths"], "verify.n_paths", integer=True, minimum=1)
    _check_number(vc["n_sub"], "verify.n_sub", integer=True, minimum=1)
    _check_number(vc["growth_tol"], "verify.growth_tol", positive=True)

    _require(isinstance(raw["output_dir"], str) and raw["output_dir"],
             "output_dir must be a non-empty string", "output_dir")
    _check_number(raw["seed"], "seed", integer=True, nonnegative=True)


def parse_config(path) -> Config:
    """Load, merge with defaults, and validate a JSON config file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read config file {path}: {exc}") from exc
    try:
        given = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(given, dict):
        raise ValidationError("top-level config must be a JSON object")
    raw = _merge(_default_config(), given, "")
    _validate(raw)
    return Config(raw=raw)


def config_from_dict(given: dict) -> Config:
    """Validate an in-memory config dict (tests and embedding)."""
    raw = _merge(_default_config(), given, "")
    _validate(raw)
    return Config(raw=raw)
