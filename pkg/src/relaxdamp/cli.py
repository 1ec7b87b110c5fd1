"""Configuration-driven pipeline runner.

Subcommands chain the verification stages and write their artifacts as
key-sorted JSON and 17-significant-digit CSV, atomically (temp file +
rename), so identical configs reproduce byte-identical reports.

Exit codes: 0 success, 1 module error (serialized to error.json), 2 config
error, 3 assumptions or damping estimates failed certification.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import characteristics as chars
from . import damping_verifier as dv
from . import dynamics as dyn
from . import eigenframe as ef
from . import spectral_stability as spec
from .config import Config, parse_config
from .errors import (
    CertificationError,
    ConfigError,
    EmptyFeasible,
    NotBounded,
    NotDissipative,
    RelaxDampError,
)
from .model import validate_model
from .profile import exact_jinxin_profile, residual, solve_profile

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_CERTIFICATION = 3


# --- artifact writers -------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def _atomic_write(path: Path, data: str) -> None:
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    tmp.write_text(data, encoding="utf-8", newline="\n")
    os.replace(tmp, path)


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    _atomic_write(path, "\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def write_json(path: Path, payload: dict) -> None:
    _atomic_write(path, json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n")


# --- pipeline stages --------------------------------------------------------

def _build_profile(cfg: Config, model):
    pc = cfg.profile_cfg
    if pc["method"] == "exact":
        grid = np.linspace(-pc["X"], pc["X"], int(pc["n"]))
        return exact_jinxin_profile(model, grid)
    return solve_profile(model, X=pc["X"], n=int(pc["n"]), tol=pc["tol"])


def stage_profile(cfg: Config, out: Path) -> int:
    model = cfg.build_model()
    prof = _build_profile(cfg, model)
    N = model.N
    header = ["x"] + [f"U_{k+1}" for k in range(N)] + [f"dU_{k+1}" for k in range(N)]
    rows = (
        [prof.grid[i], *prof.values[i], *prof.d1[i]]
        for i in range(len(prof.grid))
    )
    write_csv(out / "profile.csv", header, rows)
    write_json(out / "profile.json", {
        "endstates": {"U_minus": model.U_minus, "U_plus": model.U_plus},
        "endstate_gap": prof.endstate_gap,
        "residual": residual(prof, model),
        "decay_fits": {
            f"{side}_{k}": {
                "amplitude": fit.amplitude,
                "rate": fit.rate,
                "envelope_factor": fit.envelope_factor,
            }
            for (side, k), fit in sorted(prof.decay_fits.items())
        },
    })
    return EXIT_OK


def stage_check(cfg: Config, out: Path) -> int:
    model = cfg.build_model()
    prof = _build_profile(cfg, model)
    sc = cfg.spectral_cfg

    report = validate_model(model, n_samples=100, seed=cfg.seed)
    assumptions: dict = {
        "model_validation": {
            "max_rel_jacobian_error": report.max_rel_jacobian_error,
            "n_samples": report.n_samples,
        },
    }

    res = residual(prof, model)
    rates = {f"{side}_{k}": prof.decay_fits[(side, k)].rate
             for side in ("minus", "plus") for k in range(3)}
    tail_bound = max(
        prof.decay_fits[(side, 0)].amplitude
        * np.exp(-prof.decay_fits[(side, 0)].rate * prof.half_width)
        for side in ("minus", "plus"))
    a1_ok = (res <= 1e-8 * (1.0 + float(np.max(np.abs(prof.values))))
             and all(r > 0 for r in rates.values())
             and prof.endstate_gap <= max(1e-6, 2.0 * tail_bound))
    assumptions["assumption1_profile"] = {
        "residual": res,
        "endstate_gap": prof.endstate_gap,
        "decay_rates": rates,
        "certified": bool(a1_ok),
    }

    hyp = spec.hyperbolicity_scan(model, prof, c_min=sc["c_min"])
    assumptions["assumption2_hyperbolicity"] = {
        "min_abs_lambda": hyp.min_abs_lambda,
        "min_gap": hyp.min_gap,
        "c_min": hyp.c_min,
        "certified": bool(hyp.passed),
    }

    cert = spec.dissipativity_certificate(model, xi_max=sc["xi_max"],
                                          n_xi=int(sc["n_xi"]),
                                          margin=sc["margin"],
                                          xi_min=sc["xi_min"])
    a3: dict = {
        "certificate": {
            "passed": cert.passed,
            "margin": cert.margin,
            "threshold_C": cert.threshold,
            "achieved_c": cert.achieved,
            "witness_xi": cert.witness_xi,
            "witness_re": cert.witness_re,
            "witness_side": cert.witness_side,
        },
    }
    theta_payload: dict = {}
    try:
        dr = ef.damping_rate(model)
        theta_payload = {
            "theta_E": dr.theta_E,
            "theta_E_signed": dr.theta_E_signed,
            "E_minus": dr.E_minus,
            "E_plus": dr.E_plus,
        }
        lam_max = max(np.max(np.abs(ef.decompose(model.A_at(U)).lambdas))
                      for U in (model.U_minus, model.U_plus))
        xi_base = 10.0 * lam_max
        expansions = {
            side: spec.expansion_check(model, side,
                                       [xi_base, 2 * xi_base, 4 * xi_base, 8 * xi_base])
            for side in ("minus", "plus")
        }
        a3["expansion"] = {
            side: {"remainder_constant": e.remainder_constant,
                   "E_diag": e.E_diag}
            for side, e in expansions.items()
        }
        dissipative = True
    except NotDissipative as exc:
        theta_payload = {"theta_E": None, "not_dissipative": str(exc)}
        dissipative = False
    a3["certified"] = bool(cert.passed and dissipative)
    assumptions["assumption3_dissipativity"] = a3
    assumptions.update(theta_payload)
    all_ok = a1_ok and hyp.passed and a3["certified"]
    assumptions["certified"] = bool(all_ok)

    sf = ef.profile_source_field(model, prof)
    N = model.N
    header = (["x"] + [f"lambda_{j+1}" for j in range(N)]
              + [f"E_{j+1}{j+1}" for j in range(N)] + ["normF", "normTheta"])
    rows = (
        [prof.grid[i], *sf.frames.lambdas[i], *sf.E_diag[i],
         np.max(np.abs(sf.F_tilde[i])), np.max(np.abs(sf.Theta[i]))]
        for i in range(len(prof.grid))
    )
    write_csv(out / "frames.csv", header, rows)

    spectrum_rows = []
    for side in ("minus", "plus"):
        scan = cert.scans[side]
        for m, xi in enumerate(scan.xi_grid):
            for j in range(N):
                mu = scan.spectra[m, j]
                spectrum_rows.append([side, xi, j + 1, mu.real, mu.imag])
    write_csv(out / "spectrum.csv", ["side", "xi", "j", "re_mu", "im_mu"],
              spectrum_rows)
    write_json(out / "assumptions.json", assumptions)
    return EXIT_OK if all_ok else EXIT_CERTIFICATION


def _run_evolve(cfg: Config):
    model = cfg.build_model()
    prof = _build_profile(cfg, model)
    dc = cfg.dynamics_cfg
    traj = dyn.evolve(model, prof, cfg.build_perturbation(), cfg.build_shift(),
                      T=dc["T"], backend=dc["backend"], dx=dc["dx"],
                      cfl=dc["cfl"], n_out=int(dc["n_out"]),
                      budget=dc["budget"])
    return model, prof, traj


def _write_trajectory(cfg: Config, traj: dyn.Trajectory, out: Path) -> None:
    dc = cfg.dynamics_cfg
    sx = int(dc["trajectory_stride_x"])
    st = int(dc["trajectory_stride_t"])
    N = traj.model.N
    header = (["t", "x"] + [f"U_{k+1}" for k in range(N)]
              + [f"Phi_{k+1}" for k in range(N)] + [f"Psi_{k+1}" for k in range(N)])
    rows = []
    for i in range(0, traj.n_times, st):
        snap = traj.snapshot(i)
        frames = traj.frames(i)
        Phi = np.einsum("njk,nk->nj", frames.L, snap.U)
        Psi = np.einsum("njk,nk->nj", frames.L, snap.W)
        for p in range(0, len(traj.grid), sx):
            rows.append([snap.t, traj.grid[p], *snap.U[p], *Phi[p], *Psi[p]])
    write_csv(out / "trajectory.csv", header, rows)

    norm_rows = []
    dd = np.abs(traj.shift.delta_dot(traj.times))
    series = {k: dv.norm_series(traj, k) for k in ("c0", "c1", "c2", "l2", "h2")}
    for i, t in enumerate(traj.times):
        norm_rows.append([t, series["c0"][i], series["c1"][i], series["c2"][i],
                          series["l2"][i], series["h2"][i], dd[i]])
    write_csv(out / "norms.csv",
              ["t", "c0", "c1", "c2", "l2", "h2", "abs_ddelta"], norm_rows)


def stage_evolve(cfg: Config, out: Path) -> int:
    _, _, traj = _run_evolve(cfg)
    _write_trajectory(cfg, traj, out)
    return EXIT_OK


def stage_verify(cfg: Config, out: Path) -> int:
    model, prof, traj = _run_evolve(cfg)
    vc = cfg.verify_cfg
    dc = cfg.dynamics_cfg
    theta_grid = cfg.theta_grid()
    dr = ef.damping_rate(model)
    shift = traj.shift

    radius = chars.no_damping_radius(model, prof, eps_budget=dc["budget"],
                                     theta_E=dr.theta_E)
    span = max(2.0 * radius.R, 10.0)
    starts = np.linspace(-span, span, int(vc["n_paths"]))
    paths = []
    for j in range(model.N):
        fam = chars.trace_many(traj, j, starts, n_sub=int(vc["n_sub"]))
        for p in fam:
            chars.accumulate_H(p, traj)
        paths.extend(fam)

    certification_failures = []
    try:
        hb = chars.verify_H_bound(
            paths, dr.theta_E, model=model, profile=prof,
            eps_delta=shift.eps_delta, compare_horizon=float(traj.times[-1]) / 2.0,
            growth_tol=vc["growth_tol"])
        hb_payload = {
            "theta_E": dr.theta_E,
            "C_emp": {str(j): v for j, v in hb.C_emp.items()},
            "C_emp_overall": hb.C_emp_overall,
            "C_emp_half_horizon": hb.C_emp_half,
            "C_theory": {str(j): v for j, v in hb.C_theory.items()},
            "bounded": True,
        }
    except NotBounded as exc:
        certification_failures.append(f"H-bound: {exc}")
        hb_payload = {"theta_E": dr.theta_E, "bounded": False, "error": str(exc)}

    c_nonchar = float(np.min(np.abs(traj.frames(0).lambdas)))
    exit_bound = 2.0 * radius.R / max(c_nonchar - shift.eps_delta, 1e-12)
    hb_payload.update({
        "no_damping_radius": {
            "R": radius.R, "C_tail": radius.C_tail,
            "theta_tilde": radius.theta_tilde, "C_lip": radius.C_lip,
            "eps_budget": radius.eps_budget,
        },
        "exit_time_bound": exit_bound,
        "damping_scan_beyond_R": chars.scan_trajectory_damping(traj, radius.R),
    })
    write_json(out / "h_bound.json", hb_payload)

    path_rows = []
    n_sub = int(vc["n_sub"])
    for p in paths:
        for k in range(0, len(p.times), n_sub):
            path_rows.append([p.family + 1, p.x0, p.times[k], p.positions[k],
                              p.H[k]])
    write_csv(out / "characteristics.csv", ["j", "x0", "s", "X", "H"], path_rows)

    kinds = [f"c{k}" for k in range(int(vc["K"]) + 1)]
    include_l2 = vc["include_l2"] and cfg.build_perturbation().kind != "offset"
    if include_l2:
        kinds += ["l2", "h2"]
    tables = {}
    for kind in kinds:
        try:
            tables[kind] = dv.fit_damping(traj, kind, theta_grid, C_cap=vc["C_cap"])
        except EmptyFeasible as exc:
            certification_failures.append(f"damping {kind}: {exc}")
            if exc.table is not None:
                tables[kind] = exc.table
    try:
        slaving = dv.slaving_check(traj, theta_grid, C_cap=vc["C_cap"])
    except EmptyFeasible as exc:
        certification_failures.append(f"slaving: {exc}")
        slaving = exc.tables or {}

    if vc["C_alpha"] is not None and vc["c_alpha"] is not None:
        Ca, ca = vc["C_alpha"], vc["c_alpha"]
    else:
        Ca, ca = dv.default_weight_constants(prof)
    weights = [dv.weight_fn(model, prof, j, Ca, ca, grid=traj.grid)
               for j in range(model.N)]
    energies = dv.weighted_energy_series(traj, weights, dr.theta_E)

    def table_payload(tab):
        payload = {
            "theta_grid": tab.theta_grid,
            "C_min": tab.C_min,
            "C_cap": tab.C_cap,
            "degenerate": tab.degenerate,
            "feasible": tab.feasible,
        }
        try:
            payload["theta_max"] = tab.theta_max
        except EmptyFeasible:
            payload["theta_max"] = None
        return payload

    write_json(out / "damping.json", {
        "norm_tables": {k: table_payload(t) for k, t in tables.items()},
        "slaving": {k: table_payload(t) for k, t in slaving.items()},
        "weights": {
            "C_alpha": Ca, "c_alpha": ca,
            "ode_residual": max(w.ode_residual for w in weights),
            "min_alpha": min(float(np.min(w.values)) for w in weights),
        },
        "weighted_energy": {
            "initial": energies.energies[0],
            "final": energies.energies[-1],
            "ratio": energies.energies[-1] / np.maximum(energies.energies[0], 1e-300),
            "target_ratio": float(np.exp(-dr.theta_E * traj.times[-1])),
            "slack_constant": energies.slack_constant,
        },
        "certification_failures": certification_failures,
    })

    energy_rows = []
    for i, t in enumerate(energies.times):
        energy_rows.append([t, *energies.energies[i], *energies.rates[i]])
    write_csv(out / "energies.csv",
              ["t"] + [f"e_{j+1}" for j in range(model.N)]
              + [f"de_{j+1}" for j in range(model.N)], energy_rows)

    return EXIT_CERTIFICATION if certification_failures else EXIT_OK


STAGES = {
    "profile": [stage_profile],
    "check": [stage_check],
    "evolve": [stage_evolve],
    "verify": [stage_verify],
    "all": [stage_profile, stage_check, stage_evolve, stage_verify],
}


def run(subcommand: str, cfg: Config, out_dir: str | None = None) -> int:
    """Execute one subcommand; returns the process exit code."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    code = EXIT_OK
    try:
        for stage in STAGES[subcommand]:
            stage_code = stage(cfg, out)
            code = max(code, stage_code)
            if stage_code not in (EXIT_OK, EXIT_CERTIFICATION):
                break
    except ConfigError as exc:
        write_json(out / "error.json", {"kind": "config", "type": type(exc).__name__,
                                        "message": str(exc)})
        return EXIT_CONFIG
    except CertificationError as exc:
        write_json(out / "error.json", {"kind": "certification",
                                        "type": type(exc).__name__,
                                        "message": str(exc)})
        return EXIT_CERTIFICATION
    except RelaxDampError as exc:
        write_json(out / "error.json", {"kind": "error", "type": type(exc).__name__,
                                        "message": str(exc)})
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - serialized for CI triage
        write_json(out / "error.json", {"kind": "crash", "type": type(exc).__name__,
                                        "message": str(exc)})
        return EXIT_ERROR
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="relaxdamp",
        description="Verification pipeline for relaxation shock profile damping estimates",
    )
    parser.add_argument("subcommand", choices=sorted(STAGES))
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--out", default=None, help="output directory override")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.subcommand, cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
