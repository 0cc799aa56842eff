"""Command-line front end: ``geoshock {run,verify,sweep,validate} CONFIG``.

Exit codes: 0 success, 1 failed certificate, 2 configuration error,
3 solver error.  ``GEOSHOCK_OUTPUT_ROOT`` overrides the output root.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import os
import subprocess
import sys as _sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .cartesian_reference import CartesianGrid, OracleValidityError, compare, compare_report_json, run_cartesian
from .diagnostics import _jsonable, data_size, summarize
from .errors import SolverError
from .geometry import GridSpec, init_sigma0, write_snapshot_csv
from .scenario import dump_scenario, load_scenario
from .solver import run as solver_run
from .system_model import ConfigError, validate_system

log = logging.getLogger("geoshock")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
SWEEP_PARAMETERS = ("kappa", "eps_ripple", "Nu", "Ntheta", "dt")
FORMAT_VERSION = 1


def _git_describe():
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def output_dir(cfg):
    root = os.environ.get("GEOSHOCK_OUTPUT_ROOT", cfg.output)
    return Path(root) / cfg.name


def prepare(cfg):
    """System, profiles and the validated initial state for a scenario."""
    system = cfg.system()
    report = validate_system(system)
    if not report.passed:
        names = ", ".join(f"{c.name}={c.value:.3g}" for c in report.failures())
        raise ConfigError(f"system validation failed: {names}")
    profiles = cfg.profiles()
    state0 = init_sigma0(system, cfg.grid, profiles)
    return system, profiles, state0


def simulate(cfg):
    """Run the geometric solver and summarize: (system, profiles, trajectory, summary)."""
    system, profiles, state0 = prepare(cfg)
    astar = data_size(system, cfg.grid, state0, cfg.solver.stencil_order).Astar
    traj = solver_run(system, cfg.grid, state0, cfg.solver, astar=astar)
    summary = summarize(system, cfg.grid, traj, cfg.solver, profiles,
                        length_C=float(cfg.verify.get("length_C", 4.0)))
    return system, profiles, traj, summary


def oracle_compare(cfg, system, profiles, T_pred):
    """Geometric vs Cartesian fields at t = frac * T_pred."""
    frac = float(cfg.oracle.get("t_frac", 0.5))
    t_c = frac * T_pred
    geo_cfg = replace(cfg.solver, t_max=t_c, snapshot_dt=None)
    _, _, state0 = prepare(cfg)
    geo = solver_run(system, cfg.grid, state0, geo_cfg)
    cgrid = CartesianGrid(
        n=cfg.grid.n,
        Nx=int(cfg.oracle.get("Nx", 1024)),
        length=float(cfg.oracle.get("length", 1.0)),
        Ntheta=tuple([int(cfg.oracle.get("Ntheta", 32))] * (cfg.grid.n - 1)),
        cfl=float(cfg.oracle.get("cfl", 0.4)),
    )
    cart = run_cartesian(system, cgrid, profiles, t_c, lifespan=T_pred, snapshot_times=(0.0,))
    reports = [compare(system, geo.snapshots[0], cart), compare(system, geo.snapshots[-1], cart)]
    return reports


def certificates(cfg, system, profiles, traj, summary, with_oracle=True):
    """Named pass/fail checks for ``verify``."""
    v = cfg.verify
    checks = {}
    shock = summary.stop_reason == "mu_floor"
    branch = "shock" if shock else "no-shock"
    band = float(v.get("jacobian_band", 0.15))
    lo = min(r[0] for r in summary.jacobian_ratio)
    hi = max(r[1] for r in summary.jacobian_ratio)
    checks["jacobian_ratio"] = dict(passed=1 - band <= lo and hi <= 1 + band, min=lo, max=hi)
    inj = [i for i in summary.injectivity if i["mu_star"] > cfg.solver.mu_stop]
    checks["injectivity"] = dict(passed=all(i["passed"] for i in inj), n_snapshots=len(inj))
    worst = max(summary.residual_max.values())
    checks["contraction_residuals"] = dict(passed=worst < 10 * summary.residual_estimate,
                                           max=worst, bound=10 * summary.residual_estimate)
    if shock:
        tol = float(v.get("lifespan_tol", 0.01))
        checks["lifespan_gap"] = dict(passed=bool(summary.lifespan_gap_cross <= tol),
                                      gap=summary.lifespan_gap_cross, T_extrapolated=summary.T_extrapolated,
                                      T_cross=summary.T_cross, tol=tol)
        checks["blowup_rate"] = dict(passed=summary.blowup["applicable"] and summary.blowup["violations"] == 0,
                                     violations=summary.blowup["violations"], n_checked=summary.blowup["n_checked"])
        if system.M:
            g_dpsi = summary.sup_dpsi[-1] / summary.sup_dpsi[0]
            g_v = max(summary.sup_v) / summary.sup_v[0] if summary.sup_v[0] else 1.0
            g_V = max(summary.sup_V) / summary.sup_V[0] if summary.sup_V[0] else 1.0
            checks["regularity_split"] = dict(passed=g_dpsi >= 10 and g_v <= 2 and g_V <= 2,
                                              growth_dpsi=g_dpsi, growth_v=g_v, growth_V=g_V)
    else:
        drift = float(np.max(np.abs(np.asarray(summary.mu_star) - summary.mu_star[0])))
        # without compression mu must stay put; with it, the run must have ended before the predicted shock
        if summary.data["Astar"] > 0:
            ok = summary.stop_reason == "t_max" and summary.T_stop < summary.T_pred
        else:
            ok = summary.stop_reason == "t_max" and drift < 1e-10
        checks["no_shock_consistent"] = dict(passed=bool(ok), mu_star_drift=drift, stop_reason=summary.stop_reason)
    oracle_reports = []
    if with_oracle and bool(cfg.oracle.get("enabled", True)) and np.isfinite(summary.T_pred):
        try:
            oracle_reports = oracle_compare(cfg, system, profiles, summary.T_pred)
            last = oracle_reports[-1]
            tp, tv = float(cfg.oracle.get("tol_psi", 1e-3)), float(cfg.oracle.get("tol_v", 5e-3))
            checks["oracle"] = dict(passed=last["max_dPsi"] < tp and last["max_dv"] < tv,
                                    max_dPsi=last["max_dPsi"], max_dv=last["max_dv"], t=last["t"])
        except OracleValidityError as exc:
            checks["oracle"] = dict(passed=False, error=str(exc))
    passed = all(c["passed"] for c in checks.values())
    return dict(passed=passed, branch=branch, checks=checks, failures=[k for k, c in checks.items() if not c["passed"]]), oracle_reports


# output ----------------------------------------------------------------------


def write_outputs(cfg, traj, summary, outdir: Path):
    outdir.mkdir(parents=True, exist_ok=True)
    snapdir = outdir / "snapshots"
    snapdir.mkdir(exist_ok=True)
    for k, s in enumerate(traj.snapshots):
        write_snapshot_csv(snapdir / f"snap_{k:05d}.csv", s, cfg.grid)
    manifest = dict(
        format_version=FORMAT_VERSION,
        scenario=cfg.name,
        config=dump_scenario(cfg),
        t_start=0.0,
        t_stop=summary.T_stop,
        stop_reason=summary.stop_reason,
        n_snapshots=len(traj.snapshots),
        snapshot_times=[s.t for s in traj.snapshots],
        build=_git_describe(),
    )
    (outdir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    (outdir / "summary.json").write_text(summary.to_json())
    with open(outdir / "timeseries.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mu_star", "sup_dPsi", "sup_v", "sup_V", "jac_ratio_min", "jac_ratio_max"])
        for i, t in enumerate(summary.times):
            w.writerow([repr(float(x)) for x in (t, summary.mu_star[i], summary.sup_dpsi[i], summary.sup_v[i],
                                                  summary.sup_V[i], *summary.jacobian_ratio[i])])
    cols = ["E_shock_Psi", "E_shock_ThetaPsi", "E_reg_v", "E_reg_V"]
    with open(outdir / "plot.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mu_star", "sup_dPsi", "sup_v", "sup_V"] + cols)
        times = np.asarray(summary.times)
        for e in summary.energies:
            i = int(np.argmin(np.abs(times - e["t"])))
            row = [e["t"], summary.mu_star[i], summary.sup_dpsi[i], summary.sup_v[i], summary.sup_V[i]]
            w.writerow([repr(float(x)) for x in row + [e[c] for c in cols]])


# commands --------------------------------------------------------------------


def cmd_validate(path):
    cfg = load_scenario(path)
    report = validate_system(cfg.system())
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: value={c.value:.6g} threshold={c.threshold:.6g}")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_run(path):
    cfg = load_scenario(path)
    _, _, traj, summary = simulate(cfg)
    outdir = output_dir(cfg)
    write_outputs(cfg, traj, summary, outdir)
    print(f"{cfg.name}: stop_reason={summary.stop_reason} T_stop={summary.T_stop:.6f} "
          f"T_extrapolated={summary.T_extrapolated:.6f} -> {outdir}")
    return EXIT_OK


def cmd_verify(path, oracle=True):
    cfg = load_scenario(path)
    system, profiles, traj, summary = simulate(cfg)
    verdict, reports = certificates(cfg, system, profiles, traj, summary, with_oracle=oracle)
    outdir = output_dir(cfg)
    write_outputs(cfg, traj, summary, outdir)
    (outdir / "verdict.json").write_text(json.dumps(_jsonable(verdict), sort_keys=True, indent=1))
    if reports:
        (outdir / "oracle_compare.json").write_text(compare_report_json(reports))
    for name, c in verdict["checks"].items():
        print(f"{'PASS' if c['passed'] else 'FAIL'} {name}")
    print(f"verdict: {'PASS' if verdict['passed'] else 'FAIL'} ({verdict['branch']})")
    return EXIT_OK if verdict["passed"] else EXIT_FAIL


def apply_parameter(cfg, parameter, value):
    cfg = copy.deepcopy(cfg)
    if parameter == "kappa":
        cfg.psi["kappa"] = float(value)
    elif parameter == "eps_ripple":
        cfg.eps = float(value)
    elif parameter == "Nu":
        cfg.grid = GridSpec(cfg.grid.n, int(value), cfg.grid.Ntheta, cfg.grid.U0)
    elif parameter == "Ntheta":
        cfg.grid = GridSpec(cfg.grid.n, cfg.grid.Nu, (int(value),) * (cfg.grid.n - 1), cfg.grid.U0)
    elif parameter == "dt":
        cfg.solver = replace(cfg.solver, dt=float(value))
    else:
        raise ConfigError(f"unknown sweep parameter {parameter!r}; choose from {SWEEP_PARAMETERS}")
    cfg.name = f"{cfg.name}_{parameter}_{value}"
    return cfg


def sweep_cell(cfg, parameter, value, energy_time=None):
    """One sweep cell; failures are recorded instead of raised."""
    row = dict(parameter=parameter, value=value, status="ok", error="")
    try:
        cell = apply_parameter(cfg, parameter, value)
        _, _, traj, s = simulate(cell)
        e_ref = s.energies[-1]
        if energy_time is not None:
            e_ref = min(s.energies, key=lambda e: abs(e["t"] - energy_time))
        row.update(stop_reason=s.stop_reason, T_stop=s.T_stop, T_extrapolated=s.T_extrapolated,
                   T_cross=s.T_cross, T_pred=s.T_pred, Astar=s.data["Astar"], lifespan_gap=s.lifespan_gap_cross,
                   energy_t=e_ref["t"], E_shock_Psi=e_ref["E_shock_Psi"], E_reg_v=e_ref["E_reg_v"],
                   E_reg_V=e_ref["E_reg_V"])
    except (ConfigError, SolverError, ValueError) as exc:
        row.update(status="error", error=f"{type(exc).__name__}: {exc}")
    return row


SWEEP_COLUMNS = ["parameter", "value", "status", "stop_reason", "T_stop", "T_extrapolated", "T_cross",
                 "T_pred", "Astar", "lifespan_gap", "energy_t", "E_shock_Psi", "E_reg_v", "E_reg_V", "error"]


def cmd_sweep(path, parameter, values, workers=None, energy_time=None):
    cfg = load_scenario(path)
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"unknown sweep parameter {parameter!r}; choose from {SWEEP_PARAMETERS}")
    vals = [int(v) if parameter in ("Nu", "Ntheta") else float(v) for v in values]
    workers = workers or min(len(vals), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(sweep_cell, [cfg] * len(vals), [parameter] * len(vals), vals,
                                 [energy_time] * len(vals)))
    else:
        rows = [sweep_cell(cfg, parameter, v, energy_time) for v in vals]
    outdir = output_dir(cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    target = outdir / f"sweep_{parameter}.csv"
    with open(target, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    for r in rows:
        print(f"{parameter}={r['value']}: {r['status']} T_extrapolated={r.get('T_extrapolated', float('nan'))}")
    print(f"wrote {target}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="geoshock", description="Shock-formation simulator in eikonal-adapted coordinates.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario and write its trajectory")
    r.add_argument("config")
    ver = sub.add_parser("verify", help="run a scenario plus its certificates and oracle")
    ver.add_argument("config")
    ver.add_argument("--no-oracle", action="store_true", help="skip the Cartesian cross-check")
    s = sub.add_parser("sweep", help="run a parameter sweep")
    s.add_argument("config")
    s.add_argument("parameter", choices=SWEEP_PARAMETERS)
    s.add_argument("values", nargs="+")
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("--energy-time", type=float, default=None, help="report energies at this snapshot time")
    val = sub.add_parser("validate", help="check the structural assumptions of the system")
    val.add_argument("config")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return cmd_run(args.config)
        if args.command == "verify":
            return cmd_verify(args.config, oracle=not args.no_oracle)
        if args.command == "sweep":
            return cmd_sweep(args.config, args.parameter, args.values, args.workers, args.energy_time)
        return cmd_validate(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=_sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    _sys.exit(main())
