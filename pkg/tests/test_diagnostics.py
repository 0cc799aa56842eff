import json
from types import SimpleNamespace

import numpy as np
import pytest

from geoshock.cli import simulate
from geoshock.diagnostics import (
    blowup_certificate,
    crossing_time,
    data_size,
    energies,
    fit_lifespan,
    injectivity_check,
    jacobian_mu_ratio,
    lifespan_report,
)
from geoshock.geometry import GridSpec, init_sigma0
from geoshock.scenario import Profiles
from geoshock.solver import SolverConfig, run
from geoshock.system_model import builtin_system

SIMPLE = builtin_system("burgers_simple")
# Lmu drift constant, fitted once on the stock coupled run (observed 0.088) and frozen
LMU_DRIFT_C = 0.15


def astar_exact(kappa):
    """sup of (-psi0') / (1 + psi0) for psi0 = kappa sin(2 pi x)."""
    return 2 * np.pi * kappa / np.sqrt(1 - kappa**2)


def plane_state(kappa, Nu=1025):
    grid = GridSpec(1, Nu)
    return grid, init_sigma0(SIMPLE, grid, Profiles(1, 0, "sine", {"kappa": kappa}))


# data size -------------------------------------------------------------------------


def test_astar_for_sine_data():
    grid, s0 = plane_state(0.1)
    d = data_size(SIMPLE, grid, s0, order=4)
    assert d.Astar == pytest.approx(astar_exact(0.1), rel=1e-5)  # grid sampling of the sup
    assert d.Astar == pytest.approx(0.2 * np.pi, rel=6e-3)
    assert d.alpha0 == pytest.approx(0.1)
    assert d.G_background == -1.0
    assert d.Astar <= abs(d.G_background) * d.A0 * 1.2


def test_monotone_increasing_data_has_no_compression():
    grid = GridSpec(1, 65)
    prof = SimpleNamespace(psi=lambda x: 0.1 * x[0], v=lambda x: np.zeros((0,) + x.shape[1:]),
                           grad_v=lambda x: np.zeros((1, 0) + x.shape[1:]))
    d = data_size(SIMPLE, grid, init_sigma0(SIMPLE, grid, prof))
    assert d.Astar == 0.0
    assert d.T_pred == float("inf")


def test_astar_scales_linearly_with_amplitude():
    ratios = []
    for kappa in (0.05, 0.1):
        grid, a = plane_state(kappa)
        _, b = plane_state(2 * kappa)
        ratios.append(data_size(SIMPLE, grid, b, 4).Astar / data_size(SIMPLE, grid, a, 4).Astar)
        assert ratios[-1] == pytest.approx(astar_exact(2 * kappa) / astar_exact(kappa), rel=1e-5)
    assert abs(ratios[0] - 2) < abs(ratios[1] - 2) < 0.05


def test_crossing_time_closed_form():
    for kappa in (0.05, 0.1, 0.2):
        prof = Profiles(1, 0, "sine", {"kappa": kappa})
        assert crossing_time(SIMPLE, prof) == pytest.approx(1 / (2 * np.pi * kappa), rel=1e-12)


# lifespan --------------------------------------------------------------------------


def test_fit_lifespan_on_affine_histories():
    t = np.linspace(0, 1, 21)
    hist = np.stack([1 - 0.5 * t, 1 - 0.8 * t, 0.9 + 0 * t], axis=1)
    T, slopes, res = fit_lifespan(t, hist)
    assert T == pytest.approx(1.25)
    assert np.allclose(slopes, [-0.5, -0.8, 0.0])
    assert res < 1e-12


def test_lifespan_report_plane_wave(burgers_run):
    _, _, _, summary = burgers_run
    T_pred, T_ext, gap = lifespan_report(summary)
    assert T_pred == pytest.approx(1 / astar_exact(0.1), rel=1e-4)
    assert gap < 0.01
    assert T_ext >= summary.T_stop
    assert T_ext == pytest.approx(1 / (0.2 * np.pi), rel=1e-3)


def test_lifespan_report_half_amplitude(burgers_cfg):
    from geoshock.cli import apply_parameter

    _, _, _, summary = simulate(apply_parameter(burgers_cfg, "kappa", 0.05))
    T_pred, T_ext, gap = lifespan_report(summary)
    assert T_pred == pytest.approx(3.183099, rel=2e-3)
    assert gap < 0.01


def test_lifespan_report_needs_a_shock():
    sys = builtin_system("burgers_simple")
    grid = GridSpec(1, 33)
    s0 = init_sigma0(sys, grid, Profiles(1, 0, "constant", {"value": 0.05}))
    from geoshock.diagnostics import summarize

    summary = summarize(sys, grid, run(sys, grid, s0, SolverConfig(t_max=0.5)), SolverConfig(t_max=0.5))
    with pytest.raises(ValueError):
        lifespan_report(summary)


def test_lifespan_gap_bound_on_perturbed_run(coupled_run):
    _, _, _, summary = coupled_run
    d = summary.data
    assert summary.lifespan_gap <= d["alpha0"] + 10 * d["eps0_proxy"]


def test_lmu_drift_bounded_by_perturbation(coupled_run):
    _, _, traj, summary = coupled_run
    Lmu = np.asarray(traj.Lmu_history)
    drift = float(np.max(np.abs(Lmu[-1] - Lmu[0])))
    assert drift <= LMU_DRIFT_C * summary.data["eps0_proxy"]


# blowup certificate -------------------------------------------------------------------


def test_certificate_on_crossing_characteristic(burgers_run):
    sys, _, traj, summary = burgers_run
    grid = GridSpec(1, 512)
    k = int(np.argmin([abs(s.mu.min() - 0.2) for s in traj.snapshots]))
    s = traj.snapshots[k]
    rec = blowup_certificate(sys, grid, s, summary.data["Astar"], window=(0.05, 0.25))
    assert rec["passed"] and rec["n_checked"] > 0
    assert rec["max_G_XbrPsi"] < -0.157
    assert rec["min_mu_XPsi"] > 0.628 / 8
    from geoshock.diagnostics import _frame_psi

    xbr, _, _, _ = _frame_psi(sys, grid, s)
    node = int(np.argmin(s.mu))
    x0 = 1 - node * grid.du
    # G Xbr Psi = mu_0 psi_0'(x_0) is frozen along the characteristic
    exact = 0.2 * np.pi * np.cos(2 * np.pi * x0) / (1 + 0.1 * np.sin(2 * np.pi * x0))
    assert (s.xi[0] * xbr)[node] == pytest.approx(exact, rel=1e-4)
    assert exact == pytest.approx(-0.2 * np.pi, rel=5e-3)


def test_certificate_empty_without_compression():
    grid = GridSpec(1, 33)
    s0 = init_sigma0(SIMPLE, grid, Profiles(1, 0, "constant", {"value": 0.05}))
    rec = blowup_certificate(SIMPLE, grid, s0, 0.0)
    assert not rec["applicable"] and rec["n_checked"] == 0 and rec["passed"]


# energies -------------------------------------------------------------------------------


def test_regular_energies_vanish_without_v():
    sys = builtin_system("burgers_coupled", n=2, beta=0.1, c=0.5)
    grid = GridSpec(2, 33, (8,))
    s0 = init_sigma0(sys, grid, Profiles(2, 1, "sine", {"kappa": 0.1}))
    traj = run(sys, grid, s0, SolverConfig(t_max=0.3, snapshot_dt=0.1))
    e = energies(sys, grid, traj.snapshots[-1])
    assert e["E_reg_v"] == 0.0 and e["E_reg_V"] == 0.0
    from geoshock.diagnostics import characteristic_flux

    f = characteristic_flux(sys, grid, traj.snapshots)
    assert f["F_reg_v"] == 0.0 and f["F_reg_V"] == 0.0


def test_shock_energy_conserved(burgers_run):
    _, _, _, summary = burgers_run
    e0 = summary.energies[0]["E_shock_Psi"]
    assert e0 > 0
    for e in summary.energies:
        assert abs(e["E_shock_Psi"] - e0) / e0 < 1e-6


def test_energy_u_cut_snaps_to_grid():
    grid, s0 = plane_state(0.1, Nu=33)
    with pytest.warns(UserWarning):
        e = energies(SIMPLE, grid, s0, u_cut=0.51)
    assert e["u_cut"] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        energies(SIMPLE, grid, s0, u_cut=1.5)


def test_regular_energy_coercive(coupled_run):
    _, _, _, summary = coupled_run
    for e in summary.energies:
        assert 1 / 3 <= e["coercive_ratio_v"] <= 3


# jacobian and injectivity -------------------------------------------------------------------


def test_jacobian_ratio_background():
    grid = GridSpec(2, 9, (4,))
    sys = builtin_system("burgers_simple", n=2)
    s0 = init_sigma0(sys, grid, Profiles(2, 0, "constant", {"value": 0.0}))
    r = jacobian_mu_ratio(sys, s0)
    assert r["min"] == r["max"] == 1.0 and r["sign_negative"]


def test_jacobian_ratio_on_perturbed_run(coupled_run):
    _, _, traj, summary = coupled_run
    sys = builtin_system("burgers_coupled", n=2, beta=0.1, c=0.5)
    for s in traj.snapshots:
        r = jacobian_mu_ratio(sys, s)
        assert 0.85 <= r["min"] and r["max"] <= 1.15
        assert np.isfinite(r["C_fit"]) and r["sign_negative"]


def test_injectivity_initial_and_pre_shock(burgers_run):
    _, _, traj, _ = burgers_run
    grid = GridSpec(1, 512)
    assert injectivity_check(grid, traj.snapshots[0])[0]
    k = int(np.argmin([abs(s.mu.min() - 0.3) for s in traj.snapshots]))
    assert abs(traj.snapshots[k].mu.min() - 0.3) < 0.05
    assert injectivity_check(grid, traj.snapshots[k])[0]


def test_injectivity_detects_collisions():
    grid = GridSpec(2, 9, (4,))
    sys = builtin_system("burgers_simple", n=2)
    s = init_sigma0(sys, grid, Profiles(2, 0, "constant", {"value": 0.0}))
    s.x[1, 3, 1] = s.x[1, 3, 2]
    ok, wit = injectivity_check(grid, s)
    assert not ok and wit["kind"] == "collision"
    assert sorted(wit["nodes"]) == [(3, 1), (3, 2)]
    s = init_sigma0(sys, grid, Profiles(2, 0, "constant", {"value": 0.0}))
    s.x[0, 4] = s.x[0, 5]
    ok, wit = injectivity_check(grid, s)
    assert not ok and wit["kind"] == "monotonicity"


# summary ---------------------------------------------------------------------------------------


def test_summary_json_is_reproducible(burgers_cfg, burgers_run):
    _, _, _, first = burgers_run
    _, _, _, second = simulate(burgers_cfg)
    assert first.to_json() == second.to_json()
    data = json.loads(first.to_json())
    assert data["stop_reason"] == "mu_floor"
    assert data["T_extrapolated"] >= data["T_stop"]
