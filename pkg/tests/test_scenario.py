import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoshock.scenario import Profiles, dump_scenario, load_scenario, parse_scenario
from geoshock.system_model import ConfigError

MINIMAL = """
[scenario]
name = tiny
[system]
family = burgers_simple
[grid]
n = 1
Nu = 33
"""


def test_stock_scenarios_round_trip(scenario_dir):
    for path in sorted(scenario_dir.glob("*.cfg")):
        cfg = load_scenario(path)
        again = parse_scenario(dump_scenario(cfg))
        assert again == cfg, path.name
        assert dump_scenario(again) == dump_scenario(cfg)


@settings(max_examples=40, deadline=None)
@given(
    kappa=st.floats(-0.4, 0.4),
    eps=st.floats(0, 0.05),
    beta=st.floats(-1, 1),
    c=st.floats(-0.99, 0.99),
    nu=st.integers(3, 400),
    nth=st.integers(4, 64),
    snap=st.one_of(st.none(), st.floats(1e-3, 1.0)),
    order=st.sampled_from([2, 4]),
)
def test_round_trip_property(kappa, eps, beta, c, nu, nth, snap, order):
    text = f"""
[scenario]
name = prop
eps = {eps!r}
[system]
family = burgers_coupled
beta = {beta!r}
c = {c!r}
[grid]
n = 2
Nu = {nu}
Ntheta = {nth}
[solver]
stencil_order = {order}
snapshot_dt = {snap!r}
[psi]
profile = sine
kappa = {kappa!r}
[v]
profile = bump
"""
    cfg = parse_scenario(text)
    assert parse_scenario(dump_scenario(cfg)) == cfg
    assert cfg.solver.snapshot_dt == snap


def test_defaults():
    cfg = parse_scenario(MINIMAL)
    assert cfg.name == "tiny" and cfg.grid.Nu == 33
    assert cfg.solver.mu_stop == 0.05 and cfg.solver.rk_stages == 4


@pytest.mark.parametrize("extra,fragment", [
    ("[psi]\nprofile = square\n", "psi profile"),
    ("[v]\nprofile = bump\n", "no v components"),
    ("[psi]\nprofile = sine\nkappa = 0.6\n", "probe box"),
    ("[bogus]\nx = 1\n", "unknown sections"),
    ("[solver]\nmu_stop = 0.3\n", "mu_stop"),
])
def test_invalid_configs(extra, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_scenario(MINIMAL + extra)


def test_fast_v_speed_rejected():
    text = MINIMAL.replace("burgers_simple", "burgers_coupled\nc = 1.2")
    with pytest.raises(ConfigError, match="c="):
        parse_scenario(text)


def test_malformed_file(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("no section header\n")
    with pytest.raises(ConfigError):
        load_scenario(bad)
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "missing.cfg")


# profiles -------------------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(kind=st.sampled_from(["sine", "bump"]), eps=st.floats(0, 0.05), x1=st.floats(0, 1), x2=st.floats(0, 1))
def test_profile_gradients_match_differences(kind, eps, x1, x2):
    prof = Profiles(2, 1, kind, {"kappa": 0.1, "center": 0.5, "width": 0.3}, "bump", {}, eps=eps)
    x = np.array([[x1], [x2]])
    h = 1e-6
    g = prof.grad_psi(x)[:, 0]
    gv = prof.grad_v(x)[:, 0, 0]
    for j in range(2):
        e = np.zeros((2, 1))
        e[j] = h
        fd = (prof.psi(x + e) - prof.psi(x - e))[0] / (2 * h)
        fdv = (prof.v(x + e) - prof.v(x - e))[0, 0] / (2 * h)
        assert g[j] == pytest.approx(fd, abs=1e-6)
        assert gv[j] == pytest.approx(fdv, abs=1e-6)


def test_bump_is_compactly_supported():
    prof = Profiles(1, 1, "bump", {"kappa": 0.1, "center": 0.5, "width": 0.2})
    x = np.linspace(0, 1, 101)[None]
    psi = prof.psi(x)
    assert psi.max() == pytest.approx(0.1)
    assert np.all(psi[np.abs(x[0] - 0.5) >= 0.2] == 0.0)
