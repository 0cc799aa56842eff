"""Shock time of a sine plane wave against the characteristic crossing time.

Runs the stock plane-wave scenario at three amplitudes and three resolutions
and prints the relative gap to 1/(2 pi kappa).  The gap drops by about four
for each doubling of Nu.
"""
from pathlib import Path

import numpy as np

from geoshock.cli import apply_parameter, simulate
from geoshock.scenario import load_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def main():
    base = load_scenario(SCENARIOS / "burgers_sine.cfg")
    print(f"{'kappa':>6} {'Nu':>5} {'T_ext':>10} {'exact':>10} {'gap':>10}")
    for kappa in (0.05, 0.1, 0.2):
        exact = 1 / (2 * np.pi * kappa)
        for Nu in (128, 256, 512):
            cfg = apply_parameter(apply_parameter(base, "kappa", kappa), "Nu", Nu)
            _, _, _, s = simulate(cfg)
            gap = abs(s.T_extrapolated - exact) / exact
            print(f"{kappa:6.2f} {Nu:5d} {s.T_extrapolated:10.6f} {exact:10.6f} {gap:10.2e}")


if __name__ == "__main__":
    main()
