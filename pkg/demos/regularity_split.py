"""Coupled run: the shock gradient blows up while v and its derivatives stay put."""
from pathlib import Path

from geoshock.cli import simulate
from geoshock.scenario import load_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def main():
    cfg = load_scenario(SCENARIOS / "coupled_ripple.cfg")
    _, _, traj, s = simulate(cfg)
    print(f"stop: {s.stop_reason} at t={s.T_stop:.4f} (crossing time {s.T_cross:.4f})")
    print(f"{'t':>8} {'mu*':>8} {'sup|dPsi|':>10} {'sup|v|':>10} {'sup|V|':>10}")
    step = max(1, len(s.times) // 12)
    for i in list(range(0, len(s.times), step)) + [len(s.times) - 1]:
        print(f"{s.times[i]:8.4f} {s.mu_star[i]:8.4f} {s.sup_dpsi[i]:10.4f} "
              f"{s.sup_v[i]:10.6f} {s.sup_V[i]:10.6f}")
    print(f"growth: dPsi x{s.sup_dpsi[-1] / s.sup_dpsi[0]:.1f}, "
          f"v x{max(s.sup_v) / s.sup_v[0]:.4f}, V x{max(s.sup_V) / s.sup_V[0]:.4f}")


if __name__ == "__main__":
    main()
