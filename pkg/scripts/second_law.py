"""Local-equilibrium entropy of a domain wall melting on an XX chain.

    python3 scripts/second_law.py --sites 8 --cell 2 --stop 16 --count 33
"""
import argparse

import numpy as np

from realms.models import CellPartition, SpinChainModel, domain_wall_state, second_law_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sites", type=int, default=8)
    ap.add_argument("--cell", type=int, default=2)
    ap.add_argument("--interaction", type=float, default=0.0)
    ap.add_argument("--tilt", type=float, default=0.05)
    ap.add_argument("--stop", type=float, default=16.0)
    ap.add_argument("--count", type=int, default=33)
    args = ap.parse_args()

    model = SpinChainModel(args.sites, interaction=args.interaction)
    part = CellPartition(model, args.cell)
    run = second_law_experiment(model, part, domain_wall_state(args.sites, tilt=args.tilt),
                                np.linspace(0, args.stop, args.count))
    s = np.array([r.S_local for r in run.rows])
    print(f"S_eq = {run.s_eq:.6f}")
    print(f"{'t':>7} {'S_local':>10} {'S/S_eq':>7} {'defect':>9}")
    for r in run.rows:
        print(f"{r.t:7.2f} {r.S_local:10.6f} {r.S_local / r.S_eq:7.3f} {r.defect:9.2e}")
    late = s[2 * len(s) // 3:].mean() / s.max()
    print(f"start/S_eq = {s[0] / run.s_eq:.3f}, late-window mean / max = {late:.3f}")


if __name__ == "__main__":
    main()
