"""Wave-packet centre against the classical orbit, harmonic and quartic wells."""
import argparse

import numpy as np
from scipy.special import ellipk

from realms.models import WavePacketModel, ehrenfest_experiment, harmonic, quartic


def quartic_quarter_period(mass, amplitude, coefficient=0.25):
    # V = c x^4: T/4 = sqrt(m / (2c)) / A * K(1/2) / sqrt(2)
    return np.sqrt(mass / (2 * coefficient)) / amplitude * ellipk(0.5) / np.sqrt(2)


def show(title, rows):
    amp = max(abs(r.x_classical) for r in rows)
    worst = max(abs(r.mean_x - r.x_classical) for r in rows)
    print(f"{title}: max |<x> - x_cl| = {worst:.2e} ({worst / amp:.2e} of amplitude), "
          f"final spread {rows[-1].spread:.3g}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grid", type=int, default=512)
    ap.add_argument("--quartic-grid", type=int, default=2048)
    ap.add_argument("--quartic-mass", type=float, default=4e4)
    args = ap.parse_args()

    v, f = harmonic(1.0)
    model = WavePacketModel(args.grid, 10.0, potential=v, force=f)
    show("harmonic", ehrenfest_experiment(model, 1.0, 0.0, 0.5, np.linspace(0, 2 * np.pi, 65)))

    v, f = quartic()
    model = WavePacketModel(args.quartic_grid, 3.0, args.quartic_mass, v, f)
    quarter = quartic_quarter_period(args.quartic_mass, 1.0)
    print(f"quartic quarter period {quarter:.2f}")
    show("quartic", ehrenfest_experiment(model, 1.0, 0.0, 0.05, np.linspace(0, quarter, 33)))


if __name__ == "__main__":
    main()
