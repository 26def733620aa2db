"""Branch-overlap defect against the number of environment qubits."""
import argparse

import numpy as np

from realms.models import environment_decoherence_model, environment_defect_closed_form


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--theta", type=float, default=0.3)
    ap.add_argument("--levels", type=int, default=2)
    args = ap.parse_args()

    print(f"{'N':>4} {'model':>12} {'closed form':>12}")
    for n in range(1, 12):
        if args.levels * 2 ** n > 2 ** 12:
            break
        m = environment_decoherence_model(args.levels, n, args.theta).report.defect
        print(f"{n:4d} {m:12.4e} {environment_defect_closed_form(args.levels, n, args.theta):12.4e}")
    for n in (20, 50, 100, 200):
        print(f"{n:4d} {'':>12} {environment_defect_closed_form(args.levels, n, args.theta):12.4e}")
    for eps in (1e-2, 1e-6):
        n = int(np.ceil(np.log(eps) / np.log(abs(np.cos(args.theta)))))
        print(f"defect below {eps:g} from N = {n}")


if __name__ == "__main__":
    main()
