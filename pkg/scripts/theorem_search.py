"""Random completely fine-grained sets: how many decohere exactly?"""
import argparse

from realms.theorems import search_fine_grained


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--inject", type=int, default=10, help="repeated-basis controls per cell")
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()

    print(f"{'dim':>3} {'times':>5} {'trials':>6} {'non-dec':>7} {'trivial':>7} {'bad':>3} {'min defect':>10}")
    for dim in (2, 3, 4):
        for n_times in (2, 3):
            s = search_fine_grained(dim, n_times, args.trials, args.seed, args.inject, args.threads)
            print(f"{dim:3d} {n_times:5d} {s.trials:6d} {s.non_decoherent:7d} {s.trivial:7d} "
                  f"{s.decoherent_nontrivial:3d} {s.min_defect:10.3g}")


if __name__ == "__main__":
    main()
