"""Re-ranking mAP@100 of every method on the synthetic toy set, over several seeds.

    python scripts/run_toy_ablation.py --seeds 0 1 2 3 4 --out toy_ablation.csv
"""

import argparse
import csv
import logging

from threadpoolctl import threadpool_limits

from elvis.experiments import METHODS, ToyConfig, run_toy, summarize


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--methods", nargs="+", default=list(METHODS), choices=METHODS)
    ap.add_argument("--shared-fraction", type=float, default=None)
    ap.add_argument("--out", default=None, help="optional CSV with one row per seed and method")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = ToyConfig()
    if args.shared_fraction is not None:
        cfg.spec.shared_fraction = args.shared_fraction
    results = []
    with threadpool_limits(1):
        for seed in args.seeds:
            res = run_toy(seed, cfg, args.methods)
            results.append(res)
            print(f"seed {seed}: " + "  ".join(f"{m} {res[m]:.4f}" for m in args.methods), flush=True)
    print("\nmethod              mean    std")
    for m, (mean, std) in summarize(results, args.methods).items():
        print(f"{m:<18} {mean:.4f} {std:.4f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "method", "map@100", "seconds"])
            for seed, res in zip(args.seeds, results):
                for m in args.methods:
                    w.writerow([seed, m, f"{res[m]:.6f}", f"{res[m + '.seconds']:.2f}"])


if __name__ == "__main__":
    main()
