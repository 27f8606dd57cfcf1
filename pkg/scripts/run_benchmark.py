"""Per-pair latency against descriptor count, to check the quadratic scaling.

    python scripts/run_benchmark.py --m 150 300 600 1200
"""

import argparse

import numpy as np
from threadpoolctl import threadpool_limits

from elvis.bench import run_benchmark
from elvis.model import ModelParams
from elvis.transport import OtConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, nargs="+", default=[150, 300, 600])
    ap.add_argument("--batch-size", type=int, default=500)
    ap.add_argument("--batches", type=int, default=20)
    ap.add_argument("--float64", action="store_true")
    ap.add_argument("--log-domain", action="store_true", help="time the log-domain solver instead")
    args = ap.parse_args()

    model = ModelParams.init(768, 128, np.random.default_rng(0))
    cfg = OtConfig(0.1, 10, log_domain=args.log_domain)
    dtype = np.float64 if args.float64 else np.float32
    print(f"parameters: {model.parameter_count()} total, "
          f"{model.parameter_count(include_projection=False)} without projection, "
          f"{model.parameter_count(include_warp=False)} used at inference")
    prev = None
    with threadpool_limits(1):
        for m in args.m:
            r = run_benchmark(model, cfg, m=m, batch_size=args.batch_size, batches=args.batches, dtype=dtype)
            med = r["median_us_per_pair"]
            ratio = "" if prev is None else f"  x{med / prev:.2f} vs previous"
            print(f"M={m:5d}  median {med:9.1f} us/pair  mean {r['mean_us_per_pair']:9.1f}{ratio}", flush=True)
            prev = med


if __name__ == "__main__":
    main()
