"""Test-set XCP of f0, h1, h2 under IDW, per seed, on synthetic data and Cancer.

Usage: python scripts/idw_trend.py [--seeds 0 1 2] [--rescale feature|weighted]
"""
import argparse
import tempfile
import time
from pathlib import Path

from xloop.data import load_dataset
from xloop.datasets import CANCER_SCHEMA, synthetic_schema, write_cancer_csv, write_synthetic_csv
from xloop.experiments import idw_trend, trend_holds


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--rescale", choices=("feature", "weighted"), default="feature")
    ap.add_argument("--iterations", type=int, default=2)
    ap.add_argument("--datasets", nargs="+", default=["synthetic", "cancer"])
    args = ap.parse_args()
    tmp = Path(tempfile.mkdtemp())
    for name in args.datasets:
        wins = 0
        for seed in args.seeds:
            if name == "synthetic":
                raw = load_dataset(write_synthetic_csv(tmp / f"syn{seed}.csv", seed=seed),
                                   synthetic_schema(20))
            else:
                raw = load_dataset(write_cancer_csv(tmp / "cancer.csv"), CANCER_SCHEMA)
            t0 = time.perf_counter()
            scores = idw_trend(raw, seed, args.iterations, args.rescale)
            ok = trend_holds([s.xcp for s in scores])
            wins += ok
            print(f"{name} seed {seed}: xcp {[round(s.xcp, 3) for s in scores]} "
                  f"acc {[round(s.accuracy, 3) for s in scores]} "
                  f"{'holds' if ok else 'broken'} ({time.perf_counter() - t0:.1f}s)")
        print(f"{name}: trend holds on {wins}/{len(args.seeds)} seeds")


if __name__ == "__main__":
    main()
