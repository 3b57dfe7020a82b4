"""TRV over K on the synthetic dataset: test XCP and accuracy per K and seed."""
import argparse
import tempfile
from pathlib import Path

import numpy as np

from xloop.data import load_dataset
from xloop.datasets import synthetic_schema, write_synthetic_csv
from xloop.experiments import trv_sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--K", type=int, nargs="+", default=[3, 5, 10, 15])
    args = ap.parse_args()
    tmp = Path(tempfile.mkdtemp())
    table = []
    for seed in args.seeds:
        raw = load_dataset(write_synthetic_csv(tmp / f"syn{seed}.csv", seed=seed),
                           synthetic_schema(20))
        res = trv_sweep(raw, seed, args.K)
        table.append([res[K].xcp for K in args.K])
        print(f"seed {seed}: f0 acc {res['f0'].accuracy:.3f} xcp {res['f0'].xcp:.3f} | " +
              " ".join(f"K{K}: acc {res[K].accuracy:.3f} xcp {res[K].xcp:.3f}" for K in args.K))
    med = np.median(np.array(table), axis=0)
    print("median xcp per K:", dict(zip(args.K, np.round(med, 3).tolist())))


if __name__ == "__main__":
    main()
