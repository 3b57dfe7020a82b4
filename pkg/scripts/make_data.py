"""Write the CSVs the configs point at.

data/cancer.csv comes from scikit-learn and data/synthetic.csv from the
package generator. HeartRisk, Kidney and Student must be downloaded by
hand; ``--fixtures`` writes random schema-faithful stand-ins for any of
them that are missing, which is enough to exercise the pipeline.
"""
import argparse
from pathlib import Path

from xloop.datasets import write_cancer_csv, write_fixture, write_synthetic_csv

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(ROOT / "data"))
    ap.add_argument("--fixtures", action="store_true", help="write stand-ins for missing datasets")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = Path(args.out)
    print(write_cancer_csv(out / "cancer.csv"))
    print(write_synthetic_csv(out / "synthetic.csv", seed=args.seed))
    if args.fixtures:
        for name in ("heartrisk", "kidney", "student"):
            p = out / f"{name}.csv"
            if p.exists():
                print(f"{p} exists, left alone")
                continue
            print(write_fixture(name, p, n=600, seed=args.seed), "(random stand-in)")


if __name__ == "__main__":
    main()
