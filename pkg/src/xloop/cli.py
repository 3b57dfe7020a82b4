"""Command line: ``xloop {run,explain,report,preprocess}``.

Exit codes: 0 success, 1 validation error, 2 stage failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd

from .config import ConfigError, load_config
from .data import DataError, SplitConfig, load_dataset, prepare, read_dataset_csv, write_dataset_csv
from .explain import ShapConfig, ShapError, explain_matrix
from .io import read_background, write_explanations, write_table
from .model import ModelFormatError, load_model
from .pipeline import StageError, run_experiment
from .utils import derive_seed, sha256_file

EXIT_OK, EXIT_VALIDATION, EXIT_STAGE = 0, 1, 2

log = logging.getLogger("xloop")

REPORT_COLUMNS = ("accuracy", "abs_PPR_D", "abs_NPR_D", "abs_FPR_D", "abs_EO_D", "xcp",
                  "sim_mean", "sim_q1", "sim_median", "sim_q3")
_METHOD_ORDER = {"baseline": 0, "regularized": 1, "selectk": 2, "idw": 3, "trv": 4}


class ReportError(RuntimeError):
    pass


def _fail(code: int, msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def cmd_run(args) -> int:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.output is not None:
        overrides.append(f"output_dir={args.output}")
    try:
        cfg, raw = load_config(args.config, overrides)
    except ConfigError as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    try:
        root = run_experiment(cfg, raw)
    except StageError as exc:
        return _fail(EXIT_STAGE, str(exc))
    print(root)
    return EXIT_OK


def cmd_preprocess(args) -> int:
    try:
        cfg, _ = load_config(args.config, list(args.set or []))
        raw = load_dataset(cfg.dataset_path(), cfg.dataset.schema, name=cfg.name,
                           missing=tuple(cfg.dataset.missing))
        d = prepare(raw, SplitConfig(cfg.split.test_fraction, derive_seed(cfg.seed, "split")),
                    smote_k=cfg.smote.k_neighbors, smote_seed=derive_seed(cfg.seed, "smote"),
                    smote=cfg.smote.enabled)
    except (ConfigError, DataError, FileNotFoundError) as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    out = Path(args.out)
    for split, ds in (("train", d.train), ("test", d.test)):
        write_dataset_csv(ds, out / f"{split}.csv")
    print(f"{out}: train {d.train.X.shape}, test {d.test.X.shape}, dropped {d.n_dropped} rows")
    return EXIT_OK


def cmd_explain(args) -> int:
    try:
        model = load_model(args.model)
        ds = read_dataset_csv(args.data)
        bg = read_background(args.background)
    except (ModelFormatError, DataError, FileNotFoundError, ValueError) as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    if ds.m != model.input_dim:
        return _fail(EXIT_VALIDATION,
                     f"dimension mismatch: model expects {model.input_dim} features, "
                     f"dataset has {ds.m}")
    if bg.B.shape[1] != model.input_dim:
        return _fail(EXIT_VALIDATION,
                     f"dimension mismatch: model expects {model.input_dim} features, "
                     f"background has {bg.B.shape[1]}")
    try:
        cfg = ShapConfig(args.budget, args.seed, args.mode)
        if cfg.mode == "sampled":
            cfg.budget_for(ds.m)
        E = explain_matrix(model, ds, bg, cfg, n_jobs=args.jobs)
    except (ShapError, ValueError) as exc:
        return _fail(EXIT_VALIDATION if isinstance(exc, ValueError) else EXIT_STAGE, str(exc))
    meta = {"mode": args.mode, "coalition_budget": args.budget, "seed_base": args.seed,
            "model_sha256": sha256_file(args.model)}
    write_explanations(args.out, E, meta)
    print(f"{args.out}: {E.shape[0]} rows, max additivity error "
          f"{E.additivity_error().max():.3g}")
    return EXIT_OK


def load_report(run_dir) -> pd.DataFrame:
    """Verify the manifest and pivot metrics.csv into one row per stage."""
    run_dir = Path(run_dir)
    mpath = run_dir / "manifest.json"
    if not mpath.exists():
        raise ReportError(f"{run_dir}: no manifest.json (not a run directory)")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise ReportError(f"corrupt manifest: {exc}") from None
    for rel, digest in manifest.get("artifacts", {}).items():
        p = run_dir / rel
        if not p.exists():
            raise ReportError(f"manifest lists missing artifact {rel}")
        if sha256_file(p) != digest:
            raise ReportError(f"hash mismatch for {rel}")
    if manifest.get("status") != "complete":
        raise ReportError(f"run did not complete (failed stage: {manifest.get('failed_stage')})")
    metrics = pd.read_csv(run_dir / "metrics.csv", dtype={"value": str}, keep_default_na=False)
    table = metrics.pivot_table(index=["method", "stage"], columns="metric", values="value",
                                aggfunc="first")
    table = table.reindex(columns=list(REPORT_COLUMNS))
    keys = sorted(table.index, key=lambda ms: (_METHOD_ORDER.get(ms[0], 9), _stage_key(ms[1])))
    return table.loc[keys]


def _stage_key(stage: str):
    digits = "".join(ch for ch in stage if ch.isdigit())
    return (stage.rstrip("0123456789"), int(digits) if digits else -1, stage)


def _fmt(v: str) -> str:
    if v in ("", "n/a"):
        return "n/a"
    return f"{float(v):.4f}"


def render_report(table: pd.DataFrame) -> str:
    header = ["method", "stage", *REPORT_COLUMNS]
    rows = [[m, s, *(_fmt(v) for v in table.loc[(m, s)])] for m, s in table.index]
    widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(header, widths))]
    lines += ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join(lines)


def cmd_report(args) -> int:
    out = Path(args.output).resolve() if args.output else None
    if out is not None and Path(args.run_dir).resolve() in out.parents:
        return _fail(EXIT_VALIDATION, "report output must live outside the run directory")
    try:
        table = load_report(args.run_dir)
    except ReportError as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    print(render_report(table))
    if out is not None:
        write_table(out, ["method", "stage", *REPORT_COLUMNS],
                    ([m, s, *table.loc[(m, s)]] for m, s in table.index))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xloop", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the full experiment described by a config file")
    r.add_argument("config")
    r.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (dotted path), repeatable")
    r.add_argument("--seed", type=int)
    r.add_argument("--output", help="run directory (overrides output_dir)")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("explain", help="explain a preprocessed dataset with a saved model")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True, help="preprocessed CSV (features..., label)")
    e.add_argument("--background", required=True, help="background CSV with a header row")
    e.add_argument("--mode", choices=("sampled", "exact"), default="sampled")
    e.add_argument("--budget", type=int, default=None, help="coalitions per row (default 2m+2048)")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_explain)

    rep = sub.add_parser("report", help="summarise a finished run directory")
    rep.add_argument("run_dir")
    rep.add_argument("--output", help="also write the table as CSV (outside the run directory)")
    rep.set_defaults(func=cmd_report)

    pre = sub.add_parser("preprocess", help="write the preprocessed train/test splits")
    pre.add_argument("config")
    pre.add_argument("--set", action="append", metavar="KEY=VALUE")
    pre.add_argument("--out", required=True)
    pre.set_defaults(func=cmd_preprocess)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
