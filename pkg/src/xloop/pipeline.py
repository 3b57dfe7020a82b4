"""End-to-end experiment: data prep, baseline, comparisons, IDW, TRV, metrics.

Layout of a run directory::

    config.yaml                 effective configuration
    data/{train,test}.csv       preprocessed D0 splits
    stages/<method>/<stage>/    model.bin, background.csv, {train,test}.csv,
                                E_test.csv (+ .meta.json), E_train.csv when computed
    metrics.csv                 dataset,method,stage,metric,value
    plot_data/*.csv             tidy per-figure data
    manifest.json               written last; artifact hashes, seeds, timings
"""
from __future__ import annotations

import json
import logging
import platform
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .config import CONFIG_VERSION, RunConfig
from .data import SplitConfig, load_dataset, prepare, write_dataset_csv
from .explain import ShapConfig
from .io import write_background, write_explanations, write_table
from .metrics import (FAIRNESS_METRICS, accuracy, distribution_summary, fairness, glocal_sim,
                      global_importance, xcp, xcp_per_sample)
from .model import TrainConfig, predict_label, save_model
from .streamline import (IDWConfig, Stage, TRVConfig, baseline, fit_stage, idw_iterate,
                         selectk_baseline_K, selectk_train, trv_train)
from .utils import derive_seed, relpath, sha256_file

log = logging.getLogger(__name__)

ADDITIVITY_TOL = 1e-6
METRICS_HEADER = ("dataset", "method", "stage", "metric", "value")


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


def split_name(stage_name: str) -> tuple[str, str]:
    if "/" not in stage_name:
        return "baseline", stage_name
    method, stage = stage_name.split("/", 1)
    return {"reg": "regularized"}.get(method, method), stage


def stage_metrics(stage: Stage, epsilon: float) -> dict:
    test = stage.test
    preds = predict_label(stage.model, test.X)
    E = stage.E_test
    sim = glocal_sim(E, global_importance(E), epsilon)
    out = {
        "accuracy": accuracy(preds, test.y),
        "xcp": xcp(E, epsilon),
        "xcp_per_sample": xcp_per_sample(E, epsilon),
        "sim": sim,
        "sim_summary": distribution_summary(sim),
        "fairness": None,
    }
    if test.protected is not None:
        out["fairness"] = fairness(preds, test.y, test.protected)
    return out


def metric_rows(dataset: str, stage_name: str, m: dict) -> list[tuple]:
    method, stage = split_name(stage_name)
    rows = [(dataset, method, stage, "accuracy", m["accuracy"])]
    fr = m["fairness"]
    for key in FAIRNESS_METRICS:
        signed = None if fr is None else fr.signed()[key]
        rows.append((dataset, method, stage, key, signed))
        rows.append((dataset, method, stage, f"abs_{key}", None if signed is None else abs(signed)))
    rows.append((dataset, method, stage, "xcp", m["xcp"]))
    for k, v in m["sim_summary"].items():
        rows.append((dataset, method, stage, f"sim_{k}", v))
    return rows


@dataclass
class _Recorder:
    root: Path
    artifacts: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    seeds: dict[str, int] = field(default_factory=dict)
    stages: list[str] = field(default_factory=list)
    max_additivity_error: float = 0.0

    def track(self, path: Path) -> None:
        self.artifacts[relpath(path, self.root)] = sha256_file(path)


def _persist_stage(rec: _Recorder, stage: Stage, cfg: RunConfig, shap_budget) -> None:
    d = rec.root / "stages" / stage.name
    d.mkdir(parents=True, exist_ok=True)
    save_model(stage.model, d / "model.bin")
    rec.track(d / "model.bin")
    names = list(stage.train.feature_names)
    rec.track(write_background(d / "background.csv", stage.background, names))
    for split, ds in (("train", stage.train), ("test", stage.test)):
        write_dataset_csv(ds, d / f"{split}.csv")
        rec.track(d / f"{split}.csv")
        rec.track(Path(str(d / f"{split}.csv") + ".schema.json"))
    digest = stage.model.digest()
    for split, E in (("test", stage.E_test), ("train", stage.E_train)):
        if E is None:
            continue
        err = float(E.additivity_error().max())
        rec.max_additivity_error = max(rec.max_additivity_error, err)
        if err > ADDITIVITY_TOL:
            raise RuntimeError(f"{split} explanations violate local accuracy by {err:.3g}")
        meta = {"split": split, "mode": cfg.shap.mode, "coalition_budget": shap_budget,
                "seed_base": derive_seed(cfg.seed, stage.name + ("/shap" if split == "test"
                                                                   else "/shap-train")),
                "model_sha256": digest}
        p = write_explanations(d / f"E_{split}.csv", E, meta)
        rec.track(p)
        rec.track(Path(str(p) + ".meta.json"))
    info = {"epochs": stage.model.history.epochs_run if stage.model.history else None,
            "features": list(stage.features) if stage.features is not None else None,
            "background": stage.background.provenance}
    info.update({k: v for k, v in stage.info.items() if k != "replacement"})
    if "replacement" in stage.info:
        R = stage.info["replacement"]
        info["replacement"] = {"R": [float(v) for v in R.R], "provenance": list(R.provenance)}
    (d / "stage.json").write_text(json.dumps(info, indent=1, sort_keys=True) + "\n")
    rec.track(d / "stage.json")
    rec.stages.append(stage.name)


def run_experiment(cfg: RunConfig, raw_config: dict | None = None) -> Path:
    """Execute the full workflow; returns the run directory."""
    root = cfg.output_path()
    root.mkdir(parents=True, exist_ok=True)
    rec = _Recorder(root)
    snapshot = cfg.to_dict()
    (root / "config.yaml").write_text(yaml.safe_dump(snapshot, sort_keys=True))
    rec.track(root / "config.yaml")

    train_cfg = TrainConfig(**vars(cfg.train))
    shap_cfg = ShapConfig(cfg.shap.coalition_budget, 0, cfg.shap.mode)
    eps = cfg.epsilon
    name = cfg.name
    completed: list[Stage] = []
    state: dict = {}

    def stage(label: str, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except Exception as exc:
            rec.timings[label] = time.perf_counter() - t0
            _write_manifest(rec, cfg, snapshot, status="failed", failed_stage=label)
            raise StageError(label, exc) from exc
        rec.timings[label] = time.perf_counter() - t0
        return out

    def persist(s: Stage):
        _persist_stage(rec, s, cfg, shap_cfg.budget_for(s.train.m) if cfg.shap.mode == "sampled"
                       else None)
        completed.append(s)

    def prep():
        raw = load_dataset(cfg.dataset_path(), cfg.dataset.schema, name=name,
                           missing=tuple(cfg.dataset.missing))
        rec.seeds["split"] = derive_seed(cfg.seed, "split")
        rec.seeds["smote"] = derive_seed(cfg.seed, "smote")
        d = prepare(raw, SplitConfig(cfg.split.test_fraction, rec.seeds["split"]),
                    smote_k=cfg.smote.k_neighbors, smote_seed=rec.seeds["smote"],
                    smote=cfg.smote.enabled)
        for split, ds in (("train", d.train), ("test", d.test)):
            p = root / "data" / f"{split}.csv"
            write_dataset_csv(ds, p)
            rec.track(p)
            rec.track(Path(str(p) + ".schema.json"))
        state["rows_dropped"] = d.n_dropped
        return d

    data = stage("prepare", prep)
    D0_train, D0_test = data.train, data.test
    m = D0_train.m
    kw = dict(background_k=cfg.background_k, seed=cfg.seed, n_jobs=cfg.n_jobs)

    f0 = stage("baseline", lambda: baseline(D0_train, D0_test, train_cfg, shap_cfg, **kw))
    stage("baseline/persist", lambda: persist(f0))

    for reg in ("L1", "L2", "L12"):
        if getattr(cfg.regularized, reg):
            rcfg = replace(train_cfg, regularization=reg, factor=cfg.regularized.factor)
            s = stage(f"reg/{reg}", lambda rcfg=rcfg, reg=reg: fit_stage(
                f"reg/{reg}", D0_train, D0_test, rcfg, shap_cfg, explain_train=False, **kw))
            stage(f"reg/{reg}/persist", lambda s=s: persist(s))

    if cfg.selectk.enabled:
        K_eps = selectk_baseline_K(f0.E_train, eps)
        state["selectk_K_epsilon"] = K_eps
        Ks = [K_eps] + (list(cfg.trv.K) if cfg.trv.enabled else [])
        for K in dict.fromkeys(Ks):
            Ke = min(K, m)
            s = stage(f"selectk/K{K}", lambda K=K, Ke=Ke: selectk_train(
                D0_train, D0_test, Ke, train_cfg, shap_cfg, name=f"selectk/K{K}", **kw))
            s.info["K_effective"] = Ke
            stage(f"selectk/K{K}/persist", lambda s=s: persist(s))

    if cfg.idw.enabled:
        icfg = IDWConfig(cfg.idw.iterations, shap_cfg, train_cfg, cfg.background_k,
                         cfg.idw.rescale)
        run = stage("idw", lambda: idw_iterate(D0_train, D0_test, icfg, f0=f0, seed=cfg.seed,
                                                       n_jobs=cfg.n_jobs))
        for s in run.stages[1:]:
            stage(f"{s.name}/persist", lambda s=s: persist(s))

    if cfg.trv.enabled:
        for K in cfg.trv.K:
            Ke = min(K, m)
            if Ke != K:
                log.warning("TRV K=%d exceeds m=%d; using K=%d", K, m, Ke)
            tcfg = TRVConfig(Ke, eps, shap_cfg, train_cfg, cfg.background_k)
            run = stage(f"trv/K{K}", lambda tcfg=tcfg: trv_train(D0_train, D0_test, tcfg, f0=f0,
                                                                   seed=cfg.seed, n_jobs=cfg.n_jobs))
            s = run.stages[1]
            s.name = f"trv/K{K}"
            s.info["K_effective"] = Ke
            stage(f"trv/K{K}/persist", lambda s=s: persist(s))

    stage("metrics", lambda: _write_metrics(rec, name, completed, eps))
    _write_manifest(rec, cfg, snapshot, status="complete", extra=state)
    return root


def _write_metrics(rec: _Recorder, dataset: str, stages: list[Stage], eps: float) -> None:
    root = rec.root
    rows, sim_rows, xcp_rows, shap_rows = [], [], [], []
    for s in stages:
        mt = stage_metrics(s, eps)
        rows.extend(metric_rows(dataset, s.name, mt))
        method, st = split_name(s.name)
        sim_rows.extend((dataset, method, st, i, v) for i, v in enumerate(mt["sim"]))
        xcp_rows.extend((dataset, method, st, i, v) for i, v in enumerate(mt["xcp_per_sample"]))
        A = np.abs(s.E_test.E)
        for j, feat in enumerate(s.E_test.feature_names):
            summ = distribution_summary(A[:, j])
            shap_rows.append((dataset, method, st, feat, *summ.values()))
    rec.track(write_table(root / "metrics.csv", METRICS_HEADER, rows))
    pd_dir = root / "plot_data"
    acc_fair = [r for r in rows if r[3] == "accuracy" or r[3].startswith("abs_")]
    rec.track(write_table(pd_dir / "accuracy_fairness.csv", METRICS_HEADER, acc_fair))
    rec.track(write_table(pd_dir / "xcp.csv", METRICS_HEADER, [r for r in rows if r[3] == "xcp"]))
    rec.track(write_table(pd_dir / "xcp_per_sample.csv",
                          ("dataset", "method", "stage", "sample", "xcp"), xcp_rows))
    rec.track(write_table(pd_dir / "sim_distribution.csv",
                          ("dataset", "method", "stage", "sample", "sim"), sim_rows))
    rec.track(write_table(pd_dir / "shap_abs_summary.csv",
                          ("dataset", "method", "stage", "feature", "mean", "min", "q1",
                           "median", "q3", "max"), shap_rows))


def _write_manifest(rec: _Recorder, cfg: RunConfig, snapshot: dict, status: str,
                    failed_stage: str | None = None, extra: dict | None = None) -> None:
    manifest = {
        "status": status,
        "failed_stage": failed_stage,
        "config_version": CONFIG_VERSION,
        "library_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "dataset": cfg.name,
        "seed": cfg.seed,
        "seeds": rec.seeds,
        "stages": rec.stages,
        "artifacts": dict(sorted(rec.artifacts.items())),
        "timings_seconds": {k: round(v, 3) for k, v in rec.timings.items()},
        "max_additivity_error": rec.max_additivity_error,
        "config": snapshot,
        **(extra or {}),
    }
    (rec.root / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
