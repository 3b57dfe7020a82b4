"""Acceptance criteria 1-10, one test each, at their stated tolerances.

Each test records its outcome in ``conftest.ACCEPTANCE`` before asserting, so
the terminal summary prints one PASS/FAIL line per criterion.
"""
import json
from pathlib import Path

import numpy as np
import pytest
import yaml
from scipy.spatial import cKDTree

from xloop.cli import main
from xloop.data import SplitConfig, load_dataset, prepare, read_dataset_csv, smote_rebalance
from xloop.datasets import (CANCER_SCHEMA, EXPECTED_FEATURES, SCHEMAS, synthetic,
                            synthetic_schema, write_cancer_csv, write_fixture, write_synthetic_csv)
from xloop.explain import ShapConfig, exact_shap, kernel_shap
from xloop.experiments import idw_trend, trend_holds, trv_sweep
from xloop.io import read_background, read_explanations
from xloop.metrics import fairness
from xloop.model import (MLPModel, TrainConfig, loss_and_grads, load_model, predict_label,
                         predict_proba, predict_proba_rowwise, train)
from xloop.streamline import idw_combine, trv_mask

from conftest import ACCEPTANCE, random_model

ROOT = Path(__file__).resolve().parent.parent
SEEDS = (0, 1, 2)


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = (bool(ok), detail)
    assert ok, f"criterion {n}: {detail}"


@pytest.fixture(scope="module")
def cancer_raw(tmp_path_factory):
    p = write_cancer_csv(tmp_path_factory.mktemp("cancer") / "cancer.csv")
    return load_dataset(p, CANCER_SCHEMA, name="cancer")


def synthetic_raw(tmp: Path, seed: int):
    p = write_synthetic_csv(tmp / f"synthetic{seed}.csv", n=600, m=20, seed=seed)
    return load_dataset(p, synthetic_schema(20), name="synthetic")


# --- 1 ----------------------------------------------------------------------

def test_c1_preprocessed_feature_counts(tmp_path):
    got, source = {}, {}
    for name in sorted(EXPECTED_FEATURES):
        real = ROOT / "data" / f"{name}.csv"
        if name == "cancer":
            path, source[name] = write_cancer_csv(tmp_path / "cancer.csv"), "sklearn"
        elif real.exists():
            path, source[name] = real, str(real.relative_to(ROOT))
        else:
            path, source[name] = write_fixture(name, tmp_path / f"{name}.csv", n=400, seed=0), \
                "stand-in"
        d = prepare(load_dataset(path, SCHEMAS[name], name=name), SplitConfig(0.2, 0))
        got[name] = (d.train.m, d.test.m)
    ok = all(got[k] == (v, v) for k, v in EXPECTED_FEATURES.items())
    detail = ", ".join(f"{k} {got[k][0]}/{EXPECTED_FEATURES[k]} ({source[k]})" for k in sorted(got))
    record(1, ok, detail)


# --- 2 ----------------------------------------------------------------------

def test_c2_shapley_oracle_equivalence():
    rng = np.random.default_rng(2024)
    worst_kernel = worst_add = worst_sym = 0.0
    dummy_exact = True
    for trial in range(50):
        m, k = int(rng.integers(3, 11)), int(rng.integers(1, 5))
        model = random_model(m, rng)
        x, B = rng.normal(size=m), rng.normal(size=(k, m))
        ex = exact_shap(model, x, B)
        ke = kernel_shap(model, x, B, ShapConfig(coalition_budget=2 ** m, seed=trial))
        worst_kernel = max(worst_kernel, float(np.max(np.abs(ke.phi - ex.phi))))
        worst_add = max(worst_add, abs(ex.phi0 + ex.phi.sum() - ex.fx))
        # feature 0 disconnected; feature 2 a copy of feature 1
        W1 = np.array(model.W1)
        W1[0] = 0.0
        W1[2] = W1[1]
        x2, B2 = x.copy(), B.copy()
        x2[2], B2[:, 2] = x2[1], B2[:, 1]
        e = exact_shap(MLPModel(W1, model.b1, model.W2, model.b2), x2, B2)
        dummy_exact &= bool(e.phi[0] == 0.0)
        worst_sym = max(worst_sym, abs(e.phi[1] - e.phi[2]))
        worst_add = max(worst_add, abs(e.phi0 + e.phi.sum() - e.fx))
    ok = worst_kernel <= 1e-6 and worst_add <= 1e-12 and dummy_exact and worst_sym <= 1e-12
    record(2, ok, f"kernel-exact {worst_kernel:.2e}, additivity {worst_add:.2e}, "
                  f"dummy exact {dummy_exact}, symmetry {worst_sym:.2e}")


# --- 3, 10 --------------------------------------------------------------------

@pytest.fixture(scope="module")
def synthetic_config(tmp_path_factory):
    """The shipped synthetic config, pointed at a freshly written dataset."""
    tmp = tmp_path_factory.mktemp("pipeline")
    write_synthetic_csv(tmp / "synthetic.csv", n=600, m=20, seed=0, protected=True)
    raw = yaml.safe_load((ROOT / "configs" / "synthetic.yaml").read_text())
    raw["dataset"] = {"path": "synthetic.csv", "schema": synthetic_schema(20, protected=True)}
    path = tmp / "config.yaml"
    path.write_text(yaml.safe_dump(raw))
    return path


@pytest.fixture(scope="module")
def pipeline_runs(synthetic_config):
    tmp = synthetic_config.parent
    runs = []
    for tag in ("a", "b"):
        assert main(["run", str(synthetic_config), "--output", str(tmp / tag)]) == 0
        runs.append(tmp / tag)
    return runs


def test_c3_local_accuracy_in_pipeline_runs(pipeline_runs):
    worst, rows, files = 0.0, 0, 0
    for run in pipeline_runs:
        for model_path in sorted((run / "stages").glob("**/model.bin")):
            d = model_path.parent
            model = load_model(model_path)
            phi0 = float(predict_proba(model, read_background(d / "background.csv").B).mean())
            for split in ("test", "train"):
                if not (d / f"E_{split}.csv").exists():
                    continue
                E = read_explanations(d / f"E_{split}.csv")
                fx = predict_proba_rowwise(model, read_dataset_csv(d / f"{split}.csv").X)
                err = np.abs(phi0 + E.E.sum(axis=1) - fx)
                worst = max(worst, float(err.max()))
                rows += len(err)
                files += 1
    ok = files > 0 and worst <= 1e-6
    record(3, ok, f"max |phi0 + sum(phi) - f(x)| = {worst:.2e} over {rows} rows in {files} files")


def test_c10_rerun_metric_csvs_identical(pipeline_runs):
    a, b = pipeline_runs
    csvs = sorted(p.relative_to(a) for p in [a / "metrics.csv", *(a / "plot_data").glob("*.csv")])
    same = [(a / rel).read_bytes() == (b / rel).read_bytes() for rel in csvs]
    stages = json.loads((a / "manifest.json").read_text())["stages"]
    record(10, all(same) and len(csvs) > 1,
           f"{sum(same)}/{len(csvs)} metric CSVs byte-identical across {len(stages)} stages")


# --- 4 ----------------------------------------------------------------------

def test_c4_gradient_check():
    rng = np.random.default_rng(4)
    h, worst = 1e-5, 0.0
    regs = ("none", "L1", "L2", "L12")
    for trial in range(20):
        m, n = int(rng.integers(2, 7)), int(rng.integers(5, 20))
        params = {k: np.array(v, dtype=float) for k, v in random_model(m, rng).params().items()}
        X, y = rng.normal(size=(n, m)), rng.integers(0, 2, n).astype(float)
        reg = regs[trial % 4]
        _, grads = loss_and_grads(params, X, y, reg, 0.01)
        for key, w in params.items():
            for idx in np.ndindex(w.shape):
                hi = {k: v.copy() for k, v in params.items()}
                lo = {k: v.copy() for k, v in params.items()}
                hi[key][idx] += h
                lo[key][idx] -= h
                num = (loss_and_grads(hi, X, y, reg, 0.01)[0]
                       - loss_and_grads(lo, X, y, reg, 0.01)[0]) / (2 * h)
                ana = grads[key][idx]
                worst = max(worst, abs(ana - num) / max(1e-8, abs(ana) + abs(num)))
    record(4, worst <= 1e-4, f"max relative error {worst:.2e} over 20 models")


# --- 5 ----------------------------------------------------------------------

def test_c5_idw_compactness_trend(tmp_path, cancer_raw):
    lines, verdicts = [], {}
    for name in ("synthetic", "cancer"):
        wins = 0
        for seed in SEEDS:
            raw = synthetic_raw(tmp_path, seed) if name == "synthetic" else cancer_raw
            xcps = [s.xcp for s in idw_trend(raw, seed, iterations=2)]
            wins += trend_holds(xcps, gain=0.05, slack=0.02)
            lines.append(f"{name}/{seed} " + ">".join(f"{v:.3f}" for v in xcps))
        verdicts[name] = wins
    ok = all(w >= 2 for w in verdicts.values())
    record(5, ok, "; ".join(f"{k} {w}/3" for k, w in verdicts.items()) + " | " + ", ".join(lines))


# --- 6 ----------------------------------------------------------------------

def test_c6_trv_k_monotonicity(tmp_path):
    Ks = (3, 5, 10, 15)
    table, gaps = [], []
    for seed in SEEDS:
        res = trv_sweep(synthetic_raw(tmp_path, seed), seed, Ks)
        table.append([res[K].xcp for K in Ks])
        gaps.append(res["f0"].accuracy - res[3].accuracy)
    med = np.median(np.array(table), axis=0)
    monotone = bool(np.all(np.diff(med) <= 0))
    close = max(gaps) <= 0.02
    record(6, monotone and close,
           f"median XCP {dict(zip(Ks, np.round(med, 3).tolist()))}; "
           f"worst f0-K3 accuracy gap {max(gaps):+.3f}")


# --- 7 ----------------------------------------------------------------------

def test_c7_identity_cases(cancer_raw):
    d = prepare(cancer_raw, SplitConfig(0.2, 0), smote=False)
    tr = d.train
    rng = np.random.default_rng(7)
    E = rng.normal(size=tr.X.shape)
    masked = trv_mask(tr, E, tr.m, rng.normal(size=tr.m))
    bitwise = masked.X.tobytes() == tr.X.tobytes()
    worst = max(float(np.max(np.abs(idw_combine(tr, np.ones_like(tr.X), rescale=mode).X - tr.X)))
                for mode in ("feature", "weighted"))
    record(7, bitwise and worst <= 1e-12,
           f"TRV K=m bitwise {bitwise}; IDW E=1 max deviation {worst:.2e}")


# --- 8 ----------------------------------------------------------------------

def test_c8_fairness_sanity():
    ds = synthetic(600, 20, seed=8, protected=True)
    model = train(ds, TrainConfig(max_epochs=40, seed=0))
    preds = predict_label(model, ds.X)
    # each row appears once per group: the two groups are exact mirrors
    sym = fairness(np.concatenate([preds, preds]), np.concatenate([ds.y, ds.y]),
                   np.array(["A"] * ds.n + ["B"] * ds.n))
    zeros = all(v == 0.0 for v in sym.signed().values())
    rep = fairness(preds, ds.y, ds.protected)
    swapped = fairness(preds, ds.y, np.where(ds.protected == "A", "B", "A"))
    negated = all(v is not None and swapped.signed()[k] == -v for k, v in rep.signed().items())
    record(8, zeros and negated,
           f"symmetric {sym.signed()}; swap negates {negated} on {rep.signed()}")


# --- 9 ----------------------------------------------------------------------

def test_c9_smote(cancer_raw):
    k = 5
    d = prepare(cancer_raw, SplitConfig(0.2, 0), smote=False)
    tr = d.train
    out = smote_rebalance(tr, k_neighbors=k, seed=9)
    counts = np.bincount(out.y).tolist()
    minority = int(np.argmin(np.bincount(tr.y)))
    Xmin = tr.X[tr.y == minority]
    originals = all(np.any(np.all(out.X == row, axis=1)) for row in Xmin)
    _, nn = cKDTree(Xmin).query(Xmin, k=k + 1)
    synth = out.X[tr.n:]
    worst, placed = 0.0, 0
    for row in synth:
        best = np.inf
        for a in range(len(Xmin)):
            for b in nn[a, 1:]:
                seg = Xmin[b] - Xmin[a]
                lam = float(np.clip((row - Xmin[a]) @ seg / (seg @ seg), 0.0, 1.0)) \
                    if seg @ seg > 0 else 0.0
                best = min(best, float(np.max(np.abs(Xmin[a] + lam * seg - row))))
                if best <= 1e-9:
                    break
            if best <= 1e-9:
                break
        placed += best <= 1e-9
        worst = max(worst, best)
    ok = counts[0] == counts[1] and originals and placed == len(synth)
    record(9, ok, f"counts {counts}; originals verbatim {originals}; "
                  f"{placed}/{len(synth)} synthetic rows on neighbor segments (max residual "
                  f"{worst:.1e})")
