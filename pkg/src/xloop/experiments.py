"""Seeded experiment protocols shared by ``scripts/`` and the acceptance tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import PreparedData, RawDataset, SplitConfig, prepare
from .explain import ShapConfig
from .metrics import EPSILON, accuracy, xcp
from .model import TrainConfig, predict_label
from .streamline import IDWConfig, Stage, TRVConfig, baseline, idw_iterate, trv_train
from .utils import derive_seed


def prepared(raw: RawDataset, seed: int, test_fraction: float = 0.2) -> PreparedData:
    """Split and SMOTE exactly as ``run`` does for a given global seed."""
    return prepare(raw, SplitConfig(test_fraction, derive_seed(seed, "split")),
                   smote_seed=derive_seed(seed, "smote"))


@dataclass(frozen=True)
class StageScore:
    name: str
    xcp: float
    accuracy: float
    epochs: int


def score(stage: Stage, epsilon: float = EPSILON) -> StageScore:
    acc = accuracy(predict_label(stage.model, stage.test.X), stage.test.y)
    epochs = stage.model.history.epochs_run if stage.model.history else 0
    return StageScore(stage.name, xcp(stage.E_test, epsilon), acc, epochs)


def idw_trend(raw: RawDataset, seed: int, iterations: int = 2, rescale: str = "feature",
              shap: ShapConfig = ShapConfig(), train: TrainConfig = TrainConfig(),
              n_jobs: int = 1) -> list[StageScore]:
    d = prepared(raw, seed)
    cfg = IDWConfig(iterations, shap, train, rescale=rescale)
    run = idw_iterate(d.train, d.test, cfg, seed=seed, n_jobs=n_jobs)
    return [score(s) for s in run.stages]


def trend_holds(xcps, gain: float = 0.05, slack: float = 0.02) -> bool:
    """Last XCP beats the first by ``gain``; no step drops by more than ``slack``."""
    x = np.asarray(xcps, dtype=float)
    return bool(x[-1] - x[0] >= gain and np.all(np.diff(x) >= -slack))


def trv_sweep(raw: RawDataset, seed: int, Ks=(3, 5, 10, 15), shap: ShapConfig = ShapConfig(),
              train: TrainConfig = TrainConfig(), n_jobs: int = 1) -> dict:
    """Baseline plus one TRV model per K, all sharing the same f0."""
    d = prepared(raw, seed)
    f0 = baseline(d.train, d.test, train, shap, seed=seed, n_jobs=n_jobs)
    out = {"f0": score(f0)}
    for K in Ks:
        run = trv_train(d.train, d.test, TRVConfig(K, EPSILON, shap, train), f0=f0, seed=seed,
                        n_jobs=n_jobs)
        out[K] = score(run.stages[1])
    return out
