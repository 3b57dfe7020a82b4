"""Explanation-driven feature engineering.

IDW reweights the data by the absolute SHAP scores of the previous model
and retrains, possibly several times. TRV keeps each sample's top-K
features by |SHAP| and overwrites the rest with per-feature neutral
values, then retrains once. ``select_k_best`` is the global feature
selection used for comparison.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .explain import (BackgroundSet, ExplanationMatrix, ShapConfig, backgrounds_for,
                      explain_matrix)
from .metrics import EPSILON
from .model import MLPModel, TrainConfig, train
from .utils import derive_seed

log = logging.getLogger(__name__)


def _scores(E) -> np.ndarray:
    return np.asarray(getattr(E, "E", E), dtype=float)


def _check_shape(D: Dataset, E: np.ndarray) -> None:
    if E.shape != D.X.shape:
        raise ValueError(f"shape mismatch: data {D.X.shape}, explanations {E.shape}")


# --- stages ---------------------------------------------------------------

@dataclass
class Stage:
    name: str
    model: MLPModel
    train: Dataset
    test: Dataset
    background: BackgroundSet
    E_test: ExplanationMatrix
    E_train: ExplanationMatrix | None = None
    features: tuple[int, ...] | None = None  # column subset, select-k stages only
    info: dict = field(default_factory=dict)


@dataclass
class StreamlineRun:
    provenance: str  # idw | trv | baseline | regularized | selectk
    stages: list[Stage]

    def __getitem__(self, name: str) -> Stage:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)


def fit_stage(name: str, train_set: Dataset, test_set: Dataset, train_cfg: TrainConfig,
              shap_cfg: ShapConfig, background_k: int = 4, seed: int = 0,
              explain_train: bool = True, n_jobs: int = 1) -> Stage:
    """Train a model on ``train_set`` and explain it on the test (and train) split."""
    bg = backgrounds_for(train_set, background_k, derive_seed(seed, name + "/background"))
    model = train(train_set, replace(train_cfg, seed=derive_seed(seed, name + "/train")))
    shap_seed = derive_seed(seed, name + "/shap")
    E_test = explain_matrix(model, test_set, bg, replace(shap_cfg, seed=shap_seed), n_jobs)
    E_train = None
    if explain_train:
        E_train = explain_matrix(model, train_set, bg,
                                 replace(shap_cfg, seed=derive_seed(seed, name + "/shap-train")),
                                 n_jobs)
    log.info("stage %s: trained for %d epochs", name,
             model.history.epochs_run if model.history else -1)
    return Stage(name, model, train_set, test_set, bg, E_test, E_train)


def baseline(train_set: Dataset, test_set: Dataset, train_cfg: TrainConfig = TrainConfig(),
             shap_cfg: ShapConfig = ShapConfig(), background_k: int = 4, seed: int = 0,
             name: str = "f0", n_jobs: int = 1) -> Stage:
    return fit_stage(name, train_set, test_set, train_cfg, shap_cfg, background_k, seed,
                     explain_train=True, n_jobs=n_jobs)


# --- IDW ------------------------------------------------------------------

IDW_RESCALES = ("feature", "weighted")


def idw_scale(D: Dataset, E, rescale: str = "weighted") -> np.ndarray:
    """Per-column divisor for the IDW rescale.

    ``feature``: population std of each input feature of ``D``, so the
    weighting by |E| survives the rescale. ``weighted``: std of the
    weighted column ``|E| * X`` itself, which restores unit variance.
    """
    E = _scores(E)
    _check_shape(D, E)
    if rescale == "feature":
        return D.X.std(axis=0)
    if rescale == "weighted":
        return (np.abs(E) * D.X).std(axis=0)
    raise ValueError(f"rescale must be one of {IDW_RESCALES}, got {rescale!r}")


def idw_combine(D: Dataset, E, col_std=None, rescale: str = "weighted") -> Dataset:
    """``|E| * X`` with each column divided by a std.

    ``col_std`` defaults to ``idw_scale(D, E, rescale)``; pass the training
    split's values when transforming a test split. Columns with zero std
    become all-zero.
    """
    E = _scores(E)
    _check_shape(D, E)
    W = np.abs(E) * D.X
    std = idw_scale(D, E, rescale) if col_std is None else np.asarray(col_std, dtype=float)
    if std.shape != (D.m,):
        raise ValueError(f"col_std has shape {std.shape}, expected ({D.m},)")
    live = std > 0
    out = np.zeros_like(W)
    out[:, live] = W[:, live] / std[live]
    return D.with_X(out)


@dataclass(frozen=True)
class IDWConfig:
    iterations: int = 4
    shap: ShapConfig = ShapConfig()
    train: TrainConfig = TrainConfig()
    background_k: int = 4
    rescale: str = "feature"

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.rescale not in IDW_RESCALES:
            raise ValueError(f"rescale must be one of {IDW_RESCALES}, got {self.rescale!r}")


def idw_iterate(D0_train: Dataset, D0_test: Dataset, cfg: IDWConfig = IDWConfig(),
                f0: Stage | None = None, seed: int = 0, explain_last_train: bool = False,
                n_jobs: int = 1) -> StreamlineRun:
    """Run f0 -> h1 -> ... -> h_iterations.

    Iteration i reweights both splits of D_{i-1} by the explanations of
    model i-1 (test rescaled with train stds), then trains h_i on the new
    train split and explains it with backgrounds refitted on that split.
    """
    if f0 is None:
        f0 = baseline(D0_train, D0_test, cfg.train, cfg.shap, cfg.background_k, seed, n_jobs=n_jobs)
    if f0.E_train is None:
        raise ValueError("IDW needs train-split explanations of the baseline")
    stages = [f0]
    prev = f0
    for i in range(1, cfg.iterations + 1):
        try:
            std = idw_scale(prev.train, prev.E_train, cfg.rescale)
            Di_train = idw_combine(prev.train, prev.E_train, std)
            Di_test = idw_combine(prev.test, prev.E_test, std)
            need_train = i < cfg.iterations or explain_last_train
            stage = fit_stage(f"idw/h{i}", Di_train, Di_test, cfg.train, cfg.shap,
                              cfg.background_k, seed, explain_train=need_train, n_jobs=n_jobs)
        except Exception as exc:
            raise RuntimeError(f"IDW iteration {i}: {exc}") from exc
        stages.append(stage)
        prev = stage
    return StreamlineRun("idw", stages)


# --- TRV ------------------------------------------------------------------

@dataclass(frozen=True)
class ReplacementVector:
    R: np.ndarray
    provenance: tuple[str, ...]  # categorical-zero | median-of-low-importance | fallback-global-median


def replacement_values(D_train: Dataset, E, epsilon: float = EPSILON) -> ReplacementVector:
    E = _scores(E)
    _check_shape(D_train, E)
    R = np.zeros(D_train.m)
    prov = []
    for j, origin in enumerate(D_train.feature_origin):
        if origin == "one-hot":
            prov.append("categorical-zero")
            continue
        low = np.abs(E[:, j]) < epsilon
        if low.any():
            R[j] = np.median(D_train.X[low, j])
            prov.append("median-of-low-importance")
        else:
            R[j] = np.median(D_train.X[:, j])
            prov.append("fallback-global-median")
    return ReplacementVector(R, tuple(prov))


def top_k_mask(E, K: int) -> np.ndarray:
    """Boolean mask of each row's K largest |scores|, ties to the lower index."""
    E = np.abs(_scores(E))
    n, m = E.shape
    if not 0 <= K <= m:
        raise ValueError(f"K must lie in [0, {m}], got {K}")
    order = np.argsort(-E, axis=1, kind="stable")
    keep = np.zeros((n, m), dtype=bool)
    np.put_along_axis(keep, order[:, :K], True, axis=1)
    return keep


def trv_mask(D: Dataset, E, K: int, R: ReplacementVector | np.ndarray) -> Dataset:
    E = _scores(E)
    _check_shape(D, E)
    R = np.asarray(getattr(R, "R", R), dtype=float)
    if R.shape != (D.m,):
        raise ValueError(f"replacement vector has shape {R.shape}, expected ({D.m},)")
    keep = top_k_mask(E, K)
    return D.with_X(np.where(keep, D.X, R[None, :]))


@dataclass(frozen=True)
class TRVConfig:
    K: int = 5
    epsilon: float = EPSILON
    shap: ShapConfig = ShapConfig()
    train: TrainConfig = TrainConfig()
    background_k: int = 4

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")


def trv_train(D0_train: Dataset, D0_test: Dataset, cfg: TRVConfig = TRVConfig(),
              f0: Stage | None = None, seed: int = 0, n_jobs: int = 1) -> StreamlineRun:
    if f0 is None:
        f0 = baseline(D0_train, D0_test, cfg.train, cfg.shap, cfg.background_k, seed, n_jobs=n_jobs)
    if f0.E_train is None:
        raise ValueError("TRV needs train-split explanations of the baseline")
    if cfg.K > D0_train.m:
        raise ValueError(f"K={cfg.K} exceeds feature count {D0_train.m}")
    R = replacement_values(f0.train, f0.E_train, cfg.epsilon)
    D1_train = trv_mask(f0.train, f0.E_train, cfg.K, R)
    D1_test = trv_mask(f0.test, f0.E_test, cfg.K, R)
    h1 = fit_stage(f"trv/K{cfg.K}", D1_train, D1_test, cfg.train, cfg.shap, cfg.background_k,
                   seed, explain_train=False, n_jobs=n_jobs)
    h1.info["replacement"] = R
    return StreamlineRun("trv", [f0, h1])


# --- global selection baseline --------------------------------------------

def anova_f(X, y) -> np.ndarray:
    """One-way ANOVA F per column for two classes.

    Zero within-class variance with nonzero between-class variance gives
    ``inf``; a column with no variance at all gives 0.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    classes = np.unique(y)
    n, k = len(y), len(classes)
    grand = X.mean(axis=0)
    ss_between = np.zeros(X.shape[1])
    ss_within = np.zeros(X.shape[1])
    for c in classes:
        Xc = X[y == c]
        mu = Xc.mean(axis=0)
        ss_between += len(Xc) * (mu - grand) ** 2
        ss_within += ((Xc - mu) ** 2).sum(axis=0)
    df_b, df_w = k - 1, n - k
    F = np.zeros(X.shape[1])
    tiny = 1e-12 * max(1.0, float(np.abs(X).max()) ** 2)
    has_between = ss_between > tiny
    zero_within = ss_within <= tiny
    F[has_between & zero_within] = np.inf
    ok = ~zero_within
    F[ok] = (ss_between[ok] / df_b) / (ss_within[ok] / df_w)
    F[~has_between & ~ok] = 0.0
    return F


def select_k_best(train_set: Dataset, K: int) -> np.ndarray:
    """Indices (ascending) of the K columns with the largest ANOVA F."""
    m = train_set.m
    if not 1 <= K <= m:
        raise ValueError(f"K must lie in [1, {m}], got {K}")
    F = anova_f(train_set.X, train_set.y)
    order = np.argsort(-F, kind="stable")
    return np.sort(order[:K])


def selectk_baseline_K(E, epsilon: float = EPSILON) -> int:
    """Mean count of |score| > epsilon per row, rounded and clamped to [1, m]."""
    E = _scores(E)
    if E.size == 0:
        raise ValueError("empty explanation matrix")
    mean_count = float(np.mean(np.sum(np.abs(E) > epsilon, axis=1)))
    return int(min(max(int(np.floor(mean_count + 0.5)), 1), E.shape[1]))


def selectk_train(D0_train: Dataset, D0_test: Dataset, K: int, train_cfg: TrainConfig,
                  shap_cfg: ShapConfig, background_k: int = 4, seed: int = 0,
                  name: str | None = None, n_jobs: int = 1) -> Stage:
    cols = select_k_best(D0_train, K)
    stage = fit_stage(name or f"selectk/K{K}", D0_train.select_features(cols),
                      D0_test.select_features(cols), train_cfg, shap_cfg, background_k, seed,
                      explain_train=False, n_jobs=n_jobs)
    stage.features = tuple(int(c) for c in cols)
    return stage
