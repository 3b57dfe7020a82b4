"""Background sets and Shapley-value explanations.

The coalition game for a sample ``x`` is ``v(S) = mean_b f(x_S, b_rest)``
over a small background set. ``exact_shap`` enumerates all 2^m
coalitions and is the reference; ``kernel_shap`` is the sampled
weighted-least-squares estimator used on real data.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb, factorial

import numpy as np

from .data import Dataset
from .model import MLPModel, predict_proba, predict_proba_rowwise

EXACT_MAX_FEATURES = 20
DEFAULT_EXTRA_BUDGET = 2048
RIDGE = 1e-10


class ShapError(RuntimeError):
    pass


# --- backgrounds ----------------------------------------------------------

@dataclass(frozen=True)
class BackgroundSet:
    B: np.ndarray
    provenance: str = "kmeans"  # or "stratified-kmeans"

    def __post_init__(self):
        B = np.array(self.B, dtype=float)
        if B.ndim != 2 or B.shape[0] < 1:
            raise ValueError("background set needs at least one row")
        B.setflags(write=False)
        object.__setattr__(self, "B", B)

    @property
    def k(self) -> int:
        return self.B.shape[0]


def _sqdist(X, C):
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _kmeanspp(X, k, rng):
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sqdist(X, X[chosen]).min(axis=1)
    while len(chosen) < k:
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            # all remaining points coincide with a centre
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(free))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[chosen].copy()


def kmeans(X, k: int, seed: int = 0, max_iter: int = 300) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; returns the (k, m) centroids."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise ValueError(f"k-means needs n >= k (n={n}, k={k})")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(X, k, rng)
    labels = None
    for _ in range(max_iter):
        d = _sqdist(X, centers)
        new = d.argmin(axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        taken: set[int] = set()
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = X[members].mean(axis=0)
                continue
            # empty cluster: move it onto the point farthest from its centre
            far = d[np.arange(n), labels].copy()
            far[list(taken)] = -np.inf
            i = int(far.argmax())
            taken.add(i)
            labels[i] = c
            centers[c] = X[i]
    return centers


def kmeans_backgrounds(train: Dataset, k: int = 4, seed: int = 0) -> BackgroundSet:
    return BackgroundSet(kmeans(train.X, k, seed), "kmeans")


def stratified_backgrounds(train: Dataset, k_per_group: int = 2, seed: int = 0) -> BackgroundSet:
    """k-means run separately on each protected group, centroids stacked A then B."""
    if train.protected is None:
        raise ValueError("stratified backgrounds need a protected attribute")
    parts = []
    for g in ("A", "B"):
        rows = train.X[train.protected == g]
        if len(rows) < k_per_group:
            raise ValueError(f"protected group {g} has {len(rows)} rows, needs {k_per_group}")
        parts.append(kmeans(rows, k_per_group, seed))
    return BackgroundSet(np.vstack(parts), "stratified-kmeans")


def backgrounds_for(train: Dataset, k: int = 4, seed: int = 0) -> BackgroundSet:
    """Stratified backgrounds when the data carries a protected attribute, plain otherwise."""
    if train.protected is not None:
        return stratified_backgrounds(train, k // 2, seed)
    return kmeans_backgrounds(train, k, seed)


# --- coalition game -------------------------------------------------------

def _as_mask(S, m: int) -> np.ndarray:
    S = np.asarray(S)
    if S.dtype == bool:
        if S.shape != (m,):
            raise ValueError(f"coalition mask must have length {m}")
        return S
    mask = np.zeros(m, dtype=bool)
    if S.size:
        idx = S.astype(int).ravel()
        if idx.min() < 0 or idx.max() >= m:
            raise IndexError(f"feature index out of range for m={m}: {idx.tolist()}")
        mask[idx] = True
    return mask


def masked_eval(model: MLPModel, x, S, b) -> float:
    x, b = np.asarray(x, float), np.asarray(b, float)
    if x.shape != b.shape:
        raise ValueError(f"x has {x.size} features, background row has {b.size}")
    mask = _as_mask(S, x.size)
    return float(predict_proba(model, np.where(mask, x, b)[None, :])[0])


def coalition_value(model: MLPModel, x, S, B) -> float:
    B = np.atleast_2d(np.asarray(B, float))
    if B.shape[0] == 0:
        raise ValueError("empty background set")
    return float(np.mean([masked_eval(model, x, S, b) for b in B]))


def _game_values(model, x, masks, B, forward=predict_proba, chunk=1 << 16):
    """v(S) for every row of the boolean ``masks`` matrix."""
    c, m = masks.shape
    k = B.shape[0]
    out = np.empty(c)
    step = max(1, chunk // k)
    for lo in range(0, c, step):
        mk = masks[lo:lo + step]
        hybrid = np.where(mk[:, None, :], x[None, None, :], B[None, :, :])
        out[lo:lo + step] = forward(model, hybrid.reshape(-1, m)).reshape(len(mk), k).mean(axis=1)
    return out


@dataclass(frozen=True)
class Explanation:
    phi: np.ndarray
    phi0: float
    fx: float


def _int_masks(codes: np.ndarray, m: int) -> np.ndarray:
    return ((codes[:, None] >> np.arange(m)) & 1).astype(bool)


def exact_shap(model: MLPModel, x, B, forward=predict_proba_rowwise) -> Explanation:
    """Shapley values by enumerating all 2^m coalitions (m <= 20).

    ``forward(model, X)`` scores a batch of rows; the default is the
    row-stable probability pass, so dummy features get exactly zero.
    """
    x = np.asarray(x, float)
    B = np.atleast_2d(np.asarray(B, float))
    m = x.size
    if m > EXACT_MAX_FEATURES:
        raise ShapError(f"exact enumeration limited to m <= {EXACT_MAX_FEATURES}, got {m}")
    if B.shape[0] == 0:
        raise ValueError("empty background set")
    if B.shape[1] != m:
        raise ValueError(f"x has {m} features, background has {B.shape[1]}")
    codes = np.arange(1 << m, dtype=np.int64)
    v = np.empty(codes.size)
    block = 1 << 14
    for lo in range(0, codes.size, block):
        cc = codes[lo:lo + block]
        v[lo:lo + block] = _game_values(model, x, _int_masks(cc, m), B, forward)
    sizes = np.zeros(codes.size, dtype=np.int64)
    for j in range(m):
        sizes += (codes >> j) & 1
    weight = np.array([factorial(s) * factorial(m - s - 1) / factorial(m) for s in range(m)])
    phi = np.empty(m)
    for j in range(m):
        without = codes[((codes >> j) & 1) == 0]
        phi[j] = np.sum(weight[sizes[without]] * (v[without | (1 << j)] - v[without]))
    return Explanation(phi=phi, phi0=float(v[0]), fx=float(v[-1]))


@dataclass(frozen=True)
class ShapConfig:
    coalition_budget: int | None = None  # None -> 2m + 2048
    seed: int = 0
    mode: str = "sampled"  # or "exact"

    def __post_init__(self):
        if self.mode not in ("sampled", "exact"):
            raise ValueError(f"mode must be 'sampled' or 'exact', got {self.mode!r}")

    def budget_for(self, m: int) -> int:
        budget = self.coalition_budget if self.coalition_budget is not None else 2 * m + DEFAULT_EXTRA_BUDGET
        if budget < 2 * m + 2:
            raise ValueError(f"coalition_budget {budget} below minimum 2m+2={2 * m + 2}")
        return budget


def shapley_kernel(m: int, s: int) -> float:
    """Kernel SHAP weight of one coalition of size s (0 < s < m)."""
    return (m - 1) / (comb(m, s) * s * (m - s))


@lru_cache(maxsize=32)
def _enumerated(m: int, budget: int):
    rows: list[np.ndarray] = []
    weights: list[float] = []
    remaining = budget
    sampled: list[int] = []
    for s in range(1, m // 2 + 1):
        pair = [s] if s == m - s else [s, m - s]
        count = sum(comb(m, t) for t in pair)
        if count <= remaining and not sampled:
            for t in pair:
                w = shapley_kernel(m, t)
                for combo in combinations(range(m), t):
                    z = np.zeros(m, dtype=bool)
                    z[list(combo)] = True
                    rows.append(z)
                    weights.append(w)
            remaining -= count
        else:
            sampled.extend(pair)
    Z = np.array(rows, dtype=bool).reshape(-1, m)
    Z.setflags(write=False)
    return Z, np.array(weights), remaining, tuple(sorted(sampled))


def coalition_design(m: int, budget: int, rng: np.random.Generator):
    """Coalitions (boolean rows) and regression weights for Kernel SHAP.

    Size pairs (s, m - s) are enumerated completely, smallest s first,
    while they fit in the budget; sizes 1 and m - 1 always do. The
    remaining kernel mass is covered by complement-paired random draws
    that share it equally (duplicates merged, weights summed).
    """
    Z, w, remaining, sampled = _enumerated(m, budget)
    n_draw = remaining // 2
    if not sampled or n_draw == 0:
        return Z, w
    sizes = np.array(sampled)
    mass = (m - 1) / (sizes * (m - sizes))
    picks = rng.choice(sizes, size=n_draw, p=mass / mass.sum())
    ranks = np.argsort(np.argsort(rng.random((n_draw, m)), axis=1), axis=1)
    draws = ranks < picks[:, None]
    draws = np.vstack([draws, ~draws])
    uniq, inverse = np.unique(draws, axis=0, return_inverse=True)
    w_draw = np.zeros(len(uniq))
    np.add.at(w_draw, inverse.ravel(), mass.sum() / len(draws))
    return np.vstack([Z, uniq]), np.concatenate([w, w_draw])


def kernel_shap(model: MLPModel, x, B, cfg: ShapConfig = ShapConfig()) -> Explanation:
    x = np.asarray(x, float)
    B = np.atleast_2d(np.asarray(B, float))
    m = x.size
    if m < 1:
        raise ValueError("need at least one feature")
    if B.shape[1] != m:
        raise ValueError(f"x has {m} features, background has {B.shape[1]}")
    if cfg.mode == "exact":
        return exact_shap(model, x, B)
    budget = cfg.budget_for(m)
    fx = float(predict_proba(model, x[None, :])[0])
    phi0 = float(predict_proba(model, B).mean())
    delta = fx - phi0
    if m == 1:
        return Explanation(np.array([delta]), phi0, fx)

    Z, w = coalition_design(m, budget, np.random.default_rng(cfg.seed))
    v = _game_values(model, x, Z, B)
    # eliminate the last feature through sum(phi) == fx - phi0
    Zf = Z.astype(float)
    A = Zf[:, :-1] - Zf[:, -1:]
    target = (v - phi0) - Zf[:, -1] * delta
    AtW = A.T * w
    lhs = AtW @ A
    scale = np.abs(np.diag(lhs)).max()
    if not np.isfinite(scale) or scale == 0.0:
        raise ShapError("degenerate Kernel SHAP regression system")
    lhs[np.diag_indices_from(lhs)] += RIDGE
    try:
        head = np.linalg.solve(lhs, AtW @ target)
    except np.linalg.LinAlgError as exc:
        raise ShapError(f"singular Kernel SHAP system ({exc}); raise coalition_budget") from None
    phi = np.append(head, delta - head.sum())
    return Explanation(phi, phi0, fx)


@dataclass(frozen=True)
class ExplanationMatrix:
    E: np.ndarray
    phi0: float
    fx: np.ndarray
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        E = np.array(self.E, dtype=float)
        if E.ndim != 2 or E.shape[0] == 0:
            raise ValueError("explanation matrix must be a nonempty 2-D array")
        E.setflags(write=False)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "fx", np.asarray(self.fx, dtype=float))

    @property
    def shape(self):
        return self.E.shape

    def additivity_error(self) -> np.ndarray:
        return np.abs(self.phi0 + self.E.sum(axis=1) - self.fx)


def explain_matrix(model: MLPModel, ds: Dataset, bg: BackgroundSet,
                   cfg: ShapConfig = ShapConfig(), n_jobs: int = 1) -> ExplanationMatrix:
    """Explain every row of ``ds``; row i uses seed ``cfg.seed + i``."""
    if bg.B.shape[1] != ds.m:
        raise ValueError(f"background has {bg.B.shape[1]} features, dataset has {ds.m}")

    def one(i: int) -> Explanation:
        try:
            return kernel_shap(model, ds.X[i], bg.B,
                               ShapConfig(cfg.coalition_budget, cfg.seed + i, cfg.mode))
        except (ShapError, ValueError) as exc:
            raise ShapError(f"row {i}: {exc}") from exc

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            rows = list(pool.map(one, range(ds.n)))
    else:
        rows = [one(i) for i in range(ds.n)]
    phi0 = rows[0].phi0
    return ExplanationMatrix(
        E=np.vstack([r.phi for r in rows]),
        phi0=phi0,
        fx=np.array([r.fx for r in rows]),
        feature_names=ds.feature_names,
    )
