"""Tabular ingestion and preprocessing.

Numerical columns are z-scored, binary categoricals become a single
{-1, 1} column and N-ary categoricals become N columns with 1 for the
active category and -1 elsewhere. Zero therefore means "no information"
for every feature, which the explanation-driven transforms rely on.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd

NUMERICAL = "numerical"
BINARY = "binary"
NARY = "nary"
LABEL = "label"
PROTECTED = "protected"
IGNORE = "ignore"
COLUMN_KINDS = (NUMERICAL, BINARY, NARY, LABEL, PROTECTED, IGNORE)

DEFAULT_MISSING = ("", "?", "NA")


class DataError(ValueError):
    """Raised for malformed input data or schemas."""


@dataclass(frozen=True)
class ColumnSpec:
    kind: str
    # label: value mapped to 1, or numeric threshold (y = value >= threshold)
    positive: str | None = None
    threshold: float | None = None
    # protected: category that forms group A
    group_a: str | None = None


def parse_schema(schema: Mapping[str, object]) -> dict[str, ColumnSpec]:
    """Normalise a schema mapping ``column -> kind | {kind: ..., ...}``."""
    out: dict[str, ColumnSpec] = {}
    for col, spec in schema.items():
        if isinstance(spec, str):
            spec = {"kind": spec}
        elif isinstance(spec, ColumnSpec):
            out[col] = spec
            continue
        spec = dict(spec)  # type: ignore[arg-type]
        kind = spec.pop("kind", None)
        if kind not in COLUMN_KINDS:
            raise DataError(f"column {col!r}: unknown kind {kind!r}")
        for key in ("positive", "group_a"):
            if spec.get(key) is not None:
                spec[key] = str(spec[key])
        try:
            out[col] = ColumnSpec(kind=kind, **spec)
        except TypeError as exc:
            raise DataError(f"column {col!r}: {exc}") from None
    kinds = [s.kind for s in out.values()]
    if kinds.count(LABEL) != 1:
        raise DataError(f"schema needs exactly one label column, got {kinds.count(LABEL)}")
    if kinds.count(PROTECTED) > 1:
        raise DataError("schema allows at most one protected column")
    return out


@dataclass
class RawDataset:
    """Parsed CSV rows; missing cells are ``None``."""

    name: str
    columns: list[str]
    column_kinds: dict[str, ColumnSpec]
    rows: list[dict[str, object]]

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def label_column(self) -> str:
        return next(c for c, s in self.column_kinds.items() if s.kind == LABEL)

    @property
    def protected_column(self) -> str | None:
        return next((c for c, s in self.column_kinds.items() if s.kind == PROTECTED), None)

    def complete_rows(self) -> "RawDataset":
        used = [c for c in self.columns if self.column_kinds[c].kind != IGNORE]
        rows = [r for r in self.rows if all(r[c] is not None for c in used)]
        return replace(self, rows=rows)

    def subset(self, idx) -> "RawDataset":
        return replace(self, rows=[self.rows[i] for i in idx])

    def labels(self) -> np.ndarray:
        return _encode_label(self.rows, self.label_column, self.column_kinds[self.label_column])


def load_dataset(path, schema: Mapping[str, object], name: str | None = None,
                 missing=DEFAULT_MISSING) -> RawDataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    kinds = parse_schema(schema)
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    header = [c.strip() for c in frame.columns]
    frame.columns = header
    if set(header) != set(kinds):
        missing_cols = sorted(set(kinds) - set(header))
        extra = sorted(set(header) - set(kinds))
        raise DataError(f"header/schema mismatch: missing {missing_cols}, unexpected {extra}")
    if len(frame) == 0:
        raise DataError(f"{path}: no rows")
    missing = set(missing)
    rows: list[dict[str, object]] = []
    for lineno, rec in enumerate(frame.to_dict("records"), start=2):
        row: dict[str, object] = {}
        for col in header:
            cell = rec[col].strip()
            if cell in missing:
                row[col] = None
            elif kinds[col].kind == NUMERICAL:
                try:
                    row[col] = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}:{lineno}: non-numeric value {cell!r} in numerical column {col!r}"
                    ) from None
            else:
                row[col] = cell
        rows.append(row)
    return RawDataset(name=name or path.stem, columns=header, column_kinds=kinds, rows=rows)


@dataclass(frozen=True)
class NormStats:
    """Everything fitted on the training split and reused on the test split."""

    means: dict[str, float]
    stds: dict[str, float]
    vocab: dict[str, list[str]]


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    feature_origin: tuple[str, ...]  # "numerical" | "one-hot"
    protected: np.ndarray | None = None  # "A"/"B"
    norm_stats: NormStats | None = None
    name: str = ""

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y).astype(int)
        if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
            raise DataError(f"X must be a nonempty 2-D matrix, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
        if not np.isin(y, (0, 1)).all():
            raise DataError("labels must be 0/1")
        if len(self.feature_names) != X.shape[1] or len(self.feature_origin) != X.shape[1]:
            raise DataError("feature metadata does not match column count")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "feature_origin", tuple(self.feature_origin))
        if self.protected is not None:
            g = np.asarray(self.protected).astype(str)
            if g.shape != y.shape:
                raise DataError("protected vector length mismatch")
            g.setflags(write=False)
            object.__setattr__(self, "protected", g)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    @property
    def onehot_mask(self) -> np.ndarray:
        return np.array([o == "one-hot" for o in self.feature_origin])

    def with_X(self, X) -> "Dataset":
        return replace(self, X=np.array(X, dtype=float))

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return replace(
            self,
            X=self.X[idx],
            y=self.y[idx],
            protected=None if self.protected is None else self.protected[idx],
        )

    def select_features(self, cols) -> "Dataset":
        cols = list(cols)
        return replace(
            self,
            X=self.X[:, cols],
            feature_names=tuple(self.feature_names[c] for c in cols),
            feature_origin=tuple(self.feature_origin[c] for c in cols),
        )


def _encode_label(rows, col: str, spec: ColumnSpec) -> np.ndarray:
    values = [r[col] for r in rows]
    if spec.threshold is not None:
        try:
            return np.array([float(v) >= spec.threshold for v in values], dtype=int)
        except (TypeError, ValueError):
            raise DataError(f"label column {col!r} is not numeric but has a threshold") from None
    if spec.positive is not None:
        return np.array([str(v) == spec.positive for v in values], dtype=int)
    cats = sorted({str(v) for v in values})
    if len(cats) > 2:
        raise DataError(f"label column {col!r} has more than two classes: {cats}")
    positive = "1" if set(cats) <= {"0", "1"} else cats[-1]
    return np.array([str(v) == positive for v in values], dtype=int)


def _binary_vocab(col: str, observed: set[str]) -> list[str]:
    cats = sorted(observed)
    if len(cats) != 2:
        raise DataError(f"binary column {col!r} needs exactly 2 categories, found {cats}")
    return cats


def fit_stats(raw: RawDataset) -> NormStats:
    means, stds, vocab = {}, {}, {}
    for col in raw.columns:
        kind = raw.column_kinds[col].kind
        values = [r[col] for r in raw.rows]
        if kind == NUMERICAL:
            arr = np.asarray(values, dtype=float)
            mu, sd = float(arr.mean()), float(arr.std())
            if sd == 0.0:
                raise DataError(f"numerical column {col!r} has zero variance")
            means[col], stds[col] = mu, sd
        elif kind in (BINARY, PROTECTED):
            vocab[col] = _binary_vocab(col, {str(v) for v in values})
        elif kind == NARY:
            vocab[col] = sorted({str(v) for v in values})
    return NormStats(means=means, stds=stds, vocab=vocab)


def preprocess(raw: RawDataset, fit: NormStats | None = None) -> Dataset:
    """Drop incomplete rows and encode.

    ``fit`` carries training-split statistics; leave it ``None`` on the
    training split to fit them here.
    """
    raw = raw.complete_rows()
    if len(raw) == 0:
        raise DataError(f"{raw.name}: all rows removed (missing values)")
    stats = fit if fit is not None else fit_stats(raw)

    cols: list[np.ndarray] = []
    names: list[str] = []
    origin: list[str] = []
    protected = None
    for col in raw.columns:
        spec = raw.column_kinds[col]
        values = [r[col] for r in raw.rows]
        if spec.kind == NUMERICAL:
            arr = np.asarray(values, dtype=float)
            cols.append((arr - stats.means[col]) / stats.stds[col])
            names.append(col)
            origin.append(NUMERICAL)
        elif spec.kind in (BINARY, PROTECTED):
            cats = stats.vocab[col]
            svals = [str(v) for v in values]
            unseen = set(svals) - set(cats)
            if unseen:
                raise DataError(f"column {col!r}: unseen categories {sorted(unseen)}")
            pos = cats[1]
            cols.append(np.array([1.0 if v == pos else -1.0 for v in svals]))
            names.append(col)
            origin.append("one-hot")
            if spec.kind == PROTECTED:
                group_a = spec.group_a if spec.group_a is not None else pos
                if group_a not in cats:
                    raise DataError(f"protected column {col!r}: group_a {group_a!r} not in {cats}")
                protected = np.array(["A" if v == group_a else "B" for v in svals])
        elif spec.kind == NARY:
            cats = stats.vocab[col]
            svals = [str(v) for v in values]
            unseen = set(svals) - set(cats)
            if unseen:
                raise DataError(f"column {col!r}: unseen categories {sorted(unseen)}")
            for cat in cats:
                cols.append(np.array([1.0 if v == cat else -1.0 for v in svals]))
                names.append(f"{col}={cat}")
                origin.append("one-hot")
    y = raw.labels()
    return Dataset(
        X=np.column_stack(cols),
        y=y,
        feature_names=tuple(names),
        feature_origin=tuple(origin),
        protected=protected,
        norm_stats=stats,
        name=raw.name,
    )


@dataclass(frozen=True)
class SplitConfig:
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise DataError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")


def split_indices(y, cfg: SplitConfig) -> tuple[np.ndarray, np.ndarray]:
    """Stratified, seeded train/test index split."""
    y = np.asarray(y)
    if len(y) < 2:
        raise DataError("need at least two rows to split")
    classes = np.unique(y)
    if len(classes) < 2:
        raise DataError("both classes must be present to split")
    rng = np.random.default_rng(cfg.seed)
    n_test_total = int(round(cfg.test_fraction * len(y)))
    if n_test_total == 0 or n_test_total == len(y):
        raise DataError(f"test_fraction {cfg.test_fraction} leaves an empty side for n={len(y)}")
    test: list[np.ndarray] = []
    allocated = 0
    for i, c in enumerate(classes):
        members = np.flatnonzero(y == c)
        members = members[rng.permutation(len(members))]
        if i == len(classes) - 1:
            k = n_test_total - allocated
        else:
            k = int(round(cfg.test_fraction * len(members)))
        k = min(max(k, 0), len(members))
        allocated += k
        test.append(members[:k])
    test_idx = np.sort(np.concatenate(test))
    train_idx = np.setdiff1d(np.arange(len(y)), test_idx)
    if len(test_idx) == 0 or len(train_idx) == 0:
        raise DataError(f"test_fraction {cfg.test_fraction} leaves an empty side")
    return train_idx, test_idx


def train_test_split(ds: Dataset, cfg: SplitConfig) -> tuple[Dataset, Dataset]:
    train_idx, test_idx = split_indices(ds.y, cfg)
    return ds.take(train_idx), ds.take(test_idx)


def smote_rebalance(train: Dataset, k_neighbors: int = 5, seed: int = 0) -> Dataset:
    """Oversample the minority class until both classes have equal counts.

    Each synthetic row is ``x + lam * (x_nn - x)`` where ``x`` is a random
    minority row, ``x_nn`` one of its ``k_neighbors`` nearest minority rows
    and ``lam ~ U[0, 1]``. Synthetic rows inherit the protected group of ``x``.
    Original rows come first, unchanged.
    """
    y = train.y
    counts = np.bincount(y, minlength=2)
    if (counts == 0).any():
        raise DataError("SMOTE needs both classes present")
    minority = int(np.argmin(counts))
    deficit = int(counts.max() - counts.min())
    if deficit == 0:
        return train
    idx = np.flatnonzero(y == minority)
    if len(idx) <= k_neighbors:
        raise DataError(
            f"minority class has {len(idx)} rows, needs more than k_neighbors={k_neighbors}"
        )
    Xmin = train.X[idx]
    d2 = ((Xmin[:, None, :] - Xmin[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    neighbors = np.argsort(d2, axis=1, kind="stable")[:, :k_neighbors]

    rng = np.random.default_rng(seed)
    base = rng.integers(0, len(idx), size=deficit)
    pick = neighbors[base, rng.integers(0, k_neighbors, size=deficit)]
    lam = rng.uniform(0.0, 1.0, size=deficit)
    synth = Xmin[base] + lam[:, None] * (Xmin[pick] - Xmin[base])

    protected = train.protected
    if protected is not None:
        protected = np.concatenate([protected, protected[idx[base]]])
    return replace(
        train,
        X=np.vstack([train.X, synth]),
        y=np.concatenate([y, np.full(deficit, minority)]),
        protected=protected,
    )


# --- CSV export -----------------------------------------------------------

def fmt_float(v: float) -> str:
    return format(float(v), ".17g")


def write_dataset_csv(ds: Dataset, path) -> None:
    """Write ``feature..., label[, protected]`` plus a ``.schema.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = list(ds.feature_names) + ["label"]
        if ds.protected is not None:
            header.append("protected")
        w.writerow(header)
        for i in range(ds.n):
            row = [fmt_float(v) for v in ds.X[i]] + [str(int(ds.y[i]))]
            if ds.protected is not None:
                row.append(str(ds.protected[i]))
            w.writerow(row)
    sidecar = {"feature_origin": list(ds.feature_origin), "name": ds.name}
    Path(str(path) + ".schema.json").write_text(json.dumps(sidecar, indent=2) + "\n")


def read_dataset_csv(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    frame = pd.read_csv(path)
    if "label" not in frame.columns:
        raise DataError(f"{path}: missing 'label' column")
    protected = frame.pop("protected").astype(str).to_numpy() if "protected" in frame else None
    y = frame.pop("label").to_numpy()
    names = tuple(frame.columns)
    sidecar = Path(str(path) + ".schema.json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        origin, name = tuple(meta["feature_origin"]), meta.get("name", path.stem)
    else:
        origin, name = (NUMERICAL,) * len(names), path.stem
    return Dataset(X=frame.to_numpy(dtype=float), y=y, feature_names=names,
                   feature_origin=origin, protected=protected, name=name)


@dataclass
class PreparedData:
    train: Dataset
    test: Dataset
    n_dropped: int = 0
    extra: dict = field(default_factory=dict)


def prepare(raw: RawDataset, split: SplitConfig, smote_k: int = 5,
            smote_seed: int = 0, smote: bool = True) -> PreparedData:
    """Drop incomplete rows, split, encode with train statistics, SMOTE the train split."""
    complete = raw.complete_rows()
    dropped = len(raw) - len(complete)
    if len(complete) == 0:
        raise DataError(f"{raw.name}: all rows removed (missing values)")
    train_idx, test_idx = split_indices(complete.labels(), split)
    train = preprocess(complete.subset(train_idx))
    test = preprocess(complete.subset(test_idx), train.norm_stats)
    if smote:
        train = smote_rebalance(train, smote_k, smote_seed)
    return PreparedData(train=train, test=test, n_dropped=dropped)
