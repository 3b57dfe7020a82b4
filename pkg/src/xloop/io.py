"""CSV persistence for explanation matrices, backgrounds and tidy tables."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .data import fmt_float
from .explain import BackgroundSet, ExplanationMatrix


def _cell(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return str(v)


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def write_matrix(path, names: Sequence[str], M: np.ndarray) -> Path:
    return write_table(path, names, (list(r) for r in np.asarray(M, dtype=float)))


def write_explanations(path, E: ExplanationMatrix, meta: dict | None = None) -> Path:
    """Scores as CSV plus ``<path>.meta.json`` with phi0, per-row model output and run info."""
    names = list(E.feature_names) or [f"f{j}" for j in range(E.shape[1])]
    path = write_matrix(path, names, E.E)
    sidecar = {"phi0": fmt_float(E.phi0), "fx": [fmt_float(v) for v in E.fx], **(meta or {})}
    Path(str(path) + ".meta.json").write_text(json.dumps(sidecar, indent=1) + "\n",
                                              encoding="utf-8")
    return path


def read_explanations(path) -> ExplanationMatrix:
    path = Path(path)
    frame = pd.read_csv(path)
    meta = json.loads(Path(str(path) + ".meta.json").read_text(encoding="utf-8"))
    return ExplanationMatrix(
        E=frame.to_numpy(dtype=float),
        phi0=float(meta["phi0"]),
        fx=np.array([float(v) for v in meta["fx"]]),
        feature_names=tuple(frame.columns),
    )


def write_background(path, bg: BackgroundSet, names: Sequence[str]) -> Path:
    return write_matrix(path, names, bg.B)


def read_background(path) -> BackgroundSet:
    frame = pd.read_csv(path)
    return BackgroundSet(frame.to_numpy(dtype=float), "file")
