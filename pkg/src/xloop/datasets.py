"""Synthetic data and schema-faithful stand-ins for the benchmark CSVs.

Only the breast-cancer data ships with scikit-learn; HeartRisk (Framingham),
Kidney (chronic kidney disease) and Student (student performance) must be
supplied by the user. ``write_fixture`` produces CSVs with the same column
names, kinds and category vocabularies so the ingestion path can be run
without them; their values are random.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .data import Dataset

INFORMATIVE = (0, 1, 2)


def synthetic(n: int = 600, m: int = 20, informative=INFORMATIVE, seed: int = 0,
              protected: bool = False) -> Dataset:
    """Gaussian features; ``y = 1[sum of informative columns > 0]``.

    With ``protected`` the group ids are drawn independently of everything else.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, m))
    y = (X[:, list(informative)].sum(axis=1) > 0).astype(int)
    groups = rng.choice(np.array(["A", "B"]), size=n) if protected else None
    return Dataset(X=X, y=y, feature_names=tuple(f"x{j}" for j in range(m)),
                   feature_origin=("numerical",) * m, protected=groups, name="synthetic")


def bayes_label(X, informative=INFORMATIVE) -> np.ndarray:
    """The generator's own decision rule."""
    return (np.asarray(X)[:, list(informative)].sum(axis=1) > 0).astype(int)


# --- benchmark schemas ----------------------------------------------------

CANCER_SCHEMA: dict[str, object] = {
    **{name: "numerical" for name in (
        "mean radius", "mean texture", "mean perimeter", "mean area", "mean smoothness",
        "mean compactness", "mean concavity", "mean concave points", "mean symmetry",
        "mean fractal dimension", "radius error", "texture error", "perimeter error",
        "area error", "smoothness error", "compactness error", "concavity error",
        "concave points error", "symmetry error", "fractal dimension error", "worst radius",
        "worst texture", "worst perimeter", "worst area", "worst smoothness",
        "worst compactness", "worst concavity", "worst concave points", "worst symmetry",
        "worst fractal dimension")},
    "diagnosis": {"kind": "label", "positive": "1"},
}

HEART_SCHEMA: dict[str, object] = {
    "male": {"kind": "protected", "group_a": "1"},
    "age": "numerical",
    "education": "numerical",
    "currentSmoker": "binary",
    "cigsPerDay": "numerical",
    "BPMeds": "binary",
    "prevalentStroke": "binary",
    "prevalentHyp": "binary",
    "diabetes": "binary",
    "totChol": "numerical",
    "sysBP": "numerical",
    "diaBP": "numerical",
    "BMI": "numerical",
    "heartRate": "numerical",
    "glucose": "numerical",
    "TenYearCHD": {"kind": "label", "positive": "1"},
}

KIDNEY_SCHEMA: dict[str, object] = {
    **{c: "numerical" for c in ("age", "bp", "bgr", "bu", "sc", "sod", "pot", "hemo", "pcv",
                                "wc", "rc")},
    "sg": "nary",
    "al": "nary",
    "su": "nary",
    **{c: "binary" for c in ("rbc", "pc", "pcc", "ba", "htn", "dm", "cad", "appet", "pe",
                             "ane")},
    "class": {"kind": "label", "positive": "ckd"},
}

STUDENT_SCHEMA: dict[str, object] = {
    "school": "binary",
    "sex": {"kind": "protected", "group_a": "M"},
    "age": "numerical",
    "address": "binary",
    "famsize": "binary",
    "Pstatus": "binary",
    "Medu": "numerical",
    "Fedu": "numerical",
    "Mjob": "nary",
    "Fjob": "nary",
    "reason": "nary",
    "guardian": "nary",
    "traveltime": "numerical",
    "studytime": "numerical",
    "failures": "numerical",
    "schoolsup": "binary",
    "famsup": "binary",
    "paid": "binary",
    "activities": "binary",
    "nursery": "binary",
    "higher": "binary",
    "internet": "binary",
    "romantic": "binary",
    "famrel": "numerical",
    "freetime": "numerical",
    "goout": "numerical",
    "Dalc": "numerical",
    "Walc": "numerical",
    "health": "numerical",
    "absences": "numerical",
    "G1": "ignore",
    "G2": "ignore",
    "G3": {"kind": "label", "threshold": 10},
}

SCHEMAS = {"cancer": CANCER_SCHEMA, "heartrisk": HEART_SCHEMA, "kidney": KIDNEY_SCHEMA,
           "student": STUDENT_SCHEMA}

# preprocessed feature counts per dataset (Table 1)
EXPECTED_FEATURES = {"cancer": 30, "heartrisk": 15, "kidney": 37, "student": 43}

_BINARY_VOCAB = {
    "currentSmoker": ("0", "1"), "BPMeds": ("0", "1"), "prevalentStroke": ("0", "1"),
    "prevalentHyp": ("0", "1"), "diabetes": ("0", "1"), "male": ("0", "1"),
    "rbc": ("normal", "abnormal"), "pc": ("normal", "abnormal"),
    "pcc": ("present", "notpresent"), "ba": ("present", "notpresent"),
    "htn": ("yes", "no"), "dm": ("yes", "no"), "cad": ("yes", "no"),
    "appet": ("good", "poor"), "pe": ("yes", "no"), "ane": ("yes", "no"),
    "school": ("GP", "MS"), "sex": ("F", "M"), "address": ("U", "R"),
    "famsize": ("LE3", "GT3"), "Pstatus": ("T", "A"),
    **{c: ("yes", "no") for c in ("schoolsup", "famsup", "paid", "activities", "nursery",
                                   "higher", "internet", "romantic")},
}
_NARY_VOCAB = {
    "sg": ("1.005", "1.010", "1.015", "1.020", "1.025"),
    "al": ("0", "1", "2", "3", "4", "5"),
    # "5" occurs only on rows with a missing cell, so it vanishes after dropping
    "su": ("0", "1", "2", "3", "4"),
    "Mjob": ("teacher", "health", "services", "at_home", "other"),
    "Fjob": ("teacher", "health", "services", "at_home", "other"),
    "reason": ("home", "reputation", "course", "other"),
    "guardian": ("mother", "father", "other"),
}
_MISSING_COLS = {
    "heartrisk": ("education", "cigsPerDay", "BPMeds", "totChol", "BMI", "heartRate", "glucose"),
    "kidney": ("bgr", "sod", "pot", "rbc", "pc", "wc", "rc"),
}


def write_cancer_csv(path) -> Path:
    """The Wisconsin diagnostic breast-cancer data bundled with scikit-learn."""
    from sklearn.datasets import load_breast_cancer

    bunch = load_breast_cancer()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(bunch.feature_names) + ["diagnosis"])
        # sklearn codes malignant as 0; the label here marks malignant as 1
        for row, target in zip(bunch.data, bunch.target):
            w.writerow([repr(float(v)) for v in row] + [str(1 - int(target))])
    return path


def write_synthetic_csv(path, n: int = 600, m: int = 20, seed: int = 0,
                        protected: bool = False) -> Path:
    """``synthetic(...)`` as a raw CSV (columns x0.., optional group, y)."""
    ds = synthetic(n, m, seed=seed, protected=protected)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(ds.feature_names) + (["group"] if protected else []) + ["y"])
        for i in range(ds.n):
            extra = [str(ds.protected[i])] if protected else []
            w.writerow([repr(float(v)) for v in ds.X[i]] + extra + [str(int(ds.y[i]))])
    return path


def synthetic_schema(m: int = 20, protected: bool = False) -> dict[str, object]:
    schema: dict[str, object] = {f"x{j}": "numerical" for j in range(m)}
    if protected:
        schema["group"] = {"kind": "protected", "group_a": "A"}
    schema["y"] = {"kind": "label", "positive": "1"}
    return schema


def write_fixture(name: str, path, n: int = 400, seed: int = 0) -> Path:
    """Random rows following one benchmark's schema (see module docstring)."""
    if name == "cancer":
        return write_cancer_csv(path)
    schema = SCHEMAS[name]
    rng = np.random.default_rng(seed)
    cols = list(schema)
    rows = []
    for _ in range(n):
        row = {}
        for col in cols:
            spec = schema[col]
            kind = spec if isinstance(spec, str) else spec["kind"]
            if kind in ("binary", "protected"):
                row[col] = str(rng.choice(_BINARY_VOCAB[col]))
            elif kind == "nary":
                row[col] = str(rng.choice(_NARY_VOCAB[col]))
            elif kind == "label":
                if "threshold" in spec:
                    row[col] = str(int(rng.integers(0, 21)))
                else:
                    row[col] = str(rng.choice({"heartrisk": ("0", "1"), "kidney": ("ckd", "notckd"),
                                               "cancer": ("0", "1")}[name]))
            elif kind == "ignore":
                row[col] = str(int(rng.integers(0, 21)))
            else:
                row[col] = f"{rng.normal(50, 10):.3f}"
        rows.append(row)
    # inject missing cells into ~15% of rows
    for col_list in (_MISSING_COLS.get(name, ()),):
        if not col_list:
            continue
        for i in rng.choice(n, size=n * 15 // 100, replace=False):
            rows[i][str(rng.choice(col_list))] = "?" if name == "kidney" else "NA"
        if name == "kidney":
            for i in rng.choice(n, size=5, replace=False):
                rows[i]["su"] = "5"
                rows[i]["bgr"] = "?"
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([row[c] for c in cols])
    return path
