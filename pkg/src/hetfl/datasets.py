"""Dataset sources: a seeded blob generator, the bundled breast-cancer table,
and column layouts for the headerless UCI files.

The UCI tables are not shipped.  Download them yourself and run
:func:`prepare_uci_csv` to prepend the header that :func:`hetfl.data.load_csv`
expects.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hetfl._seeding import derive_rng
from hetfl.data import Table
from hetfl.errors import DataError, InvalidArgumentError


@dataclass(frozen=True)
class SyntheticSpec:
    classes: int = 2
    clusters_per_class: int = 1
    dims: int = 8
    samples: int = 400
    noise: float = 1.0
    seed: int = 0
    separation: float = 3.0
    class_priors: tuple[float, ...] | None = None


def generate_synthetic(spec: SyntheticSpec | dict) -> Table:
    """Gaussian blobs: one isotropic cluster per (class, cluster) pair.

    Centres are drawn from ``N(0, separation**2)``; rows are split across
    classes by ``class_priors`` (uniform by default) and evenly across each
    class's clusters.  ``Table.groups`` holds the cluster id of every row.
    """
    if isinstance(spec, dict):
        spec = SyntheticSpec(**spec)
    if spec.dims < 2 or spec.classes < 2:
        raise InvalidArgumentError("synthetic data needs dims >= 2 and classes >= 2")
    if spec.clusters_per_class < 1 or spec.samples < spec.classes or spec.noise < 0:
        raise InvalidArgumentError(f"invalid synthetic spec {spec}")
    priors = np.full(spec.classes, 1.0 / spec.classes) if spec.class_priors is None \
        else np.asarray(spec.class_priors, dtype=np.float64)
    if priors.shape != (spec.classes,) or (priors < 0).any() or priors.sum() <= 0:
        raise InvalidArgumentError(f"class_priors must be {spec.classes} non-negative weights")
    priors = priors / priors.sum()

    counts = np.floor(priors * spec.samples).astype(int)
    short = spec.samples - counts.sum()
    for i in np.argsort(-(priors * spec.samples - counts), kind="stable")[:short]:
        counts[i] += 1

    rng = derive_rng(spec.seed, "synthetic")
    n_clusters = spec.classes * spec.clusters_per_class
    centres = rng.normal(0.0, spec.separation, size=(n_clusters, spec.dims))
    xs, ys, gs = [], [], []
    for c in range(spec.classes):
        per = np.array_split(np.arange(counts[c]), spec.clusters_per_class)
        for j, chunk in enumerate(per):
            g = c * spec.clusters_per_class + j
            xs.append(centres[g] + spec.noise * rng.normal(size=(chunk.size, spec.dims)))
            ys.append(np.full(chunk.size, c))
            gs.append(np.full(chunk.size, g))
    names = tuple(f"x{i}" for i in range(spec.dims))
    return Table(names, np.vstack(xs), np.concatenate(ys), spec.classes,
                 class_names=tuple(str(c) for c in range(spec.classes)),
                 groups=np.concatenate(gs))


def write_table_csv(table: Table, path, label_column: str = "label") -> None:
    names = table.class_names or tuple(str(c) for c in range(table.num_classes))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*table.feature_names, label_column])
        for row, y in zip(table.rows, table.labels):
            w.writerow([*(repr(float(v)) for v in row), names[y]])


def breast_cancer_table() -> Table:
    """Wisconsin diagnostic breast cancer (569 x 30), from scikit-learn's bundled copy.

    Classes are ordered by name: 0 = benign, 1 = malignant.
    """
    from sklearn.datasets import load_breast_cancer

    bunch = load_breast_cancer()
    names = [str(n) for n in bunch.target_names]
    raw = [names[t] for t in bunch.target]
    class_names = tuple(sorted(set(raw)))
    labels = np.array([class_names.index(v) for v in raw], dtype=np.int64)
    return Table(tuple(str(f) for f in bunch.feature_names), bunch.data, labels,
                 len(class_names), class_names=class_names)


# Column layouts of the raw UCI files.  Coimbra ships with this header already;
# the others have no header row.
_HCC_COLUMNS = [
    "Gender", "Symptoms", "Alcohol", "HBsAg", "HBeAg", "HBcAb", "HCVAb", "Cirrhosis",
    "Endemic", "Smoking", "Diabetes", "Obesity", "Hemochro", "AHT", "CRI", "HIV", "NASH",
    "Varices", "Spleno", "PHT", "PVT", "Metastasis", "Hallmark", "Age", "Grams_day",
    "Packs_year", "PS", "Encephalopathy", "Ascites", "INR", "AFP", "Hemoglobin", "MCV",
    "Leucocytes", "Platelets", "Albumin", "Total_Bil", "ALT", "AST", "GGT", "ALP", "TP",
    "Creatinine", "Nodule", "Major_Dim", "Dir_Bil", "Iron", "Sat", "Ferritin", "Class",
]
_ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
]
_ADULT_CATEGORICAL = {"workclass", "education", "marital-status", "occupation",
                      "relationship", "race", "sex", "native-country"}
_ILPD_COLUMNS = ["Age", "Gender", "TB", "DB", "Alkphos", "Sgpt", "Sgot", "TP", "ALB",
                 "AG_Ratio", "Selector"]

_COIMBRA_COLUMNS = ["Age", "BMI", "Glucose", "Insulin", "HOMA", "Leptin", "Adiponectin",
                    "Resistin", "MCP.1", "Classification"]

UCI_PRESETS = {
    "bcd_coimbra": {
        "columns": _COIMBRA_COLUMNS,
        "label_column": "Classification",
        "schema": {c: "numeric" for c in _COIMBRA_COLUMNS[:-1]},
    },
    "hcc": {
        "columns": _HCC_COLUMNS,
        "label_column": "Class",
        "schema": {c: "numeric" for c in _HCC_COLUMNS[:-1]},
    },
    "ilpd": {
        "columns": _ILPD_COLUMNS,
        "label_column": "Selector",
        "schema": {c: ("categorical" if c == "Gender" else "numeric") for c in _ILPD_COLUMNS[:-1]},
    },
    "adult": {
        "columns": _ADULT_COLUMNS,
        "label_column": "income",
        "schema": {c: ("categorical" if c in _ADULT_CATEGORICAL else "numeric")
                   for c in _ADULT_COLUMNS[:-1]},
    },
}


def prepare_uci_csv(raw_path, preset: str, out_path) -> None:
    """Copy a UCI data file to ``out_path`` under the preset's header row.

    A first row that already equals the header (the Coimbra download ships one) is dropped.
    """
    if preset not in UCI_PRESETS:
        raise InvalidArgumentError(f"unknown preset {preset!r}; choose from {sorted(UCI_PRESETS)}")
    columns = UCI_PRESETS[preset]["columns"]
    with Path(raw_path).open(newline="", encoding="utf-8") as src, \
            Path(out_path).open("w", newline="", encoding="utf-8") as dst:
        w = csv.writer(dst)
        w.writerow(columns)
        wrote_any = False
        for i, row in enumerate(csv.reader(src, skipinitialspace=True)):
            if not row or not any(c.strip() for c in row) or row[0].startswith("|"):
                continue
            if not wrote_any and [c.strip() for c in row] == columns:
                continue
            if len(row) != len(columns):
                raise DataError(f"{raw_path}: line {i + 1} has {len(row)} fields, "
                                f"{preset} has {len(columns)}")
            w.writerow([c.strip() for c in row])
            wrote_any = True
