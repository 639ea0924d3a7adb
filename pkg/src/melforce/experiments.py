"""Experiment drivers: RMSE tables for model and feature comparisons.

Every experiment trains on the clean scenario (Data1) and evaluates on the
test split of each requested scenario, reporting the median RMSE over the
requested training seeds.  Outputs are deterministic for fixed inputs:
result files carry the seeds and content digests rather than wall-clock
timestamps, so re-running a command reproduces identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .datasets import GrindDataset
from .training import TABLE_MODELS, evaluate, train_model

DEFAULT_SEEDS = (0, 1, 2, 3, 4)
FEATURE_COLUMNS = ("cnn_only", "cnn_stft", "cnn_mfcc", "cnn_ms_all", "cnn_ms_lc")
_FEATURE_OF_COLUMN = {
    "cnn_only": "raw",
    "cnn_stft": "stft",
    "cnn_mfcc": "mfcc",
    "cnn_ms_all": "ms_all",
    "cnn_ms_lc": "ms_lc",
}


@dataclass
class ResultTable:
    rows: list[str]
    columns: list[str]
    values: np.ndarray  # [n_rows x n_columns] RMSE in newtons
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.rows), len(self.columns)):
            raise ValueError("table shape does not match labels")
        if np.any(~np.isfinite(self.values)) or np.any(self.values < 0.0):
            raise ValueError("RMSE table must be finite and nonnegative")

    def value(self, row: str, column: str) -> float:
        return float(self.values[self.rows.index(row), self.columns.index(column)])

    def to_csv(self, path: str):
        with _atomic_write(path) as fh:
            fh.write("scenario," + ",".join(self.columns) + "\n")
            for name, row in zip(self.rows, self.values):
                fh.write(name + "," + ",".join(repr(float(v)) for v in row) + "\n")

    def to_json(self, path: str):
        doc = {
            "rows": self.rows,
            "columns": self.columns,
            "values": [list(map(float, row)) for row in self.values],
            "metadata": self.metadata,
        }
        with _atomic_write(path) as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path: str) -> "ResultTable":
        with open(path) as fh:
            doc = json.load(fh)
        return cls(
            rows=list(doc["rows"]),
            columns=list(doc["columns"]),
            values=np.asarray(doc["values"], dtype=float),
            metadata=dict(doc.get("metadata", {})),
        )


class _atomic_write:
    """Write to a temp file and rename into place on success."""

    def __init__(self, path: str):
        self.path = path
        fd, self.tmp_path = tempfile.mkstemp(
            dir=os.path.dirname(os.path.abspath(path)) or ".", suffix=".tmp"
        )
        self.fh = os.fdopen(fd, "w")

    def __enter__(self):
        return self.fh

    def __exit__(self, exc_type, exc, tb):
        self.fh.close()
        if exc_type is None:
            os.replace(self.tmp_path, self.path)
        else:
            os.unlink(self.tmp_path)
        return False


def build_id() -> str:
    return f"melforce-{__version__}"


def dataset_digest(ds: GrindDataset) -> str:
    """Content hash of a dataset, used as deterministic provenance."""
    h = hashlib.sha256()
    for r in ds.records:
        h.update(
            f"{r.scenario}|{r.split}|{r.command_offset_mm}|{r.label_n!r}|{r.t_end!r}".encode()
        )
        h.update(r.eef.tobytes())
    return h.hexdigest()[:16]


def _metadata(seeds, train_ds: GrindDataset, test_sets: dict, epochs: int) -> dict:
    return {
        "build_id": build_id(),
        "seeds": list(seeds),
        "epochs": epochs,
        "train_digest": dataset_digest(train_ds),
        "test_digests": {name: dataset_digest(ds) for name, ds in test_sets.items()},
    }


def _median_rmse_over_seeds(
    model_kind: str,
    feature: str,
    train_ds: GrindDataset,
    test_sets: dict[str, GrindDataset],
    seeds,
    epochs: int,
) -> dict[str, float]:
    trw, trl = train_ds.windows("train"), train_ds.labels("train")
    per_test = {name: [] for name in test_sets}
    for seed in seeds:
        trained = train_model(model_kind, feature, trw, trl, epochs=epochs, seed=seed)
        for name, ds in test_sets.items():
            per_test[name].append(
                evaluate(trained, ds.windows("test"), ds.labels("test"))
            )
    return {name: float(np.median(vals)) for name, vals in per_test.items()}


def model_comparison(
    train_ds: GrindDataset,
    test_sets: dict[str, GrindDataset],
    seeds=DEFAULT_SEEDS,
    epochs: int = 1000,
    models=tuple(TABLE_MODELS),
) -> ResultTable:
    """RMSE of the five comparison models per test scenario (median of seeds)."""
    rows = list(test_sets)
    values = np.zeros((len(rows), len(models)))
    for col, model_name in enumerate(models):
        spec = TABLE_MODELS[model_name]
        if spec is None:
            for row, name in enumerate(rows):
                ds = test_sets[name]
                values[row, col] = evaluate(None, ds.windows("test"), ds.labels("test"))
            continue
        medians = _median_rmse_over_seeds(
            spec[0], spec[1], train_ds, test_sets, seeds, epochs
        )
        for row, name in enumerate(rows):
            values[row, col] = medians[name]
    meta = _metadata(seeds, train_ds, test_sets, epochs)
    return ResultTable(rows=rows, columns=list(models), values=values, metadata=meta)


def feature_comparison(
    train_ds: GrindDataset,
    test_sets: dict[str, GrindDataset],
    seeds=DEFAULT_SEEDS,
    epochs: int = 1000,
) -> ResultTable:
    """RMSE of the conv model over the five feature variants."""
    rows = list(test_sets)
    values = np.zeros((len(rows), len(FEATURE_COLUMNS)))
    for col, column in enumerate(FEATURE_COLUMNS):
        medians = _median_rmse_over_seeds(
            "cnn", _FEATURE_OF_COLUMN[column], train_ds, test_sets, seeds, epochs
        )
        for row, name in enumerate(rows):
            values[row, col] = medians[name]
    meta = _metadata(seeds, train_ds, test_sets, epochs)
    return ResultTable(
        rows=rows, columns=list(FEATURE_COLUMNS), values=values, metadata=meta
    )


def trim_sweep(
    train_ds: GrindDataset,
    test_sets: dict[str, GrindDataset],
    trims=(0, 1, 2, 3, 4, 5),
    seeds=DEFAULT_SEEDS,
    epochs: int = 1000,
) -> ResultTable:
    """RMSE of the conv model as the low-frequency cut deepens."""
    rows = list(test_sets)
    columns = [("none" if k == 0 else f"{k}dim") for k in trims]
    values = np.zeros((len(rows), len(trims)))
    for col, k in enumerate(trims):
        medians = _median_rmse_over_seeds(
            "cnn", f"ms:{k}", train_ds, test_sets, seeds, epochs
        )
        for row, name in enumerate(rows):
            values[row, col] = medians[name]
    meta = _metadata(seeds, train_ds, test_sets, epochs)
    meta["trims"] = list(trims)
    return ResultTable(rows=rows, columns=columns, values=values, metadata=meta)
