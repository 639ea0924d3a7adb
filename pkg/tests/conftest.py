"""Shared fixtures.

The expensive artifacts (scenario datasets, the seed matrix of trained
models) are built once per session and shared between the unit tests and
the acceptance gate.  Build wall time is recorded so the acceptance
runtime budgets include it.
"""

import time

import numpy as np
import pytest

from melforce import datasets, training

DATASET_SEED = 7
ACCEPTANCE_SEEDS = (0, 1, 2, 3, 4)
EPOCHS = 1000


class TimedCache:
    """Holds models plus the wall time spent building them."""

    def __init__(self):
        self.models = {}
        self.build_time_s = 0.0

    def get(self, key, builder):
        if key not in self.models:
            t0 = time.perf_counter()
            self.models[key] = builder()
            self.build_time_s += time.perf_counter() - t0
        return self.models[key]


@pytest.fixture(scope="session")
def data_bundle():
    t0 = time.perf_counter()
    bundle = {
        name: datasets.generate_dataset(name, seed=DATASET_SEED)
        for name in datasets.SCENARIOS
    }
    bundle["_gen_time_s"] = time.perf_counter() - t0
    return bundle


@pytest.fixture(scope="session")
def data_dir(data_bundle, tmp_path_factory):
    out = tmp_path_factory.mktemp("datasets")
    for name in datasets.SCENARIOS:
        datasets.save_jsonl(data_bundle[name], str(out / f"{name.lower()}.jsonl"))
    return out


@pytest.fixture(scope="session")
def model_cache(data_bundle):
    """Lazily trained (model, feature, seed) matrix on the Data1 train split."""
    cache = TimedCache()
    trw = data_bundle["Data1"].windows("train")
    trl = data_bundle["Data1"].labels("train")

    def trainer(model_kind, feature, seed):
        def build():
            return training.train_model(
                model_kind, feature, trw, trl, epochs=EPOCHS, seed=seed
            )

        return cache.get((model_kind, feature, seed), build)

    cache.train = trainer
    return cache


def median_rmse(models, ds, split="test"):
    w, labels = ds.windows(split), ds.labels(split)
    return float(np.median([training.evaluate(m, w, labels) for m in models]))
