"""End-to-end force estimator: raw 512-sample window in, newtons out.

Thin wrapper around a trained model checkpoint; used in-process by the
control loop and evaluation code, and by the UDP service.
"""

from __future__ import annotations

import numpy as np

from . import checkpoint
from .dsp import WINDOW_SAMPLES
from .training import TrainedModel


class ForceEstimator:
    def __init__(self, trained: TrainedModel):
        self.trained = trained

    @classmethod
    def from_checkpoint(cls, path: str) -> "ForceEstimator":
        return cls(checkpoint.load(path))

    def estimate(self, samples: np.ndarray) -> float:
        samples = np.asarray(samples, dtype=float)
        if samples.shape != (WINDOW_SAMPLES,):
            raise ValueError(
                f"estimator expects {WINDOW_SAMPLES} samples, got {samples.shape}"
            )
        return float(self.trained.predict(samples))

    __call__ = estimate


class RemoteEstimator:
    """Latest-value adapter around the UDP client for the control loop.

    Polls the service for each window and holds the previous estimate when
    a response is late or lost, so the loop's feedback is always defined.
    """

    def __init__(self, client, fallback: float = 0.0):
        self.client = client
        self.last_value = fallback
        self.stale_count = 0

    def __call__(self, samples: np.ndarray) -> float:
        value = self.client.poll(np.asarray(samples, dtype=np.float32))
        if value is None:
            self.stale_count += 1
        else:
            self.last_value = value
        return self.last_value
