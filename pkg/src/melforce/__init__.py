"""Drift-robust contact-force estimation from force-signal Mel spectrograms.

Subpackages and modules:

- ``dsp``: STFT / Mel-spectrogram / MFCC / low-pass primitives.
- ``nn``: minimal conv/dense network engine with explicit backprop and Adam.
- ``plant``: synthetic grinding plant and hysteresis model.
- ``datasets``: closed-loop dataset generator (Data1..Data4 scenarios).
- ``control``: impedance + disturbance-observer loop and trajectories.
- ``training``: feature extraction, model training and evaluation.
- ``estimator``: checkpointed end-to-end force estimator.
- ``service``: UDP request/response wire protocol, server and client.
- ``experiments``: result tables for the model/feature comparison runs.
- ``kernels``: compiled hot-loop kernels with a numpy fallback.
"""

__version__ = "0.1.0"

from .kernels import backend_name  # noqa: F401
