"""Feature extraction, model training and evaluation.

Feature kinds (all derived from a raw 512-sample EEF window):

- ``raw``: the window decimated to 2 ms sampling (256 samples).
- ``stft``: log short-time Fourier power, 17 x 129.
- ``mfcc``: DCT of the full 64-channel log-mel matrix, first 45 kept.
- ``ms_all``: log-mel with only the top 14 channels removed, 17 x 50.
- ``ms_lc``: ms_all with the bottom 5 channels also removed, 17 x 45 (the
  low-cut variant that discards drift-contaminated near-DC content).
- ``ms:<k>``: low cut of k channels, for the trim sweep.

Model kinds are ``cnn`` (the conv regressor) and ``fnn`` (two hidden layers
of 50).  Training is full-batch Adam on mean squared error, deterministic
for a given seed.  The 5 Hz low-pass baseline needs no training and scores a
window by the filter's final value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dsp, nn

FEATURE_KINDS = ("raw", "stft", "mfcc", "ms_all", "ms_lc")
MODEL_KINDS = ("cnn", "fnn")
RAW_SCALE_N = 10.0
MFCC_COEFFS = 45
LPF_BASELINE_HZ = 5.0

# The five comparison columns: name -> (model_kind, feature_kind); the
# low-pass baseline has no trained model.
TABLE_MODELS = {
    "lpf": None,
    "fnn_raw": ("fnn", "raw"),
    "cnn_raw": ("cnn", "raw"),
    "fnn_ms": ("fnn", "ms_lc"),
    "cnn_ms": ("cnn", "ms_lc"),
}


def parse_feature(feature: str) -> tuple[str, int]:
    """Split a feature token into (kind, trim_low); supports "ms:<k>"."""
    if feature.startswith("ms:"):
        k = int(feature.split(":", 1)[1])
        if not 0 <= k <= 20:
            raise ValueError(f"trim level {k} out of range")
        return "ms", k
    if feature == "ms_all":
        return "ms", 0
    if feature == "ms_lc":
        return "ms", 5
    if feature in ("raw", "stft", "mfcc"):
        return feature, 0
    raise ValueError(f"unknown feature {feature!r}")


def _ms_config(trim_low: int) -> dsp.SpectrogramConfig:
    return dsp.SpectrogramConfig(trim_low=trim_low, trim_high=14)


def feature_matrix(windows: np.ndarray, feature: str) -> np.ndarray:
    """Features for a batch of raw windows [N, 512].

    Returns [N, 256] for raw and [N, frames, channels] otherwise.
    """
    windows = np.atleast_2d(np.asarray(windows, dtype=float))
    kind, trim_low = parse_feature(feature)
    if kind == "raw":
        return windows[:, ::2].copy()
    if kind == "stft":
        return np.stack(
            [np.log(dsp.stft_power(w) + dsp.LOG_POWER_FLOOR) for w in windows]
        )
    if kind == "mfcc":
        return np.stack([dsp.mfcc(dsp.log_mel_full(w), MFCC_COEFFS) for w in windows])
    cfg = _ms_config(trim_low)
    return np.stack([dsp.mel_spectrogram(w, cfg).values for w in windows])


def fit_normalization(features: np.ndarray, feature: str) -> dict:
    """Normalization statistics from the training split only."""
    kind, _ = parse_feature(feature)
    if kind == "raw":
        return {"mode": "scale", "scale": RAW_SCALE_N}
    mean = features.mean(axis=(0, 1))
    std = features.std(axis=(0, 1))
    std = np.maximum(std, 1e-8)
    return {"mode": "per_channel", "mean": mean, "std": std}


def apply_normalization(features: np.ndarray, norm: dict) -> np.ndarray:
    if norm["mode"] == "scale":
        return features / norm["scale"]
    return (features - norm["mean"]) / norm["std"]


def _model_input(features: np.ndarray, model_kind: str) -> np.ndarray:
    """Shape normalized features for a model: conv wants [B, T, C]."""
    if model_kind == "cnn":
        if features.ndim == 2:  # raw vector -> single-channel sequence
            return features[:, :, None]
        return features
    return features.reshape(features.shape[0], -1)


def build_model(model_kind: str, feature_shape: tuple[int, ...]) -> nn.Sequential:
    if model_kind == "cnn":
        if len(feature_shape) == 1:
            frames, channels = feature_shape[0], 1
        else:
            frames, channels = feature_shape
        return nn.build_conv_regressor(frames, channels)
    if model_kind == "fnn":
        width = int(np.prod(feature_shape))
        return nn.build_fnn_regressor(width)
    raise ValueError(f"unknown model kind {model_kind!r}")


@dataclass
class TrainedModel:
    model_kind: str
    feature: str
    input_shape: tuple[int, ...]
    model: nn.Sequential
    norm: dict
    seed: int
    epochs: int
    loss_history: np.ndarray = field(repr=False, default=None)

    def predict(self, windows: np.ndarray) -> np.ndarray:
        """Estimated force in newtons for raw windows [N, 512] (or [512])."""
        single = np.asarray(windows).ndim == 1
        feats = feature_matrix(windows, self.feature)
        x = _model_input(apply_normalization(feats, self.norm), self.model_kind)
        pred = self.model.forward(x)[:, 0]
        return float(pred[0]) if single else pred


def train_model(
    model_kind: str,
    feature: str,
    train_windows: np.ndarray,
    train_labels: np.ndarray,
    epochs: int = 1000,
    seed: int = 0,
    lr: float = 0.001,
) -> TrainedModel:
    """Full-batch Adam training, bit-reproducible for a given seed."""
    train_windows = np.atleast_2d(np.asarray(train_windows, dtype=float))
    train_labels = np.asarray(train_labels, dtype=float).reshape(-1)
    if train_windows.shape[0] == 0:
        raise ValueError("training set is empty")
    if train_windows.shape[0] != train_labels.shape[0]:
        raise ValueError("windows and labels disagree in length")
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}")
    if epochs < 1:
        raise ValueError("epochs must be at least 1")

    feats = feature_matrix(train_windows, feature)
    norm = fit_normalization(feats, feature)
    x = _model_input(apply_normalization(feats, norm), model_kind)
    model = build_model(model_kind, x.shape[1:])
    model.init_params(np.random.default_rng(seed))

    opt = nn.Adam(model.params(), lr=lr)
    history = np.empty(epochs)
    for epoch in range(epochs):
        model.zero_grad()
        pred = model.forward(x)
        loss, grad = nn.mse_loss(pred, train_labels)
        history[epoch] = loss
        if not np.isfinite(loss):
            raise FloatingPointError(f"training diverged at epoch {epoch}")
        model.backward(grad)
        opt.step()

    return TrainedModel(
        model_kind=model_kind,
        feature=feature,
        input_shape=tuple(x.shape[1:]),
        model=model,
        norm=norm,
        seed=seed,
        epochs=epochs,
        loss_history=history,
    )


def lpf_predict(windows: np.ndarray, cutoff_hz: float = LPF_BASELINE_HZ) -> np.ndarray:
    """Low-pass baseline: filter each window and take the final value."""
    windows = np.atleast_2d(np.asarray(windows, dtype=float))
    return np.array(
        [dsp.lpf_first_order(w, cutoff_hz, dsp.SAMPLE_PERIOD_S)[-1] for w in windows]
    )


def rmse(pred: np.ndarray, labels: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=float).reshape(-1)
    labels = np.asarray(labels, dtype=float).reshape(-1)
    return float(np.sqrt(np.mean((pred - labels) ** 2)))


def evaluate(trained: TrainedModel | None, windows: np.ndarray, labels: np.ndarray) -> float:
    """Test RMSE of a trained model, or of the LPF baseline when None."""
    pred = lpf_predict(windows) if trained is None else trained.predict(windows)
    return rmse(pred, labels)
