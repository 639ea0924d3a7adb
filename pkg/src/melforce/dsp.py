"""Frequency-analysis primitives for 1 kHz force-sensor signals.

Everything here is a deterministic, pure function of its inputs: windowing,
short-time Fourier power, triangular Mel filterbank, the band-trimmed Mel
spectrogram used as the network input, MFCC, and the first-order low-pass
baseline.  Force windows are 512 samples at 1 ms, so the analysis band is
0..500 Hz.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

SAMPLE_RATE_HZ = 1000.0
SAMPLE_PERIOD_S = 0.001
WINDOW_SAMPLES = 512
LOG_POWER_FLOOR = 1e-10

_MEL_GAIN = 2595.0
_MEL_BREAK_HZ = 700.0


def mel_scale(f):
    """Map frequency in hertz to mel, 2595*log10(1 + f/700).

    Accepts scalars or arrays; strictly increasing, mel(0) = 0.
    """
    f = np.asarray(f, dtype=float)
    if np.any(f < 0.0):
        raise ValueError("frequency must be nonnegative")
    out = _MEL_GAIN * np.log10(1.0 + f / _MEL_BREAK_HZ)
    return float(out) if out.ndim == 0 else out


def mel_scale_inverse(m):
    """Inverse of mel_scale: mel value back to hertz."""
    m = np.asarray(m, dtype=float)
    if np.any(m < 0.0):
        raise ValueError("mel value must be nonnegative")
    out = _MEL_BREAK_HZ * (10.0 ** (m / _MEL_GAIN) - 1.0)
    return float(out) if out.ndim == 0 else out


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann taper of length n: w[k] = 0.5*(1 - cos(2*pi*k/n))."""
    if n < 2:
        raise ValueError("window length must be at least 2")
    k = np.arange(n)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * k / n))


@dataclass(frozen=True)
class SpectrogramConfig:
    """Framing and filterbank layout of the Mel-spectrogram feature.

    The defaults produce the canonical 17 x 45 feature: 256-sample frames,
    16-sample hop over a 512-sample window, 64 mel channels with the bottom
    5 and top 14 dropped.  A 32-sample hop is also accepted (it yields 9
    frames) for experimentation.
    """

    frame_len: int = 256
    hop_len: int = 16
    n_mels: int = 64
    f_min_hz: float = 0.0
    f_max_hz: float = SAMPLE_RATE_HZ / 2.0
    trim_low: int = 5
    trim_high: int = 14

    def __post_init__(self):
        if self.frame_len < 2 or self.hop_len < 1:
            raise ValueError("frame_len must be >= 2 and hop_len >= 1")
        if not 0.0 <= self.f_min_hz < self.f_max_hz <= SAMPLE_RATE_HZ / 2.0:
            raise ValueError("need 0 <= f_min < f_max <= Nyquist")
        if self.trim_low < 0 or self.trim_high < 0:
            raise ValueError("trim counts must be nonnegative")
        if self.n_kept < 1:
            raise ValueError("trimming removes every channel")

    @property
    def n_bins(self) -> int:
        return self.frame_len // 2 + 1

    @property
    def n_kept(self) -> int:
        return self.n_mels - self.trim_low - self.trim_high

    def n_frames(self, n_samples: int = WINDOW_SAMPLES) -> int:
        if n_samples < self.frame_len:
            raise ValueError(
                f"window of {n_samples} samples is shorter than one "
                f"{self.frame_len}-sample frame"
            )
        return (n_samples - self.frame_len) // self.hop_len + 1


@dataclass(frozen=True)
class ForceWindow:
    """Fixed 512-sample sliding window of force readings at 1 kHz."""

    samples: np.ndarray
    sample_period: float = SAMPLE_PERIOD_S
    t_end: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.shape != (WINDOW_SAMPLES,):
            raise ValueError(
                f"window must hold exactly {WINDOW_SAMPLES} samples, "
                f"got shape {samples.shape}"
            )
        if not np.all(np.isfinite(samples)):
            raise ValueError("window contains non-finite samples")
        if self.sample_period <= 0.0:
            raise ValueError("sample period must be positive")
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True)
class MelFilterbank:
    """Triangular mel filterbank: weights [n_mels x n_fft_bins], peak 1."""

    weights: np.ndarray
    bin_freqs_hz: np.ndarray
    center_freqs_hz: np.ndarray


@lru_cache(maxsize=8)
def _filterbank_cached(frame_len, n_mels, f_min_hz, f_max_hz):
    n_bins = frame_len // 2 + 1
    bin_freqs = np.arange(n_bins) * SAMPLE_RATE_HZ / frame_len
    # n_mels + 2 boundary points uniform on the mel axis; filter j spans
    # [edge_j, edge_{j+2}] with its peak at edge_{j+1}.
    edges_mel = np.linspace(mel_scale(f_min_hz), mel_scale(f_max_hz), n_mels + 2)
    edges_hz = mel_scale_inverse(edges_mel)
    lower = edges_hz[:-2, None]
    center = edges_hz[1:-1, None]
    upper = edges_hz[2:, None]
    rising = (bin_freqs[None, :] - lower) / (center - lower)
    falling = (upper - bin_freqs[None, :]) / (upper - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    return MelFilterbank(
        weights=weights,
        bin_freqs_hz=bin_freqs,
        center_freqs_hz=edges_hz[1:-1].copy(),
    )


def mel_filterbank(cfg: SpectrogramConfig) -> MelFilterbank:
    """Build (or fetch the cached) filterbank for a configuration."""
    return _filterbank_cached(cfg.frame_len, cfg.n_mels, cfg.f_min_hz, cfg.f_max_hz)


def _window_samples(window) -> np.ndarray:
    if isinstance(window, ForceWindow):
        return window.samples
    samples = np.asarray(window, dtype=float)
    if samples.ndim != 1:
        raise ValueError("expected a 1-D sample sequence")
    return samples


def stft_power(window, cfg: SpectrogramConfig = SpectrogramConfig()) -> np.ndarray:
    """One-sided short-time Fourier power of a force window.

    Returns [n_frames x n_bins] with |DFT(hann * frame)[b]|^2 per frame;
    17 x 129 for the canonical configuration.
    """
    samples = _window_samples(window)
    n_frames = cfg.n_frames(samples.shape[0])
    taper = hann_window(cfg.frame_len)
    starts = np.arange(n_frames) * cfg.hop_len
    frames = np.stack([samples[s : s + cfg.frame_len] for s in starts])
    spectrum = np.fft.rfft(frames * taper, axis=1)
    return np.abs(spectrum) ** 2


@dataclass(frozen=True)
class MelSpectrogram:
    """Band-trimmed log Mel spectrogram: [n_frames x n_kept] natural-log power."""

    values: np.ndarray
    config: SpectrogramConfig
    kept_channel_centers_hz: np.ndarray = field(repr=False)


def log_mel_full(window, cfg: SpectrogramConfig = SpectrogramConfig()) -> np.ndarray:
    """All-channel log mel matrix [n_frames x n_mels], before band trimming."""
    power = stft_power(window, cfg)
    fb = mel_filterbank(cfg)
    return np.log(power @ fb.weights.T + LOG_POWER_FLOOR)


def mel_spectrogram(
    window, cfg: SpectrogramConfig = SpectrogramConfig()
) -> MelSpectrogram:
    """Mel spectrogram with the configured low/high channels removed.

    The canonical configuration keeps channels 5..49 of 64, i.e. the band
    whose centers run from roughly 40 Hz to 360 Hz, which is what makes the
    feature insensitive to constant sensor offsets.
    """
    full = log_mel_full(window, cfg)
    fb = mel_filterbank(cfg)
    keep = slice(cfg.trim_low, cfg.n_mels - cfg.trim_high)
    return MelSpectrogram(
        values=full[:, keep],
        config=cfg,
        kept_channel_centers_hz=fb.center_freqs_hz[keep].copy(),
    )


@lru_cache(maxsize=4)
def _dct_ii_ortho(n: int) -> np.ndarray:
    k = np.arange(n)[:, None]
    t = np.arange(n)[None, :]
    mat = np.cos(np.pi * k * (2 * t + 1) / (2 * n))
    mat *= np.sqrt(2.0 / n)
    mat[0] *= np.sqrt(0.5)
    return mat


def mfcc(log_mel: np.ndarray, n_coeffs: int) -> np.ndarray:
    """Type-II orthonormal DCT of the log-mel channels, first n_coeffs kept.

    log_mel is [n_frames x n_mels]; returns [n_frames x n_coeffs].
    """
    log_mel = np.asarray(log_mel, dtype=float)
    n_mels = log_mel.shape[1]
    if not 1 <= n_coeffs <= n_mels:
        raise ValueError(f"n_coeffs must be in 1..{n_mels}, got {n_coeffs}")
    return log_mel @ _dct_ii_ortho(n_mels)[:n_coeffs].T


def lpf_first_order(signal, cutoff_hz: float, dt: float) -> np.ndarray:
    """First-order low-pass: y[k] = a*y[k-1] + (1-a)*u[k], a = exp(-2*pi*fc*dt).

    Initialized with y[-1] = u[0] so a constant input passes through exactly.
    """
    if cutoff_hz <= 0.0 or dt <= 0.0:
        raise ValueError("cutoff and dt must be positive")
    u = np.asarray(signal, dtype=float)
    if u.size == 0:
        return np.empty(0)
    a = np.exp(-2.0 * np.pi * cutoff_hz * dt)
    y = np.empty_like(u)
    prev = u[0]
    for k in range(u.shape[0]):
        prev = a * prev + (1.0 - a) * u[k]
        y[k] = prev
    return y
