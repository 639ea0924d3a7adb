"""Regenerate the golden Mel-spectrogram vectors.

Deliberately avoids the package's DSP code: the DFT is the O(N^2) matrix
definition, the filterbank triangles and the log are written out from the
formulas.  Run from the repository root:

    python3 tests/tools/gen_golden_vectors.py
"""

import json
import math
import os

import numpy as np

SAMPLE_RATE = 1000.0
FRAME = 256
HOP = 16
N_MELS = 64
TRIM_LOW = 5
TRIM_HIGH = 14
FLOOR = 1e-10


def mel(f):
    return 2595.0 * math.log10(1.0 + f / 700.0)


def mel_inv(m):
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def oracle_mel_spectrogram(window):
    taper = np.array(
        [0.5 * (1.0 - math.cos(2.0 * math.pi * k / FRAME)) for k in range(FRAME)]
    )
    n_frames = (len(window) - FRAME) // HOP + 1
    n_bins = FRAME // 2 + 1
    dft = np.exp(
        -2j * math.pi * np.outer(np.arange(FRAME), np.arange(FRAME)) / FRAME
    )
    power = np.empty((n_frames, n_bins))
    for f in range(n_frames):
        frame = np.asarray(window[f * HOP : f * HOP + FRAME]) * taper
        spectrum = dft @ frame
        power[f] = np.abs(spectrum[:n_bins]) ** 2

    edges = [mel_inv(mel(SAMPLE_RATE / 2.0) * i / (N_MELS + 1)) for i in range(N_MELS + 2)]
    bin_freqs = [k * SAMPLE_RATE / FRAME for k in range(n_bins)]
    weights = np.zeros((N_MELS, n_bins))
    for j in range(N_MELS):
        lo, mid, hi = edges[j], edges[j + 1], edges[j + 2]
        for k, fk in enumerate(bin_freqs):
            if lo < fk < mid:
                weights[j, k] = (fk - lo) / (mid - lo)
            elif fk == mid:
                weights[j, k] = 1.0
            elif mid < fk < hi:
                weights[j, k] = (hi - fk) / (hi - mid)
    full = np.log(power @ weights.T + FLOOR)
    return full[:, TRIM_LOW : N_MELS - TRIM_HIGH]


def make_cases():
    rng = np.random.default_rng(20240811)
    t = np.arange(512) / SAMPLE_RATE
    cases = []
    cases.append(("zeros", np.zeros(512)))
    cases.append(
        ("tone_200hz_on_2n", 2.0 + 0.65 * np.sin(2 * math.pi * 200.0 * t + 0.3))
    )
    chirp = np.sin(2 * math.pi * (120.0 * t + 0.5 * 180.0 / t[-1] * t**2))
    cases.append(("chirp_120_300hz", 0.4 * chirp + 1.5))
    cases.append(("noise", rng.standard_normal(512) * 0.8))
    mix = (
        1.2
        + 0.5 * np.sin(2 * math.pi * 137.0 * t)
        + 0.15 * np.sin(2 * math.pi * 274.0 * t + 1.0)
        + 0.05 * rng.standard_normal(512)
    )
    cases.append(("grind_like_mix", mix))
    return cases


def main():
    out = {"tolerance_abs": 1e-6, "cases": []}
    for name, window in make_cases():
        out["cases"].append(
            {
                "name": name,
                "window": list(map(float, window)),
                "expected": [list(map(float, row)) for row in oracle_mel_spectrogram(window)],
            }
        )
    path = os.path.join(os.path.dirname(__file__), "..", "golden", "mel_golden.json")
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(out, fh)
    print(f"wrote {os.path.normpath(path)} ({len(out['cases'])} cases)")


if __name__ == "__main__":
    main()
