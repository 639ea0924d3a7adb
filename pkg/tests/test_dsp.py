import numpy as np
import numpy.testing as npt
import pytest

from melforce import dsp


def naive_dft_power(frame):
    """O(N^2) one-sided DFT power oracle, built from the matrix definition."""
    n = frame.shape[0]
    k = np.arange(n)[:, None]
    t = np.arange(n)[None, :]
    dft = np.exp(-2j * np.pi * k * t / n)
    spectrum = dft @ frame
    return np.abs(spectrum[: n // 2 + 1]) ** 2


class TestMelScale:
    def test_zero(self):
        assert dsp.mel_scale(0.0) == 0.0

    def test_known_points(self):
        npt.assert_allclose(dsp.mel_scale(700.0), 2595.0 * np.log10(2.0), rtol=1e-12)
        npt.assert_allclose(dsp.mel_scale(700.0), 781.17, atol=0.01)
        npt.assert_allclose(dsp.mel_scale(500.0), 607.45, atol=0.01)

    def test_strictly_increasing(self):
        f = np.linspace(0.0, 500.0, 2000)
        assert np.all(np.diff(dsp.mel_scale(f)) > 0.0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            dsp.mel_scale(-1.0)
        with pytest.raises(ValueError):
            dsp.mel_scale_inverse(-1.0)

    def test_inverse_round_trip(self):
        f = np.linspace(0.0, 500.0, 501)
        back = dsp.mel_scale_inverse(dsp.mel_scale(f))
        npt.assert_allclose(back, f, rtol=1e-9, atol=1e-9)
        npt.assert_allclose(dsp.mel_scale_inverse(781.17), 700.0, atol=0.01)
        npt.assert_allclose(dsp.mel_scale_inverse(607.45), 500.0, atol=0.01)


class TestHannWindow:
    def test_quarter_period_values(self):
        npt.assert_allclose(dsp.hann_window(4), [0.0, 0.5, 1.0, 0.5], atol=1e-15)

    def test_n2(self):
        npt.assert_allclose(dsp.hann_window(2), [0.0, 1.0], atol=1e-15)

    def test_n8_sample(self):
        w = dsp.hann_window(8)
        npt.assert_allclose(w[1], 0.5 * (1 - np.cos(np.pi / 4)), rtol=1e-12)
        npt.assert_allclose(w[1], 0.14645, atol=1e-5)

    def test_periodic_not_symmetric(self):
        w = dsp.hann_window(16)
        assert w[0] == 0.0
        assert w.max() <= 1.0
        # periodic window: w[k] == w[n-k], so the last sample is nonzero
        assert w[-1] > 0.0
        npt.assert_allclose(w[1:], w[:0:-1], atol=1e-15)

    def test_too_short(self):
        with pytest.raises(ValueError):
            dsp.hann_window(1)


class TestStftPower:
    def test_shape(self):
        cfg = dsp.SpectrogramConfig()
        power = dsp.stft_power(np.zeros(512), cfg)
        assert power.shape == (17, 129)

    def test_zero_window(self):
        power = dsp.stft_power(np.zeros(512))
        assert np.all(power == 0.0)

    def test_bin_centered_sinusoid_leaks_only_adjacent(self):
        cfg = dsp.SpectrogramConfig()
        k = 32  # bin center: 32 * 1000/256 = 125 Hz
        t = np.arange(512)
        window = np.sin(2 * np.pi * k * t / 256)
        power = dsp.stft_power(window, cfg)
        for frame in power:
            peak = frame[k]
            far = np.concatenate([frame[: k - 1], frame[k + 2 :]])
            assert np.all(far <= 1e-20 * peak)

    def test_parseval_per_frame(self):
        rng = np.random.default_rng(123)
        cfg = dsp.SpectrogramConfig()
        taper = dsp.hann_window(cfg.frame_len)
        window = rng.standard_normal(512)
        power = dsp.stft_power(window, cfg)
        for f in range(power.shape[0]):
            frame = window[f * cfg.hop_len : f * cfg.hop_len + cfg.frame_len] * taper
            time_energy = np.sum(frame**2)
            # reassemble the full-spectrum sum from the one-sided bins
            spec_energy = (
                power[f, 0] + power[f, -1] + 2.0 * np.sum(power[f, 1:-1])
            ) / cfg.frame_len
            npt.assert_allclose(spec_energy, time_energy, rtol=1e-9)

    def test_matches_naive_dft_oracle(self):
        rng = np.random.default_rng(42)
        cfg = dsp.SpectrogramConfig()
        taper = dsp.hann_window(cfg.frame_len)
        for _ in range(20):
            window = rng.standard_normal(512) * rng.uniform(0.1, 5.0)
            power = dsp.stft_power(window, cfg)
            for f in range(0, 17, 4):
                frame = window[f * cfg.hop_len : f * cfg.hop_len + cfg.frame_len]
                oracle = naive_dft_power(frame * taper)
                npt.assert_allclose(power[f], oracle, rtol=1e-9, atol=1e-18)

    def test_window_too_short(self):
        with pytest.raises(ValueError):
            dsp.stft_power(np.zeros(100), dsp.SpectrogramConfig())


class TestMelFilterbank:
    def test_rows_are_unimodal_triangles(self):
        fb = dsp.mel_filterbank(dsp.SpectrogramConfig())
        assert np.all(fb.weights >= 0.0)
        for row in fb.weights:
            support = np.flatnonzero(row)
            assert support.size > 0
            peak = np.argmax(row)
            assert np.all(np.diff(row[support[0] : peak + 1]) >= -1e-12)
            assert np.all(np.diff(row[peak : support[-1] + 1]) <= 1e-12)

    def test_partition_of_unity_between_first_and_last_peaks(self):
        fb = dsp.mel_filterbank(dsp.SpectrogramConfig())
        colsum = fb.weights.sum(axis=0)
        inner = (fb.bin_freqs_hz > fb.center_freqs_hz[0]) & (
            fb.bin_freqs_hz < fb.center_freqs_hz[-1]
        )
        npt.assert_allclose(colsum[inner], 1.0, atol=1e-9)

    def test_centers_increasing(self):
        fb = dsp.mel_filterbank(dsp.SpectrogramConfig())
        assert np.all(np.diff(fb.center_freqs_hz) > 0.0)


class TestMelSpectrogram:
    def test_canonical_shape(self):
        ms = dsp.mel_spectrogram(np.zeros(512))
        assert ms.values.shape == (17, 45)
        assert ms.kept_channel_centers_hz.shape == (45,)

    def test_zero_window_hits_log_floor(self):
        ms = dsp.mel_spectrogram(np.zeros(512))
        npt.assert_allclose(ms.values, np.log(1e-10), atol=1e-12)
        npt.assert_allclose(ms.values[0, 0], -23.026, atol=1e-3)

    def test_kept_band_calibration(self):
        # the first kept channel should sit near 40 Hz and the last near
        # 400 Hz, within 20 %
        ms = dsp.mel_spectrogram(np.zeros(512))
        assert 0.8 * 40.0 <= ms.kept_channel_centers_hz[0] <= 1.2 * 40.0
        assert 0.8 * 400.0 <= ms.kept_channel_centers_hz[-1] <= 1.2 * 400.0

    def test_sweep_argmax_is_monotone(self):
        t = np.arange(512) / 1000.0
        f0, f1 = 100.0, 300.0
        phase = 2 * np.pi * (f0 * t + 0.5 * (f1 - f0) / t[-1] * t**2)
        ms = dsp.mel_spectrogram(np.sin(phase))
        argmax = np.argmax(ms.values, axis=1)
        assert np.all(np.diff(argmax) >= 0)
        assert argmax[-1] > argmax[0]

    def test_constant_offset_invariance(self):
        rng = np.random.default_rng(5)
        t = np.arange(512) / 1000.0
        base = 2.0 + 0.6 * np.sin(2 * np.pi * 200.0 * t) + 0.05 * rng.standard_normal(512)
        ms0 = dsp.mel_spectrogram(base).values
        for c in (-5.0, -1.0, 1.0, 5.0):
            ms_c = dsp.mel_spectrogram(base + c).values
            assert np.max(np.abs(ms_c - ms0)) < 0.05

    def test_alternate_hop_accepted(self):
        cfg = dsp.SpectrogramConfig(hop_len=32)
        ms = dsp.mel_spectrogram(np.zeros(512), cfg)
        assert ms.values.shape == (9, 45)

    def test_trim_arithmetic_guard(self):
        with pytest.raises(ValueError):
            dsp.SpectrogramConfig(trim_low=40, trim_high=30)


class TestMfcc:
    def test_constant_rows_become_dc_coefficient(self):
        log_mel = np.full((17, 64), 3.7)
        out = dsp.mfcc(log_mel, 45)
        npt.assert_allclose(out[:, 0], 3.7 * np.sqrt(64.0), rtol=1e-12)
        npt.assert_allclose(out[:, 1:], 0.0, atol=1e-12)

    def test_impulse_matches_cosine_sum_oracle(self):
        n = 64
        log_mel = np.zeros((1, n))
        log_mel[0, 11] = 1.0
        out = dsp.mfcc(log_mel, n)
        # orthonormal DCT-II by direct summation
        oracle = np.empty(n)
        for k in range(n):
            scale = np.sqrt(1.0 / n) if k == 0 else np.sqrt(2.0 / n)
            oracle[k] = scale * sum(
                log_mel[0, t] * np.cos(np.pi * k * (2 * t + 1) / (2 * n))
                for t in range(n)
            )
        npt.assert_allclose(out[0], oracle, atol=1e-9)

    def test_linearity(self):
        rng = np.random.default_rng(9)
        a = rng.standard_normal((17, 64))
        b = rng.standard_normal((17, 64))
        npt.assert_allclose(
            dsp.mfcc(a + b, 45), dsp.mfcc(a, 45) + dsp.mfcc(b, 45), atol=1e-9
        )

    def test_coefficient_count_validated(self):
        with pytest.raises(ValueError):
            dsp.mfcc(np.zeros((17, 64)), 65)
        with pytest.raises(ValueError):
            dsp.mfcc(np.zeros((17, 64)), 0)


class TestLowPass:
    def test_constant_passthrough(self):
        y = dsp.lpf_first_order(np.full(200, 3.3), 5.0, 0.001)
        npt.assert_allclose(y, 3.3, rtol=1e-12)

    def test_delayed_step_response(self):
        u = np.zeros(200)
        u[1:] = 1.0
        y = dsp.lpf_first_order(u, 5.0, 0.001)
        a = np.exp(-0.01 * np.pi)
        npt.assert_allclose(a, 0.96907, atol=1e-5)
        npt.assert_allclose(y[1], 1.0 - a, rtol=1e-12)
        # 63.2 % of the final value after one time constant (~31.8 ms)
        tau_steps = int(round(1.0 / (2 * np.pi * 5.0) / 0.001))
        assert abs(y[tau_steps + 1] - 0.632) < 0.02

    def test_infinite_cutoff_is_identity(self):
        u = np.random.default_rng(3).standard_normal(100)
        npt.assert_allclose(dsp.lpf_first_order(u, 1e9, 0.001), u, atol=1e-12)

    def test_linear_time_invariant(self):
        rng = np.random.default_rng(17)
        u1 = rng.standard_normal(300)
        u2 = rng.standard_normal(300)
        a, b = 1.7, -0.4
        lhs = dsp.lpf_first_order(a * u1 + b * u2, 5.0, 0.001)
        rhs = a * dsp.lpf_first_order(u1, 5.0, 0.001) + b * dsp.lpf_first_order(
            u2, 5.0, 0.001
        )
        # superposition holds only for matching initial conditions; force
        # y[-1]=0 by prepending a zero sample
        z1 = dsp.lpf_first_order(np.concatenate([[0.0], a * u1 + b * u2]), 5.0, 0.001)
        z2 = a * dsp.lpf_first_order(
            np.concatenate([[0.0], u1]), 5.0, 0.001
        ) + b * dsp.lpf_first_order(np.concatenate([[0.0], u2]), 5.0, 0.001)
        npt.assert_allclose(z1, z2, atol=1e-12)
        assert lhs.shape == rhs.shape

    def test_empty_signal(self):
        assert dsp.lpf_first_order(np.empty(0), 5.0, 0.001).size == 0

    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            dsp.lpf_first_order(np.ones(5), 0.0, 0.001)
        with pytest.raises(ValueError):
            dsp.lpf_first_order(np.ones(5), 5.0, -1.0)


class TestForceWindow:
    def test_length_enforced(self):
        with pytest.raises(ValueError):
            dsp.ForceWindow(np.zeros(511))

    def test_finite_enforced(self):
        bad = np.zeros(512)
        bad[5] = np.nan
        with pytest.raises(ValueError):
            dsp.ForceWindow(bad)

    def test_accepts_force_window_in_ops(self):
        w = dsp.ForceWindow(np.zeros(512), t_end=1.25)
        assert dsp.stft_power(w).shape == (17, 129)
        assert dsp.mel_spectrogram(w).values.shape == (17, 45)
