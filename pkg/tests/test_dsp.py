"""Receiver DSP: filters, translation, decimation, spectrogram, FM, resampling."""

import numpy as np
import pytest

from shiftscatter.channel import IqBuffer, phase_accumulate
from shiftscatter.dsp import (
    DspError,
    FirFilter,
    apply_fir,
    decimate,
    design_bandpass,
    design_lowpass,
    frequency_translate,
    measure_snr,
    resample,
    spectrogram,
    wbfm_demod,
)
from shiftscatter.tags import FrequencyTrack


def tone(freq, rate, n, amp=1.0):
    return IqBuffer(rate, amp * np.exp(2j * np.pi * freq / rate * np.arange(n)))


class TestLowpassDesign:
    def test_taps_symmetric_unit_dc(self):
        f = design_lowpass(30e3, 1e6, 3e3)
        assert np.allclose(f.taps, f.taps[::-1])
        assert f.dc_gain == pytest.approx(1.0, abs=0.01)

    def test_white_noise_power_ratio(self):
        rate, cutoff = 1e6, 100e3
        f = design_lowpass(cutoff, rate, 10e3)
        rng = np.random.default_rng(5)
        x = (rng.standard_normal(200_000) + 1j * rng.standard_normal(200_000))
        y = apply_fir(f, x)
        ratio = np.mean(np.abs(y) ** 2) / np.mean(np.abs(x) ** 2)
        assert ratio == pytest.approx(2 * cutoff / rate, rel=0.10)

    def test_passband_tone_preserved(self):
        f = design_lowpass(30e3, 1e6, 3e3)
        assert abs(f.response_at(15e3)) < 0.5

    def test_stopband_tone_killed(self):
        f = design_lowpass(30e3, 1e6, 3e3)
        assert f.response_at(30e3 + 2 * 3e3) < -50.0

    def test_cutoff_out_of_range(self):
        with pytest.raises(DspError):
            design_lowpass(600e3, 1e6, 10e3)

    def test_linearity_and_shift_invariance(self):
        f = design_lowpass(50e3, 1e6, 10e3)
        rng = np.random.default_rng(6)
        x = rng.standard_normal(4096) + 1j * rng.standard_normal(4096)
        y = rng.standard_normal(4096) + 1j * rng.standard_normal(4096)
        lhs = apply_fir(f, 2.0 * x + 0.5 * y)
        rhs = 2.0 * apply_fir(f, x) + 0.5 * apply_fir(f, y)
        assert np.allclose(lhs, rhs, atol=1e-10)
        shift = 17
        ys = apply_fir(f, np.roll(x, shift))
        assert np.allclose(ys[shift + 200: -200],
                           apply_fir(f, x)[200: -200 - shift], atol=1e-8)


class TestTranslate:
    def test_tone_to_dc(self):
        rate, n = 2e6, 65536
        buf = frequency_translate(tone(600e3, rate, n), 600e3)
        spec = np.abs(np.fft.fft(buf.samples))
        assert np.argmax(spec) == 0

    def test_zero_offset_identity(self):
        buf = tone(100e3, 1e6, 1024)
        assert frequency_translate(buf, 0.0) is buf

    def test_inverse_pair(self):
        buf = tone(123e3, 1e6, 8192, amp=0.5)
        back = frequency_translate(frequency_translate(buf, 77e3), -77e3)
        assert np.abs(back.samples - buf.samples).max() < 1e-12

    def test_unitary(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(16384) + 1j * rng.standard_normal(16384)
        buf = IqBuffer(1e6, x * 0.01)
        shifted = frequency_translate(buf, 313e3)
        p0 = np.sum(np.abs(buf.samples) ** 2)
        p1 = np.sum(np.abs(shifted.samples) ** 2)
        assert abs(p1 - p0) / p0 < 1e-9

    def test_offset_beyond_nyquist(self):
        with pytest.raises(DspError):
            frequency_translate(tone(0, 1e6, 64), 600e3)


class TestDecimate:
    def test_factor_one_unity_filter_identity(self):
        buf = tone(20e3, 1e6, 4096, amp=0.3)
        unity = FirFilter(np.array([1.0]), design_cutoff=500e3, design_rate=1e6)
        out = decimate(buf, 1, unity)
        assert np.allclose(out.samples, buf.samples, atol=1e-12)

    def test_inband_tone_preserved(self):
        rate, n = 1e6, 200_000
        buf = tone(20e3, rate, n, amp=0.5)
        f = design_lowpass(45e3, rate, 10e3)
        out = decimate(buf, 10, f)
        assert out.sample_rate == pytest.approx(100e3)
        power_in = np.mean(np.abs(buf.samples[1000:-1000]) ** 2)
        power_out = np.mean(np.abs(out.samples[100:-100]) ** 2)
        assert 10 * np.log10(power_out / power_in) == pytest.approx(0.0, abs=0.5)

    def test_out_of_band_tone_suppressed(self):
        rate, n = 1e6, 200_000
        buf = tone(300e3, rate, n, amp=0.5)
        f = design_lowpass(45e3, rate, 10e3)
        out = decimate(buf, 10, f)
        power_in = np.mean(np.abs(buf.samples) ** 2)
        power_out = np.mean(np.abs(out.samples[200:-200]) ** 2)
        assert 10 * np.log10(power_out / power_in) < -50.0

    def test_alias_risk_rejected(self):
        buf = tone(20e3, 1e6, 4096)
        f = design_lowpass(100e3, 1e6, 10e3)
        with pytest.raises(DspError):
            decimate(buf, 10, f)


class TestSpectrogram:
    def test_constant_tone_owns_nearest_bin(self):
        rate, n = 1e6, 1 << 18
        buf = tone(345e3, rate, n, amp=0.4)
        spec = spectrogram(buf, nfft=4096, hop=1024)
        freqs = spec.freqs()
        want = int(np.argmin(np.abs(freqs - 345e3)))
        got = np.argmax(spec.magnitudes, axis=1)
        assert np.all(got == want)

    def test_zero_input_floor_clamped(self):
        buf = IqBuffer(1e6, np.zeros(8192, complex))
        spec = spectrogram(buf, nfft=4096, hop=4096)
        assert np.all(spec.magnitudes <= -190.0)
        assert np.isfinite(spec.magnitudes).all()

    def test_two_ridges(self):
        rate, n = 1e6, 1 << 17
        x = (0.2 * np.exp(2j * np.pi * 289e3 / rate * np.arange(n))
             + 0.2 * np.exp(2j * np.pi * 349e3 / rate * np.arange(n)))
        spec = spectrogram(IqBuffer(rate, x), nfft=4096, hop=2048)
        freqs = spec.freqs()
        for target in (289e3, 349e3):
            sl = spec.band_slice((target - 5e3, target + 5e3))
            ridge = spec.magnitudes[:, sl].max(axis=1)
            rest = np.median(spec.magnitudes, axis=1)
            assert np.all(ridge > rest + 40.0)

    def test_frame_geometry(self):
        buf = tone(100e3, 1e6, 40960)
        spec = spectrogram(buf, nfft=4096, hop=1024)
        assert spec.n_frames == 1 + (40960 - 4096) // 1024
        assert spec.bin_width == pytest.approx(1e6 / 4096)
        assert spec.frame_rate == pytest.approx(1e6 / 1024)

    def test_short_buffer_rejected(self):
        with pytest.raises(DspError):
            spectrogram(tone(0, 1e6, 100), nfft=4096)

    def test_nfft_power_of_two_required(self):
        with pytest.raises(DspError):
            spectrogram(tone(0, 1e6, 8192), nfft=3000)


class TestWbfm:
    def _fm_buffer(self, rate, dur, deviation, tone_hz, amp=1.0):
        n = int(rate * dur)
        t = np.arange(n) / rate
        track = FrequencyTrack(rate, 0.0, deviation * amp * np.sin(2 * np.pi * tone_hz * t),
                               np.ones(n, bool))
        return IqBuffer(rate, 0.5 * np.exp(1j * phase_accumulate(track)))

    def test_round_trip_unit_amplitude(self):
        rate = 2e6
        buf = self._fm_buffer(rate, 0.02, 60e3, 1000.0)
        y = wbfm_demod(buf, 60e3)[1:]
        assert (y.max() - y.min()) / 2 == pytest.approx(1.0, rel=0.02)

    def test_round_trip_correlation(self):
        rate = 2e6
        buf = self._fm_buffer(rate, 0.02, 60e3, 1000.0)
        y = wbfm_demod(buf, 60e3)[1:]
        n = len(y)
        t = (np.arange(1, n + 1) - 0.5) / rate   # discriminator half-sample offset
        ideal = np.sin(2 * np.pi * 1000.0 * t)
        corr = np.dot(y, ideal) / np.sqrt(np.dot(y, y) * np.dot(ideal, ideal))
        assert corr >= 0.99

    def test_unmodulated_carrier_zero(self):
        buf = tone(0.0, 1e6, 4096, amp=0.5)
        y = wbfm_demod(buf, 60e3)
        assert np.abs(y).max() < 1e-9

    def test_deviation_normalization(self):
        rate = 2e6
        buf = self._fm_buffer(rate, 0.01, 60e3, 1000.0)
        y1 = wbfm_demod(buf, 60e3)[1:]
        y2 = wbfm_demod(buf, 120e3)[1:]
        assert np.allclose(y2, y1 / 2)


class TestResample:
    def test_identity(self):
        x = np.sin(np.linspace(0, 20, 4800))
        y = resample(x, 48000, 48000)
        assert np.abs(y - x).max() < 1e-9

    def test_tone_through_200k_to_48k(self):
        rate_in, rate_out = 200_000, 48_000
        n = 40_000
        x = np.sin(2 * np.pi * 1000 * np.arange(n) / rate_in)
        y = resample(x, rate_in, rate_out)
        assert len(y) == pytest.approx(n * rate_out / rate_in, abs=2)
        p_in = np.mean(x ** 2)
        p_out = np.mean(y[500:-500] ** 2)
        assert 10 * np.log10(p_out / p_in) == pytest.approx(0.0, abs=0.5)

    def test_round_trip_48_96_48(self):
        n = 9600
        x = np.sin(2 * np.pi * 997 * np.arange(n) / 48000)
        back = resample(resample(x, 48000, 96000), 96000, 48000)
        p_err = np.mean((back[200:-200] - x[200:-200]) ** 2)
        assert 10 * np.log10(np.mean(x ** 2) / p_err) > 40.0
        assert 10 * np.log10(np.mean(back[200:-200] ** 2) / np.mean(x ** 2)) == pytest.approx(
            0.0, abs=0.1)

    def test_huge_ratio_rejected(self):
        with pytest.raises(DspError):
            resample(np.zeros(100), 48000, 48001)


class TestMeasureSnr:
    def test_constructed_20db(self):
        rate, n = 1e6, 1 << 19
        rng = np.random.default_rng(9)
        noise_density = 1e-10
        sigma = np.sqrt(noise_density * rate)
        bw = 20e3
        amp = np.sqrt(noise_density * bw * 10 ** (20 / 10))  # complex tone power amp^2
        x = (amp * np.exp(2j * np.pi * 250e3 / rate * np.arange(n))
             + sigma / np.sqrt(2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n)))
        snr = measure_snr(IqBuffer(rate, x * 0.5), (240e3, 260e3), (350e3, 450e3))
        assert snr == pytest.approx(20.0, abs=0.5)

    def test_noise_only_zero_db(self):
        rng = np.random.default_rng(10)
        x = 0.01 * (rng.standard_normal(1 << 18) + 1j * rng.standard_normal(1 << 18))
        snr = measure_snr(IqBuffer(1e6, x), (100e3, 150e3), (200e3, 250e3))
        assert snr == pytest.approx(0.0, abs=0.5)

    def test_overlapping_bands_rejected(self):
        buf = tone(100e3, 1e6, 8192)
        with pytest.raises(DspError):
            measure_snr(buf, (90e3, 120e3), (110e3, 150e3))


class TestBandpass:
    def test_audio_band_shape(self):
        f = design_bandpass(60.0, 4000.0, 48000)
        assert f.response_at(1000.0) == pytest.approx(0.0, abs=0.5)
        assert f.response_at(0.0) < -40.0
        assert f.response_at(8000.0) < -50.0
