"""Channel synthesis: SNR anchor model, subcarrier structure, noise, mixing."""

import numpy as np
import pytest

from shiftscatter.channel import (
    ChannelError,
    ChannelParams,
    ClippingError,
    IqBuffer,
    distance_for_snr,
    mix_buffers,
    phase_accumulate,
    snr_at_distance,
    subcarrier_amplitude,
    synthesize,
)
from shiftscatter.dsp import measure_snr
from shiftscatter.tags import FrequencyTrack

RATE = 1e6


def const_track(f, n, active=True):
    return FrequencyTrack(RATE, f, np.full(n, float(f)),
                          np.full(n, bool(active)))


def params_for(dists, dur=0.5, **kw):
    return ChannelParams(sample_rate=RATE, duration=dur, tag_distances=dists, **kw)


class TestSnrModel:
    def test_exact_at_anchors(self):
        p = params_for({})
        assert snr_at_distance(p, 3.0) == pytest.approx(45.0)
        assert snr_at_distance(p, 9.0) == pytest.approx(38.0)
        assert snr_at_distance(p, 49.0) == pytest.approx(15.0)

    def test_monotone_decreasing_dense_grid(self):
        p = params_for({})
        grid = np.linspace(3.0, 49.0, 1000)
        snrs = np.array([snr_at_distance(p, d) for d in grid])
        assert np.all(np.diff(snrs) < 0)

    def test_extrapolation_refused(self):
        p = params_for({})
        with pytest.raises(ChannelError):
            snr_at_distance(p, 2.0)
        with pytest.raises(ChannelError):
            snr_at_distance(p, 60.0)

    def test_inverse(self):
        p = params_for({})
        for snr in (45.0, 38.0, 30.0, 15.0):
            d = distance_for_snr(p, snr)
            assert snr_at_distance(p, d) == pytest.approx(snr, abs=1e-9)

    def test_anchor_monotonicity_enforced(self):
        with pytest.raises(ChannelError):
            ChannelParams(sample_rate=RATE, duration=1.0,
                          snr_anchors=((3.0, 45.0), (9.0, 46.0)))


class TestSynthesize:
    def test_no_tags_noise_off_is_pure_leak(self):
        p = params_for({}, dur=0.01)
        buf = synthesize({}, p, noise=False)
        assert np.all(buf.samples == p.carrier_leak_amplitude)

    def test_single_tag_spectrum_lines(self):
        n = int(RATE * 0.5)
        p = params_for({"t": 3.0}, dur=0.5)
        buf = synthesize({"t": const_track(350e3, n)}, p, noise=False)
        spec = np.fft.fftshift(np.abs(np.fft.fft(buf.samples))) / n
        freqs = np.fft.fftshift(np.fft.fftfreq(n, 1 / RATE))
        strong = set(np.round(freqs[spec > spec.max() * 1e-4] / 1e3))
        assert strong == {-350.0, 0.0, 350.0}

    def test_closed_loop_snr_at_anchor(self):
        n = int(RATE * 0.5)
        p = params_for({"t": 3.0}, dur=0.5)
        buf = synthesize({"t": const_track(350e3, n)}, p, seed=3)
        snr = measure_snr(buf, (340e3, 360e3), (420e3, 480e3))
        assert snr == pytest.approx(45.0, abs=1.0)

    def test_energy_bookkeeping(self):
        n = int(RATE * 0.5)
        p = params_for({"t": 9.0}, dur=0.5)
        buf = synthesize({"t": const_track(300e3, n)}, p, noise=False)
        a = subcarrier_amplitude(p, "t")
        spec = np.abs(np.fft.fft(buf.samples)) / n
        freqs = np.fft.fftfreq(n, 1 / RATE)
        band = np.abs(np.abs(freqs) - 300e3) < 20e3   # both sidebands
        p_band = float(np.sum(spec[band] ** 2))
        assert 10 * np.log10(p_band / (a * a / 2)) == pytest.approx(0.0, abs=0.5)

    def test_inactive_samples_emit_nothing(self):
        n = int(RATE * 0.01)
        mask = np.zeros(n, bool)
        mask[: n // 2] = True
        track = FrequencyTrack(RATE, 300e3, np.full(n, 300e3), mask)
        p = params_for({"t": 3.0}, dur=0.01)
        buf = synthesize({"t": track}, p, noise=False)
        tail = buf.samples[n // 2:]
        assert np.all(tail == p.carrier_leak_amplitude)

    def test_seed_reproducible(self):
        n = int(RATE * 0.05)
        p = params_for({"t": 3.0}, dur=0.05)
        tracks = {"t": const_track(350e3, n)}
        a = synthesize(tracks, p, seed=42)
        b = synthesize(tracks, p, seed=42)
        c = synthesize(tracks, p, seed=43)
        assert np.array_equal(a.samples, b.samples)
        assert not np.array_equal(a.samples, c.samples)

    def test_linearity_matches_mix(self):
        n = int(RATE * 0.05)
        p = params_for({"a": 3.0, "b": 9.0}, dur=0.05, carrier_leak_amplitude=0.0)
        t1, t2 = const_track(300e3, n), const_track(400e3, n)
        union = synthesize({"a": t1, "b": t2}, p, noise=False)
        mixed = mix_buffers([synthesize({"a": t1}, p, noise=False),
                             synthesize({"b": t2}, p, noise=False)])
        assert np.array_equal(union.samples, mixed.samples)

    def test_clipping_error_names_tags(self):
        n = int(RATE * 0.01)
        p = params_for({f"t{i}": 3.0 for i in range(40)}, dur=0.01,
                       noise_floor_density=-110.0)
        tracks = {f"t{i}": const_track(200e3 + i * 7e3, n) for i in range(40)}
        with pytest.raises(ClippingError, match="t0"):
            synthesize(tracks, p, noise=False)

    def test_track_beyond_nyquist_rejected(self):
        n = int(RATE * 0.01)
        p = params_for({"t": 3.0}, dur=0.01)
        with pytest.raises(ChannelError):
            synthesize({"t": const_track(600e3, n)}, p, noise=False)

    def test_missing_distance_rejected(self):
        n = int(RATE * 0.01)
        p = params_for({}, dur=0.01)
        with pytest.raises(ChannelError):
            synthesize({"t": const_track(300e3, n)}, p, noise=False)

    def test_audio_bandwidth_needs_2mhz(self):
        with pytest.raises(ChannelError):
            ChannelParams(sample_rate=1e6, duration=1.0,
                          tag_bandwidths={"mic": 120e3})


class TestPhaseAccumulate:
    def test_constant_frequency(self):
        n = 1000
        tr = const_track(250e3, n)
        phi = phase_accumulate(tr)
        assert phi[0] == 0.0
        assert phi[-1] == pytest.approx(2 * np.pi * 250e3 * (n - 1) / RATE, rel=1e-12)

    def test_zero_frequency(self):
        tr = FrequencyTrack(RATE, 0.0, np.zeros(100), np.ones(100, bool))
        assert np.all(phase_accumulate(tr) == 0.0)

    def test_triangle_matches_analytic_integral(self):
        n = 2000
        f = 300e3 + 1e3 * np.abs(np.linspace(-1, 1, n))
        tr = FrequencyTrack(RATE, 300e3, f, np.ones(n, bool))
        phi = phase_accumulate(tr)
        analytic = 2 * np.pi / RATE * (np.cumsum(f) - f[0])
        assert np.abs(phi - analytic).max() < 1e-6

    def test_phase_continuous_across_frequency_step(self):
        f = np.concatenate([np.full(500, 200e3), np.full(500, 260e3)])
        tr = FrequencyTrack(RATE, 200e3, f, np.ones(1000, bool))
        phi = phase_accumulate(tr)
        steps = np.diff(phi)
        assert steps.max() <= 2 * np.pi * 260e3 / RATE + 1e-9


class TestMixBuffers:
    def test_additive_identity(self):
        b = IqBuffer(RATE, np.full(64, 0.1 + 0.05j))
        z = IqBuffer(RATE, np.zeros(64, complex))
        assert np.array_equal(mix_buffers([b, z]).samples, b.samples)

    def test_cancellation(self):
        b = IqBuffer(RATE, np.full(64, 0.1 + 0.05j))
        neg = IqBuffer(RATE, -b.samples)
        assert np.all(mix_buffers([b, neg]).samples == 0)

    def test_mismatched_rates_rejected(self):
        with pytest.raises(ChannelError):
            mix_buffers([IqBuffer(1e6, np.zeros(8, complex)),
                         IqBuffer(2e6, np.zeros(8, complex))])

    def test_mix_clipping_detected(self):
        b = IqBuffer(RATE, np.full(16, 0.7 + 0j))
        with pytest.raises(ClippingError):
            mix_buffers([b, b])

    def test_eight_audio_humps(self):
        # eight FM subcarriers at 120 kHz spacing: eight disjoint spectral lobes
        rate, dur = 2e6, 0.1
        n = int(rate * dur)
        centers = [100e3 + 120e3 * k for k in range(8)]
        p = ChannelParams(sample_rate=rate, duration=dur,
                          carrier_leak_amplitude=0.0,
                          tag_distances={f"a{k}": 3.0 for k in range(8)},
                          tag_bandwidths={f"a{k}": 120e3 for k in range(8)})
        t = np.arange(n) / rate
        tracks = {}
        for k, c in enumerate(centers):
            f = c + 50e3 * np.sin(2 * np.pi * (300 + 100 * k) * t)
            tracks[f"a{k}"] = FrequencyTrack(rate, c, f, np.ones(n, bool))
        buf = synthesize(tracks, p, noise=False)
        spec = np.fft.fftshift(np.abs(np.fft.fft(buf.samples))) / n
        freqs = np.fft.fftshift(np.fft.fftfreq(n, 1 / rate))
        # each hump carries energy and the gaps between humps are quiet
        for c in centers:
            inband = np.abs(freqs - c) < 55e3
            assert spec[inband].max() > 0.2 * spec.max()
        for c1, c2 in zip(centers, centers[1:]):
            near = np.abs(freqs - (c1 + c2) / 2) < 2e3
            assert spec[near].max() < 0.02 * spec.max()
