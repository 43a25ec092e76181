"""Decoders: peak tracking, swipe regression, ID dwells, touch, audio, planning."""

import numpy as np
import pytest

from shiftscatter.channel import ChannelParams, IqBuffer, synthesize
from shiftscatter.circuit import OscillatorDesign, Topology, VaractorModel
from shiftscatter.decoders import (
    AUDIO_BANDWIDTH,
    BandSpecError,
    CapacityError,
    ChannelPlan,
    DecodeError,
    InsufficientData,
    PeakSeries,
    TagBandSpec,
    classify_id,
    classify_id_dwells,
    decode_audio,
    detect_touch,
    peak_track,
    plan_channels,
    segment_activity,
    smooth_track,
    swipe_direction,
    validate_plan,
)
from shiftscatter.dsp import spectrogram
from shiftscatter.tags import (
    AudioVaractor,
    AudioWaveform,
    Button,
    ButtonPress,
    ButtonRelease,
    CapacitiveBarcode,
    InductiveButtons,
    InteractionScript,
    SwipeTooth,
    TagConfig,
    calibrate_sensor,
    frequency_track,
)

RATE = 1e6

DIGIT_BANDS = {3: (318e3, 325e3), 2: (330e3, 335e3), 1: (339e3, 341e3)}


def pad_design():
    return OscillatorDesign(Topology.MCO_GATE, l1=14.7e-3, l2=10e-3, c1=47e-12,
                            c2=31e-12, c_blocking=100e-9, c_shift=30e-12,
                            r_adjust=68e3)


@pytest.fixture(scope="module")
def menu_tag():
    tag = TagConfig("menu", pad_design(), CapacitiveBarcode((8e-12, 5e-12, 2e-12)),
                    startup_voltage=0.35, startup_current=1.3e-6,
                    channel_center=345e3)
    return calibrate_sensor(tag, [("idle", 345e3), (0, 321.5e3),
                                  (1, 332.5e3), (2, 340e3)])


@pytest.fixture(scope="module")
def dimmer_tag():
    tag = TagConfig("dim", pad_design(), CapacitiveBarcode((8e-12, 5e-12, 2e-12)),
                    startup_voltage=0.35, startup_current=1.3e-6,
                    channel_center=345e3)
    return calibrate_sensor(tag, [("idle", 345e3), (0, 326e3),
                                  (1, 334e3), (2, 340e3)])


def synth_spec(tag, script, dur, seed, distance=16.2, band=(300e3, 390e3),
               hop=1024):
    track = frequency_track(tag, script, dur, RATE)
    params = ChannelParams(RATE, dur, tag_distances={tag.tag_id: distance})
    buf = synthesize({tag.tag_id: track}, params, seed=seed, dtype=np.complex64)
    return spectrogram(buf, nfft=4096, hop=hop, band=band)


def series(freqs, frame_rate=244.0):
    return PeakSeries(frame_rate, 0.0, np.asarray(freqs, dtype=float))


class TestPeakTrack:
    def test_constant_ridge_within_one_bin(self, menu_tag):
        spec = synth_spec(menu_tag, InteractionScript(()), 0.3, seed=1)
        track = peak_track(spec, (335e3, 355e3))
        assert np.isfinite(track.freqs).all()
        assert np.abs(track.freqs - 345e3).max() <= spec.bin_width

    def test_noise_only_band_all_markers(self, menu_tag):
        spec = synth_spec(menu_tag, InteractionScript(()), 0.3, seed=2)
        track = peak_track(spec, (360e3, 380e3))   # nothing lives up there
        assert np.isnan(track.freqs).all()

    def test_right_swipe_visits_landmarks_in_order(self, dimmer_tag):
        script = InteractionScript((SwipeTooth(0, 0.2, 0.4),
                                    SwipeTooth(1, 0.4, 0.6),
                                    SwipeTooth(2, 0.6, 0.8)))
        spec = synth_spec(dimmer_tag, script, 1.0, seed=3)
        track = peak_track(spec, (315e3, 355e3))
        t = track.times()
        for t_mid, f_expect in ((0.3, 326e3), (0.5, 334e3), (0.7, 340e3)):
            sel = np.abs(t - t_mid) < 0.05
            vals = track.freqs[sel]
            vals = vals[np.isfinite(vals)]
            assert np.abs(np.median(vals) - f_expect) < 1e3

    def test_empty_band_rejected(self, menu_tag):
        spec = synth_spec(menu_tag, InteractionScript(()), 0.3, seed=4)
        with pytest.raises(DecodeError):
            peak_track(spec, (355e3, 355e3))


class TestSmoothTrack:
    def test_window_one_identity(self):
        tr = series([1.0, 2.0, np.nan, 4.0])
        out = smooth_track(tr, 1)
        assert out is tr

    def test_constant_unchanged(self):
        tr = series(np.full(50, 345e3))
        out = smooth_track(tr, 11)
        assert np.allclose(out.freqs, 345e3)

    def test_jitter_reduced_by_3x(self):
        rng = np.random.default_rng(7)
        base = np.full(600, 340e3)
        jit = base + 244.0 * rng.choice([-1.0, 0.0, 1.0], size=600)
        out = smooth_track(series(jit), 31)
        rms_in = np.sqrt(np.mean((jit - base) ** 2))
        rms_out = np.sqrt(np.mean((out.freqs[40:-40] - base[40:-40]) ** 2))
        assert rms_in / rms_out >= 3.0

    def test_markers_survive_and_neighbors_average(self):
        tr = series([300e3, np.nan, 300e3, 300e3])
        out = smooth_track(tr, 3)
        assert np.isnan(out.freqs[1])
        assert out.freqs[0] == pytest.approx(300e3)

    def test_even_window_rejected(self):
        with pytest.raises(DecodeError):
            smooth_track(series([1, 2, 3]), 4)


class TestSwipeDirection:
    def test_printed_right_sequence(self):
        seq = np.concatenate([np.full(30, 326e3), np.full(30, 334e3),
                              np.full(30, 340e3)])
        assert swipe_direction(series(seq)).direction == "right"

    def test_time_reversal_flips(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            n = rng.integers(10, 120)
            vals = 330e3 + np.cumsum(rng.normal(0, 800, size=n))
            fwd = swipe_direction(series(vals)).direction
            rev = swipe_direction(series(vals[::-1])).direction
            flip = {"left": "right", "right": "left", "no_swipe": "no_swipe"}
            assert rev == flip[fwd]

    def test_constant_track_no_swipe(self):
        assert swipe_direction(series(np.full(40, 333e3))).direction == "no_swipe"

    def test_insufficient_data(self):
        with pytest.raises(InsufficientData):
            swipe_direction(series([np.nan, np.nan, 333e3]))

    def test_slope_units_hz_per_second(self):
        # 10 kHz rise over 1 second at 100 fps
        vals = np.linspace(330e3, 340e3, 100)
        res = swipe_direction(PeakSeries(100.0, 0.0, vals))
        assert res.slope == pytest.approx(10e3, rel=0.05)
        assert res.direction == "right"
        assert res.confidence > 0.95


class TestSegmentActivity:
    def test_segments_found_and_bridged(self):
        idle = 345e3
        vals = np.full(200, idle)
        vals[50:80] = 326e3
        vals[83:110] = 334e3      # 3-frame dip back toward idle
        tr = series(vals)
        segs = segment_activity(tr, idle, bridge_frames=5, min_frames=5)
        assert segs == [(50, 110)]

    def test_no_bridge_splits(self):
        idle = 345e3
        vals = np.full(200, idle)
        vals[50:80] = 326e3
        vals[100:130] = 334e3
        segs = segment_activity(series(vals), idle, bridge_frames=5, min_frames=5)
        assert segs == [(50, 80), (100, 130)]


class TestClassifyId:
    def band_spec(self):
        return TagBandSpec("menu", 345e3, 20e3, landmarks={"idle": 345e3},
                           digit_bands=DIGIT_BANDS, mode="id")

    def test_dwells_classify_321(self):
        frames = []
        for f, n in ((345e3, 30), (322e3, 40), (345e3, 10), (332e3, 40),
                     (345e3, 10), (340e3, 40), (345e3, 30)):
            frames += [f] * n
        assert classify_id(series(frames), self.band_spec()) == [3, 2, 1]

    def test_empty_track(self):
        assert classify_id(series(np.full(100, 345e3)), self.band_spec()) == []

    def test_gap_band_dwell_skipped_with_confidence_hit(self):
        frames = ([345e3] * 30 + [322e3] * 40 + [345e3] * 10 + [327e3] * 40
                  + [345e3] * 10 + [340e3] * 40 + [345e3] * 10)
        dwells, skipped = classify_id_dwells(series(frames), self.band_spec())
        assert [d.digit for d in dwells] == [3, 1]
        assert skipped == 1

    def test_separator_required_between_dwells(self):
        # two different digit dwells back to back with no idle return: the
        # second one is not counted
        frames = [345e3] * 30 + [322e3] * 40 + [332e3] * 40 + [345e3] * 30
        dwells, skipped = classify_id_dwells(series(frames), self.band_spec())
        assert [d.digit for d in dwells] == [3]

    def test_closed_loop_sequence(self, menu_tag):
        script = InteractionScript((SwipeTooth(0, 0.2, 0.45),
                                    SwipeTooth(1, 0.55, 0.80),
                                    SwipeTooth(2, 0.90, 1.15)))
        spec = synth_spec(menu_tag, script, 1.4, seed=21, distance=39.3)
        track = smooth_track(peak_track(spec, (315e3, 355e3)), 5)
        bs = self.band_spec()
        assert classify_id(track, bs) == [3, 2, 1]

    def test_concatenated_swipes_concatenate(self, menu_tag):
        script = InteractionScript((SwipeTooth(0, 0.2, 0.4), SwipeTooth(2, 0.5, 0.7),
                                    SwipeTooth(1, 1.0, 1.2), SwipeTooth(0, 1.3, 1.5)))
        spec = synth_spec(menu_tag, script, 1.8, seed=22, distance=39.3)
        track = smooth_track(peak_track(spec, (315e3, 355e3)), 5)
        assert classify_id(track, self.band_spec()) == [3, 1, 2, 3]

    def test_digits_always_from_spec_set(self):
        rng = np.random.default_rng(23)
        bs = self.band_spec()
        for _ in range(20):
            vals = rng.uniform(310e3, 350e3, size=300)
            digits = classify_id(series(vals), bs)
            assert set(digits) <= {1, 2, 3}


class TestDetectTouch:
    def controller(self, tag_id, center, up, down):
        design = OscillatorDesign(Topology.MCO_GATE, l1=14.7e-3, l2=10e-3,
                                  c1=47e-12, c2=47e-12, c_blocking=100e-9,
                                  c_shift=20e-12, r_adjust=68e3)
        tag = TagConfig(tag_id, design, InductiveButtons(5e-3, 5e-3),
                        startup_voltage=0.45, startup_current=2.1e-6,
                        channel_center=center)
        return calibrate_sensor(tag, [("idle", center), (Button.UP, up),
                                      (Button.DOWN, down)])

    def band(self, tag_id, center, up, down):
        return TagBandSpec(tag_id, center, max(up, down) - center + 6e3,
                           landmarks={"idle": center, "up": up, "down": down},
                           mode="touch")

    def test_press_release_up(self):
        tag = self.controller("p1", 289e3, 303e3, 314e3)
        script = InteractionScript((ButtonPress(Button.UP, 0.5),
                                    ButtonRelease(Button.UP, 1.1)))
        track = frequency_track(tag, script, 2.0, RATE)
        params = ChannelParams(RATE, 2.0, tag_distances={"p1": 16.2})
        buf = synthesize({"p1": track}, params, seed=31, dtype=np.complex64)
        spec = spectrogram(buf, nfft=4096, hop=4096, band=(270e3, 330e3))
        events = detect_touch(spec, self.band("p1", 289e3, 303e3, 314e3))
        assert [(e.kind, e.payload) for e in events] == [
            ("touch_press", "up"), ("touch_release", "up")]
        assert events[0].timestamp == pytest.approx(0.5, abs=0.1)
        assert events[1].timestamp == pytest.approx(1.1, abs=0.1)

    def test_idle_only_no_events(self):
        tag = self.controller("p1", 289e3, 303e3, 314e3)
        track = frequency_track(tag, InteractionScript(()), 2.0, RATE)
        params = ChannelParams(RATE, 2.0, tag_distances={"p1": 16.2})
        buf = synthesize({"p1": track}, params, seed=32, dtype=np.complex64)
        spec = spectrogram(buf, nfft=4096, hop=4096, band=(270e3, 330e3))
        assert detect_touch(spec, self.band("p1", 289e3, 303e3, 314e3)) == []

    def test_two_tags_simultaneous(self):
        t1 = self.controller("p1", 289e3, 303e3, 314e3)
        t2 = self.controller("p2", 349e3, 366e3, 379e3)
        s1 = InteractionScript((ButtonPress(Button.UP, 0.5),
                                ButtonRelease(Button.UP, 1.0)))
        s2 = InteractionScript((ButtonPress(Button.DOWN, 0.6),
                                ButtonRelease(Button.DOWN, 1.2)))
        tr1 = frequency_track(t1, s1, 2.0, RATE)
        tr2 = frequency_track(t2, s2, 2.0, RATE)
        params = ChannelParams(RATE, 2.0, tag_distances={"p1": 16.2, "p2": 16.2})
        buf = synthesize({"p1": tr1, "p2": tr2}, params, seed=33,
                         dtype=np.complex64)
        spec = spectrogram(buf, nfft=4096, hop=4096, band=(270e3, 400e3))
        e1 = detect_touch(spec, self.band("p1", 289e3, 303e3, 314e3))
        e2 = detect_touch(spec, self.band("p2", 349e3, 366e3, 379e3))
        assert [(e.kind, e.payload) for e in e1] == [("touch_press", "up"),
                                                     ("touch_release", "up")]
        assert [(e.kind, e.payload) for e in e2] == [("touch_press", "down"),
                                                     ("touch_release", "down")]

    def test_balanced_pairs_property(self):
        tag = self.controller("p1", 289e3, 303e3, 314e3)
        script = InteractionScript((
            ButtonPress(Button.UP, 0.3), ButtonRelease(Button.UP, 0.8),
            ButtonPress(Button.DOWN, 1.2), ButtonRelease(Button.DOWN, 1.6),
            ButtonPress(Button.UP, 2.0), ButtonRelease(Button.UP, 2.4)))
        track = frequency_track(tag, script, 3.0, RATE)
        params = ChannelParams(RATE, 3.0, tag_distances={"p1": 16.2})
        buf = synthesize({"p1": track}, params, seed=34, dtype=np.complex64)
        spec = spectrogram(buf, nfft=4096, hop=4096, band=(270e3, 330e3))
        events = detect_touch(spec, self.band("p1", 289e3, 303e3, 314e3))
        for label in ("up", "down"):
            kinds = [e.kind for e in events if e.payload == label]
            assert kinds.count("touch_press") == kinds.count("touch_release")
        stamps = [e.timestamp for e in events]
        assert stamps == sorted(stamps)

    def test_overlapping_windows_rejected(self):
        spec_obj = TagBandSpec("x", 300e3, 20e3,
                               landmarks={"idle": 300e3, "up": 304e3},
                               mode="touch")
        buf = IqBuffer(RATE, np.zeros(8192, np.complex64))
        sp = spectrogram(buf, nfft=4096, hop=4096)
        with pytest.raises(BandSpecError):
            detect_touch(sp, spec_obj)


class TestDecodeAudio:
    @pytest.fixture(scope="class")
    def speech_tag(self):
        design = OscillatorDesign(Topology.MCO_GATE, l1=4.7e-3, l2=10e-3,
                                  c1=1000e-12, c2=5e-12, c_blocking=100e-9,
                                  c_shift=510e-12, r_adjust=200e3)
        sensor = AudioVaractor(VaractorModel(47e-12, 0.7, 2.0),
                               mic_sensitivity=0.3, bias_voltage=2.0)
        tag = TagConfig("mic", design, sensor, startup_voltage=0.35,
                        startup_current=1.3e-6, channel_center=600e3)
        return calibrate_sensor(tag, [("idle", 600e3), (-1.0, 540e3),
                                      (1.0, 660e3)])

    @staticmethod
    def tone_snr(audio, rate, tone):
        n = len(audio)
        w = np.hanning(n)
        spec = np.abs(np.fft.rfft(audio * w)) ** 2
        freqs = np.fft.rfftfreq(n, 1 / rate)
        sig = np.abs(freqs - tone) < 30
        noise = (freqs > 60) & (freqs < 4000) & ~(np.abs(freqs - tone) < 60)
        return 10 * np.log10(spec[sig].sum()
                             / (spec[noise].sum() * sig.sum() / noise.sum()))

    def synth(self, tags_waves, dur=0.8, seed=41, rate=2e6):
        tracks = {}
        dists, bws = {}, {}
        for tag, wave in tags_waves:
            script = InteractionScript((wave,)) if wave is not None else InteractionScript(())
            tracks[tag.tag_id] = frequency_track(tag, script, dur, rate)
            dists[tag.tag_id] = 3.0
            bws[tag.tag_id] = AUDIO_BANDWIDTH
        params = ChannelParams(rate, dur, tag_distances=dists, tag_bandwidths=bws)
        return synthesize(tracks, params, seed=seed, dtype=np.complex64)

    def test_tone_through_chain(self, speech_tag):
        arate = 48e3
        tt = np.arange(int(0.7 * arate)) / arate
        wave = AudioWaveform(np.sin(2 * np.pi * 1000 * tt), arate, 0.05)
        buf = self.synth([(speech_tag, wave)])
        dec = decode_audio(buf, ("mic", 600e3, 120e3))
        core = dec.samples[int(0.15 * 48e3):int(0.65 * 48e3)]
        assert self.tone_snr(core, 48e3, 1000.0) >= 20.0
        assert dec.sample_rate == 48e3

    def test_silent_input_near_floor(self, speech_tag):
        buf = self.synth([(speech_tag, None)], dur=0.4, seed=42)
        dec = decode_audio(buf, ("mic", 600e3, 120e3))
        assert np.sqrt(np.mean(dec.samples ** 2)) < 0.02

    def test_two_tags_crosstalk(self, speech_tag):
        other = calibrate_sensor(
            speech_tag.with_values(tag_id="mic2", channel_center=480e3),
            [("idle", 480e3), (-1.0, 420e3), (1.0, 540e3)])
        arate = 48e3
        tt = np.arange(int(0.7 * arate)) / arate
        w1 = AudioWaveform(np.sin(2 * np.pi * 800 * tt), arate, 0.05)
        w2 = AudioWaveform(np.sin(2 * np.pi * 1300 * tt), arate, 0.05)
        buf = self.synth([(speech_tag, w1), (other, w2)], seed=43)
        a = decode_audio(buf, ("mic", 600e3, 120e3)).samples
        b = decode_audio(buf, ("mic2", 480e3, 120e3)).samples
        lo, hi = int(0.15 * 48e3), int(0.65 * 48e3)

        def amp(x, f):
            n = len(x)
            w = np.hanning(n)
            s = np.abs(np.fft.rfft(x * w))
            fr = np.fft.rfftfreq(n, 1 / 48e3)
            return s[np.argmin(np.abs(fr - f))]

        assert 20 * np.log10(amp(a[lo:hi], 1300) / amp(a[lo:hi], 800)) <= -20
        assert 20 * np.log10(amp(b[lo:hi], 800) / amp(b[lo:hi], 1300)) <= -20

    def test_narrow_assignment_rejected(self, speech_tag):
        buf = self.synth([(speech_tag, None)], dur=0.4, seed=44)
        with pytest.raises(DecodeError):
            decode_audio(buf, ("mic", 600e3, 20e3))


class TestPlanChannels:
    def test_eight_audio_fit(self):
        plan = plan_channels([(f"a{k}", "audio") for k in range(8)])
        assert len(plan.assignments) == 8
        assert validate_plan(plan) is not None
        centers = [c for _, c, _ in plan.assignments]
        assert all(100e3 <= c <= 1e6 for c in centers)

    def test_thirty_discrete_fit(self):
        plan = plan_channels([(f"d{k}", "discrete") for k in range(30)])
        assert len(plan.assignments) == 30
        validate_plan(plan)

    def test_empty(self):
        plan = plan_channels([])
        assert plan.assignments == ()

    def test_capacity_error_names_tag(self):
        with pytest.raises(CapacityError, match="a8"):
            plan_channels([(f"a{k}", "audio") for k in range(9)])

    def test_random_mixes_valid(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            kinds = rng.choice(["discrete", "audio"], size=rng.integers(1, 12))
            reqs = [(f"t{i}", k) for i, k in enumerate(kinds)]
            try:
                plan = plan_channels(reqs)
            except CapacityError:
                continue
            validate_plan(plan)   # raises if invariants broken
            edges = sorted((c - b / 2, c + b / 2) for _, c, b in plan.assignments)
            for (l1, h1), (l2, h2) in zip(edges, edges[1:]):
                assert l2 - h1 >= plan.guard - 1e-9

    def test_guard_violation_caught(self):
        plan = ChannelPlan((("a", 200e3, 20e3), ("b", 212e3, 20e3)), guard=5e3)
        with pytest.raises(CapacityError):
            validate_plan(plan)

    def test_out_of_band_landmarks_warn(self):
        plan = plan_channels([("menu", "discrete")])
        spec = TagBandSpec("menu", plan.assignments[0][1], 20e3,
                           landmarks={"idle": plan.assignments[0][1]},
                           digit_bands={3: (plan.assignments[0][1] + 15e3,
                                            plan.assignments[0][1] + 25e3)},
                           mode="id")
        warnings = validate_plan(plan, [spec])
        assert any("outside the nominal" in w for w in warnings)
