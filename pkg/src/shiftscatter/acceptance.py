"""The acceptance suite: one callable check per shipping criterion.

Each criterion runs end to end through the public pipeline (no shortcuts
into internals), measures its own runtime where the criterion bounds it,
and returns a structured pass/fail with details. `run_all` prints one line
per criterion; the pytest acceptance module asserts on the same results.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ._memtune import retain_heap
from .channel import ChannelParams, IqBuffer, distance_for_snr, snr_at_distance, synthesize
from .circuit import required_capacitance, resonant_frequency
from .decoders import TagBandSpec, plan_channels, validate_plan
from .dsp import (
    design_lowpass,
    frequency_translate,
    measure_snr,
    resample,
    spectrogram,
    wbfm_demod,
)
from .pipeline import band_specs_from_json, decode_buffer, simulate_scenario
from .scenario import Scenario, bundled_scenario_path, load_scenario_file
from .tables import check_drain_table, load_gate_table
from .tags import (
    CapacitiveBarcode,
    ConstantDc,
    FrequencyTrack,
    InteractionScript,
    SwipeTooth,
    TagConfig,
    TegTouch,
    calibrate_sensor,
    frequency_track,
    power_gate,
)
from .circuit import OscillatorDesign, Topology

__all__ = ["CriterionResult", "run_all", "ALL_CRITERIA"]


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    runtime: float
    details: list[str] = field(default_factory=list)

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return (f"[{mark}] criterion {self.number:2d} {self.name:<22s} "
                f"({self.runtime:6.2f}s)  {'; '.join(self.details)}")


def _match_events(ground_truth: list[dict], events, tol: float = 0.1):
    """Greedy matching on (tag, kind, payload) within a timestamp tolerance."""
    used = [False] * len(events)
    matched = 0
    misses = []
    for g in ground_truth:
        hit = None
        for i, e in enumerate(events):
            if used[i]:
                continue
            if (e.tag_id == g["tag_id"] and e.kind == g["kind"]
                    and e.payload == g["payload"]
                    and abs(e.timestamp - g["t"]) <= tol):
                hit = i
                break
        if hit is None:
            misses.append(g)
        else:
            used[hit] = True
            matched += 1
    spurious = [e for i, e in enumerate(events) if not used[i]]
    return matched, misses, spurious


def _swipe_pad_design():
    return OscillatorDesign(Topology.MCO_GATE, l1=14.7e-3, l2=10e-3, c1=47e-12,
                            c2=31e-12, c_blocking=100e-9, c_shift=30e-12,
                            r_adjust=68e3)


def criterion_1_table_oracle() -> CriterionResult:
    t0 = time.time()
    checks = check_drain_table()
    by_f = {c.f_khz: c for c in checks}
    ok = all(by_f[f].status == "PASS" and by_f[f].relative_error < 0.05e-2
             for f in (100, 200, 300, 600, 800, 900))
    ok &= all(by_f[f].status == "PASS" and by_f[f].relative_error < 2e-2
              for f in (400, 500, 700))
    ok &= by_f[1000].status == "FLAGGED-ANOMALOUS"
    runtime = time.time() - t0
    ok &= runtime < 1.0
    n_pass = sum(1 for c in checks if c.status == "PASS")
    return CriterionResult(1, "table oracle", ok, runtime,
                           [f"{n_pass}/9 rows pass, row 1000 flagged"])


def criterion_2_tuning_round_trip() -> CriterionResult:
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        f = rng.uniform(100e3, 1e6)
        l = rng.uniform(0.1e-3, 50e-3)
        back = resonant_frequency(l, required_capacitance(f, l))
        worst = max(worst, abs(back - f) / f)
    runtime = time.time() - t0
    ok = worst < 1e-9 and runtime < 1.0
    return CriterionResult(2, "tuning round trip", ok, runtime,
                           [f"worst relative error {worst:.2e}"])


def _pong_scenario(idle: bool = False) -> Scenario:
    sc = load_scenario_file(bundled_scenario_path("pong"))
    if idle:
        sc = Scenario(name=sc.name + "-idle", seed=sc.seed + 1,
                      channel=sc.channel, tags=sc.tags,
                      scripts={t: InteractionScript(()) for t in sc.tags})
    return sc


def criterion_3_multi_touch() -> CriterionResult:
    t0 = time.time()
    sc = _pong_scenario()
    sim = simulate_scenario(sc)
    specs = band_specs_from_json(sim.manifest["bands"])
    events, _, _ = decode_buffer(sim.iq, specs)
    runtime_main = time.time() - t0
    gt = sim.manifest["ground_truth"]
    matched, misses, spurious = _match_events(gt, events)
    pairs_total = len(gt) // 2
    # a pair counts only when both its press and its release matched
    pair_rate = matched / len(gt) if gt else 0.0

    t1 = time.time()
    sim_idle = simulate_scenario(_pong_scenario(idle=True))
    idle_events, _, _ = decode_buffer(sim_idle.iq, specs)
    runtime_idle = time.time() - t1

    ok = (pair_rate >= 0.99 and not spurious and not idle_events
          and runtime_main < 30.0 and runtime_idle < 30.0)
    return CriterionResult(
        3, "multi-touch pong", ok, runtime_main + runtime_idle,
        [f"{matched}/{len(gt)} events over {pairs_total} pairs",
         f"{len(spurious)} spurious, {len(idle_events)} idle-run events",
         f"runs {runtime_main:.1f}s + {runtime_idle:.1f}s"])


def _dimmer_tag() -> TagConfig:
    tag = TagConfig("dim", _swipe_pad_design(),
                    CapacitiveBarcode((8e-12, 5e-12, 2e-12)),
                    startup_voltage=0.35, startup_current=1.3e-6,
                    channel_center=345e3)
    return calibrate_sensor(tag, [("idle", 345e3), (0, 326e3),
                                  (1, 334e3), (2, 340e3)])


def criterion_4_swipe_direction(n_each: int = 100) -> CriterionResult:
    t0 = time.time()
    tag = _dimmer_tag()
    band = [TagBandSpec("dim", 345e3, 25e3, landmarks={"idle": 345e3},
                        mode="swipe")]
    distance = 49.0       # the 15 dB anchor
    rng = np.random.default_rng(48)
    correct = 0
    total = 0
    exact_ok = True
    for trial in range(2 * n_each):
        to_right = trial % 2 == 0
        if trial < 2:
            speed = 0.9   # the printed sequence itself, then its reversal
        else:
            speed = float(rng.uniform(0.3, 2.0))
        teeth = [0, 1, 2] if to_right else [2, 1, 0]
        d = speed / 3
        evs = tuple(SwipeTooth(k, 0.12 + i * d, 0.12 + (i + 1) * d)
                    for i, k in enumerate(teeth))
        dur = 0.12 + speed + 0.15
        track = frequency_track(tag, InteractionScript(evs), dur, 1e6)
        params = ChannelParams(1e6, dur, tag_distances={"dim": distance})
        buf = synthesize({"dim": track}, params, seed=9000 + trial,
                         dtype=np.complex64)
        events, _, _ = decode_buffer(buf, band)
        want = "right" if to_right else "left"
        got = [e for e in events if e.kind == "swipe"]
        hit = len(got) == 1 and got[0].payload == want
        correct += hit
        total += 1
        if trial < 2 and not hit:
            exact_ok = False
    runtime = time.time() - t0
    rate = correct / total
    ok = rate >= 0.95 and exact_ok and runtime < 60.0
    return CriterionResult(4, "swipe direction", ok, runtime,
                           [f"{correct}/{total} correct ({rate:.1%})",
                            f"printed sequence/reverse ok: {exact_ok}"])


def _menu_tag() -> TagConfig:
    tag = TagConfig("menu", _swipe_pad_design(),
                    CapacitiveBarcode((8e-12, 5e-12, 2e-12)),
                    startup_voltage=0.35, startup_current=1.3e-6,
                    channel_center=345e3)
    return calibrate_sensor(tag, [("idle", 345e3), (0, 321.5e3),
                                  (1, 332.5e3), (2, 340e3)])


def criterion_5_swipe_id(n_seq: int = 100) -> CriterionResult:
    t0 = time.time()
    tag = _menu_tag()
    digit_bands = {3: (318e3, 325e3), 2: (330e3, 335e3), 1: (339e3, 341e3)}
    digits_of = {0: 3, 1: 2, 2: 1}
    band = [TagBandSpec("menu", 345e3, 20e3, landmarks={"idle": 345e3},
                        digit_bands=digit_bands, mode="id")]
    distance = distance_for_snr(ChannelParams(1e6, 1.0), 18.0)
    rng = np.random.default_rng(51)
    exact = 0
    for trial in range(n_seq):
        length = int(rng.integers(1, 5))
        teeth = [int(rng.integers(0, 3)) for _ in range(length)]
        evs = []
        t = 0.15
        for k in teeth:
            dwell = float(rng.uniform(0.18, 0.30))
            jitter = float(rng.uniform(-0.25e-12, 0.25e-12))
            evs.append(SwipeTooth(k, t, t + dwell, cap_jitter=jitter))
            t += dwell + float(rng.uniform(0.10, 0.16))
        dur = t + 0.15
        track = frequency_track(tag, InteractionScript(tuple(evs)), dur, 1e6)
        params = ChannelParams(1e6, dur, tag_distances={"menu": distance})
        buf = synthesize({"menu": track}, params, seed=5100 + trial,
                         dtype=np.complex64)
        events, _, _ = decode_buffer(buf, band)
        want = "".join(str(digits_of[k]) for k in teeth)
        got = [e.payload for e in events if e.kind == "id_read"]
        exact += got == [want]
    runtime = time.time() - t0
    rate = exact / n_seq
    ok = rate >= 0.95
    return CriterionResult(5, "swipe id", ok, runtime,
                           [f"{exact}/{n_seq} exact sequences ({rate:.1%})"])


def _tone_snr(audio: np.ndarray, rate: float, tone: float) -> float:
    n = len(audio)
    w = np.hanning(n)
    spec = np.abs(np.fft.rfft(audio * w)) ** 2
    freqs = np.fft.rfftfreq(n, 1 / rate)
    sig = np.abs(freqs - tone) < 30
    noise = (freqs > 60) & (freqs < 4000) & ~(np.abs(freqs - tone) < 60)
    return float(10 * np.log10(spec[sig].sum()
                               / (spec[noise].sum() * sig.sum() / noise.sum())))


def _tone_amplitude(audio: np.ndarray, rate: float, tone: float) -> float:
    n = len(audio)
    w = np.hanning(n)
    spec = np.fft.rfft(audio * w)
    freqs = np.fft.rfftfreq(n, 1 / rate)
    return float(2 * np.abs(spec[np.argmin(np.abs(freqs - tone))]) / np.sum(w))


def criterion_6_audio_chain() -> CriterionResult:
    t0 = time.time()
    sc = load_scenario_file(bundled_scenario_path("speech"))
    sim = simulate_scenario(sc)
    specs = band_specs_from_json(sim.manifest["bands"])
    events, audio, _ = decode_buffer(sim.iq, specs)
    rate, samples = audio["mic"]
    tone = sim.manifest["audio_tones"]["mic"]
    lo, hi = int(0.45 * rate), int(1.55 * rate)
    core = samples[lo:hi]
    snr = _tone_snr(core, rate, tone)
    deviation = _tone_amplitude(core, rate, tone) * 60e3
    runtime = time.time() - t0
    ok = snr >= 20.0 and abs(deviation - 60e3) <= 0.05 * 60e3
    ok &= any(e.kind == "audio_segment" for e in events)
    return CriterionResult(6, "audio chain", ok, runtime,
                           [f"tone SNR {snr:.1f} dB",
                            f"measured deviation {deviation/1e3:.2f} kHz"])


def criterion_7_capacity() -> CriterionResult:
    t0 = time.time()
    plan8 = plan_channels([(f"a{k}", "audio") for k in range(8)])
    plan30 = plan_channels([(f"d{k}", "discrete") for k in range(30)])
    validate_plan(plan8)
    validate_plan(plan30)
    ok = len(plan8.assignments) == 8 and len(plan30.assignments) == 30
    ok &= all(100e3 <= c <= 1e6 for _, c, _ in
              plan8.assignments + plan30.assignments)

    sc = load_scenario_file(bundled_scenario_path("8-audio-tags"))
    sim = simulate_scenario(sc)
    specs = band_specs_from_json(sim.manifest["bands"])
    _, audio, _ = decode_buffer(sim.iq, specs)
    tones = sim.manifest["audio_tones"]
    worst_xtalk = -np.inf
    decoded = 0
    for tag_id, (rate, samples) in audio.items():
        lo, hi = int(0.3 * rate), int(0.95 * rate)
        core = samples[lo:hi]
        own = _tone_amplitude(core, rate, tones[tag_id])
        others = [_tone_amplitude(core, rate, t)
                  for tid, t in tones.items() if tid != tag_id]
        if own > 0 and _tone_snr(core, rate, tones[tag_id]) >= 10.0:
            decoded += 1
        xtalk = 20 * np.log10(max(others) / own) if others else -np.inf
        worst_xtalk = max(worst_xtalk, xtalk)
    runtime = time.time() - t0
    ok &= decoded == 8 and worst_xtalk <= -20.0 and runtime < 60.0
    return CriterionResult(7, "multi-tag capacity", ok, runtime,
                           [f"{decoded}/8 tones decoded",
                            f"worst crosstalk {worst_xtalk:.1f} dB"])


def criterion_8_range_model() -> CriterionResult:
    t0 = time.time()
    params = ChannelParams(1e6, 1.0)
    ok = (snr_at_distance(params, 3.0) == 45.0
          and snr_at_distance(params, 9.0) == 38.0
          and snr_at_distance(params, 49.0) == 15.0)
    grid = np.linspace(3.0, 49.0, 1000)
    snrs = np.array([snr_at_distance(params, d) for d in grid])
    ok &= bool(np.all(np.diff(snrs) < 0))

    sc = load_scenario_file(bundled_scenario_path("range-sweep"))
    sim = simulate_scenario(sc)
    worst = 0.0
    for tag_id, want in (("near", 45.0), ("mid", 38.0), ("far", 15.0)):
        c = sc.tags[tag_id].config.channel_center
        got = measure_snr(sim.iq, (c - 10e3, c + 10e3), (150e3, 220e3))
        worst = max(worst, abs(got - want))
    ok &= worst <= 1.0
    runtime = time.time() - t0
    return CriterionResult(8, "range model", ok, runtime,
                           [f"anchors exact, monotone, closed loop within "
                            f"{worst:.2f} dB"])


def criterion_9_dsp_properties() -> CriterionResult:
    t0 = time.time()
    details = []
    rate = 2e6
    n = int(rate * 0.02)
    t = np.arange(n) / rate
    track = FrequencyTrack(rate, 0.0, 60e3 * np.sin(2 * np.pi * 1000 * t),
                           np.ones(n, bool))
    from .channel import phase_accumulate
    iq = IqBuffer(rate, 0.5 * np.exp(1j * phase_accumulate(track)))
    y = wbfm_demod(iq, 60e3)[1:]
    tt = (np.arange(1, n) - 0.5) / rate
    ideal = np.sin(2 * np.pi * 1000 * tt)
    corr = float(np.dot(y, ideal) / np.sqrt(np.dot(y, y) * np.dot(ideal, ideal)))
    ok = corr >= 0.99
    details.append(f"fm corr {corr:.4f}")

    rng = np.random.default_rng(99)
    x = (rng.standard_normal(1 << 16) + 1j * rng.standard_normal(1 << 16)) * 0.01
    buf = IqBuffer(1e6, x)
    shifted = frequency_translate(buf, 237e3)
    p_ratio = abs(np.sum(np.abs(shifted.samples) ** 2)
                  / np.sum(np.abs(buf.samples) ** 2) - 1.0)
    ok &= p_ratio < 1e-9
    details.append(f"translate power drift {p_ratio:.1e}")

    filt = design_lowpass(30e3, 1e6, 3e3)
    stop = filt.response_at(36e3)
    ok &= stop <= -50.0
    details.append(f"stopband {stop:.1f} dB")

    x = np.sin(2 * np.pi * 1000 * np.arange(40000) / 200e3)
    yr = resample(x, 200e3, 48e3)
    level = 10 * np.log10(np.mean(yr[500:-500] ** 2) / np.mean(x ** 2))
    ok &= abs(level) <= 0.5
    details.append(f"resampler level {level:+.2f} dB")

    # determinism: the same seeded synthesis twice, bit identical
    n2 = int(1e6 * 0.05)
    trk = FrequencyTrack(1e6, 300e3, np.full(n2, 300e3), np.ones(n2, bool))
    p = ChannelParams(1e6, 0.05, tag_distances={"t": 9.0})
    b1 = synthesize({"t": trk}, p, seed=7)
    b2 = synthesize({"t": trk}, p, seed=7)
    ok &= bool(np.array_equal(b1.samples, b2.samples))
    details.append("seeded synthesis deterministic")

    runtime = time.time() - t0
    ok &= runtime < 30.0
    return CriterionResult(9, "dsp properties", ok, runtime, details)


def criterion_10_power_gate() -> CriterionResult:
    t0 = time.time()
    rows = load_gate_table()
    design = _swipe_pad_design()
    ok = True
    teg_rows = 0
    for row in rows:
        tag = TagConfig(f"row{row.f_khz}", design, None,
                        startup_voltage=row.v_in, startup_current=row.i_in,
                        channel_center=min(max(row.f_khz * 1e3, 100e3), 1e6))
        at = ConstantDc(row.v_in, row.i_in)
        above = ConstantDc(row.v_in * 1.2, row.i_in * 1.2)
        below_v = ConstantDc(row.v_in * 0.8, row.i_in * 1.2)
        below_i = ConstantDc(row.v_in * 1.2, row.i_in * 0.8)
        ok &= power_gate(tag, at, 0.0)
        ok &= power_gate(tag, above, 0.0)
        ok &= not power_gate(tag, below_v, 0.0)
        ok &= not power_gate(tag, below_i, 0.0)
        if row.v_in <= 0.4 and row.i_in <= 2.5e-6:
            teg_rows += 1
            teg = TegTouch()
            grid = np.linspace(0.0, 8.0, 1601)
            active = np.array([power_gate(tag, teg, float(x)) for x in grid])
            window = np.flatnonzero(active)
            ok &= window.size >= 2 and bool(np.all(np.diff(window) == 1))
    runtime = time.time() - t0
    return CriterionResult(10, "power gate", ok, runtime,
                           [f"10 rows gated, {teg_rows} TEG-feasible rows "
                            "with positive windows"])


ALL_CRITERIA = [
    criterion_1_table_oracle,
    criterion_2_tuning_round_trip,
    criterion_3_multi_touch,
    criterion_4_swipe_direction,
    criterion_5_swipe_id,
    criterion_6_audio_chain,
    criterion_7_capacity,
    criterion_8_range_model,
    criterion_9_dsp_properties,
    criterion_10_power_gate,
]


def run_all(numbers: list[int] | None = None, out=print) -> list[CriterionResult]:
    retain_heap()
    results = []
    for fn in ALL_CRITERIA:
        probe = fn.__name__.split("_")[1]
        if numbers and int(probe) not in numbers:
            continue
        result = fn()
        results.append(result)
        out(result.line())
    n_pass = sum(r.passed for r in results)
    out(f"{n_pass}/{len(results)} acceptance criteria pass")
    return results
