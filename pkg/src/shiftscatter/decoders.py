"""Interaction decoding on top of the receiver chain.

The discrete decoders all work from the spectrogram: a per-frame peak track
restricted to the tag's band (with a no-carrier marker when nothing clears
the noise floor), a moving-average smoother, a min-to-max linear regression
for swipe direction, dwell segmentation against the digit bands for IDs, and
per-landmark band-energy thresholds with hysteresis for touch. Audio tags
bypass the spectrogram: translate, low-pass, decimate, FM-discriminate,
resample, band-limit.

plan_channels assigns non-overlapping offsets: first-fit ascending from
100 kHz, 20 kHz discrete / 120 kHz audio widths, 5 kHz guard between
occupied edges. Capacity claims in the source material ignore guards and
band-edge spill, so validity here means centers inside [100 kHz, 1 MHz] and
neighbor edges separated by at least the guard; edge spill of the outermost
audio sidebands is reported as a warning, not an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import IqBuffer
from scipy.signal import fftconvolve

from .channel import AUDIO_BANDWIDTH, DISCRETE_BANDWIDTH
from .dsp import (
    Spectrogram,
    decimate,
    design_bandpass,
    design_lowpass,
    frequency_translate,
    resample,
    wbfm_demod,
)

__all__ = [
    "TagBandSpec",
    "DecodedEvent",
    "ChannelPlan",
    "PeakSeries",
    "DecodeError",
    "InsufficientData",
    "CapacityError",
    "BandSpecError",
    "peak_track",
    "smooth_track",
    "swipe_direction",
    "segment_activity",
    "classify_id",
    "classify_id_dwells",
    "detect_touch",
    "decode_audio",
    "plan_channels",
    "validate_plan",
]

PLAN_BAND = (100e3, 1e6)
DEFAULT_GUARD = 5e3

PEAK_AVG_FRAMES = 9           # power smoothing inside the peak tracker
CARRIER_MARGIN_DB = 6.0       # peak must clear the floor by this much
TOUCH_WINDOW = 3e3            # landmark +/- window for touch energy
TOUCH_HYSTERESIS_DB = 3.0
TOUCH_AVG_FRAMES = 5
# transit through an intermediate landmark smears over ~TOUCH_AVG_FRAMES + the
# 2 ms level transition; anything shorter than this many frames is a sweep
# artifact, not a press
MIN_TOUCH_FRAMES = 12
MIN_DWELL_SECONDS = 0.1
SLOPE_EPS = 1e3               # Hz/s below which a regression is no swipe
IDLE_TOLERANCE = 2e3          # how close to the idle landmark counts as idle


class DecodeError(ValueError):
    """Decoding failed structurally (bad bands, empty tracks)."""


class InsufficientData(DecodeError):
    """Track too short to decide."""


class CapacityError(ValueError):
    """Channel plan ran out of spectrum."""


class BandSpecError(ValueError):
    """Malformed tag band specification."""


@dataclass(frozen=True)
class TagBandSpec:
    """What the receiver knows about one tag's channel.

    landmarks maps labels ("idle", "up", "down") to frequencies; digit_bands
    maps digit values to (low, high) frequency ranges. mode selects the
    decode path: touch, swipe, id, or audio. Digit bands may exceed the
    nominal bandwidth (the measured spreads do); that inconsistency is
    surfaced by validate_plan as a warning, not rejected here.
    """

    tag_id: str
    center: float
    bandwidth: float
    landmarks: dict[str, float] = field(default_factory=dict)
    digit_bands: dict[int, tuple[float, float]] = field(default_factory=dict)
    mode: str = "touch"

    def __post_init__(self):
        if self.mode not in ("touch", "swipe", "id", "audio"):
            raise BandSpecError(f"unknown decode mode {self.mode!r}")
        if self.bandwidth <= 0:
            raise BandSpecError("bandwidth must be positive")
        lo, hi = self.center - self.bandwidth, self.center + self.bandwidth
        for label, f in self.landmarks.items():
            if not (lo <= f <= hi):
                raise BandSpecError(
                    f"landmark {label!r} at {f:.0f} Hz outside [{lo:.0f}, {hi:.0f}] Hz")
        bands = sorted(self.digit_bands.items(), key=lambda kv: kv[1][0])
        for (d1, b1), (d2, b2) in zip(bands, bands[1:]):
            if b2[0] < b1[1]:
                raise BandSpecError(f"digit bands {d1} and {d2} overlap")
        for d, (b_lo, b_hi) in self.digit_bands.items():
            if b_hi <= b_lo:
                raise BandSpecError(f"digit band {d} is empty")

    @property
    def idle(self) -> float:
        return self.landmarks.get("idle", self.center)

    def observation_band(self) -> tuple[float, float]:
        """Frequency span the discrete decoders watch for this tag."""
        los = [self.center - self.bandwidth]
        his = [self.center + self.bandwidth]
        los += [b[0] for b in self.digit_bands.values()]
        his += [b[1] for b in self.digit_bands.values()]
        los += [f - TOUCH_WINDOW for f in self.landmarks.values()]
        his += [f + TOUCH_WINDOW for f in self.landmarks.values()]
        return min(los), max(his)


@dataclass(frozen=True)
class DecodedEvent:
    tag_id: str
    timestamp: float
    kind: str          # touch_press, touch_release, swipe, id_read, audio_segment
    payload: str
    confidence: float

    def __post_init__(self):
        object.__setattr__(self, "confidence",
                           float(min(1.0, max(0.0, self.confidence))))


@dataclass(frozen=True)
class PeakSeries:
    """Per-frame peak frequency in a band; NaN marks no-carrier frames."""

    frame_rate: float
    start_time: float
    freqs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "freqs", np.asarray(self.freqs, dtype=np.float64))

    def __len__(self):
        return len(self.freqs)

    def times(self) -> np.ndarray:
        return self.start_time + np.arange(len(self.freqs)) / self.frame_rate


def _smooth_power(power: np.ndarray, frames: int) -> np.ndarray:
    """Uniform moving average along the time axis, length preserved."""
    if frames <= 1 or power.shape[0] <= 1:
        return power
    frames = min(frames, power.shape[0])
    kernel = np.ones(frames) / frames
    out = np.empty_like(power)
    for col in range(power.shape[1]):
        out[:, col] = np.convolve(power[:, col], kernel, mode="same")
    return out


def peak_track(spec: Spectrogram, band: tuple[float, float],
               avg_frames: int = PEAK_AVG_FRAMES) -> PeakSeries:
    """Per-frame argmax frequency in the band, floor-gated.

    Power is time-averaged over avg_frames independent frames before the
    argmax (overlapping frames count fractionally) so a pure-noise band
    cannot fluctuate past the floor + 6 dB carrier test.
    """
    try:
        sl = spec.band_slice(band)
    except ValueError as exc:
        raise DecodeError(str(exc)) from exc
    overlap = max(1, int(round(spec.frame_rate / spec.bin_width)))
    mags = spec.magnitudes[:, sl].astype(np.float64)
    power = 10.0 ** (mags / 10.0)
    power = _smooth_power(power, avg_frames * overlap)
    floor = np.median(power, axis=1)
    peak_idx = np.argmax(power, axis=1)
    peak_val = power[np.arange(power.shape[0]), peak_idx]
    freqs = spec.freqs()[sl][peak_idx]
    margin = 10.0 ** (CARRIER_MARGIN_DB / 10.0)
    no_carrier = peak_val < floor * margin
    freqs = freqs.copy()
    freqs[no_carrier] = np.nan
    return PeakSeries(frame_rate=spec.frame_rate, start_time=spec.start_time,
                      freqs=freqs)


def smooth_track(track: PeakSeries, window: int) -> PeakSeries:
    """Centered moving average; no-carrier frames excluded from the mean."""
    if window < 1 or window % 2 == 0:
        raise DecodeError("smoothing window must be odd and >= 1")
    if window == 1 or len(track) == 0:
        return track
    valid = np.isfinite(track.freqs)
    values = np.where(valid, track.freqs, 0.0)
    kernel = np.ones(window)
    sums = np.convolve(values, kernel, mode="same")
    counts = np.convolve(valid.astype(np.float64), kernel, mode="same")
    out = np.full(len(track), np.nan)
    ok = counts > 0
    out[ok] = sums[ok] / counts[ok]
    out[~valid] = np.nan   # markers survive smoothing
    return PeakSeries(track.frame_rate, track.start_time, out)


@dataclass(frozen=True)
class SwipeResult:
    direction: str            # "left" | "right" | "no_swipe"
    slope: float              # Hz/s
    confidence: float


def swipe_direction(track: PeakSeries, eps: float = SLOPE_EPS) -> SwipeResult:
    """Fit a line between the track's global extremes; the sign is the swipe.

    Ascending frequency (shrinking shift back toward idle) is a right swipe;
    the time-reversed track gives the opposite slope and the opposite answer.
    """
    valid = np.flatnonzero(np.isfinite(track.freqs))
    if len(valid) < 2:
        raise InsufficientData(
            f"only {len(valid)} usable frames in the track")
    vals = track.freqs[valid]
    i_min = valid[int(np.argmin(vals))]
    i_max = valid[int(np.argmax(vals))]
    lo, hi = min(i_min, i_max), max(i_min, i_max)
    seg = np.flatnonzero(np.isfinite(track.freqs[lo:hi + 1])) + lo
    if len(seg) < 2:
        # min and max coincide: nothing moved
        return SwipeResult("no_swipe", 0.0, 0.0)
    t = seg / track.frame_rate
    y = track.freqs[seg]
    slope, intercept = np.polyfit(t, y, 1)
    fitted = slope * t + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    if abs(slope) <= eps:
        return SwipeResult("no_swipe", float(slope), 0.0)
    return SwipeResult("right" if slope > 0 else "left", float(slope),
                       max(0.0, r2))


def segment_activity(track: PeakSeries, idle: float,
                     depart: float = 2.5e3, bridge_frames: int = 0,
                     min_frames: int = 2) -> list[tuple[int, int]]:
    """Index ranges where the track leaves the idle frequency.

    bridge_frames joins active runs separated by short returns (a finger
    sliding between teeth); runs shorter than min_frames are dropped.
    """
    active = np.isfinite(track.freqs) & (np.abs(track.freqs - idle) > depart)
    if bridge_frames > 0 and active.any():
        idx = np.flatnonzero(active)
        gaps = np.flatnonzero(np.diff(idx) > 1)
        for g in gaps:
            if idx[g + 1] - idx[g] - 1 <= bridge_frames:
                active[idx[g]:idx[g + 1] + 1] = True
    segments = []
    in_run = False
    start = 0
    for i, a in enumerate(active):
        if a and not in_run:
            in_run, start = True, i
        elif not a and in_run:
            in_run = False
            if i - start >= min_frames:
                segments.append((start, i))
    if in_run and len(active) - start >= min_frames:
        segments.append((start, len(active)))
    return segments


@dataclass(frozen=True)
class IdDwell:
    digit: int
    t_start: float
    t_end: float
    confidence: float


def classify_id_dwells(track: PeakSeries, spec: TagBandSpec,
                       min_dwell: float = MIN_DWELL_SECONDS) -> tuple[list[IdDwell], int]:
    """Segment the track into digit dwells; returns (dwells, skipped_count).

    A dwell is a run of at least min_dwell seconds inside one digit band
    (small intra-run dropouts tolerated). Consecutive dwells need an idle or
    no-carrier separator frame between them; dwell-length runs outside every
    band are counted as skipped and lower the read's confidence.
    """
    if not spec.digit_bands:
        raise DecodeError(f"band spec {spec.tag_id!r} carries no digit bands")
    min_frames = max(2, int(round(min_dwell * track.frame_rate)))
    digits = sorted(spec.digit_bands.items())
    labels = np.full(len(track), -1, dtype=np.int64)   # -1 other, -2 idle/nan
    nan = ~np.isfinite(track.freqs)
    labels[nan] = -2
    idle_mask = np.abs(track.freqs - spec.idle) <= IDLE_TOLERANCE
    labels[idle_mask & ~nan] = -2
    for digit, (lo, hi) in digits:
        inband = (track.freqs >= lo) & (track.freqs <= hi)
        labels[inband] = digit
    times = track.times()
    dwells: list[IdDwell] = []
    skipped = 0
    sep_seen = True
    i = 0
    n = len(labels)
    while i < n:
        lab = labels[i]
        j = i + 1
        while j < n and labels[j] == lab:
            j += 1
        run = j - i
        if lab == -2:
            if run >= 1:
                sep_seen = True
        elif lab >= 0 and run >= min_frames:
            if sep_seen:
                dwells.append(IdDwell(int(lab), float(times[i]),
                                      float(times[j - 1]), 1.0))
                sep_seen = False
            else:
                skipped += 1
        elif lab == -1 and run >= min_frames:
            skipped += 1
        i = j
    return dwells, skipped


def classify_id(track: PeakSeries, spec: TagBandSpec,
                min_dwell: float = MIN_DWELL_SECONDS) -> list[int]:
    """Digit sequence read off the dwell segmentation."""
    dwells, _ = classify_id_dwells(track, spec, min_dwell)
    return [d.digit for d in dwells]


def detect_touch(spec: Spectrogram, band_spec: TagBandSpec,
                 threshold_db: float = 10.0) -> list[DecodedEvent]:
    """Threshold detector: per-landmark band energy against its noise floor.

    Energy in landmark +/- 3 kHz crossing floor + threshold_db turns a press
    on; it releases 3 dB lower (hysteresis). The idle landmark anchors the
    band but emits no events.
    """
    buttons = {k: v for k, v in band_spec.landmarks.items() if k != "idle"}
    if "idle" not in band_spec.landmarks or not buttons:
        raise BandSpecError(
            f"touch spec {band_spec.tag_id!r} needs an idle landmark plus buttons")
    windows = sorted((v - TOUCH_WINDOW, v + TOUCH_WINDOW, k)
                     for k, v in band_spec.landmarks.items())
    for (lo1, hi1, k1), (lo2, hi2, k2) in zip(windows, windows[1:]):
        if lo2 < hi1:
            raise BandSpecError(f"landmark windows {k1!r} and {k2!r} overlap")

    times = spec.times()
    events: list[DecodedEvent] = []
    on_gain = 10.0 ** (threshold_db / 10.0)
    off_gain = 10.0 ** ((threshold_db - TOUCH_HYSTERESIS_DB) / 10.0)
    for label, center in sorted(buttons.items()):
        sl = spec.band_slice((center - TOUCH_WINDOW, center + TOUCH_WINDOW))
        power = 10.0 ** (spec.magnitudes[:, sl].astype(np.float64) / 10.0)
        energy = _smooth_power(power.sum(axis=1, keepdims=True),
                               TOUCH_AVG_FRAMES)[:, 0]
        floor = float(np.median(energy))
        on = energy >= floor * on_gain
        # hysteresis: extend runs while above the release level
        off = energy < floor * off_gain
        state = False
        start = 0
        runs = []
        for i in range(len(energy)):
            if not state and on[i]:
                state, start = True, i
            elif state and off[i]:
                state = False
                runs.append((start, i - 1))
        if state:
            runs.append((start, len(energy) - 1))
        for i0, i1 in runs:
            if i1 - i0 + 1 < MIN_TOUCH_FRAMES:
                continue
            margin_db = 10.0 * math.log10(
                max(float(np.median(energy[i0:i1 + 1])) / (floor * on_gain), 1e-12))
            conf = min(1.0, max(0.0, margin_db / 10.0))
            events.append(DecodedEvent(band_spec.tag_id, float(times[i0]),
                                       "touch_press", label, conf))
            events.append(DecodedEvent(band_spec.tag_id, float(times[i1]),
                                       "touch_release", label, conf))
    events.sort(key=lambda e: (e.timestamp, e.kind != "touch_press"))
    return events


@dataclass(frozen=True)
class AudioDecode:
    sample_rate: float
    samples: np.ndarray
    event: DecodedEvent


def decode_audio(iq: IqBuffer, assignment: tuple[str, float, float],
                 deviation: float = 60e3, audio_rate: float = 48e3,
                 audio_band: tuple[float, float] = (60.0, 4000.0)) -> AudioDecode:
    """Full audio chain for one assignment (tag_id, center, bandwidth).

    translate(center) -> low-pass(deviation) -> decimate to ~200 kHz ->
    FM-discriminate(deviation) -> resample to 48 kHz -> band-pass 60 Hz-4 kHz.
    The band-pass runs at the output rate where its 60 Hz edge is cheap.
    """
    tag_id, center, bandwidth = assignment
    if bandwidth < AUDIO_BANDWIDTH:
        raise DecodeError(
            f"audio assignment for {tag_id!r} needs >= {AUDIO_BANDWIDTH:.0f} Hz, "
            f"got {bandwidth:.0f}")
    baseband = frequency_translate(iq, center)
    lp = design_lowpass(deviation, iq.sample_rate, deviation * 0.1)
    factor = max(1, int(iq.sample_rate // 200e3))
    narrow = decimate(baseband, factor, lp)
    demod = wbfm_demod(narrow, deviation)
    audio = resample(demod, narrow.sample_rate, audio_rate)
    bp = design_bandpass(audio_band[0], audio_band[1], audio_rate)
    audio = fftconvolve(audio, bp.taps, mode="same")
    total = float(np.mean(audio ** 2))
    demod_power = float(np.mean(demod ** 2))
    conf = 0.0 if demod_power <= 0 else min(1.0, total / demod_power)
    event = DecodedEvent(tag_id, 0.0, "audio_segment", "", conf)
    return AudioDecode(sample_rate=audio_rate, samples=audio, event=event)


# ---------------------------------------------------------------------------
# channel planning

@dataclass(frozen=True)
class ChannelPlan:
    assignments: tuple[tuple[str, float, float], ...]
    guard: float = DEFAULT_GUARD


def plan_channels(requests: list[tuple[str, str]],
                  guard: float = DEFAULT_GUARD) -> ChannelPlan:
    """Greedy first-fit ascending from 100 kHz.

    requests: (tag_id, kind) with kind "discrete" or "audio". Raises
    CapacityError naming the first tag that does not fit below 1 MHz.
    """
    assignments = []
    edge = None    # top edge of the previous assignment
    for tag_id, kind in requests:
        if kind not in ("discrete", "audio"):
            raise BandSpecError(f"unknown request kind {kind!r} for {tag_id!r}")
        bw = AUDIO_BANDWIDTH if kind == "audio" else DISCRETE_BANDWIDTH
        center = PLAN_BAND[0] if edge is None else edge + guard + bw / 2
        if center > PLAN_BAND[1]:
            raise CapacityError(
                f"tag {tag_id!r} does not fit: next center {center:.0f} Hz "
                f"beyond {PLAN_BAND[1]:.0f} Hz")
        assignments.append((tag_id, center, bw))
        edge = center + bw / 2
    return ChannelPlan(tuple(assignments), guard)


def validate_plan(plan: ChannelPlan,
                  band_specs: list[TagBandSpec] | None = None) -> list[str]:
    """Check plan invariants; returns human-readable warnings.

    Errors (raised): centers outside the band, occupied intervals closer
    than the guard. Warnings (returned): sidebands spilling past the band
    edges, landmark or digit frequencies outside their nominal allocation.
    """
    warnings = []
    by_center = sorted(plan.assignments, key=lambda a: a[1])
    for tag_id, center, bw in by_center:
        if not (PLAN_BAND[0] <= center <= PLAN_BAND[1]):
            raise CapacityError(
                f"tag {tag_id!r} center {center:.0f} Hz outside "
                f"[{PLAN_BAND[0]:.0f}, {PLAN_BAND[1]:.0f}] Hz")
        if center - bw / 2 < PLAN_BAND[0] or center + bw / 2 > PLAN_BAND[1]:
            warnings.append(
                f"tag {tag_id}: sidebands spill past the band edge "
                f"({center - bw/2:.0f}..{center + bw/2:.0f} Hz)")
    for (t1, c1, b1), (t2, c2, b2) in zip(by_center, by_center[1:]):
        gap = (c2 - b2 / 2) - (c1 + b1 / 2)
        if gap < plan.guard - 1e-9:
            raise CapacityError(
                f"tags {t1!r} and {t2!r} separated by {gap:.0f} Hz, "
                f"under the {plan.guard:.0f} Hz guard")
    if band_specs:
        widths = {a[0]: a for a in plan.assignments}
        for spec in band_specs:
            if spec.tag_id not in widths:
                continue
            _, center, bw = widths[spec.tag_id]
            lo, hi = center - bw / 2, center + bw / 2
            outliers = [f"{label}@{f:.0f}" for label, f in spec.landmarks.items()
                        if not (lo <= f <= hi)]
            outliers += [f"digit{d}@{b[0]:.0f}-{b[1]:.0f}"
                         for d, b in spec.digit_bands.items()
                         if b[0] < lo or b[1] > hi]
            if outliers:
                warnings.append(
                    f"tag {spec.tag_id}: landmarks outside the nominal "
                    f"{bw:.0f} Hz allocation: {', '.join(outliers)}")
    return warnings
