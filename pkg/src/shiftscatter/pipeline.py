"""Scenario-to-IQ simulation and IQ-to-events decoding, end to end.

simulate_scenario turns every tag's script into a frequency track (gated by
its supply), stacks them through the channel, and emits the manifest that
doubles as the decoder's band-spec file and as the ground-truth oracle.
decode_buffer runs one shared spectrogram for all discrete tags and the FM
chain per audio tag, returning the merged, time-sorted event list.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import IqBuffer, synthesize
from .decoders import (
    DecodedEvent,
    PeakSeries,
    TagBandSpec,
    classify_id_dwells,
    decode_audio,
    detect_touch,
    peak_track,
    segment_activity,
    smooth_track,
    swipe_direction,
)
from .dsp import Spectrogram, spectrogram
from .scenario import CARRIER_NOTE, Scenario
from .tags import frequency_track

__all__ = ["SimResult", "simulate_scenario", "decode_buffer",
           "band_specs_to_json", "band_specs_from_json"]

NFFT = 4096
LONG_BUFFER = 4_000_000       # above this, frames need no overlap
SWIPE_BRIDGE_SECONDS = 0.08   # short dropouts inside one swipe
ID_BRIDGE_SECONDS = 0.25      # inter-tooth idle returns inside one ID swipe
AUDIO_ONSET_WINDOW = 0.02


@dataclass(frozen=True)
class SimResult:
    iq: IqBuffer
    manifest: dict


def band_specs_to_json(specs: list[TagBandSpec]) -> list[dict]:
    out = []
    for s in specs:
        out.append({
            "tag_id": s.tag_id,
            "mode": s.mode,
            "center": s.center,
            "bandwidth": s.bandwidth,
            "landmarks": dict(s.landmarks),
            "digit_bands": {str(d): list(b) for d, b in s.digit_bands.items()},
        })
    return out


def band_specs_from_json(doc: list[dict]) -> list[TagBandSpec]:
    specs = []
    for s in doc:
        specs.append(TagBandSpec(
            tag_id=s["tag_id"],
            center=float(s["center"]),
            bandwidth=float(s["bandwidth"]),
            landmarks={k: float(v) for k, v in s.get("landmarks", {}).items()},
            digit_bands={int(d): (float(b[0]), float(b[1]))
                         for d, b in s.get("digit_bands", {}).items()},
            mode=s.get("mode", "touch"),
        ))
    return specs


def simulate_scenario(scenario: Scenario, seed: int | None = None) -> SimResult:
    """Synthesize the scenario's IQ and its manifest (bands + ground truth)."""
    seed = scenario.seed if seed is None else seed
    ch = scenario.channel
    tracks = {}
    for tag_id, entry in scenario.tags.items():
        tracks[tag_id] = frequency_track(
            entry.config, scenario.scripts[tag_id], ch.duration, ch.sample_rate,
            supply=entry.supply)
    iq = synthesize(tracks, ch, seed=seed, dtype=np.complex64)
    manifest = {
        "format": "cf32",
        "scenario": scenario.name,
        "sample_rate": ch.sample_rate,
        "duration": ch.duration,
        "seed": seed,
        "carrier_note": CARRIER_NOTE,
        "bands": band_specs_to_json(scenario.band_specs()),
        "ground_truth": scenario.ground_truth(),
        "audio_tones": scenario.audio_tones(),
    }
    return SimResult(iq=iq, manifest=manifest)


def _decode_swipes(spec: Spectrogram, bs: TagBandSpec) -> list[DecodedEvent]:
    track = peak_track(spec, bs.observation_band())
    bridge = int(SWIPE_BRIDGE_SECONDS * track.frame_rate)
    min_frames = max(4, int(0.025 * track.frame_rate))
    events = []
    for i0, i1 in segment_activity(track, bs.idle, bridge_frames=bridge,
                                   min_frames=min_frames):
        seg_len = i1 - i0
        window = max(3, min(31, (seg_len // 6) | 1))
        sub = PeakSeries(track.frame_rate,
                         track.start_time + i0 / track.frame_rate,
                         track.freqs[i0:i1])
        sub = smooth_track(sub, window)
        # drop the smoothing-diluted edges where idle blends in
        pad = window // 2 + max(1, int(0.004 * track.frame_rate))
        if seg_len - 2 * pad >= 4:
            sub = PeakSeries(sub.frame_rate, sub.start_time + pad / sub.frame_rate,
                             sub.freqs[pad:seg_len - pad])
        res = swipe_direction(sub)
        if res.direction == "no_swipe":
            continue
        t0 = track.start_time + i0 / track.frame_rate
        events.append(DecodedEvent(bs.tag_id, t0, "swipe", res.direction,
                                   res.confidence))
    return events


def _decode_ids(spec: Spectrogram, bs: TagBandSpec) -> list[DecodedEvent]:
    track = smooth_track(peak_track(spec, bs.observation_band()), 5)
    bridge = int(ID_BRIDGE_SECONDS * track.frame_rate)
    min_frames = max(4, int(0.05 * track.frame_rate))
    events = []
    for i0, i1 in segment_activity(track, bs.idle, bridge_frames=bridge,
                                   min_frames=min_frames):
        sub = PeakSeries(track.frame_rate,
                         track.start_time + i0 / track.frame_rate,
                         track.freqs[i0:i1])
        dwells, skipped = classify_id_dwells(sub, bs)
        if not dwells:
            continue
        digits = "".join(str(d.digit) for d in dwells)
        conf = float(np.mean([d.confidence for d in dwells]))
        conf *= len(dwells) / (len(dwells) + skipped)
        t0 = track.start_time + i0 / track.frame_rate
        events.append(DecodedEvent(bs.tag_id, t0, "id_read", digits, conf))
    return events


def _audio_onset(audio: np.ndarray, rate: float,
                 edge_guard: int = 3) -> float | None:
    """First window where the demodulated envelope clearly rises off its floor.

    The first and last few windows are ignored: the centered filters smear a
    startup transient into them even on a silent channel.
    """
    w = max(1, int(AUDIO_ONSET_WINDOW * rate))
    n = len(audio) // w
    if n < 2 * edge_guard + 3:
        return None
    rms = np.sqrt(np.mean(audio[: n * w].reshape(n, w) ** 2, axis=1))
    rms = rms[edge_guard:n - edge_guard]
    floor = np.percentile(rms, 10)
    if floor <= 0 or np.max(rms) < 5.0 * floor:
        return None
    hits = np.flatnonzero(rms >= 5.0 * floor)
    return float((hits[0] + edge_guard) * w / rate)


def decode_buffer(iq: IqBuffer, band_specs: list[TagBandSpec],
                  nfft: int = NFFT) -> tuple[list[DecodedEvent],
                                             dict[str, tuple[float, np.ndarray]],
                                             Spectrogram | None]:
    """Run every band spec against the buffer.

    Returns (events, audio streams by tag, the shared discrete spectrogram
    or None). Audio events carry the onset time of the demodulated signal;
    tags whose channel stays silent emit no event.
    """
    events: list[DecodedEvent] = []
    audio_out: dict[str, tuple[float, np.ndarray]] = {}
    discrete = [b for b in band_specs if b.mode != "audio"]
    spec = None
    if discrete and len(iq.samples) >= nfft:
        lo = min(b.observation_band()[0] for b in discrete) - 5e3
        hi = max(b.observation_band()[1] for b in discrete) + 5e3
        hop = nfft if len(iq.samples) > LONG_BUFFER else nfft // 4
        spec = spectrogram(iq, nfft=nfft, hop=hop, band=(lo, hi))
        for bs in discrete:
            if bs.mode == "touch":
                events.extend(detect_touch(spec, bs))
            elif bs.mode == "swipe":
                events.extend(_decode_swipes(spec, bs))
            elif bs.mode == "id":
                events.extend(_decode_ids(spec, bs))
    for bs in band_specs:
        if bs.mode != "audio":
            continue
        dec = decode_audio(iq, (bs.tag_id, bs.center, bs.bandwidth))
        audio_out[bs.tag_id] = (dec.sample_rate, dec.samples)
        onset = _audio_onset(dec.samples, dec.sample_rate)
        if onset is not None:
            events.append(DecodedEvent(bs.tag_id, onset, "audio_segment", "",
                                       dec.event.confidence))
    events.sort(key=lambda e: (e.timestamp, e.tag_id))
    return events, audio_out, spec
