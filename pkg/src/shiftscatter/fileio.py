"""Persistent formats: cf32 IQ, 16-bit WAV, event logs, spectrogram CSV.

cf32 is the bare SDR interchange convention: interleaved 32-bit little-endian
IEEE-754 floats, I then Q, no header; the sample rate travels in the sidecar
manifest. WAV output is 16-bit PCM mono at 48 kHz, peak-normalized to
-3 dBFS. The event log is line-delimited, tab-separated, fixed field order
for test diffing.
"""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .channel import IqBuffer
from .decoders import DecodedEvent
from .dsp import Spectrogram

__all__ = [
    "FormatError",
    "write_cf32",
    "read_cf32",
    "write_wav",
    "read_wav",
    "write_event_log",
    "read_event_log",
    "write_spectrogram_csv",
]

WAV_RATE = 48000
WAV_PEAK = 10.0 ** (-3.0 / 20.0)   # -3 dBFS


class FormatError(ValueError):
    """Malformed file contents."""


def write_cf32(path: str | Path, iq: IqBuffer) -> None:
    data = np.ascontiguousarray(iq.samples.astype(np.complex64))
    data.view(np.float32).astype("<f4").tofile(str(path))


def read_cf32(path: str | Path, sample_rate: float) -> IqBuffer:
    raw = np.fromfile(str(path), dtype="<f4")
    if raw.size % 2 != 0:
        raise FormatError(f"{path}: odd float count, not interleaved I/Q")
    if raw.size == 0:
        raise FormatError(f"{path}: empty IQ file")
    if not np.isfinite(raw).all():
        raise FormatError(f"{path}: NaN or infinity in IQ data")
    samples = raw.astype(np.float32).view(np.complex64)
    return IqBuffer(sample_rate, samples)


def write_wav(path: str | Path, samples: np.ndarray, rate: int = WAV_RATE) -> None:
    x = np.asarray(samples, dtype=np.float64)
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    if peak > 0:
        x = x * (WAV_PEAK / peak)
    pcm = np.clip(np.round(x * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(rate))
        w.writeframes(pcm.tobytes())


def read_wav(path: str | Path) -> tuple[int, np.ndarray]:
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1 or w.getsampwidth() != 2:
            raise FormatError(f"{path}: expected 16-bit mono WAV")
        rate = w.getframerate()
        raw = w.readframes(w.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2")
    return rate, pcm.astype(np.float64) / 32767.0


def write_event_log(path: str | Path, events: list[DecodedEvent]) -> None:
    lines = []
    for e in events:
        if "\t" in e.payload or "\n" in e.payload:
            raise FormatError(f"event payload {e.payload!r} not log-safe")
        lines.append(f"{e.timestamp:.6f}\t{e.tag_id}\t{e.kind}\t{e.payload}"
                     f"\t{e.confidence:.4f}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_event_log(path: str | Path) -> list[DecodedEvent]:
    events = []
    for i, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise FormatError(f"{path}:{i}: expected 5 tab-separated fields")
        t, tag_id, kind, payload, conf = parts
        try:
            events.append(DecodedEvent(tag_id, float(t), kind, payload, float(conf)))
        except ValueError as exc:
            raise FormatError(f"{path}:{i}: {exc}") from exc
    return events


def write_spectrogram_csv(path: str | Path, spec: Spectrogram) -> None:
    freqs = spec.freqs()
    header = "t_seconds," + ",".join(f"f_{f:.0f}" for f in freqs)
    times = spec.times()
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for i in range(spec.n_frames):
            row = ",".join(f"{v:.2f}" for v in spec.magnitudes[i])
            fh.write(f"{times[i]:.6f},{row}\n")
