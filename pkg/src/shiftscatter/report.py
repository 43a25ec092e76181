"""Figure rendering for the report path.

Every figure goes to a file (Agg backend, no display): spectrogram heatmaps
with event markers, per-tag peak tracks against their landmarks, decoded
audio waveform/spectrum pairs, and the printed-table frequency check. These
render alongside the delimited outputs (event log, spectrogram CSV) so a run
can be reviewed without re-decoding anything.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .decoders import DecodedEvent, TagBandSpec, peak_track
from .dsp import Spectrogram
from .tables import RowCheck

__all__ = ["render_spectrogram", "render_tracks", "render_audio",
           "render_table_check", "render_decode_report"]

MAX_HEAT_FRAMES = 1200     # decimate long spectrograms to keep files small


def _decimate_frames(spec: Spectrogram) -> tuple[np.ndarray, np.ndarray]:
    step = max(1, spec.n_frames // MAX_HEAT_FRAMES)
    return spec.magnitudes[::step], spec.times()[::step]


def render_spectrogram(spec: Spectrogram, path: Path,
                       events: list[DecodedEvent] | None = None,
                       title: str = "spectrogram") -> Path:
    mags, times = _decimate_frames(spec)
    freqs = spec.freqs()
    fig, ax = plt.subplots(figsize=(10, 5))
    vmax = float(np.max(mags))
    im = ax.imshow(mags.T, origin="lower", aspect="auto",
                   extent=(times[0], times[-1], freqs[0] / 1e3, freqs[-1] / 1e3),
                   vmin=vmax - 70, vmax=vmax, cmap="magma")
    fig.colorbar(im, ax=ax, label="dB")
    if events:
        for e in events:
            ax.axvline(e.timestamp, color="cyan", lw=0.6, alpha=0.6)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("offset from carrier [kHz]")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def render_tracks(spec: Spectrogram, band_specs: list[TagBandSpec],
                  path: Path) -> Path | None:
    discrete = [b for b in band_specs if b.mode != "audio"]
    if not discrete:
        return None
    fig, axes = plt.subplots(len(discrete), 1, figsize=(10, 2.2 * len(discrete)),
                             sharex=True, squeeze=False)
    for ax, bs in zip(axes[:, 0], discrete):
        track = peak_track(spec, bs.observation_band())
        ax.plot(track.times(), track.freqs / 1e3, ".", ms=1.5, color="tab:blue")
        for label, f in bs.landmarks.items():
            ax.axhline(f / 1e3, color="gray", lw=0.6, ls="--")
            ax.annotate(label, (0.0, f / 1e3), fontsize=7, color="gray")
        for d, (lo, hi) in bs.digit_bands.items():
            ax.axhspan(lo / 1e3, hi / 1e3, color="tab:green", alpha=0.15)
            ax.annotate(str(d), (0.0, lo / 1e3), fontsize=7, color="tab:green")
        ax.set_ylabel(f"{bs.tag_id}\n[kHz]")
    axes[-1, 0].set_xlabel("time [s]")
    fig.suptitle("peak tracks")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def render_audio(tag_id: str, rate: float, samples: np.ndarray, path: Path) -> Path:
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(10, 5))
    t = np.arange(len(samples)) / rate
    ax1.plot(t, samples, lw=0.4)
    ax1.set_xlabel("time [s]")
    ax1.set_ylabel("amplitude")
    ax1.set_title(f"{tag_id}: demodulated audio")
    if len(samples) >= 256:
        win = np.hanning(len(samples))
        spec = 20 * np.log10(np.maximum(np.abs(np.fft.rfft(samples * win)), 1e-9))
        freqs = np.fft.rfftfreq(len(samples), 1 / rate)
        sel = freqs <= 6000
        ax2.plot(freqs[sel], spec[sel], lw=0.7)
        ax2.set_xlabel("frequency [Hz]")
        ax2.set_ylabel("dB")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def render_table_check(checks: list[RowCheck], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(8, 4))
    xs = np.arange(len(checks))
    errors = [c.relative_error * 100 for c in checks]
    colors = ["tab:red" if c.status == "FAIL"
              else "tab:orange" if c.status == "FLAGGED-ANOMALOUS"
              else "tab:green" for c in checks]
    ax.bar(xs, errors, color=colors)
    ax.set_xticks(xs, [str(c.f_khz) for c in checks])
    ax.set_yscale("log")
    ax.axhline(0.05, color="gray", ls="--", lw=0.7)
    ax.axhline(2.0, color="gray", ls=":", lw=0.7)
    ax.set_xlabel("table row [kHz]")
    ax.set_ylabel("formula vs printed error [%]")
    ax.set_title("printed-table frequency check")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def render_decode_report(outdir: Path, spec: Spectrogram | None,
                         band_specs: list[TagBandSpec],
                         events: list[DecodedEvent],
                         audio: dict[str, tuple[float, np.ndarray]]) -> list[Path]:
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    if spec is not None:
        written.append(render_spectrogram(spec, outdir / "spectrogram.png",
                                          events=events))
        tracked = render_tracks(spec, band_specs, outdir / "peak_tracks.png")
        if tracked:
            written.append(tracked)
    for tag_id, (rate, samples) in audio.items():
        written.append(render_audio(tag_id, rate, samples,
                                    outdir / f"audio_{tag_id}.png"))
    return written
