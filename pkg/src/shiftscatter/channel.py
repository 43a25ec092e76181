"""Complex-baseband channel: subcarrier synthesis, leakage, noise, SNR model.

Each tag's frequency track becomes a real cosine subcarrier (the resistive
switch modulates amplitude symmetrically, so both sidebands exist and the
receiver picks the positive one). Per-tag amplitude is set from a measured
SNR-versus-distance anchor curve rather than an analytic path-loss law: the
published anchors (45 dB at 3 ft, 38 dB at 9 ft, 15 dB at 49 ft) drop too
slowly for a d^2 law and too fast for d^4, so measurement wins and the model
interpolates linearly against log10(distance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tags import FrequencyTrack

__all__ = [
    "ChannelParams",
    "IqBuffer",
    "ChannelError",
    "ClippingError",
    "DEFAULT_SNR_ANCHORS",
    "snr_at_distance",
    "distance_for_snr",
    "subcarrier_amplitude",
    "synthesize",
    "phase_accumulate",
    "mix_buffers",
]

DEFAULT_SNR_ANCHORS = ((3.0, 45.0), (9.0, 38.0), (49.0, 15.0))
DEFAULT_NOISE_DENSITY_DB = -130.0   # dBFS per hertz
DISCRETE_BANDWIDTH = 20e3
AUDIO_BANDWIDTH = 120e3
CHUNK = 1 << 22                     # synthesis block size, keeps peak RSS low


class ChannelError(ValueError):
    """Invalid channel parameters or buffer mismatch."""


class ClippingError(ChannelError):
    """Signal budget exceeds full scale; never saturate silently."""


@dataclass(frozen=True)
class IqBuffer:
    """Uniformly sampled complex baseband, unit full scale."""

    sample_rate: float
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if not np.iscomplexobj(samples):
            samples = samples.astype(np.complex128)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate <= 0:
            raise ChannelError("sample_rate must be positive")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def check_full_scale(self):
        peak = float(np.max(np.abs(self.samples))) if len(self.samples) else 0.0
        if peak > 1.0:
            raise ClippingError(f"buffer peaks at {peak:.3f}, beyond full scale")
        return self


@dataclass(frozen=True)
class ChannelParams:
    sample_rate: float
    duration: float
    carrier_leak_amplitude: float = 0.3
    noise_floor_density: float = DEFAULT_NOISE_DENSITY_DB   # dBFS/Hz
    snr_anchors: tuple[tuple[float, float], ...] = DEFAULT_SNR_ANCHORS
    tag_distances: dict[str, float] = field(default_factory=dict)
    tag_bandwidths: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        anchors = tuple(sorted((float(d), float(s)) for d, s in self.snr_anchors))
        object.__setattr__(self, "snr_anchors", anchors)
        if len(anchors) < 2:
            raise ChannelError("need at least two SNR anchors")
        snrs = [s for _, s in anchors]
        if any(b >= a for a, b in zip(snrs, snrs[1:])):
            raise ChannelError("SNR anchors must strictly decrease with distance")
        if self.duration <= 0:
            raise ChannelError("duration must be positive")
        if not (0.0 <= self.carrier_leak_amplitude < 1.0):
            raise ChannelError("carrier leak must sit inside full scale")
        needed = 2e6 if any(b >= AUDIO_BANDWIDTH for b in self.tag_bandwidths.values()) else 1e6
        if self.sample_rate < needed:
            raise ChannelError(
                f"sample_rate {self.sample_rate:.0f} Hz under the {needed:.0f} Hz floor "
                "for this tag mix")

    @property
    def n_samples(self) -> int:
        return int(round(self.sample_rate * self.duration))

    def bandwidth_of(self, tag_id: str) -> float:
        return self.tag_bandwidths.get(tag_id, DISCRETE_BANDWIDTH)

    def noise_density_linear(self) -> float:
        return 10.0 ** (self.noise_floor_density / 10.0)


def snr_at_distance(params: ChannelParams, d: float) -> float:
    """Piecewise-linear interpolation of SNR against log10(distance)."""
    anchors = params.snr_anchors
    if not (anchors[0][0] <= d <= anchors[-1][0]):
        raise ChannelError(
            f"distance {d} ft outside the measured anchor range "
            f"[{anchors[0][0]}, {anchors[-1][0]}] ft; refusing to extrapolate")
    logs = np.log10([a[0] for a in anchors])
    snrs = [a[1] for a in anchors]
    return float(np.interp(math.log10(d), logs, snrs))


def distance_for_snr(params: ChannelParams, snr_db: float) -> float:
    """Inverse of snr_at_distance (anchor curve is strictly monotone)."""
    anchors = params.snr_anchors
    if not (anchors[-1][1] <= snr_db <= anchors[0][1]):
        raise ChannelError(f"SNR {snr_db} dB outside the anchor range")
    logs = np.log10([a[0] for a in anchors])
    snrs = np.array([a[1] for a in anchors])
    return float(10.0 ** np.interp(-snr_db, -snrs, logs))


def subcarrier_amplitude(params: ChannelParams, tag_id: str) -> float:
    """Amplitude that puts the tag's positive sideband at its anchor SNR.

    In-band SNR convention: subcarrier power in the allocated channel width
    over the noise power in that same width. A real cosine of amplitude a
    puts a^2/4 into each sideband.
    """
    if tag_id not in params.tag_distances:
        raise ChannelError(f"no distance assigned for tag {tag_id!r}")
    snr_db = snr_at_distance(params, params.tag_distances[tag_id])
    noise_power = params.noise_density_linear() * params.bandwidth_of(tag_id)
    return math.sqrt(4.0 * noise_power * 10.0 ** (snr_db / 10.0))


def phase_accumulate(track: FrequencyTrack) -> np.ndarray:
    """Running phase in radians: phi[n] = phi[n-1] + 2*pi*f[n]/Fs, phi[0] = 0."""
    f = np.asarray(track.samples, dtype=np.float64)
    phi = np.cumsum(f) * (2.0 * np.pi / track.sample_rate)
    if len(phi):
        phi -= phi[0]   # phi[0] = 0; increments use f[1..n]
    return phi


def synthesize(tracks: dict[str, FrequencyTrack], params: ChannelParams,
               seed: int | None = None, noise: bool = True,
               dtype=np.complex128) -> IqBuffer:
    """Stack tag subcarriers, carrier leak and AWGN into one IQ buffer.

    s[n] = leak + sum_k a_k * cos(phi_k[n]) * active_k[n] + w[n], with phi_k
    the running integral of track k. Inactive samples emit nothing. Noise is
    complex white Gaussian at the configured density; a fixed seed reproduces
    the buffer exactly.
    """
    n = params.n_samples
    for tag_id, track in tracks.items():
        if track.sample_rate != params.sample_rate:
            raise ChannelError(f"track {tag_id!r} rate {track.sample_rate} != channel rate")
        if len(track.samples) != n:
            raise ChannelError(
                f"track {tag_id!r} has {len(track.samples)} samples, expected {n}")
        f_top = float(np.max(np.abs(track.samples))) if len(track.samples) else 0.0
        if f_top > params.sample_rate / 2:
            raise ChannelError(
                f"track {tag_id!r} reaches {f_top:.0f} Hz, beyond Nyquist at "
                f"rate {params.sample_rate:.0f} Hz")

    amplitudes = {tag_id: subcarrier_amplitude(params, tag_id) for tag_id in tracks}
    budget = params.carrier_leak_amplitude + sum(amplitudes.values())
    if budget > 1.0:
        listing = ", ".join(f"{t}: {a:.3f}" for t, a in sorted(amplitudes.items()))
        raise ClippingError(
            f"amplitude budget {budget:.3f} exceeds full scale "
            f"(leak {params.carrier_leak_amplitude:.3f}; {listing})")

    if dtype not in (np.complex64, np.complex128):
        raise ChannelError("dtype must be complex64 or complex128")
    real_dtype = np.float32 if dtype == np.complex64 else np.float64
    out = np.full(n, params.carrier_leak_amplitude, dtype=dtype)
    step = 2.0 * np.pi / params.sample_rate
    for tag_id, track in tracks.items():
        a = amplitudes[tag_id]
        # phi[n] = step * (cumsum(f)[n] - f[0]); carry keeps chunks continuous
        carry = 0.0
        for start in range(0, n, CHUNK):
            stop = min(start + CHUNK, n)
            f = np.asarray(track.samples[start:stop], dtype=np.float64)
            phi = np.cumsum(f) * step
            if start == 0 and len(phi):
                carry = -phi[0]
            phi += carry
            carry = float(phi[-1]) if len(phi) else carry
            seg = np.cos(phi)
            seg *= a
            mask = track.active_mask[start:stop]
            if not mask.all():
                seg *= mask
            out[start:stop].real += seg.astype(real_dtype, copy=False)
    if noise:
        rng = np.random.default_rng(seed)
        sigma = math.sqrt(params.noise_density_linear() * params.sample_rate)
        scale = sigma / math.sqrt(2.0)
        for start in range(0, n, CHUNK):
            stop = min(start + CHUNK, n)
            block = rng.standard_normal(2 * (stop - start),
                                        dtype=real_dtype).view(dtype)
            block *= scale
            out[start:stop] += block
    return IqBuffer(params.sample_rate, out).check_full_scale()


def mix_buffers(buffers: list[IqBuffer]) -> IqBuffer:
    """Pointwise complex sum with rate/length and full-scale checks."""
    if not buffers:
        raise ChannelError("nothing to mix")
    rate = buffers[0].sample_rate
    length = len(buffers[0])
    for b in buffers[1:]:
        if b.sample_rate != rate:
            raise ChannelError("sample rates differ")
        if len(b) != length:
            raise ChannelError("buffer lengths differ")
    total = np.zeros(length, dtype=np.complex128)
    for b in buffers:
        total += b.samples
    return IqBuffer(rate, total).check_full_scale()
