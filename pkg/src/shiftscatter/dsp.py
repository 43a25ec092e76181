"""Receiver signal chain: FIR filtering, translation, decimation, spectrogram,
wideband FM discrimination, rational resampling, band-power SNR measurement.

Batch transforms over IqBuffer / numpy arrays, double precision math. Filter
application is centered convolution, so linear-phase group delay is already
compensated and event timestamps line up with the input timeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import fft as sfft
from scipy.signal import fftconvolve, firwin, get_window, oaconvolve, resample_poly, welch

from .channel import IqBuffer

__all__ = [
    "DspError",
    "FirFilter",
    "Spectrogram",
    "design_lowpass",
    "design_bandpass",
    "apply_fir",
    "frequency_translate",
    "decimate",
    "spectrogram",
    "wbfm_demod",
    "resample",
    "measure_snr",
]

DB_FLOOR = -200.0
WINDOWS = ("hann", "hamming", "blackman", "rect")


class DspError(ValueError):
    """Invalid DSP parameters."""


@dataclass(frozen=True)
class FirFilter:
    taps: np.ndarray
    design_cutoff: float
    design_rate: float

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        object.__setattr__(self, "taps", taps)
        if not np.allclose(taps, taps[::-1], atol=1e-12):
            raise DspError("FIR taps must be symmetric (linear phase)")

    @property
    def dc_gain(self) -> float:
        return float(np.sum(self.taps))

    def response_at(self, freq: float) -> float:
        """Magnitude response at one frequency, in dB."""
        n = np.arange(len(self.taps))
        z = np.exp(-2j * np.pi * freq / self.design_rate * n)
        mag = abs(np.dot(self.taps, z))
        return 20.0 * math.log10(max(mag, 1e-12))


def _taps_for_transition(rate: float, transition: float) -> int:
    if transition <= 0:
        raise DspError("transition width must be positive")
    n = int(math.ceil(3.3 * rate / transition))
    return n + 1 if n % 2 == 0 else n


def design_lowpass(cutoff: float, rate: float, transition: float) -> FirFilter:
    """Windowed-sinc (Hamming) low-pass: >=50 dB stopband, <=0.5 dB ripple."""
    if not (0 < cutoff < rate / 2):
        raise DspError(f"cutoff {cutoff} Hz outside (0, {rate/2}) Hz")
    numtaps = _taps_for_transition(rate, transition)
    taps = firwin(numtaps, cutoff, window="hamming", fs=rate)
    filt = FirFilter(taps, design_cutoff=cutoff, design_rate=rate)
    if abs(filt.dc_gain - 1.0) > 0.01:
        raise DspError("low-pass DC gain out of tolerance")
    return filt


def design_bandpass(low: float, high: float, rate: float,
                    transition: float | None = None) -> FirFilter:
    """Windowed-sinc band-pass; transition defaults to a width the low edge allows."""
    if not (0 < low < high < rate / 2):
        raise DspError(f"band ({low}, {high}) Hz invalid at rate {rate} Hz")
    if transition is None:
        transition = min(0.1 * high, 2.0 * low)
    numtaps = _taps_for_transition(rate, transition)
    taps = firwin(numtaps, [low, high], window="hamming", pass_zero=False, fs=rate)
    return FirFilter(taps, design_cutoff=high, design_rate=rate)


def apply_fir(filt: FirFilter, samples: np.ndarray) -> np.ndarray:
    """Centered convolution (group delay compensated), input precision kept."""
    x = np.asarray(samples)
    if x.dtype in (np.complex64, np.float32):
        return oaconvolve(x, filt.taps.astype(np.float32), mode="same")
    return fftconvolve(x, filt.taps, mode="same")


def frequency_translate(iq: IqBuffer, offset: float) -> IqBuffer:
    """Multiply by exp(-j*2*pi*offset*t): shifts the spectrum down by offset."""
    if abs(offset) >= iq.sample_rate / 2:
        raise DspError(f"offset {offset} Hz outside Nyquist for rate {iq.sample_rate}")
    if offset == 0:
        return iq
    n = np.arange(len(iq.samples))
    mixer = np.exp(-2j * np.pi * (offset / iq.sample_rate) * n)
    if iq.samples.dtype == np.complex64:
        mixer = mixer.astype(np.complex64)
    return IqBuffer(iq.sample_rate, iq.samples * mixer)


def decimate(iq: IqBuffer, factor: int, anti_alias: FirFilter) -> IqBuffer:
    """Anti-alias filter then keep every factor-th sample."""
    if factor < 1 or int(factor) != factor:
        raise DspError("decimation factor must be a positive integer")
    if factor == 1:
        return IqBuffer(iq.sample_rate, apply_fir(anti_alias, iq.samples))
    if anti_alias.design_cutoff > iq.sample_rate / (2 * factor):
        raise DspError(
            f"anti-alias cutoff {anti_alias.design_cutoff} Hz would alias at "
            f"output rate {iq.sample_rate / factor} Hz")
    filtered = apply_fir(anti_alias, iq.samples)
    return IqBuffer(iq.sample_rate / factor, filtered[::factor])


@dataclass(frozen=True)
class Spectrogram:
    """Short-time magnitude spectrum in dB, frames x fftshifted bins."""

    frame_rate: float
    bin_width: float
    origin_offset: float        # center frequency of bin 0
    magnitudes: np.ndarray
    start_time: float = 0.0     # center time of frame 0

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def n_bins(self) -> int:
        return self.magnitudes.shape[1]

    def freqs(self) -> np.ndarray:
        return self.origin_offset + self.bin_width * np.arange(self.n_bins)

    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.n_frames) / self.frame_rate

    def band_slice(self, band: tuple[float, float]) -> slice:
        lo, hi = band
        if hi <= lo:
            raise DspError(f"empty band ({lo}, {hi})")
        freqs = self.freqs()
        if hi < freqs[0] or lo > freqs[-1]:
            raise DspError(f"band ({lo}, {hi}) Hz outside the spectrogram span")
        i0 = int(np.searchsorted(freqs, lo, side="left"))
        i1 = int(np.searchsorted(freqs, hi, side="right"))
        if i1 <= i0:
            raise DspError(f"band ({lo}, {hi}) Hz narrower than one bin")
        return slice(i0, i1)


def spectrogram(iq: IqBuffer, nfft: int = 4096, hop: int | None = None,
                window: str = "hann",
                band: tuple[float, float] | None = None) -> Spectrogram:
    """Magnitude-dB short-time spectrum; a steady tone owns its nearest bin.

    With `band` set, only the bins covering that frequency span are kept
    (origin_offset then points at the first kept bin); the FFT itself is
    always full width.
    """
    if nfft <= 0 or (nfft & (nfft - 1)) != 0:
        raise DspError("nfft must be a power of two")
    hop = nfft // 4 if hop is None else hop
    if not (0 < hop <= nfft):
        raise DspError("hop must be in (0, nfft]")
    if window not in WINDOWS:
        raise DspError(f"window {window!r} not one of {WINDOWS}")
    x = iq.samples
    if len(x) < nfft:
        raise DspError(f"buffer of {len(x)} samples shorter than nfft {nfft}")
    win = (np.ones(nfft) if window == "rect"
           else get_window(window, nfft, fftbins=True))
    if x.dtype == np.complex64:
        win = win.astype(np.float32)
    bin_width = iq.sample_rate / nfft
    all_freqs = -iq.sample_rate / 2 + bin_width * np.arange(nfft)
    if band is None:
        keep = slice(0, nfft)
    else:
        lo, hi = band
        if hi <= lo or hi < all_freqs[0] or lo > all_freqs[-1]:
            raise DspError(f"band ({lo}, {hi}) Hz invalid for this spectrogram")
        i0 = int(np.searchsorted(all_freqs, lo, side="left"))
        i1 = max(int(np.searchsorted(all_freqs, hi, side="right")), i0 + 1)
        keep = slice(i0, i1)
    n_bins = keep.stop - keep.start
    n_frames = 1 + (len(x) - nfft) // hop
    mags = np.empty((n_frames, n_bins), dtype=np.float32)
    scale = 1.0 / np.sum(win)
    floor = 10.0 ** (DB_FLOOR / 20.0)
    block = max(1, (1 << 24) // (nfft * x.itemsize))   # bound transient memory
    for f0 in range(0, n_frames, block):
        f1 = min(f0 + block, n_frames)
        idx = f0 * hop + np.arange(f1 - f0)[:, None] * hop + np.arange(nfft)[None, :]
        frames = x[idx]
        frames *= win
        spec = np.fft.fftshift(sfft.fft(frames, axis=1), axes=1)[:, keep]
        mag = np.abs(spec)
        mag *= scale
        np.maximum(mag, floor, out=mag)
        np.log10(mag, out=mag)
        mag *= 20.0
        mags[f0:f1] = mag
    return Spectrogram(
        frame_rate=iq.sample_rate / hop,
        bin_width=bin_width,
        origin_offset=float(all_freqs[keep.start]),
        magnitudes=mags,
        start_time=(nfft / 2) / iq.sample_rate,
    )


def wbfm_demod(iq: IqBuffer, deviation: float) -> np.ndarray:
    """Phase-difference discriminator normalized to the stated deviation.

    y[n] = arg(x[n] * conj(x[n-1])) * rate / (2*pi*deviation); the first
    sample is zero so the stream stays aligned with the input.
    """
    if deviation <= 0:
        raise DspError("deviation must be positive")
    x = iq.samples
    y = np.empty(len(x), dtype=np.float64)
    y[0] = 0.0
    y[1:] = np.angle(x[1:] * np.conj(x[:-1]))
    y[1:] *= iq.sample_rate / (2.0 * np.pi * deviation)
    return y


def resample(samples: np.ndarray, in_rate: float, out_rate: float) -> np.ndarray:
    """Polyphase rational resampling; preserves content below min(rates)/2."""
    if in_rate <= 0 or out_rate <= 0:
        raise DspError("rates must be positive")
    if in_rate == out_rate:
        return np.asarray(samples, dtype=np.float64).copy()
    if abs(in_rate - round(in_rate)) > 1e-6 or abs(out_rate - round(out_rate)) > 1e-6:
        raise DspError("non-integral rates unsupported")
    ratio = Fraction(int(round(out_rate)), int(round(in_rate)))
    if ratio.numerator > 1000 or ratio.denominator > 1000:
        raise DspError(
            f"rate ratio {ratio} reduces to terms over 1000; unsupported")
    return resample_poly(np.asarray(samples, dtype=np.float64),
                         ratio.numerator, ratio.denominator)


def measure_snr(iq: IqBuffer, signal_band: tuple[float, float],
                noise_band: tuple[float, float]) -> float:
    """Band power over density-matched noise power, via Welch averaging.

    The averaging length targets 64 segments; the noise band sets the
    density that is scaled to the signal band's width.
    """
    s_lo, s_hi = signal_band
    n_lo, n_hi = noise_band
    if s_hi <= s_lo or n_hi <= n_lo:
        raise DspError("bands must have positive width")
    if not (s_hi <= n_lo or n_hi <= s_lo):
        raise DspError("signal and noise bands overlap")
    nyq = iq.sample_rate / 2
    for lo, hi in (signal_band, noise_band):
        if lo < -nyq or hi > nyq:
            raise DspError(f"band ({lo}, {hi}) Hz outside Nyquist")
    nperseg = 1 << max(8, int(math.log2(max(len(iq.samples) // 32, 256))))
    nperseg = min(nperseg, 1 << 16, len(iq.samples))
    freqs, psd = welch(iq.samples, fs=iq.sample_rate, nperseg=nperseg,
                       return_onesided=False, detrend=False)
    freqs = np.fft.fftshift(freqs)
    psd = np.fft.fftshift(psd)
    sig_mask = (freqs >= s_lo) & (freqs <= s_hi)
    noise_mask = (freqs >= n_lo) & (freqs <= n_hi)
    if not sig_mask.any() or not noise_mask.any():
        raise DspError("band narrower than the spectral resolution")
    df = freqs[1] - freqs[0]
    p_signal = float(np.sum(psd[sig_mask]) * df)
    noise_density = float(np.mean(psd[noise_mask]))
    p_noise_matched = noise_density * (s_hi - s_lo)
    if p_noise_matched <= 0:
        raise DspError("noise band measured at zero power")
    return 10.0 * math.log10(p_signal / p_noise_matched)
