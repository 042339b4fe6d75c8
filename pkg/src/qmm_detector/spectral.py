"""Power spectra, autocorrelations and a peak signal-to-noise estimate.

Spectra are one-sided, in angular frequency, normalized so that
``sum(psd) * d_omega`` equals the variance of the input series.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import signal


@dataclass
class Spectrum:
    freqs: np.ndarray
    psd: np.ndarray
    window: str = "hann"
    segments: int = 1
    record_length: int = 0
    name: str = ""

    @property
    def d_omega(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    def band_power(self, lo: float, hi: float) -> float:
        mask = (self.freqs >= lo) & (self.freqs <= hi)
        return float(self.psd[mask].sum() * self.d_omega)

    def total_power(self) -> float:
        return float(self.psd.sum() * self.d_omega)

    def peak_frequency(self, lo: float = 0.0, hi: float = np.inf, exclude: Sequence[tuple] = ()) -> float:
        mask = (self.freqs >= lo) & (self.freqs <= hi)
        for a, b in exclude:
            mask &= ~((self.freqs >= a) & (self.freqs <= b))
        if not mask.any():
            raise ValueError("no bins in the requested range")
        idx = np.flatnonzero(mask)
        return float(self.freqs[idx[np.argmax(self.psd[idx])]])


def psd(series, dt: float, window: str = "hann", segments: int = 8, overlap: float = 0.5,
        name: str = "") -> Spectrum:
    """Welch estimate with ``segments`` overlapping segments.

    The segment length is chosen so that ``segments`` segments with the given
    fractional overlap tile the record; each segment's mean is removed.
    Leading axes of ``series`` are averaged after transforming (time is the
    last axis).
    """
    x = np.asarray(series, dtype=float)
    n = x.shape[-1]
    if segments < 1 or n < 2 * segments:
        raise ValueError(f"series of length {n} too short for {segments} segments")
    nper = int(n / (1 + (segments - 1) * (1 - overlap)))
    nover = int(round(nper * overlap))
    f, p = signal.welch(x, fs=1.0 / dt, window=window, nperseg=nper, noverlap=nover,
                        detrend="constant", scaling="density", return_onesided=True, axis=-1)
    p = p.reshape(-1, p.shape[-1]).mean(axis=0) if p.ndim > 1 else p
    return Spectrum(2 * math.pi * f, p / (2 * math.pi), window, segments, n, name)


def mean_spectrum(spectra: Sequence[Spectrum], name: str | None = None) -> Spectrum:
    first = spectra[0]
    return Spectrum(first.freqs, np.mean([s.psd for s in spectra], axis=0), first.window, first.segments,
                    first.record_length, first.name if name is None else name)


def autocorrelation(series) -> np.ndarray:
    """Biased estimate ``c[k] = (1/n) sum_t (x_t - m)(x_{t+k} - m)``, ``k = 0..n-1``."""
    x = np.asarray(series, dtype=float)
    x = x - x.mean()
    n = len(x)
    nfft = 1 << (2 * n - 1).bit_length()
    fx = np.fft.rfft(x, nfft)
    return np.fft.irfft(fx * fx.conj(), nfft)[:n] / n


def spectrum_from_autocorrelation(acf: np.ndarray, dt: float, name: str = "") -> Spectrum:
    """One-sided angular-frequency spectrum from a biased autocorrelation."""
    acf = np.asarray(acf, dtype=float)
    n = len(acf)
    two_sided = np.r_[acf, 0.0, acf[:0:-1]]
    s = np.fft.rfft(two_sided).real * dt / (2 * math.pi)
    s = np.clip(s, 0.0, None)
    freqs = 2 * math.pi * np.fft.rfftfreq(len(two_sided), dt)
    s[1:] *= 2.0
    if len(two_sided) % 2 == 0:
        s[-1] /= 2.0
    return Spectrum(freqs, s, "boxcar", 1, n, name)


@dataclass
class SnrReport:
    signal_freq: float
    signal_power: float
    baseline_power: float
    snr: float
    window_bins: int
    method: str = field(default="window-sum / (median baseline x window width)")

    @property
    def excess_power(self) -> float:
        return max(self.signal_power - self.baseline_power, 0.0)

    @property
    def amplitude(self) -> float:
        """Amplitude of the tone that would carry the excess power."""
        return math.sqrt(2.0 * self.excess_power)

    def as_text(self) -> str:
        return (f"signal_freq={self.signal_freq:.6g} signal_power={self.signal_power:.6e} "
                f"baseline_power={self.baseline_power:.6e} snr={self.snr:.6g} "
                f"amplitude={self.amplitude:.6e} window_bins={self.window_bins} method={self.method}")


def snr(spectrum: Spectrum, signal_freq: float, signal_halfwidth: int = 1,
        baseline_band=None) -> SnrReport:
    """Power in the ``2 h + 1`` bins around ``signal_freq`` over the median
    power density of the baseline band scaled to the same width.

    ``baseline_band`` is one ``(lo, hi)`` interval or a list of them (e.g.
    flanks on both sides of the peak); bins of the signal window are dropped
    from it.
    """
    f = spectrum.freqs
    if not f[0] <= signal_freq <= f[-1]:
        raise ValueError(f"signal frequency {signal_freq} outside the spectrum grid")
    i0 = int(np.argmin(np.abs(f - signal_freq)))
    lo, hi = max(i0 - signal_halfwidth, 0), min(i0 + signal_halfwidth, len(f) - 1)
    width = hi - lo + 1
    dw = spectrum.d_omega
    sig = float(spectrum.psd[lo:hi + 1].sum() * dw)
    if baseline_band is None:
        raise ValueError("baseline_band is required")
    bands = [baseline_band] if np.ndim(baseline_band[0]) == 0 else list(baseline_band)
    mask = np.zeros(len(f), dtype=bool)
    for a, b in bands:
        mask |= (f >= a) & (f <= b)
    mask[lo:hi + 1] = False
    if not mask.any():
        raise ValueError("baseline band contains no bins outside the signal window")
    base = float(np.median(spectrum.psd[mask]) * width * dw)
    if base <= 0:
        raise ValueError("baseline power is zero")
    return SnrReport(float(f[i0]), sig, base, sig / base, width)


def fit_loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])
