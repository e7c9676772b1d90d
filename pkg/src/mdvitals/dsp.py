"""One-dimensional kernels for slow-time vital-sign signals.

Every function takes and returns :class:`SlowTimeSeries` unless noted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from .config import ConfigError, DataError, SlowTimeSeries

# Daubechies-4 (8 taps) analysis low-pass filter.
DB4_DEC_LO = np.array(
    [
        -0.010597401785069032,
        0.0328830116668852,
        0.030841381835560764,
        -0.18703481171909309,
        -0.027983769416859854,
        0.6308807679298589,
        0.7148465705529157,
        0.2303778133088965,
    ]
)
DB4_DEC_HI = (-1.0) ** np.arange(8)[::-1] * DB4_DEC_LO[::-1]
DB4_REC_LO = DB4_DEC_LO[::-1]
DB4_REC_HI = DB4_DEC_HI[::-1]


def soft_threshold(w, threshold: float):
    """``sign(w) * max(|w| - T, 0)``."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    w = np.asarray(w, dtype=float)
    return np.sign(w) * np.maximum(np.abs(w) - threshold, 0.0)


def dwt_step(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Single-level db4 analysis with symmetric (half-sample) extension.

    Returns approximation and detail coefficients, each of length
    ``(len(x) + 7) // 2``.
    """
    pad = len(DB4_DEC_LO) - 1
    xe = np.pad(x, pad, mode="symmetric")
    approx = np.convolve(xe, DB4_DEC_LO, "valid")[1::2]
    detail = np.convolve(xe, DB4_DEC_HI, "valid")[1::2]
    return approx, detail


def idwt_step(approx: np.ndarray, detail: np.ndarray, length: int) -> np.ndarray:
    """Inverse of :func:`dwt_step`, trimmed to ``length`` samples."""
    n = len(approx)
    up_a = np.zeros(2 * n)
    up_d = np.zeros(2 * n)
    up_a[1::2] = approx
    up_d[1::2] = detail
    y = np.convolve(up_a, DB4_REC_LO) + np.convolve(up_d, DB4_REC_HI)
    offset = len(DB4_REC_LO) - 1
    return y[offset : offset + length]


def wavedec(x, levels: int = 3) -> tuple[np.ndarray, list[np.ndarray], list[int]]:
    """Multi-level decomposition; returns ``(approx, details finest-first, lengths)``."""
    x = np.asarray(x, dtype=float)
    if len(x) < 2**levels:
        raise DataError(f"signal of length {len(x)} too short for {levels} levels")
    details, lengths = [], []
    approx = x
    for _ in range(levels):
        lengths.append(len(approx))
        approx, d = dwt_step(approx)
        details.append(d)
    return approx, details, lengths


def waverec(approx: np.ndarray, details: list[np.ndarray], lengths: list[int]) -> np.ndarray:
    for d, n in zip(reversed(details), reversed(lengths)):
        approx = idwt_step(approx, d, n)
    return approx


def universal_threshold(finest_detail: np.ndarray, n: int) -> float:
    """``sigma * sqrt(2 ln N)`` with ``sigma = median(|d1|) / 0.6745``."""
    sigma = np.median(np.abs(finest_detail)) / 0.6745
    return float(sigma * np.sqrt(2.0 * np.log(n)))


def dwt_denoise(x: SlowTimeSeries, levels: int = 3, threshold: float | None = None) -> SlowTimeSeries:
    """Soft-threshold wavelet denoising with db4.

    All detail levels share one universal threshold estimated from the
    finest level. Pass ``threshold`` to override it (0 gives the identity).
    """
    approx, details, lengths = wavedec(x.values, levels)
    t = universal_threshold(details[0], len(x)) if threshold is None else threshold
    details = [soft_threshold(d, t) for d in details]
    return x.replace(waverec(approx, details, lengths))


@dataclass(frozen=True)
class BandpassSpec:
    low_hz: float
    high_hz: float
    order: int = 4

    def validate(self, sample_rate_hz: float) -> None:
        if not 0 < self.low_hz < self.high_hz < sample_rate_hz / 2:
            raise ConfigError(
                f"band ({self.low_hz}, {self.high_hz}) Hz must satisfy 0 < low < high < fs/2 = {sample_rate_hz / 2}"
            )
        if self.order < 1:
            raise ConfigError("filter order must be >= 1")


def butter_bandpass_sos(spec: BandpassSpec, sample_rate_hz: float) -> np.ndarray:
    spec.validate(sample_rate_hz)
    sos = signal.butter(spec.order, [spec.low_hz, spec.high_hz], btype="bandpass", fs=sample_rate_hz, output="sos")
    poles = np.concatenate([np.roots(s[3:]) for s in sos])
    if np.any(np.abs(poles) >= 1.0):
        raise ConfigError("unstable bandpass design")
    return sos


def butter_bandpass_filtfilt(x: SlowTimeSeries, spec: BandpassSpec) -> SlowTimeSeries:
    """Zero-phase Butterworth bandpass with odd-reflection edge padding.

    The forward-backward and backward-forward passes differ only through
    their edge transients; averaging the two makes the operator commute
    with time reversal.
    """
    sos = butter_bandpass_sos(spec, x.sample_rate_hz)
    padlen = 3 * (2 * len(sos) + 1)
    if len(x) <= padlen:
        raise DataError(f"signal of length {len(x)} too short for filtfilt (needs > {padlen})")
    fb = signal.sosfiltfilt(sos, x.values, padtype="odd", padlen=padlen)
    bf = signal.sosfiltfilt(sos, x.values[::-1], padtype="odd", padlen=padlen)[::-1]
    return x.replace(0.5 * (fb + bf))


def median_filter(x: SlowTimeSeries, kernel: int = 5) -> SlowTimeSeries:
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError("median kernel must be a positive odd integer")
    return x.replace(ndimage.median_filter(x.values, size=kernel, mode="reflect"))


def savitzky_golay(x: SlowTimeSeries, window: int = 11, poly_order: int = 3) -> SlowTimeSeries:
    if window < 1 or window % 2 == 0:
        raise ValueError("Savitzky-Golay window must be a positive odd integer")
    if not 0 <= poly_order < window:
        raise ValueError("poly_order must satisfy 0 <= poly_order < window")
    if len(x) < window:
        raise DataError("signal shorter than the smoothing window")
    return x.replace(signal.savgol_filter(x.values, window, poly_order, mode="interp"))


def savitzky_golay_coefficients(window: int = 11, poly_order: int = 3) -> np.ndarray:
    return signal.savgol_coeffs(window, poly_order, use="dot")


@dataclass(frozen=True)
class PsdEstimate:
    freqs_hz: np.ndarray
    power: np.ndarray
    segment_length: int
    overlap: float

    @property
    def resolution_hz(self) -> float:
        return float(self.freqs_hz[1] - self.freqs_hz[0])

    def band(self, low_hz: float, high_hz: float) -> tuple[np.ndarray, np.ndarray]:
        sel = (self.freqs_hz >= low_hz) & (self.freqs_hz <= high_hz)
        return self.freqs_hz[sel], self.power[sel]


DEFAULT_SEGMENT_S = 30.0


def welch_psd(
    x: SlowTimeSeries, segment_length: int | None = None, overlap: float = 0.5, nfft: int | None = None
) -> PsdEstimate:
    """One-sided Welch PSD with a Hann window; default segment is 30 s.

    ``nfft`` larger than the segment zero-pads each segment, which samples
    the same spectrum on a finer grid without improving resolution.
    """
    if segment_length is None:
        segment_length = int(round(DEFAULT_SEGMENT_S * x.sample_rate_hz))
    if len(x) < segment_length:
        raise DataError(f"signal of {len(x)} samples shorter than one Welch segment ({segment_length})")
    if not 0 <= overlap < 1:
        raise ValueError("overlap must lie in [0, 1)")
    if nfft is not None and nfft < segment_length:
        raise ValueError("nfft must be >= segment_length")
    f, p = signal.welch(
        x.values,
        fs=x.sample_rate_hz,
        window="hann",
        nperseg=segment_length,
        noverlap=int(segment_length * overlap),
        nfft=nfft,
        detrend=False,
        scaling="density",
    )
    return PsdEstimate(f, p, segment_length, overlap)


def comb_length(fundamental_hz: float, sample_rate_hz: float) -> int:
    if not 0 < fundamental_hz < sample_rate_hz / 2:
        raise ValueError("fundamental must lie in (0, fs/2)")
    m = int(round(sample_rate_hz / fundamental_hz))
    if m < 2:
        raise ValueError("comb length must be >= 2")
    return m


def comb_response(freqs_hz, m: int, sample_rate_hz: float, zero_phase: bool = True) -> np.ndarray:
    """Magnitude of the ``m``-point running mean, squared when applied forward-backward."""
    w = np.pi * np.asarray(freqs_hz, dtype=float) / sample_rate_hz
    num = np.sin(m * w)
    den = m * np.sin(w)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where(np.abs(den) > 1e-15, np.abs(num / np.where(den == 0, 1, den)), 1.0)
    return h**2 if zero_phase else h


def comb_notch(x: SlowTimeSeries, fundamental_hz: float) -> SlowTimeSeries:
    """Null ``fundamental_hz`` and its harmonics with a zero-phase running mean."""
    m = comb_length(fundamental_hz, x.sample_rate_hz)
    if m > len(x):
        raise DataError(f"comb length {m} exceeds signal length {len(x)}")
    b = np.full(m, 1.0 / m)
    padlen = min(3 * m, len(x) - 1)
    return x.replace(signal.filtfilt(b, [1.0], x.values, padtype="odd", padlen=padlen))


WORST_ENTROPY = 1.0


def spectral_entropy(psd: PsdEstimate, band: tuple[float, float]) -> float:
    """Normalised in-band entropy in [0, 1]; zero in-band power counts as worst (1)."""
    _, p = psd.band(*band)
    if p.size == 0:
        raise ValueError(f"band {band} contains no PSD bins")
    total = p.sum()
    if not total > 0:
        return WORST_ENTROPY
    n = p.size
    if n == 1:
        return 0.0
    # with r = n p / sum(p): H = 1 - sum(r log r) / (n log n), exact at both endpoints
    r = p / (total / n)
    r = r[r > 0]
    h = 1.0 - np.sum(r * np.log(r)) / (n * np.log(n))
    return float(min(max(h, 0.0), 1.0))
