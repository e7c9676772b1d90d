"""Micro-Doppler energy extraction and respiration/heart rate estimation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import find_peaks

from .config import ConfigError, DataError, SlowTimeSeries
from .dsp import (
    BandpassSpec,
    PsdEstimate,
    butter_bandpass_filtfilt,
    comb_length,
    comb_notch,
    dwt_denoise,
    median_filter,
    savitzky_golay,
    spectral_entropy,
    welch_psd,
)
from .sim import HEART_BAND_HZ, RESPIRATION_BAND_HZ

FUSION_EPS = 1e-6
METHODS = ("standard", "wavelet")


@dataclass(frozen=True)
class EnergyExtractionConfig:
    """Window half-widths around the target cell.

    ``cell_hysteresis_bins`` keeps the window where it is until the tracked
    cell moves by more than that many bins in range or Doppler; 0 follows
    every per-frame cell exactly. Centroid flicker of one bin would
    otherwise step the energy series by far more than the cardiac
    modulation.
    """

    delta_range_bins: int = 2
    delta_doppler_bins: int = 3
    cell_hysteresis_bins: int = 0

    def __post_init__(self):
        if self.delta_range_bins < 0 or self.delta_doppler_bins < 0:
            raise ConfigError("energy window half-widths must be >= 0")
        if self.cell_hysteresis_bins < 0:
            raise ConfigError("cell_hysteresis_bins must be >= 0")


def hold_cells(cells: np.ndarray, tolerance: int, current=None) -> np.ndarray:
    """Replace small cell moves (``<= tolerance`` bins on both axes) by the held cell.

    ``current`` seeds the held cell, e.g. from a previous block.
    """
    cells = np.asarray(cells)
    if tolerance == 0 or len(cells) == 0:
        return cells
    out = cells.copy()
    held = cells[0] if current is None else np.asarray(current)
    for i, c in enumerate(cells):
        if np.max(np.abs(c - held)) > tolerance:
            held = c
        out[i] = held
    return out


def window_energy(power: np.ndarray, cells: np.ndarray, cfg: EnergyExtractionConfig) -> np.ndarray:
    """Sum ``power[frame, doppler, range]`` over a window around each frame's cell.

    ``cells`` holds one ``(range_bin, doppler_bin)`` row per frame; the
    window is clipped at the map edges.
    """
    cells = np.asarray(cells)
    nf, nd, nr = power.shape
    dd = np.arange(-cfg.delta_doppler_bins, cfg.delta_doppler_bins + 1)
    dr = np.arange(-cfg.delta_range_bins, cfg.delta_range_bins + 1)
    d = cells[:, 1, None, None] + dd[None, :, None]
    r = cells[:, 0, None, None] + dr[None, None, :]
    inside = (d >= 0) & (d < nd) & (r >= 0) & (r < nr)
    f = np.arange(nf)[:, None, None]
    vals = power[f, np.clip(d, 0, nd - 1), np.clip(r, 0, nr - 1)]
    return np.where(inside, vals, 0.0).sum(axis=(1, 2))


def extract_energy(rd, traj, cfg: EnergyExtractionConfig | None = None, power: np.ndarray | None = None) -> SlowTimeSeries:
    """Micro-Doppler energy ``E(i)`` of one trajectory over every frame of ``rd``.

    Frames without a detection use the trajectory's most recent cell.
    ``power`` may carry a precomputed ``rd.power()``.
    """
    cfg = cfg or EnergyExtractionConfig()
    if len(traj) == 0:
        raise DataError("empty trajectory")
    power = rd.power() if power is None else power
    cells = hold_cells(traj.cells(rd.frame_indices), cfg.cell_hysteresis_bins)
    rate = 1.0 / rd.config.frame_time_s
    return SlowTimeSeries(window_energy(power, cells, cfg), rate)


def cell_samples(rd, traj) -> np.ndarray:
    """Complex value at ``(rx 0, d0, r0)`` per frame of ``rd``."""
    if len(traj) == 0:
        raise DataError("empty trajectory")
    cells = traj.cells(rd.frame_indices)
    f = np.arange(rd.num_frames)
    return rd.maps[f, 0, cells[:, 1], cells[:, 0]]


def unwrapped_phase(samples: np.ndarray) -> np.ndarray:
    """Phase of complex samples with +-pi jump correction.

    A zero-magnitude sample repeats the previous phase (0 at the start).
    """
    z = np.asarray(samples, dtype=complex)
    phase = np.angle(z)
    dead = np.abs(z) == 0
    if dead.any():
        idx = np.where(~dead, np.arange(len(z)), -1)
        idx = np.maximum.accumulate(idx)
        phase = np.where(idx >= 0, phase[np.maximum(idx, 0)], 0.0)
    return np.unwrap(phase)


def extract_phase_baseline(rd, traj) -> SlowTimeSeries:
    return SlowTimeSeries(unwrapped_phase(cell_samples(rd, traj)), 1.0 / rd.config.frame_time_s)


def spectral_peak(psd: PsdEstimate, band: tuple[float, float], min_prominence_db: float = 3.0) -> tuple[float, bool]:
    """Largest PSD bin inside ``band`` with 3-point parabolic refinement.

    The peak is valid when it is a local maximum of the full spectrum and
    stands at least ``min_prominence_db`` above the band median.
    """
    f, p = psd.freqs_hz, psd.power
    sel = np.nonzero((f >= band[0]) & (f <= band[1]))[0]
    if sel.size == 0:
        raise ValueError(f"band {band} contains no PSD bins")
    i = int(sel[np.argmax(p[sel])])
    peak = p[i]
    if not peak > 0:
        return float(f[i]), False
    left = p[i - 1] if i > 0 else -np.inf
    right = p[i + 1] if i < len(p) - 1 else -np.inf
    local_max = peak >= left and peak >= right
    med = np.median(p[sel])
    prominent = med <= 0 or 10 * np.log10(peak / med) >= min_prominence_db
    freq = float(f[i])
    if 0 < i < len(p) - 1 and left > 0 and right > 0:
        a, b, c = np.log(left), np.log(peak), np.log(right)
        den = a - 2 * b + c
        if den < 0:
            freq += 0.5 * (a - c) / den * psd.resolution_hz
    freq = float(np.clip(freq, band[0], band[1]))
    return freq, bool(local_max and prominent)


def time_domain_rate(x: SlowTimeSeries, band: tuple[float, float]) -> float | None:
    """Rate in per-minute units from mean peak spacing; ``None`` with fewer than 3 peaks."""
    v = x.values
    std = np.std(v)
    if not std > 0:
        return None
    distance = max(1, int(0.5 / band[1] * x.sample_rate_hz))
    peaks, _ = find_peaks(v, distance=distance, prominence=0.3 * std)
    if len(peaks) < 3:
        return None
    return float(60.0 / (np.mean(np.diff(peaks)) / x.sample_rate_hz))


def fuse(
    signals: Sequence[SlowTimeSeries], band: tuple[float, float], segment_length: int | None = None
) -> tuple[SlowTimeSeries, np.ndarray]:
    """Entropy-weighted combination ``sum w_i s_i`` with ``w_i ~ 1 / (H_i + eps)``."""
    if not signals:
        raise ValueError("fuse needs at least one signal")
    n = len(signals[0])
    if any(len(s) != n for s in signals):
        raise ValueError("signals must have equal lengths")
    seg = min(segment_length or n, n)
    entropy = np.array([spectral_entropy(welch_psd(s, seg), band) for s in signals])
    q = 1.0 / (entropy + FUSION_EPS)
    w = q / q.sum()
    fused = np.sum([wi * s.values for wi, s in zip(w, signals)], axis=0)
    return signals[0].replace(fused), w


@dataclass(frozen=True)
class VitalsConfig:
    wavelet_levels: int = 3
    broadband_hz: tuple[float, float] = (0.1, 3.0)
    filter_order: int = 4
    median_kernel: int = 5
    savgol_window: int = 11
    savgol_order: int = 3
    segment_s: float = 30.0
    respiration_band_hz: tuple[float, float] = RESPIRATION_BAND_HZ
    heart_band_hz: tuple[float, float] = HEART_BAND_HZ
    respiration_half_width_hz: float = 0.3
    heart_half_width_hz: float = 0.5
    min_prominence_db: float = 3.0
    # zero-padding factor of the spectra used for peak picking; 4x keeps the
    # log-parabolic interpolation bias well below 0.01 per minute
    peak_padding: int = 4
    methods: tuple[str, ...] = METHODS

    def __post_init__(self):
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise ConfigError(f"unknown method variants {sorted(unknown)}")
        if self.peak_padding < 1:
            raise ConfigError("peak_padding must be >= 1")


@dataclass
class BandEstimate:
    rate_bpm: float  # nan when invalid
    frequency_hz: float
    method: str  # spectral | time_domain | invalid
    quality: float  # in-band spectral entropy of the fused branch
    weights: dict[str, float]
    band_hz: tuple[float, float]

    @property
    def valid(self) -> bool:
        return self.method != "invalid"


@dataclass
class VitalsReport:
    trajectory_id: int | None
    respiration: BandEstimate
    heart: BandEstimate
    respiration_signal: SlowTimeSeries
    heart_signal: SlowTimeSeries
    intermediate: dict[str, np.ndarray] = field(default_factory=dict)
    source: str = "energy"
    range_m: float | None = None
    angle_deg: float | None = None

    @property
    def respiration_bpm(self) -> float:
        return self.respiration.rate_bpm

    @property
    def heart_bpm(self) -> float:
        return self.heart.rate_bpm

    @property
    def method_weights(self) -> dict[str, dict[str, float]]:
        return {"respiration": self.respiration.weights, "heart": self.heart.weights}

    @property
    def quality(self) -> dict[str, float]:
        return {"respiration": self.respiration.quality, "heart": self.heart.quality}

    @property
    def estimation_method(self) -> dict[str, str]:
        return {"respiration": self.respiration.method, "heart": self.heart.method}

    def to_dict(self) -> dict:
        def band(b: BandEstimate) -> dict:
            return {
                "rate_bpm": None if not b.valid else round(b.rate_bpm, 6),
                "frequency_hz": None if not b.valid else round(b.frequency_hz, 6),
                "valid": b.valid,
                "estimation_method": b.method,
                "spectral_entropy": round(b.quality, 6),
                "method_weights": {k: round(v, 9) for k, v in b.weights.items()},
                "band_hz": [round(b.band_hz[0], 6), round(b.band_hz[1], 6)],
            }

        return {
            "trajectory_id": self.trajectory_id,
            "source": self.source,
            "range_m": None if self.range_m is None else round(self.range_m, 6),
            "angle_deg": None if self.angle_deg is None else round(self.angle_deg, 4),
            "respiration_bpm": None if not self.respiration.valid else round(self.respiration_bpm, 6),
            "heart_bpm": None if not self.heart.valid else round(self.heart_bpm, 6),
            "respiration": band(self.respiration),
            "heart": band(self.heart),
            "num_samples": len(self.respiration_signal),
            "sample_rate_hz": self.respiration_signal.sample_rate_hz,
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def write_intermediate_csv(self, path: str | Path) -> None:
        cols = ["raw_energy", "denoised", "respiration", "heart"]
        t = self.respiration_signal.times
        data = np.column_stack([t] + [self.intermediate[c] for c in cols])
        np.savetxt(path, data, delimiter=",", header="time," + ",".join(cols), comments="", fmt="%.9g")


def _adaptive_band(center: float, half_width: float, limits: tuple[float, float]) -> tuple[float, float]:
    lo = max(center - half_width, limits[0])
    hi = min(center + half_width, limits[1])
    return lo, hi


def _branch(x: SlowTimeSeries, band: tuple[float, float], cfg: VitalsConfig, variant: str) -> SlowTimeSeries:
    y = butter_bandpass_filtfilt(x, BandpassSpec(band[0], band[1], cfg.filter_order))
    if variant == "wavelet":
        y = dwt_denoise(y, cfg.wavelet_levels)
    return y


def _estimate_band(
    signals: dict[str, SlowTimeSeries], band: tuple[float, float], cfg: VitalsConfig, segment: int
) -> tuple[BandEstimate, SlowTimeSeries]:
    names = list(signals)
    fused, w = fuse([signals[k] for k in names], band, segment)
    quality = spectral_entropy(welch_psd(fused, segment), band)
    psd = welch_psd(fused, segment, nfft=segment * cfg.peak_padding)
    freq, valid = spectral_peak(psd, band, cfg.min_prominence_db)
    weights = {k: float(v) for k, v in zip(names, w)}
    if valid:
        return BandEstimate(60.0 * freq, freq, "spectral", quality, weights, band), fused
    rate = time_domain_rate(fused, band)
    if rate is not None and band[0] * 60.0 <= rate <= band[1] * 60.0:
        return BandEstimate(rate, rate / 60.0, "time_domain", quality, weights, band), fused
    return BandEstimate(float("nan"), float("nan"), "invalid", quality, weights, band), fused


def extract_vitals(
    energy: SlowTimeSeries, cfg: VitalsConfig | None = None, trajectory_id: int | None = None
) -> VitalsReport:
    """Respiration and heart rates from a slow-time series (energy or phase).

    Stages: mean removal, wavelet denoising, broadband bandpass, median and
    Savitzky-Golay smoothing, Welch peak search, adaptive per-band
    bandpasses (the heart branch first passes a comb at the respiration
    rate), variant fusion by spectral entropy, then spectral or peak-interval
    rate estimation.
    """
    cfg = cfg or VitalsConfig()
    fs = energy.sample_rate_hz
    segment = int(round(cfg.segment_s * fs))
    if len(energy) < segment:
        raise DataError(f"need at least {cfg.segment_s} s of data, got {energy.duration_s:.2f} s")

    raw = energy.values
    x = energy.replace(raw - raw.mean())
    denoised = dwt_denoise(x, cfg.wavelet_levels)
    broad = butter_bandpass_filtfilt(denoised, BandpassSpec(*cfg.broadband_hz, cfg.filter_order))
    smooth = savitzky_golay(median_filter(broad, cfg.median_kernel), cfg.savgol_window, cfg.savgol_order)

    nfft = segment * cfg.peak_padding
    f_r, resp_ok = spectral_peak(welch_psd(smooth, segment, nfft=nfft), cfg.respiration_band_hz, cfg.min_prominence_db)
    use_comb = resp_ok and comb_length(f_r, fs) <= len(smooth)
    heart_in = comb_notch(smooth, f_r) if use_comb else smooth
    f_h, heart_ok = spectral_peak(welch_psd(heart_in, segment, nfft=nfft), cfg.heart_band_hz, cfg.min_prominence_db)

    if resp_ok:
        resp_band = _adaptive_band(f_r, cfg.respiration_half_width_hz, cfg.respiration_band_hz)
    else:
        resp_band = cfg.respiration_band_hz
    if heart_ok:
        heart_band = _adaptive_band(f_h, cfg.heart_half_width_hz, cfg.heart_band_hz)
    else:
        heart_band = cfg.heart_band_hz

    resp_branches = {m: _branch(smooth, resp_band, cfg, m) for m in cfg.methods}
    heart_branches = {m: _branch(heart_in, heart_band, cfg, m) for m in cfg.methods}
    resp, resp_sig = _estimate_band(resp_branches, resp_band, cfg, segment)
    heart, heart_sig = _estimate_band(heart_branches, heart_band, cfg, segment)

    return VitalsReport(
        trajectory_id=trajectory_id,
        respiration=resp,
        heart=heart,
        respiration_signal=resp_sig,
        heart_signal=heart_sig,
        intermediate={
            "raw_energy": raw,
            "denoised": denoised.values,
            "respiration": resp_sig.values,
            "heart": heart_sig.values,
        },
    )
