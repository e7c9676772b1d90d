"""Two-dimensional cell-averaging CFAR and per-frame target localisation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .config import ConfigError
from .spatial import (
    DEFAULT_GRID_STEP_DEG,
    angle_grid,
    covariance_from_snapshots,
    estimate_num_sources,
    music_spectrum,
)


@dataclass(frozen=True)
class CfarConfig:
    """CA-CFAR window and false-alarm settings.

    Cell counts are one-sided, given as ``(range, doppler)``.
    """

    guard_cells: tuple[int, int] = (2, 2)
    training_cells: tuple[int, int] = (4, 4)
    probability_false_alarm: float = 1e-4
    zero_doppler_exclusion_bins: int = 2

    def __post_init__(self):
        if min(self.training_cells) < 1:
            raise ConfigError("training cell counts must be >= 1")
        if min(self.guard_cells) < 0:
            raise ConfigError("guard cell counts must be >= 0")
        if not 0 < self.probability_false_alarm < 1:
            raise ConfigError("probability_false_alarm must lie in (0, 1)")
        if self.zero_doppler_exclusion_bins < 0:
            raise ConfigError("zero_doppler_exclusion_bins must be >= 0")


class CfarHit(NamedTuple):
    cell: tuple[int, int]  # (doppler_bin, range_bin)
    threshold: float
    statistic: float


def ca_cfar_scale(num_training: int | np.ndarray, pfa: float):
    """Threshold multiplier ``N (Pfa^(-1/N) - 1)`` for exponentially distributed noise."""
    n = np.asarray(num_training, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return n * np.expm1(-np.log(pfa) / n)


def _box_sums(x: np.ndarray, half_d: int, half_r: int) -> np.ndarray:
    """Sum over a zero-padded ``(2 half_d + 1) x (2 half_r + 1)`` box around each cell.

    Works on the last two axes of ``x``.
    """
    x = np.asarray(x, dtype=float)
    size = [1] * (x.ndim - 2) + [2 * half_d + 1, 2 * half_r + 1]
    return ndimage.uniform_filter(x, size=size, mode="constant") * (size[-2] * size[-1])


def cfar_statistics(maps: np.ndarray, cfg: CfarConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell noise estimate and threshold for maps ``[..., doppler, range]``.

    Edge cells use the truncated training window with the multiplier
    recomputed from the number of training cells actually available.
    Cells with no training cells get an infinite threshold.
    """
    maps = np.asarray(maps, dtype=float)
    gr, gd = cfg.guard_cells
    tr, td = cfg.training_cells
    outer = _box_sums(maps, gd + td, gr + tr)
    inner = _box_sums(maps, gd, gr)
    ones = np.ones(maps.shape[-2:])
    n_train = np.rint(_box_sums(ones, gd + td, gr + tr) - _box_sums(ones, gd, gr))
    with np.errstate(divide="ignore", invalid="ignore"):
        noise = (outer - inner) / n_train
        noise = np.where(n_train > 0, np.maximum(noise, 0.0), np.nan)
        threshold = np.where(n_train > 0, ca_cfar_scale(n_train, cfg.probability_false_alarm) * noise, np.inf)
    return noise, threshold


def exclusion_mask(num_doppler: int, cfg: CfarConfig) -> np.ndarray:
    """True for Doppler rows inside the zero-Doppler exclusion band."""
    rows = np.arange(num_doppler)
    if cfg.zero_doppler_exclusion_bins == 0:
        return np.zeros(num_doppler, dtype=bool)
    return np.abs(rows - num_doppler // 2) <= cfg.zero_doppler_exclusion_bins


def cfar_mask(maps: np.ndarray, cfg: CfarConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised detector; returns ``(mask, threshold, noise)`` shaped like ``maps``."""
    maps = np.asarray(maps, dtype=float)
    noise, threshold = cfar_statistics(maps, cfg)
    mask = maps > threshold
    excl = exclusion_mask(maps.shape[-2], cfg)
    if excl.any():
        mask[..., excl, :] = False
    return mask, threshold, noise


def cfar_2d(power_map: np.ndarray, cfg: CfarConfig | None = None) -> list[CfarHit]:
    """Detect cells of a magnitude-squared ``[doppler, range]`` map."""
    cfg = cfg or CfarConfig()
    power_map = np.asarray(power_map, dtype=float)
    if power_map.ndim != 2:
        raise ValueError("cfar_2d expects a 2-D map")
    mask, threshold, _ = cfar_mask(power_map, cfg)
    return [
        CfarHit((int(d), int(r)), float(threshold[d, r]), float(power_map[d, r]))
        for d, r in zip(*np.nonzero(mask))
    ]


def variance_map(magnitudes: np.ndarray) -> np.ndarray:
    """Per-cell variance across frames of ``magnitudes[frame, doppler, range]``."""
    return np.var(magnitudes, axis=0)


@dataclass(frozen=True)
class Detection:
    frame: int
    range_bin: int
    doppler_bin: int
    range_m: float
    angle_deg: float
    snr_db: float


_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def label_blobs(mask: np.ndarray) -> tuple[np.ndarray, int]:
    return ndimage.label(mask, structure=_EIGHT_CONNECTED)


def cluster_and_localize(
    mask: np.ndarray,
    statistic: np.ndarray,
    noise: np.ndarray,
    snapshots: np.ndarray,
    frame: int,
    range_bin_spacing_m: float,
    grid: np.ndarray | None = None,
    spacing_wavelengths: float = 0.5,
) -> list[Detection]:
    """Merge 8-connected detections into blobs and localise each blob.

    ``snapshots`` holds antenna vectors ``[..., rx, doppler, range]`` (one or
    more frames); the blob's cells from every leading index feed the
    covariance used for the MUSIC angle.
    """
    grid = angle_grid(DEFAULT_GRID_STEP_DEG) if grid is None else grid
    labels, count = label_blobs(mask)
    if count == 0:
        return []
    snaps = snapshots.reshape((-1,) + snapshots.shape[-3:])
    out = []
    for label, blob in enumerate(ndimage.find_objects(labels), start=1):
        d_idx, r_idx = np.nonzero(labels[blob] == label)
        d_idx = d_idx + blob[0].start
        r_idx = r_idx + blob[1].start
        w = statistic[d_idx, r_idx]
        w = np.sqrt(np.maximum(w, 0))
        if w.sum() <= 0:
            w = np.ones_like(w)
        d0 = int(np.rint(np.average(d_idx, weights=w)))
        r0 = int(np.rint(np.average(r_idx, weights=w)))
        peak = int(np.argmax(statistic[d_idx, r_idx]))
        pd, pr = d_idx[peak], r_idx[peak]
        nz = noise[pd, pr]
        snr = 10 * np.log10(statistic[pd, pr] / nz) if nz > 0 else np.inf
        x = np.moveaxis(snaps[:, :, d_idx, r_idx], 1, 0).reshape(snaps.shape[1], -1)
        cov = covariance_from_snapshots(x)
        k = estimate_num_sources(cov)
        spectrum = music_spectrum(cov, k, grid, spacing_wavelengths)
        angle = spectrum.peaks(1)[0]
        out.append(
            Detection(
                frame=int(frame),
                range_bin=r0,
                doppler_bin=d0,
                range_m=r0 * range_bin_spacing_m,
                angle_deg=float(angle),
                snr_db=float(snr),
            )
        )
    return out
