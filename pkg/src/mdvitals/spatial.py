"""Spatial covariance across the receive array and MUSIC angle estimation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.signal import find_peaks

DEFAULT_GRID_STEP_DEG = 0.5
DIAGONAL_LOADING = 1e-6
EIGEN_GAP_THRESHOLD = 3.0


@dataclass(frozen=True)
class SpatialCovariance:
    matrix: np.ndarray
    num_snapshots: int

    @property
    def num_antennas(self) -> int:
        return self.matrix.shape[0]

    @property
    def rank_deficient(self) -> bool:
        """True when fewer snapshots than antennas went into the estimate."""
        return self.num_snapshots < self.num_antennas

    def loaded(self, delta: float = DIAGONAL_LOADING) -> np.ndarray:
        n = self.num_antennas
        load = delta * np.trace(self.matrix).real / n
        return self.matrix + load * np.eye(n)


def covariance_from_snapshots(snapshots: np.ndarray) -> SpatialCovariance:
    """Sample covariance of column snapshots ``x_k`` (shape ``[antennas, K]``)."""
    x = np.asarray(snapshots, dtype=complex)
    if x.ndim == 1:
        x = x[:, None]
    k = x.shape[1]
    if k == 0:
        raise ValueError("no snapshots")
    r = x @ x.conj().T / k
    r = 0.5 * (r + r.conj().T)
    return SpatialCovariance(r, k)


def estimate_covariance(rd, frame, cells=None) -> SpatialCovariance:
    """Average ``x x^H`` over range-Doppler cells of one or more frames.

    ``frame`` is an absolute frame index (or an iterable of them). ``cells``
    is ``None`` for the full map, a boolean ``[doppler, range]`` mask, or an
    iterable of ``(doppler_bin, range_bin)`` pairs.
    """
    frames = np.atleast_1d(np.asarray(frame)) - rd.first_frame
    if np.any(frames < 0) or np.any(frames >= rd.num_frames):
        raise IndexError(f"frame {frame} outside the stack")
    maps = rd.maps[frames]  # [f, rx, d, r]
    if cells is None:
        x = np.moveaxis(maps, 1, 0).reshape(maps.shape[1], -1)
    else:
        cells = np.asarray(cells)
        if cells.dtype == bool:
            d_idx, r_idx = np.nonzero(cells)
        else:
            cells = cells.reshape(-1, 2)
            d_idx, r_idx = cells[:, 0], cells[:, 1]
        x = np.moveaxis(maps[:, :, d_idx, r_idx], 1, 0).reshape(maps.shape[1], -1)
    return covariance_from_snapshots(x)


def steering_vector(angle_deg: float, n_antennas: int, spacing_wavelengths: float = 0.5) -> np.ndarray:
    if abs(angle_deg) > 90:
        raise ValueError(f"angle {angle_deg} outside [-90, 90]")
    m = np.arange(n_antennas)
    return np.exp(2j * np.pi * m * spacing_wavelengths * np.sin(np.radians(angle_deg)))


def steering_matrix(angles_deg, n_antennas: int, spacing_wavelengths: float = 0.5) -> np.ndarray:
    """Columns are steering vectors for ``angles_deg``."""
    m = np.arange(n_antennas)[:, None]
    s = np.sin(np.radians(np.asarray(angles_deg, dtype=float)))[None, :]
    return np.exp(2j * np.pi * m * spacing_wavelengths * s)


def angle_grid(step_deg: float = DEFAULT_GRID_STEP_DEG) -> np.ndarray:
    n = int(round(180.0 / step_deg))
    return np.linspace(-90.0, 90.0, n + 1)


@dataclass(frozen=True)
class MusicSpectrum:
    angles_deg: np.ndarray
    power: np.ndarray
    num_sources: int

    @property
    def step_deg(self) -> float:
        return float(self.angles_deg[1] - self.angles_deg[0])

    def peaks(self, count: int | None = None) -> list[float]:
        """Strongest ``count`` local maxima, refined by a parabola through log-power."""
        count = self.num_sources if count is None else count
        logp = np.log(self.power)
        idx, _ = find_peaks(np.concatenate(([-np.inf], logp, [-np.inf])))
        idx = idx - 1
        idx = idx[np.argsort(logp[idx])[::-1]][:count]
        out = []
        for i in idx:
            angle = float(self.angles_deg[i])
            if 0 < i < len(logp) - 1:
                a, b, c = logp[i - 1], logp[i], logp[i + 1]
                den = a - 2 * b + c
                if den < 0:
                    angle += 0.5 * (a - c) / den * self.step_deg
            out.append(angle)
        return out


def _noise_subspace(cov: SpatialCovariance, num_sources: int, loading: float) -> np.ndarray:
    n = cov.num_antennas
    if not 1 <= num_sources < n:
        raise ValueError(f"num_sources must be in [1, {n - 1}], got {num_sources}")
    try:
        _, vecs = np.linalg.eigh(cov.loaded(loading))
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigendecomposition failed: {exc}") from exc
    return vecs[:, : n - num_sources]  # eigh sorts ascending


def music_spectrum(
    cov: SpatialCovariance,
    num_sources: int,
    grid: np.ndarray | None = None,
    spacing_wavelengths: float = 0.5,
    loading: float = DIAGONAL_LOADING,
) -> MusicSpectrum:
    """Pseudo-spectrum ``1 / (a^H E_n E_n^H a)`` over an angle grid."""
    grid = angle_grid() if grid is None else np.asarray(grid, dtype=float)
    en = _noise_subspace(cov, num_sources, loading)
    a = steering_matrix(grid, cov.num_antennas, spacing_wavelengths)
    proj = en.conj().T @ a
    denom = np.sum(proj.real**2 + proj.imag**2, axis=0)
    power = 1.0 / np.maximum(denom, np.finfo(float).tiny)
    return MusicSpectrum(grid, power, num_sources)


def estimate_num_sources(
    cov: SpatialCovariance, gap_threshold: float = EIGEN_GAP_THRESHOLD, loading: float = DIAGONAL_LOADING
) -> int:
    """Largest k with ``lambda_k / lambda_{k+1} > gap_threshold``, clamped to ``[1, N-1]``."""
    n = cov.num_antennas
    lam = np.sort(np.linalg.eigvalsh(cov.loaded(loading)))[::-1]
    lam = np.maximum(lam, np.finfo(float).tiny)
    ratios = lam[:-1] / lam[1:]
    above = np.nonzero(ratios > gap_threshold)[0]
    k = int(above[-1]) + 1 if above.size else 1
    return min(max(k, 1), n - 1)


def estimate_angles(
    cov: SpatialCovariance,
    num_sources: int | None = None,
    grid: np.ndarray | None = None,
    spacing_wavelengths: float = 0.5,
) -> list[float]:
    if num_sources is None:
        num_sources = estimate_num_sources(cov)
    return music_spectrum(cov, num_sources, grid, spacing_wavelengths).peaks()


def snapshots_from_sources(
    angles_deg: Iterable[float],
    num_snapshots: int,
    n_antennas: int,
    snr_db: float | None,
    rng: np.random.Generator,
    spacing_wavelengths: float = 0.5,
) -> np.ndarray:
    """Uncorrelated unit-power complex Gaussian sources plus white noise."""
    angles = list(angles_deg)
    a = steering_matrix(angles, n_antennas, spacing_wavelengths)
    s = (rng.standard_normal((len(angles), num_snapshots)) + 1j * rng.standard_normal((len(angles), num_snapshots))) / np.sqrt(2)
    x = a @ s
    if snr_db is not None:
        sigma = 10 ** (-snr_db / 20)
        x = x + sigma / np.sqrt(2) * (
            rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
        )
    return x
