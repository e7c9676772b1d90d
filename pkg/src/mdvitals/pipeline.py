"""Chunked end-to-end processing: frames in, trajectories and vital-sign reports out.

Captures are processed in blocks of frames so that a two-minute full-size
recording (several GB of complex samples) never has to be held in memory.
"""

from __future__ import annotations

import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .config import ConfigError, RadarConfig, SlowTimeSeries, derive_quantities
from .detection import CfarConfig, Detection, cfar_mask, cfar_statistics, cluster_and_localize, variance_map
from .rdproc import range_doppler
from .spatial import angle_grid
from .tracking import Tracker, Trajectory
from .vitals import (
    EnergyExtractionConfig,
    VitalsConfig,
    VitalsReport,
    extract_vitals,
    hold_cells,
    unwrapped_phase,
    window_energy,
)

log = logging.getLogger(__name__)

METHOD_CHOICES = ("energy", "phase", "both")
# one Doppler row and two range bins either side
VARIANCE_DILATION = np.ones((3, 5), dtype=bool)


@dataclass(frozen=True)
class PipelineConfig:
    cfar: CfarConfig = CfarConfig()
    variance_fallback: bool = True
    variance_window: int = 64
    variance_cfar: CfarConfig = CfarConfig(zero_doppler_exclusion_bins=0)
    gate_distance: float = 5.0
    min_length: int = 10
    max_missed: int = 500
    grid_step_deg: float = 0.5
    energy: EnergyExtractionConfig = EnergyExtractionConfig(cell_hysteresis_bins=1)
    vitals: VitalsConfig = VitalsConfig()
    method: str = "energy"
    chunk_frames: int = 128

    def __post_init__(self):
        if self.method not in METHOD_CHOICES:
            raise ConfigError(f"method must be one of {METHOD_CHOICES}, got {self.method!r}")
        if self.variance_window < 2:
            raise ConfigError("variance_window must be >= 2")
        if self.chunk_frames < 1:
            raise ConfigError("chunk_frames must be >= 1")

    @property
    def sources(self) -> tuple[str, ...]:
        return ("energy", "phase") if self.method == "both" else (self.method,)


@dataclass
class PipelineResult:
    config: RadarConfig
    trajectories: list[Trajectory]
    reports: dict[str, list[VitalsReport]]
    series: dict[str, dict[int, SlowTimeSeries]]
    timings_s: dict[str, float]
    num_frames: int
    first_map: np.ndarray | None = None  # antenna-summed power of frame 0
    skipped: list[int] = field(default_factory=list)

    @property
    def frames_per_second(self) -> float:
        total = sum(v for k, v in self.timings_s.items() if k != "source")
        return self.num_frames / total if total > 0 else float("inf")


def _blocks(n: int, window: int) -> list[tuple[int, int]]:
    """Split ``n`` frames into blocks of ``window``; the last one absorbs any remainder."""
    if n <= window:
        return [(0, n)]
    edges = list(range(0, n - window + 1, window))
    out = [(a, a + window) for a in edges]
    out[-1] = (out[-1][0], n)
    return out


class _Clock:
    def __init__(self):
        self.totals: dict[str, float] = defaultdict(float)

    def lap(self, name: str, t0: float) -> float:
        now = time.perf_counter()
        self.totals[name] += now - t0
        return now


def detect_chunk(
    maps: np.ndarray,
    power: np.ndarray,
    first_frame: int,
    range_bin_spacing_m: float,
    cfg: PipelineConfig,
    grid: np.ndarray,
    spacing_wavelengths: float = 0.5,
) -> list[list[Detection]]:
    """Per-frame detections for a block of range-Doppler maps.

    Range-Doppler CFAR runs on every frame. With ``variance_fallback`` the
    per-cell variance of magnitude over ``variance_window`` frames is also
    screened; a variance detection is kept for every frame of its window
    unless range-Doppler detections within two range bins already appear in
    at least half of those frames. Range-Doppler hits that fall within two
    range bins of a kept variance detection are dropped.

    Range migration makes the magnitude variance peak on the flanks of a
    target's range response rather than at its centre, so flagged cells are
    dilated by ``VARIANCE_DILATION`` bins and each blob is localised on the
    block's mean power.
    """
    nf = power.shape[0]
    mask, _, noise = cfar_mask(power, cfg.cfar)
    per_frame: list[list[Detection]] = []
    for i in range(nf):
        if mask[i].any():
            per_frame.append(
                cluster_and_localize(
                    mask[i], power[i], noise[i], maps[i], first_frame + i, range_bin_spacing_m, grid, spacing_wavelengths
                )
            )
        else:
            per_frame.append([])
    if not cfg.variance_fallback:
        return per_frame

    for a, b in _blocks(nf, cfg.variance_window):
        var = variance_map(np.sqrt(power[a:b]))
        vmask, _, _ = cfar_mask(var, cfg.variance_cfar)
        if not vmask.any():
            continue
        vmask = ndimage.binary_dilation(vmask, structure=VARIANCE_DILATION)
        mean_power = power[a:b].mean(axis=0)
        mean_noise, _ = cfar_statistics(mean_power, cfg.variance_cfar)
        found = cluster_and_localize(
            vmask, mean_power, mean_noise, maps[a:b], first_frame + a, range_bin_spacing_m, grid, spacing_wavelengths
        )
        for det in found:
            near = [
                any(abs(d.range_bin - det.range_bin) <= 2 for d in per_frame[i]) for i in range(a, b)
            ]
            if sum(near) >= 0.5 * (b - a):
                continue
            for i in range(a, b):
                kept = [d for d in per_frame[i] if abs(d.range_bin - det.range_bin) > 2]
                kept.append(
                    Detection(first_frame + i, det.range_bin, det.doppler_bin, det.range_m, det.angle_deg, det.snr_db)
                )
                per_frame[i] = kept
    return per_frame


def process_source(source, config: RadarConfig, cfg: PipelineConfig | None = None) -> PipelineResult:
    """Run detection, tracking and vital-sign estimation over a frame source.

    ``source`` needs ``num_frames`` and ``frames(start, stop)`` returning
    complex samples ``[frame, rx, chirp, sample]``.
    """
    cfg = cfg or PipelineConfig()
    derived = derive_quantities(config)
    grid = angle_grid(cfg.grid_step_deg)
    tracker = Tracker(derived.range_bin_spacing_m, cfg.grid_step_deg, cfg.gate_distance, cfg.min_length, cfg.max_missed)
    clock = _Clock()
    energy_parts: dict[int, list[np.ndarray]] = defaultdict(list)
    phase_parts: dict[int, list[np.ndarray]] = defaultdict(list)
    held: dict[int, np.ndarray] = {}
    n = source.num_frames
    first_map = None

    for start in range(0, n, cfg.chunk_frames):
        stop = min(start + cfg.chunk_frames, n)
        t = time.perf_counter()
        samples = source.frames(start, stop)
        t = clock.lap("source", t)
        rd = range_doppler(samples, config, start, dtype=np.complex64)
        del samples
        t = clock.lap("range_doppler", t)
        power = rd.power().astype(float)
        if first_map is None:
            first_map = power[0].copy()
        t = clock.lap("power", t)
        dets = detect_chunk(
            rd.maps, power, start, derived.range_bin_spacing_m, cfg, grid, config.antenna_spacing_wavelengths
        )
        t = clock.lap("detection", t)
        for offset, frame_dets in enumerate(dets):
            tracker.update(start + offset, frame_dets)
        t = clock.lap("tracking", t)

        frames = rd.frame_indices
        f_idx = np.arange(len(frames))
        for traj in tracker.live:
            if len(traj) < cfg.min_length:
                continue
            cells = hold_cells(traj.cells(frames), cfg.energy.cell_hysteresis_bins, held.get(traj.id))
            held[traj.id] = cells[-1]
            if "energy" in cfg.sources:
                energy_parts[traj.id].append(window_energy(power, cells, cfg.energy))
            if "phase" in cfg.sources:
                phase_parts[traj.id].append(rd.maps[f_idx, 0, cells[:, 1], cells[:, 0]])
        clock.lap("extraction", t)

    t = time.perf_counter()
    trajectories = tracker.finalize()
    rate = 1.0 / config.frame_time_s
    series: dict[str, dict[int, SlowTimeSeries]] = {s: {} for s in cfg.sources}
    for traj in trajectories:
        if traj.id in energy_parts:
            series["energy"][traj.id] = SlowTimeSeries(np.concatenate(energy_parts[traj.id]), rate)
        if traj.id in phase_parts:
            series["phase"][traj.id] = SlowTimeSeries(unwrapped_phase(np.concatenate(phase_parts[traj.id])), rate)

    reports: dict[str, list[VitalsReport]] = {s: [] for s in cfg.sources}
    skipped = []
    min_len = int(round(cfg.vitals.segment_s * rate))
    for traj in trajectories:
        r_m, a_deg = traj.mean_position()
        for src in cfg.sources:
            s = series[src].get(traj.id)
            if s is None or len(s) < min_len:
                if traj.id not in skipped:
                    skipped.append(traj.id)
                log.info("trajectory %d: too little data for vital-sign estimation", traj.id)
                continue
            rep = extract_vitals(s, cfg.vitals, traj.id)
            rep.source = src
            rep.range_m, rep.angle_deg = r_m, a_deg
            reports[src].append(rep)
    clock.lap("vitals", t)

    return PipelineResult(
        config=config,
        trajectories=trajectories,
        reports=reports,
        series=series,
        timings_s=dict(clock.totals),
        num_frames=n,
        first_map=first_map,
        skipped=skipped,
    )
