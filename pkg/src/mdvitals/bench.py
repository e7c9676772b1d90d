"""Stage timings on a synthetic two-subject workload."""

from __future__ import annotations

import time

import numpy as np

from .config import RadarConfig
from .pipeline import PipelineConfig, process_source
from .rdproc import _doppler_transform, _range_transform
from .sim import SceneSpec, SimulatedSource, SubjectSpec, noise_stddev_for_snr
from .spatial import covariance_from_snapshots


def bench_scene(snr_db: float = 20.0, seed: int = 0) -> SceneSpec:
    subjects = (
        SubjectSpec(1.8, -15.0, 0.25, 1.2),
        SubjectSpec(3.0, 20.0, 0.3, 1.35),
    )
    return SceneSpec(subjects, noise_stddev=noise_stddev_for_snr(subjects[0], snr_db), seed=seed)


def _best_of(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def range_fft_seconds(config: RadarConfig, frames: int = 32, repeats: int = 5, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    shape = (frames, config.num_rx, config.chirps_per_frame, config.samples_per_chirp)
    x = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)).astype(np.complex64)
    return _best_of(lambda: _range_transform(x, config), repeats)


def covariance_scaling(sizes=(20_000, 40_000, 80_000, 160_000), num_rx: int = 4, repeats: int = 5, seed: int = 0) -> dict:
    """Covariance time against number of range-Doppler cells, with the r^2 of a line fit."""
    rng = np.random.default_rng(seed)
    secs = []
    for k in sizes:
        x = rng.standard_normal((num_rx, k)) + 1j * rng.standard_normal((num_rx, k))
        secs.append(_best_of(lambda: covariance_from_snapshots(x), repeats))
    n = np.asarray(sizes, dtype=float)
    s = np.asarray(secs)
    slope, intercept = np.polyfit(n, s, 1)
    pred = slope * n + intercept
    ss_res = float(np.sum((s - pred) ** 2))
    ss_tot = float(np.sum((s - s.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"cells": list(map(int, sizes)), "seconds": secs, "slope_s_per_cell": float(slope), "r2": r2}


def run_bench(config: RadarConfig | None = None, num_frames: int = 3000, seed: int = 0) -> dict:
    """Time every pipeline stage; frame synthesis is reported but excluded from throughput.

    The default 3000 frames (30 s at 100 Hz) is the shortest capture that
    still reaches the vital-sign stage.
    """
    config = (config or RadarConfig()).with_(num_frames=num_frames)
    source = SimulatedSource(bench_scene(seed=seed), config)
    result = process_source(source, config, PipelineConfig())
    stages = {k: v for k, v in result.timings_s.items() if k != "source"}

    # split the fused range-Doppler stage for per-FFT reporting
    block = source.frames(0, min(64, num_frames)).astype(np.complex64)
    t_doppler = _best_of(lambda: _doppler_transform(block, axis=-2), 3)
    t_range = _best_of(lambda: _range_transform(block, config), 3)
    share = t_range / (t_range + t_doppler)
    rd_total = stages.pop("range_doppler")
    stages["range_fft"] = rd_total * share
    stages["doppler_fft"] = rd_total * (1.0 - share)

    processing = sum(stages.values())
    doubled = config.with_(range_fft_size=2 * config.range_fft_size)
    return {
        "config_digest": config.digest(),
        "num_frames": num_frames,
        "num_subjects": 2,
        "trajectories": len(result.trajectories),
        "stage_seconds": {k: float(v) for k, v in sorted(stages.items())},
        "stage_ms_per_frame": {k: 1e3 * float(v) / num_frames for k, v in sorted(stages.items())},
        "synthesis_seconds": float(result.timings_s.get("source", 0.0)),
        "processing_seconds": float(processing),
        "frames_per_second": num_frames / processing,
        "range_fft_scaling": {
            str(config.range_fft_size): range_fft_seconds(config),
            str(doubled.range_fft_size): range_fft_seconds(doubled),
        },
        "covariance_scaling": covariance_scaling(num_rx=config.num_rx),
    }
