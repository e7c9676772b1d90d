import numpy as np
import pytest

from mdvitals.config import ConfigError, RadarConfig, derive_quantities
from mdvitals.pipeline import PipelineConfig, _blocks, process_source
from mdvitals.sim import SceneSpec, SimulatedSource, SubjectSpec, noise_stddev_for_snr

REDUCED = RadarConfig(num_frames=4000, chirps_per_frame=16, samples_per_chirp=64, range_fft_size=128)


def scene(subjects, snr_db=20.0, seed=0):
    subjects = tuple(subjects)
    sigma = noise_stddev_for_snr(subjects[0], snr_db) if subjects else 1e-3
    return SceneSpec(subjects, noise_stddev=sigma, seed=seed)


@pytest.fixture(scope="module")
def single_run():
    sc = scene([SubjectSpec(2.0, 10.0, 0.25, 1.2)])
    return process_source(SimulatedSource(sc, REDUCED), REDUCED, PipelineConfig(method="both"))


def test_blocks():
    assert _blocks(10, 64) == [(0, 10)]
    assert _blocks(128, 64) == [(0, 64), (64, 128)]
    assert _blocks(150, 64) == [(0, 64), (64, 150)]


def test_config_validation():
    with pytest.raises(ConfigError):
        PipelineConfig(method="ica")
    with pytest.raises(ConfigError):
        PipelineConfig(variance_window=1)
    assert PipelineConfig(method="both").sources == ("energy", "phase")


def test_single_subject_end_to_end(single_run):
    res = single_run
    assert len(res.trajectories) == 1
    traj = res.trajectories[0]
    spacing = derive_quantities(REDUCED).range_bin_spacing_m
    r, a = traj.mean_position()
    assert abs(r - 2.0) <= 2 * spacing
    assert abs(a - 10.0) <= 3.0
    rep = res.reports["energy"][0]
    assert rep.respiration_bpm == pytest.approx(15.0, abs=1.0)
    assert rep.heart_bpm == pytest.approx(72.0, abs=2.0)
    assert rep.range_m == pytest.approx(r)
    assert len(res.reports["phase"]) == 1
    assert res.series["energy"][traj.id].sample_rate_hz == pytest.approx(100.0)
    assert res.first_map.shape == (16, 128)
    assert {"range_doppler", "detection", "tracking", "vitals"} <= set(res.timings_s)
    assert res.frames_per_second > 0


def test_energy_series_nonnegative(single_run):
    for s in single_run.series["energy"].values():
        assert np.all(s.values >= 0)


def test_without_variance_fallback_static_targets_are_missed():
    # stationary chests sit in the excluded zero-Doppler rows
    cfg = REDUCED.with_(num_frames=300)
    sc = scene([SubjectSpec(2.0, 0.0)])
    res = process_source(SimulatedSource(sc, cfg), cfg, PipelineConfig(variance_fallback=False))
    assert res.trajectories == []


def test_noise_only_has_no_trajectories():
    cfg = REDUCED.with_(num_frames=640)
    res = process_source(SimulatedSource(SceneSpec(noise_stddev=1e-2, seed=4), cfg), cfg)
    assert res.trajectories == []
    assert res.reports == {"energy": []}


def test_short_capture_skips_vitals():
    cfg = REDUCED.with_(num_frames=640)
    res = process_source(SimulatedSource(scene([SubjectSpec(2.0, 0.0)]), cfg), cfg)
    assert len(res.trajectories) == 1
    assert res.reports["energy"] == []
    assert res.skipped == [res.trajectories[0].id]


def test_chunking_does_not_change_detections():
    cfg = REDUCED.with_(num_frames=256)
    sc = scene([SubjectSpec(2.0, -10.0), SubjectSpec(3.2, 20.0, 0.3, 1.4)])
    a = process_source(SimulatedSource(sc, cfg), cfg, PipelineConfig(chunk_frames=128))
    b = process_source(SimulatedSource(sc, cfg), cfg, PipelineConfig(chunk_frames=64))
    assert len(a.trajectories) == len(b.trajectories) == 2
    for ta, tb in zip(a.trajectories, b.trajectories):
        assert [p.range_bin for p in ta.points] == [p.range_bin for p in tb.points]
