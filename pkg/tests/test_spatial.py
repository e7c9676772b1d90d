import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdvitals.config import RadarConfig
from mdvitals.rdproc import process_cube
from mdvitals.sim import SceneSpec, SubjectSpec, simulate
from mdvitals.spatial import (
    SpatialCovariance,
    angle_grid,
    covariance_from_snapshots,
    estimate_angles,
    estimate_covariance,
    estimate_num_sources,
    music_spectrum,
    snapshots_from_sources,
    steering_matrix,
    steering_vector,
)


def test_outer_product_single_snapshot():
    cov = covariance_from_snapshots(np.array([1, 1j]))
    np.testing.assert_allclose(cov.matrix, [[1, -1j], [1j, 1]])
    assert cov.rank_deficient


def test_identical_antennas_rank_one(rng):
    s = rng.standard_normal(500) + 1j * rng.standard_normal(500)
    cov = covariance_from_snapshots(np.tile(s, (4, 1)))
    np.testing.assert_allclose(cov.matrix, cov.matrix[0, 0] * np.ones((4, 4)), rtol=1e-12)
    assert np.linalg.matrix_rank(cov.matrix, tol=1e-9 * cov.matrix[0, 0].real) == 1


def test_white_noise_cube_covariance_is_scaled_identity():
    cfg = RadarConfig(num_frames=8, chirps_per_frame=16, samples_per_chirp=64, range_fft_size=128)
    rd = process_cube(simulate(SceneSpec(noise_stddev=1.0, seed=5), cfg))
    cov = estimate_covariance(rd, list(range(8)))
    assert cov.num_snapshots >= 1e4
    d = np.real(np.diag(cov.matrix))
    off = cov.matrix[~np.eye(4, dtype=bool)]
    assert np.max(np.abs(off)) < 0.05 * d.min()


def test_estimate_covariance_cell_selectors(rng):
    cfg = RadarConfig(num_frames=2, chirps_per_frame=16, samples_per_chirp=64, range_fft_size=128)
    rd = process_cube(simulate(SceneSpec(noise_stddev=1.0, seed=1), cfg))
    mask = np.zeros((16, 128), bool)
    mask[3, 7] = mask[5, 9] = True
    a = estimate_covariance(rd, 1, mask)
    b = estimate_covariance(rd, 1, [(3, 7), (5, 9)])
    np.testing.assert_allclose(a.matrix, b.matrix)
    x = rd.maps[1][:, [3, 5], [7, 9]]
    np.testing.assert_allclose(a.matrix, x @ x.conj().T / 2)
    with pytest.raises(IndexError):
        estimate_covariance(rd, 5)


@given(st.integers(1, 40), st.integers(0, 2**31))
@settings(max_examples=40)
def test_covariance_hermitian_psd(k, seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal((4, k)) + 1j * r.standard_normal((4, k))
    m = covariance_from_snapshots(x).matrix
    np.testing.assert_allclose(m, m.conj().T, atol=1e-14)
    lam = np.linalg.eigvalsh(m)
    assert lam.min() >= -1e-9 * lam.max()


def test_steering_vector_examples():
    np.testing.assert_allclose(steering_vector(0, 4), np.ones(4))
    np.testing.assert_allclose(steering_vector(90, 4, 0.5), [1, -1, 1, -1], atol=1e-12)
    for th in (-73.0, -10.0, 33.3):
        a = steering_vector(th, 6)
        assert np.vdot(a, a).real == pytest.approx(6)
    with pytest.raises(ValueError):
        steering_vector(91, 4)


def test_music_single_source_noiseless():
    a = steering_vector(20.0, 4)
    cov = SpatialCovariance(np.outer(a, a.conj()), 1)
    spec = music_spectrum(cov, 1)
    assert abs(spec.angles_deg[np.argmax(spec.power)] - 20.0) <= spec.step_deg


def test_music_identity_is_flat():
    spec = music_spectrum(SpatialCovariance(np.eye(4, dtype=complex), 100), 1)
    assert np.ptp(spec.power) / spec.power.mean() < 1e-6


def test_music_two_sources_20db(rng):
    x = snapshots_from_sources([-30.0, 30.0], 2000, 4, 20.0, rng)
    peaks = sorted(estimate_angles(covariance_from_snapshots(x), 2))
    assert peaks[0] == pytest.approx(-30.0, abs=2.0)
    assert peaks[1] == pytest.approx(30.0, abs=2.0)


def test_music_scale_invariance(rng):
    x = snapshots_from_sources([-12.0, 40.0], 500, 4, 15.0, rng)
    cov = covariance_from_snapshots(x)
    scaled = SpatialCovariance(cov.matrix * 37.5, cov.num_snapshots)
    a = music_spectrum(cov, 2)
    b = music_spectrum(scaled, 2)
    assert np.argmax(a.power) == np.argmax(b.power)
    assert a.peaks(2) == pytest.approx(b.peaks(2), abs=1e-9)


def test_music_power_positive_and_grid():
    g = angle_grid(0.5)
    assert len(g) == 361 and g[0] == -90 and g[-1] == 90 and np.all(np.diff(g) > 0)
    x = snapshots_from_sources([10.0], 50, 4, 5.0, np.random.default_rng(0))
    spec = music_spectrum(covariance_from_snapshots(x), 1, g)
    assert np.all(spec.power > 0)


def test_music_num_sources_bounds():
    cov = SpatialCovariance(np.eye(4, dtype=complex), 10)
    for k in (0, 4):
        with pytest.raises(ValueError):
            music_spectrum(cov, k)


def test_source_count_heuristic(rng):
    a = steering_vector(15.0, 4)
    rank1 = SpatialCovariance(np.outer(a, a.conj()) + 1e-6 * np.eye(4), 100)
    assert estimate_num_sources(rank1) == 1
    assert estimate_num_sources(SpatialCovariance(np.eye(4, dtype=complex), 100)) == 1
    x = snapshots_from_sources([-35.0, 35.0], 5000, 4, 20.0, rng)
    assert estimate_num_sources(covariance_from_snapshots(x)) == 2


def test_steering_matrix_columns():
    m = steering_matrix([-10.0, 25.0], 4)
    np.testing.assert_allclose(m[:, 1], steering_vector(25.0, 4))


def test_simulated_scene_angle():
    cfg = RadarConfig(num_frames=4, chirps_per_frame=16, samples_per_chirp=64, range_fft_size=128)
    rd = process_cube(simulate(SceneSpec((SubjectSpec(2.0, -20.0),), noise_stddev=1e-3, seed=0), cfg))
    p = rd.power()[0]
    d, r = np.unravel_index(np.argmax(p), p.shape)
    cov = estimate_covariance(rd, [0, 1, 2, 3], [(d, r), (d, r - 1), (d, r + 1)])
    assert estimate_angles(cov, 1)[0] == pytest.approx(-20.0, abs=0.5)
