import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdvitals.config import ConfigError, DataError, RadarConfig, SlowTimeSeries, derive_quantities
from mdvitals.detection import Detection
from mdvitals.dsp import PsdEstimate, comb_length, comb_response, welch_psd
from mdvitals.rdproc import RangeDopplerStack, range_doppler
from mdvitals.sim import SceneSpec, SimulatedSource, SubjectSpec
from mdvitals.tracking import Trajectory
from mdvitals.vitals import (
    EnergyExtractionConfig,
    VitalsConfig,
    extract_energy,
    extract_phase_baseline,
    extract_vitals,
    fuse,
    hold_cells,
    spectral_peak,
    time_domain_rate,
    unwrapped_phase,
)

FS = 100.0


def ts(values, fs=FS):
    return SlowTimeSeries(np.asarray(values, dtype=float), fs)


def t_axis(seconds, fs=FS):
    return np.arange(int(round(seconds * fs))) / fs


def synthetic_energy(f_r=0.25, f_h=1.2, seconds=60.0):
    t = t_axis(seconds)
    return 10 + 2 * np.cos(2 * np.pi * f_r * t) + 0.5 * np.cos(2 * np.pi * f_h * t)


def fixed_track(frames, range_bin, doppler_bin, spacing=0.02):
    t = Trajectory(0)
    for f in frames:
        t.append(Detection(int(f), range_bin, doppler_bin, range_bin * spacing, 0.0, 20.0))
    return t


def stack(maps):
    nf, nrx, nd, nr = maps.shape
    cfg = RadarConfig(num_frames=nf, num_rx=nrx, chirps_per_frame=max(nd, 2), samples_per_chirp=8, range_fft_size=nr)
    return RangeDopplerStack(cfg, maps)


# --- energy ------------------------------------------------------------------


def test_single_cell_energy():
    maps = np.zeros((3, 1, 16, 32), complex)
    maps[:, 0, 8, 10] = 2.0
    e = extract_energy(stack(maps), fixed_track(range(3), 11, 7))
    np.testing.assert_allclose(e.values, 4.0)


def test_degenerate_window_sums_antennas(rng):
    maps = rng.standard_normal((5, 4, 16, 32)) + 1j * rng.standard_normal((5, 4, 16, 32))
    cfg = EnergyExtractionConfig(0, 0)
    e = extract_energy(stack(maps), fixed_track(range(5), 12, 6), cfg)
    np.testing.assert_allclose(e.values, np.sum(np.abs(maps[:, :, 6, 12]) ** 2, axis=1))


def test_window_clipped_at_edges():
    maps = np.ones((2, 1, 16, 32), complex)
    e = extract_energy(stack(maps), fixed_track(range(2), 0, 0), EnergyExtractionConfig(2, 3))
    np.testing.assert_allclose(e.values, 3 * 4)


def test_gap_holds_last_cell():
    maps = np.zeros((4, 1, 16, 32), complex)
    maps[:, 0, 5, 20] = 1.0
    traj = fixed_track([0], 20, 5)
    e = extract_energy(stack(maps), traj, EnergyExtractionConfig(0, 0))
    np.testing.assert_allclose(e.values, 1.0)


def test_empty_trajectory():
    with pytest.raises(DataError):
        extract_energy(stack(np.zeros((2, 1, 16, 32), complex)), Trajectory(0))
    with pytest.raises(ConfigError):
        EnergyExtractionConfig(-1, 0)


@given(st.integers(0, 2**31), st.floats(0.01, 100.0))
@settings(max_examples=25, deadline=None)
def test_energy_nonnegative_and_scales(seed, c):
    r = np.random.default_rng(seed)
    maps = r.standard_normal((6, 2, 16, 32)) + 1j * r.standard_normal((6, 2, 16, 32))
    traj = fixed_track(range(6), int(r.integers(0, 32)), int(r.integers(0, 16)))
    e = extract_energy(stack(maps), traj).values
    assert np.all(e >= 0)
    np.testing.assert_allclose(extract_energy(stack(c * maps), traj).values, c**2 * e, rtol=1e-10)


def test_hold_cells():
    cells = np.array([[10, 8], [11, 8], [10, 9], [13, 8], [12, 8]])
    np.testing.assert_array_equal(hold_cells(cells, 0), cells)
    held = hold_cells(cells, 1)
    np.testing.assert_array_equal(held[:, 0], [10, 10, 10, 13, 13])
    np.testing.assert_array_equal(hold_cells(cells[:1], 1, current=np.array([11, 8])), [[11, 8]])


def _static_scene_stack(subject, seconds, cfg_kwargs=None):
    cfg = RadarConfig(
        num_frames=int(seconds * FS), chirps_per_frame=16, samples_per_chirp=64, range_fft_size=128, **(cfg_kwargs or {})
    )
    src = SimulatedSource(SceneSpec((subject,), seed=0), cfg)
    rd = range_doppler(src.frames(0, cfg.num_frames), cfg)
    spacing = derive_quantities(cfg).range_bin_spacing_m
    return rd, fixed_track([0], int(round(subject.range_m / spacing)), rd.zero_doppler_bin, spacing)


def test_rcs_only_modulation_energy_peak():
    subj = SubjectSpec(2.0, 0.0, 0.3, 1.2, resp_displacement_m=0.0, heart_displacement_m=0.0, rcs_heart_mod=0.0)
    rd, traj = _static_scene_stack(subj, 60)
    e = extract_energy(rd, traj)
    psd = welch_psd(e.replace(e.values - e.values.mean()))
    assert abs(psd.freqs_hz[np.argmax(psd.power)] - 0.3) <= 0.02


# --- phase baseline ----------------------------------------------------------


def test_phase_follows_displacement():
    subj = SubjectSpec(2.0, 0.0, 0.25, 1.2, resp_displacement_m=1e-3, heart_displacement_m=0.0, rcs_resp_mod=0.0, rcs_heart_mod=0.0)
    rd, traj = _static_scene_stack(subj, 20)
    phase = extract_phase_baseline(rd, traj).values
    lam = derive_quantities(rd.config).wavelength_m
    assert np.ptp(phase) == pytest.approx(4 * np.pi * 0.002 / lam, rel=0.05)
    psd = welch_psd(ts(phase - phase.mean()), 2000)
    assert abs(psd.freqs_hz[np.argmax(psd.power)] - 0.25) <= psd.resolution_hz


def test_phase_constant_and_dead_samples():
    np.testing.assert_allclose(unwrapped_phase(np.full(10, 1 + 1j)), np.pi / 4)
    z = np.exp(1j * np.linspace(0, 6 * np.pi, 50))
    z[10] = 0
    ph = unwrapped_phase(z)
    assert ph[10] == pytest.approx(ph[9])
    assert np.all(np.abs(np.diff(ph)) < np.pi)
    assert unwrapped_phase(np.zeros(3))[0] == 0.0


# --- spectral peak / time domain ----------------------------------------------


def _psd(power, df=0.01):
    return PsdEstimate(np.arange(len(power)) * df, np.asarray(power, dtype=float), 100, 0.5)


def test_spectral_peak_examples():
    p = np.full(301, 1e-3)
    p[30] = 1.0
    f, ok = spectral_peak(_psd(p), (0.1, 0.8))
    assert f == pytest.approx(0.3) and ok
    _, ok = spectral_peak(_psd(np.ones(301)), (0.1, 0.8))
    assert not ok
    p = np.full(301, 1e-3)
    p[100], p[120] = 0.5, 1.0
    f, ok = spectral_peak(_psd(p), (0.8, 3.0))
    assert f == pytest.approx(1.2) and ok
    with pytest.raises(ValueError):
        spectral_peak(_psd(p), (5.0, 6.0))


def test_spectral_peak_parabolic_refinement():
    # Gaussian-shaped peak: log-parabolic interpolation is exact
    f = np.arange(301) * 0.01
    p = np.exp(-((f - 0.333) ** 2) / (2 * 0.02**2)) + 1e-6
    got, ok = spectral_peak(PsdEstimate(f, p, 100, 0.5), (0.1, 0.8))
    assert ok and got == pytest.approx(0.333, abs=1e-3)


def test_time_domain_rate_examples():
    t = t_axis(60)
    assert time_domain_rate(ts(np.sin(2 * np.pi * 0.25 * t)), (0.1, 0.8)) == pytest.approx(15.0, abs=0.2)
    assert time_domain_rate(ts(np.ones(6000)), (0.1, 0.8)) is None
    rng = np.random.default_rng(3)
    amp = 1 + 0.1 * rng.standard_normal(t.size).cumsum() / np.sqrt(t.size)
    amp = 1 + 0.1 * (amp - amp.mean()) / amp.std()
    x = amp * np.sin(2 * np.pi * 1.5 * t)
    assert time_domain_rate(ts(x), (0.8, 3.0)) == pytest.approx(90.0, abs=2.0)


# --- fusion ------------------------------------------------------------------


def test_fuse_examples(rng):
    s = ts(np.sin(2 * np.pi * 0.3 * t_axis(60)))
    out, w = fuse([s], (0.1, 0.8))
    np.testing.assert_allclose(w, [1.0])
    np.testing.assert_allclose(out.values, s.values)
    out, w = fuse([s, s], (0.1, 0.8))
    np.testing.assert_allclose(w, [0.5, 0.5])
    np.testing.assert_allclose(out.values, s.values)
    noise = ts(rng.standard_normal(len(s)))
    _, w = fuse([s, noise], (0.1, 0.8), 3000)
    assert w[0] > 0.7
    with pytest.raises(ValueError):
        fuse([s, ts(np.ones(10))], (0.1, 0.8))
    with pytest.raises(ValueError):
        fuse([], (0.1, 0.8))


@given(st.integers(0, 2**31), st.integers(1, 4))
@settings(max_examples=20, deadline=None)
def test_fuse_weights_convex_and_permutation_equivariant(seed, k):
    r = np.random.default_rng(seed)
    t = t_axis(40)
    sigs = [ts(np.sin(2 * np.pi * r.uniform(0.1, 0.8) * t) + r.uniform(0, 2) * r.standard_normal(t.size)) for _ in range(k)]
    _, w = fuse(sigs, (0.1, 0.8))
    assert np.all(w >= 0) and w.sum() == pytest.approx(1.0, abs=1e-9)
    perm = r.permutation(k)
    _, wp = fuse([sigs[i] for i in perm], (0.1, 0.8))
    np.testing.assert_allclose(wp, w[perm], rtol=1e-12)


# --- full chain --------------------------------------------------------------


def test_extract_vitals_clean_synthetic():
    rep = extract_vitals(ts(synthetic_energy()))
    assert rep.respiration_bpm == pytest.approx(15.0, abs=0.5)
    assert rep.heart_bpm == pytest.approx(72.0, abs=1.0)
    assert rep.estimation_method == {"respiration": "spectral", "heart": "spectral"}
    for band in ("respiration", "heart"):
        w = rep.method_weights[band]
        assert set(w) == {"standard", "wavelet"}
        assert sum(w.values()) == pytest.approx(1.0, abs=1e-9)
        assert 0 <= rep.quality[band] <= 1
    assert 6 <= rep.respiration_bpm <= 48 and 48 <= rep.heart_bpm <= 180


@pytest.mark.parametrize("f_r,f_h", [(0.2, 1.1), (0.3, 1.35), (0.4, 1.0), (0.33, 1.5), (0.15, 2.2)])
def test_extract_vitals_rate_grid(f_r, f_h):
    rep = extract_vitals(ts(synthetic_energy(f_r, f_h)))
    assert rep.respiration_bpm == pytest.approx(60 * f_r, abs=0.5)
    assert rep.heart_bpm == pytest.approx(60 * f_h, abs=1.0)


def test_extract_vitals_noisy_median_errors():
    clean = synthetic_energy()
    ac = clean - clean.mean()
    sigma = np.sqrt(np.mean(ac**2) / 10.0)  # 10 dB
    rr, hr = [], []
    for seed in range(50):
        x = clean + sigma * np.random.default_rng(seed).standard_normal(clean.size)
        rep = extract_vitals(ts(x))
        rr.append(abs(rep.respiration_bpm - 15.0) if rep.respiration.valid else np.inf)
        hr.append(abs(rep.heart_bpm - 72.0) if rep.heart.valid else np.inf)
    assert np.median(rr) <= 1.2
    assert np.median(hr) <= 2.3


def test_respiration_only_no_harmonic_as_heart():
    t = t_axis(60)
    f_r = 0.3
    # respiration with strong harmonics but no cardiac component
    x = 10 + 2 * np.cos(2 * np.pi * f_r * t) + 0.6 * np.cos(4 * np.pi * f_r * t) + 0.3 * np.cos(6 * np.pi * f_r * t)
    x = x + 0.01 * np.random.default_rng(0).standard_normal(t.size)
    m = comb_length(f_r, FS)
    assert 10 * np.log10(comb_response(2 * f_r, m, FS) + 1e-300) <= -20
    rep = extract_vitals(ts(x))
    assert rep.respiration_bpm == pytest.approx(18.0, abs=0.5)
    if rep.heart.valid:
        for k in (2, 3, 4):
            assert abs(rep.heart.frequency_hz - k * f_r) > 0.05


def test_harmonic_safety_at_band_edge():
    f_r = 0.4
    m = comb_length(f_r, FS)
    assert 10 * np.log10(comb_response(0.8, m, FS) + 1e-300) <= -20
    t = t_axis(60)
    x = 10 + 2 * np.cos(2 * np.pi * f_r * t) + 1.0 * np.cos(2 * np.pi * 0.8 * t) + 0.5 * np.cos(2 * np.pi * 1.3 * t)
    rep = extract_vitals(ts(x))
    assert rep.respiration_bpm == pytest.approx(24.0, abs=0.5)
    assert rep.heart_bpm == pytest.approx(78.0, abs=1.0)


@given(st.floats(0.01, 1e4))
@settings(max_examples=8, deadline=None)
def test_rates_scale_invariant(c):
    x = synthetic_energy() + 0.2 * np.random.default_rng(1).standard_normal(6000)
    a = extract_vitals(ts(x))
    b = extract_vitals(ts(c * x))
    assert b.respiration_bpm == pytest.approx(a.respiration_bpm, rel=1e-6)
    assert b.heart_bpm == pytest.approx(a.heart_bpm, rel=1e-6)


def test_flat_input_reports_invalid():
    rep = extract_vitals(ts(np.full(6000, 5.0)))
    assert not rep.respiration.valid and not rep.heart.valid
    assert np.isnan(rep.respiration_bpm)
    d = rep.to_dict()
    assert d["respiration_bpm"] is None and d["heart"]["estimation_method"] == "invalid"


def test_too_short():
    with pytest.raises(DataError):
        extract_vitals(ts(np.ones(2999)))
    with pytest.raises(ConfigError):
        VitalsConfig(methods=("ica",))


def test_single_method_variant():
    rep = extract_vitals(ts(synthetic_energy()), VitalsConfig(methods=("standard",)))
    assert rep.method_weights["heart"] == {"standard": 1.0}


def test_report_serialisation(tmp_path):
    rep = extract_vitals(ts(synthetic_energy()), trajectory_id=4)
    rep.range_m, rep.angle_deg = 2.0, -5.0
    rep.write_json(tmp_path / "r.json")
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["trajectory_id"] == 4
    assert d["respiration_bpm"] == pytest.approx(rep.respiration_bpm, abs=1e-6)
    assert d["heart"]["estimation_method"] == "spectral"
    assert d["range_m"] == 2.0
    rep.write_intermediate_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "time,raw_energy,denoised,respiration,heart"
    assert len(lines) == 6001
