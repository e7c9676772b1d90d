"""Synthetic FMCW scenes of breathing subjects.

Each subject is a point scatterer whose range follows respiration and
heartbeat displacement and whose reflectivity is modulated at the same two
rates. Within a frame the target is frozen (stop-and-hop); every chirp of a
frame therefore carries the same beat signal and only the noise differs.

Noise for frame ``f`` is drawn from a generator seeded with ``(seed, 0, f)``,
so any frame range can be regenerated independently and bit-identically.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import yaml

from .config import SPEED_OF_LIGHT, ConfigError, DataCube, RadarConfig, derive_quantities

RESPIRATION_BAND_HZ = (0.1, 0.8)
HEART_BAND_HZ = (0.8, 3.0)


@dataclass(frozen=True)
class SubjectSpec:
    range_m: float
    angle_deg: float = 0.0
    respiration_hz: float = 0.25
    heart_hz: float = 1.2
    resp_displacement_m: float = 4e-3
    heart_displacement_m: float = 0.3e-3
    rcs_static: float = 1.0
    rcs_resp_mod: float = 0.1
    rcs_heart_mod: float = 0.02
    resp_phase_rad: float = 0.0
    heart_phase_rad: float = 0.0
    allow_nonphysiological: bool = False

    def __post_init__(self):
        if not -90.0 <= self.angle_deg <= 90.0:
            raise ConfigError(f"angle_deg must lie in [-90, 90], got {self.angle_deg}")
        if self.range_m <= 0:
            raise ConfigError(f"range_m must be > 0, got {self.range_m}")
        if not self.allow_nonphysiological:
            lo, hi = RESPIRATION_BAND_HZ
            if not lo <= self.respiration_hz <= hi:
                raise ConfigError(f"respiration_hz {self.respiration_hz} outside [{lo}, {hi}] Hz")
            lo, hi = HEART_BAND_HZ
            if not lo <= self.heart_hz <= hi:
                raise ConfigError(f"heart_hz {self.heart_hz} outside [{lo}, {hi}] Hz")
        if self.rcs_static <= 0:
            raise ConfigError("rcs_static must be > 0")
        if self.rcs_resp_mod < 0 or self.rcs_heart_mod < 0:
            raise ConfigError("RCS modulation depths must be >= 0")
        if self.rcs_resp_mod + self.rcs_heart_mod >= self.rcs_static:
            raise ConfigError("RCS modulation depths must stay below rcs_static")
        if self.resp_displacement_m < 0 or self.heart_displacement_m < 0:
            raise ConfigError("displacement amplitudes must be >= 0")

    @property
    def peak_excursion_m(self) -> float:
        return self.resp_displacement_m + self.heart_displacement_m


@dataclass(frozen=True)
class MotionArtifact:
    amplitude_m: float
    frequency_hz: float


@dataclass(frozen=True)
class SceneSpec:
    subjects: tuple[SubjectSpec, ...] = ()
    noise_stddev: float = 0.0
    motion_artifact: MotionArtifact | None = None
    phase_jitter_rad: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        if self.noise_stddev < 0:
            raise ConfigError("noise_stddev must be >= 0")
        if self.phase_jitter_rad < 0:
            raise ConfigError("phase_jitter_rad must be >= 0")


def noise_stddev_for_snr(subject: SubjectSpec, snr_db: float) -> float:
    """Complex noise sigma giving ``snr_db`` per raw sample for ``subject``'s static return."""
    amplitude = math.sqrt(subject.rcs_static) / subject.range_m**2
    return amplitude * 10.0 ** (-snr_db / 20.0)


def subject_range(subject: SubjectSpec, t: np.ndarray, motion: MotionArtifact | None = None) -> np.ndarray:
    r = (
        subject.range_m
        + subject.resp_displacement_m * np.sin(2 * np.pi * subject.respiration_hz * t + subject.resp_phase_rad)
        + subject.heart_displacement_m * np.sin(2 * np.pi * subject.heart_hz * t + subject.heart_phase_rad)
    )
    if motion is not None:
        r = r + motion.amplitude_m * np.sin(2 * np.pi * motion.frequency_hz * t)
    return r


def subject_reflectivity(subject: SubjectSpec, t: np.ndarray) -> np.ndarray:
    """``|Gamma(t)|^2``: static RCS plus respiration and heartbeat modulation."""
    return (
        subject.rcs_static
        + subject.rcs_resp_mod * np.cos(2 * np.pi * subject.respiration_hz * t + subject.resp_phase_rad)
        + subject.rcs_heart_mod * np.cos(2 * np.pi * subject.heart_hz * t + subject.heart_phase_rad)
    )


def _check_scene(scene: SceneSpec, config: RadarConfig) -> None:
    dq = derive_quantities(config)
    extra = scene.motion_artifact.amplitude_m if scene.motion_artifact else 0.0
    for k, s in enumerate(scene.subjects):
        reach = s.range_m + s.peak_excursion_m + extra
        if reach >= dq.max_range_m:
            raise ConfigError(
                f"subject {k} at {s.range_m} m exceeds the unambiguous range {dq.max_range_m:.3f} m"
            )
        if s.range_m - s.peak_excursion_m - extra <= 0:
            raise ConfigError(f"subject {k} motion crosses zero range")


class SimulatedSource:
    """Lazily synthesized cube; frames are generated on demand.

    Behaves like a read-only DataCube for the streaming pipeline without
    ever holding more than the requested frames in memory.
    """

    def __init__(self, scene: SceneSpec, config: RadarConfig):
        _check_scene(scene, config)
        self.scene = scene
        self.config = config
        self.num_frames = config.num_frames
        self._jitter = [
            self._jitter_series(k) for k in range(len(scene.subjects))
        ]

    def _jitter_series(self, k: int) -> np.ndarray | None:
        if self.scene.phase_jitter_rad == 0:
            return None
        rng = np.random.default_rng([self.scene.seed, 1, k])
        return rng.normal(0.0, self.scene.phase_jitter_rad, self.config.num_frames)

    def beat_signal(self, start: int, stop: int) -> np.ndarray:
        """Noise-free beat signal per frame, shape ``(frames, rx, samples)``."""
        cfg = self.config
        frames = np.arange(start, stop)
        t = frames * cfg.frame_time_s
        n = np.arange(cfg.samples_per_chirp) / cfg.sample_rate_sps
        m = np.arange(cfg.num_rx)
        alpha = cfg.chirp_rate_hz_per_s
        out = np.zeros((len(frames), cfg.num_rx, cfg.samples_per_chirp), dtype=complex)
        for k, s in enumerate(self.scene.subjects):
            r = subject_range(s, t, self.scene.motion_artifact)
            amp = np.sqrt(subject_reflectivity(s, t)) / r**2
            carrier = 2.0 * cfg.center_frequency_hz * r / SPEED_OF_LIGHT
            beat_hz = 2.0 * alpha * r / SPEED_OF_LIGHT
            cycles = beat_hz[:, None] * n[None, :] + carrier[:, None]
            if self._jitter[k] is not None:
                cycles = cycles + self._jitter[k][start:stop, None] / (2 * np.pi)
            fast = amp[:, None] * np.exp(2j * np.pi * cycles)
            steer = np.exp(2j * np.pi * m * cfg.antenna_spacing_wavelengths * np.sin(np.radians(s.angle_deg)))
            out += fast[:, None, :] * steer[None, :, None]
        return out

    def frames(self, start: int, stop: int) -> np.ndarray:
        cfg = self.config
        start = max(0, start)
        stop = min(stop, self.num_frames)
        nf = stop - start
        shape = (nf, cfg.num_rx, cfg.chirps_per_frame, cfg.samples_per_chirp)
        if self.scene.noise_stddev > 0:
            raw = np.empty(shape[:-1] + (2 * cfg.samples_per_chirp,))
            for i in range(nf):
                rng = np.random.Generator(np.random.SFC64([self.scene.seed, 0, start + i]))
                rng.standard_normal(out=raw[i])
            raw *= self.scene.noise_stddev / math.sqrt(2.0)
            cube = raw.view(complex)
        else:
            cube = np.zeros(shape, dtype=complex)
        if self.scene.subjects:
            cube += self.beat_signal(start, stop)[:, :, None, :]
        return cube

    def materialize(self) -> DataCube:
        return DataCube(self.config, self.frames(0, self.num_frames))


def simulate(scene: SceneSpec, config: RadarConfig) -> DataCube:
    """Synthesize the full raw cube in memory."""
    return SimulatedSource(scene, config).materialize()


def ground_truth(scene: SceneSpec, config: RadarConfig) -> dict:
    dq = derive_quantities(config)
    subjects = []
    for k, s in enumerate(scene.subjects):
        subjects.append(
            {
                "index": k,
                "range_m": s.range_m,
                "angle_deg": s.angle_deg,
                "range_bin": s.range_m / dq.range_bin_spacing_m,
                "respiration_hz": s.respiration_hz,
                "heart_hz": s.heart_hz,
                "respiration_bpm": 60.0 * s.respiration_hz,
                "heart_bpm": 60.0 * s.heart_hz,
            }
        )
    return {
        "seed": scene.seed,
        "noise_stddev": scene.noise_stddev,
        "duration_s": config.num_frames * config.frame_time_s,
        "range_bin_spacing_m": dq.range_bin_spacing_m,
        "subjects": subjects,
    }


# -- scene files -------------------------------------------------------------

_SUBJECT_FIELDS = set(SubjectSpec.__dataclass_fields__)


def scene_from_dict(data: dict, where: str = "scene") -> SceneSpec:
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    allowed = {"subjects", "noise_stddev", "snr_db", "motion_artifact", "phase_jitter_rad", "seed"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")
    subjects = []
    for k, entry in enumerate(data.get("subjects") or []):
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: subjects[{k}] must be a mapping")
        bad = sorted(set(entry) - _SUBJECT_FIELDS)
        if bad:
            raise ConfigError(f"{where}: subjects[{k}] unknown field(s) {', '.join(bad)}")
        if "range_m" not in entry:
            raise ConfigError(f"{where}: subjects[{k}] missing required field 'range_m'")
        try:
            subjects.append(SubjectSpec(**entry))
        except (ConfigError, TypeError) as exc:
            raise ConfigError(f"{where}: subjects[{k}]: {exc}") from None
    if "noise_stddev" in data and "snr_db" in data:
        raise ConfigError(f"{where}: give either noise_stddev or snr_db, not both")
    noise = float(data.get("noise_stddev", 0.0))
    if "snr_db" in data:
        if not subjects:
            raise ConfigError(f"{where}: snr_db needs at least one subject as reference")
        noise = noise_stddev_for_snr(subjects[0], float(data["snr_db"]))
    motion = data.get("motion_artifact")
    if motion is not None:
        try:
            motion = MotionArtifact(float(motion["amplitude_m"]), float(motion["frequency_hz"]))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"{where}: motion_artifact needs amplitude_m and frequency_hz") from exc
    try:
        return SceneSpec(
            subjects=tuple(subjects),
            noise_stddev=noise,
            motion_artifact=motion,
            phase_jitter_rad=float(data.get("phase_jitter_rad", 0.0)),
            seed=int(data.get("seed", 0)),
        )
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def load_scene(path: str | Path) -> SceneSpec:
    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return scene_from_dict(data, where=str(path))


def scene_to_dict(scene: SceneSpec) -> dict:
    out = {
        "seed": scene.seed,
        "noise_stddev": scene.noise_stddev,
        "phase_jitter_rad": scene.phase_jitter_rad,
        "subjects": [asdict(s) for s in scene.subjects],
    }
    if scene.motion_artifact is not None:
        out["motion_artifact"] = asdict(scene.motion_artifact)
    return out


def save_scene(scene: SceneSpec, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(scene_to_dict(scene), sort_keys=False))
