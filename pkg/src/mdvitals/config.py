"""Radar configuration, derived quantities and the core data containers."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np
import yaml

SPEED_OF_LIGHT = 299_792_458.0  # m/s


class ConfigError(ValueError):
    """Invalid radar, scene or processing configuration."""


class DataError(ValueError):
    """Malformed or inconsistent sample data."""


@dataclass(frozen=True)
class RadarConfig:
    """FMCW radar and system parameters.

    Defaults reproduce the 77 GHz / 4 GHz / 4-RX setup used throughout the
    package. ``range_fft_size`` is the zero-padded range FFT length; the
    Doppler FFT length always equals ``chirps_per_frame``.
    """

    center_frequency_hz: float = 77e9
    bandwidth_hz: float = 4e9
    chirp_duration_s: float = 40e-6
    sample_rate_sps: float = 3.6e6
    num_frames: int = 1000
    num_rx: int = 4
    chirps_per_frame: int = 64
    samples_per_chirp: int = 128
    frame_time_s: float = 10e-3
    range_fft_size: int = 256
    antenna_spacing_wavelengths: float = 0.5

    def __post_init__(self):
        validate_config(self)

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.center_frequency_hz

    @property
    def chirp_rate_hz_per_s(self) -> float:
        return self.bandwidth_hz / self.chirp_duration_s

    @property
    def cube_shape(self) -> tuple[int, int, int, int]:
        return (self.num_frames, self.num_rx, self.chirps_per_frame, self.samples_per_chirp)

    def with_(self, **changes) -> "RadarConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Short stable hash of the configuration (used in raw-file sidecars)."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_COUNT_FIELDS = ("num_frames", "num_rx", "chirps_per_frame", "samples_per_chirp", "range_fft_size")


def validate_config(config: RadarConfig) -> RadarConfig:
    for f in fields(config):
        value = getattr(config, f.name)
        if f.name in _COUNT_FIELDS:
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{f.name} must be an integer >= 1, got {value!r}")
        else:
            if not isinstance(value, (int, float, np.floating, np.integer)) or not np.isfinite(value) or value <= 0:
                raise ConfigError(f"{f.name} must be a finite number > 0, got {value!r}")
    n = config.range_fft_size
    if n < config.samples_per_chirp:
        raise ConfigError(
            f"range_fft_size ({n}) must be >= samples_per_chirp ({config.samples_per_chirp})"
        )
    if n & (n - 1):
        raise ConfigError(f"range_fft_size must be a power of two, got {n}")
    return config


@dataclass(frozen=True)
class DerivedQuantities:
    wavelength_m: float
    chirp_rate_hz_per_s: float
    range_resolution_m: float
    range_bin_spacing_m: float
    doppler_bin_spacing_hz: float
    slow_time_rate_hz: float
    max_range_m: float


def derive_quantities(config: RadarConfig) -> DerivedQuantities:
    validate_config(config)
    chirp_rate = config.bandwidth_hz / config.chirp_duration_s
    # complex sampling: beat frequencies in [0, fs) map to range bins 0..N-1
    max_range = SPEED_OF_LIGHT * config.sample_rate_sps / (2.0 * chirp_rate)
    return DerivedQuantities(
        wavelength_m=SPEED_OF_LIGHT / config.center_frequency_hz,
        chirp_rate_hz_per_s=chirp_rate,
        range_resolution_m=SPEED_OF_LIGHT / (2.0 * config.bandwidth_hz),
        range_bin_spacing_m=max_range / config.range_fft_size,
        doppler_bin_spacing_hz=1.0 / (config.chirps_per_frame * config.chirp_duration_s),
        slow_time_rate_hz=1.0 / config.frame_time_s,
        max_range_m=max_range,
    )


def load_config(path: str | Path) -> RadarConfig:
    """Read a YAML (or JSON) key-value file whose keys mirror RadarConfig fields.

    Missing keys fall back to the defaults.
    """
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping of RadarConfig fields")
    data = data.get("radar", data)
    known = {f.name for f in fields(RadarConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown field(s) {', '.join(unknown)}")
    counts = {}
    for key, value in data.items():
        if key in _COUNT_FIELDS:
            if isinstance(value, float) and value.is_integer():
                value = int(value)
        elif isinstance(value, (int, str)) and not isinstance(value, bool):
            try:
                value = float(value)
            except ValueError:
                raise ConfigError(f"{path}: field {key!r} is not a number: {value!r}") from None
        counts[key] = value
    try:
        return RadarConfig(**counts)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def save_config(config: RadarConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))


@dataclass(frozen=True)
class DataCube:
    """Complex raw samples indexed ``[frame, rx, chirp, sample]``."""

    config: RadarConfig
    samples: np.ndarray

    @property
    def num_frames(self) -> int:
        return self.samples.shape[0]

    def frames(self, start: int, stop: int) -> np.ndarray:
        return self.samples[start:stop]


def validate_cube(cube: DataCube) -> DataCube:
    samples = np.asarray(cube.samples)
    if samples.shape != cube.config.cube_shape:
        raise DataError(
            f"cube shape {samples.shape} does not match config "
            f"[frames, rx, chirps, samples] = {cube.config.cube_shape}"
        )
    if not np.all(np.isfinite(samples)):
        raise DataError("cube contains non-finite samples")
    return cube


@dataclass(frozen=True)
class SlowTimeSeries:
    """Real-valued signal sampled along slow time (one value per frame)."""

    values: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise ConfigError("sample_rate_hz must be > 0")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def duration_s(self) -> float:
        return len(self.values) / self.sample_rate_hz

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.values)) / self.sample_rate_hz

    def replace(self, values) -> "SlowTimeSeries":
        return SlowTimeSeries(np.asarray(values, dtype=float), self.sample_rate_hz)
